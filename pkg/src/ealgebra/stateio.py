"""Reading and writing initial-state files.

One fact per line, ``fname(arg1,...,argk) = value``; nullary names drop
the parentheses.  Arguments and values are element literals: bare
identifiers denote named elements, digit strings denote integers,
``true``/``false``/``undef`` the logic constants, and ``@n`` an element
drawn from the reserve (serial ``n``).  Lines starting with ``#`` are
comments; omitted locations keep their default value.  A ``reserve: n``
directive sets the first unallocated reserve serial explicitly.
"""

from __future__ import annotations

import re

from .errors import ParseError, StateValidityError
from .state import Element, State, format_element
from .vocabulary import Vocabulary

_FACT_RE = re.compile(
    r"^(?P<name>[A-Za-z_+<=][A-Za-z0-9_']*|\+|<|=|mod)\s*"
    r"(?:\((?P<args>[^()]*)\))?\s*=\s*(?P<value>\S+)$"
)
_LOGIC_LITERALS = {"true", "false", "undef"}


def parse_element(token: str, vocabulary: Vocabulary | None = None) -> Element:
    token = token.strip()
    if not token:
        raise ParseError("empty element literal")
    if token in _LOGIC_LITERALS:
        return Element("logic", token)
    if token.startswith("@"):
        serial = token[1:]
        if not serial.isdigit():
            raise ParseError(f"bad reserve literal: {token}")
        return Element.reserve(int(serial))
    if token.isdigit() or (token[0] == "-" and token[1:].isdigit()):
        value = int(token)
        if vocabulary is not None and vocabulary.modulus:
            value %= vocabulary.modulus
        return Element.integer(value)
    if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*'*", token):
        return Element.named(token)
    raise ParseError(f"bad element literal: {token}")


def parse_state(
    text: str,
    vocabulary: Vocabulary,
    *,
    constants: tuple[str, ...] = (),
) -> State:
    """Build a state from fact lines, seeding declared constants first.

    Each constant (and distributed module name) is interpreted as the named
    element spelled like it, unless the file overrides the fact.
    """
    tables: dict[str, dict[tuple[Element, ...], Element]] = {}
    for name in constants:
        vocabulary.require(name)
        tables.setdefault(name, {})[()] = Element.named(name)

    reserve_next = 0
    explicit_reserve = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("reserve:"):
            value = line.split(":", 1)[1].strip()
            if not value.isdigit():
                raise ParseError("reserve: expects a nonnegative integer", lineno, 1)
            explicit_reserve = int(value)
            continue
        m = _FACT_RE.match(line)
        if m is None:
            raise ParseError(f"not a fact line: {line!r}", lineno, 1)
        fname = m.group("name")
        fn = vocabulary.lookup(fname)
        if fn is None:
            raise ParseError(f"unknown function name: {fname}", lineno, 1)
        raw_args = m.group("args")
        if raw_args is None:
            args: tuple[Element, ...] = ()
        else:
            parts = [p for p in raw_args.split(",")] if raw_args.strip() else []
            args = tuple(parse_element(p, vocabulary) for p in parts)
        if len(args) != fn.arity:
            raise ParseError(
                f"{fname}: expected {fn.arity} arguments, got {len(args)}", lineno, 1
            )
        value = parse_element(m.group("value"), vocabulary)
        for e in (*args, value):
            if e.kind == "reserve":
                reserve_next = max(reserve_next, e.value + 1)
        tables.setdefault(fname, {})[args] = value

    if explicit_reserve is not None:
        if explicit_reserve < reserve_next:
            raise StateValidityError(
                f"reserve: {explicit_reserve} conflicts with stored reserve "
                f"element @{reserve_next - 1}"
            )
        reserve_next = explicit_reserve
    return State(vocabulary, tables, reserve_next)


def load_state(path, vocabulary: Vocabulary, *, constants: tuple[str, ...] = ()) -> State:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_state(fh.read(), vocabulary, constants=constants)


def format_state(state: State) -> str:
    """Canonical fact-per-line rendering (inverse of :func:`parse_state`)."""
    lines = []
    if state.reserve_next:
        lines.append(f"reserve: {state.reserve_next}")
    for fname, args, value in state.stored_items():
        if args:
            loc = f"{fname}({', '.join(format_element(a) for a in args)})"
        else:
            loc = fname
        lines.append(f"{loc} = {format_element(value)}")
    return "\n".join(lines) + ("\n" if lines else "")
