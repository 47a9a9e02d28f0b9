"""Run-certificate files for partially ordered runs.

Text format, one declaration per line::

    move m1 by 0                 # move id and the agent's element
    move m2 by 1
    order m1 < m2                # ordering edges (earlier < later)
    updates m1: Fork(0) := up, Mode(0) := eat    # optional recorded sets
    initial from ring3.east      # sigma of the empty segment, by reference
    sigma m1, m2:                # or inline, one fact per line
      Fork(0) = up
    endsigma

``sigma:`` with no move ids gives the empty segment inline; a static
mirror inside a recorded set is marked with a leading ``~``.
"""

from __future__ import annotations

import os
import re

from .distributed import PartialRun
from .errors import CertificateError, ParseError
from .state import Element, Location, State, StaticMirror, Update, UpdateSet, format_element
from .stateio import format_state, load_state, parse_element, parse_state
from .syntax import DistributedSpec

_MOVE_RE = re.compile(r"^move\s+(\w+)\s+by\s+(\S+)$")
_ORDER_RE = re.compile(r"^order\s+(\w+)\s*<\s*(\w+)$")
_UPDATES_RE = re.compile(r"^updates\s+(\w+)\s*:\s*(.*)$")
_SIGMA_RE = re.compile(r"^sigma\s*([\w\s,]*):$")
_INITIAL_RE = re.compile(r"^initial\s+from\s+(\S+)$")
_ENTRY_RE = re.compile(
    r"^(~?)([A-Za-z_][A-Za-z0-9_]*'*)\s*(?:\(([^()]*)\))?\s*:=\s*(\S+)$"
)


def _split_entries(text: str) -> list[str]:
    """Split on commas outside parentheses."""
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    parts.append(text[start:])
    return [p.strip() for p in parts if p.strip()]


def _parse_update_entry(entry: str, spec: DistributedSpec) -> Update:
    m = _ENTRY_RE.match(entry)
    if m is None:
        raise CertificateError(f"bad update entry: {entry!r}")
    mirror, fname, raw_args, raw_value = m.groups()
    args = ()
    if raw_args is not None and raw_args.strip():
        args = tuple(
            parse_element(p, spec.vocabulary) for p in raw_args.split(",")
        )
    location = Location(fname, args)
    value = parse_element(raw_value, spec.vocabulary)
    return StaticMirror(location, value) if mirror else Update(location, value)


def parse_certificate(
    text: str, spec: DistributedSpec, base_dir: str | None = None
) -> PartialRun:
    moves: list[str] = []
    agent_of: dict[str, Element] = {}
    edges: set[tuple[str, str]] = set()
    recorded: dict[str, UpdateSet] = {}
    states: dict[frozenset, State] = {}

    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i].split("#", 1)[0].strip()
        i += 1
        if not line:
            continue
        m = _MOVE_RE.match(line)
        if m:
            move, raw = m.groups()
            if move in agent_of:
                raise CertificateError(f"move {move} declared twice")
            moves.append(move)
            agent_of[move] = parse_element(raw, spec.vocabulary)
            continue
        m = _ORDER_RE.match(line)
        if m:
            edges.add((m.group(1), m.group(2)))
            continue
        m = _UPDATES_RE.match(line)
        if m:
            move, rest = m.groups()
            entries = [_parse_update_entry(e, spec) for e in _split_entries(rest)]
            recorded[move] = UpdateSet(frozenset(entries))
            continue
        m = _INITIAL_RE.match(line)
        if m:
            if base_dir is None:
                raise CertificateError("initial-from needs a base directory")
            path = os.path.join(base_dir, m.group(1))
            try:
                states[frozenset()] = load_state(
                    path, spec.vocabulary, constants=spec.constants
                )
            except OSError as exc:
                raise CertificateError(f"cannot read initial state: {exc}") from exc
            continue
        m = _SIGMA_RE.match(line)
        if m:
            ids = frozenset(x.strip() for x in m.group(1).split(",") if x.strip())
            block: list[str] = []
            while i < len(lines):
                inner = lines[i].split("#", 1)[0].strip()
                i += 1
                if inner == "endsigma":
                    break
                if inner:
                    block.append(inner)
            else:
                raise CertificateError("sigma block missing endsigma")
            try:
                states[ids] = parse_state(
                    "\n".join(block), spec.vocabulary, constants=spec.constants
                )
            except ParseError as exc:
                raise CertificateError(f"sigma block: {exc}") from exc
            continue
        raise CertificateError(f"unrecognized certificate line: {line!r}")

    return PartialRun(
        moves=tuple(moves),
        agent_of=agent_of,
        edges=frozenset(edges),
        states=states,
        recorded=recorded or None,
    )


def load_certificate(path, spec: DistributedSpec) -> PartialRun:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_certificate(fh.read(), spec, base_dir=os.path.dirname(path) or ".")


def _format_update_entry(u: Update) -> str:
    mirror = "~" if isinstance(u, StaticMirror) else ""
    if u.location.args:
        loc = (
            f"{u.location.fname}"
            f"({', '.join(format_element(a) for a in u.location.args)})"
        )
    else:
        loc = u.location.fname
    return f"{mirror}{loc} := {format_element(u.value)}"


def format_certificate(pr: PartialRun) -> str:
    lines = []
    for move in pr.moves:
        lines.append(f"move {move} by {format_element(pr.agent_of[move])}")
    for earlier, later in sorted(pr.edges):
        lines.append(f"order {earlier} < {later}")
    if pr.recorded:
        for move in pr.moves:
            beta = pr.recorded.get(move)
            if beta is None:
                continue
            entries = ", ".join(
                _format_update_entry(u) for u in beta.sorted_updates()
            )
            lines.append(f"updates {move}: {entries}".rstrip())
    for key in sorted(pr.states, key=lambda k: (len(k), tuple(sorted(k)))):
        ids = ", ".join(sorted(key))
        lines.append(f"sigma {ids}:" if ids else "sigma:")
        body = format_state(pr.states[key]).rstrip("\n")
        if body:
            for fact in body.splitlines():
                lines.append(f"  {fact}")
        lines.append("endsigma")
    return "\n".join(lines) + "\n"
