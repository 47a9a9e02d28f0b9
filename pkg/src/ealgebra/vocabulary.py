"""Function-name signatures and vocabularies.

A vocabulary is a finite collection of function names, each with a fixed
arity and optional relation/static markings.  The basic logic names
(true, false, undef, equality and the Boolean operations) belong to every
vocabulary and are injected automatically; Reserve and Self are injected
only for programs that import fresh elements or run as distributed
modules.  An optional integer background (numeric literals, +, mod, <)
can be switched on per program, with an optional wrap-around modulus for
ring-shaped scenarios.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

from . import syntax
from .errors import DeclarationError


@dataclass(frozen=True)
class FunctionName:
    name: str
    arity: int
    is_relation: bool = False
    is_static: bool = False
    is_logic: bool = False

    def __post_init__(self):
        if self.arity < 0:
            raise DeclarationError(f"{self.name}: arity must be nonnegative")


EQUALITY = FunctionName("=", 2, is_relation=True, is_static=True, is_logic=True)

#: Logic names present in every vocabulary.
BASIC_LOGIC_NAMES = (
    EQUALITY,
    FunctionName("true", 0, is_relation=True, is_static=True, is_logic=True),
    FunctionName("false", 0, is_relation=True, is_static=True, is_logic=True),
    FunctionName("undef", 0, is_relation=False, is_static=True, is_logic=True),
    FunctionName("and", 2, is_relation=True, is_static=True, is_logic=True),
    FunctionName("or", 2, is_relation=True, is_static=True, is_logic=True),
    FunctionName("not", 1, is_relation=True, is_static=True, is_logic=True),
    FunctionName("implies", 2, is_relation=True, is_static=True, is_logic=True),
)

#: Reserve is a logic name but not static: import withdraws elements from it.
RESERVE = FunctionName("Reserve", 1, is_relation=True, is_static=False, is_logic=True)

#: Self is a logic name, never the subject of an update instruction.
SELF = FunctionName("Self", 0, is_relation=False, is_static=False, is_logic=True)

#: Background integer operations, available under ``pragma integers``.
INTEGER_NAMES = (
    FunctionName("+", 2, is_relation=False, is_static=True, is_logic=True),
    FunctionName("mod", 2, is_relation=False, is_static=True, is_logic=True),
    FunctionName("<", 2, is_relation=True, is_static=True, is_logic=True),
)

#: Names whose value is computed, never stored in a state table.
COMPUTED_NAMES = frozenset(
    fn.name for fn in BASIC_LOGIC_NAMES + INTEGER_NAMES if fn.arity > 0
) | {"true", "false", "undef"}


@dataclass(frozen=True)
class Vocabulary:
    """An immutable name table, safe to share across concurrent evaluations."""

    names: tuple[FunctionName, ...]
    integers: bool = False
    modulus: int | None = None

    @cached_property
    def _index(self) -> dict[str, FunctionName]:
        return {fn.name: fn for fn in self.names}

    def lookup(self, name: str) -> FunctionName | None:
        fn = self._index.get(name)
        if fn is None and self.integers and name.isdigit():
            # Numeric literals act as static nullary logic-style names.
            return FunctionName(name, 0, is_relation=False, is_static=True, is_logic=True)
        return fn

    def __contains__(self, name: str) -> bool:
        return self.lookup(name) is not None

    def require(self, name: str) -> FunctionName:
        fn = self.lookup(name)
        if fn is None:
            raise DeclarationError(f"unknown function name: {name}")
        return fn

    @property
    def has_reserve(self) -> bool:
        return "Reserve" in self._index

    @property
    def has_self(self) -> bool:
        return "Self" in self._index

    def is_universe_name(self, name: str) -> bool:
        """Unary relation usable as a quantifier or binder range (never Reserve)."""
        fn = self.lookup(name)
        return fn is not None and fn.is_relation and fn.arity == 1 and name != "Reserve"

    def user_names(self) -> list[FunctionName]:
        return [fn for fn in self.names if not fn.is_logic]

    def subvocabulary(self, keep: Iterable[str]) -> Vocabulary:
        keep = set(keep)
        return Vocabulary(
            tuple(fn for fn in self.names if fn.name in keep or fn.is_logic),
            integers=self.integers,
            modulus=self.modulus,
        )

    def extended(self, extra: Iterable[FunctionName]) -> Vocabulary:
        merged = dict(self._index)
        for fn in extra:
            old = merged.get(fn.name)
            if old is not None and old != fn:
                raise DeclarationError(f"{fn.name}: conflicting redeclaration")
            merged[fn.name] = fn
        return Vocabulary(
            tuple(sorted(merged.values(), key=lambda f: f.name)),
            integers=self.integers,
            modulus=self.modulus,
        )


def make_vocabulary(
    user_names: Iterable[FunctionName] = (),
    *,
    with_reserve: bool = False,
    with_self: bool = False,
    integers: bool = False,
    modulus: int | None = None,
) -> Vocabulary:
    """Build a vocabulary from user declarations plus the forced logic names.

    Redeclaring a logic name with a conflicting signature, or declaring the
    same identifier twice with different arity/flags, is a declaration error.
    """
    table: dict[str, FunctionName] = {fn.name: fn for fn in BASIC_LOGIC_NAMES}
    if with_reserve:
        table[RESERVE.name] = RESERVE
    if with_self:
        table[SELF.name] = SELF
    if integers:
        for fn in INTEGER_NAMES:
            table[fn.name] = fn
    for fn in user_names:
        old = table.get(fn.name)
        if old is not None and old != fn:
            raise DeclarationError(
                f"{fn.name}: declaration conflicts with existing signature "
                f"({old.arity}-ary{', relation' if old.is_relation else ''})"
            )
        if integers and fn.name.isdigit():
            raise DeclarationError(f"{fn.name}: numeric literals cannot be redeclared")
        table[fn.name] = fn
    return Vocabulary(
        tuple(sorted(table.values(), key=lambda f: f.name)),
        integers=integers,
        modulus=modulus,
    )


def fun_of(obj) -> set[str]:
    """The set of function names occurring in a term, guard, rule or program.

    Variables are excluded; names bound by the object itself (universe names
    of binders, update subjects, Boolean connectives in guard position) are
    included, matching a plain syntactic scan.
    """
    names: set[str] = set()
    _scan(obj, names)
    return names


def _scan(obj, names: set[str]) -> None:
    if isinstance(obj, syntax.Var):
        return
    if isinstance(obj, syntax.App):
        names.add(obj.fname)
        for a in obj.args:
            _scan(a, names)
    elif isinstance(obj, syntax.Atom):
        _scan(obj.term, names)
    elif isinstance(obj, syntax.BoolGuard):
        names.add(obj.op)
        for g in obj.operands:
            _scan(g, names)
    elif isinstance(obj, syntax.QuantGuard):
        names.add(obj.universe)
        _scan(obj.body, names)
    elif isinstance(obj, syntax.UpdateInstr):
        names.add(obj.fname)
        for a in obj.args:
            _scan(a, names)
        _scan(obj.rhs, names)
    elif isinstance(obj, syntax.Block):
        for r in obj.rules:
            _scan(r, names)
    elif isinstance(obj, syntax.Cond):
        for g, r in obj.clauses:
            _scan(g, names)
            _scan(r, names)
    elif isinstance(obj, syntax.Import):
        _scan(obj.body, names)
    elif isinstance(obj, syntax.Choose):
        names.add(obj.universe)
        if obj.qualifier is not None:
            _scan(obj.qualifier, names)
        _scan(obj.body, names)
    elif isinstance(obj, syntax.Decl):
        if isinstance(obj.range, syntax.UniverseRange):
            names.add(obj.range.universe)
        else:
            _scan(obj.range.term, names)
        _scan(obj.body, names)
    elif isinstance(obj, syntax.Duplicate):
        _scan(obj.term, names)
        _scan(obj.body, names)
    elif isinstance(obj, syntax.Extend):
        names.add(obj.universe)
        _scan(obj.body, names)
    elif isinstance(obj, syntax.Case):
        _scan(obj.subject, names)
        for labels, rule in obj.branches:
            for t in labels:
                _scan(t, names)
            _scan(rule, names)
        if obj.else_rule is not None:
            _scan(obj.else_rule, names)
    elif isinstance(obj, syntax.Program):
        _scan(obj.rule, names)
    elif isinstance(obj, syntax.DistributedSpec):
        for prog in obj.modules.values():
            _scan(prog.rule, names)
    else:
        raise TypeError(f"fun_of: unsupported object {type(obj).__name__}")
