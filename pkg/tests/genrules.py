"""Seeded generators for random rules and the states to exercise them on.

Used by the evaluator tests and the acceptance suite: basic rules (update
instructions, blocks, conditionals over a three-element named universe)
for the normal-form check, and choice rules (plain choose binders over
small universes) for comparing the two family semantics.
"""

from __future__ import annotations

import random
from itertools import product

from ealgebra import (
    Element,
    FunctionName,
    State,
    TRUE,
    UNDEF,
    make_vocabulary,
)
from ealgebra.syntax import App, Atom, Block, BoolGuard, Choose, Cond, Var

X, Y, Z = Element.named("x"), Element.named("y"), Element.named("z")
ELEMS = (X, Y, Z)

BASIC_VOCAB = make_vocabulary(
    [
        FunctionName("x", 0, is_static=True),
        FunctionName("y", 0, is_static=True),
        FunctionName("z", 0, is_static=True),
        FunctionName("g", 0),
        FunctionName("f", 1),
        FunctionName("r", 1, is_relation=True),
    ]
)

_ATOM_NAMES = ("x", "y", "z", "g", "undef")


def gen_term(rng: random.Random, depth: int):
    if depth <= 0 or rng.random() < 0.5:
        return App(rng.choice(_ATOM_NAMES))
    return App("f", (gen_term(rng, depth - 1),))


def gen_bool_term(rng: random.Random):
    pick = rng.random()
    if pick < 0.25:
        return App(rng.choice(("true", "false")))
    if pick < 0.6:
        return App("r", (gen_term(rng, 1),))
    return App("=", (gen_term(rng, 1), gen_term(rng, 1)))


def gen_guard(rng: random.Random, depth: int):
    if depth <= 0 or rng.random() < 0.5:
        return Atom(gen_bool_term(rng))
    op = rng.choice(("and", "or", "not"))
    if op == "not":
        return BoolGuard("not", (gen_guard(rng, depth - 1),))
    return BoolGuard(op, (gen_guard(rng, depth - 1), gen_guard(rng, depth - 1)))


def gen_update(rng: random.Random):
    subject = rng.choice(("g", "f", "r"))
    if subject == "g":
        return _instr("g", (), gen_term(rng, 1))
    if subject == "f":
        return _instr("f", (gen_term(rng, 1),), gen_term(rng, 1))
    return _instr("r", (gen_term(rng, 1),), gen_bool_term(rng))


def _instr(fname, args, rhs):
    from ealgebra.syntax import UpdateInstr

    return UpdateInstr(fname, args, rhs)


def _block(members):
    """Canonical block: flattened, never a singleton (parser shape)."""
    flat = []
    for m in members:
        if isinstance(m, Block):
            flat.extend(m.rules)
        else:
            flat.append(m)
    if len(flat) == 1:
        return flat[0]
    return Block(tuple(flat))


def gen_basic_rule(rng: random.Random, depth: int = 2):
    """Random basic rule: updates, blocks and conditionals."""
    if depth <= 0:
        return gen_update(rng)
    pick = rng.random()
    if pick < 0.35:
        return gen_update(rng)
    if pick < 0.6:
        return _block(gen_basic_rule(rng, depth - 1) for _ in range(rng.randint(2, 3)))
    clauses = []
    for _ in range(rng.randint(1, 3)):
        clauses.append((gen_guard(rng, 1), gen_basic_rule(rng, depth - 1)))
    if rng.random() < 0.4:
        from ealgebra.syntax import TRUE_GUARD

        clauses.append((TRUE_GUARD, gen_basic_rule(rng, depth - 1)))
    return Cond(tuple(clauses))


_CONSTANT_TABLES = {"x": {(): X}, "y": {(): Y}, "z": {(): Z}}


def enumerate_basic_states(names: set[str]):
    """Every state over the generator vocabulary, restricted to the dynamic
    names a rule mentions; untouched names keep defaults."""
    value_pool = ELEMS + (UNDEF,)
    g_options = value_pool if "g" in names else (None,)
    f_options = (
        list(product(value_pool, repeat=len(ELEMS))) if "f" in names else [None]
    )
    r_options = (
        list(product((TRUE, None), repeat=len(ELEMS))) if "r" in names else [None]
    )
    for g_val in g_options:
        for f_row in f_options:
            for r_row in r_options:
                tables = dict(_CONSTANT_TABLES)
                if g_val is not None and g_val != UNDEF:
                    tables["g"] = {(): g_val}
                if f_row is not None:
                    entries = {
                        (e,): v for e, v in zip(ELEMS, f_row) if v != UNDEF
                    }
                    if entries:
                        tables["f"] = entries
                if r_row is not None:
                    entries = {(e,): TRUE for e, v in zip(ELEMS, r_row) if v is TRUE}
                    if entries:
                        tables["r"] = entries
                yield State(BASIC_VOCAB, tables)


# ---------------------------------------------------------------------------
# Choice rules over small universes

A, B, C = Element.named("a"), Element.named("b"), Element.named("c")

CHOICE_VOCAB = make_vocabulary(
    [
        FunctionName("a", 0, is_static=True),
        FunctionName("b", 0, is_static=True),
        FunctionName("c", 0, is_static=True),
        FunctionName("U1", 1, is_relation=True, is_static=True),
        FunctionName("U2", 1, is_relation=True, is_static=True),
        FunctionName("f", 1),
        FunctionName("g", 0),
    ]
)


def choice_state(u1: tuple, u2: tuple) -> State:
    tables = {"a": {(): A}, "b": {(): B}, "c": {(): C}}
    if u1:
        tables["U1"] = {(e,): TRUE for e in u1}
    if u2:
        tables["U2"] = {(e,): TRUE for e in u2}
    return State(CHOICE_VOCAB, tables)


def gen_choice_term(rng: random.Random, scope: list[str]):
    if scope and rng.random() < 0.5:
        return Var(rng.choice(scope))
    return App(rng.choice(("a", "b", "c")))


def gen_choice_rule(rng: random.Random, depth: int, binders_left: int, scope=None):
    """Random rule in the choice language: updates, blocks, conditionals and
    plain (unqualified) choose binders."""
    scope = list(scope or [])
    roll = rng.random()
    if binders_left > 0 and roll < 0.45:
        var = f"v{binders_left}{len(scope)}"
        universe = rng.choice(("U1", "U2"))
        body = gen_choice_rule(rng, depth - 1, binders_left - 1, scope + [var])
        return Choose((var,), universe, None, body)
    if depth <= 0 or roll < 0.7:
        target = rng.choice(("f", "g"))
        if target == "g":
            return _instr("g", (), gen_choice_term(rng, scope))
        return _instr(
            "f", (gen_choice_term(rng, scope),), gen_choice_term(rng, scope)
        )
    if roll < 0.85:
        return _block(
            gen_choice_rule(rng, depth - 1, binders_left if i == 0 else 0, scope)
            for i in range(2)
        )
    guard = Atom(App("=", (gen_choice_term(rng, scope), gen_choice_term(rng, scope))))
    return Cond(
        (
            (guard, gen_choice_rule(rng, depth - 1, binders_left, scope)),
        )
    )
