"""Distributed evolving algebras: agents, views, moves and runs.

An element is an agent at a state when Mod maps it to a module name's
element.  An agent moves by firing its module's program against its view
(the global state reduced to the module's names and expanded with Self)
and changing the global state accordingly.  Partially ordered runs are
verified against the four run conditions: finite down-sets, per-agent
linearity, initial-state validity and coherence of the segment states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Mapping, Optional, Sequence

from . import syntax
from .errors import (
    CertificateError,
    ModeError,
    ScheduleError,
    StateValidityError,
)
from .evaluator import Footprint, nupdates, updates
from .runner import OracleView, RunTrace, StepRecord, UndefOracle, prepare_rule
from .state import Element, Location, State, UpdateSet, format_element
from .syntax import DistributedSpec, Program
from .vocabulary import SELF, Vocabulary

DistributedProgram = DistributedSpec  # the spec type doubles as the engine handle


@dataclass(frozen=True)
class Agent:
    element: Element
    module: str
    program: Program

    @property
    def deterministic(self) -> bool:
        return not syntax.has_choose(self.program.rule)


def module_elements(spec: DistributedSpec, state: State) -> dict[str, Element]:
    return {name: state.read(Location(name)) for name in spec.module_names}


def validate_spec_state(spec: DistributedSpec, state: State) -> None:
    """The two state conditions: distinct module elements, finitely many agents.

    Finiteness is structural (tables are finite), but a module name
    interpreted as undef would make every unmentioned element an agent, so
    that is rejected along with colliding module elements.
    """
    elements = module_elements(spec, state)
    from .state import UNDEF

    seen: dict[Element, str] = {}
    for name, el in elements.items():
        if el == UNDEF:
            raise StateValidityError(f"module name {name} is uninterpreted (undef)")
        if el in seen:
            raise StateValidityError(
                f"module names {seen[el]} and {name} share the element "
                f"{format_element(el)}"
            )
        seen[el] = name


def agents_of(spec: DistributedSpec, state: State) -> list[Agent]:
    """All elements a with Mod(a) equal to some module name's element."""
    validate_spec_state(spec, state)
    by_element = {el: name for name, el in module_elements(spec, state).items()}
    agents = []
    for fname, args, value in state.stored_items():
        if fname != "Mod":
            continue
        module = by_element.get(value)
        if module is not None:
            agents.append(Agent(args[0], module, spec.modules[module]))
    agents.sort(key=lambda a: a.element.sort_key())
    return agents


def agent_at(spec: DistributedSpec, state: State, element: Element) -> Agent | None:
    for agent in agents_of(spec, state):
        if agent.element == element:
            return agent
    return None


@lru_cache(maxsize=None)
def _prepared(program: Program):
    return prepare_rule(program)


def view(spec: DistributedSpec, state: State, agent: Agent) -> State:
    """The agent's local state: reduct to its names, Self bound to it."""
    names = tuple(fn for fn in agent.program.vocabulary.names if fn.name != "Self")
    sub = Vocabulary(
        names,
        integers=agent.program.vocabulary.integers,
        modulus=agent.program.vocabulary.modulus,
    )
    return state.reduct(sub).expand({"Self": agent.element}, {"Self": SELF})


def agent_move(
    spec: DistributedSpec,
    state: State,
    agent: Agent | Element,
    chooser=None,
    *,
    oracle_view=None,
    footprint: Footprint | None = None,
) -> tuple[State, UpdateSet]:
    """Fire the agent's program at its view; apply the updates globally."""
    if isinstance(agent, Element):
        found = agent_at(spec, state, agent)
        if found is None:
            raise ScheduleError(f"{format_element(agent)} is not an agent here")
        agent = found
    local = view(spec, state, agent)
    rule = _prepared(agent.program)
    externals = agent.program.externals
    if syntax.has_choose(rule):
        family = nupdates(
            rule, local, oracle=oracle_view, externals=externals, footprint=footprint
        )
        members = family.sorted_members()
        if not members:
            return state, UpdateSet()
        index = chooser.choose(len(members)) if len(members) > 1 else 0
        chosen = members[index]
        if chosen is None:
            return state, UpdateSet()
        beta = chosen
    else:
        beta = updates(
            rule, local, oracle=oracle_view, externals=externals, footprint=footprint
        )
    new_state, _ = state.fire_update_set(beta)
    return new_state, beta


def move_successors(spec: DistributedSpec, state: State) -> list[tuple[str, State]]:
    """Every (move description, successor) over all agents and resolutions."""
    out = []
    for agent in agents_of(spec, state):
        tag = f"agent {format_element(agent.element)}"
        local = view(spec, state, agent)
        rule = _prepared(agent.program)
        if syntax.has_choose(rule):
            family = nupdates(rule, local, externals=agent.program.externals)
            if family.is_empty:
                out.append((f"{tag} (no move)", state))
                continue
            for i, member in enumerate(family.sorted_members()):
                if member is None:
                    out.append((f"{tag} choice {i} (bottom)", state))
                else:
                    nxt, _ = state.fire_update_set(member)
                    out.append((f"{tag} choice {i}", nxt))
        else:
            beta = updates(rule, local, externals=agent.program.externals)
            nxt, _ = state.fire_update_set(beta)
            out.append((tag, nxt))
    return out


def sequential_run(
    spec: DistributedSpec,
    initial: State,
    schedule: Sequence[Element],
    *,
    chooser=None,
    oracle=None,
    max_steps: int | None = None,
) -> RunTrace:
    """Execute one agent move per stage, in schedule order."""
    validate_spec_state(spec, initial)
    states = [initial]
    records: list[StepRecord] = []
    state = initial
    picks = list(schedule if max_steps is None else schedule[:max_steps])
    for index, element in enumerate(picks, start=1):
        oracle_view = OracleView(oracle or UndefOracle(), index)
        state2, beta = agent_move(
            spec, state, element, chooser, oracle_view=oracle_view
        )
        conflicts = beta.conflicts()
        records.append(
            StepRecord(
                index=index,
                updates=beta,
                consistent=not conflicts,
                fired=not conflicts,
                conflicts=conflicts,
                choice_index=None,
                family_size=None,
                oracle_qa=tuple(oracle_view.transcript),
                agent=element,
            )
        )
        states.append(state2)
        state = state2
    return RunTrace(states=states, records=records, stop_reason="schedule-end")


def quasi_move_updates(
    spec: DistributedSpec, state: State, agents: Iterable[Element]
) -> UpdateSet:
    """Union of the agents' update sets at the same state."""
    union = UpdateSet()
    for element in agents:
        agent = agent_at(spec, state, element)
        if agent is None:
            raise ScheduleError(f"{format_element(element)} is not an agent here")
        if not agent.deterministic:
            raise ModeError(
                f"quasi-sequential steps need deterministic agents ({agent.module})"
            )
        beta = updates(
            _prepared(agent.program),
            view(spec, state, agent),
            externals=agent.program.externals,
        )
        union = union.union(beta)
    return union


def quasi_sequential_step(
    spec: DistributedSpec, state: State, agents: Iterable[Element]
) -> State:
    """Fire a collection of agents as one simultaneous update set."""
    union = quasi_move_updates(spec, state, agents)
    new_state, _ = state.fire_update_set(union)
    return new_state


# ---------------------------------------------------------------------------
# Partially ordered runs


@dataclass
class PartialRun:
    """A move poset with agent labels and a state function on segments."""

    moves: tuple[str, ...]
    agent_of: Mapping[str, Element]
    edges: frozenset[tuple[str, str]]  # (earlier, later)
    states: Mapping[frozenset, State]  # keyed by frozenset of move ids
    recorded: Optional[Mapping[str, UpdateSet]] = None


@dataclass
class Verdict:
    valid: bool
    condition: Optional[str] = None  # "1".."4" or "certificate"
    message: str = ""
    witness: Optional[object] = None

    def __bool__(self):
        return self.valid


def _predecessor_closure(
    moves: Sequence[str], edges: Iterable[tuple[str, str]]
) -> Optional[dict[str, frozenset[str]]]:
    """Strict predecessors per move, or None if the edges contain a cycle."""
    direct: dict[str, set[str]] = {m: set() for m in moves}
    for earlier, later in edges:
        direct[later].add(earlier)
    closed: dict[str, frozenset[str]] = {}
    visiting: set[str] = set()

    def walk(m: str) -> Optional[frozenset[str]]:
        if m in closed:
            return closed[m]
        if m in visiting:
            return None
        visiting.add(m)
        acc: set[str] = set()
        for p in direct[m]:
            acc.add(p)
            below = walk(p)
            if below is None:
                return None
            acc |= below
        visiting.discard(m)
        closed[m] = frozenset(acc)
        return closed[m]

    for m in moves:
        if walk(m) is None:
            return None
    return closed


def _initial_segments(moves: Sequence[str], preds: dict[str, frozenset[str]]):
    if len(moves) > 14:
        raise CertificateError("partial-run verification capped at 14 moves")
    out = []
    n = len(moves)
    for mask in range(1 << n):
        segment = frozenset(moves[i] for i in range(n) if mask >> i & 1)
        if all(preds[m] <= segment for m in segment):
            out.append(segment)
    out.sort(key=lambda s: (len(s), tuple(sorted(s))))
    return out


def _maximal(segment: frozenset, preds: dict[str, frozenset[str]]) -> list[str]:
    return sorted(m for m in segment if not any(m in preds[x] for x in segment))


def _move_update_set(
    spec: DistributedSpec, pr: PartialRun, move: str, at: State
) -> tuple[UpdateSet | None, Verdict | None]:
    """The update set of a move at a state, checked against its module."""
    element = pr.agent_of[move]
    agent = agent_at(spec, at, element)
    if agent is None:
        return None, Verdict(
            False, "4", f"{format_element(element)} is not an agent before {move}",
            witness=move,
        )
    local = view(spec, at, agent)
    rule = _prepared(agent.program)
    recorded = (pr.recorded or {}).get(move)
    if recorded is None:
        if not agent.deterministic:
            return None, Verdict(
                False,
                "certificate",
                f"nondeterministic move {move} has no recorded update set",
                witness=move,
            )
        return updates(rule, local, externals=agent.program.externals), None
    family = nupdates(rule, local, externals=agent.program.externals)
    if recorded not in family.sets:
        return None, Verdict(
            False, "4", f"recorded update set of {move} is not a move of its agent",
            witness=move,
        )
    return recorded, None


def _sigma(
    spec: DistributedSpec, pr: PartialRun
) -> tuple[dict[frozenset, State], Optional[Verdict]]:
    """Recompute the state function on every segment, checking coherence."""
    preds = _predecessor_closure(pr.moves, pr.edges)
    if preds is None:
        return {}, Verdict(
            False, "1", "the move order is ill-founded (cycle in the edges)"
        )
    base = pr.states.get(frozenset())
    if base is None:
        return {}, Verdict(False, "certificate", "sigma of the empty segment is missing")
    computed: dict[frozenset, State] = {frozenset(): base}
    for segment in _initial_segments(pr.moves, preds):
        if not segment:
            continue
        candidate = None
        via = None
        for x in _maximal(segment, preds):
            before = computed[segment - {x}]
            beta, verdict = _move_update_set(spec, pr, x, before)
            if verdict is not None:
                return computed, verdict
            after, _ = before.fire_update_set(beta)
            if candidate is None:
                candidate, via = after, x
            elif after != candidate:
                return computed, Verdict(
                    False,
                    "4",
                    f"segment {{{', '.join(sorted(segment))}}}: firing {x} and "
                    f"{via} last disagree on the resulting state",
                    witness=segment,
                )
        stored = pr.states.get(segment)
        if stored is not None and stored != candidate:
            return computed, Verdict(
                False,
                "4",
                f"sigma at {{{', '.join(sorted(segment))}}} does not match the "
                f"recomputed state",
                witness=segment,
            )
        computed[segment] = candidate
    return computed, None


def check_partial_run(
    spec: DistributedSpec,
    pr: PartialRun,
    *,
    initial_state: State | None = None,
) -> Verdict:
    """Verify the four partially-ordered-run conditions on a certificate."""
    # Certificate shape.
    if len(set(pr.moves)) != len(pr.moves):
        return Verdict(False, "certificate", "duplicate move ids")
    known = set(pr.moves)
    for move in pr.moves:
        if move not in pr.agent_of:
            return Verdict(False, "certificate", f"move {move} has no agent label")
    for earlier, later in pr.edges:
        if earlier not in known or later not in known:
            return Verdict(False, "certificate", f"edge ({earlier}, {later}) names unknown moves")
    preds = _predecessor_closure(pr.moves, pr.edges)
    if preds is None:
        return Verdict(False, "1", "the move order is ill-founded (cycle in the edges)")
    for key in pr.states:
        if not key <= known:
            return Verdict(False, "certificate", "sigma key names unknown moves")
        if not all(preds[m] <= key for m in key):
            return Verdict(
                False, "certificate",
                f"sigma key {{{', '.join(sorted(key))}}} is not an initial segment",
            )

    # Condition 2: moves of any single agent are linearly ordered.
    by_agent: dict[Element, list[str]] = {}
    for move in pr.moves:
        by_agent.setdefault(pr.agent_of[move], []).append(move)
    for element, moves in by_agent.items():
        for a, b in combinations(sorted(moves), 2):
            if a not in preds[b] and b not in preds[a]:
                return Verdict(
                    False,
                    "2",
                    f"moves {a} and {b} of agent {format_element(element)} "
                    f"are incomparable",
                    witness=(a, b),
                )

    # Condition 3: sigma of the empty segment is an initial state.
    base = pr.states.get(frozenset())
    if base is None:
        return Verdict(False, "certificate", "sigma of the empty segment is missing")
    try:
        validate_spec_state(spec, base)
    except StateValidityError as exc:
        return Verdict(False, "3", f"sigma of the empty segment: {exc}")
    if initial_state is not None and base != initial_state:
        return Verdict(
            False, "3", "sigma of the empty segment is not the declared initial state"
        )

    # Condition 4 (and 1 via the closure): coherence over every segment.
    _, verdict = _sigma(spec, pr)
    if verdict is not None:
        return verdict
    return Verdict(True, None, "all run conditions hold")


def segment_states(spec: DistributedSpec, pr: PartialRun) -> dict[frozenset, State]:
    sigma, verdict = _sigma(spec, pr)
    if verdict is not None:
        raise CertificateError(verdict.message)
    return sigma


def reachable_states(spec: DistributedSpec, pr: PartialRun) -> set[State]:
    return set(segment_states(spec, pr).values())


@dataclass
class LinearizationReport:
    traces: list[RunTrace]
    complete: bool


def linearizations(
    spec: DistributedSpec,
    pr: PartialRun,
    segment: frozenset | None = None,
    *,
    budget: int = 10000,
) -> LinearizationReport:
    """All topological orders of a finite initial segment, as sequential runs."""
    preds = _predecessor_closure(pr.moves, pr.edges)
    if preds is None:
        raise CertificateError("the move order is ill-founded")
    segment = frozenset(pr.moves) if segment is None else frozenset(segment)
    if not all(preds[m] <= segment for m in segment):
        raise CertificateError("not an initial segment")
    base = pr.states.get(frozenset())
    if base is None:
        raise CertificateError("sigma of the empty segment is missing")

    orders: list[list[str]] = []
    complete = True

    def extend(placed: list[str], left: frozenset):
        nonlocal complete
        if len(orders) >= budget:
            complete = False
            return
        if not left:
            orders.append(list(placed))
            return
        done = frozenset(placed)
        for m in sorted(left):
            if preds[m] <= done:
                placed.append(m)
                extend(placed, left - {m})
                placed.pop()
                if not complete:
                    return

    extend([], segment)

    traces = []
    for order in orders:
        state = base
        states = [state]
        records = []
        for index, move in enumerate(order, start=1):
            beta, verdict = _move_update_set(spec, pr, move, state)
            if verdict is not None:
                raise CertificateError(verdict.message)
            state, fired = state.fire_update_set(beta)
            conflicts = beta.conflicts()
            records.append(
                StepRecord(
                    index=index,
                    updates=beta,
                    consistent=not conflicts,
                    fired=fired,
                    conflicts=conflicts,
                    choice_index=None,
                    family_size=None,
                    oracle_qa=(),
                    agent=pr.agent_of[move],
                )
            )
            states.append(state)
        traces.append(RunTrace(states=states, records=records, stop_reason="schedule-end"))
    return LinearizationReport(traces=traces, complete=complete)


def corollary1_holds(report: LinearizationReport) -> bool:
    """Every linearization of the same segment ends in the same final state."""
    finals = {trace.final_state for trace in report.traces}
    return len(finals) <= 1


def corollary2_agrees(spec: DistributedSpec, pr: PartialRun, guard: syntax.Guard) -> bool:
    """Predicate truth over reachable states matches truth over all
    linearization states."""
    from .evaluator import eval_guard

    over_run = all(eval_guard(s, None, guard) for s in reachable_states(spec, pr))
    report = linearizations(spec, pr)
    over_linear = all(
        eval_guard(s, None, guard) for trace in report.traces for s in trace.states
    )
    return over_run == over_linear


# ---------------------------------------------------------------------------
# Generating valid partial runs from sequential executions


def _footprints_conflict(
    w1: frozenset[Location], f1: Footprint, w2: frozenset[Location], f2: Footprint
) -> bool:
    names1 = {loc.fname for loc in w1}
    names2 = {loc.fname for loc in w2}
    if w1 & w2:
        return True
    if "Reserve" in names1 and "Reserve" in names2:
        return True
    if w1 & f2.locations or w2 & f1.locations:
        return True
    if names1 & f2.names or names2 & f1.names:
        return True
    return False


def generate_partial_run(
    spec: DistributedSpec,
    initial: State,
    schedule: Sequence[Element],
    *,
    chooser=None,
) -> PartialRun:
    """Run a schedule, then relax the total order to the conflict order.

    Two moves stay ordered when the same agent makes them or their
    read/write footprints interfere; all other pairs become incomparable.
    The state function is recomputed on every initial segment, so the
    result is a valid run by construction (and checked by the verifier in
    the tests).
    """
    if len(schedule) > 12:
        raise CertificateError("partial-run generation capped at 12 moves")
    validate_spec_state(spec, initial)
    state = initial
    entries = []
    for i, element in enumerate(schedule, start=1):
        footprint = Footprint()
        state, beta = agent_move(spec, state, element, chooser, footprint=footprint)
        entries.append((f"m{i}", element, beta, footprint))

    edges = set()
    for i in range(len(entries)):
        for j in range(i + 1, len(entries)):
            id_i, el_i, beta_i, fp_i = entries[i]
            id_j, el_j, beta_j, fp_j = entries[j]
            if el_i == el_j or _footprints_conflict(
                beta_i.locations(), fp_i, beta_j.locations(), fp_j
            ):
                edges.add((id_i, id_j))

    moves = tuple(e[0] for e in entries)
    agent_of = {e[0]: e[1] for e in entries}
    recorded = {e[0]: e[2] for e in entries}
    betas = {e[0]: e[2] for e in entries}

    preds = _predecessor_closure(moves, edges)
    assert preds is not None
    states: dict[frozenset, State] = {}
    for segment in _initial_segments(moves, preds):
        s = initial
        for move in moves:  # original schedule order linearizes every segment
            if move in segment:
                s, _ = s.fire_update_set(betas[move])
        states[segment] = s
    return PartialRun(
        moves=moves,
        agent_of=agent_of,
        edges=frozenset(edges),
        states=states,
        recorded=recorded,
    )
