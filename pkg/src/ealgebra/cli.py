"""Command-line front end.

Subcommands: ``run``, ``enumerate``, ``normalize``, ``check-run``,
``validate``.  Exit codes are a stable contract:

====  ==========================================================
0     success (run completed, property holds, certificate valid)
1     internal error
2     usage error (bad flags)
3     parse or format error (program, state, oracle, certificate,
      assertion guard, or a program outside the needed fragment)
4     state-validity or schedule error
5     oracle failure
6     budget exhausted / partial result
7     property violation or certificate verdict: violation
====  ==========================================================

All randomness flows through ``--seed``; identical invocations produce
byte-identical trace files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import distributed as dist
from . import runner, syntax
from .certificate import load_certificate
from .errors import (
    CertificateError,
    DeclarationError,
    EalgebraError,
    ModeError,
    OracleError,
    ParseError,
    ScheduleError,
    StateValidityError,
    UpdateTypeError,
    VocabularyError,
)
from .evaluator import normalize_guarded
from .parser import format_program, parse_guard_text, parse_program_file
from .state import Element, format_element
from .stateio import format_state, load_state, parse_element
from .syntax import DistributedSpec, Program

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_STATE = 4
EXIT_ORACLE = 5
EXIT_BUDGET = 6
EXIT_VIOLATION = 7

_PARSE_ERRORS = (
    ParseError,
    DeclarationError,
    VocabularyError,
    CertificateError,
    ModeError,
)
_STATE_ERRORS = (StateValidityError, UpdateTypeError, ScheduleError)


class _Usage(EalgebraError):
    pass


def _load_target(path):
    return parse_program_file(path)


def _load_initial(path, target):
    state = load_state(path, target.vocabulary, constants=target.constants)
    violations = state.audit_proviso()
    if violations:
        raise StateValidityError(
            "initial state violates the reserve proviso: " + "; ".join(violations)
        )
    if isinstance(target, DistributedSpec):
        dist.validate_spec_state(target, state)
    return state


def _make_oracle(arg, vocabulary):
    if arg is None:
        return runner.UndefOracle()
    if arg == "interactive":
        def ask(fname, args, step_index):
            rendered = ", ".join(format_element(a) for a in args)
            sys.stderr.write(f"step {step_index}: {fname}({rendered}) = ")
            sys.stderr.flush()
            line = sys.stdin.readline()
            if not line:
                raise OracleError(f"no interactive answer for {fname}")
            return parse_element(line.strip(), vocabulary)

        return runner.CallableOracle(ask)
    return runner.ScriptedOracle.load(arg, vocabulary)


def _parse_schedule(raw, vocabulary) -> list[Element]:
    return [parse_element(tok, vocabulary) for tok in raw.split(",") if tok.strip()]


def _emit_trace(trace, args, header):
    text = runner.render_trace(trace, fmt=args.format, header=header)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        print(f"trace written to {args.trace} ({trace.stop_reason}, "
              f"{len(trace.records)} steps)")
    else:
        sys.stdout.write(text)


def _cmd_run(args) -> int:
    target = _load_target(args.program)
    if not args.state:
        raise _Usage("run needs --state")
    initial = _load_initial(args.state, target)
    chooser = runner.SeededChooser(args.seed)
    oracle = _make_oracle(args.oracle, target.vocabulary)
    header = {
        "program": os.path.basename(args.program),
        "state": os.path.basename(args.state),
        "seed": args.seed,
    }
    if isinstance(target, DistributedSpec):
        if args.schedule:
            schedule = _parse_schedule(args.schedule, target.vocabulary)
            if args.steps is not None:
                schedule = schedule[: args.steps]
            header["schedule"] = ",".join(format_element(e) for e in schedule)
            trace = dist.sequential_run(
                target, initial, schedule, chooser=chooser, oracle=oracle
            )
        else:
            steps = args.steps if args.steps is not None else 10
            header["steps"] = steps
            trace = _seeded_distributed_run(target, initial, chooser, steps, oracle)
    else:
        if args.schedule:
            raise _Usage("--schedule only applies to distributed specifications")
        steps = args.steps if args.steps is not None else 100
        header["steps"] = steps
        trace = runner.run(target, initial, oracle, chooser, max_steps=steps)
    _emit_trace(trace, args, header)
    return EXIT_OK


def _seeded_distributed_run(spec, initial, chooser, steps, oracle):
    """Pick a random agent per stage; one seeded generator drives everything."""
    schedule = []
    state = initial
    states = [initial]
    records = []
    for index in range(1, steps + 1):
        agents = dist.agents_of(spec, state)
        if not agents:
            break
        pick = agents[chooser.choose(len(agents))].element
        schedule.append(pick)
        view = runner.OracleView(oracle or runner.UndefOracle(), index)
        state, beta = dist.agent_move(spec, state, pick, chooser, oracle_view=view)
        conflicts = beta.conflicts()
        records.append(
            runner.StepRecord(
                index=index,
                updates=beta,
                consistent=not conflicts,
                fired=not conflicts,
                conflicts=conflicts,
                choice_index=None,
                family_size=None,
                oracle_qa=tuple(view.transcript),
                agent=pick,
            )
        )
        states.append(state)
    return runner.RunTrace(states=states, records=records, stop_reason="schedule-end")


def _cmd_enumerate(args) -> int:
    target = _load_target(args.program)
    if not args.state:
        raise _Usage("enumerate needs --state")
    initial = _load_initial(args.state, target)
    predicate = None
    if args.assertion:
        predicate = parse_guard_text(args.assertion, target.vocabulary)
        if syntax.free_vars(predicate):
            raise ParseError("assertion guard must be closed")
    report = runner.enumerate_reachable(
        target, initial, args.depth, budget=args.budget, predicate=predicate
    )
    by_depth: dict[int, int] = {}
    for _, level in report.states:
        by_depth[level] = by_depth.get(level, 0) + 1
    print(f"reachable states: {len(report.states)} (depth {args.depth}, "
          f"budget {'exceeded' if report.partial else 'ok'})")
    for level in sorted(by_depth):
        print(f"  depth {level}: {by_depth[level]}")
    for witness in report.violations:
        print("violation:")
        for move in witness.moves:
            print(f"  via {move}")
        for line in format_state(witness.state).rstrip().splitlines():
            print(f"  | {line}")
    if report.violations:
        return EXIT_VIOLATION
    if report.partial:
        return EXIT_BUDGET
    return EXIT_OK


def _cmd_normalize(args) -> int:
    target = _load_target(args.program)
    if isinstance(target, DistributedSpec):
        raise ModeError("normalize applies to single-agent programs")
    normalized = normalize_guarded(target.core_rule)
    out = format_program(
        Program(
            vocabulary=target.vocabulary,
            rule=normalized,
            externals=target.externals,
            constants=target.constants,
        )
    )
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    return EXIT_OK


def _cmd_check_run(args) -> int:
    target = _load_target(args.program)
    if not isinstance(target, DistributedSpec):
        raise ParseError("check-run needs a distributed specification")
    pr = load_certificate(args.certificate, target)
    initial = None
    if args.state:
        initial = _load_initial(args.state, target)
        if frozenset() not in pr.states:
            states = dict(pr.states)
            states[frozenset()] = initial
            pr.states = states
    verdict = dist.check_partial_run(target, pr, initial_state=initial)
    payload = {
        "valid": verdict.valid,
        "condition": verdict.condition,
        "message": verdict.message,
    }
    print(json.dumps(payload, sort_keys=True))
    if verdict.valid:
        return EXIT_OK
    if verdict.condition == "certificate":
        return EXIT_PARSE
    return EXIT_VIOLATION


def _cmd_validate(args) -> int:
    target = _load_target(args.program)
    kind = "distributed spec" if isinstance(target, DistributedSpec) else "program"
    if args.state:
        _load_initial(args.state, target)
        print(f"ok: {kind} and state validate")
    else:
        print(f"ok: {kind} validates")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="ealgebra",
        description="Run and verify evolving-algebra (abstract state machine) programs.",
    )
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, state_required=False):
        p.add_argument("program", help="program or distributed spec file")
        p.add_argument("--state", help="initial-state file", required=state_required)

    p = sub.add_parser("run", help="execute a program or a distributed schedule")
    common(p)
    p.add_argument("--oracle", help="oracle script path, or 'interactive'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--schedule", help="comma-separated agent elements")
    p.add_argument("--trace", help="trace output path (default: stdout)")
    p.add_argument("--format", choices=("text", "records"), default="text")

    p = sub.add_parser("enumerate", help="bounded exhaustive reachability")
    common(p)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--budget", type=int, default=20000)
    p.add_argument("--assert", dest="assertion", help="closed guard to hold everywhere")

    p = sub.add_parser("normalize", help="guarded-update normal form of a basic program")
    p.add_argument("program")
    p.add_argument("-o", "--output")

    p = sub.add_parser("check-run", help="verify a partially-ordered-run certificate")
    p.add_argument("program", help="distributed spec file")
    p.add_argument("certificate")
    p.add_argument("--state", help="declared initial state to compare against")

    p = sub.add_parser("validate", help="parse and validate inputs")
    common(p)
    return top


_HANDLERS = {
    "run": _cmd_run,
    "enumerate": _cmd_enumerate,
    "normalize": _cmd_normalize,
    "check-run": _cmd_check_run,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except _Usage as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _PARSE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except _STATE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STATE
    except OracleError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except EalgebraError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
