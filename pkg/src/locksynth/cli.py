"""Command-line interface: ``locksynth {check|synth|profile|plot} FILE``.

Exit codes: 0 success, 1 property failure (unsafe input, unfixable pattern,
unsatisfiable constraints, violated precondition), 2 tool or usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

import yaml

from .abstraction import abstract_program, format_abstract
from .automata import build_np_nfa, build_p_nfa, dump_nfa
from .benchmark import DEFAULT_SIZES, load_workload, sweep, sweep_csv
from .cegen import NeighborhoodTooLarge, NotLockEnforceable
from .inclusion import DEFAULT_SCHEDULE, Counterexample, check_inclusion_iterative, default_max_len
from .lang import ParseError, Program, dump_cfg, parse_program
from .perfmodel import NoConvergence, NotRefinement, PerfParams
from .pipeline import (Options, PreconditionViolation, ToolError, check_precondition,
                       default_blocks, run)
from .satsolver import Unsat
from .simulator import Workload, profile

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _read(path: str) -> Program:
    with open(path) as fh:
        return parse_program(fh.read())


def _schedule(args) -> tuple:
    return (args.bound,) if args.bound is not None else DEFAULT_SCHEDULE


def _dump(title: str, text: str) -> None:
    sys.stderr.write(f"## {title}\n{text.rstrip()}\n")


def _dumps(args, program: Program) -> None:
    ap = abstract_program(program)
    if args.dump_cfg:
        _dump("cfg", dump_cfg(program))
    if args.dump_abs:
        _dump("abstract program", format_abstract(ap))
    if args.dump_nfa:
        _dump("non-preemptive automaton", dump_nfa(build_np_nfa(ap)))


def _workload(args) -> Workload:
    return load_workload(args.workload) if args.workload else Workload()


def cmd_check(args) -> int:
    program = _read(args.file)
    _dumps(args, program)
    ap = abstract_program(program)
    check_precondition(ap)
    np = build_np_nfa(ap)
    res = check_inclusion_iterative(build_p_nfa(ap), np, _schedule(args),
                                    args.max_len or default_max_len(np))
    if isinstance(res, Counterexample):
        print(f"not preemption-safe (bound {res.bound}): {res}")
        return EXIT_FAIL
    print(f"preemption-safe (bound {res.bound})")
    return EXIT_OK


def _options(args, objective: str) -> Options:
    params = None
    if getattr(args, "profile", None):
        with open(args.profile) as fh:
            params = PerfParams.from_dict(yaml.safe_load(fh))
    return Options(objective=objective, locks=args.locks, schedule=_schedule(args),
                   max_len=args.max_len, params=params, workload=_workload(args), seed=args.seed)


def cmd_synth(args) -> int:
    program = _read(args.file)
    _dumps(args, program)
    session = run(program, _options(args, args.objective))
    if args.dump_mutex:
        lines = []
        for it in session.iterations:
            lines.append(f"iteration {it.index}: {it.counterexample}")
            lines.append(f"  formula: {it.formula}")
            lines += [f"  {m}" for m in it.mutexes]
            lines += [f"  conflict {' '.join(c.locations)}" for c in it.new_conflicts]
        _dump("mutex constraints", "\n".join(lines) or "none")
    if args.dump_cnf and session.vars is not None:
        _dump("wcnf", session.vars.formula.to_wcnf())
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(session.patched_text)
    else:
        sys.stdout.write(session.patched_text)
    report = yaml.safe_dump(session.summary(), sort_keys=False)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(report)
    else:
        sys.stderr.write(report)
    return EXIT_OK


def cmd_profile(args) -> int:
    program = _read(args.file)
    wl = _workload(args)
    if args.threads:
        wl.copies = max(1, args.threads // len(program.threads))
    coarse = run(program, Options(objective="coarse", locks=args.locks or 1,
                                  schedule=_schedule(args), max_len=args.max_len))
    params = profile(parse_program(coarse.patched_text), wl,
                     sorted(coarse.placement.protected_locations), seed=args.seed,
                     blocks=default_blocks(program))
    text = yaml.safe_dump(params.to_dict(), sort_keys=False)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_plot(args) -> int:
    program = _read(args.file)
    wl = _workload(args)
    sizes = [float(s) for s in args.sizes.split(",")] if args.sizes else DEFAULT_SIZES
    scaled = [s.strip() for s in args.scale.split(",") if s.strip()]
    pts = sweep(program, wl, scaled, sizes, seed=args.seed)
    text = sweep_csv(pts)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="locksynth",
                                 description="Synthesize locks that make a concurrent program "
                                             "preemption-safe.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("file", help="program in the locksynth language")
        p.add_argument("--bound", type=int, help="fixed reordering bound for inclusion checks")
        p.add_argument("--max-len", type=int, help="longest word explored by inclusion checks")
        p.add_argument("--seed", type=int, default=0, help="simulator seed")
        p.add_argument("--workload", help="workload YAML for the simulator")
        p.add_argument("--locks", type=int, help="number of locks available")
        p.add_argument("-o", "--output", help="write the result here instead of stdout")
        for name in ("cfg", "abs", "nfa", "mutex", "cnf"):
            p.add_argument(f"--dump-{name}", action="store_true", help=f"print the {name} to stderr")

    p = sub.add_parser("check", help="check preemption-safety")
    common(p)
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("synth", help="synthesize a lock placement")
    common(p)
    p.add_argument("--objective", choices=("none", "coarse", "fine", "perf"), default="none")
    p.add_argument("--profile", help="profile YAML from `locksynth profile`")
    p.add_argument("--report", help="write the YAML report here instead of stderr")
    p.set_defaults(func=cmd_synth)
    p = sub.add_parser("profile", help="profile the coarse placement in the simulator")
    common(p)
    p.add_argument("--threads", type=int, help="total simulated threads")
    p.set_defaults(func=cmd_profile)
    p = sub.add_parser("plot", help="CSV of predicted vs simulated speed-up over item sizes")
    common(p)
    p.add_argument("--scale", required=True, help="comma-separated statements whose cost follows "
                                                  "the item size")
    p.add_argument("--sizes", help="comma-separated item sizes in bytes")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ParseError as e:
        sys.stderr.write(f"{args.file}: {e}\n")
        return EXIT_ERROR
    except (PreconditionViolation, NotLockEnforceable, Unsat, NotRefinement) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_FAIL
    except (ToolError, NeighborhoodTooLarge, NoConvergence, RuntimeError, OSError) as e:
        sys.stderr.write(f"tool error: {e}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
