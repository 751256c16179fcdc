"""Command-line entry point: ``ramkit <command> <model.ram> ...``.

Exit status 0 on success, 1 when the model or the analysis reports a
problem, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from ramkit import ltl
from ramkit.dsl import DSLError, load_model
from ramkit.model import CausalFactorModel, Severity, validate
from ramkit.planner import DEFAULT_CYCLE_CAP, check_budget, plan_from, strategy_report
from ramkit.process import ProcessError, sample_scenario, successor_graph
from ramkit.render import Format, RenderOptions, action_text, render_graph, render_report
from ramkit.render import render_risk_structure, render_scenario
from ramkit.riskspace import compose_situation, endangerment_subgraph, stats

EXIT_OK, EXIT_FINDINGS, EXIT_USAGE = 0, 1, 2


class _Failure(Exception):
    """Problem to report on stderr with exit status 1."""


def _write(target: str, text: str) -> None:
    if target == "-":
        sys.stdout.write(text)
    else:
        Path(target).write_bytes(text.encode("utf-8"))


def _load(path: str) -> CausalFactorModel:
    try:
        return load_model(path)
    except OSError as exc:
        raise _Failure(f"{path}: {exc.strerror or exc}") from None


def _structure(model: CausalFactorModel, args):
    if args.situation not in model.situations:
        raise _Failure(f"unknown situation {args.situation!r}")
    return compose_situation(model, args.situation, backend=args.backend)


def _stats_line(rs) -> str:
    st = stats(rs)
    return (
        f"situation={rs.situation} states={st.state_count} transitions={st.transition_count} "
        f"endangerments={st.endangerment_count} mitigations={st.mitigation_count} "
        f"mishap_states={st.mishap_state_count}\n"
    )


def _render_opts(args) -> RenderOptions:
    return RenderOptions(Format.DOT, color_edges=not args.no_color, include_offline=not args.hide_offline)


def cmd_validate(args) -> int:
    model = _load(args.file)
    diags = validate(model)
    for d in diags:
        print(f"{args.file}: {d}", file=sys.stderr)
    if any(d.severity is Severity.ERROR for d in diags):
        return EXIT_FINDINGS
    print(f"{args.file}: ok ({len(model.factors)} factors, {len(model.situations)} situations)")
    return EXIT_OK


def cmd_build(args) -> int:
    rs = _structure(_load(args.file), args)
    if args.dot:
        _write(args.dot, render_risk_structure(rs, _render_opts(args)))
    if args.stats or not args.dot:
        sys.stdout.write(_stats_line(rs))
    return EXIT_OK


def cmd_endanger(args) -> int:
    sub = endangerment_subgraph(_structure(_load(args.file), args))
    _write(args.dot, render_risk_structure(sub, _render_opts(args)))
    if args.stats:
        sys.stdout.write(_stats_line(sub))
    return EXIT_OK


def cmd_graph(args) -> int:
    model = _load(args.file)
    _write(args.dot, render_graph(successor_graph(model), model.root or "process"))
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = _load(args.file)
    try:
        scenario = sample_scenario(model, args.start, args.steps, args.seed, args.p_activate, backend=args.backend)
    except KeyError as exc:
        raise _Failure(exc.args[0]) from None
    sys.stdout.write(render_scenario(scenario, RenderOptions(Format.PLAIN)))
    if args.csv:
        _write(args.csv, render_scenario(scenario, RenderOptions(Format.CSV)))
    return EXIT_OK


def cmd_plan(args) -> int:
    rs = _structure(_load(args.file), args)
    try:
        state = rs.state(args.state)
    except (KeyError, ValueError) as exc:
        raise _Failure(str(exc.args[0])) from None
    if state not in rs:
        raise _Failure(f"state {state.spec()} is not reachable in {rs.situation!r}")
    plan = plan_from(rs, state)
    if plan is None:
        print(f"no run-time mitigation plan from {state.spec()}")
        return EXIT_FINDINGS
    for step, action in enumerate(plan.actions, 1):
        print(f"{step}. {action_text(action)}")
    print(f"length {len(plan)}: {state.spec()} -> {plan.target.spec()}")
    return EXIT_OK


def cmd_report(args) -> int:
    rs = _structure(_load(args.file), args)
    report = strategy_report(rs, cycle_cap=args.cycle_cap)
    text = render_report(rs.situation, report)
    if args.budget is not None:
        over = check_budget(rs, args.budget)
        text += "".join(
            json.dumps({"kind": "overBudget", "situation": rs.situation, "state": s.spec(), "detail": s.label()})
            + "\n"
            for s in sorted(over, key=lambda s: s.spec())
        )
    sys.stdout.write(text)
    return EXIT_OK


def cmd_check(args) -> int:
    model = _load(args.file)
    rs = _structure(model, args)
    if args.formula is not None:
        formula = args.formula
    else:
        formula = ltl.model_to_formula(model, args.situation)
    try:
        verdicts = ltl.check_structure(rs, formula, args.walks, args.len, args.seed)
    except KeyError as exc:
        raise _Failure(str(exc.args[0])) from None
    failed = [(i, v) for i, v in enumerate(verdicts) if not v.holds]
    print(f"formula: {ltl.format_formula(formula)}")
    print(f"walks={len(verdicts)} violations={len(failed)}")
    for i, v in failed[:10]:
        print(f"walk {i}: violated at position {v.witness_index}")
    return EXIT_FINDINGS if failed else EXIT_OK


def _formula(text: str):
    try:
        return ltl.parse_formula(text)
    except ltl.FormulaSyntaxError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _non_negative(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError("must lie in [0, 1]")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ramkit", description="Risk structures for causal factor models.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def command(name: str, func, help_text: str, situation: bool = False) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("file", help="model file (.ram)")
        if situation:
            p.add_argument("--situation", required=True)
            p.add_argument("--backend", choices=("python", "cython"), help="force a state-space kernel")
        p.set_defaults(func=func)
        return p

    def dot_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--no-color", action="store_true", help="omit red/green edge colors")
        p.add_argument("--hide-offline", action="store_true", help="drop off-line repair edges")

    command("validate", cmd_validate, "check a model for errors")

    p = command("build", cmd_build, "compose the risk structure of a situation", situation=True)
    p.add_argument("--dot", metavar="OUT", help="write DOT to OUT ('-' for stdout)")
    p.add_argument("--stats", action="store_true", help="print state and transition counts")
    dot_flags(p)

    p = command("endanger", cmd_endanger, "endangerment-only view from 0", situation=True)
    p.add_argument("--dot", metavar="OUT", required=True)
    p.add_argument("--stats", action="store_true")
    dot_flags(p)

    p = command("graph", cmd_graph, "successor graph of the root process")
    p.add_argument("--dot", metavar="OUT", required=True)

    p = command("simulate", cmd_simulate, "sample a scenario with per-step statistics")
    p.add_argument("--start", required=True)
    p.add_argument("--steps", type=_positive, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--p-activate", type=_probability, default=0.5)
    p.add_argument("--csv", metavar="OUT")
    p.add_argument("--backend", choices=("python", "cython"))

    p = command("plan", cmd_plan, "shortest run-time mitigation plan to 0", situation=True)
    p.add_argument("--state", required=True, help="e.g. 'A,~B,_C'; unlisted factors are inactive")

    p = command("report", cmd_report, "mitigation strategy report as JSON lines", situation=True)
    p.add_argument("--cycle-cap", type=int, default=DEFAULT_CYCLE_CAP)
    p.add_argument("--budget", type=_non_negative, help="also list states above this risk (unit weights)")

    p = command("check", cmd_check, "check a formula on random walks", situation=True)
    p.add_argument("--formula", type=_formula, help="default: the situation's translated constraints")
    p.add_argument("--walks", type=_positive, required=True)
    p.add_argument("--len", type=_positive, required=True)
    p.add_argument("--seed", type=int, required=True)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except DSLError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_FINDINGS
    except (_Failure, ProcessError) as exc:
        print(f"ramkit: {exc}", file=sys.stderr)
        return EXIT_FINDINGS


if __name__ == "__main__":
    sys.exit(main())
