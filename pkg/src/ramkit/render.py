"""Text renderings: DOT graphs, scenario tables (plain and CSV), JSON-lines reports."""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass
from typing import Iterable, Optional

from ramkit.model import ActionKind, ActionLabel, MitigationClass, Phase
from ramkit.planner import StrategyReport
from ramkit.process import Scenario, ScenarioRow, SuccessorGraph
from ramkit.riskspace import RiskState, RiskStructure


class Format(enum.Enum):
    DOT = "dot"
    CSV = "csv"
    JSON_LINES = "jsonl"
    PLAIN = "plain"


@dataclass(frozen=True)
class RenderOptions:
    format: Format = Format.DOT
    color_edges: bool = True
    include_offline: bool = True


MITIGATION_ABBR = {
    MitigationClass.FAIL_SAFE: "fs",
    MitigationClass.DEESCALATION: "dsc",
    MitigationClass.PROTECTION: "prt",
    MitigationClass.UNCONTROLLED: "unc",
    MitigationClass.REPAIR: "rep",
}
# Effect of a mechanism-backed mitigation step: alleviate, restore, complete.
MECHANISM_EFFECT = {
    ActionKind.START_MITIGATE: "alv",
    ActionKind.END_MITIGATE: "rst",
    ActionKind.COMPLETE_MITIGATE: "cpl",
}
_MITIGATION_SUB = {ActionKind.START_MITIGATE: "s", ActionKind.END_MITIGATE: "e", ActionKind.COMPLETE_MITIGATE: "c"}


def action_text(label: ActionLabel) -> str:
    """``e^W_d``, ``e_m^W``, ``m_s^W``; with a mechanism ``prt^C_alv/Ab``."""
    if label.kind is ActionKind.ACTIVATE:
        return f"e^{label.factor}_{label.cls.value}"
    if label.kind is ActionKind.MISHAP_STEP:
        return f"e_m^{label.factor}"
    if label.mechanism is not None:
        return f"{MITIGATION_ABBR[label.cls]}^{label.factor}_{MECHANISM_EFFECT[label.kind]}/{label.mechanism}"
    return f"m_{_MITIGATION_SUB[label.kind]}^{label.factor}"


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_risk_structure(rs: RiskStructure, opts: RenderOptions = RenderOptions()) -> str:
    """DOT digraph of ``rs``; nodes are keyed by state spec and labeled by state symbols."""
    lines = [f"digraph {_quote(rs.situation or 'risk')} {{", "  rankdir=LR;", "  node [shape=circle];"]
    for state in sorted(rs.states, key=RiskState.spec):
        attrs = [f"label={_quote(state.label())}"]
        if state.is_zero:
            attrs.append("shape=doublecircle")
        if Phase.MISHAP in state.phases:
            attrs.append("style=bold")
        lines.append(f"  {_quote(state.spec())} [{', '.join(attrs)}];")
    edges = []
    for t in rs.transitions:
        if t.label.offline and not opts.include_offline:
            continue
        attrs = [f"label={_quote(action_text(t.label))}"]
        if opts.color_edges:
            attrs.append("color=red" if t.label.is_endangerment else "color=green")
        if t.label.offline:
            attrs.append("style=dashed")
        edges.append((t.source.spec(), action_text(t.label), t.target.spec(), attrs))
    for src, _, dst, attrs in sorted(edges, key=lambda e: e[:3]):
        lines.append(f"  {_quote(src)} -> {_quote(dst)} [{', '.join(attrs)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def render_graph(graph: SuccessorGraph, name: str = "process") -> str:
    """DOT digraph of a successor graph with a point node marking the start situations."""
    lines = [f"digraph {_quote(name)} {{", "  node [shape=box];"]
    if graph.initial:
        lines.append('  "__init__" [shape=point, color=gray];')
    for node in sorted(graph.nodes):
        lines.append(f"  {_quote(node)};")
    for node in sorted(graph.initial):
        lines.append(f'  "__init__" -> {_quote(node)} [color=gray];')
    for src, dst in sorted(graph.edges):
        lines.append(f"  {_quote(src)} -> {_quote(dst)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


SCENARIO_HEADER = ("Step", "Situation", "#CFs", "InitialState", "#States", "#Trans")


def initial_state_cell(state: RiskState) -> str:
    """Active factors concatenated in declaration order, ``0`` for none."""
    return "".join(state.in_phase(Phase.ACTIVE)) or "0"


def scenario_cells(row: ScenarioRow) -> tuple[str, ...]:
    return (
        str(row.step),
        row.situation,
        str(row.cf_count),
        initial_state_cell(row.initial_state),
        str(row.state_count),
        str(row.transition_count),
    )


def render_scenario(scenario: Scenario, opts: RenderOptions = RenderOptions(Format.PLAIN)) -> str:
    rows = [SCENARIO_HEADER] + [scenario_cells(r) for r in scenario.rows]
    if opts.format is Format.CSV:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerows(rows)
        return out.getvalue()
    if opts.format is not Format.PLAIN:
        raise ValueError(f"scenarios render as plain or csv, not {opts.format.value}")
    widths = [max(len(r[i]) for r in rows) for i in range(len(SCENARIO_HEADER))]
    # Text columns align left, counts align right.
    numeric = (True, False, True, False, True, True)

    def line(cells: Iterable[str]) -> str:
        parts = [c.rjust(w) if num else c.ljust(w) for c, w, num in zip(cells, widths, numeric)]
        return "  ".join(parts).rstrip()

    text = [line(rows[0]), "  ".join("-" * w for w in widths)]
    text += [line(r) for r in rows[1:]]
    return "\n".join(text) + "\n"


def parse_scenario_csv(text: str) -> list[tuple[int, str, int, str, int, int]]:
    """Rows of a CSV scenario table as typed tuples (header checked, not returned)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != SCENARIO_HEADER:
        raise ValueError(f"unexpected header {header!r}")
    return [(int(a), b, int(c), d, int(e), int(f)) for a, b, c, d, e, f in reader]


REPORT_FIELDS = ("kind", "situation", "state", "detail")


def report_findings(situation: str, report: StrategyReport) -> list[dict]:
    findings = [
        {
            "kind": "summary",
            "situation": situation,
            "state": None,
            "detail": (
                f"coverable={len(report.coverable)} stranded={len(report.stranded)} "
                f"offRepairOnly={len(report.off_repair_only)} cycles={len(report.cycles)}"
                + (" (truncated)" if report.cycles_truncated else "")
            ),
        }
    ]
    for kind, states in (("stranded", report.stranded), ("offRepairOnly", report.off_repair_only)):
        for state in sorted(states, key=RiskState.spec):
            findings.append({"kind": kind, "situation": situation, "state": state.spec(), "detail": state.label()})
    for cycle in report.cycles:
        findings.append(
            {
                "kind": "cycle",
                "situation": situation,
                "state": cycle[0].spec(),
                "detail": " -> ".join(s.label() for s in cycle + cycle[:1]),
            }
        )
    return findings


def render_report(situation: str, report: StrategyReport, opts: Optional[RenderOptions] = None) -> str:
    """One JSON object per line with the fields ``kind``, ``situation``, ``state``, ``detail``."""
    lines = [json.dumps({k: f[k] for k in REPORT_FIELDS}, sort_keys=False) for f in report_findings(situation, report)]
    return "\n".join(lines) + "\n"
