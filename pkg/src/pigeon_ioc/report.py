"""Plain-text tables in the layout used for per-pigeon weight results."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .ioc import Diagnostics, IocSolution


def format_sci(x: float, digits: int = 3) -> str:
    """``2.33e13`` style: ``digits`` significant figures, bare exponent."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    if math.isinf(x):
        return "inf"
    if x == 0:
        return "0"
    mant, exp = f"{x:.{digits - 1}e}".split("e")
    return f"{mant}e{int(exp)}"


def format_weight(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def format_seconds(t: float) -> str:
    return f"{t:.10g} s"


@dataclass(frozen=True)
class TableRow:
    label: str
    t_f: str
    solution: IocSolution | None
    error: str | None = None


def render_row(label: str, t_f: float | str, sol: IocSolution) -> str:
    t = t_f if isinstance(t_f, str) else format_seconds(t_f)
    weights = ", ".join(format_weight(sol.c_hat.c[i - 1]) for i in sol.unknown_indices)
    return f"{label} | {t} | {weights} | {format_sci(sol.r_w)}"


def render_table(title: str, rows: Sequence[TableRow]) -> str:
    unknown = next((r.solution.unknown_indices for r in rows if r.solution is not None), tuple(range(1, 9)))
    header = "Flight No | t_f | " + ", ".join(f"c_{i}" for i in unknown) + " | r_w"
    lines = [title, header]
    for r in rows:
        if r.solution is None:
            lines.append(f"{r.label} | {r.t_f} | FAILED: {r.error} | -")
            continue
        line = render_row(r.label, r.t_f, r.solution)
        flags = []
        if not r.solution.unique:
            flags.append("not unique")
        if r.solution.violations:
            flags.append("sign violations: " + "; ".join(r.solution.violations))
        if flags:
            line += "  [" + ", ".join(flags) + "]"
        lines.append(line)
    return "\n".join(lines) + "\n"


def render_diagnostics(label: str, d: Diagnostics) -> str:
    sv = " ".join(format_sci(s) for s in d.singular_values)
    lines = [f"  {label}: rank {d.rank}/{d.dim}, r_w {format_sci(d.r_w)}", f"    singular values: {sv}"]
    for col in d.null_space.T:
        terms = ", ".join(f"c_{i + 1}:{v:+.3f}" for i, v in enumerate(col) if abs(v) > 1e-3)
        lines.append(f"    null direction: {terms}")
    return "\n".join(lines)
