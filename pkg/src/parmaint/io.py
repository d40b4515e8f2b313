"""Readers and writers for the toolkit's text artifacts.

All numeric output uses 12 significant digits so files compare stably
across runs and platforms.  Design columns are always written in the
order of the user's catalog, labeled ``x_<label>``; readers convert back
to the solver's internal (usage-cost-sorted) order when given the
instance.  See FORMATS.md at the repository root for the full format
reference.
"""

from __future__ import annotations

import math

from parmaint.app import ParetoFront, SolutionPoint
from parmaint.dop import StaticSolution
from parmaint.mdp_solve import MaintenancePolicy

__all__ = [
    "fmt",
    "write_static_table",
    "read_static_table",
    "write_front",
    "read_front",
    "write_plot_data",
    "write_gain_report",
    "write_policy",
    "read_policy",
    "write_sim_report",
    "write_compare_report",
]


def fmt(x) -> str:
    """12-significant-digit text for a number; '-' for missing."""
    if x is None:
        return "-"
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.12g" % x


def _parse_opt(tok: str):
    return None if tok == "-" else float(tok)


def _design_header(instance) -> list:
    labels = [None] * instance.n_types
    for slot, lab in enumerate(instance.labels):
        labels[instance.catalog_order[slot]] = f"x_{lab}"
    return labels


def _noncomment_lines(path):
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(line)
    return out


# ---------------------------------------------------------------- static table


def write_static_table(path, instance, solutions) -> None:
    """Static front rows: design counts, cost pair, and origin tag."""
    cols = _design_header(instance) + ["g_o", "ln_g_f", "tag"]
    with open(path, "w") as fh:
        fh.write("# parmaint static front\n")
        fh.write(" ".join(cols) + "\n")
        for s in solutions:
            counts = instance.to_catalog(s.design)
            row = [str(c) for c in counts] + [fmt(s.g_o), fmt(s.ln_g_f), s.tag]
            fh.write(" ".join(row) + "\n")


def read_static_table(path, instance) -> list:
    lines = _noncomment_lines(path)
    n = instance.n_types
    out = []
    for line in lines[1:]:  # first data line is the header
        toks = line.split()
        if len(toks) != n + 3:
            raise ValueError(f"bad static-front row: {line!r}")
        design = instance.from_catalog([int(t) for t in toks[:n]])
        out.append(
            StaticSolution(
                design=design,
                g_o=float(toks[n]),
                ln_g_f=float(toks[n + 1]),
                tag=toks[n + 2],
            )
        )
    return out


# ----------------------------------------------------------------------- front


def write_front(path, instance, front) -> None:
    """Front rows: provenance, design counts, penalty, cost pair."""
    points = front.points if isinstance(front, ParetoFront) else tuple(front)
    notes = front.notes if isinstance(front, ParetoFront) else ()
    cols = ["provenance"] + _design_header(instance) + ["p", "g_o", "ln_g_f"]
    with open(path, "w") as fh:
        fh.write("# parmaint front\n")
        for note in notes:
            fh.write(f"# note: {note}\n")
        fh.write(" ".join(cols) + "\n")
        for p in points:
            counts = instance.to_catalog(p.design)
            row = (
                [p.provenance]
                + [str(c) for c in counts]
                + [fmt(p.penalty), fmt(p.g_o), fmt(p.ln_g_f)]
            )
            fh.write(" ".join(row) + "\n")


def read_front(path, instance=None) -> ParetoFront:
    """Load a front file; designs are canonicalized when given the instance."""
    notes = []
    lines = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("# note: "):
                notes.append(line[len("# note: ") :])
            elif line and not line.startswith("#"):
                lines.append(line)
    if not lines:
        raise ValueError(f"{path} has no front header")
    header = lines[0].split()
    n = len(header) - 4  # provenance, p, g_o, ln_g_f
    points = []
    for line in lines[1:]:
        toks = line.split()
        if len(toks) != n + 4:
            raise ValueError(f"bad front row: {line!r}")
        counts = [int(t) for t in toks[1 : n + 1]]
        design = instance.from_catalog(counts) if instance else tuple(counts)
        points.append(
            SolutionPoint(
                g_o=float(toks[n + 2]),
                ln_g_f=float(toks[n + 3]),
                design=design,
                provenance=toks[0],
                penalty=_parse_opt(toks[n + 1]),
            )
        )
    return ParetoFront(points=tuple(points), notes=tuple(notes))


def write_plot_data(path, instance, front) -> None:
    """Per-design series of (g_o, ln_g_f) rows for external plotting."""
    points = front.points if isinstance(front, ParetoFront) else tuple(front)
    series = {}
    for p in points:
        series.setdefault(instance.to_catalog(p.design), []).append(p)
    with open(path, "w") as fh:
        fh.write("# parmaint plot data: g_o ln_g_f per design series\n")
        for design in sorted(series):
            fh.write(f"\n# series: {','.join(str(c) for c in design)}\n")
            for p in sorted(series[design], key=lambda q: (q.g_o, -q.ln_g_f)):
                fh.write(f"{fmt(p.g_o)} {fmt(p.ln_g_f)}\n")


# ---------------------------------------------------------------- gain reports


def write_gain_report(path, instance, design, penalty, gain, extra=()) -> None:
    counts = instance.to_catalog(design)
    with open(path, "w") as fh:
        fh.write("# parmaint gain report\n")
        fh.write(f"design = {' '.join(str(c) for c in counts)}\n")
        fh.write(f"penalty = {fmt(penalty)}\n")
        fh.write(f"g_o = {fmt(gain.g_o)}\n")
        fh.write(f"g_f = {fmt(gain.g_f)}\n")
        fh.write(f"ln_g_f = {fmt(gain.ln_g_f)}\n")
        for key, value in extra:
            fh.write(f"{key} = {value}\n")


# --------------------------------------------------------------------- policy


def write_policy(path, model, policy) -> None:
    """One row per state: the state and the repairs the policy starts."""
    with open(path, "w") as fh:
        fh.write("# parmaint policy\n")
        fh.write("# state = s_repairing,s_damaged per type; action = repairs per type\n")
        fh.write("state action\n")
        for sid in range(model.n_states):
            act = policy.action_vector(sid)
            fh.write(
                f"{model.state_string(sid)} {','.join(str(a) for a in act)}\n"
            )


def read_policy(path, model) -> MaintenancePolicy:
    lines = _noncomment_lines(path)
    import numpy as np

    rows = model.states.reshape(model.n_states, model.n_types, 2)
    damaged = rows[:, :, 1].astype(np.int64)
    choice = np.zeros(model.n_states, dtype=np.int64)
    seen = np.zeros(model.n_states, dtype=bool)
    for line in lines[1:]:
        state_tok, act_tok = line.split()
        sid = model.state_id(
            tuple(
                tuple(int(v) for v in pair.split(","))
                for pair in state_tok.split("|")
            )
        )
        act = [int(v) for v in act_tok.split(",")]
        idx = 0
        for i in range(model.n_types):
            stride = 1
            for k in range(i + 1, model.n_types):
                stride *= int(damaged[sid, k]) + 1
            idx += act[i] * stride
        choice[sid] = idx
        seen[sid] = True
    if not seen.all():
        missing = int(np.nonzero(~seen)[0][0])
        raise ValueError(f"policy file misses state {model.state_string(missing)}")
    return MaintenancePolicy(model, choice)


# ---------------------------------------------------------------- sim reports


def write_sim_report(path, report) -> None:
    with open(path, "w") as fh:
        fh.write("# parmaint simulation report\n")
        for key in (
            "g_o",
            "se_g_o",
            "g_f",
            "se_g_f",
            "horizon",
            "batches",
            "seed",
            "events",
            "failure_entries",
        ):
            value = getattr(report, key)
            text = fmt(value) if isinstance(value, float) else str(value)
            fh.write(f"{key} = {text}\n")
        fh.write(f"rare_failure = {'yes' if report.rare_failure else 'no'}\n")


# ------------------------------------------------------------ compare reports


def write_compare_report(path, report, instance=None) -> None:
    """Per-point verdicts of one front judged against another.

    Without an instance, design counts pass through in the order the
    compared fronts used (front files already carry catalog order).
    """
    if report.entries and instance is None:
        design_cols = [f"x_{i + 1}" for i in range(len(report.entries[0].point.design))]
    elif instance is not None:
        design_cols = _design_header(instance)
    else:
        design_cols = []
    cols = (
        ["status", "provenance"]
        + design_cols
        + ["p", "g_o", "ln_g_f", "distance", "dom_provenance", "dom_p", "dom_g_o", "dom_ln_g_f"]
    )
    with open(path, "w") as fh:
        fh.write("# parmaint front comparison\n")
        fh.write(f"# tolerance = {fmt(report.tolerance)}\n")
        for status in ("matched", "dominated", "absent"):
            fh.write(f"# {status} = {report.count(status)}\n")
        fh.write(" ".join(cols) + "\n")
        for e in report.entries:
            p = e.point
            counts = instance.to_catalog(p.design) if instance else p.design
            row = (
                [e.status, p.provenance]
                + [str(c) for c in counts]
                + [fmt(p.penalty), fmt(p.g_o), fmt(p.ln_g_f), fmt(e.distance)]
            )
            if e.dominator is None:
                row += ["-", "-", "-", "-"]
            else:
                d = e.dominator
                row += [d.provenance, fmt(d.penalty), fmt(d.g_o), fmt(d.ln_g_f)]
            fh.write(" ".join(row) + "\n")
