"""Static sizing under the repair-everything policy.

With every damaged machine repaired immediately, each installed copy is
unavailable with a known probability and the long-run cost pair of a
design has a closed form: a modular repair term, a priority-ordered
usage term, and the all-down probability.  This module evaluates those
forms, cross-checks them against the slot-by-slot probability-chain
values, and solves the two design-only problems exactly by bounded
enumeration: the reliability-extreme problem (most negative log failure
rate) and the failure-penalized problem under a log-failure-rate cap.
The sweep over progressively tighter caps produces the static candidate
front.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from parmaint.model import Instance, tightened_copy_bound

__all__ = [
    "StaticSolution",
    "dop_objectives",
    "probability_chain_values",
    "solve_fdop",
    "solve_eps_delta_dop",
    "sp1_sweep",
]

EPS_SLACK = 1e-12  # slack when testing the log-failure-rate cap
TIE_TOL = 1e-9  # relative tolerance for recording alternate optima


@dataclass(frozen=True)
class StaticSolution:
    """A design with its closed-form cost pair under full repair."""

    design: tuple
    g_o: float
    ln_g_f: float
    tag: str = "sweep"  # "sweep" | "reliability" | "trivial"
    epsilon: float | None = None  # cap active when this design was found
    objective: float | None = None  # penalized objective value at that cap
    ties: tuple = field(default=(), compare=False)  # co-optimal alternates


def _design_matrix(designs) -> np.ndarray:
    x = np.asarray(designs, dtype=np.int64)
    if x.ndim == 1:
        x = x[None, :]
    return x


def _objective_terms(instance: Instance, x: np.ndarray):
    """Per-design (repair, usage, ln failure) for a (m, n) design array."""
    lnq = instance.ln_q_vector()
    q = instance.q_vector()
    r = instance.repair_costs()
    c = instance.usage_costs()
    lx = x * lnq  # (m, n)
    ln_f = lx.sum(axis=1)
    repair = x @ (r * q)
    # copies of type i only run when every cheaper type is entirely down
    prefix = np.exp(np.cumsum(lx, axis=1) - lx)
    usage = (c * prefix * -np.expm1(lx)).sum(axis=1)
    return repair, usage, ln_f


def dop_objectives(instance: Instance, design) -> tuple:
    """Closed-form (operational cost rate, log failure rate) of a design.

    The failure product is accumulated in log space so deep redundancy
    does not underflow.
    """
    x = _design_matrix(design)
    if x.shape[1] != instance.n_types:
        raise ValueError("design length does not match the catalog")
    repair, usage, ln_f = _objective_terms(instance, x)
    return float(repair[0] + usage[0]), float(ln_f[0])


def probability_chain_values(instance: Instance, design):
    """Slot-level usage/blocked probabilities for the chain cross-check.

    Slots run over (type, copy) in priority order up to each type's copy
    bound.  y[i][j] is the probability slot j of type i is healthy while
    every earlier slot is down; z[i][j] is the probability that slot and
    every earlier slot are down.  Uninstalled slots pass through.
    """
    x = tuple(int(v) for v in design)
    if len(x) != instance.n_types:
        raise ValueError("design length does not match the catalog")
    q = instance.q_vector()
    y, z = [], []
    ahead = 1.0  # probability everything before the current slot is down
    for i, bound in enumerate(instance.copy_bounds):
        yi = np.zeros(bound)
        zi = np.zeros(bound)
        for j in range(bound):
            if j < x[i]:
                yi[j] = (1.0 - q[i]) * ahead
                ahead *= q[i]
            zi[j] = ahead
        y.append(yi)
        z.append(zi)
    return y, z


def _feasible_designs(a: np.ndarray, b: np.ndarray, caps) -> list:
    """All integer vectors 0 <= x <= caps with a @ x <= b, lex order."""
    n = len(caps)
    cols = [a[:, i] for i in range(n)]
    out = []
    cur = [0] * n

    def rec(i, slack):
        if i == n:
            out.append(tuple(cur))
            return
        for v in range(int(caps[i]) + 1):
            rest = slack - v * cols[i]
            if np.any(rest < -1e-9):
                break  # coefficients are non-negative: more copies only worse
            cur[i] = v
            rec(i + 1, rest)
        cur[i] = 0

    rec(0, b.astype(float))
    return out


def solve_fdop(instance: Instance) -> tuple:
    """Design with the most negative log failure rate, exactly.

    Bounded enumeration over the knapsack polytope; ties go to the
    lexicographically smallest design.
    """
    designs = _feasible_designs(
        instance.constraints, instance.constraint_bounds, instance.copy_bounds
    )
    x = _design_matrix(designs)
    ln_f = x @ instance.ln_q_vector()
    best = ln_f.min()
    tied = [designs[i] for i in np.nonzero(ln_f <= best + 1e-12)[0]]
    return min(tied)


def solve_eps_delta_dop(
    instance: Instance, epsilon: float, delta: float = 0.1
) -> StaticSolution:
    """Exact minimizer of the failure-penalized static objective.

    Minimizes operational cost rate plus (1 + delta) times the top usage
    cost times the failure probability, over designs whose log failure
    rate is at most ``epsilon``, by exhaustive search under the
    tightened per-type copy caps.  The returned solution carries every
    co-optimal design (within a small relative tolerance) in ``ties``,
    ordered by (log failure rate, design); the representative is the
    most reliable of them.
    """
    if epsilon > 0:
        raise ValueError(f"log-failure-rate cap must be <= 0, got {epsilon}")
    if delta < 0:
        raise ValueError(f"penalty inflation must be >= 0, got {delta}")
    caps = [
        tightened_copy_bound(instance, i, epsilon, delta)
        for i in range(instance.n_types)
    ]
    designs = _feasible_designs(
        instance.constraints, instance.constraint_bounds, caps
    )
    x = _design_matrix(designs)
    repair, usage, ln_f = _objective_terms(instance, x)
    keep = ln_f <= epsilon + EPS_SLACK
    if not np.any(keep):
        raise ValueError(
            f"no feasible design reaches a log failure rate of {epsilon}"
        )
    c_top = instance.usage_costs().max()
    aug = repair + usage + (1.0 + delta) * c_top * np.exp(ln_f)
    aug = np.where(keep, aug, np.inf)
    best = aug.min()
    tol = TIE_TOL * max(1.0, abs(best))
    tied_idx = np.nonzero(aug <= best + tol)[0]
    order = sorted(tied_idx, key=lambda i: (ln_f[i], designs[i]))
    ties = tuple(
        StaticSolution(
            design=designs[i],
            g_o=float(repair[i] + usage[i]),
            ln_g_f=float(ln_f[i]),
            tag="trivial" if sum(designs[i]) == 0 else "sweep",
            epsilon=epsilon,
            objective=float(aug[i]),
        )
        for i in order
    )
    return replace(ties[0], ties=ties)


def sp1_sweep(
    instance: Instance,
    eps_min: float = 0.0,
    delta_eps: float = -0.1,
    delta: float = 0.1,
    record_ties: bool = False,
) -> list:
    """Static candidate front by sweeping the log-failure-rate cap.

    Starts at ``eps_min``, solves the penalized problem, then tightens
    the cap to the found solution's log failure rate plus ``delta_eps``
    until the cap passes the reliability extreme, which seeds the stop
    bound and is guaranteed a place in the output.  Duplicate designs
    keep their first appearance.  With ``record_ties`` every co-optimal
    design of each solve is recorded (listed least-reliable first so the
    output stays ordered); by default only representatives are kept.
    """
    if delta_eps >= 0:
        raise ValueError(f"cap step must be negative, got {delta_eps}")
    anchor_design = solve_fdop(instance)
    anchor_go, anchor_ln = dop_objectives(instance, anchor_design)

    results: list[StaticSolution] = []
    seen = set()

    def record(sol: StaticSolution):
        if sol.design not in seen:
            seen.add(sol.design)
            results.append(sol)

    eps = float(eps_min)
    while eps >= anchor_ln - EPS_SLACK:
        sol = solve_eps_delta_dop(instance, eps, delta)
        if record_ties:
            for s in reversed(sol.ties):
                record(s)
        else:
            record(replace(sol, ties=()))
        eps = sol.ln_g_f + delta_eps

    record(
        StaticSolution(
            design=anchor_design,
            g_o=anchor_go,
            ln_g_f=anchor_ln,
            tag="reliability",
        )
    )
    empty = (0,) * instance.n_types
    if empty not in seen:
        go0, ln0 = dop_objectives(instance, empty)
        results.insert(
            0, StaticSolution(design=empty, g_o=go0, ln_g_f=ln0, tag="trivial")
        )
    return results
