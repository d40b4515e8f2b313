"""Discrete-event validation of analytic long-run cost pairs.

Simulates the policy-induced chain on post-decision states with
competing exponential clocks, as independently replicated batches on
split counter-based streams, and reports batch-means estimates with
standard errors.  Failure rates far below 1/horizon cannot be estimated
tightly; reports carry a flag when fewer than 100 failure entries were
observed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from parmaint import _kernels

__all__ = ["SimReport", "simulate_policy", "trace_events"]

MIN_FAILURE_ENTRIES = 100
CHUNK_START = 4096
CHUNK_MAX = 1 << 20


@dataclass(frozen=True)
class SimReport:
    """Batch-means estimates of (cost rate, failure rate) for a policy."""

    g_o: float
    g_f: float
    se_g_o: float
    se_g_f: float
    horizon: float
    batches: int
    seed: int
    events: int
    failure_entries: int
    batch_g_o: tuple
    batch_g_f: tuple

    @property
    def rare_failure(self) -> bool:
        """Too few failure entries for a trustworthy g_f estimate."""
        return self.failure_entries < MIN_FAILURE_ENTRIES

    @property
    def ln_g_f(self) -> float:
        if self.g_f <= 0.0:
            return -math.inf
        return math.log(self.g_f)


def _batch_arrays(model, policy):
    return (
        policy.post_ids,
        model.trn_offsets,
        model.trn_targets,
        model.trn_rates,
        model.outflow,
        model.cost_op,
        model.cost_fail,
    )


def _run_batch(arrays, start_post, t_limit, rng, backend):
    """One replication; refills the uniform buffer as the kernel drains it."""
    acc_o = acc_f = 0.0
    events = fails = 0
    cur = start_post
    remaining = t_limit
    chunk = CHUNK_START
    while True:
        uniforms = rng.random(chunk)
        d_o, d_f, d_ev, d_fail, cur, t, _, exhausted = _kernels.sim_batch(
            arrays, cur, remaining, uniforms, 0, backend=backend
        )
        acc_o += d_o
        acc_f += d_f
        events += d_ev
        fails += d_fail
        remaining -= t
        if not exhausted:
            break
        chunk = min(chunk * 2, CHUNK_MAX)
    return acc_o, acc_f, events, fails


def simulate_policy(
    model,
    policy,
    horizon: float,
    batches: int = 20,
    seed: int = 0,
    initial_state: int = 0,
    backend=None,
) -> SimReport:
    """Estimate a policy's long-run cost pair by simulation.

    The horizon is split into ``batches`` independent replications from
    the initial state, each on its own spawned stream, so identical
    inputs give identical output and batch standard errors are honest.
    An absorbing state legally accrues its costs to the end of the
    batch.
    """
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if batches < 2:
        raise ValueError(f"need at least 2 batches, got {batches}")
    arrays = _batch_arrays(model, policy)
    start_post = int(policy.post_ids[initial_state])
    t_batch = float(horizon) / batches
    children = np.random.SeedSequence(seed).spawn(batches)
    means_o = np.zeros(batches)
    means_f = np.zeros(batches)
    events = fails = 0
    for b in range(batches):
        rng = np.random.Generator(np.random.Philox(children[b]))
        acc_o, acc_f, d_ev, d_fail, = _run_batch(
            arrays, start_post, t_batch, rng, backend
        )
        means_o[b] = acc_o / t_batch
        means_f[b] = acc_f / t_batch
        events += d_ev
        fails += d_fail
    se_o = float(means_o.std(ddof=1) / math.sqrt(batches))
    se_f = float(means_f.std(ddof=1) / math.sqrt(batches))
    return SimReport(
        g_o=float(means_o.mean()),
        g_f=float(means_f.mean()),
        se_g_o=se_o,
        se_g_f=se_f,
        horizon=float(horizon),
        batches=batches,
        seed=seed,
        events=events,
        failure_entries=fails,
        batch_g_o=tuple(means_o),
        batch_g_f=tuple(means_f),
    )


def trace_events(model, policy, horizon: float, seed: int = 0, limit: int = 1000, initial_state: int = 0):
    """First ``limit`` simulated events as (time, state, next state) rows.

    Pure-python companion to :func:`simulate_policy` for eyeballing
    sample paths; uses its own stream and is not meant for estimation.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    rows = []
    cur = int(policy.post_ids[initial_state])
    t = 0.0
    toff, ttgt, trate = model.trn_offsets, model.trn_targets, model.trn_rates
    while t < horizon and len(rows) < limit:
        total = model.outflow[cur]
        if total <= 0.0:
            break
        t += rng.exponential(1.0 / total)
        if t >= horizon:
            break
        x = rng.random() * total
        nxt = int(ttgt[toff[cur + 1] - 1])
        acc = 0.0
        for k in range(toff[cur], toff[cur + 1]):
            acc += trate[k]
            if x < acc:
                nxt = int(ttgt[k])
                break
        newpost = int(policy.post_ids[nxt])
        rows.append((t, model.state_string(cur), model.state_string(newpost)))
        cur = newpost
    return rows
