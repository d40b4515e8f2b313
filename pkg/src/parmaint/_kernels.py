"""Hot numerical loops: numba-compiled fast path plus a numpy fallback.

The backend is chosen once at import: numba when importable, unless the
``PARMAINT_NO_NUMBA`` environment variable is set to 1/true/yes.  Both
paths perform the same arithmetic in the same order, so results agree
bit for bit; ``backend=`` lets tests and benchmarks force either path.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "USING_NUMBA",
    "BACKEND",
    "rvi_sweeps",
    "greedy_choice",
    "sim_batch",
]

_disabled = os.environ.get("PARMAINT_NO_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)

try:
    if _disabled:
        raise ImportError("numba disabled by PARMAINT_NO_NUMBA")
    from numba import njit

    USING_NUMBA = True
except ImportError:
    njit = None
    USING_NUMBA = False

BACKEND = "numba" if USING_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# relative value iteration
#
# Pre-decision values v are updated via the uniformized one-step operator
#   (Tv)(s) = min_u [ cost[u]/L + sum_t (rate/L) v(t) + (1 - out[u]/L) v(s) ]
# over the state's post-decision options u, normalized at a reference
# state each sweep.  The per-sweep difference bracket [dmin, dmax] times
# the uniformization constant brackets the optimal gain.  Convergence is
# on the span of the difference, relative to the per-step gain magnitude
# so that huge failure penalties do not stall the loop at float
# resolution.


def _rvi_numpy(
    act_off,
    act_posts,
    pair_pre,
    trn_off,
    trn_src,
    trn_tgt,
    rate_scaled,
    self_keep,
    cost_scaled,
    v,
    tol,
    max_iter,
    ref,
):
    # bincount accumulates sequentially in storage order, matching the
    # compiled loop's summation order bit for bit
    n = v.shape[0]
    aoff = act_off[:-1]
    iters = 0
    span = math.inf
    dmin = dmax = 0.0
    while iters < max_iter:
        iters += 1
        contrib = np.bincount(trn_src, weights=rate_scaled * v[trn_tgt], minlength=n)
        post_val = cost_scaled + contrib
        vals = post_val[act_posts] + self_keep[act_posts] * v[pair_pre]
        new_v = np.minimum.reduceat(vals, aoff)
        delta = new_v - v
        dmin = float(delta.min())
        dmax = float(delta.max())
        span = dmax - dmin
        v[:] = new_v - new_v[ref]
        if span < tol * max(1.0, abs(0.5 * (dmin + dmax))):
            break
    return iters, span, dmin, dmax


def _greedy_numpy(
    act_off,
    act_posts,
    pair_pre,
    trn_off,
    trn_src,
    trn_tgt,
    rate_scaled,
    self_keep,
    cost_scaled,
    v,
):
    n = v.shape[0]
    contrib = np.bincount(trn_src, weights=rate_scaled * v[trn_tgt], minlength=n)
    post_val = cost_scaled + contrib
    vals = post_val[act_posts] + self_keep[act_posts] * v[pair_pre]
    aoff = act_off[:-1]
    best = np.minimum.reduceat(vals, aoff)
    # first position attaining the minimum: ties pick the smallest action
    # vector because action lists are stored in lexicographic order
    pos = np.arange(vals.shape[0], dtype=np.int64)
    hit = np.where(vals == np.repeat(best, np.diff(act_off)), pos, np.iinfo(np.int64).max)
    first = np.minimum.reduceat(hit, aoff)
    return (first - aoff).astype(np.int64)


def _rvi_loop(
    act_off,
    act_posts,
    pair_pre,
    trn_off,
    trn_src,
    trn_tgt,
    rate_scaled,
    self_keep,
    cost_scaled,
    v,
    tol,
    max_iter,
    ref,
):
    n = v.shape[0]
    post_val = np.empty(n)
    new_v = np.empty(n)
    iters = 0
    span = np.inf
    dmin = 0.0
    dmax = 0.0
    while iters < max_iter:
        iters += 1
        for u in range(n):
            acc = 0.0
            for k in range(trn_off[u], trn_off[u + 1]):
                acc += rate_scaled[k] * v[trn_tgt[k]]
            post_val[u] = cost_scaled[u] + acc
        dmin = np.inf
        dmax = -np.inf
        for s in range(n):
            vs = v[s]
            best = np.inf
            for k in range(act_off[s], act_off[s + 1]):
                u = act_posts[k]
                q = post_val[u] + self_keep[u] * vs
                if q < best:
                    best = q
            new_v[s] = best
            d = best - vs
            if d < dmin:
                dmin = d
            if d > dmax:
                dmax = d
        span = dmax - dmin
        ref_val = new_v[ref]
        for s in range(n):
            v[s] = new_v[s] - ref_val
        mid = 0.5 * (dmin + dmax)
        scale = abs(mid)
        if scale < 1.0:
            scale = 1.0
        if span < tol * scale:
            break
    return iters, span, dmin, dmax


def _greedy_loop(
    act_off,
    act_posts,
    pair_pre,
    trn_off,
    trn_src,
    trn_tgt,
    rate_scaled,
    self_keep,
    cost_scaled,
    v,
):
    n = v.shape[0]
    post_val = np.empty(n)
    for u in range(n):
        acc = 0.0
        for k in range(trn_off[u], trn_off[u + 1]):
            acc += rate_scaled[k] * v[trn_tgt[k]]
        post_val[u] = cost_scaled[u] + acc
    choice = np.empty(n, dtype=np.int64)
    for s in range(n):
        vs = v[s]
        best = np.inf
        pick = 0
        for k in range(act_off[s], act_off[s + 1]):
            u = act_posts[k]
            q = post_val[u] + self_keep[u] * vs
            if q < best:
                best = q
                pick = k - act_off[s]
        choice[s] = pick
    return choice


def _sim_loop(
    start_post,
    t_limit,
    policy_post,
    trn_off,
    trn_tgt,
    trn_rate,
    outflow,
    cost_op,
    cost_fail,
    uniforms,
    pos,
):
    t = 0.0
    acc_o = 0.0
    acc_f = 0.0
    cur = start_post
    events = 0
    fails = 0
    exhausted = False
    while t < t_limit:
        total = outflow[cur]
        if total <= 0.0:
            acc_o += (t_limit - t) * cost_op[cur]
            acc_f += (t_limit - t) * cost_fail[cur]
            t = t_limit
            break
        if pos + 2 > uniforms.shape[0]:
            exhausted = True
            break
        dt = -math.log1p(-uniforms[pos]) / total
        pos += 1
        if t + dt >= t_limit:
            acc_o += (t_limit - t) * cost_op[cur]
            acc_f += (t_limit - t) * cost_fail[cur]
            t = t_limit
            break
        acc_o += dt * cost_op[cur]
        acc_f += dt * cost_fail[cur]
        t += dt
        x = uniforms[pos] * total
        pos += 1
        nxt = trn_tgt[trn_off[cur + 1] - 1]
        acc_rate = 0.0
        for k in range(trn_off[cur], trn_off[cur + 1]):
            acc_rate += trn_rate[k]
            if x < acc_rate:
                nxt = trn_tgt[k]
                break
        newpost = policy_post[nxt]
        if cost_fail[newpost] == 1 and cost_fail[cur] == 0:
            fails += 1
        cur = newpost
        events += 1
    return acc_o, acc_f, events, fails, cur, t, pos, exhausted


if USING_NUMBA:
    _rvi_numba = njit(cache=True, nogil=True)(_rvi_loop)
    _greedy_numba = njit(cache=True, nogil=True)(_greedy_loop)
    _sim_numba = njit(cache=True, nogil=True)(_sim_loop)
else:
    _rvi_numba = None
    _greedy_numba = None
    _sim_numba = None


def _pick(backend, numba_fn, numpy_fn):
    if backend is None:
        backend = BACKEND
    if backend == "numba":
        if numba_fn is None:
            raise RuntimeError("numba backend requested but not available")
        return numba_fn
    if backend == "numpy":
        return numpy_fn
    raise ValueError(f"unknown backend {backend!r}")


def rvi_sweeps(arrays, v, tol, max_iter, ref=0, backend=None):
    """Run value-iteration sweeps in place; returns (iters, span, dmin, dmax)."""
    fn = _pick(backend, _rvi_numba, _rvi_numpy)
    return fn(*arrays, v, float(tol), int(max_iter), int(ref))


def greedy_choice(arrays, v, backend=None):
    """Index of the minimizing action per state (first on ties)."""
    fn = _pick(backend, _greedy_numba, _greedy_numpy)
    return fn(*arrays, v)


def sim_batch(state_arrays, start_post, t_limit, uniforms, pos, backend=None):
    """Advance one simulated batch until its time limit or buffer end."""
    policy_post, trn_off, trn_tgt, trn_rate, outflow, cost_op, cost_fail = state_arrays
    fn = _pick(backend, _sim_numba, _sim_loop)
    return fn(
        int(start_post),
        float(t_limit),
        policy_post,
        trn_off,
        trn_tgt,
        trn_rate,
        outflow,
        cost_op,
        cost_fail,
        uniforms,
        int(pos),
    )
