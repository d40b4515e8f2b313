"""Continuous-time Markov decision model of a parallel machine group.

States track, per component type, how many copies are under repair and
how many are damaged but not being repaired; the remaining installed
copies are the healthy ones.  Repair decisions are impulsive: starting
repairs moves damaged copies to repairing instantly, so the pair
(state, action) behaves exactly like the post-decision state with the
zero action.  Transitions and cost rates therefore live on post-decision
states, while action lists live on pre-decision states.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from parmaint.model import Instance

__all__ = [
    "DEFAULT_STATE_CEILING",
    "StateSpaceError",
    "CtmdpModel",
    "WeakCommunicationReport",
    "enumerate_states",
    "feasible_actions",
    "apply_action",
    "transition_rates",
    "cost_rates",
    "build_pruned_state_space",
    "build_model",
    "check_weakly_communicating",
    "dump_model",
]

DEFAULT_STATE_CEILING = 5_000_000

# A system state is one (repairing, damaged) pair per component type.
SystemState = tuple


class StateSpaceError(RuntimeError):
    """State space exceeds the configured ceiling; carries a sizing report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


def _pair_list(m: int):
    """Lexicographic (repairing, damaged) pairs with at most m copies."""
    return [(s1, s2) for s1 in range(m + 1) for s2 in range(m - s1 + 1)]


def _pair_index(m: int, s1: int, s2: int) -> int:
    # pairs with first entry < s1 number sum_{t<s1}(m+1-t)
    return s1 * (m + 1) - s1 * (s1 - 1) // 2 + s2


def _check_state(state, bounds):
    if len(state) != len(bounds):
        raise ValueError(f"state has {len(state)} rows for {len(bounds)} types")
    for (s1, s2), m in zip(state, bounds):
        if s1 < 0 or s2 < 0 or s1 + s2 > m:
            raise ValueError(f"state row {(s1, s2)} violates copy bound {m}")


def enumerate_states(bounds, ceiling: int | None = DEFAULT_STATE_CEILING):
    """All states of the box space, lexicographic, type 0 most significant."""
    bounds = [int(m) for m in bounds]
    sizes = [(m + 1) * (m + 2) // 2 for m in bounds]
    total = 1
    for t in sizes:
        total *= t
    if ceiling is not None and total > ceiling:
        raise StateSpaceError(
            f"state space has {total} states, over the ceiling of {ceiling}",
            report={"per_type": sizes, "total": total, "ceiling": ceiling},
        )
    return [tuple(rows) for rows in itertools.product(*(_pair_list(m) for m in bounds))]


def apply_action(state, action) -> SystemState:
    """Post-decision state: chosen damaged copies enter repair instantly."""
    if len(action) != len(state):
        raise ValueError(f"action has {len(action)} entries for {len(state)} types")
    out = []
    for (s1, s2), a in zip(state, action):
        if not 0 <= a <= s2:
            raise ValueError(f"action {a} outside 0..{s2} damaged copies")
        out.append((s1 + a, s2 - a))
    return tuple(out)


def feasible_actions(state, bounds=None, instance: Instance | None = None):
    """Action vectors in lexicographic order.

    Box mode: any number of each type's damaged copies may enter repair.
    Pruned mode (``instance`` with ``bounds`` = knapsack copy bounds):
    additionally requires the post-decision state to stay purchasable,
    i.e. ``A x(s + a) <= b`` with ``x(s + a)_i = M_i - (s_i2 - a_i)``.
    """
    ranges = [range(s2 + 1) for _, s2 in state]
    if instance is None:
        return [a for a in itertools.product(*ranges)]
    if bounds is None:
        bounds = instance.copy_bounds
    a_mat = instance.constraints
    b = instance.constraint_bounds
    out = []
    for act in itertools.product(*ranges):
        x = [m - (s2 - a) for (_, s2), a, m in zip(state, act, bounds)]
        if np.all(a_mat @ np.asarray(x, dtype=float) <= b + 1e-9):
            out.append(act)
    return out


def transition_rates(instance: Instance, bounds, state, repair_interruption=False):
    """Outgoing (target, rate) pairs of a post-decision state.

    Healthy copies fail one at a time; repairs complete one at a time.
    With the ``repair_interruption`` switch, copies under repair can also
    fail, landing in the damaged pool.
    """
    _check_state(state, bounds)
    out = []
    for i, ((s1, s2), m) in enumerate(zip(state, bounds)):
        comp = instance.components[i]
        healthy = m - s1 - s2
        if healthy > 0:
            target = list(state)
            target[i] = (s1, s2 + 1)
            out.append((tuple(target), healthy * comp.alpha))
        if s1 > 0:
            target = list(state)
            target[i] = (s1 - 1, s2)
            out.append((tuple(target), s1 * comp.tau))
            if repair_interruption:
                target = list(state)
                target[i] = (s1 - 1, s2 + 1)
                out.append((tuple(target), s1 * comp.alpha))
    return out


def cost_rates(instance: Instance, bounds, state):
    """(operational cost rate, failure indicator) of a post-decision state.

    The cheapest healthy type is the one in use; every copy under repair
    bills its repair rate; the failure indicator is 1 when no installed
    copy is healthy.
    """
    _check_state(state, bounds)
    usage = 0.0
    repair = 0.0
    failed = 1
    for i, ((s1, s2), m) in enumerate(zip(state, bounds)):
        comp = instance.components[i]
        repair += s1 * comp.repair_cost
        if failed and m - s1 - s2 > 0:
            # components are sorted by usage cost, so the first healthy
            # type is the cheapest one
            usage = comp.usage_cost
            failed = 0
    return usage + repair, failed


def build_pruned_state_space(instance: Instance, ceiling: int | None = DEFAULT_STATE_CEILING):
    """States of the maximal design that some purchasable design admits.

    A state needs ``x(s)_i = M_i - s_i2`` installed copies per type (its
    healthy plus repairing copies; damaged-and-unrepaired ones may as
    well not exist), so it is kept iff ``A x(s) <= b``.  Built
    incrementally type by type; partial sums only grow, so infeasible
    prefixes prune whole subtrees.
    """
    bounds = instance.copy_bounds
    a_mat = instance.constraints
    b = instance.constraint_bounds
    n = instance.n_types
    out = []
    count = 0

    def recurse(i, prefix, used):
        nonlocal count
        if i == n:
            out.append(tuple(prefix))
            count += 1
            if ceiling is not None and count > ceiling:
                raise StateSpaceError(
                    f"pruned state space exceeds the ceiling of {ceiling}",
                    report={"ceiling": ceiling},
                )
            return
        for s1, s2 in _pair_list(bounds[i]):
            need = bounds[i] - s2
            new_used = used + a_mat[:, i] * need
            if np.all(new_used <= b + 1e-9):
                prefix.append((s1, s2))
                recurse(i + 1, prefix, new_used)
                prefix.pop()

    recurse(0, [], np.zeros(len(b)))
    return out


@dataclass(eq=False)
class CtmdpModel:
    """Solver-ready arrays for one design's (or the pruned) decision model.

    Action lists are stored per pre-decision state as post-decision state
    ids (impulsive semantics); transitions, cost rates and total outflow
    are stored per post-decision state in CSR layout.
    """

    instance: Instance
    design: tuple | None
    bounds: np.ndarray  # per-type copy caps of this model
    kind: str  # "fixed-design" or "knapsack-pruned"
    repair_interruption: bool
    states: np.ndarray  # (n, 2N) int16, lexicographic
    act_offsets: np.ndarray  # (n+1,) int64
    act_posts: np.ndarray  # post-state id per (state, action), action-lex order
    trn_offsets: np.ndarray  # (n+1,) int64
    trn_targets: np.ndarray
    trn_rates: np.ndarray
    cost_op: np.ndarray  # operational cost rate per post-state
    cost_fail: np.ndarray  # failure indicator per post-state
    outflow: np.ndarray
    _codes: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    @property
    def n_types(self) -> int:
        return self.states.shape[1] // 2

    @property
    def n_state_actions(self) -> int:
        return int(self.act_posts.shape[0])

    @property
    def max_outflow(self) -> float:
        return float(self.outflow.max()) if self.n_states else 0.0

    def state_rows(self, sid: int) -> SystemState:
        row = self.states[sid]
        return tuple((int(row[2 * i]), int(row[2 * i + 1])) for i in range(self.n_types))

    def state_id(self, state) -> int:
        code = self._pack(state)
        if self._codes is None:
            return int(code)
        pos = int(np.searchsorted(self._codes, code))
        if pos >= len(self._codes) or self._codes[pos] != code:
            raise KeyError(f"state {state} not in this model's space")
        return pos

    def _pack(self, state) -> int:
        _check_state(state, self.bounds)
        code = 0
        for (s1, s2), m in zip(state, self.bounds):
            t = (m + 1) * (m + 2) // 2
            code = code * t + _pair_index(int(m), s1, s2)
        return code

    def action_vector(self, sid: int, post_id: int):
        pre = self.states[sid]
        post = self.states[post_id]
        return tuple(int(post[2 * i] - pre[2 * i]) for i in range(self.n_types))

    def state_string(self, sid: int) -> str:
        return "|".join(f"{s1},{s2}" for s1, s2 in self.state_rows(sid))


def _build_state_array(bounds):
    """Vectorized mixed-radix decode of the full box space."""
    n_types = len(bounds)
    tables = [np.array(_pair_list(m), dtype=np.int16) for m in bounds]
    sizes = np.array([t.shape[0] for t in tables], dtype=np.int64)
    total = int(np.prod(sizes))
    strides = np.ones(n_types, dtype=np.int64)
    for i in range(n_types - 2, -1, -1):
        strides[i] = strides[i + 1] * sizes[i + 1]
    ids = np.arange(total, dtype=np.int64)
    states = np.empty((total, 2 * n_types), dtype=np.int16)
    for i in range(n_types):
        idx = (ids // strides[i]) % sizes[i]
        states[:, 2 * i : 2 * i + 2] = tables[i][idx]
    return states, strides, sizes


def _model_costs(instance, bounds, states):
    n, n_types = states.shape[0], len(bounds)
    repair = np.zeros(n)
    usage = np.zeros(n)
    failed = np.ones(n, dtype=bool)
    for i in range(n_types):
        comp = instance.components[i]
        s1 = states[:, 2 * i].astype(np.int64)
        s2 = states[:, 2 * i + 1].astype(np.int64)
        healthy = bounds[i] - s1 - s2
        repair += comp.repair_cost * s1
        first = failed & (healthy > 0)
        usage[first] = comp.usage_cost
        failed &= ~first
    return usage + repair, failed.astype(np.uint8)


def _model_transitions(instance, bounds, states, strides, repair_interruption):
    """CSR transition arrays; per state ordered by (type, failure, repair)."""
    n, n_types = states.shape[0], len(bounds)
    ids = np.arange(n, dtype=np.int64)
    srcs, tgts, rates = [], [], []
    for i in range(n_types):
        comp = instance.components[i]
        s1 = states[:, 2 * i].astype(np.int64)
        s2 = states[:, 2 * i + 1].astype(np.int64)
        healthy = bounds[i] - s1 - s2
        mask = healthy > 0
        if mask.any():
            srcs.append(ids[mask])
            tgts.append(ids[mask] + strides[i])
            rates.append(healthy[mask] * comp.alpha)
        mask = s1 > 0
        if mask.any():
            back = (bounds[i] - s1[mask] + 2) * strides[i]
            srcs.append(ids[mask])
            tgts.append(ids[mask] - back)
            rates.append(s1[mask] * comp.tau)
            if repair_interruption:
                srcs.append(ids[mask])
                tgts.append(ids[mask] - back + strides[i])
                rates.append(s1[mask] * comp.alpha)
    if srcs:
        src = np.concatenate(srcs)
        tgt = np.concatenate(tgts)
        rate = np.concatenate(rates)
    else:
        src = np.zeros(0, dtype=np.int64)
        tgt = np.zeros(0, dtype=np.int64)
        rate = np.zeros(0)
    order = np.argsort(src, kind="stable")
    src, tgt, rate = src[order], tgt[order], rate[order]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.add.at(offsets, src + 1, 1)
    offsets = np.cumsum(offsets)
    outflow = np.zeros(n)
    np.add.at(outflow, src, rate)
    return offsets, tgt, rate, outflow


def build_model(
    instance: Instance,
    design=None,
    *,
    repair_interruption: bool = False,
    ceiling: int | None = DEFAULT_STATE_CEILING,
) -> CtmdpModel:
    """Build the decision model for a fixed design, or the pruned maximal
    space when ``design`` is None."""
    if design is not None:
        design = tuple(int(x) for x in design)
        if len(design) != instance.n_types or any(x < 0 for x in design):
            raise ValueError(f"bad design {design} for {instance.n_types} types")
        bounds = np.array(design, dtype=np.int64)
        states, strides, sizes = _build_state_array(bounds)
        total = states.shape[0]
        if ceiling is not None and total > ceiling:
            raise StateSpaceError(
                f"design {design} yields {total} states, over the ceiling "
                f"of {ceiling}",
                report={"per_type": list(map(int, sizes)), "total": total, "ceiling": ceiling},
            )
        codes = None
        id_of = None
        kind = "fixed-design"
    else:
        bounds = np.array(instance.copy_bounds, dtype=np.int64)
        pruned = build_pruned_state_space(instance, ceiling)
        states = np.array(
            [[v for pair in st for v in pair] for st in pruned], dtype=np.int16
        )
        sizes = np.array([(m + 1) * (m + 2) // 2 for m in bounds], dtype=np.int64)
        strides = np.ones(len(bounds), dtype=np.int64)
        for i in range(len(bounds) - 2, -1, -1):
            strides[i] = strides[i + 1] * sizes[i + 1]
        codes = np.zeros(states.shape[0], dtype=np.int64)
        for i in range(len(bounds)):
            idx = np.array(
                [_pair_index(int(bounds[i]), int(r[2 * i]), int(r[2 * i + 1])) for r in states],
                dtype=np.int64,
            )
            codes += idx * strides[i]

        # pruned enumeration is lexicographic, so codes are sorted
        def id_of(packed, codes=codes):
            pos = np.minimum(np.searchsorted(codes, packed), len(codes) - 1)
            if np.any(codes[pos] != packed):
                raise StateSpaceError("pruned space is not closed under transitions")
            return pos.astype(np.int64)

        kind = "knapsack-pruned"

    cost_op, cost_fail = _model_costs(instance, bounds, states)

    if kind == "fixed-design":
        trn_off, trn_tgt, trn_rate, outflow = _model_transitions(
            instance, bounds, states, strides, repair_interruption
        )
    else:
        # pruned targets are id shifts in packed-code space, then looked up
        full_ids = codes
        n = states.shape[0]
        srcs, tgts, rates = [], [], []
        for i in range(len(bounds)):
            comp = instance.components[i]
            s1 = states[:, 2 * i].astype(np.int64)
            s2 = states[:, 2 * i + 1].astype(np.int64)
            healthy = bounds[i] - s1 - s2
            local = np.arange(n, dtype=np.int64)
            mask = healthy > 0
            if mask.any():
                srcs.append(local[mask])
                tgts.append(full_ids[mask] + strides[i])
                rates.append(healthy[mask] * comp.alpha)
            mask = s1 > 0
            if mask.any():
                back = (bounds[i] - s1[mask] + 2) * strides[i]
                srcs.append(local[mask])
                tgts.append(full_ids[mask] - back)
                rates.append(s1[mask] * comp.tau)
                if repair_interruption:
                    srcs.append(local[mask])
                    tgts.append(full_ids[mask] - back + strides[i])
                    rates.append(s1[mask] * comp.alpha)
        if srcs:
            src = np.concatenate(srcs)
            tgt = id_of(np.concatenate(tgts))
            rate = np.concatenate(rates)
        else:
            src = np.zeros(0, dtype=np.int64)
            tgt = np.zeros(0, dtype=np.int64)
            rate = np.zeros(0)
        order = np.argsort(src, kind="stable")
        src, tgt, rate = src[order], tgt[order], rate[order]
        trn_off = np.zeros(n + 1, dtype=np.int64)
        np.add.at(trn_off, src + 1, 1)
        trn_off = np.cumsum(trn_off)
        trn_tgt, trn_rate = tgt, rate
        outflow = np.zeros(n)
        np.add.at(outflow, src, rate)

    act_off, act_posts = _build_actions(
        instance, bounds, states, strides, kind, codes
    )

    return CtmdpModel(
        instance=instance,
        design=design,
        bounds=bounds,
        kind=kind,
        repair_interruption=repair_interruption,
        states=states,
        act_offsets=act_off,
        act_posts=act_posts,
        trn_offsets=trn_off,
        trn_targets=trn_tgt,
        trn_rates=trn_rate,
        cost_op=cost_op,
        cost_fail=cost_fail,
        outflow=outflow,
        _codes=codes,
    )


def _build_actions(instance, bounds, states, strides, kind, codes):
    """Per-state post-id lists in action-lexicographic order."""
    n = states.shape[0]
    n_types = len(bounds)
    # per type, per pair index: post pair indices for each repair count
    post_lists = []
    for i in range(n_types):
        m = int(bounds[i])
        per_pair = []
        for s1, s2 in _pair_list(m):
            per_pair.append(
                [_pair_index(m, s1 + a, s2 - a) for a in range(s2 + 1)]
            )
        post_lists.append(per_pair)

    counts = np.ones(n, dtype=np.int64)
    for i in range(n_types):
        counts *= states[:, 2 * i + 1].astype(np.int64) + 1
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    posts = np.empty(offsets[-1], dtype=np.int64)
    stride_of = [int(s) for s in strides]
    pos = 0
    for sid in range(n):
        row = states[sid]
        options = []
        for i in range(n_types):
            m = int(bounds[i])
            pidx = _pair_index(m, int(row[2 * i]), int(row[2 * i + 1]))
            # pre-scale by the stride so a post id is just a sum
            options.append([p * stride_of[i] for p in post_lists[i][pidx]])
        if kind == "fixed-design":
            for combo in itertools.product(*options):
                posts[pos] = sum(combo)
                pos += 1
        else:
            packed = np.fromiter(
                (sum(c) for c in itertools.product(*options)), dtype=np.int64
            )
            ids = np.searchsorted(codes, packed)
            # post states outside the pruned set ask for more installed
            # copies than the budget allows and are not purchasable
            ok = (ids < len(codes)) & (codes[np.minimum(ids, len(codes) - 1)] == packed)
            sel = ids[ok]
            offsets[sid + 1] = offsets[sid] + len(sel)
            posts[offsets[sid] : offsets[sid + 1]] = sel
    if kind == "knapsack-pruned":
        posts = posts[: offsets[-1]]
    return offsets, posts


@dataclass(frozen=True)
class WeakCommunicationReport:
    weakly_communicating: bool
    transient_ids: tuple
    n_core_classes: int
    all_repairing_id: int | None


def _union_edges(model: CtmdpModel):
    """Directed edges of the union graph over every state-action pair."""
    n = model.n_states
    act_pre = np.repeat(
        np.arange(n, dtype=np.int64), np.diff(model.act_offsets)
    )
    posts = model.act_posts
    cnt = np.diff(model.trn_offsets)[posts]
    src = np.repeat(act_pre, cnt)
    starts = model.trn_offsets[posts]
    total = int(cnt.sum())
    if total == 0:
        return src[:0], src[:0]
    rep_starts = np.repeat(starts, cnt)
    seq = np.arange(total, dtype=np.int64) - np.repeat(
        np.cumsum(cnt) - cnt, cnt
    )
    tgt = model.trn_targets[rep_starts + seq]
    return src, tgt


def check_weakly_communicating(model: CtmdpModel) -> WeakCommunicationReport:
    """Structure check: one communicating core plus universally-transient rest.

    Communication existence between states is decided on the union graph
    of all state-action transitions: a cycle-free path there can always
    be realized by a single stationary policy.  States with no incoming
    union edges can never be revisited, hence are transient under every
    policy; the all-repairing state is the canonical example.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import breadth_first_order, connected_components

    n = model.n_states
    all_rep = None
    if model.kind == "fixed-design":
        rep_state = tuple((int(m), 0) for m in model.bounds)
        all_rep = model.state_id(rep_state)
    if n == 1:
        return WeakCommunicationReport(True, (), 1, all_rep)

    src, tgt = _union_edges(model)
    indeg = np.bincount(tgt, minlength=n)
    transient = np.nonzero(indeg == 0)[0]
    graph = coo_matrix(
        (np.ones(len(src)), (src, tgt)), shape=(n, n)
    ).tocsr()
    n_comp, labels = connected_components(graph, directed=True, connection="strong")
    core = np.setdiff1d(np.arange(n), transient)
    core_labels = np.unique(labels[core]) if core.size else np.array([])
    ok = core_labels.size == 1
    if ok:
        for t in transient:
            reach = breadth_first_order(graph, int(t), return_predecessors=False)
            if not np.any(labels[reach] == core_labels[0]):
                ok = False
                break
    return WeakCommunicationReport(
        weakly_communicating=bool(ok),
        transient_ids=tuple(int(t) for t in transient),
        n_core_classes=int(core_labels.size),
        all_repairing_id=all_rep,
    )


def dump_model(model: CtmdpModel, stream) -> None:
    """Line-oriented diagnostic dump, one record per post-decision state."""
    for sid in range(model.n_states):
        lo, hi = model.trn_offsets[sid], model.trn_offsets[sid + 1]
        arcs = " ".join(
            f"{model.state_string(int(t))}:{r:.12g}"
            for t, r in zip(model.trn_targets[lo:hi], model.trn_rates[lo:hi])
        )
        stream.write(
            f"state={model.state_string(sid)} c_o={model.cost_op[sid]:.12g} "
            f"c_f={int(model.cost_fail[sid])} out={model.outflow[sid]:.12g}"
            + (f" -> {arcs}" if arcs else "")
            + "\n"
        )
