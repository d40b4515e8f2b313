import numpy as np
import pytest

from parmaint.ctmdp import (
    CtmdpModel,
    StateSpaceError,
    apply_action,
    build_model,
    build_pruned_state_space,
    check_weakly_communicating,
    cost_rates,
    dump_model,
    enumerate_states,
    feasible_actions,
    transition_rates,
)
from parmaint.model import ComponentType, make_instance

from _oracles import random_instance, single_type_instance


class TestEnumerateStates:
    def test_single_copy(self):
        states = enumerate_states([1])
        assert states == [((0, 0),), ((0, 1),), ((1, 0),)]

    def test_counts_match_triangular_formula(self):
        for bounds in ([2], [4, 5], [1, 2, 3], [0, 3]):
            states = enumerate_states(bounds)
            expected = 1
            for m in bounds:
                expected *= (m + 1) * (m + 2) // 2
            assert len(states) == expected
            assert len(set(states)) == expected

    def test_two_type_count(self):
        assert len(enumerate_states([4, 5])) == 315

    def test_zero_bound(self):
        assert enumerate_states([0]) == [((0, 0),)]

    def test_lexicographic_order_type0_most_significant(self):
        states = enumerate_states([1, 1])
        assert states[0] == ((0, 0), (0, 0))
        assert states[1] == ((0, 0), (0, 1))
        assert states[3] == ((0, 1), (0, 0))
        assert states[-1] == ((1, 0), (1, 0))

    def test_ceiling_raises_with_report(self):
        with pytest.raises(StateSpaceError) as err:
            enumerate_states([4, 5], ceiling=100)
        assert err.value.report["total"] == 315
        assert err.value.report["ceiling"] == 100


class TestActions:
    def test_counts(self):
        assert len(feasible_actions(((0, 2),))) == 3
        assert len(feasible_actions(((0, 1), (0, 1)))) == 4
        assert len(feasible_actions(((2, 0),))) == 1
        assert len(feasible_actions(((1, 1), (0, 3)))) == 8

    def test_lexicographic(self):
        acts = feasible_actions(((0, 1), (0, 2)))
        assert acts == [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]

    def test_apply_full_repair(self):
        assert apply_action(((0, 2),), (2,)) == ((2, 0),)

    def test_apply_zero_is_identity(self):
        state = ((1, 1), (0, 2), (3, 0))
        assert apply_action(state, (0, 0, 0)) == state

    def test_apply_partial(self):
        assert apply_action(((0, 1), (2, 1)), (1, 0)) == ((1, 0), (2, 1))

    def test_apply_rejects_overshoot(self):
        with pytest.raises(ValueError):
            apply_action(((0, 1),), (2,))
        with pytest.raises(ValueError):
            apply_action(((0, 1),), (-1,))
        with pytest.raises(ValueError):
            apply_action(((0, 1),), (1, 0))

    def test_pruned_actions_respect_budget(self, base_instance):
        # repairing a damaged copy re-installs it, which can break a
        # knapsack row that the damaged (ignorable) copy did not consume
        state = ((0, 4), (5, 0), (0, 0), (0, 0))
        acts = feasible_actions(
            state, bounds=base_instance.copy_bounds, instance=base_instance
        )
        box = [a for a in feasible_actions(state)]
        assert set(acts) <= set(box)
        # cost row: 3 x1 + 3 x2 + 2 x3 + 2 x4 <= 20 with x2=5, x3=4, x4=5
        # already uses 33 > 20, so no action keeping all of those is allowed
        for act in acts:
            x = [
                m - (s2 - a)
                for (_, s2), a, m in zip(state, act, base_instance.copy_bounds)
            ]
            assert np.all(
                base_instance.constraints @ np.asarray(x, float)
                <= base_instance.constraint_bounds + 1e-9
            )


class TestRatesAndCosts:
    def test_single_type_transitions(self):
        inst = single_type_instance(q=0.2, tau=2.0, bound=1)
        alpha = inst.components[0].alpha
        assert transition_rates(inst, (1,), ((0, 0),)) == [(((0, 1),), alpha)]
        assert transition_rates(inst, (1,), ((1, 0),)) == [(((0, 0),), 2.0)]
        assert transition_rates(inst, (1,), ((0, 1),)) == []

    def test_rates_scale_with_counts(self):
        inst = single_type_instance(q=0.2, tau=2.0, bound=3)
        alpha = inst.components[0].alpha
        out = dict(
            (tgt, rate) for tgt, rate in transition_rates(inst, (3,), ((1, 0),))
        )
        assert out[((1, 1),)] == pytest.approx(2 * alpha)  # 2 healthy copies
        assert out[((0, 0),)] == pytest.approx(1 * 2.0)  # 1 repair under way

    def test_repair_interruption_adds_failures_from_repair(self):
        inst = single_type_instance(q=0.2, tau=2.0, bound=2)
        alpha = inst.components[0].alpha
        plain = transition_rates(inst, (2,), ((2, 0),))
        assert plain == [(((1, 0),), 4.0)]
        with_int = dict(
            (t, r)
            for t, r in transition_rates(
                inst, (2,), ((2, 0),), repair_interruption=True
            )
        )
        assert with_int[((1, 0),)] == pytest.approx(4.0)
        assert with_int[((1, 1),)] == pytest.approx(2 * alpha)

    def test_costs_pick_cheapest_healthy(self):
        # catalog lists the expensive type first; canonical order flips them
        comps = [
            ComponentType(
                alpha=0.1,
                tau=1.0,
                usage_cost=c,
                repair_cost=10.0,
                install_cost=1.0,
                weight=1.0,
                label=lab,
            )
            for c, lab in [(5.0, "dear"), (2.0, "cheap")]
        ]
        comps_inst = make_instance(comps, [[1.0, 1.0]], [4.0])
        bounds = (2, 2)
        # cheap type (canonical index 0) healthy: its cost is billed
        assert cost_rates(comps_inst, bounds, ((0, 0), (0, 0))) == (2.0, 0)
        # cheap type fully damaged: the dear one takes over
        assert cost_rates(comps_inst, bounds, ((0, 2), (0, 0))) == (5.0, 0)
        # repairs bill on top of usage
        op, fail = cost_rates(comps_inst, bounds, ((1, 1), (0, 0)))
        assert op == pytest.approx(5.0 + 10.0)
        assert fail == 0

    def test_failure_indicator(self):
        inst = single_type_instance(q=0.2, repair=7.0, bound=2)
        assert cost_rates(inst, (2,), ((0, 2),)) == (0.0, 1)
        assert cost_rates(inst, (2,), ((2, 0),)) == (14.0, 1)
        assert cost_rates(inst, (2,), ((1, 1),)) == (7.0, 1)
        assert cost_rates(inst, (2,), ((1, 0),))[1] == 0

    def test_state_validation(self):
        inst = single_type_instance(bound=1)
        with pytest.raises(ValueError):
            cost_rates(inst, (1,), ((1, 1),))
        with pytest.raises(ValueError):
            transition_rates(inst, (1,), ((0, 1), (0, 0)))


class TestPrunedStateSpace:
    def test_zero_budget_single_state(self):
        inst = single_type_instance(bound=3)
        zero = make_instance(list(inst.components), [[1.0]], [0.0])
        assert build_pruned_state_space(zero) == [((0, 0),)]

    def test_matches_brute_force_filter(self, base_instance):
        pruned = set(build_pruned_state_space(base_instance))
        a = base_instance.constraints
        b = base_instance.constraint_bounds
        bounds = base_instance.copy_bounds
        brute = set()
        for state in enumerate_states(bounds):
            x = [m - s2 for (_, s2), m in zip(state, bounds)]
            if np.all(a @ np.asarray(x, float) <= b + 1e-9):
                brute.add(state)
        assert pruned == brute
        assert 0 < len(pruned) < len(enumerate_states(bounds))

    def test_random_instances_match_filter(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            inst = random_instance(rng, n_types=int(rng.integers(1, 4)))
            if np.prod([(m + 1) * (m + 2) / 2 for m in inst.copy_bounds]) > 20000:
                continue
            pruned = set(build_pruned_state_space(inst))
            a, b, bounds = inst.constraints, inst.constraint_bounds, inst.copy_bounds
            brute = {
                s
                for s in enumerate_states(bounds)
                if np.all(
                    a @ np.array([m - s2 for (_, s2), m in zip(s, bounds)], float)
                    <= b + 1e-9
                )
            }
            assert pruned == brute


def _model_matches_primitives(model: CtmdpModel):
    """Cross-check every CSR array against the reference functions."""
    inst = model.instance
    bounds = tuple(int(m) for m in model.bounds)
    for sid in range(model.n_states):
        rows = model.state_rows(sid)
        # transitions
        lo, hi = model.trn_offsets[sid], model.trn_offsets[sid + 1]
        got = {
            model.state_rows(int(t)): float(r)
            for t, r in zip(model.trn_targets[lo:hi], model.trn_rates[lo:hi])
        }
        want = {}
        for tgt, rate in transition_rates(
            inst, bounds, rows, repair_interruption=model.repair_interruption
        ):
            want[tgt] = want.get(tgt, 0.0) + rate
        assert set(got) == set(want)
        for key in want:
            assert got[key] == pytest.approx(want[key], rel=1e-12)
        assert model.outflow[sid] == pytest.approx(sum(want.values()), rel=1e-12)
        # costs
        op, fail = cost_rates(inst, bounds, rows)
        assert model.cost_op[sid] == pytest.approx(op, rel=1e-12)
        assert int(model.cost_fail[sid]) == fail
        # actions
        alo, ahi = model.act_offsets[sid], model.act_offsets[sid + 1]
        posts = [model.state_rows(int(p)) for p in model.act_posts[alo:ahi]]
        if model.kind == "fixed-design":
            acts = feasible_actions(rows)
        else:
            acts = feasible_actions(rows, bounds=bounds, instance=inst)
        assert posts == [apply_action(rows, a) for a in acts]


class TestBuildModel:
    def test_fixed_design_small(self):
        inst = single_type_instance(q=0.2, tau=2.0, bound=4)
        model = build_model(inst, design=(2,))
        assert model.kind == "fixed-design"
        assert model.n_states == 6
        assert model.n_state_actions == 10
        assert model.state_rows(0) == ((0, 0),)
        assert model.state_rows(model.n_states - 1) == ((2, 0),)
        _model_matches_primitives(model)

    def test_fixed_design_two_types(self, base_instance):
        model = build_model(base_instance, design=(2, 1, 0, 0))
        assert model.n_states == 6 * 3
        _model_matches_primitives(model)

    def test_zero_copy_types_collapse(self, base_instance):
        model = build_model(base_instance, design=(0, 0, 0, 0))
        assert model.n_states == 1
        assert model.cost_fail[0] == 1
        assert model.cost_op[0] == 0.0

    def test_state_id_round_trip(self, base_instance):
        model = build_model(base_instance, design=(2, 2, 1, 0))
        for sid in range(0, model.n_states, 7):
            assert model.state_id(model.state_rows(sid)) == sid

    def test_all_healthy_is_zero_all_repairing_is_last(self, base_instance):
        model = build_model(base_instance, design=(1, 2, 0, 1))
        assert model.state_rows(0) == ((0, 0), (0, 0), (0, 0), (0, 0))
        assert model.state_rows(model.n_states - 1) == (
            (1, 0),
            (2, 0),
            (0, 0),
            (1, 0),
        )

    def test_action_vector(self, base_instance):
        model = build_model(base_instance, design=(2, 0, 0, 0))
        sid = model.state_id(((0, 2), (0, 0), (0, 0), (0, 0)))
        lo, hi = model.act_offsets[sid], model.act_offsets[sid + 1]
        vectors = [
            model.action_vector(sid, int(p)) for p in model.act_posts[lo:hi]
        ]
        assert vectors == [
            (0, 0, 0, 0),
            (1, 0, 0, 0),
            (2, 0, 0, 0),
        ]

    def test_state_string(self, base_instance):
        model = build_model(base_instance, design=(2, 1, 0, 0))
        sid = model.state_id(((1, 1), (0, 1), (0, 0), (0, 0)))
        assert model.state_string(sid) == "1,1|0,1|0,0|0,0"

    def test_infeasible_design_rejected(self, base_instance):
        with pytest.raises(Exception):
            build_model(base_instance, design=(9, 9, 9, 9))

    def test_pruned_model_matches_enumeration(self, base_instance):
        model = build_model(base_instance)
        assert model.kind == "knapsack-pruned"
        assert model.n_states == len(build_pruned_state_space(base_instance))
        assert model.n_states < 315 * 315

    def test_pruned_model_state_lookup(self, base_instance):
        model = build_model(base_instance)
        for sid in range(0, model.n_states, 977):
            assert model.state_id(model.state_rows(sid)) == sid
        with pytest.raises(KeyError):
            # every copy of every type installed is over budget
            model.state_id(((4, 0), (5, 0), (4, 0), (5, 0)))

    def test_pruned_small_instance_full_cross_check(self):
        rng = np.random.default_rng(11)
        for _ in range(6):
            inst = random_instance(rng, n_types=2, bound_span=(4.0, 9.0))
            model = build_model(inst)
            if model.n_states > 400:
                continue
            _model_matches_primitives(model)

    def test_repair_interruption_model(self):
        inst = single_type_instance(q=0.2, tau=2.0, bound=3)
        model = build_model(inst, design=(2,), repair_interruption=True)
        assert model.repair_interruption
        _model_matches_primitives(model)

    def test_state_ceiling(self, base_instance):
        with pytest.raises(StateSpaceError):
            build_model(base_instance, ceiling=10)


class TestWeakCommunication:
    def test_fixed_design_report(self, base_instance):
        model = build_model(base_instance, design=(2, 1, 0, 0))
        report = check_weakly_communicating(model)
        assert report.weakly_communicating
        assert report.n_core_classes == 1
        assert report.all_repairing_id == model.n_states - 1
        assert report.all_repairing_id in report.transient_ids

    def test_all_repairing_has_no_incoming_arc(self):
        # failures add damaged copies and completions add healthy ones, so
        # nothing ever lands on the everything-in-repair state
        inst = single_type_instance(q=0.3, bound=3)
        model = build_model(inst, design=(3,))
        report = check_weakly_communicating(model)
        assert report.weakly_communicating
        assert model.state_id(((3, 0),)) in report.transient_ids

    def test_trivial_model(self, base_instance):
        model = build_model(base_instance, design=(0, 0, 0, 0))
        report = check_weakly_communicating(model)
        assert report.weakly_communicating
        assert report.n_core_classes == 1
        assert report.transient_ids == ()

    def test_pruned_model_weakly_communicating(self, base_instance):
        report = check_weakly_communicating(build_model(base_instance))
        assert report.weakly_communicating

    def test_random_fixed_designs(self):
        rng = np.random.default_rng(23)
        checked = 0
        while checked < 8:
            inst = random_instance(rng, n_types=int(rng.integers(1, 3)))
            design = tuple(
                int(rng.integers(0, min(m, 2) + 1)) for m in inst.copy_bounds
            )
            if sum(design) == 0 or not inst.is_feasible(design):
                continue
            model = build_model(inst, design=design)
            report = check_weakly_communicating(model)
            assert report.weakly_communicating
            assert report.all_repairing_id in report.transient_ids
            checked += 1


class TestDump:
    def test_dump_mentions_every_state(self, tmp_path):
        import io as _io

        inst = single_type_instance(q=0.2, bound=2)
        model = build_model(inst, design=(2,))
        buf = _io.StringIO()
        dump_model(model, buf)
        text = buf.getvalue()
        for sid in range(model.n_states):
            assert model.state_string(sid) in text
