import subprocess
import sys

import numpy as np
import pytest

from parmaint import _kernels
from parmaint.ctmdp import build_model
from parmaint.mdp_solve import (
    _uniformized_arrays,
    evaluate_policy,
    solve_average_cost,
)
from parmaint.sim import simulate_policy

from _oracles import single_type_instance

needs_numba = pytest.mark.skipif(
    not _kernels.USING_NUMBA, reason="numba backend not available"
)


@pytest.fixture(scope="module")
def small_model(base_instance):
    # base_instance is session-scoped, so requesting it here is fine
    return build_model(base_instance, design=(2, 1, 0, 0))


class TestBackendSelection:
    def test_backend_constant_consistent(self):
        assert _kernels.BACKEND in ("numba", "numpy")
        assert (_kernels.BACKEND == "numba") == _kernels.USING_NUMBA

    def test_unknown_backend_rejected(self, small_model):
        arrays, _ = _uniformized_arrays(small_model, 10.0)
        v = np.zeros(small_model.n_states)
        with pytest.raises(ValueError, match="backend"):
            _kernels.rvi_sweeps(arrays, v, 1e-8, 10, backend="fortran")

    def test_env_flag_forces_numpy(self):
        code = (
            "import os; os.environ['PARMAINT_NO_NUMBA'] = '1'\n"
            "from parmaint import _kernels\n"
            "assert not _kernels.USING_NUMBA\n"
            "assert _kernels.BACKEND == 'numpy'\n"
            "from parmaint.ctmdp import build_model\n"
            "from parmaint.mdp_solve import solve_average_cost\n"
            "from parmaint.model import load_instance\n"
            "inst = load_instance('instances/base-6-20.json')\n"
            "res = solve_average_cost(build_model(inst, design=(1, 0, 0, 0)), 100.0)\n"
            "assert res.converged\n"
            "assert abs(res.gain - 2.99) < 1e-8, res.gain\n"
            "print('ok')\n"
        )
        proc = subprocess.run(
            [sys.executable, "-c", code],
            capture_output=True,
            text=True,
            cwd=str(__import__("pathlib").Path(__file__).resolve().parent.parent),
        )
        assert proc.returncode == 0, proc.stderr
        assert proc.stdout.strip() == "ok"


@needs_numba
class TestBackendAgreement:
    def test_rvi_sweeps_bitwise(self, small_model):
        arrays, _ = _uniformized_arrays(small_model, 37.0)
        v_np = np.zeros(small_model.n_states)
        v_nb = np.zeros(small_model.n_states)
        out_np = _kernels.rvi_sweeps(arrays, v_np, 1e-10, 5000, backend="numpy")
        out_nb = _kernels.rvi_sweeps(arrays, v_nb, 1e-10, 5000, backend="numba")
        assert out_np[0] == out_nb[0]  # iteration counts
        assert out_np[1:] == pytest.approx(out_nb[1:], abs=0.0)  # exact
        assert np.array_equal(v_np, v_nb)

    def test_greedy_choice_bitwise(self, small_model):
        arrays, _ = _uniformized_arrays(small_model, 37.0)
        v = np.zeros(small_model.n_states)
        _kernels.rvi_sweeps(arrays, v, 1e-10, 5000, backend="numpy")
        ch_np = _kernels.greedy_choice(arrays, v, backend="numpy")
        ch_nb = _kernels.greedy_choice(arrays, v, backend="numba")
        assert np.array_equal(ch_np, ch_nb)

    def test_solver_end_to_end_identical(self, small_model):
        a = solve_average_cost(small_model, 50.0, backend="numpy")
        b = solve_average_cost(small_model, 50.0, backend="numba")
        assert a.gain == b.gain
        assert a.iterations == b.iterations
        assert np.array_equal(a.policy.choice, b.policy.choice)
        assert np.array_equal(a.values, b.values)

    def test_simulation_identical(self, small_model):
        res = solve_average_cost(small_model, 50.0)
        a = simulate_policy(
            small_model, res.policy, horizon=500.0, batches=4, seed=9,
            backend="numpy",
        )
        b = simulate_policy(
            small_model, res.policy, horizon=500.0, batches=4, seed=9,
            backend="numba",
        )
        assert a.g_o == b.g_o
        assert a.g_f == b.g_f
        assert a.events == b.events
        assert np.array_equal(a.batch_g_o, b.batch_g_o)
        assert np.array_equal(a.batch_g_f, b.batch_g_f)


class TestSimBatchKernel:
    def test_absorbing_state_bills_remaining_time(self):
        inst = single_type_instance(q=0.2, bound=1)
        model = build_model(inst, design=(1,))
        # never repair: after the first failure the chain is stuck
        policy_post = np.array(
            [model.state_id(((0, 0),)), model.state_id(((0, 1),)),
             model.state_id(((0, 0),))],
            dtype=np.int64,
        )
        state_arrays = (
            policy_post,
            model.trn_offsets,
            model.trn_targets,
            model.trn_rates,
            model.outflow,
            model.cost_op,
            model.cost_fail.astype(np.float64),
        )
        uniforms = np.array([0.5, 0.5, 0.5, 0.5])
        out = _kernels.sim_batch(
            state_arrays, model.state_id(((0, 0),)), 1000.0, uniforms, 0,
            backend="numpy",
        )
        acc_o, acc_f, events, fails, cur, t, pos, exhausted = out
        assert not exhausted
        assert t == 1000.0
        assert events == 1
        assert fails == 1
        assert cur == model.state_id(((0, 1),))
        # failure time is exponential with the single unit's failure rate
        alpha = inst.components[0].alpha
        t_fail = -np.log1p(-0.5) / alpha
        assert acc_o == pytest.approx(t_fail * 1.0, rel=1e-12)
        assert acc_f == pytest.approx(1000.0 - t_fail, rel=1e-12)

    def test_buffer_exhaustion_reported(self):
        inst = single_type_instance(q=0.2, bound=1)
        model = build_model(inst, design=(1,))
        policy_post = np.array(
            [0, model.state_id(((1, 0),)), model.state_id(((1, 0),))],
            dtype=np.int64,
        )
        state_arrays = (
            policy_post,
            model.trn_offsets,
            model.trn_targets,
            model.trn_rates,
            model.outflow,
            model.cost_op,
            model.cost_fail.astype(np.float64),
        )
        uniforms = np.array([0.5, 0.5, 0.5])  # room for 1.5 events only
        out = _kernels.sim_batch(state_arrays, 0, 1e9, uniforms, 0, backend="numpy")
        assert out[-1] is True or out[-1] == 1  # exhausted flag
        assert out[6] <= 3
