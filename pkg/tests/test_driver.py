import dataclasses

import numpy as np
import pytest

from gsavqe.driver import (GsaConfig, RunRecord, _Context, alternate_training, make_space,
                           mse, pool_training, run_gsa, vqe_retraining)
from gsavqe.hamiltonian import PauliSum, TaskSpec, tfim
from gsavqe.optimize import Evaluator, QuantumCostLedger
from gsavqe.sim import NOISELESS
from gsavqe.space import AnsatzPath, SearchSpace, check_constraints

TFIM4 = TaskSpec.ground_state(tfim(4, 1.0))
TFIM3 = TaskSpec.ground_state(tfim(3, 1.0))
Z_TASK = TaskSpec.ground_state(PauliSum(1, [(1.0, "Z")]))
QUIET = dict(noise=False)


class SpyEvaluator(Evaluator):
    """Records every scoring and step call so costs can be recounted by hand."""

    def __init__(self, *a, **k):
        super().__init__(*a, **k)
        self.grad_params = []
        self.trials = []
        self.costs = 0

    def gradient(self, path, params, tag="grad"):
        self.grad_params.append(path.num_params)
        return super().gradient(path, params, tag)

    def cost(self, path, params, tag="cost"):
        self.costs += 1
        return super().cost(path, params, tag)

    def line_search_step(self, *a, **k):
        res = super().line_search_step(*a, **k)
        self.trials.append(res.trials)
        return res


def test_config_defaults_and_validation():
    c = GsaConfig()
    assert (c.n_layers, c.alpha0, c.xi, c.epsilon1, c.epsilon2) == (3, 5.0, 0.003, 0.8, 0.8)
    assert (c.n_s1, c.n_r1, c.n_t1, c.n_i0, c.n_i1) == (16, 1, 1, 2, 2)
    assert (c.n_s2, c.n_r2, c.n_t2, c.n_o, c.n_i2, c.n_i3) == (16, 2, 4, 5, 100, 10)
    assert (c.p1, c.p2, c.c1) == (0.001, 0.01, 1e-4)
    for bad in ({"n_s2": 15}, {"xi": 0}, {"n_layers": 0}, {"epsilon1": 2}, {"p1": -0.1}):
        with pytest.raises(ValueError):
            GsaConfig(**bad)


def test_pool_stage_ledger_hand_count(expectation_counter):
    cfg = GsaConfig(seed=3, n_i0=2, n_i1=2, **QUIET)
    led = QuantumCostLedger(record_events=True)
    ev = SpyEvaluator(TFIM4, NOISELESS, led)
    ctx = _Context(TFIM4, cfg, ev=ev)
    space = make_space(4, cfg)
    pool, tree, _ = pool_training(TFIM4, space, cfg, np.random.default_rng(3), ctx)
    # per iteration: each distinct sampled path costs 1 + 2|theta|, each trained one its trials
    hand = ev.costs + sum(2 * m for m in ev.grad_params) + sum(ev.trials)
    assert ev.costs == len(ev.grad_params)
    assert led.evaluations == hand == expectation_counter["calls"]
    assert led.by_stage == {"pool": hand}
    assert tree.check()


def test_pool_stage_stops_when_tree_stable():
    # a 2-qubit single-layer space has few paths, so new leaves run out quickly
    cfg = GsaConfig(seed=0, n_layers=1, n_i0=0, n_i1=200, n_t1=1, **QUIET)
    task = TaskSpec.ground_state(tfim(2))
    space = make_space(2, cfg)
    _, tree, reason = pool_training(task, space, cfg, np.random.default_rng(0))
    assert reason == "tree-stable"
    assert tree.num_leaves <= space.count()
    assert tree.check()


def hand_iterate_cos(theta, iters, alpha0=5.0, c1=1e-4, shrink=0.618, tries=30):
    """Armijo descent on C = cos(theta) with the closed-form gradient -sin(theta)."""
    f = np.cos(theta)
    for _ in range(iters):
        g = -np.sin(theta)
        a = alpha0
        for _ in range(tries):
            if np.cos(theta - a * g) <= f - c1 * a * g * g:
                theta, f = theta - a * g, np.cos(theta - a * g)
                break
            a *= shrink
    return theta, f


def test_retraining_examples():
    ry = AnsatzPath.from_text("q0:Ry", 1)
    cfg = GsaConfig(xi=0.003, n_i3=10, **QUIET)
    theta, f, _ = vqe_retraining(Z_TASK, ry, [0.3], cfg)
    ref_theta, ref_f = hand_iterate_cos(0.3, 10)
    assert theta[0] == pytest.approx(ref_theta, abs=1e-12)
    assert f == pytest.approx(ref_f, abs=1e-12)
    # the iterates straddle pi, so ten steps land near -0.985; more steps reach -1
    _, f, reason = vqe_retraining(Z_TASK, ry, [0.3], cfg.replace(n_i3=200))
    assert f == pytest.approx(-1.0, abs=1e-3) and reason == "converged"
    theta, f, reason = vqe_retraining(Z_TASK, ry, [0.3], cfg.replace(n_i3=0))
    assert theta.tolist() == [0.3] and reason == "max-iterations"
    led = QuantumCostLedger()
    ctx = _Context(Z_TASK, cfg, led)
    theta, f, reason = vqe_retraining(Z_TASK, AnsatzPath.empty(1, 1), [], cfg, ctx)
    assert reason == "no-parameters" and led.evaluations == 1


def test_retraining_never_increases_cost():
    rng = np.random.default_rng(0)
    space = SearchSpace(3, 3)
    cfg = GsaConfig(**QUIET)
    for _ in range(10):
        p = space.sample(rng)
        th = rng.uniform(-np.pi, np.pi, p.num_params)
        f0 = Evaluator(TFIM3).cost(p, th)
        _, f, _ = vqe_retraining(TFIM3, p, th, cfg)
        assert f <= f0 + 1e-12


def test_alternate_refills_when_everything_is_eliminated():
    # with a huge xi every survivor counts as converged and is eliminated
    cfg = GsaConfig(seed=1, xi=1e6, n_i2=3, n_t2=10, n_i0=1, n_i1=1, **QUIET)
    space = make_space(3, cfg)
    rng = np.random.default_rng(1)
    ctx = _Context(TFIM3, cfg)
    pool, tree, _ = pool_training(TFIM3, space, cfg, rng, ctx)
    path, theta, f, reason = alternate_training(TFIM3, space, pool, tree, cfg, rng, ctx)
    assert reason == "max-generations"
    assert check_constraints(path).ok and np.isfinite(f)


def test_alternate_best_stable_termination():
    cfg = GsaConfig(seed=2, n_t2=4, n_i2=500, **QUIET)
    rec = run_gsa(TFIM3, cfg)
    assert rec.termination["alternate"] == "best-stable"


def test_trace_monotone_and_final_cost():
    rec = run_gsa(TFIM4, GsaConfig(seed=0, **QUIET))
    costs = [c for _, c, _ in rec.trace]
    qcs = [q for q, _, _ in rec.trace]
    assert all(b <= a for a, b in zip(costs, costs[1:]))
    assert all(b >= a for a, b in zip(qcs, qcs[1:]))
    assert rec.cost == min(costs)
    assert qcs[-1] == rec.quantum_cost


def test_run_is_deterministic_and_additive():
    a = run_gsa(TFIM3, GsaConfig(seed=7))
    b = run_gsa(TFIM3, GsaConfig(seed=7))
    assert a.to_json() == b.to_json()
    assert sum(a.stage_costs.values()) == a.quantum_cost
    assert set(a.stage_costs) <= {"pool", "alternate", "retrain"}


def test_output_path_is_valid_and_error_consistent():
    rec = run_gsa(TFIM3, GsaConfig(seed=4, **QUIET))
    path = AnsatzPath.from_text(rec.path, 3)
    assert check_constraints(path).ok and len(rec.params) == path.num_params
    assert Evaluator(TFIM3).cost(path, rec.params) == pytest.approx(rec.cost, abs=1e-12)
    assert rec.abs_error == pytest.approx(abs(rec.cost - rec.exact))
    assert rec.cost >= rec.exact - 1e-12


def test_record_json_round_trip():
    rec = run_gsa(TFIM3, GsaConfig(seed=5, n_i2=3, **QUIET))
    back = RunRecord.from_json(rec.to_json())
    assert dataclasses.asdict(back) == dataclasses.asdict(rec)
    lines = rec.trace_csv().splitlines()
    assert lines[0] == "quantum_cost,best_cost_so_far,stage" and len(lines) == len(rec.trace) + 1


def test_mse_examples():
    assert mse([-1.0, -1.0], -1.0) == 0.0
    assert mse([-0.9, -1.1], -1.0) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        mse([], -1.0)


def test_enumerated_space_option():
    cfg = GsaConfig(seed=0, n_layers=1, enumerate_space=True, genetic_ops=False,
                    n_i2=5, **QUIET)
    rec = run_gsa(TaskSpec.ground_state(tfim(2)), cfg)
    assert rec.exact_sampling and np.isfinite(rec.cost)
