import math

import numpy as np
import pytest

from gsavqe.driver import GsaConfig
from gsavqe.hamiltonian import PauliSum, TaskSpec, exact_ground_energy, tfim
from gsavqe.meta import (ENCODINGS, EncodedLayerState, EncodedPath, HamiltonianFamily,
                         MetaEvaluator, MetaSpace, build_hea_meta, encode, meta_cost, profile,
                         run_meta_gsa, run_meta_hea)
from gsavqe.optimize import Evaluator, QuantumCostLedger
from gsavqe.space import LayerState, SearchSpaceError, check_constraints

FAMILY = HamiltonianFamily.builtin("tfim", 2, [0.5, 1.0, 1.5])
QUIET = dict(noise=False)


def fd(ev, path, th, h=1e-5):
    out = np.zeros(th.size)
    for k in range(th.size):
        e = np.zeros(th.size)
        e[k] = h
        out[k] = (ev.cost(path, th + e) - ev.cost(path, th - e)) / (2 * h)
    return out


def test_encoding_formulas():
    assert encode("f1", 0.7, [0.3]) == 0.3
    assert encode("f2", 0.7, [0.3, 0.1]) == pytest.approx(0.3 * 0.7 + 0.1)
    assert encode("f3", 0.7, [0.3, 0.1]) == pytest.approx(0.3 * math.exp(0.7) + 0.1)
    assert ENCODINGS["f3"].dfn(0.7, (0.3, 0.1)) == pytest.approx((math.exp(0.7), 1.0))
    for d in (-1.0, 0.0, 2.0):
        assert encode("f2", d, [0.0, 0.4]) == 0.4  # collapses to gamma


def test_encoded_text_round_trip():
    s = EncodedLayerState(LayerState.from_text("q0:Ry q1:Rz cx:1>2", 3), ("f2", "f3"))
    assert s.to_text() == "q0:Ry/f2 q1:Rz/f3 cx:1>2"
    assert EncodedLayerState.from_text(s.to_text(), 3) == s
    p = EncodedPath((s, EncodedLayerState(LayerState.empty(3), ())))
    assert EncodedPath.from_text(p.to_text(), 3) == p
    assert p.num_params == 4 and p.base.num_params == 2
    with pytest.raises(SearchSpaceError):
        EncodedLayerState(LayerState.from_text("q0:Ry", 2), ())
    with pytest.raises(SearchSpaceError):
        EncodedLayerState(LayerState.from_text("q0:Ry", 2), ("f9",))


@pytest.mark.parametrize("enc", ["f1", "f2", "f3", None])
def test_chain_rule_gradient(enc):
    rng = np.random.default_rng(abs(hash(enc)) % 1000)
    names = ("f1", "f2", "f3") if enc is None else (enc,)
    fam = HamiltonianFamily.builtin("tfim", 3, [0.4, 0.9, 1.3])
    space = MetaSpace(3, 3, encodings=names)
    for _ in range(8):
        p = space.sample(rng)
        th = rng.normal(size=p.num_params)
        ev = MetaEvaluator(fam)
        np.testing.assert_allclose(ev.gradient(p, th), fd(ev, p, th), atol=1e-6)


def test_gradient_ledger_counts_gate_angles():
    led = QuantumCostLedger()
    ev = MetaEvaluator(FAMILY, ledger=led)
    p = EncodedPath.from_text("q0:Ry/f2 q1:Ry/f1\n-", 2)
    ev.gradient(p, np.zeros(p.num_params))
    assert led.evaluations == 2 * 2
    ev.cost(p, np.zeros(3))
    assert led.evaluations == 5


def test_profile_sums_to_meta_cost():
    rng = np.random.default_rng(0)
    space = MetaSpace(2, 3)
    for _ in range(20):
        p = space.sample(rng)
        th = rng.normal(size=p.num_params)
        led = QuantumCostLedger()
        prof = profile(FAMILY, p, th, FAMILY.training, ledger=led)
        assert led.evaluations == len(FAMILY.training)
        total = meta_cost(FAMILY, p, th)
        assert abs(sum(e for _, e in prof) - total) <= 1e-10


def test_f1_family_is_sum_of_plain_costs():
    p = EncodedPath.from_text("q0:Ry/f1 q1:Ry/f1\nq0:Rz/f1 cx:1>0", 2)
    th = np.array([0.3, -0.7, 1.1])
    total = sum(Evaluator(TaskSpec.ground_state(FAMILY.generator(d))).cost(p.base, th)
                for d in FAMILY.training)
    assert meta_cost(FAMILY, p, th) == pytest.approx(total, abs=1e-12)


def test_single_bond_equals_plain_cost():
    fam = HamiltonianFamily.builtin("tfim", 2, [0.8])
    p = EncodedPath.from_text("q0:Ry/f3 q1:Ry/f2\n-", 2)
    th = np.array([0.2, 0.1, 0.5, -0.3])
    angles = p.angles(th, 0.8)
    plain = Evaluator(TaskSpec.ground_state(tfim(2, 0.8))).cost(p.base, angles)
    assert meta_cost(fam, p, th) == pytest.approx(plain, abs=1e-12)


def test_constant_family_profile_is_flat():
    h = PauliSum(2, [(1.0, "ZZ"), (0.5, "XI")])
    fam = HamiltonianFamily(lambda d: h, (0.1, 0.2))
    p = EncodedPath.from_text("q0:Ry/f1 q1:Ry/f1\n-", 2)
    prof = profile(fam, p, [0.3, 0.4], np.linspace(-1, 3, 5))
    vals = [e for _, e in prof]
    assert max(vals) - min(vals) < 1e-12


def test_family_from_file(tmp_path):
    (tmp_path / "a.txt").write_text("-1.0 ZZ\n-0.5 XI\n-0.5 IX\n")
    (tmp_path / "b.txt").write_text("-1.0 ZZ\n-1.0 XI\n-1.0 IX\n")
    spec = tmp_path / "fam.txt"
    spec.write_text("# delta file\n0.5 a.txt\n1.0 b.txt\n")
    fam = HamiltonianFamily.from_file(spec)
    assert fam.training == (0.5, 1.0) and fam.n == 2
    assert fam.generator(1.0).as_dict() == tfim(2, 1.0).as_dict()
    with pytest.raises(ValueError):
        fam.generator(0.7)
    bad = tmp_path / "bad.txt"
    bad.write_text("0.5\n")
    with pytest.raises(ValueError, match="bad.txt:1"):
        HamiltonianFamily.from_file(bad)


def test_meta_space_catalog():
    space = MetaSpace(2, 2)
    # each single-qubit slot is idle, Ry/f*, or Rz/f*: 7 choices, times 3 CNOT sets
    assert space.num_states == 7 ** 2 * 3
    assert len(set(space.states)) == space.num_states
    for j in (0, 5, space.num_states - 1):
        assert space.index[space.states[j]] == j
    assert space.empty_state in space.states


def test_meta_canonicalize_merge_rules():
    space = MetaSpace(2, 2)
    same = EncodedPath.from_text("q0:Ry/f2\nq0:Ry/f2", 2)
    out, th = space.canonicalize(same, [0.1, 0.2, 0.3, 0.4])
    assert out.to_text() == "q0:Ry/f2\n-"
    np.testing.assert_allclose(th, [0.4, 0.6])
    for text, th in (("q0:Ry/f1\nq0:Ry/f3", [0.5, 0.2, 0.3]),
                     ("q0:Ry/f2\nq0:Ry/f3", [0.1, 0.2, 0.3, 0.4])):
        mixed = EncodedPath.from_text(text, 2)
        out, th2 = space.canonicalize(mixed, th)
        assert out == mixed and th2.tolist() == th


def _gate_encoding(layer, q):
    qs = [i for i, k in enumerate(layer.base.single) if k is not None]
    return layer.base.single[q], layer.encodings[qs.index(q)]


def test_meta_canonicalize_preserves_cost():
    rng = np.random.default_rng(1)
    space = MetaSpace(3, 3)
    fam = HamiltonianFamily.builtin("tfim", 3, [0.5, 1.5])
    ev = MetaEvaluator(fam)
    leftovers = 0
    for _ in range(60):
        layers = [space.states[int(rng.integers(space.num_states))] for _ in range(3)]
        raw = EncodedPath(tuple(layers))
        th = rng.normal(size=raw.num_params)
        out, th2 = space.canonicalize(raw, th)
        assert ev.cost(out, th2) == pytest.approx(ev.cost(raw, th), abs=1e-10)
        for v in check_constraints(out.base).violations:
            # only same-axis neighbours with different encodings may remain unfused
            k1, e1 = _gate_encoding(out.layers[v.layer - 1], v.qubit)
            k2, e2 = _gate_encoding(out.layers[v.layer], v.qubit)
            assert k1 == k2 and e1 != e2
            leftovers += 1
        again, th3 = space.canonicalize(out, th2)
        assert again == out and np.array_equal(th3, th2)
    assert leftovers < 60


def test_meta_hea_structure():
    c = build_hea_meta(2, 1, 2)
    assert c.encodings == ("f2",) * 4 + ("f1",) * 8
    assert c.num_params == 16


def test_meta_runs():
    cfg = GsaConfig(seed=0, n_layers=2, n_i2=4, n_i3=3, **QUIET)
    rec = run_meta_gsa(FAMILY, cfg, grid=[0.5, 0.75, 1.0])
    assert len(rec.extra["profile"]) == 3
    exact = [exact_ground_energy(tfim(2, d)) for d in (0.5, 0.75, 1.0)]
    assert [row[2] for row in rec.extra["profile"]] == pytest.approx(exact)
    assert sum(rec.stage_costs.values()) == rec.quantum_cost
    path = EncodedPath.from_text(rec.path, 2)
    assert meta_cost(FAMILY, path, rec.params) == pytest.approx(rec.cost, abs=1e-12)
    hea = run_meta_hea(FAMILY, 1, 1, cfg, max_iters=10)
    assert hea.method == "meta-hea-1-1" and np.isfinite(hea.abs_error)
