import numpy as np
import pytest
import scipy.linalg
import scipy.optimize
from hypothesis import given, settings
from hypothesis import strategies as st

from gsavqe.hamiltonian import (HamiltonianError, PauliSum, TaskSpec, builtin_hamiltonian,
                                exact_ground_energy, heisenberg, load_hamiltonian,
                                parse_builtin, parse_hamiltonian, serialize_hamiltonian, tfim)

import oracles

words = st.integers(1, 4).flatmap(
    lambda n: st.lists(
        st.tuples(st.floats(-3, 3, allow_nan=False), st.text("IXYZ", min_size=n, max_size=n)),
        min_size=1, max_size=8,
    ).map(lambda ts: (n, ts))
)


def test_parse_three_terms():
    h = parse_hamiltonian("1.0 ZZ\n0.5 XI\n0.5 IX")
    assert h.n == 2 and len(h) == 3
    assert h.as_dict() == {"ZZ": 1.0, "XI": 0.5, "IX": 0.5}


def test_parse_cancelling_terms():
    h = parse_hamiltonian("1.0 ZZ\n-1.0 ZZ")
    assert len(h) == 0 and h.n == 2


def test_parse_reports_line():
    with pytest.raises(HamiltonianError, match="line 1"):
        parse_hamiltonian("1.0 ZQ")
    with pytest.raises(HamiltonianError, match="line 2"):
        parse_hamiltonian("1.0 ZZ\nabc ZZ")
    with pytest.raises(HamiltonianError, match="line 2"):
        parse_hamiltonian("1.0 ZZ\n1.0 ZZZ")
    with pytest.raises(HamiltonianError):
        parse_hamiltonian("# only a comment\n")


def test_comments_and_case():
    h = parse_hamiltonian("# header\n  2.5 zx  # trailing\n\n")
    assert h.as_dict() == {"ZX": 2.5}


@settings(max_examples=60, deadline=None)
@given(words)
def test_serialize_round_trip(nt):
    n, terms = nt
    h = PauliSum(n, terms)
    if len(h):
        assert parse_hamiltonian(serialize_hamiltonian(h)).as_dict() == h.as_dict()


@settings(max_examples=60, deadline=None)
@given(words)
def test_matrix_matches_kron_oracle(nt):
    n, terms = nt
    h = PauliSum(n, terms)
    ref = oracles.pauli_sum(terms) if terms else 0
    np.testing.assert_allclose(h.matrix(), ref + np.zeros((1 << n, 1 << n)), atol=1e-12)


def test_ground_energy_of_z():
    assert exact_ground_energy(PauliSum(1, [(1.0, "Z")])) == pytest.approx(-1.0)


def test_ground_energy_matches_variational_search():
    h = PauliSum(2, [(1.0, "ZZ"), (0.5, "XI"), (0.5, "IX")])
    e = exact_ground_energy(h)
    M = oracles.pauli_sum(h.terms)
    assert e == pytest.approx(scipy.linalg.eigh(M, eigvals_only=True, driver="ev")[0], abs=1e-12)

    def energy(a):
        # real amplitudes suffice: H is real symmetric
        v = np.array([np.cos(a[0]), np.sin(a[0]) * np.cos(a[1]),
                      np.sin(a[0]) * np.sin(a[1]) * np.cos(a[2]),
                      np.sin(a[0]) * np.sin(a[1]) * np.sin(a[2])])
        return float(v @ M.real @ v)

    grid = np.linspace(0, np.pi, 13)
    starts = [(a, b, c) for a in grid for b in grid for c in np.linspace(0, 2 * np.pi, 13)]
    best = min(starts, key=energy)
    res = scipy.optimize.minimize(energy, best, method="BFGS", options={"gtol": 1e-12})
    assert res.fun == pytest.approx(e, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(words, st.floats(0.01, 10))
def test_ground_energy_scales_linearly(nt, c):
    n, terms = nt
    h = PauliSum(n, terms)
    if not len(h):
        return
    assert exact_ground_energy(h.scaled(c)) == pytest.approx(c * exact_ground_energy(h),
                                                            rel=1e-12, abs=1e-12)


def test_ground_energy_random_four_qubit_vs_second_solver():
    rng = np.random.default_rng(0)
    for _ in range(10):
        terms = [(float(rng.normal()), "".join(rng.choice(list("IXYZ"), 4))) for _ in range(12)]
        h = PauliSum(4, terms)
        M = oracles.pauli_sum(h.terms)
        ref = scipy.linalg.eigh(M, eigvals_only=True, driver="evx", subset_by_index=[0, 0])[0]
        assert exact_ground_energy(h) == pytest.approx(ref, abs=1e-9)


def test_tfim_and_heisenberg_shapes():
    h = tfim(2, 0.0)
    assert h.as_dict() == {"ZZ": -1.0}
    assert exact_ground_energy(h) == pytest.approx(-1.0)
    assert len(tfim(4, 1.0)) == 8
    assert len(heisenberg(3)) == 9


def test_builtin_parsing():
    assert parse_builtin("tfim:4:1.0").as_dict() == tfim(4, 1.0).as_dict()
    assert parse_builtin("heisenberg:3").as_dict() == heisenberg(3).as_dict()
    for bad in ("tfim", "nope:3", "tfim:x", "tfim:1"):
        with pytest.raises(HamiltonianError):
            parse_builtin(bad)
    assert builtin_hamiltonian("tfim", 3, [0.5]).as_dict()["XII"] == -0.5


def test_load_missing_file(tmp_path):
    with pytest.raises(HamiltonianError, match="nope.txt"):
        load_hamiltonian(tmp_path / "nope.txt")


def test_invalid_sums():
    with pytest.raises(HamiltonianError):
        PauliSum(2, [(1.0, "Z")])
    with pytest.raises(HamiltonianError):
        PauliSum(1, [(float("nan"), "Z")])
    with pytest.raises(HamiltonianError):
        PauliSum(1, [(1.0, "Z")]) + PauliSum(2, [(1.0, "ZZ")])


def test_task_spec():
    task = TaskSpec.ground_state(tfim(3))
    assert task.n == 3 and task.hamiltonian.n == 3
    with pytest.raises(HamiltonianError):
        TaskSpec(())
