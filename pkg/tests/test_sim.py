import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsavqe import kernels
from gsavqe.hamiltonian import PauliSum
from gsavqe.sim import (NOISELESS, DensityMatrix, Gate, NoiseSpec, SimulationError,
                        apply_gate, apply_gates, compile_gates, evolve_statevector, expectation,
                        run_circuit, statevector_expectation, zero_statevector)
from gsavqe.space import AnsatzPath, LayerState

import oracles


@pytest.fixture(params=kernels.available(), autouse=True)
def backend(request):
    prev = kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(prev)


def test_ry_pi_flips_zero():
    rho = apply_gate(DensityMatrix.zero(1), Gate("Ry", 0, angle=np.pi))
    np.testing.assert_allclose(rho.data, DensityMatrix.basis("1").data, atol=1e-12)


def test_maximally_mixed_is_fixed_point():
    rng = np.random.default_rng(0)
    noise = NoiseSpec(0.2, 0.3)
    for n in (2, 3):
        rho = DensityMatrix.maximally_mixed(n)
        out = apply_gates(rho, oracles.random_gates(rng, n, 12), noise)
        np.testing.assert_allclose(out.data, rho.data, atol=1e-12)


def test_depolarized_flip_expectation():
    p1 = 0.001
    rho = apply_gate(DensityMatrix.zero(1), Gate("Ry", 0, angle=np.pi), NoiseSpec(p1, 0.01))
    assert expectation(rho, PauliSum(1, [(1.0, "Z")])) == pytest.approx(-1 + 4 * p1 / 3, abs=1e-12)


def test_basic_expectations():
    rho = DensityMatrix.zero(1)
    assert expectation(rho, PauliSum(1, [(1.0, "Z")])) == pytest.approx(1.0)
    assert expectation(rho, PauliSum(1, [(1.0, "X")])) == pytest.approx(0.0, abs=1e-15)


def test_three_qubit_expectation_matches_dense():
    rng = np.random.default_rng(1)
    h = PauliSum(3, [(0.5, "ZZI"), (0.25, "IXX")])
    dense_h = oracles.pauli_sum([(0.5, "ZZI"), (0.25, "IXX")])
    for _ in range(20):
        gates = oracles.random_gates(rng, 3, 15)
        rho = apply_gates(DensityMatrix.zero(3), gates)
        ref = oracles.dense_run(3, gates)
        assert expectation(rho, h) == pytest.approx(np.trace(dense_h @ ref).real, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 25), st.integers(0, 2**32 - 1),
       st.floats(0, 1), st.floats(0, 1))
def test_noisy_evolution_matches_kraus_oracle(n, count, seed, p1, p2):
    rng = np.random.default_rng(seed)
    gates = oracles.random_gates(rng, n, count)
    rho = apply_gates(DensityMatrix.zero(n), gates, NoiseSpec(p1, p2)) if gates else None
    ref = oracles.dense_run(n, gates, p1=p1, p2=p2)
    if rho is not None:
        np.testing.assert_allclose(rho.data, ref, atol=1e-10)
        rho.check()


def test_empty_path_is_identity():
    rho = DensityMatrix.basis("01")
    assert run_circuit(AnsatzPath.empty(2, 3), [], rho) is rho


def test_single_layer_ry_on_q0():
    path = AnsatzPath((LayerState(("Ry", None)),))
    rho = run_circuit(path, [np.pi], DensityMatrix.zero(2))
    np.testing.assert_allclose(rho.data, DensityMatrix.basis("10").data, atol=1e-12)


def test_statevector_and_density_agree_on_all_paulis():
    rng = np.random.default_rng(2)
    n = 4
    for _ in range(5):
        gates = oracles.random_gates(rng, n, 30)
        ops, angles = compile_gates(gates, n)
        psi = evolve_statevector(zero_statevector(n), n, ops, angles)
        rho = apply_gates(DensityMatrix.zero(n), gates)
        for w in oracles.all_pauli_words(n):
            P = oracles.pauli_word(w)
            assert np.trace(P @ rho.data).real == pytest.approx(
                statevector_expectation(psi, P), abs=1e-10)


def test_statevector_matches_dense_state():
    rng = np.random.default_rng(3)
    gates = oracles.random_gates(rng, 3, 20)
    ops, angles = compile_gates(gates, 3)
    psi = evolve_statevector(zero_statevector(3), 3, ops, angles)
    np.testing.assert_allclose(psi, oracles.dense_state(3, gates), atol=1e-12)


def test_invalid_gates_rejected():
    with pytest.raises(SimulationError):
        Gate("H", 0)
    with pytest.raises(SimulationError):
        Gate("CNOT", 1)
    with pytest.raises(SimulationError):
        compile_gates([Gate("CNOT", 2, control=0)], 3)  # not a ring edge
    with pytest.raises(SimulationError):
        compile_gates([Gate("Ry", 5)], 3)
    with pytest.raises(SimulationError):
        NoiseSpec(p1=1.5)


def test_density_matrix_is_immutable():
    rho = DensityMatrix.zero(2)
    with pytest.raises(ValueError):
        rho.data[0, 0] = 0
    out = apply_gate(rho, Gate("Ry", 0, angle=0.3))
    assert rho.data[0, 0] == 1 and out is not rho


def test_noise_disabled_rates_are_zero():
    assert NOISELESS.rates == (0.0, 0.0)
    assert NoiseSpec(0.1, 0.2).rates == (0.1, 0.2)
