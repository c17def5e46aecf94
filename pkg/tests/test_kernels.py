import numpy as np
import pytest

from gsavqe import _pykernels, kernels
from gsavqe.sim import compile_gates

import oracles


def test_python_backend_always_available():
    assert "python" in kernels.available()


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


def test_use_backend_returns_previous():
    prev = kernels.use_backend("python")
    try:
        assert kernels.name == "python" and kernels.active is _pykernels
    finally:
        kernels.use_backend(prev)
    assert kernels.name == prev


@pytest.mark.skipif("cython" not in kernels.available(), reason="extension not built")
def test_backends_agree():
    rng = np.random.default_rng(0)
    c = kernels.BACKENDS["cython"]
    for n in (1, 2, 3, 5):
        gates = oracles.random_gates(rng, n, 40)
        ops, angles = compile_gates(gates, n)
        rho0 = np.zeros((1 << n, 1 << n), dtype=complex)
        rho0[0, 0] = 1
        a, b = rho0.copy(), rho0.copy()
        _pykernels.dm_run(a, n, ops, angles, 0.01, 0.05)
        c.dm_run(b, n, ops, angles, 0.01, 0.05)
        np.testing.assert_allclose(a, b, atol=1e-13)
        psi = np.zeros(1 << n, dtype=complex)
        psi[0] = 1
        pa, pb = psi.copy(), psi.copy()
        _pykernels.sv_run(pa, n, ops, angles)
        c.sv_run(pb, n, ops, angles)
        np.testing.assert_allclose(pa, pb, atol=1e-13)
        obs = np.ascontiguousarray(oracles.pauli_word("Z" * n))
        assert c.dm_expectation(a, obs) == pytest.approx(_pykernels.dm_expectation(a, obs))
