"""Pure numpy implementation of the circuit kernels.

Same contract as the compiled ``_ckernels`` module: every function mutates its
array argument in place.  Qubit 0 is the most significant bit of an index.
"""
import numpy as np

RY, RZ, CNOT = 0, 1, 2


def _gate_matrix(kind, theta):
    c, s = np.cos(0.5 * theta), np.sin(0.5 * theta)
    if kind == RY:
        return np.array([[c, -s], [s, c]], dtype=complex)
    return np.array([[c - 1j * s, 0], [0, c + 1j * s]], dtype=complex)


def _split(n, q):
    return 1 << q, 2, 1 << (n - 1 - q)


def _dm_1q(rho, n, q, u):
    lo, _, hi = _split(n, q)
    t = rho.reshape(lo, 2, hi, lo, 2, hi)
    t[...] = np.einsum("ab,ibjklm->iajklm", u, t)
    t[...] = np.einsum("iajkbm,cb->iajkcm", t, u.conj())


def _cnot_perm(n, c, t):
    idx = np.arange(1 << n)
    cbit = 1 << (n - 1 - c)
    tbit = 1 << (n - 1 - t)
    return np.where(idx & cbit, idx ^ tbit, idx)


def _dm_depolarize(rho, n, q, p):
    lo, _, hi = _split(n, q)
    t = rho.reshape(lo, 2, hi, lo, 2, hi)
    a = t[:, 0, :, :, 0, :].copy()
    d = t[:, 1, :, :, 1, :].copy()
    t[:, 0, :, :, 0, :] = (1 - 2 * p / 3) * a + (2 * p / 3) * d
    t[:, 1, :, :, 1, :] = (1 - 2 * p / 3) * d + (2 * p / 3) * a
    t[:, 0, :, :, 1, :] *= 1 - 4 * p / 3
    t[:, 1, :, :, 0, :] *= 1 - 4 * p / 3


def dm_run(rho, n, ops, angles, p1=0.0, p2=0.0):
    for (kind, a, b), theta in zip(ops, angles):
        if kind == CNOT:
            perm = _cnot_perm(n, a, b)
            rho[...] = rho[np.ix_(perm, perm)]
            if p2 > 0:
                _dm_depolarize(rho, n, a, p2)
                _dm_depolarize(rho, n, b, p2)
        else:
            _dm_1q(rho, n, a, _gate_matrix(kind, theta))
            if p1 > 0:
                _dm_depolarize(rho, n, a, p1)


def sv_run(psi, n, ops, angles):
    for (kind, a, b), theta in zip(ops, angles):
        if kind == CNOT:
            psi[...] = psi[_cnot_perm(n, a, b)]
        else:
            lo, _, hi = _split(n, a)
            t = psi.reshape(lo, 2, hi)
            t[...] = np.einsum("ab,ibj->iaj", _gate_matrix(kind, theta), t)


def dm_expectation(rho, obs):
    return np.einsum("ij,ji->", obs, rho)
