"""Dense density-matrix and statevector simulation of the {Ry, Rz, CNOT} gate set.

Qubits are indexed from 0 (leftmost tensor factor, most significant bit).
CNOTs are restricted to the directed ring ``control -> (control + 1) % n``.
Depolarizing noise follows each gate when a :class:`NoiseSpec` is enabled:
``p1`` on the acted qubit after a rotation, ``p2`` independently on control
and target after a CNOT.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels

MAX_QUBITS = 8

RY, RZ, CNOT = "Ry", "Rz", "CNOT"
_KIND_CODE = {RY: 0, RZ: 1, CNOT: 2}


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    kind: str
    target: int
    control: Optional[int] = None
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in _KIND_CODE:
            raise SimulationError(f"unknown gate kind {self.kind!r}")
        if self.kind == CNOT and self.control is None:
            raise SimulationError("CNOT needs a control qubit")
        if self.kind != CNOT and self.control is not None:
            raise SimulationError(f"{self.kind} takes no control qubit")

    @property
    def qubits(self):
        if self.kind == CNOT:
            return (self.control, self.target)
        return (self.target,)

    def validate(self, n):
        for q in self.qubits:
            if not 0 <= q < n:
                raise SimulationError(f"qubit {q} out of range for n={n}")
        if self.kind == CNOT and self.target != (self.control + 1) % n:
            raise SimulationError(
                f"CNOT({self.control},{self.target}) is not a ring edge for n={n}"
            )


@dataclass(frozen=True)
class NoiseSpec:
    p1: float = 0.001
    p2: float = 0.01
    enabled: bool = True

    def __post_init__(self):
        for p in (self.p1, self.p2):
            if not 0.0 <= p <= 1.0:
                raise SimulationError(f"depolarizing probability {p} not in [0, 1]")

    @property
    def rates(self):
        return (self.p1, self.p2) if self.enabled else (0.0, 0.0)


NOISELESS = NoiseSpec(enabled=False)


class DensityMatrix:
    """Immutable ``2**n x 2**n`` density matrix."""

    __slots__ = ("n", "data")

    def __init__(self, n, data):
        data = np.ascontiguousarray(data, dtype=complex)
        if data.shape != (1 << n, 1 << n):
            raise SimulationError(f"density matrix shape {data.shape} does not match n={n}")
        data.flags.writeable = False
        self.n = n
        self.data = data

    @classmethod
    def zero(cls, n):
        _check_n(n)
        rho = np.zeros((1 << n, 1 << n), dtype=complex)
        rho[0, 0] = 1.0
        return cls(n, rho)

    @classmethod
    def basis(cls, bits):
        """``|bits><bits|`` for a string such as ``"0110"``."""
        n = len(bits)
        _check_n(n)
        i = int(bits, 2)
        rho = np.zeros((1 << n, 1 << n), dtype=complex)
        rho[i, i] = 1.0
        return cls(n, rho)

    @classmethod
    def maximally_mixed(cls, n):
        _check_n(n)
        return cls(n, np.eye(1 << n, dtype=complex) / (1 << n))

    @classmethod
    def from_statevector(cls, psi):
        psi = np.asarray(psi, dtype=complex)
        n = int(psi.size).bit_length() - 1
        return cls(n, np.outer(psi, psi.conj()))

    def copy_data(self):
        return np.array(self.data, dtype=complex, order="C")

    def check(self, atol=1e-10):
        """Raise if the matrix is not Hermitian, unit-trace and PSD within ``atol``."""
        rho = self.data
        herm = np.abs(rho - rho.conj().T).max()
        if herm > atol:
            raise SimulationError(f"not Hermitian (deviation {herm:.3g})")
        tr = np.trace(rho)
        if abs(tr - 1) > atol:
            raise SimulationError(f"trace {tr} differs from 1")
        low = np.linalg.eigvalsh(rho).min()
        if low < -atol:
            raise SimulationError(f"negative eigenvalue {low:.3g}")
        return True

    def __eq__(self, other):
        return (
            isinstance(other, DensityMatrix)
            and self.n == other.n
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self):
        return f"DensityMatrix(n={self.n})"


def _check_n(n):
    if not 1 <= n <= MAX_QUBITS:
        raise SimulationError(f"qubit count {n} outside [1, {MAX_QUBITS}]")


def compile_gates(gates: Sequence[Gate], n):
    """Encode gates as the ``(ops, angles)`` arrays the kernels consume."""
    ops = np.zeros((len(gates), 3), dtype=np.int32)
    angles = np.zeros(len(gates), dtype=float)
    for k, g in enumerate(gates):
        g.validate(n)
        if g.kind == CNOT:
            ops[k] = (2, g.control, g.target)
        else:
            ops[k] = (_KIND_CODE[g.kind], g.target, 0)
            angles[k] = g.angle
    return ops, angles


def evolve(rho: DensityMatrix, ops, angles, noise: NoiseSpec = NOISELESS):
    """Run pre-compiled ops on a copy of ``rho``; returns a new DensityMatrix."""
    data = rho.copy_data()
    p1, p2 = noise.rates
    kernels.active.dm_run(data, rho.n, ops, np.ascontiguousarray(angles, dtype=float), p1, p2)
    return DensityMatrix(rho.n, data)


def evolve_statevector(psi, n, ops, angles):
    psi = np.array(psi, dtype=complex, order="C")
    kernels.active.sv_run(psi, n, ops, np.ascontiguousarray(angles, dtype=float))
    return psi


def apply_gate(state: DensityMatrix, gate: Gate, noise: NoiseSpec = NOISELESS):
    ops, angles = compile_gates([gate], state.n)
    return evolve(state, ops, angles, noise)


def apply_gates(state: DensityMatrix, gates: Sequence[Gate], noise: NoiseSpec = NOISELESS):
    ops, angles = compile_gates(gates, state.n)
    return evolve(state, ops, angles, noise)


def zero_statevector(n):
    psi = np.zeros(1 << n, dtype=complex)
    psi[0] = 1.0
    return psi


def expectation(state: DensityMatrix, observable, atol=1e-10):
    """Tr[O rho] for a :class:`~gsavqe.hamiltonian.PauliSum` or a dense matrix."""
    obs = observable.matrix() if hasattr(observable, "matrix") else np.asarray(observable)
    if obs.shape != state.data.shape:
        raise SimulationError(
            f"observable of shape {obs.shape} does not act on {state.n} qubits"
        )
    val = kernels.active.dm_expectation(state.data, np.ascontiguousarray(obs, dtype=complex))
    if abs(val.imag) > atol * max(1.0, abs(val.real)):
        raise SimulationError(f"expectation has imaginary part {val.imag:.3g}")
    return float(val.real)


def statevector_expectation(psi, observable):
    obs = observable.matrix() if hasattr(observable, "matrix") else np.asarray(observable)
    return float(np.real(np.vdot(psi, obs @ psi)))


def run_circuit(path, params, rho: DensityMatrix, noise: NoiseSpec = NOISELESS):
    """Apply every gate of ``path`` (anything with ``.gates(params)``) to ``rho``."""
    gates = path.gates(params)
    if not gates:
        return rho
    ops, angles = compile_gates(gates, rho.n)
    return evolve(rho, ops, angles, noise)
