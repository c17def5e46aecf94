"""Real Pauli-sum observables: parsing, built-in models and exact ground energies.

File format: one ``<coefficient> <word>`` term per line, ``#`` starts a
comment, blank lines are skipped.  Words use the letters I, X, Y, Z, with
the leftmost letter acting on qubit 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Iterable, Sequence, Tuple

import numpy as np

from .sim import DensityMatrix

ORACLE_MAX_QUBITS = 12
_LETTERS = frozenset("IXYZ")


class HamiltonianError(ValueError):
    pass


@dataclass(frozen=True)
class PauliSum:
    n: int
    terms: Tuple[Tuple[float, str], ...] = ()

    def __post_init__(self):
        merged: Dict[str, float] = {}
        for coeff, word in self.terms:
            if len(word) != self.n:
                raise HamiltonianError(f"word {word!r} does not have length {self.n}")
            if not set(word) <= _LETTERS:
                raise HamiltonianError(f"word {word!r} has letters outside IXYZ")
            coeff = float(coeff)
            if not math.isfinite(coeff):
                raise HamiltonianError(f"non-finite coefficient for {word!r}")
            merged[word] = merged.get(word, 0.0) + coeff
        object.__setattr__(
            self, "terms", tuple((c, w) for w, c in merged.items() if c != 0.0)
        )

    def __len__(self):
        return len(self.terms)

    def scaled(self, c):
        return PauliSum(self.n, tuple((c * a, w) for a, w in self.terms))

    def __add__(self, other):
        if other.n != self.n:
            raise HamiltonianError("qubit counts differ")
        return PauliSum(self.n, self.terms + other.terms)

    def as_dict(self):
        return {w: c for c, w in self.terms}

    def matrix(self):
        return self._matrix

    @cached_property
    def _matrix(self):
        if self.n > ORACLE_MAX_QUBITS:
            raise HamiltonianError(
                f"{self.n} qubits exceeds the dense limit of {ORACLE_MAX_QUBITS}"
            )
        dim = 1 << self.n
        out = np.zeros((dim, dim), dtype=complex)
        cols = np.arange(dim)
        for coeff, word in self.terms:
            rows, vals = _pauli_action(word, cols)
            out[rows, cols] += coeff * vals
        out.flags.writeable = False
        return out


def _pauli_action(word, cols):
    """P|j> = vals[j] |rows[j]> for the Pauli word P."""
    n = len(word)
    xmask = zmask = 0
    ny = 0
    for q, ch in enumerate(word):
        bit = 1 << (n - 1 - q)
        if ch in "XY":
            xmask |= bit
        if ch in "ZY":
            zmask |= bit
        ny += ch == "Y"
    parity = np.zeros(cols.shape, dtype=np.int64)
    masked = cols & zmask
    while masked.any():
        parity ^= masked & 1
        masked = masked >> 1
    vals = (1j ** ny) * (1 - 2 * parity)
    return cols ^ xmask, vals


def parse_hamiltonian(text: str | Iterable[str]) -> PauliSum:
    lines = text.splitlines() if isinstance(text, str) else list(text)
    terms = []
    n = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise HamiltonianError(f"line {lineno}: expected '<coefficient> <word>'")
        try:
            coeff = float(parts[0])
        except ValueError:
            raise HamiltonianError(
                f"line {lineno}: coefficient {parts[0]!r} is not a real number"
            ) from None
        if not math.isfinite(coeff):
            raise HamiltonianError(f"line {lineno}: non-finite coefficient")
        word = parts[1].upper()
        if not set(word) <= _LETTERS:
            raise HamiltonianError(f"line {lineno}: invalid Pauli word {parts[1]!r}")
        if n is None:
            n = len(word)
        elif len(word) != n:
            raise HamiltonianError(
                f"line {lineno}: word length {len(word)} differs from {n}"
            )
        terms.append((coeff, word))
    if n is None:
        raise HamiltonianError("no terms found")
    return PauliSum(n, tuple(terms))


def load_hamiltonian(path) -> PauliSum:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_hamiltonian(fh.read())
    except OSError as exc:
        raise HamiltonianError(f"cannot read Hamiltonian file {path}: {exc}") from exc


def serialize_hamiltonian(h: PauliSum) -> str:
    return "".join(f"{c!r} {w}\n" for c, w in h.terms)


def _bonds(n):
    return [(0, 1)] if n == 2 else [(q, (q + 1) % n) for q in range(n)]


def _word(n, sites):
    chars = ["I"] * n
    for q, ch in sites:
        chars[q] = ch
    return "".join(chars)


def tfim(n, g=1.0, J=1.0) -> PauliSum:
    """-J sum Z_q Z_{q+1} - g sum X_q on a ring (a single bond when n = 2)."""
    terms = [(-J, _word(n, [(a, "Z"), (b, "Z")])) for a, b in _bonds(n)]
    terms += [(-g, _word(n, [(q, "X")])) for q in range(n)]
    return PauliSum(n, tuple((c, w) for c, w in terms if c != 0.0))


def heisenberg(n, J=1.0) -> PauliSum:
    """J sum (XX + YY + ZZ) over ring bonds."""
    terms = [
        (J, _word(n, [(a, p), (b, p)])) for a, b in _bonds(n) for p in "XYZ"
    ]
    return PauliSum(n, tuple(terms))


BUILTINS: Dict[str, Callable[..., PauliSum]] = {"tfim": tfim, "heisenberg": heisenberg}


def builtin_hamiltonian(name, n, params: Sequence[float] = ()) -> PauliSum:
    if name not in BUILTINS:
        raise HamiltonianError(f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}")
    if n < 2:
        raise HamiltonianError("built-in models need n >= 2")
    return BUILTINS[name](n, *params)


def parse_builtin(spec: str) -> PauliSum:
    """Parse ``name:n[:p1,p2,...]``, e.g. ``tfim:4:1.0``."""
    parts = spec.split(":")
    if len(parts) not in (2, 3):
        raise HamiltonianError(f"builtin spec {spec!r} should look like tfim:4:1.0")
    try:
        n = int(parts[1])
        params = [float(x) for x in parts[2].split(",")] if len(parts) == 3 and parts[2] else []
    except ValueError:
        raise HamiltonianError(f"bad numbers in builtin spec {spec!r}") from None
    return builtin_hamiltonian(parts[0], n, params)


def exact_ground_energy(h: PauliSum) -> float:
    if h.n > ORACLE_MAX_QUBITS:
        raise HamiltonianError(
            f"{h.n} qubits exceeds the dense limit of {ORACLE_MAX_QUBITS}"
        )
    return float(np.linalg.eigvalsh(h.matrix())[0])


# task tuples ---------------------------------------------------------------

WRAPPERS: Dict[str, Callable[[float], float]] = {"identity": lambda x: x}


@dataclass(frozen=True)
class TaskTerm:
    observable: PauliSum
    input_state: DensityMatrix
    wrapper: str = "identity"


@dataclass(frozen=True)
class TaskSpec:
    terms: Tuple[TaskTerm, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise HamiltonianError("a task needs at least one term")
        ns = {t.observable.n for t in self.terms} | {t.input_state.n for t in self.terms}
        if len(ns) != 1:
            raise HamiltonianError(f"task terms disagree on qubit count: {sorted(ns)}")
        for t in self.terms:
            if t.wrapper not in WRAPPERS:
                raise HamiltonianError(f"unknown wrapper {t.wrapper!r}")

    @classmethod
    def ground_state(cls, h: PauliSum):
        """Single observable, |0...0> input, identity wrapper."""
        return cls((TaskTerm(h, DensityMatrix.zero(h.n)),))

    @property
    def n(self):
        return self.terms[0].observable.n

    @property
    def hamiltonian(self):
        return self.terms[0].observable
