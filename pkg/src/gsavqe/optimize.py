"""Cost evaluation, parameter-shift gradients and backtracking gradient descent.

Every full evaluation of the cost counts once on a :class:`QuantumCostLedger`;
a gradient therefore costs ``2 * len(params)`` and each Armijo trial costs 1.
"""
from __future__ import annotations

import threading
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import kernels
from .hamiltonian import WRAPPERS, TaskSpec
from .sim import CNOT, NOISELESS, NoiseSpec, _KIND_CODE

SHIFT = np.pi / 2


class QuantumCostLedger:
    """Thread-safe monotone counter of cost evaluations, split by stage.

    With ``record_events`` every increment is appended to ``events`` as
    ``(stage, tag, amount)`` so totals can be audited after the fact.
    """

    def __init__(self, record_events=False):
        self._lock = threading.Lock()
        self.evaluations = 0
        self.stage = "main"
        self.by_stage: Dict[str, int] = Counter()
        self.record_events = record_events
        self.events: List[Tuple[str, str, int]] = []

    def add(self, amount=1, tag="cost"):
        if amount < 0:
            raise ValueError("ledger increments must be non-negative")
        with self._lock:
            self.evaluations += amount
            self.by_stage[self.stage] += amount
            if self.record_events:
                self.events.append((self.stage, tag, amount))

    def set_stage(self, stage):
        with self._lock:
            self.stage = stage

    def __int__(self):
        return self.evaluations

    def __repr__(self):
        return f"QuantumCostLedger({self.evaluations})"


@dataclass(frozen=True)
class LineSearchConfig:
    alpha0: float = 5.0
    c1: float = 1e-4
    shrink: float = 0.618
    max_backtracks: int = 30

    def __post_init__(self):
        if not 0 < self.c1 < 1:
            raise ValueError("c1 must lie in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if self.alpha0 <= 0:
            raise ValueError("alpha0 must be positive")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be at least 1")


@dataclass(frozen=True)
class StepResult:
    params: np.ndarray
    alpha: float
    cost: float
    trials: int


class CompiledCircuit:
    """Kernel op table for a path; ``slots[k]`` is the parameter index of op k or -1."""

    __slots__ = ("ops", "slots", "num_params")

    def __init__(self, gates_of_path, n):
        gates = gates_of_path
        self.ops = np.zeros((len(gates), 3), dtype=np.int32)
        self.slots = np.full(len(gates), -1, dtype=np.int64)
        k = 0
        for i, g in enumerate(gates):
            g.validate(n)
            if g.kind == CNOT:
                self.ops[i] = (2, g.control, g.target)
            else:
                self.ops[i] = (_KIND_CODE[g.kind], g.target, 0)
                self.slots[i] = k
                k += 1
        self.num_params = k

    def angles(self, params):
        out = np.zeros(len(self.slots))
        mask = self.slots >= 0
        out[mask] = params[self.slots[mask]]
        return out


class Evaluator:
    """Binds a task, a noise model and a ledger; evaluates paths with caching.

    Any object exposing ``gates(params)``, ``num_params`` and hashing by
    structure works as a path.
    """

    def __init__(self, task: TaskSpec, noise: NoiseSpec = NOISELESS,
                 ledger: Optional[QuantumCostLedger] = None):
        self.task = task
        self.noise = noise
        self.ledger = ledger if ledger is not None else QuantumCostLedger()
        self.n = task.n
        self._cache: Dict[object, CompiledCircuit] = {}
        self._terms = [
            (
                np.ascontiguousarray(t.observable.matrix(), dtype=complex),
                t.input_state.data,
                WRAPPERS[t.wrapper],
            )
            for t in task.terms
        ]

    def compile(self, path) -> CompiledCircuit:
        cc = self._cache.get(path)
        if cc is None:
            n_par = path.num_params
            cc = CompiledCircuit(path.gates(np.zeros(n_par)), self.n)
            if len(self._cache) > 200_000:
                self._cache.clear()
            self._cache[path] = cc
        return cc

    def _check(self, path, params):
        params = np.asarray(params, dtype=float).ravel()
        if params.size != path.num_params:
            raise ValueError(
                f"path takes {path.num_params} parameters, got {params.size}"
            )
        return params

    def raw_cost(self, cc: CompiledCircuit, params, tag="cost"):
        angles = cc.angles(params)
        p1, p2 = self.noise.rates
        total = 0.0
        for obs, rho0, wrap in self._terms:
            rho = np.array(rho0, dtype=complex, order="C")
            if len(cc.ops):
                kernels.active.dm_run(rho, self.n, cc.ops, angles, p1, p2)
            total += wrap(float(kernels.active.dm_expectation(rho, obs).real))
        self.ledger.add(1, tag)
        return total

    def cost(self, path, params, tag="cost") -> float:
        params = self._check(path, params)
        return self.raw_cost(self.compile(path), params, tag)

    def gradient(self, path, params, tag="grad") -> np.ndarray:
        params = self._check(path, params)
        cc = self.compile(path)
        grad = np.zeros(params.size)
        work = params.copy()
        for k in range(params.size):
            work[k] = params[k] + SHIFT
            plus = self.raw_cost(cc, work, tag)
            work[k] = params[k] - SHIFT
            minus = self.raw_cost(cc, work, tag)
            work[k] = params[k]
            grad[k] = 0.5 * (plus - minus)
        return grad

    def line_search_step(self, path, params, grad, f0=None,
                         cfg: LineSearchConfig = LineSearchConfig(),
                         tag="armijo") -> StepResult:
        """One Armijo backtracking step along ``-grad`` starting from ``cfg.alpha0``.

        ``f0`` is the cost at ``params``; it is evaluated (and counted) when
        not supplied.  On exhaustion the parameters come back unchanged with
        ``alpha = 0``.
        """
        params = self._check(path, params)
        grad = np.asarray(grad, dtype=float)
        cc = self.compile(path)
        if f0 is None:
            f0 = self.raw_cost(cc, params, "cost")
        gg = float(grad @ grad)
        alpha = cfg.alpha0
        for trial in range(1, cfg.max_backtracks + 1):
            cand = params - alpha * grad
            f = self.raw_cost(cc, cand, tag)
            if f <= f0 - cfg.c1 * alpha * gg:
                return StepResult(cand, alpha, f, trial)
            alpha *= cfg.shrink
        return StepResult(params.copy(), 0.0, f0, cfg.max_backtracks)


def normalized_gradient_magnitude(grad, num_params) -> float:
    if num_params == 0:
        return 0.0
    return float(np.linalg.norm(grad)) / num_params


def cost(task, path, params, noise=NOISELESS, ledger=None) -> float:
    return Evaluator(task, noise, ledger).cost(path, params)


def gradient(task, path, params, noise=NOISELESS, ledger=None) -> np.ndarray:
    return Evaluator(task, noise, ledger).gradient(path, params)


def line_search_step(task, path, params, grad, cfg=LineSearchConfig(),
                     noise=NOISELESS, ledger=None, f0=None) -> Tuple[np.ndarray, float]:
    res = Evaluator(task, noise, ledger).line_search_step(path, params, grad, f0, cfg)
    return res.params, res.alpha
