"""Fixed-structure (HEA) and fully random (RND) comparison methods."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .driver import (GsaConfig, RunRecord, _Context, exact_or_none, make_space,
                     vqe_retraining)
from .sim import CNOT, RY, RZ, Gate

# one HEA layer: (kind, qubit) pairs; "ring" expands to CNOT(q, q+1) for all q
DEFAULT_HEA_LAYOUT = ("Ry", "Rz", "ring")


@dataclass(frozen=True)
class FixedAnsatz:
    """Gate template ``(kind, target, control)`` outside the constrained space."""

    n: int
    template: Tuple[Tuple[str, int, Optional[int]], ...]

    @property
    def num_params(self):
        return sum(k != CNOT for k, _, _ in self.template)

    def gates(self, params=()):
        params = np.asarray(params, dtype=float).ravel()
        if params.size != self.num_params:
            raise ValueError(f"ansatz takes {self.num_params} parameters, got {params.size}")
        out, it = [], iter(params)
        for kind, t, c in self.template:
            if kind == CNOT:
                out.append(Gate(CNOT, t, control=c))
            else:
                out.append(Gate(kind, t, angle=float(next(it))))
        return out

    def to_text(self):
        return " ".join(
            f"cx:{c}>{t}" if k == CNOT else f"q{t}:{k}" for k, t, c in self.template
        )

    @property
    def num_cnots(self):
        return sum(k == CNOT for k, _, _ in self.template)


def build_hea(n, layers, layout: Sequence[str] = DEFAULT_HEA_LAYOUT) -> FixedAnsatz:
    """``layers`` repetitions of ``layout``; each entry is Ry, Rz or ring."""
    if layers < 1:
        raise ValueError("HEA needs at least one layer")
    template = []
    for _ in range(layers):
        for item in layout:
            if item in (RY, RZ):
                template += [(item, q, None) for q in range(n)]
            elif item == "ring":
                if n == 1:
                    edges = []
                elif n == 2:
                    edges = [(0, 1), (1, 0)]
                else:
                    edges = [(q, (q + 1) % n) for q in range(n)]
                template += [(CNOT, t, c) for c, t in edges]
            else:
                raise ValueError(f"unknown HEA layout item {item!r}")
    return FixedAnsatz(n, tuple(template))


def _uniform_angles(rng, m):
    # (-pi, pi]
    return np.pi - rng.uniform(0.0, 2 * np.pi, m)


def _descend(ctx, path, theta, f, cfg, max_iters):
    m = path.num_params
    for _ in range(max_iters):
        g = ctx.ev.gradient(path, theta)
        res = ctx.step(path, theta, g, f)
        theta, f = res.params, res.cost
        if m == 0 or res.alpha * np.linalg.norm(g) / m < cfg.xi:
            return theta, f, "converged"
    return theta, f, "max-iterations"


def run_hea(task, layers, cfg: GsaConfig, max_iters=100,
            layout: Sequence[str] = DEFAULT_HEA_LAYOUT) -> RunRecord:
    rng = np.random.default_rng(cfg.seed)
    ansatz = build_hea(task.n, layers, layout)
    ctx = _Context(task, cfg)
    ctx.ledger.set_stage("hea")
    theta = _uniform_angles(rng, ansatz.num_params)
    f = ctx.cost(ansatz, theta)
    theta, f, reason = _descend(ctx, ansatz, theta, f, cfg, max_iters)
    ctx.trace.close()
    exact = exact_or_none(task)
    return RunRecord(
        method=f"hea-{layers}", seed=cfg.seed, path=ansatz.to_text(),
        params=[float(x) for x in theta], cost=float(f), exact=exact,
        abs_error=None if exact is None else abs(f - exact),
        quantum_cost=ctx.ledger.evaluations, stage_costs=dict(ctx.ledger.by_stage),
        termination={"hea": reason}, exact_sampling=True, trace=ctx.trace.points,
    )


def run_rnd(task, n_rs, cfg: GsaConfig, retrain_all=False, space=None) -> RunRecord:
    """Draw ``n_rs`` random (path, angles) pairs, keep the cheapest, retrain it.

    With ``retrain_all`` every sample is retrained and the best result kept.
    """
    if n_rs < 1:
        raise ValueError("n_rs must be at least 1")
    rng = np.random.default_rng(cfg.seed)
    space = space or make_space(task.n, cfg)
    ctx = _Context(task, cfg)
    ctx.ledger.set_stage("sample")
    cands = []
    for _ in range(n_rs):
        p = space.sample(rng)
        theta = _uniform_angles(rng, p.num_params)
        cands.append((p, theta, ctx.cost(p, theta)))
    sample_min = min(c[2] for c in cands)
    if retrain_all:
        results = []
        for p, theta, f in cands:
            theta, f, reason = vqe_retraining(task, p, theta, cfg, ctx, f0=f)
            results.append((f, p, theta, reason))
        f, path, theta, reason = min(results, key=lambda r: r[0])
    else:
        path, theta, f = min(cands, key=lambda c: c[2])
        theta, f, reason = vqe_retraining(task, path, theta, cfg, ctx, f0=f)
    ctx.trace.close()
    exact = exact_or_none(task)
    return RunRecord(
        method="rnd", seed=cfg.seed, path=path.to_text(),
        params=[float(x) for x in theta], cost=float(f), exact=exact,
        abs_error=None if exact is None else abs(f - exact),
        quantum_cost=ctx.ledger.evaluations, stage_costs=dict(ctx.ledger.by_stage),
        termination={"retrain": reason}, exact_sampling=space.exact_sampling,
        trace=ctx.trace.points,
        extra={"n_rs": n_rs, "retrain_all": retrain_all, "sample_min": float(sample_min)},
    )
