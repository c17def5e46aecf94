"""Three-stage GSA search: pool training, alternate (genetic) training, retraining."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .gramo import ScoredAnsatz, rank_fronts
from .hamiltonian import ORACLE_MAX_QUBITS, TaskSpec, exact_ground_energy
from .optimize import (Evaluator, LineSearchConfig, QuantumCostLedger,
                       normalized_gradient_magnitude)
from .pool import CandidateTree, GreedyConfig, ParameterPool, sample_path
from .sim import NoiseSpec
from .space import AnsatzPath, Rules, SearchSpace, random_operator


@dataclass(frozen=True)
class GsaConfig:
    n_layers: int = 3
    alpha0: float = 5.0
    xi: float = 0.003
    epsilon1: float = 0.8
    epsilon2: float = 0.8
    n_s1: int = 16
    n_r1: int = 1
    n_t1: int = 1
    n_i0: int = 2
    n_i1: int = 2
    n_s2: int = 16
    n_r2: int = 2
    n_t2: int = 4
    n_o: int = 5
    n_i2: int = 100
    n_i3: int = 10
    noise: bool = True
    p1: float = 0.001
    p2: float = 0.01
    c1: float = 1e-4
    shrink: float = 0.618
    max_backtracks: int = 30
    seed: int = 0
    ry_after_ry: bool = False
    exact_max_qubits: int = 4
    genetic_ops: bool = True
    enumerate_space: bool = False

    def __post_init__(self):
        for name in ("n_layers", "n_s1", "n_r1", "n_t1", "n_s2", "n_r2", "n_t2",
                     "n_o", "max_backtracks"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("n_i0", "n_i1", "n_i2", "n_i3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.n_s2 % 2:
            raise ValueError("n_s2 must be even")
        if self.xi <= 0:
            raise ValueError("xi must be positive")
        GreedyConfig(self.epsilon1, self.epsilon2)
        NoiseSpec(self.p1, self.p2)
        self.line_search()

    @property
    def noise_spec(self):
        return NoiseSpec(self.p1, self.p2, self.noise)

    @property
    def greedy(self):
        return GreedyConfig(self.epsilon1, self.epsilon2)

    def line_search(self):
        return LineSearchConfig(self.alpha0, self.c1, self.shrink, self.max_backtracks)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def config_fields():
    return {f.name: f.type for f in dataclasses.fields(GsaConfig)}


@dataclass
class RunRecord:
    method: str
    seed: int
    path: str
    params: List[float]
    cost: float
    exact: Optional[float]
    abs_error: Optional[float]
    quantum_cost: int
    stage_costs: Dict[str, int]
    termination: Dict[str, str]
    exact_sampling: bool
    trace: List[Tuple[int, float, str]]
    cost_convention: str = "every full cost evaluation counts 1 (gradient = 2|theta|, each Armijo trial = 1)"
    extra: Dict[str, object] = field(default_factory=dict)

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        d["trace"] = [tuple(t) for t in d["trace"]]
        return cls(**d)

    def trace_csv(self):
        lines = ["quantum_cost,best_cost_so_far,stage"]
        lines += [f"{q},{c!r},{s}" for q, c, s in self.trace]
        return "\n".join(lines) + "\n"


class Trace:
    """Running minimum of the cost over evaluated parameter points."""

    def __init__(self, ledger: QuantumCostLedger):
        self.ledger = ledger
        self.best = np.inf
        self.points: List[Tuple[int, float, str]] = []

    def observe(self, value):
        if value < self.best:
            self.best = float(value)
            self.points.append((self.ledger.evaluations, self.best, self.ledger.stage))

    def close(self):
        if np.isfinite(self.best):
            last = (self.ledger.evaluations, self.best, self.ledger.stage)
            if not self.points or self.points[-1] != last:
                self.points.append(last)


class _Context:
    def __init__(self, task: TaskSpec, cfg: GsaConfig, ledger=None, ev=None):
        self.task = task
        self.cfg = cfg
        if ev is not None:
            self.ev = ev
            self.ledger = ev.ledger
        else:
            self.ledger = ledger if ledger is not None else QuantumCostLedger()
            self.ev = Evaluator(task, cfg.noise_spec, self.ledger)
        self.ls = cfg.line_search()
        self.trace = Trace(self.ledger)

    def cost(self, path, params):
        f = self.ev.cost(path, params)
        self.trace.observe(f)
        return f

    def score(self, path, params) -> ScoredAnsatz:
        f = self.cost(path, params)
        g = self.ev.gradient(path, params)
        return ScoredAnsatz(path, np.asarray(params, dtype=float), f,
                            normalized_gradient_magnitude(g, path.num_params), g)

    def step(self, path, params, grad, f0):
        res = self.ev.line_search_step(path, params, grad, f0, self.ls)
        if res.alpha > 0:
            self.trace.observe(res.cost)
        return res


def _unique(paths):
    seen, out = set(), []
    for p in paths:
        if p not in seen:
            seen.add(p)
            out.append(p)
    return out


# ---------------------------------------------------------------------------
# stage 1


def _pool_iteration(ctx, space, pool, tree, eps1, rng):
    cfg = ctx.cfg
    greedy = GreedyConfig(eps1, cfg.epsilon2)
    sampled = [sample_path(tree, space, greedy, rng, space.make_path)[0] for _ in range(cfg.n_s1)]
    paths = _unique(sampled)
    scored = [ctx.score(p, pool.lookup(p)) for p in paths]
    ranked = rank_fronts(scored, cfg.n_r1)
    for i in ranked.top(cfg.n_r1):
        s = scored[i]
        res = ctx.step(s.path, s.params, s.grad, s.cost)
        pool.update(s.path, res.params)
        tree.insert(s.path)


def pool_training(task, space: SearchSpace, cfg: GsaConfig, rng, ctx=None):
    """Returns ``(pool, tree, reason)``."""
    ctx = ctx or _Context(task, cfg)
    ctx.ledger.set_stage("pool")
    pool, tree = ParameterPool(), CandidateTree(space.n_layers)
    for i in range(1, cfg.n_i0 + 1):
        _pool_iteration(ctx, space, pool, tree, (i - 1) * cfg.epsilon1 / cfg.n_i0, rng)
    reason = "max-iterations"
    stable = 0
    for _ in range(cfg.n_i1):
        before = tree.num_leaves
        _pool_iteration(ctx, space, pool, tree, cfg.epsilon1, rng)
        stable = stable + 1 if tree.num_leaves == before else 0
        if stable >= cfg.n_t1:
            reason = "tree-stable"
            break
    return pool, tree, reason


# ---------------------------------------------------------------------------
# stage 2


@dataclass
class _Best:
    path: AnsatzPath
    params: np.ndarray
    cost: float


def _offspring(ctx, space, pool, parent, params, rng):
    edit = random_operator(parent, space, rng)
    slices = parent.layer_slices()
    raw_params = []
    for l, (s, o) in enumerate(zip(edit.raw, edit.origin)):
        if o is not None:
            raw_params.append(params[slices[o]])
        else:
            raw_params.append(pool.entry(s, l + 1))
    flat = np.concatenate(raw_params) if raw_params else np.zeros(0)
    return space.canonicalize(list(edit.raw), flat)


def alternate_training(task, space: SearchSpace, pool: ParameterPool, tree: CandidateTree,
                       cfg: GsaConfig, rng, ctx=None):
    """Returns ``(path, params, cost, reason)``."""
    ctx = ctx or _Context(task, cfg)
    ctx.ledger.set_stage("alternate")
    greedy = cfg.greedy
    half = cfg.n_s2 // 2
    owned: Dict[AnsatzPath, np.ndarray] = {}
    all_paths = list(space.enumerate_paths()) if cfg.enumerate_space else None

    def params_of(p):
        if p not in owned:
            owned[p] = pool.lookup(p).copy()
        return owned[p]

    def refill(popl):
        if all_paths is not None:
            have = set(popl)
            return popl + [p for p in all_paths if p not in have]
        while len(popl) < cfg.n_s2:
            popl.append(sample_path(tree, space, greedy, rng, space.make_path)[0])
        return popl

    population = refill([])
    best: Optional[_Best] = None
    stable = 0
    reason = "max-generations"
    for _ in range(cfg.n_i2):
        uniq = _unique(population)
        scores = {p: ctx.score(p, params_of(p)) for p in uniq}
        indiv = [scores[p] for p in population]
        ranked = rank_fronts(indiv)
        # train the leading fronts
        fresh = {p: True for p in uniq}  # gradient in scores matches owned params
        for p in _unique(population[i] for i in ranked.top(cfg.n_r2)):
            s = scores[p]
            theta, f, g = s.params, s.cost, s.grad
            for k in range(cfg.n_o):
                if k:
                    g = ctx.ev.gradient(p, theta)
                res = ctx.step(p, theta, g, f)
                theta, f = res.params, res.cost
                if res.alpha == 0:
                    break
            owned[p] = theta
            scores[p] = ScoredAnsatz(p, theta, f, s.grad_mag, None)
            fresh[p] = False
        # survival: whole fronts, then cost-ordered fill from the next front
        survivors: List[AnsatzPath] = []
        for front in ranked.fronts:
            members = [population[i] for i in front]
            if len(survivors) + len(members) < half:
                survivors += members
                continue
            members.sort(key=lambda p: scores[p].cost)  # stable: population order on ties
            survivors += members[: half - len(survivors)]
            break
        if best is not None and any(scores[p].cost < best.cost for p in survivors):
            best = None
            stable = 0
        before = (None if best is None else (best.path, best.cost))
        # offspring
        children = []
        if cfg.genetic_ops:
            for p in survivors:
                child, theta = _offspring(ctx, space, pool, p, owned[p], rng)
                if child not in owned:
                    owned[child] = theta
                children.append(child)
        # elimination of near-converged survivors
        kept = []
        for p in _unique(survivors):
            theta = owned[p]
            s = scores[p]
            g = s.grad if fresh[p] else ctx.ev.gradient(p, theta)
            res = ctx.step(p, theta, g, s.cost)
            mag = res.alpha * normalized_gradient_magnitude(g, p.num_params)
            if mag < cfg.xi:
                if best is None or s.cost < best.cost:
                    best = _Best(p, theta.copy(), s.cost)
                continue
            if res.alpha > 0:
                owned[p] = res.params
            kept.append(p)
        kept_set = set(kept)
        population = refill([p for p in survivors if p in kept_set] + children)
        after = (None if best is None else (best.path, best.cost))
        if best is not None and after == before:
            stable += 1
        else:
            stable = 0
        if stable >= cfg.n_t2:
            reason = "best-stable"
            break
    # final pick over the last population and U_best
    candidates = []
    for p in _unique(population):
        candidates.append(_Best(p, params_of(p).copy(), ctx.cost(p, params_of(p))))
    if best is not None:
        candidates.append(best)
    top = min(candidates, key=lambda b: b.cost)
    return top.path, top.params, top.cost, reason


# ---------------------------------------------------------------------------
# stage 3


def vqe_retraining(task, path, params, cfg: GsaConfig, ctx=None, f0=None):
    """Returns ``(params, cost, reason)``."""
    ctx = ctx or _Context(task, cfg)
    ctx.ledger.set_stage("retrain")
    theta = np.asarray(params, dtype=float).copy()
    m = path.num_params
    if m == 0 or cfg.n_i3 == 0:
        f = f0 if f0 is not None else ctx.cost(path, theta)
        return theta, f, "no-parameters" if m == 0 else "max-iterations"
    f = f0 if f0 is not None else ctx.cost(path, theta)
    for _ in range(cfg.n_i3):
        g = ctx.ev.gradient(path, theta)
        res = ctx.step(path, theta, g, f)
        theta, f = res.params, res.cost
        if res.alpha * normalized_gradient_magnitude(g, m) < cfg.xi:
            return theta, f, "converged"
    return theta, f, "max-iterations"


# ---------------------------------------------------------------------------


def exact_or_none(task: TaskSpec):
    if task.n > ORACLE_MAX_QUBITS or len(task.terms) != 1:
        return None
    return exact_ground_energy(task.hamiltonian)


def make_space(n, cfg: GsaConfig):
    return SearchSpace(n, cfg.n_layers, Rules(cfg.ry_after_ry),
                       exact_max_qubits=cfg.exact_max_qubits)


def run_gsa(task: Optional[TaskSpec], cfg: GsaConfig, space: Optional[SearchSpace] = None,
            ledger: Optional[QuantumCostLedger] = None, evaluator=None) -> RunRecord:
    """Run all three stages.  ``evaluator`` replaces the default task evaluator."""
    rng = np.random.default_rng(cfg.seed)
    space = space or make_space(task.n, cfg)
    ctx = _Context(task, cfg, ledger, evaluator)
    pool, tree, r1 = pool_training(task, space, cfg, rng, ctx)
    path, theta, f, r2 = alternate_training(task, space, pool, tree, cfg, rng, ctx)
    theta, f, r3 = vqe_retraining(task, path, theta, cfg, ctx, f0=f)
    ctx.trace.close()
    exact = exact_or_none(task) if task is not None else None
    return RunRecord(
        method="gsa",
        seed=cfg.seed,
        path=path.to_text(),
        params=[float(x) for x in theta],
        cost=float(f),
        exact=exact,
        abs_error=None if exact is None else abs(f - exact),
        quantum_cost=ctx.ledger.evaluations,
        stage_costs=dict(ctx.ledger.by_stage),
        termination={"pool": r1, "alternate": r2, "retrain": r3},
        exact_sampling=space.exact_sampling,
        trace=ctx.trace.points,
        extra={"tree_leaves": tree.num_leaves, "pool_entries": len(pool)},
    )


def mse(finals, exact) -> float:
    finals = np.asarray(finals, dtype=float)
    if finals.size == 0:
        raise ValueError("mse of an empty list")
    return float(np.mean((finals - exact) ** 2))
