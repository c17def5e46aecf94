"""Meta-VQE: one circuit trained over a family of Hamiltonians H(delta).

Each Ry/Rz angle is produced by an encoding of the family parameter:

* ``f1(d; t) = t``
* ``f2(d; t, g) = t * d + g``
* ``f3(d; t, g) = t * exp(d) + g``

All three are linear in their trainable slots, so two fused gates with the
same encoding combine by adding slots.  Gates with different encodings are
never fused, so two such same-axis rotations in consecutive layers are the
one pattern the meta space allows beyond the plain constraints.
"""
from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .baselines import _descend, _uniform_angles, build_hea
from .driver import GsaConfig, RunRecord, _Context, run_gsa
from .hamiltonian import (PauliSum, TaskSpec, builtin_hamiltonian, exact_ground_energy,
                          load_hamiltonian)
from .optimize import SHIFT, Evaluator, QuantumCostLedger
from .sim import NOISELESS, NoiseSpec
from .space import (AnsatzPath, LayerState, Rules, SearchSpace, SearchSpaceError,
                    canonicalize_payloads)


@dataclass(frozen=True)
class Encoding:
    name: str
    slots: int
    fn: Callable[[float, Sequence[float]], float]
    dfn: Callable[[float, Sequence[float]], Tuple[float, ...]]


ENCODINGS: Dict[str, Encoding] = {
    "f1": Encoding("f1", 1, lambda d, s: s[0], lambda d, s: (1.0,)),
    "f2": Encoding("f2", 2, lambda d, s: s[0] * d + s[1], lambda d, s: (d, 1.0)),
    "f3": Encoding("f3", 2, lambda d, s: s[0] * math.exp(d) + s[1],
                   lambda d, s: (math.exp(d), 1.0)),
}


def encode(name, delta, slots):
    return ENCODINGS[name].fn(delta, slots)


def _check_encodings(encs, count):
    encs = tuple(encs)
    if len(encs) != count:
        raise SearchSpaceError(f"expected {count} encodings, got {len(encs)}")
    for e in encs:
        if e not in ENCODINGS:
            raise SearchSpaceError(f"unknown encoding {e!r}")
    return encs


class _Encoded:
    """Shared angle bookkeeping for encoded circuits (needs ``base`` and ``encodings``)."""

    @property
    def num_params(self):
        return sum(ENCODINGS[e].slots for e in self.encodings)

    def angles(self, params, delta):
        params = np.asarray(params, dtype=float).ravel()
        if params.size != self.num_params:
            raise ValueError(f"circuit takes {self.num_params} slots, got {params.size}")
        out, k = [], 0
        for e in self.encodings:
            m = ENCODINGS[e].slots
            out.append(ENCODINGS[e].fn(delta, params[k:k + m]))
            k += m
        return np.array(out)

    def jacobian(self, params, delta):
        """``J[g, s] = d angle_g / d slot_s`` at ``delta``."""
        params = np.asarray(params, dtype=float).ravel()
        jac = np.zeros((len(self.encodings), self.num_params))
        k = 0
        for g, e in enumerate(self.encodings):
            m = ENCODINGS[e].slots
            jac[g, k:k + m] = ENCODINGS[e].dfn(delta, params[k:k + m])
            k += m
        return jac


@dataclass(frozen=True)
class EncodedLayerState:
    base: LayerState
    encodings: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "encodings",
                           _check_encodings(self.encodings, self.base.num_params))

    @property
    def n(self):
        return self.base.n

    @property
    def is_empty(self):
        return self.base.is_empty

    @property
    def num_params(self):
        return sum(ENCODINGS[e].slots for e in self.encodings)

    def to_text(self):
        toks, it = [], iter(self.encodings)
        for q, k in enumerate(self.base.single):
            if k is not None:
                toks.append(f"q{q}:{k}/{next(it)}")
        toks += [f"cx:{c}>{(c + 1) % self.n}" for c in self.base.cnots]
        return " ".join(toks) if toks else "-"

    @classmethod
    def from_text(cls, text, n):
        plain, encs = [], []
        for tok in text.split():
            head, sep, enc = tok.partition("/")
            plain.append(head)
            if sep:
                encs.append(enc)
        return cls(LayerState.from_text(" ".join(plain), n), tuple(encs))


@dataclass(frozen=True)
class EncodedPath(_Encoded):
    layers: Tuple[EncodedLayerState, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def n(self):
        return self.layers[0].n

    @property
    def n_layers(self):
        return len(self.layers)

    @property
    def depth(self):
        return sum(not s.is_empty for s in self.layers)

    @property
    def base(self) -> AnsatzPath:
        return AnsatzPath(tuple(s.base for s in self.layers))

    @property
    def encodings(self):
        return tuple(e for s in self.layers for e in s.encodings)

    def layer_slices(self):
        out, k = [], 0
        for s in self.layers:
            out.append(slice(k, k + s.num_params))
            k += s.num_params
        return out

    def to_text(self):
        return "\n".join(s.to_text() for s in self.layers)

    @classmethod
    def from_text(cls, text, n):
        return cls(tuple(EncodedLayerState.from_text(line, n) for line in text.split("\n")))


@dataclass(frozen=True)
class EncodedAnsatz(_Encoded):
    """An encoded fixed circuit, e.g. the meta HEA comparator."""

    base: object
    encodings: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "encodings",
                           _check_encodings(self.encodings, self.base.num_params))

    def to_text(self):
        return self.base.to_text() + " | " + " ".join(self.encodings)


# ---------------------------------------------------------------------------
# families


@dataclass(frozen=True)
class HamiltonianFamily:
    generator: Callable[[float], PauliSum]
    training: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "training", tuple(float(d) for d in self.training))
        if not self.training:
            raise ValueError("a family needs at least one training point")
        ns = {self.generator(d).n for d in self.training}
        if len(ns) != 1:
            raise ValueError(f"family members disagree on qubit count: {sorted(ns)}")

    @property
    def n(self):
        return self.generator(self.training[0]).n

    @classmethod
    def from_table(cls, table: Dict[float, PauliSum], training=None):
        table = {float(k): v for k, v in table.items()}

        def gen(d):
            try:
                return table[float(d)]
            except KeyError:
                raise ValueError(f"no Hamiltonian for delta={d}") from None

        return cls(gen, tuple(sorted(table)) if training is None else tuple(training))

    @classmethod
    def from_file(cls, path, training=None):
        """Lines of ``<delta> <hamiltonian file>``; relative paths resolve next to ``path``."""
        root = os.path.dirname(os.path.abspath(path))
        table = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split(None, 1)
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected '<delta> <file>'")
                table[float(parts[0])] = load_hamiltonian(os.path.join(root, parts[1].strip()))
        return cls.from_table(table, training)

    @classmethod
    def builtin(cls, name, n, training, fixed: Sequence[float] = ()):
        """Builtin model whose first parameter is delta, e.g. the TFIM field."""
        return cls(lambda d: builtin_hamiltonian(name, n, [d, *fixed]), tuple(training))


# ---------------------------------------------------------------------------
# evaluation


class MetaEvaluator(Evaluator):
    """Evaluator over encoded circuits; one cost is the sum over training points."""

    def __init__(self, family: HamiltonianFamily, noise: NoiseSpec = NOISELESS,
                 ledger: Optional[QuantumCostLedger] = None):
        self.family = family
        self.noise = noise
        self.ledger = ledger if ledger is not None else QuantumCostLedger()
        self.n = family.n
        self._inner: Dict[float, Evaluator] = {}
        self._cache = {}

    def _at(self, delta) -> Evaluator:
        ev = self._inner.get(delta)
        if ev is None:
            task = TaskSpec.ground_state(self.family.generator(delta))
            ev = self._inner[delta] = Evaluator(task, self.noise, QuantumCostLedger())
        return ev

    def compile(self, path):
        return path

    def _bond_cost(self, path, delta, angles):
        ev = self._at(delta)
        return ev.raw_cost(ev.compile(path.base), angles)

    def raw_cost(self, path, params, tag="cost"):
        total = sum(self._bond_cost(path, d, path.angles(params, d)) for d in self.family.training)
        self.ledger.add(1, tag)
        return total

    def gradient(self, path, params, tag="grad"):
        """Chain rule: per-point parameter-shift angle derivatives times encoding slopes.

        One shifted angle vector shared by all training points counts as one
        evaluation, so the ledger grows by ``2 * (number of gate angles)``.
        """
        params = self._check(path, params)
        grad = np.zeros(params.size)
        n_angles = len(path.encodings)
        for d in self.family.training:
            phi = path.angles(params, d)
            dphi = np.zeros(n_angles)
            work = phi.copy()
            for k in range(n_angles):
                work[k] = phi[k] + SHIFT
                plus = self._bond_cost(path, d, work)
                work[k] = phi[k] - SHIFT
                minus = self._bond_cost(path, d, work)
                work[k] = phi[k]
                dphi[k] = 0.5 * (plus - minus)
            grad += path.jacobian(params, d).T @ dphi
        self.ledger.add(2 * n_angles, tag)
        return grad

    def profile(self, path, params, grid):
        out = []
        for d in grid:
            ev = self._at(float(d))
            e = ev.raw_cost(ev.compile(path.base), path.angles(params, float(d)))
            self.ledger.add(1, "profile")
            out.append((float(d), e))
        return out


def meta_cost(family, path, params, noise=NOISELESS, ledger=None):
    return MetaEvaluator(family, noise, ledger).cost(path, params)


def profile(family, path, params, grid, noise=NOISELESS, ledger=None):
    return MetaEvaluator(family, noise, ledger).profile(path, params, grid)


# ---------------------------------------------------------------------------
# search space over encoded layers


def _merge_payload(a, b):
    """Fuse two same-axis rotations only when their encodings match."""
    if a[0] != b[0]:
        return None
    return (a[0], tuple(x + y for x, y in zip(a[1], b[1])))


class _EncodedCatalog:
    """Lazy indexable list of every (layer state, encodings) pair.

    Also acts as the inverse map via ``catalog[state]``.
    """

    def __init__(self, base_states, names):
        self.base = list(base_states)
        self.names = tuple(names)
        self._base_index = {s: i for i, s in enumerate(self.base)}
        sizes = [len(self.names) ** s.num_params for s in self.base]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)

    def __len__(self):
        return int(self.offsets[-1])

    def __iter__(self):
        for j in range(len(self)):
            yield self._decode(j)

    def _decode(self, j):
        if not 0 <= j < len(self):
            raise IndexError(j)
        b = int(np.searchsorted(self.offsets, j, side="right")) - 1
        r, base = j - int(self.offsets[b]), self.base[b]
        encs = []
        for _ in range(base.num_params):
            r, d = divmod(r, len(self.names))
            encs.append(self.names[d])
        return EncodedLayerState(base, tuple(reversed(encs)))

    def __getitem__(self, key):
        if isinstance(key, EncodedLayerState):
            b = self._base_index[key.base]
            r = 0
            for e in key.encodings:
                r = r * len(self.names) + self.names.index(e)
            return int(self.offsets[b]) + r
        return self._decode(int(key))

    def __contains__(self, state):
        return (isinstance(state, EncodedLayerState) and state.base in self._base_index
                and all(e in self.names for e in state.encodings))


class MetaSpace:
    """Layer states crossed with one encoding per parameterized gate.

    Sampling draws a structure from the plain space, then encodings
    independently and uniformly.
    """

    def __init__(self, n, n_layers, rules: Rules = Rules(), encodings=("f1", "f2", "f3"),
                 exact_max_qubits=4):
        self.base = SearchSpace(n, n_layers, rules, exact_max_qubits=exact_max_qubits)
        self.encoding_names = tuple(encodings)
        self.n = n
        self.n_layers = n_layers
        self.rules = rules
        self.states = _EncodedCatalog(self.base.states, self.encoding_names)
        self.index = self.states
        self.empty_state = EncodedLayerState(LayerState.empty(n), ())

    @property
    def num_states(self):
        return len(self.states)

    @property
    def exact_sampling(self):
        return self.base.exact_sampling

    def make_path(self, layers):
        return EncodedPath(tuple(layers))

    def _random_encodings(self, k, rng):
        return tuple(self.encoding_names[int(i)]
                     for i in rng.integers(len(self.encoding_names), size=k))

    def sample(self, rng) -> EncodedPath:
        plain = self.base.sample(rng)
        return EncodedPath(tuple(
            EncodedLayerState(s, self._random_encodings(s.num_params, rng))
            for s in plain.layers
        ))

    def enumerate_paths(self):
        for plain in self.base.enumerate_paths():
            per_layer = [
                [EncodedLayerState(s, e)
                 for e in itertools.product(self.encoding_names, repeat=s.num_params)]
                for s in plain.layers
            ]
            for combo in itertools.product(*per_layer):
                yield EncodedPath(combo)

    def canonicalize(self, layers, params=None):
        layers = list(layers.layers if isinstance(layers, EncodedPath) else layers)
        total = sum(s.num_params for s in layers)
        params = np.zeros(total) if params is None else np.asarray(params, dtype=float).ravel()
        if params.size != total:
            raise SearchSpaceError(f"sequence takes {total} slots, got {params.size}")
        payloads, k = [], 0
        for s in layers:
            for e in s.encodings:
                m = ENCODINGS[e].slots
                payloads.append((e, tuple(params[k:k + m])))
                k += m
        plain, out = canonicalize_payloads(
            [s.base for s in layers], payloads, self.n_layers, self.rules, _merge_payload
        )
        it = iter(out)
        enc_layers, flat = [], []
        for s in plain.layers:
            items = [next(it) for _ in range(s.num_params)]
            enc_layers.append(EncodedLayerState(s, tuple(e for e, _ in items)))
            for _, slots in items:
                flat.extend(slots)
        return EncodedPath(tuple(enc_layers)), np.array(flat, dtype=float)


# ---------------------------------------------------------------------------
# runs


def _profile_record(method, cfg, ev, circuit, params, f, family, grid, termination,
                    exact_sampling, trace):
    grid = list(family.training) if grid is None else list(grid)
    prof = ev.profile(circuit, params, grid)
    exact = [exact_ground_energy(family.generator(d)) for d, _ in prof]
    errors = [abs(e - x) for (_, e), x in zip(prof, exact)]
    train_exact = sum(exact_ground_energy(family.generator(d)) for d in family.training)
    return RunRecord(
        method=method, seed=cfg.seed, path=circuit.to_text(),
        params=[float(x) for x in params], cost=float(f), exact=float(train_exact),
        abs_error=float(np.mean(errors)), quantum_cost=ev.ledger.evaluations,
        stage_costs=dict(ev.ledger.by_stage), termination=termination,
        exact_sampling=exact_sampling, trace=trace,
        extra={
            "profile": [[d, e, x] for (d, e), x in zip(prof, exact)],
            "error_variance": float(np.var(errors)),
            "training": list(family.training),
        },
    )


def run_meta_gsa(family: HamiltonianFamily, cfg: GsaConfig, grid=None,
                 encodings=("f1", "f2", "f3")) -> RunRecord:
    space = MetaSpace(family.n, cfg.n_layers, Rules(cfg.ry_after_ry), encodings,
                      cfg.exact_max_qubits)
    ev = MetaEvaluator(family, cfg.noise_spec)
    rec = run_gsa(None, cfg, space=space, evaluator=ev)
    path = EncodedPath.from_text(rec.path, family.n)
    ev.ledger.set_stage("profile")
    out = _profile_record("meta-gsa", cfg, ev, path, np.array(rec.params), rec.cost, family,
                          grid, rec.termination, rec.exact_sampling, rec.trace)
    return out


def build_hea_meta(n, n_encode, n_process):
    """HEA with ``n_encode`` f2 layers followed by ``n_process`` f1 layers."""
    if n_encode + n_process < 1:
        raise ValueError("need at least one layer")
    base = build_hea(n, n_encode + n_process)
    per_layer = base.num_params // (n_encode + n_process)
    encs = ("f2",) * (per_layer * n_encode) + ("f1",) * (per_layer * n_process)
    return EncodedAnsatz(base, encs)


def run_meta_hea(family: HamiltonianFamily, n_encode, n_process, cfg: GsaConfig,
                 max_iters=100, grid=None) -> RunRecord:
    rng = np.random.default_rng(cfg.seed)
    circuit = build_hea_meta(family.n, n_encode, n_process)
    ev = MetaEvaluator(family, cfg.noise_spec)
    ctx = _Context(None, cfg, ev=ev)
    ctx.ledger.set_stage("hea")
    theta = _uniform_angles(rng, circuit.num_params)
    f = ctx.cost(circuit, theta)
    theta, f, reason = _descend(ctx, circuit, theta, f, cfg, max_iters)
    ctx.trace.close()
    ev.ledger.set_stage("profile")
    return _profile_record(f"meta-hea-{n_encode}-{n_process}", cfg, ev, circuit, theta, f,
                           family, grid, {"hea": reason}, True, ctx.trace.points)
