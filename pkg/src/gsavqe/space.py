"""Layer-wise ansatz search space on a directed qubit ring.

A layer is a single-qubit sublayer (``None``/``Ry``/``Rz`` per qubit) followed
by a set of qubit-disjoint CNOTs ``c -> (c + 1) % n``.  A path is a fixed-length
sequence of layers.  The constrained space removes paths that are physically
redundant under a handful of commutation rules:

1. Rz on a clean qubit, and a CNOT controlled by a clean qubit, are dropped.
2. Two identical CNOTs with no blocking gate in between cancel.
3. Rz at layer ``l`` needs Ry on q, or a CNOT targeting q, at layer ``l-1``.
4. Ry at layer ``l > 1`` needs Rz on q, or a CNOT touching q, at layer ``l-1``.
5. Empty layers only appear at the tail.

Qubit masks use bit ``q`` for qubit ``q``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .sim import CNOT, RY, RZ, Gate

_KINDS = (None, RY, RZ)


class SearchSpaceError(ValueError):
    pass


class BudgetExceeded(SearchSpaceError):
    pass


@dataclass(frozen=True)
class LayerState:
    """One layer: ``single[q]`` in {None, "Ry", "Rz"}; ``cnots`` lists controls."""

    single: Tuple[Optional[str], ...]
    cnots: Tuple[int, ...] = ()

    def __post_init__(self):
        n = len(self.single)
        if n < 1:
            raise SearchSpaceError("a layer needs at least one qubit")
        if n == 1 and self.cnots:
            raise SearchSpaceError("a single qubit has no CNOT edge")
        for k in self.single:
            if k not in _KINDS:
                raise SearchSpaceError(f"unknown single-qubit gate {k!r}")
        cn = tuple(sorted(self.cnots))
        object.__setattr__(self, "cnots", cn)
        used = set()
        for c in cn:
            if not 0 <= c < n:
                raise SearchSpaceError(f"CNOT control {c} out of range")
            pair = {c, (c + 1) % n}
            if used & pair:
                raise SearchSpaceError(f"CNOTs in one layer overlap: {cn}")
            used |= pair

    @classmethod
    def empty(cls, n):
        return cls((None,) * n)

    @property
    def n(self):
        return len(self.single)

    @property
    def is_empty(self):
        return not self.cnots and all(k is None for k in self.single)

    @property
    def num_params(self):
        return sum(k is not None for k in self.single)

    def mask(self, kind):
        return sum(1 << q for q, k in enumerate(self.single) if k == kind)

    @property
    def ctl_mask(self):
        return sum(1 << c for c in self.cnots)

    @property
    def tgt_mask(self):
        n = self.n
        return sum(1 << ((c + 1) % n) for c in self.cnots)

    def gates(self, angles=()):
        angles = list(angles)
        if len(angles) != self.num_params:
            raise SearchSpaceError(
                f"layer takes {self.num_params} angles, got {len(angles)}"
            )
        out = []
        it = iter(angles)
        for q, k in enumerate(self.single):
            if k is not None:
                out.append(Gate(k, q, angle=float(next(it))))
        for c in self.cnots:
            out.append(Gate(CNOT, (c + 1) % self.n, control=c))
        return out

    def to_text(self):
        toks = [f"q{q}:{k}" for q, k in enumerate(self.single) if k is not None]
        toks += [f"cx:{c}>{(c + 1) % self.n}" for c in self.cnots]
        return " ".join(toks) if toks else "-"

    @classmethod
    def from_text(cls, text, n):
        single = [None] * n
        cnots = []
        text = text.strip()
        if text in ("", "-"):
            return cls.empty(n)
        for tok in text.split():
            head, _, body = tok.partition(":")
            if head == "cx":
                a, _, b = body.partition(">")
                try:
                    c, t = int(a), int(b)
                except ValueError:
                    raise SearchSpaceError(f"bad CNOT token {tok!r}") from None
                if t != (c + 1) % n:
                    raise SearchSpaceError(f"{tok!r} is not a ring edge for n={n}")
                cnots.append(c)
            elif head.startswith("q") and body in (RY, RZ):
                try:
                    q = int(head[1:])
                except ValueError:
                    raise SearchSpaceError(f"bad gate token {tok!r}") from None
                if not 0 <= q < n or single[q] is not None:
                    raise SearchSpaceError(f"bad or repeated qubit in {tok!r}")
                single[q] = body
            else:
                raise SearchSpaceError(f"bad token {tok!r}")
        return cls(tuple(single), tuple(cnots))


def _ring_edge_sets(n):
    """Independent edge sets of the directed n-ring, as sorted control tuples."""
    out = []
    for r in range(n // 2 + 1):
        for combo in itertools.combinations(range(n), r):
            qs = [q for c in combo for q in (c, (c + 1) % n)]
            if len(set(qs)) == len(qs):
                out.append(combo)
    return out


def enumerate_layer_states(n) -> List[LayerState]:
    """All layer states on ``n`` qubits, ordered by CNOT set then single-qubit choice."""
    if n < 2:
        raise SearchSpaceError("need n >= 2")
    states = []
    for cn in _ring_edge_sets(n):
        for single in itertools.product(_KINDS, repeat=n):
            states.append(LayerState(single, cn))
    return states


@dataclass(frozen=True)
class AnsatzPath:
    layers: Tuple[LayerState, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise SearchSpaceError("a path needs at least one layer slot")
        n = self.layers[0].n
        if any(s.n != n for s in self.layers):
            raise SearchSpaceError("layers disagree on qubit count")

    @classmethod
    def empty(cls, n, n_layers):
        return cls((LayerState.empty(n),) * n_layers)

    @property
    def n(self):
        return self.layers[0].n

    @property
    def n_layers(self):
        return len(self.layers)

    @property
    def num_params(self):
        return sum(s.num_params for s in self.layers)

    @property
    def depth(self):
        """Number of non-empty layers."""
        return sum(not s.is_empty for s in self.layers)

    def layer_slices(self):
        out, k = [], 0
        for s in self.layers:
            out.append(slice(k, k + s.num_params))
            k += s.num_params
        return out

    def gates(self, params=()):
        params = np.asarray(params, dtype=float).ravel()
        if params.size != self.num_params:
            raise SearchSpaceError(
                f"path takes {self.num_params} parameters, got {params.size}"
            )
        out = []
        for s, sl in zip(self.layers, self.layer_slices()):
            out.extend(s.gates(params[sl]))
        return out

    def to_text(self):
        return "\n".join(s.to_text() for s in self.layers)

    @classmethod
    def from_text(cls, text, n):
        lines = text.split("\n")
        return cls(tuple(LayerState.from_text(line, n) for line in lines))

    def __str__(self):
        return " | ".join(s.to_text() for s in self.layers)


# ---------------------------------------------------------------------------
# constraint checking


@dataclass(frozen=True)
class Violation:
    constraint: int
    layer: int
    qubit: int
    message: str


@dataclass(frozen=True)
class CheckResult:
    violations: Tuple[Violation, ...]

    @property
    def ok(self):
        return not self.violations

    @property
    def first(self):
        return self.violations[0] if self.violations else None

    def constraints(self):
        return {v.constraint for v in self.violations}

    def __bool__(self):
        return self.ok


@dataclass(frozen=True)
class Rules:
    """Switches for the commutation rules.

    ``ry_after_ry`` lets Ry on q at layer ``l`` follow Ry on q at ``l-1``
    (constraint 4 then accepts any gate touching q); it is off by default.
    """

    ry_after_ry: bool = False


DEFAULT_RULES = Rules()


def _rot(x, n):
    """Bit c of the result is bit (c+1) % n of x."""
    return (x >> 1) | ((x & 1) << (n - 1))


def check_constraints(path: AnsatzPath, rules: Rules = DEFAULT_RULES) -> CheckResult:
    """Collect every constraint violation of ``path`` in circuit order."""
    n = path.n
    full = (1 << n) - 1
    clean = full
    opened: Dict[int, int] = {}  # CNOT control -> layer of last unblocked CNOT
    prev = None
    seen_empty = False
    bad: List[Violation] = []
    for l, s in enumerate(path.layers):
        if s.is_empty:
            seen_empty = True
            prev = s
            continue
        if seen_empty:
            bad.append(Violation(5, l, -1, f"layer {l} follows an empty layer"))
        ry, rz = s.mask(RY), s.mask(RZ)
        for q in range(n):
            b = 1 << q
            if rz & b:
                if clean & b:
                    bad.append(Violation(1, l, q, f"Rz on clean qubit {q} at layer {l}"))
                if prev is None or not (b & (prev.mask(RY) | prev.tgt_mask)):
                    bad.append(Violation(3, l, q, f"Rz on qubit {q} at layer {l} not enabled"))
            if ry & b and prev is not None:
                en = prev.mask(RZ) | prev.ctl_mask | prev.tgt_mask
                if rules.ry_after_ry:
                    en |= prev.mask(RY)
                if not b & en:
                    bad.append(Violation(4, l, q, f"Ry on qubit {q} at layer {l} not enabled"))
        clean &= ~ry
        blocked = ry | _rot(ry | rz, n)
        for c in list(opened):
            if blocked >> c & 1:
                del opened[c]
        for c in s.cnots:
            if clean >> c & 1:
                bad.append(Violation(1, l, c, f"CNOT({c},{(c + 1) % n}) with clean control at layer {l}"))
            if c in opened:
                bad.append(Violation(
                    2, l, c,
                    f"CNOT({c},{(c + 1) % n}) at layer {l} repeats layer {opened[c]}",
                ))
        ctl, tgt = s.ctl_mask, s.tgt_mask
        blocked = tgt | _rot(ctl, n)
        for c in list(opened):
            if blocked >> c & 1:
                del opened[c]
        for c in s.cnots:
            opened[c] = l
        clean &= ~tgt
        prev = s
    return CheckResult(tuple(bad))


# ---------------------------------------------------------------------------
# canonical form


def _add(a, b):
    return a + b


def canonicalize(path, params=None, n_layers=None, rules: Rules = DEFAULT_RULES):
    """Rewrite ``path`` into the constraint-valid form of the same circuit.

    ``path`` may be an :class:`AnsatzPath` or a sequence of layer states.
    Returns ``(canonical_path, params)``; ``params`` is aligned with the
    parameterized gates of the output.
    """
    layers = list(path.layers if isinstance(path, AnsatzPath) else path)
    nparam = sum(s.num_params for s in layers)
    if params is None:
        params = np.zeros(nparam)
    params = np.asarray(params, dtype=float).ravel()
    if params.size != nparam:
        raise SearchSpaceError(f"sequence takes {nparam} parameters, got {params.size}")
    out, payloads = canonicalize_payloads(layers, [float(x) for x in params], n_layers, rules)
    return out, np.array(payloads, dtype=float)


def canonicalize_payloads(layers, payloads, n_layers=None, rules: Rules = DEFAULT_RULES,
                          merge=_add):
    """Canonicalize with one opaque payload per parameterized gate.

    Payloads travel with their gate; fused gates combine theirs via
    ``merge``.  Returns ``(AnsatzPath, list of payloads)``.
    """
    layers = list(layers)
    if not layers:
        raise SearchSpaceError("cannot infer qubit count of an empty sequence")
    n = layers[0].n
    n_layers = len(layers) if n_layers is None else n_layers
    if len(layers) > n_layers:
        raise SearchSpaceError(f"{len(layers)} layers exceed N_l={n_layers}")
    if len(payloads) != sum(s.num_params for s in layers):
        raise SearchSpaceError("payload count does not match the gate count")

    # mutable form: per layer, single = {q: [kind, payload]}, cnots = set of controls
    work = []
    it = iter(payloads)
    for s in layers:
        single = {q: [k, next(it)] for q, k in enumerate(s.single) if k is not None}
        work.append((single, set(s.cnots)))
    while len(work) < n_layers:
        work.append(({}, set()))

    for _ in range(10_000):
        if not _repair_once(work, n, rules, merge):
            break
    else:  # pragma: no cover - rewriting always terminates
        raise AssertionError("canonicalize did not reach a fixpoint")

    out_layers, out_payloads = [], []
    for single, cn in work:
        out_layers.append(LayerState(
            tuple(single[q][0] if q in single else None for q in range(n)), tuple(cn)
        ))
        out_payloads.extend(single[q][1] for q in sorted(single))
    assert len(out_layers) == n_layers
    return AnsatzPath(tuple(out_layers)), out_payloads


def _repair_once(work, n, rules, merge=_add):
    """Fix the first violation found in circuit order; False if none.

    ``merge(a, b)`` combines the payloads of two gates fused into one, or
    returns None when they must stay separate.
    """
    clean = (1 << n) - 1
    opened: Dict[int, int] = {}
    seen_empty = -1
    for l, (single, cn) in enumerate(work):
        if not single and not cn:
            if seen_empty < 0:
                seen_empty = l
            continue
        if seen_empty >= 0:
            work.pop(seen_empty)
            work.append(({}, set()))
            return True
        prev = work[l - 1] if l > 0 else None
        for q in sorted(single):
            kind, angle = single[q]
            b = 1 << q
            if kind == RZ:
                if clean & b:
                    del single[q]
                    return True
                psingle, pcn = prev  # l > 0 here since q is dirty
                ptgt = any((c + 1) % n == q for c in pcn)
                pk = psingle.get(q, [None])[0]
                if pk == RY or ptgt:
                    continue
                if pk == RZ:
                    merged = merge(psingle[q][1], angle)
                    if merged is None:
                        continue
                    psingle[q][1] = merged
                else:
                    psingle[q] = [RZ, angle]
                del single[q]
                return True
            if prev is not None:
                psingle, pcn = prev
                pk = psingle.get(q, [None])[0]
                touched = any(q in (c, (c + 1) % n) for c in pcn)
                if pk == RZ or touched or (pk == RY and rules.ry_after_ry):
                    continue
                if pk == RY:
                    merged = merge(psingle[q][1], angle)
                    if merged is None:
                        continue
                    psingle[q][1] = merged
                else:
                    psingle[q] = [RY, angle]
                del single[q]
                return True
        ry = sum(1 << q for q, (k, _) in single.items() if k == RY)
        rz = sum(1 << q for q, (k, _) in single.items() if k == RZ)
        clean &= ~ry
        blocked = ry | _rot(ry | rz, n)
        for c in list(opened):
            if blocked >> c & 1:
                del opened[c]
        for c in sorted(cn):
            if clean >> c & 1:
                cn.discard(c)
                return True
            if c in opened:
                cn.discard(c)
                work[opened[c]][1].discard(c)
                return True
        ctl = sum(1 << c for c in cn)
        tgt = sum(1 << ((c + 1) % n) for c in cn)
        blocked = tgt | _rot(ctl, n)
        for c in list(opened):
            if blocked >> c & 1:
                del opened[c]
        for c in cn:
            opened[c] = l
        clean &= ~tgt
    return False


# ---------------------------------------------------------------------------
# counting and sampling


@dataclass(frozen=True)
class Frontier:
    """Everything the constraints need to know about a path prefix."""

    depth: int
    clean: int
    opened: int
    prev: int  # catalog index of the last layer, -1 at the root
    done: bool = False  # an empty layer has been placed


class SearchSpace:
    """Catalog of layer states plus constraint-aware counting and sampling.

    ``budget`` bounds the number of memoized count entries.  Exact uniform
    sampling is used when ``n <= exact_max_qubits``; otherwise paths are
    drawn layer by layer, uniformly over valid extensions.
    """

    def __init__(self, n, n_layers, rules: Rules = DEFAULT_RULES,
                 budget=5_000_000, exact_max_qubits=4):
        if n_layers < 1:
            raise SearchSpaceError("N_l must be >= 1")
        self.n = n
        self.n_layers = n_layers
        self.rules = rules
        self.budget = budget
        self.states = enumerate_layer_states(n)
        self.index = {s: i for i, s in enumerate(self.states)}
        self.empty_index = self.index[LayerState.empty(n)]
        self.ry = np.array([s.mask(RY) for s in self.states], dtype=np.int64)
        self.rz = np.array([s.mask(RZ) for s in self.states], dtype=np.int64)
        self.ctl = np.array([s.ctl_mask for s in self.states], dtype=np.int64)
        self.tgt = np.array([s.tgt_mask for s in self.states], dtype=np.int64)
        self.is_empty = np.array([s.is_empty for s in self.states])
        full = (1 << n) - 1
        self._blk_single = self.ry | _rot_arr(self.ry | self.rz, n)
        self._blk_cnot = self.tgt | _rot_arr(self.ctl, n)
        self.root = Frontier(0, full, 0, -1)
        self._memo: Dict[Tuple, int] = {}
        self._draw_cache: Dict[Frontier, Tuple[np.ndarray, np.ndarray]] = {}
        self.exact_sampling = n <= exact_max_qubits

    @property
    def num_states(self):
        return len(self.states)

    @property
    def empty_state(self):
        return self.states[self.empty_index]

    def valid_mask(self, f: Frontier):
        if f.done:
            return self.is_empty.copy()
        ry, rz, ctl = self.ry, self.rz, self.ctl
        ok = (rz & f.clean) == 0
        if f.prev < 0:
            ok &= rz == 0
        else:
            p = f.prev
            en4 = self.rz[p] | self.ctl[p] | self.tgt[p]
            if self.rules.ry_after_ry:
                en4 |= self.ry[p]
            ok &= (ry & ~en4) == 0
            ok &= (rz & ~(self.ry[p] | self.tgt[p])) == 0
        after = f.clean & ~ry
        ok &= (ctl & after) == 0
        still_open = f.opened & ~self._blk_single
        ok &= (ctl & still_open) == 0
        return ok

    def advance(self, f: Frontier, idx) -> Frontier:
        if self.is_empty[idx]:
            return Frontier(f.depth + 1, f.clean, f.opened, idx, True)
        ry, tgt, ctl = int(self.ry[idx]), int(self.tgt[idx]), int(self.ctl[idx])
        clean = f.clean & ~ry & ~tgt
        opened = (f.opened & ~int(self._blk_single[idx]) & ~int(self._blk_cnot[idx])) | ctl
        return Frontier(f.depth + 1, clean, opened, idx, False)

    def extensions(self, f: Frontier):
        """Catalog indices of the layer states that may follow prefix ``f``."""
        return np.flatnonzero(self.valid_mask(f))

    def frontier_of(self, layers) -> Frontier:
        f = self.root
        for s in layers:
            idx = self.index[s] if isinstance(s, LayerState) else int(s)
            f = self.advance(f, idx)
        return f

    def count_from(self, f: Frontier) -> int:
        remaining = self.n_layers - f.depth
        if remaining <= 0 or f.done:
            return 1
        key = (remaining, f.clean, f.opened, f.prev)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        if len(self._memo) >= self.budget:
            raise BudgetExceeded(f"memo budget of {self.budget} entries exceeded")
        kids = self.extensions(f)
        if remaining == 1:
            total = int(kids.size)
        else:
            total = sum(self.count_from(self.advance(f, int(i))) for i in kids)
        self._memo[key] = total
        return total

    def count(self) -> int:
        return self.count_from(self.root)

    def child_counts(self, f: Frontier):
        kids = self.extensions(f)
        return kids, [self.count_from(self.advance(f, int(i))) for i in kids]

    def make_path(self, layers) -> AnsatzPath:
        return AnsatzPath(tuple(layers))

    def path_from_indices(self, idxs) -> AnsatzPath:
        return AnsatzPath(tuple(self.states[i] for i in idxs))

    def _child_distribution(self, f: Frontier):
        hit = self._draw_cache.get(f)
        if hit is None:
            kids, counts = self.child_counts(f)
            w = np.array(counts, dtype=float)
            hit = self._draw_cache[f] = (kids, w / w.sum())
        return hit

    def sample(self, rng: np.random.Generator) -> AnsatzPath:
        f, idxs = self.root, []
        for _ in range(self.n_layers):
            if self.exact_sampling:
                kids, p = self._child_distribution(f)
                i = int(kids[rng.choice(kids.size, p=p)])
            else:
                kids = self.extensions(f)
                i = int(kids[rng.integers(kids.size)])
            idxs.append(i)
            f = self.advance(f, i)
        return self.path_from_indices(idxs)

    def enumerate_paths(self):
        """Yield every valid path (only sensible for small spaces)."""
        def rec(f, idxs):
            if f.depth == self.n_layers:
                yield self.path_from_indices(idxs)
                return
            for i in self.extensions(f):
                yield from rec(self.advance(f, int(i)), idxs + [int(i)])
        yield from rec(self.root, [])

    def check(self, path: AnsatzPath) -> CheckResult:
        return check_constraints(path, self.rules)

    def canonicalize(self, path, params=None):
        return canonicalize(path, params, self.n_layers, self.rules)


def _rot_arr(x, n):
    return (x >> 1) | ((x & 1) << (n - 1))


def count_paths(n, n_layers, constrained=True, rules: Rules = DEFAULT_RULES,
                budget=5_000_000) -> int:
    if not constrained:
        return len(enumerate_layer_states(n)) ** n_layers
    return SearchSpace(n, n_layers, rules, budget=budget).count()


def sample_uniform(space: SearchSpace, rng) -> AnsatzPath:
    return space.sample(rng)


# ---------------------------------------------------------------------------
# asexual genetic operators


@dataclass
class Edit:
    """Result of a genetic operator.

    ``origin[l]`` is the layer index in the parent that output layer ``l``
    was taken from unchanged, or ``None`` when the layer is new.  It refers
    to the raw edit, before canonicalization.
    """

    path: AnsatzPath
    op: str
    raw: Tuple[LayerState, ...] = field(default=())
    origin: Tuple[Optional[int], ...] = field(default=())


def _finish(space, raw, origin, op):
    path, _ = space.canonicalize(raw)
    return Edit(path, op, tuple(raw), tuple(origin))


def _retry(fn, path, space, rng, max_tries):
    edit = None
    for _ in range(max_tries):
        edit = fn(path, space, rng)
        if edit.path != path:
            return edit
    return edit


def _mutate_once(path, space, rng):
    l = int(rng.integers(path.n_layers))
    cur = space.index[path.layers[l]]
    j = int(rng.integers(space.num_states - 1))
    j += j >= cur
    raw = list(path.layers)
    raw[l] = space.states[j]
    origin = [i if i != l else None for i in range(path.n_layers)]
    return _finish(space, raw, origin, "mutate")


def _delete_once(path, space, rng):
    nonempty = [l for l, s in enumerate(path.layers) if not s.is_empty]
    l = nonempty[int(rng.integers(len(nonempty)))]
    raw = list(path.layers[:l]) + list(path.layers[l + 1:]) + [space.empty_state]
    origin = [i for i in range(path.n_layers) if i != l] + [None]
    return _finish(space, raw, origin, "delete")


def _amplify_once(path, space, rng):
    pos = int(rng.integers(path.depth + 1))
    j = int(rng.integers(space.num_states))
    raw = list(path.layers[:pos]) + [space.states[j]] + list(path.layers[pos:])
    origin = list(range(pos)) + [None] + list(range(pos, path.n_layers))
    return _finish(space, raw[: path.n_layers], origin[: path.n_layers], "amplify")


def mutate(path, space, rng, max_tries=16) -> Edit:
    return _retry(_mutate_once, path, space, rng, max_tries)


def delete(path, space, rng, max_tries=16) -> Edit:
    if path.depth == 0:
        raise SearchSpaceError("cannot delete from the empty path")
    return _retry(_delete_once, path, space, rng, max_tries)


def amplify(path, space, rng, max_tries=16) -> Edit:
    return _retry(_amplify_once, path, space, rng, max_tries)


OPERATORS = {"mutate": mutate, "delete": delete, "amplify": amplify}


def random_operator(path, space, rng, max_tries=16) -> Edit:
    """Apply one uniformly chosen operator (delete is skipped on the empty path)."""
    names = ["mutate", "delete", "amplify"] if path.depth else ["mutate", "amplify"]
    name = names[int(rng.integers(len(names)))]
    return OPERATORS[name](path, space, rng, max_tries)
