"""Weight-sharing parameter pool and the candidate tree with double epsilon-greedy sampling."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Hashable, List, Optional, Tuple

import numpy as np


class ParameterPool:
    """Map ``(state, layer)`` to that layer's parameter vector.

    Layers are numbered from 1.  Entries are created on first access and
    start at zero; their length is ``state.num_params``.
    """

    def __init__(self):
        self._entries: Dict[Tuple[Hashable, int], np.ndarray] = {}

    def __len__(self):
        return len(self._entries)

    def entry(self, state, layer) -> np.ndarray:
        key = (state, layer)
        vec = self._entries.get(key)
        if vec is None:
            vec = np.zeros(state.num_params)
            self._entries[key] = vec
        return vec

    def lookup(self, path) -> np.ndarray:
        parts = [self.entry(s, l) for l, s in enumerate(path.layers, start=1)]
        return np.concatenate(parts) if parts else np.zeros(0)

    def update(self, path, params):
        params = np.asarray(params, dtype=float).ravel()
        if params.size != path.num_params:
            raise ValueError(
                f"path takes {path.num_params} parameters, got {params.size}"
            )
        for l, (s, sl) in enumerate(zip(path.layers, path.layer_slices()), start=1):
            self._entries[(s, l)] = params[sl].copy()

    def items(self):
        return self._entries.items()

    def to_dict(self):
        return [
            {"state": s.to_text(), "layer": l, "values": v.tolist()}
            for (s, l), v in self._entries.items()
        ]

    @classmethod
    def from_dict(cls, rows, parse_state: Callable[[str], object]):
        pool = cls()
        for row in rows:
            pool._entries[(parse_state(row["state"]), int(row["layer"]))] = np.array(
                row["values"], dtype=float
            )
        return pool


def pool_lookup(pool: ParameterPool, path) -> np.ndarray:
    return pool.lookup(path)


def pool_update(pool: ParameterPool, path, params):
    pool.update(path, params)


@dataclass
class TreeNode:
    leaf_count: int = 0
    train_count: int = 0
    children: Dict[Hashable, "TreeNode"] = field(default_factory=dict)


@dataclass(frozen=True)
class GreedyConfig:
    epsilon1: float = 0.8
    epsilon2: float = 0.8

    def __post_init__(self):
        for e in (self.epsilon1, self.epsilon2):
            if not 0.0 <= e <= 1.0:
                raise ValueError(f"epsilon {e} outside [0, 1]")


class CandidateTree:
    """Prefix tree of trained paths; leaves sit at depth ``n_layers``."""

    def __init__(self, n_layers):
        self.n_layers = n_layers
        self.root = TreeNode()

    @property
    def num_leaves(self):
        return self.root.leaf_count

    def insert(self, path):
        """Record one training of ``path``; returns True if it is a new leaf."""
        layers = path.layers
        if len(layers) != self.n_layers:
            raise ValueError(f"path has {len(layers)} layers, tree expects {self.n_layers}")
        node, trail = self.root, [self.root]
        for s in layers:
            child = node.children.get(s)
            if child is None:
                child = node.children[s] = TreeNode()
            node = child
            trail.append(node)
        new = node.leaf_count == 0
        for v in trail:
            if new:
                v.leaf_count += 1
            v.train_count += 1
        return new

    def node(self, prefix) -> Optional[TreeNode]:
        node = self.root
        for s in prefix:
            node = node.children.get(s)
            if node is None:
                return None
        return node

    def child_probabilities(self, node: TreeNode, eta) -> Tuple[List, np.ndarray]:
        keys = list(node.children)
        w = np.array(
            [node.children[k].leaf_count + eta * node.children[k].train_count for k in keys],
            dtype=float,
        )
        return keys, w / w.sum()

    def walk(self, rng, eta) -> Tuple:
        node, out = self.root, []
        for _ in range(self.n_layers):
            keys, p = self.child_probabilities(node, eta)
            k = keys[int(rng.choice(len(keys), p=p))]
            out.append(k)
            node = node.children[k]
        return tuple(out)

    def iter_nodes(self):
        stack = [((), self.root)]
        while stack:
            prefix, node = stack.pop()
            yield prefix, node
            for k, child in node.children.items():
                stack.append((prefix + (k,), child))

    def check(self):
        """Raise if the leaf-count recursion is broken anywhere."""
        for prefix, node in self.iter_nodes():
            if len(prefix) == self.n_layers:
                if node.leaf_count != 1 or node.children:
                    raise AssertionError(f"bad leaf at {prefix}")
            elif node.children:
                total = sum(c.leaf_count for c in node.children.values())
                if node.leaf_count != total:
                    raise AssertionError(f"leaf count mismatch at {prefix}")
            if node.train_count < 0:
                raise AssertionError("negative training count")
        return True

    def to_dict(self):
        return [
            {"prefix": [s.to_text() for s in prefix], "leaf_count": node.leaf_count,
             "train_count": node.train_count}
            for prefix, node in self.iter_nodes()
        ]

    @classmethod
    def from_dict(cls, rows, n_layers, parse_state):
        tree = cls(n_layers)
        for row in sorted(rows, key=lambda r: len(r["prefix"])):
            node = tree.root
            for text in row["prefix"]:
                node = node.children.setdefault(parse_state(text), TreeNode())
            node.leaf_count = int(row["leaf_count"])
            node.train_count = int(row["train_count"])
        return tree


def sample_path(tree: CandidateTree, space, cfg: GreedyConfig, rng, make_path=None):
    """Double epsilon-greedy draw.

    With probability ``epsilon1`` (and a non-empty tree) walk the tree with
    ``eta`` fixed for the whole walk: ``eta = 1`` with probability
    ``epsilon2``, else 0.  Otherwise draw uniformly from ``space``.
    Returns ``(path, from_tree)``.
    """
    if tree.num_leaves > 0 and rng.random() < cfg.epsilon1:
        eta = 1.0 if rng.random() < cfg.epsilon2 else 0.0
        layers = tree.walk(rng, eta)
        build = make_path or _default_make_path
        return build(layers), True
    return space.sample(rng), False


def _default_make_path(layers):
    from .space import AnsatzPath

    return AnsatzPath(layers)
