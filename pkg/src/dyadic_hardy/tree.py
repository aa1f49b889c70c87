"""Finite dyadic trees in heap order and their bottom-up node aggregates.

Node ``i`` (1-based) has children ``2i`` and ``2i + 1``; the root is the unit
interval, so a node at level ``l`` has length ``2**-l``.  Per-node arrays are
stored 0-based, i.e. entry ``i - 1`` belongs to node ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp


class InstanceError(ValueError):
    """Invalid tree instance; ``node`` is the 1-based offending node if any."""

    def __init__(self, message: str, node: int | None = None, field: str | None = None):
        super().__init__(message)
        self.node = node
        self.field = field


@dataclass(frozen=True)
class PExponent:
    """Exponent ``p > 1`` with its Hölder conjugate and the constant ``(p')**p``."""

    p: float

    def __post_init__(self):
        p = float(self.p)
        if not np.isfinite(p) or p <= 1.0:
            raise ValueError(f"exponent must satisfy 1 < p < inf, got {self.p!r}")
        object.__setattr__(self, "p", p)

    @property
    def conj(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def c_p(self) -> float:
        return self.conj ** self.p


def node_count(depth: int) -> int:
    return 2 ** (depth + 1) - 1


def level(node: int) -> int:
    return int(node).bit_length() - 1


def interval_length(node: int, depth: int) -> float:
    """Length of the dyadic interval at ``node``; the root has length 1."""
    node = int(node)
    if not 1 <= node <= node_count(depth):
        raise IndexError(f"node {node} outside 1..{node_count(depth)} for depth {depth}")
    return 2.0 ** -level(node)


@lru_cache(maxsize=None)
def _lengths(depth: int) -> np.ndarray:
    nodes = np.arange(1, node_count(depth) + 1)
    out = np.ldexp(1.0, -(np.floor(np.log2(nodes)).astype(int)))
    out.flags.writeable = False
    return out


def lengths(depth: int) -> np.ndarray:
    """Interval lengths of all nodes, 0-based heap order (read-only)."""
    return _lengths(int(depth))


def level_slice(lvl: int) -> slice:
    """0-based slice of the nodes at level ``lvl``."""
    return slice(2**lvl - 1, 2 ** (lvl + 1) - 1)


@lru_cache(maxsize=None)
def containment_matrix(depth: int) -> sp.csr_matrix:
    """Sparse 0/1 matrix ``M`` with ``M[I, J] = 1`` iff ``J`` is in the subtree of ``I``.

    ``M @ x`` gives subtree sums, ``M.T @ x`` gives root-to-node path sums.
    """
    n = node_count(depth)
    rows, cols = [], []
    for j in range(1, n + 1):
        anc = j
        while anc >= 1:
            rows.append(anc - 1)
            cols.append(j - 1)
            anc //= 2
    data = np.ones(len(rows))
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def _as_node_array(values, n: int, name: str) -> np.ndarray:
    try:
        arr = np.array(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InstanceError(f"{name}: not a sequence of reals ({exc})", field=name) from None
    if arr.ndim != 1 or arr.shape[0] != n:
        got = arr.shape[0] if arr.ndim == 1 else arr.shape
        raise InstanceError(f"{name}: expected length {n}, got {got}", field=name)
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise InstanceError(f"{name}: non-finite value at node {bad[0] + 1}", node=int(bad[0]) + 1, field=name)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class TreeInstance:
    """Complete dyadic tree of a given depth carrying weights, measure and test function."""

    depth: int
    alpha: np.ndarray
    lam: np.ndarray
    phi: np.ndarray

    @property
    def n_nodes(self) -> int:
        return node_count(self.depth)

    @property
    def lengths(self) -> np.ndarray:
        return lengths(self.depth)

    def with_phi(self, phi) -> "TreeInstance":
        return build_instance(self.depth, self.alpha, self.lam, phi)

    def with_alpha(self, alpha) -> "TreeInstance":
        return build_instance(self.depth, alpha, self.lam, self.phi)

    def __eq__(self, other):
        if not isinstance(other, TreeInstance):
            return NotImplemented
        return (
            self.depth == other.depth
            and np.array_equal(self.alpha, other.alpha)
            and np.array_equal(self.lam, other.lam)
            and np.array_equal(self.phi, other.phi)
        )

    __hash__ = None


def build_instance(depth: int, alpha, lam, phi) -> TreeInstance:
    """Validate and freeze a tree instance.

    Raises :class:`InstanceError` on length mismatch, ``alpha <= 0``,
    ``lam <= 0`` or ``phi < 0``, naming the first offending node.
    """
    if isinstance(depth, bool) or int(depth) != depth or depth < 0:
        raise InstanceError(f"depth must be a nonnegative integer, got {depth!r}", field="depth")
    depth = int(depth)
    n = node_count(depth)
    alpha = _as_node_array(alpha, n, "alpha")
    lam = _as_node_array(lam, n, "lambda")
    phi = _as_node_array(phi, n, "phi")
    for name, arr, bad in (
        ("alpha", alpha, alpha <= 0),
        ("lambda", lam, lam <= 0),
        ("phi", phi, phi < 0),
    ):
        idx = np.flatnonzero(bad)
        if idx.size:
            node = int(idx[0]) + 1
            rel = ">= 0" if name == "phi" else "> 0"
            raise InstanceError(f"{name} must be {rel}; violated at node {node} (value {arr[idx[0]]!r})", node=node, field=name)
    return TreeInstance(depth, alpha, lam, phi)


@dataclass(frozen=True, eq=False)
class NodeAggregates:
    """Per-node averages and increments, all 0-based heap-order arrays.

    ``big_lambda`` is the subtree mass, ``v`` its average over the interval,
    ``F`` the average of ``phi**p``, ``f`` the average of ``phi * lam**(1/p')``
    and ``A`` the weighted testing sum.  ``a``, ``b``, ``c`` are the local
    increments that lift the children's midpoint to the parent.
    """

    big_lambda: np.ndarray
    v: np.ndarray
    F: np.ndarray
    f: np.ndarray
    A: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def point(self, node: int) -> np.ndarray:
        i = int(node) - 1
        return np.array([self.F[i], self.f[i], self.A[i], self.v[i]])

    @cached_property
    def points(self) -> np.ndarray:
        """All node points ``(F, f, A, v)`` stacked as an ``(n, 4)`` array."""
        return np.stack([self.F, self.f, self.A, self.v], axis=-1)


def compute_aggregates(instance: TreeInstance, exp: PExponent) -> NodeAggregates:
    """One bottom-up pass over the levels; each node adds its local term, then left, then right child."""
    p, q = exp.p, exp.conj
    n = instance.n_nodes
    length = instance.lengths
    lam, phi, alpha = instance.lam, instance.phi, instance.alpha

    a = (lam / length) ** (1.0 / q)
    b = phi / length ** (1.0 / p)
    big_lambda = np.empty(n)
    v = np.empty(n)
    F = np.empty(n)
    f = np.empty(n)
    A = np.empty(n)
    c = np.empty(n)

    for lvl in range(instance.depth, -1, -1):
        s = level_slice(lvl)
        loc_v = lam[s] / length[s]
        loc_F = phi[s] ** p / length[s]
        loc_f = phi[s] * lam[s] ** (1.0 / q) / length[s]
        if lvl == instance.depth:
            big_lambda[s] = lam[s]
            v[s] = loc_v
            F[s] = loc_F
            f[s] = loc_f
        else:
            left = slice(2 * s.start + 1, 2 * s.stop + 1, 2)
            right = slice(2 * s.start + 2, 2 * s.stop + 1, 2)
            big_lambda[s] = lam[s] + big_lambda[left] + big_lambda[right]
            v[s] = loc_v + 0.5 * v[left] + 0.5 * v[right]
            F[s] = loc_F + 0.5 * F[left] + 0.5 * F[right]
            f[s] = loc_f + 0.5 * f[left] + 0.5 * f[right]
        c[s] = alpha[s] * v[s] ** p / length[s]
        if lvl == instance.depth:
            A[s] = c[s]
        else:
            A[s] = c[s] + 0.5 * A[left] + 0.5 * A[right]

    arrays = (big_lambda, v, F, f, A, a, b, c)
    for arr in arrays:
        arr.flags.writeable = False
    return NodeAggregates(*arrays)


def testing_margins(instance: TreeInstance, exp: PExponent, agg: NodeAggregates | None = None) -> np.ndarray:
    """``v_I - A_I`` per node; the testing condition holds iff all are nonnegative."""
    if agg is None:
        agg = compute_aggregates(instance, exp)
    return agg.v - agg.A
