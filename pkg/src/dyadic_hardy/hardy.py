"""Both sides of the dual Hardy inequality, the necessity identity and the dual form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tree import (
    InstanceError,
    NodeAggregates,
    PExponent,
    TreeInstance,
    build_instance,
    compute_aggregates,
    level_slice,
    lengths,
    node_count,
)


@dataclass(frozen=True, eq=False)
class DualData:
    """Change of variables ``eta = phi * lam**(-1/p)``, ``omega**(1-p) = alpha / |I|**p``."""

    eta: np.ndarray
    omega: np.ndarray
    psi: np.ndarray | None = None


def dual_data(instance: TreeInstance, exp: PExponent, psi=None) -> DualData:
    p = exp.p
    eta = instance.phi * instance.lam ** (-1.0 / p)
    omega = (instance.alpha / instance.lengths**p) ** (1.0 / (1.0 - p))
    if psi is not None:
        psi = _node_vector(psi, instance.depth, "psi")
    return DualData(eta, omega, psi)


def _node_vector(x, depth: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    n = node_count(depth)
    if arr.shape != (n,):
        raise InstanceError(f"{name}: expected length {n}, got shape {arr.shape}", field=name)
    return arr


def hardy_lhs(agg: NodeAggregates, instance: TreeInstance, exp: PExponent) -> float:
    """``sum_I alpha_I f_I**p`` (the root has unit length)."""
    return float(np.sum(instance.alpha * agg.f**exp.p))


def hardy_rhs(agg: NodeAggregates, exp: PExponent) -> float:
    return exp.c_p * float(agg.F[0])


def hardy_ratio(instance: TreeInstance, exp: PExponent) -> float:
    """``sum alpha_I f_I**p / sum phi(I)**p``; at most ``C(p)`` under the testing condition."""
    denom = float(np.sum(instance.phi**exp.p))
    if denom == 0.0:
        raise ZeroDivisionError("hardy_ratio undefined for phi identically zero")
    agg = compute_aggregates(instance, exp)
    return hardy_lhs(agg, instance, exp) / denom


def subtree_nodes(node: int, depth: int) -> np.ndarray:
    """0-based indices of ``node``'s subtree, level by level."""
    out = []
    lo = hi = int(node)
    while lo <= node_count(depth):
        out.append(np.arange(lo, hi + 1) - 1)
        lo, hi = 2 * lo, 2 * hi + 1
    return np.concatenate(out)


def necessity_identity(instance: TreeInstance, exp: PExponent, node: int) -> tuple[float, float]:
    """Hardy thesis at ``node`` for ``phi = lam**(1/p)`` with unit constant.

    Returns ``(lhs, rhs)``: the subtree-normalized left side and ``(phi**p)_I``.
    Both are built from explicit subtree sums and coincide with ``(A_I, v_I)``.
    """
    p, q = exp.p, exp.conj
    n = node_count(instance.depth)
    if not 1 <= node <= n:
        raise IndexError(f"node {node} outside 1..{n}")
    length = instance.lengths
    phi = instance.lam ** (1.0 / p)
    weight = phi * instance.lam ** (1.0 / q)
    sub = subtree_nodes(node, instance.depth)
    inner = descendant_sum(weight, instance.depth)[sub] / length[sub]
    scale = length[node - 1]
    lhs = float(np.sum(instance.alpha[sub] * inner**p)) / scale
    rhs = float(np.sum(phi[sub] ** p)) / scale
    return lhs, rhs


def ancestor_sum(psi, instance: TreeInstance) -> np.ndarray:
    """Sum of ``psi`` along the root-to-node path, one top-down pass."""
    psi = _node_vector(psi, instance.depth, "psi")
    out = np.empty_like(psi)
    out[0] = psi[0]
    for lvl in range(1, instance.depth + 1):
        s = level_slice(lvl)
        parents = (np.arange(s.start, s.stop) - 1) // 2
        out[s] = out[parents] + psi[s]
    return out


def descendant_sum(x, depth: int) -> np.ndarray:
    """Sum of ``x`` over each node's subtree, one bottom-up pass."""
    x = _node_vector(x, depth, "x")
    out = x.copy()
    for lvl in range(depth - 1, -1, -1):
        s = level_slice(lvl)
        out[s] = out[s] + out[2 * s.start + 1 : 2 * s.stop + 1 : 2] + out[2 * s.start + 2 : 2 * s.stop + 1 : 2]
    return out


def adjointness_gap(eta, psi, instance: TreeInstance) -> float:
    """Difference of the two orders of summation of ``sum_{J >= I} psi(J) eta(I) lam_I``; zero up to rounding."""
    eta = _node_vector(eta, instance.depth, "eta")
    lam = instance.lam
    left = float(np.sum(ancestor_sum(psi, instance) * eta * lam))
    right = float(np.sum(_node_vector(psi, instance.depth, "psi") * descendant_sum(eta * lam, instance.depth)))
    return left - right


def dual_ratio(instance: TreeInstance, psi, exp: PExponent) -> float:
    """``sum lam_I (sum_{J >= I} psi_J)**p' / sum psi_I**p' omega_I``."""
    psi = _node_vector(psi, instance.depth, "psi")
    if np.any(psi < 0):
        raise ValueError("psi must be nonnegative")
    q = exp.conj
    omega = dual_data(instance, exp).omega
    denom = float(np.sum(psi**q * omega))
    if denom == 0.0:
        raise ZeroDivisionError("dual_ratio undefined for psi identically zero")
    return float(np.sum(instance.lam * ancestor_sum(psi, instance) ** q)) / denom


def dual_constant_candidates(exp: PExponent) -> dict[str, float]:
    """The two readings of the constant in the dual form, reported side by side."""
    return {"c_p": exp.c_p, "c_p_pow_conj_over_p": exp.c_p ** (exp.conj / exp.p)}


__all__ = [
    "DualData",
    "adjointness_gap",
    "ancestor_sum",
    "build_instance",
    "descendant_sum",
    "dual_constant_candidates",
    "dual_data",
    "dual_ratio",
    "hardy_lhs",
    "hardy_ratio",
    "hardy_rhs",
    "lengths",
    "necessity_identity",
    "subtree_nodes",
]
