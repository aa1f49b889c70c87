"""Numerical exploration of the best constant in the Hardy inequality."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .tree import (
    PExponent,
    TreeInstance,
    build_instance,
    compute_aggregates,
    containment_matrix,
    level_slice,
    lengths,
    node_count,
    testing_margins,
)

log = logging.getLogger(__name__)

ALPHA_FLOOR = 1e-300
FAMILIES = ("uniform", "geometric", "random")


@dataclass(frozen=True)
class SaturatedWeights:
    alpha: np.ndarray
    unsaturated: tuple[int, ...]


def saturating_alpha(depth: int, lam, exp: PExponent) -> SaturatedWeights:
    """Weights making the testing condition an equality ``A_I = v_I`` at every node.

    Bottom-up: ``alpha_I = |I| (v_I - (A_- + A_+)/2) / v_I**p``.  A node where
    that is not positive gets ``ALPHA_FLOOR`` and is reported as unsaturated.
    """
    p = exp.p
    n = node_count(depth)
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (n,) or np.any(lam <= 0):
        raise ValueError(f"lambda must be {n} positive values")
    length = lengths(depth)
    v = np.empty(n)
    A = np.empty(n)
    alpha = np.empty(n)
    unsat = []
    for lvl in range(depth, -1, -1):
        s = level_slice(lvl)
        if lvl == depth:
            v[s] = lam[s] / length[s]
            tilde_A = np.zeros(s.stop - s.start)
        else:
            left = slice(2 * s.start + 1, 2 * s.stop + 1, 2)
            right = slice(2 * s.start + 2, 2 * s.stop + 1, 2)
            v[s] = lam[s] / length[s] + 0.5 * v[left] + 0.5 * v[right]
            tilde_A = 0.5 * A[left] + 0.5 * A[right]
        raw = length[s] * (v[s] - tilde_A) / v[s] ** p
        bad = ~(raw > 0)
        raw = np.where(bad, ALPHA_FLOOR, raw)
        unsat.extend((np.flatnonzero(bad) + s.start + 1).tolist())
        alpha[s] = raw
        A[s] = raw * v[s] ** p / length[s] + tilde_A
    return SaturatedWeights(alpha, tuple(sorted(unsat)))


def family_lambda(family: str, depth: int, gen: np.random.Generator | None = None, s: float = 2.0) -> np.ndarray:
    """Measure families: ``uniform`` (``|I|``), ``geometric`` (``|I|**s``), ``random`` (log-uniform on [1e-2, 1])."""
    length = lengths(depth)
    if family == "uniform":
        return length.copy()
    if family == "geometric":
        return length**s
    if family == "random":
        if gen is None:
            raise ValueError("family 'random' needs a generator")
        return 10.0 ** gen.uniform(-2.0, 0.0, node_count(depth))
    raise ValueError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")


@dataclass(frozen=True, eq=False)
class RatioMaximum:
    phi: np.ndarray
    ratio: float
    history: np.ndarray
    iterations: int


class _RatioObjective:
    """``R(phi) = sum alpha_I f_I**p / sum phi**p`` for a batch of test functions."""

    def __init__(self, instance: TreeInstance, exp: PExponent):
        self.p = exp.p
        self.M = containment_matrix(instance.depth)
        self.weight = instance.lam ** (1.0 / exp.conj)
        self.inv_len = 1.0 / instance.lengths
        self.alpha = instance.alpha

    def numerator(self, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        f = (self.M @ (phi * self.weight).T).T * self.inv_len
        return np.sum(self.alpha * f**self.p, axis=-1), f

    def ratio_and_grad(self, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Ratio and its gradient at points of the unit ``p``-sphere."""
        num, f = self.numerator(phi)
        outer = self.p * self.alpha * f ** (self.p - 1) * self.inv_len
        grad_num = (self.M.T @ outer.T).T * self.weight
        return num, grad_num - self.p * num[:, None] * phi ** (self.p - 1)


def _normalize(phi: np.ndarray, p: float) -> np.ndarray:
    norm = np.sum(phi**p, axis=-1, keepdims=True) ** (1.0 / p)
    return phi / norm


def _ascend(ratio_and_grad, x0: np.ndarray, q: float, iters: int, step: float, rtol: float):
    """Projected normalized-gradient ascent on the unit ``q``-sphere, one row per start."""
    x = _normalize(x0, q)
    ratio, grad = ratio_and_grad(x)
    steps = np.full(x.shape[0], float(step))
    history = [float(ratio.max())]
    it = 0
    for it in range(1, iters + 1):
        live = np.flatnonzero(steps > rtol * step)
        if live.size == 0:
            break
        g = grad[live]
        gnorm = np.sqrt(np.sum(g**2, axis=-1, keepdims=True))
        if not np.all(np.isfinite(gnorm)):
            bad = live[int(np.flatnonzero(~np.isfinite(gnorm[:, 0]))[0])]
            raise FloatingPointError(f"non-finite gradient at iteration {it}, iterate {x[bad]!r}")
        direction = np.divide(g, gnorm, out=np.zeros_like(g), where=gnorm > 0)
        trial = np.maximum(x[live] + steps[live, None] * direction, 0.0)
        trial = np.where(np.sum(trial, axis=-1, keepdims=True) == 0, x[live], trial)
        trial = _normalize(trial, q)
        t_ratio, t_grad = ratio_and_grad(trial)
        better = t_ratio > ratio[live]
        acc = live[better]
        x[acc] = trial[better]
        ratio[acc] = t_ratio[better]
        grad[acc] = t_grad[better]
        steps[live[~better]] *= 0.5
        history.append(float(ratio.max()))
    best = int(np.argmax(ratio))
    return x[best].copy(), float(ratio[best]), np.array(history), it


def _random_starts(first: np.ndarray, seed: int, starts: int, vertex_scores: np.ndarray) -> np.ndarray:
    rows = [first]
    for k in range(1, starts):
        rows.append(np.random.default_rng([seed, k]).uniform(0.0, 1.0, first.size) ** 2)
    # the best single-node test function; sparse optima are slow to reach by clipping alone
    rows.append(np.eye(first.size)[int(np.argmax(vertex_scores))])
    return np.array(rows)


def maximize_ratio(instance: TreeInstance, exp: PExponent, iters: int = 5000, step: float = 0.1, seed: int = 0,
                   starts: int = 16, rtol: float = 1e-10) -> RatioMaximum:
    """Multistart projected gradient ascent of the Hardy ratio over ``phi >= 0``.

    Each start moves along the sphere gradient with step ``step`` (relative to
    the unit ``p``-norm), clips at zero and renormalizes.  A move that does not
    improve the ratio is rejected and that start's step is halved; a start
    stops once its step falls below ``rtol`` times the initial step.  Start 0
    is ``phi = lam**(1/p)``; the others are drawn from streams ``(seed, k)``,
    plus one extra start at the best indicator of a single node.
    The reported ratio is the best iterate seen, hence non-decreasing.
    """
    obj = _RatioObjective(instance, exp)
    vertex = obj.weight**exp.p * (obj.M.T @ (obj.alpha * obj.inv_len**exp.p))
    x0 = _random_starts(instance.lam ** (1.0 / exp.p), seed, starts, vertex)
    phi, ratio, history, it = _ascend(obj.ratio_and_grad, x0, exp.p, iters, step, rtol)
    return RatioMaximum(phi, ratio, history, it)


def maximize_dual_ratio(instance: TreeInstance, exp: PExponent, iters: int = 5000, step: float = 0.1, seed: int = 0,
                        starts: int = 16, rtol: float = 1e-10) -> RatioMaximum:
    """Same ascent for ``sum lam (ancestor sum psi)**p' / sum psi**p' omega`` over ``psi >= 0``."""
    q, p = exp.conj, exp.p
    M = containment_matrix(instance.depth)
    omega = (instance.alpha / instance.lengths**p) ** (1.0 / (1.0 - p))
    lam = instance.lam
    # psi = chi * omega**(-1/q) turns the denominator into the plain q-norm of chi
    scale = omega ** (-1.0 / q)

    def ratio_and_grad(chi):
        g = (M.T @ (chi * scale).T).T
        num = np.sum(lam * g**q, axis=-1)
        grad = (M @ (q * lam * g ** (q - 1)).T).T * scale
        return num, grad - q * num[:, None] * chi ** (q - 1)

    x0 = _random_starts(np.ones(instance.n_nodes), seed, starts, scale**q * (M @ lam))
    chi, ratio, history, it = _ascend(ratio_and_grad, x0, q, iters, step, rtol)
    return RatioMaximum(chi * scale, ratio, history, it)


def family_instance(family: str, depth: int, exp: PExponent, seed: int, s: float = 2.0) -> TreeInstance:
    """Family measure with saturating weights; ``phi = lam**(1/p)``."""
    gen = np.random.default_rng([seed, depth])
    lam = family_lambda(family, depth, gen, s)
    sat = saturating_alpha(depth, lam, exp)
    if sat.unsaturated:
        log.warning("family %s depth %d: unsaturated nodes %s", family, depth, sat.unsaturated)
    return build_instance(depth, sat.alpha, lam, lam ** (1.0 / exp.p))


SWEEP_HEADER = ("p", "depth", "family", "ratio", "cP", "fraction")


def p_sweep(depth: int, family: str, p_grid, seed: int, iters: int = 5000, starts: int = 16, s: float = 2.0,
            depths=None) -> list[tuple]:
    """Best ratio found per ``(p, depth)``; rows follow :data:`SWEEP_HEADER`.

    ``depths`` defaults to ``[depth]``; pass a range for a depth sweep.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")
    rows = []
    for task, p in enumerate(p_grid):
        exp = PExponent(p)
        for d in depths if depths is not None else [depth]:
            inst = family_instance(family, d, exp, seed, s)
            agg = compute_aggregates(inst, exp)
            if np.any(testing_margins(inst, exp, agg) < -1e-9 * agg.v):
                log.warning("p=%g depth %d: testing condition fails", p, d)
            best = maximize_ratio(inst, exp, iters=iters, seed=seed + task, starts=starts)
            rows.append((exp.p, d, family, best.ratio, exp.c_p, best.ratio / exp.c_p))
    return rows


__all__ = [
    "FAMILIES",
    "RatioMaximum",
    "SWEEP_HEADER",
    "SaturatedWeights",
    "family_instance",
    "family_lambda",
    "maximize_dual_ratio",
    "maximize_ratio",
    "p_sweep",
    "saturating_alpha",
]
