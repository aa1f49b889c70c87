"""The explicit Bellman function, its domain, derivatives and the main inequality.

Points are ``(F, f, A, v)``.  Most functions accept a single point or an
array of shape ``(..., 4)`` and broadcast over the leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np

from .tree import PExponent, TreeInstance, compute_aggregates, testing_margins

POSITIVE_FLOOR = 1e-300
REL_SLACK = 1e-12


class DomainError(ValueError):
    """A point outside the Bellman domain; ``violations`` names the failed constraints."""

    def __init__(self, message: str, violations=(), node: int | None = None):
        super().__init__(message)
        self.violations = tuple(violations)
        self.node = node


class SingularPointError(ValueError):
    pass


class BellmanPoint(NamedTuple):
    F: float
    f: float
    A: float
    v: float


class DomainCheck(NamedTuple):
    ok: bool
    violations: tuple[str, ...]

    def __bool__(self):
        return self.ok


def _split(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (4,):
        raise ValueError(f"expected points with trailing dimension 4, got shape {x.shape}")
    return x[..., 0], x[..., 1], x[..., 2], x[..., 3]


def _violations(x, exp: PExponent, tol: float, closed: bool):
    F, f, A, v = _split(x)
    p = exp.p
    with np.errstate(invalid="ignore", over="ignore"):
        holder = f**p <= F * v ** (p - 1) * (1 + tol)
    if closed:
        pos_A, pos_v = A >= 0, v >= 0
    else:
        pos_A, pos_v = A >= POSITIVE_FLOOR, v >= POSITIVE_FLOOR
    scale = np.maximum(np.abs(A), np.abs(v))
    return {
        "F >= 0": F >= -tol * np.maximum(np.abs(F), 1.0) if tol else F >= 0,
        "f >= 0": f >= -tol * np.maximum(np.abs(f), 1.0) if tol else f >= 0,
        "A > 0" if not closed else "A >= 0": pos_A,
        "v > 0" if not closed else "v >= 0": pos_v,
        "v >= A": v >= A - tol * scale,
        "f^p <= F v^(p-1)": holder & (f >= 0) | (f <= 0),
    }


def domain_mask(x, exp: PExponent, tol: float = REL_SLACK, closed: bool = False) -> np.ndarray:
    """Vectorized tolerant membership in the domain (or its closure)."""
    checks = _violations(x, exp, tol, closed)
    out = np.ones(np.shape(next(iter(checks.values()))), dtype=bool)
    for ok in checks.values():
        out &= ok
    return out


def in_domain(x, exp: PExponent, tol: float = REL_SLACK, closed: bool = False) -> DomainCheck:
    """Membership of a single point, with the list of violated constraints."""
    checks = _violations(x, exp, tol, closed)
    bad = tuple(name for name, ok in checks.items() if not bool(np.all(ok)))
    return DomainCheck(not bad, bad)


def _require_domain(x, exp, closed=False):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        check = in_domain(x, exp, closed=closed)
        if not check:
            raise DomainError(f"point {tuple(x)} outside domain: {', '.join(check.violations)}", check.violations)
        return
    mask = domain_mask(x, exp, closed=closed)
    if not mask.all():
        idx = np.unravel_index(np.flatnonzero(~mask)[0], mask.shape)
        check = in_domain(x[idx], exp, closed=closed)
        raise DomainError(f"point {tuple(x[idx])} at index {idx} outside domain: {', '.join(check.violations)}", check.violations)


def _denominator(A, v, p):
    return A + (p - 1.0) * v


def bellman_value(x, exp: PExponent, check: bool = True):
    """``C(p) F - p**p/(p-1) * f**p / (A + (p-1) v)**(p-1)``."""
    if check:
        _require_domain(x, exp)
    F, f, A, v = _split(x)
    p = exp.p
    out = exp.c_p * F - p**p / (p - 1.0) * f**p / _denominator(A, v, p) ** (p - 1.0)
    return float(out) if np.ndim(out) == 0 else out


def bellman_derivatives(x, exp: PExponent, check: bool = True):
    """Analytic gradient ``(..., 4)`` and Hessian ``(..., 4, 4)``."""
    if check:
        _require_domain(x, exp)
    F, f, A, v = _split(x)
    p = exp.p
    D = _denominator(A, v, p)
    pp = p**p
    pp1 = p ** (p + 1.0)
    dA = pp * f**p / D**p
    grad = np.stack(
        [
            np.full_like(F, exp.c_p),
            -pp1 / (p - 1.0) * f ** (p - 1.0) / D ** (p - 1.0),
            dA,
            (p - 1.0) * dA,
        ],
        axis=-1,
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        h_ff = -pp1 * f ** (p - 2.0) / D ** (p - 1.0)
    h_fA = pp1 * f ** (p - 1.0) / D**p
    h_AA = -pp1 * f**p / D ** (p + 1.0)
    hess = np.zeros(F.shape + (4, 4))
    hess[..., 1, 1] = h_ff
    hess[..., 1, 2] = hess[..., 2, 1] = h_fA
    hess[..., 1, 3] = hess[..., 3, 1] = (p - 1.0) * h_fA
    hess[..., 2, 2] = h_AA
    hess[..., 2, 3] = hess[..., 3, 2] = (p - 1.0) * h_AA
    hess[..., 3, 3] = (p - 1.0) ** 2 * h_AA
    return grad, hess


def _check_singular(f, exp):
    if exp.p < 2 and np.any(np.asarray(f) == 0):
        raise SingularPointError("f = 0 with p < 2: the second derivative in f is unbounded (boundary-singular point)")


def hessian_eigenvalue(x, exp: PExponent, check: bool = True):
    """The single nonzero Hessian eigenvalue.

    The Hessian is ``-k w w^T`` with ``w = (0, D, -f, -(p-1) f)`` and
    ``k = p**(p+1) f**(p-2) / D**(p+1)``, so the eigenvalue is its trace
    ``-p**(p+1) [f**(p-2)/D**(p-1) + (1 + (p-1)**2) f**p/D**(p+1)]``.
    """
    if check:
        _require_domain(x, exp)
    _, f, A, v = _split(x)
    _check_singular(f, exp)
    p = exp.p
    D = _denominator(A, v, p)
    out = -(p ** (p + 1.0)) * (f ** (p - 2.0) / D ** (p - 1.0) + (1.0 + (p - 1.0) ** 2) * f**p / D ** (p + 1.0))
    return float(out) if np.ndim(out) == 0 else out


def appendix_eigenvalue(x, exp: PExponent, check: bool = True):
    """The closed form ``-p**(2p+2) [f**(p-2)/D**(p-1) + p f**p/D**(p+1)]`` as printed in the source.

    Kept for comparison only: it disagrees with the spectrum of the analytic
    Hessian (see :func:`hessian_eigenvalue`).
    """
    if check:
        _require_domain(x, exp)
    _, f, A, v = _split(x)
    _check_singular(f, exp)
    p = exp.p
    D = _denominator(A, v, p)
    out = -(p ** (2.0 * p + 2.0)) * (f ** (p - 2.0) / D ** (p - 1.0) + p * f**p / D ** (p + 1.0))
    return float(out) if np.ndim(out) == 0 else out


def hessian_spectrum(x, exp: PExponent, check: bool = True) -> np.ndarray:
    """Eigenvalues ``(0, 0, 0, lam)`` in ascending order of index, ``lam <= 0`` last."""
    lam = np.asarray(hessian_eigenvalue(x, exp, check))
    out = np.zeros(lam.shape + (4,))
    out[..., 3] = lam
    return out


def domain_support_concavity(F: float, v: float, exp: PExponent) -> tuple[float, float]:
    """Eigenvalues of the Hessian of ``h(F, v) = F**(1/p) v**(1/p')``: ``(0, lam2)`` with ``lam2 < 0``."""
    if F <= 0 or v <= 0:
        raise ValueError(f"F and v must be positive, got F={F!r}, v={v!r}")
    p, q = exp.p, exp.conj
    lam2 = (1 - p) / p**2 * F ** (1 / p - 2) * v ** (1 / q) + (1 - q) / q**2 * F ** (1 / p) * v ** (1 / q - 2)
    return 0.0, float(lam2)


def support_function(F, v, exp: PExponent):
    """``F**(1/p) v**(1/p')``; the domain is the subgraph of this in ``f``."""
    return np.asarray(F) ** (1 / exp.p) * np.asarray(v) ** (1 / exp.conj)


def lemma_scalar_phi(y, a, b, exp: PExponent):
    """Lower bound used in the main-inequality proof, as a function of ``y >= 0``."""
    p, q = exp.p, exp.conj
    y, a, b = np.asarray(y, float), np.asarray(a, float), np.asarray(b, float)
    out = exp.c_p * b**p - p ** (p + 1) / (p - 1) * y ** (p - 1) * a * b + (p - 1) * p**p * y**p * a**q
    return float(out) if np.ndim(out) == 0 else out


def lemma_minimizer(a, b, exp: PExponent):
    """Absolute minimizer ``b / ((p-1) a**(p'-1))`` of :func:`lemma_scalar_phi` for ``a > 0``."""
    return b / ((exp.p - 1) * np.asarray(a, float) ** (exp.conj - 1))


def compose_point(xm, xp, a, b, c, exp: PExponent) -> np.ndarray:
    """Lift the midpoint of ``xm`` and ``xp`` by ``(b**p, a b, c, a**p')``."""
    mid = 0.5 * (np.asarray(xm, float) + np.asarray(xp, float))
    a, b, c = np.asarray(a, float), np.asarray(b, float), np.asarray(c, float)
    lift = np.stack(np.broadcast_arrays(b**exp.p, a * b, c, a**exp.conj), axis=-1)
    return mid + lift


def midpoint_margin(xm, xp, a, b, c, exp: PExponent, kind: Literal["strong", "weak"] = "strong", check: bool = True):
    """``B(x) - (B(xm) + B(xp))/2 - R`` at the composed point ``x``; nonnegative by the main inequality."""
    if kind not in ("strong", "weak"):
        raise ValueError(f"kind must be 'strong' or 'weak', got {kind!r}")
    x = compose_point(xm, xp, a, b, c, exp)
    if check:
        _require_domain(xm, exp)
        _require_domain(xp, exp)
        _require_domain(x, exp)
    p = exp.p
    _, f, A, v = _split(x)
    if kind == "strong":
        rate = p**p * f**p / _denominator(A, v, p) ** p
    else:
        rate = f**p / v**p
    bx = bellman_value(x, exp, check=False)
    out = bx - 0.5 * (bellman_value(xm, exp, check=False) + bellman_value(xp, exp, check=False)) - rate * np.asarray(c, float)
    return float(out) if np.ndim(out) == 0 else out


def bounds_margin(x, exp: PExponent, check: bool = True):
    """``(B(x), C(p) F - B(x))``, both nonnegative on the domain."""
    if check:
        _require_domain(x, exp)
    val = bellman_value(x, exp, check=False)
    F = _split(x)[0]
    upper = exp.c_p * F - val
    if np.ndim(val) == 0:
        return float(val), float(upper)
    return val, upper


def sample_domain_points(rng: np.random.Generator, n: int, exp: PExponent, log_range: float = 3.0) -> np.ndarray:
    """Random domain points concentrated near the faces ``f**p = F v**(p-1)`` and ``v = A``.

    ``v`` and ``F`` are log-uniform over ``10**[-log_range, log_range]``,
    ``A = v U**(1/2)`` and ``f = (F v**(p-1))**(1/p) U**(1/p)``.
    """
    p = exp.p
    v = 10.0 ** rng.uniform(-log_range, log_range, n)
    F = 10.0 ** rng.uniform(-log_range, log_range, n)
    A = v * rng.uniform(0.0, 1.0, n) ** 0.5
    A = np.maximum(A, POSITIVE_FLOOR)
    f = (F * v ** (p - 1)) ** (1 / p) * rng.uniform(0.0, 1.0, n) ** (1 / p)
    return np.stack([F, f, A, v], axis=-1)


@dataclass(frozen=True, eq=False)
class TelescopingCertificate:
    """Per-node margins of the telescoped main inequality and the final chain.

    ``lhs = sum alpha_I f_I**p``, ``bellman_root = |I0| B(x_root)``,
    ``upper = |I0| C(p) F_root``.
    """

    margins: np.ndarray
    scales: np.ndarray
    lhs: float
    bellman_root: float
    upper: float

    @property
    def min_relative_margin(self) -> float:
        return float(np.min(self.margins / self.scales))

    def chain_holds(self, tol: float = 1e-9) -> bool:
        return self.lhs <= self.bellman_root * (1 + tol) and self.bellman_root <= self.upper * (1 + tol)

    def holds(self, tol: float = 1e-9) -> bool:
        return self.min_relative_margin >= -tol and self.chain_holds(tol)


def telescoping_replay(instance: TreeInstance, exp: PExponent) -> TelescopingCertificate:
    """Replay the node-by-node Bellman argument on a finite tree.

    Internal nodes: ``|I| B(x_I) - |I_-| B(x_-) - |I_+| B(x_+) - alpha_I f_I**p``.
    Leaves: ``|I| B(x_I) - alpha_I f_I**p`` (children contribute ``B >= 0``).
    Raises :class:`DomainError` naming the first node whose point leaves the domain.
    """
    agg = compute_aggregates(instance, exp)
    pts = agg.points
    mask = domain_mask(pts, exp)
    if not mask.all():
        node = int(np.flatnonzero(~mask)[0]) + 1
        check = in_domain(pts[node - 1], exp)
        margin = testing_margins(instance, exp, agg)[node - 1]
        raise DomainError(
            f"node {node}: point {tuple(pts[node - 1])} outside domain ({', '.join(check.violations)}); "
            f"testing margin v - A = {margin!r}",
            check.violations,
            node=node,
        )
    length = instance.lengths
    weighted = length * bellman_value(pts, exp, check=False)
    gain = instance.alpha * agg.f**exp.p
    n = instance.n_nodes
    n_internal = (n - 1) // 2
    children = np.zeros(n)
    if n_internal:
        children[:n_internal] = weighted[1:n:2] + weighted[2:n:2]
    margins = weighted - children - gain
    scales = np.abs(weighted) + np.abs(children) + np.abs(gain)
    scales = np.where(scales > 0, scales, 1.0)
    return TelescopingCertificate(
        margins=margins,
        scales=scales,
        lhs=float(np.sum(gain)),
        bellman_root=float(weighted[0]),
        upper=exp.c_p * float(agg.F[0]),
    )
