"""The controlled diffusion whose value function is the Bellman function.

State ``x = (F, f, A, v)``, control ``u = (u1, ..., u5)`` with ``u5 >= 0``.
Drift ``(0, 0, -u5, 0)``, diffusion loadings ``(u1, u2, u3, u4)`` against a
single Brownian motion, running payoff ``p**p (f / (A + (p-1) v))**p u5``,
and the Bellman function itself (extended to the closure) as bequest.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import rng as crng
from .bellman import (
    REL_SLACK,
    DomainError,
    bellman_derivatives,
    bellman_value,
    domain_mask,
    in_domain,
)
from .tree import PExponent


class ControlVector(NamedTuple):
    u1: float
    u2: float
    u3: float
    u4: float
    u5: float


def _check_controls(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[-1:] != (5,):
        raise ValueError(f"controls must have trailing dimension 5, got shape {u.shape}")
    if np.any(u[..., 4] < 0) or not np.all(np.isfinite(u)):
        raise ValueError("control drift magnitude u5 must be finite and >= 0")
    return u


@dataclass(frozen=True, eq=False)
class ControlPolicy:
    """Piecewise-constant schedule, or a feedback rule ``rule(t, states) -> controls``.

    Piece ``k`` of a schedule is active on ``[breakpoints[k-1], breakpoints[k])``;
    ``controls`` has one more row than ``breakpoints``.
    """

    name: str
    breakpoints: np.ndarray = field(default_factory=lambda: np.empty(0))
    controls: np.ndarray = field(default_factory=lambda: np.zeros((1, 5)))
    rule: Callable[[float, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float).reshape(-1)
        ctrl = _check_controls(np.atleast_2d(self.controls))
        if ctrl.shape[0] != bp.size + 1:
            raise ValueError(f"need {bp.size + 1} control rows for {bp.size} breakpoints, got {ctrl.shape[0]}")
        if bp.size and np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "controls", ctrl)

    @classmethod
    def drift_only(cls, rate: float = 1.0) -> "ControlPolicy":
        return cls("drift-only", controls=[[0, 0, 0, 0, rate]])

    @classmethod
    def zero(cls) -> "ControlPolicy":
        return cls("zero", controls=[[0, 0, 0, 0, 0]])

    @classmethod
    def diffuse_then_drift(cls, s: float, loadings=(0.0, 0.0, 1.0, 0.0)) -> "ControlPolicy":
        if s <= 0:
            raise ValueError("switch time must be positive")
        return cls(f"diffuse-then-drift({s:g})", breakpoints=[s], controls=[[*loadings, 0.0], [0, 0, 0, 0, 1.0]])

    @classmethod
    def piecewise(cls, breakpoints, controls, name: str = "piecewise") -> "ControlPolicy":
        return cls(name, breakpoints=breakpoints, controls=controls)

    @classmethod
    def feedback(cls, rule: Callable[[float, np.ndarray], np.ndarray], name: str = "feedback") -> "ControlPolicy":
        return cls(name, rule=rule)

    @classmethod
    def from_name(cls, spec: str) -> "ControlPolicy":
        """``drift-only``, ``zero`` or ``diffuse-then-drift(s)`` / ``diffuse-then-drift(s;u1,u2,u3,u4)``."""
        spec = spec.strip()
        if spec == "drift-only":
            return cls.drift_only()
        if spec == "zero":
            return cls.zero()
        m = re.fullmatch(r"diffuse-then-drift\(\s*([^;)]+?)\s*(?:;\s*([^)]*))?\)", spec)
        if m:
            s = float(m.group(1))
            if m.group(2):
                loadings = tuple(float(t) for t in m.group(2).split(","))
                if len(loadings) != 4:
                    raise ValueError(f"diffuse-then-drift needs 4 loadings, got {len(loadings)}")
                return cls.diffuse_then_drift(s, loadings)
            return cls.diffuse_then_drift(s)
        raise ValueError(f"unknown policy {spec!r}; expected drift-only, zero or diffuse-then-drift(s)")

    @property
    def is_deterministic(self) -> bool:
        return self.rule is None and not np.any(self.controls[:, :4])

    def evaluate(self, t: float, states: np.ndarray) -> np.ndarray:
        """Controls for every row of ``states`` at time ``t``, shape ``(n, 5)``."""
        n = states.shape[0]
        if self.rule is not None:
            u = _check_controls(self.rule(t, states))
            return np.broadcast_to(u, (n, 5))
        piece = int(np.searchsorted(self.breakpoints, t, side="right"))
        return np.broadcast_to(self.controls[piece], (n, 5))


def random_piecewise_policy(gen: np.random.Generator, horizon: float, max_pieces: int = 4, scale: float = 1.0) -> ControlPolicy:
    """Random admissible schedule: Gaussian loadings, drift ``u5`` exponential or switched off."""
    k = int(gen.integers(1, max_pieces + 1))
    bp = np.sort(gen.uniform(0.0, horizon, k - 1))
    loadings = gen.normal(0.0, scale, (k, 4)) * (gen.uniform(size=(k, 1)) < 0.8)
    drift = gen.exponential(1.0, (k, 1)) * (gen.uniform(size=(k, 1)) < 0.7)
    return ControlPolicy.piecewise(bp, np.hstack([loadings, drift]), name="random-piecewise")


def payoff_density(x, u5, exp: PExponent):
    """``p**p (x2 / (x3 + (p-1) x4))**p u5``."""
    x = np.asarray(x, dtype=float)
    p = exp.p
    den = x[..., 2] + (p - 1) * x[..., 3]
    if np.any(den <= 0):
        raise ValueError("degenerate denominator x3 + (p-1) x4 <= 0")
    out = p**p * (x[..., 1] / den) ** p * np.asarray(u5, dtype=float)
    return float(out) if np.ndim(out) == 0 else out


def _payoff_unchecked(x: np.ndarray, u5: np.ndarray, p: float) -> np.ndarray:
    den = x[:, 2] + (p - 1) * x[:, 3]
    f = x[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(f > 0, p**p * (f / den) ** p, 0.0)
    return rate * u5


def bequest_ext(x, exp: PExponent, tol: float = REL_SLACK):
    """Bellman function extended to the closure of its domain.

    Continuous extension wherever ``(A, v) != (0, 0)``; the remaining boundary
    points ``(F, 0, 0, 0)`` get the lower limit ``0``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        check = in_domain(x, exp, tol=tol, closed=True)
        if not check:
            raise DomainError(f"point {tuple(x)} outside the closed domain: {', '.join(check.violations)}", check.violations)
    elif not domain_mask(x, exp, tol=tol, closed=True).all():
        raise DomainError("points outside the closed domain")
    return _bequest_unchecked(x, exp)


def _bequest_unchecked(x, exp: PExponent):
    p = exp.p
    den = x[..., 2] + (p - 1) * x[..., 3]
    corner = den <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        val = exp.c_p * x[..., 0] - p**p / (p - 1) * x[..., 1] ** p / den ** (p - 1)
    out = np.where(corner, 0.0, val)
    return float(out) if np.ndim(out) == 0 else out


def generator_applied(x: np.ndarray, u: np.ndarray, exp: PExponent) -> np.ndarray:
    """``(L^u B)(x) = -u5 dB/dA + 1/2 sigma^T H sigma`` row-wise."""
    x = np.atleast_2d(x)
    u = np.atleast_2d(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        grad, hess = bellman_derivatives(x, exp, check=False)
    sig = u[:, :4]
    outer = sig[:, :, None] * sig[:, None, :]
    # entries unused by the control must not leak f**(p-2) singularities
    quad = np.sum(np.where(outer != 0, hess, 0.0) * outer, axis=(1, 2))
    drift = np.where(u[:, 4] != 0, -u[:, 4] * grad[:, 2], 0.0)
    return drift + 0.5 * quad


@dataclass(frozen=True, eq=False)
class PathSample:
    """One simulated trajectory.

    ``exit_time`` is the start time of the step that left the closed domain,
    or the horizon when ``truncated``.  The bequest is paid at the last
    in-domain state either way.
    """

    h: float
    states: np.ndarray
    exit_time: float
    payoff_integral: float
    bequest_value: float
    truncated: bool

    @property
    def total_j(self) -> float:
        return self.payoff_integral + self.bequest_value


@dataclass(frozen=True)
class ValueEstimate:
    mean: float
    se: float
    n_paths: int
    n_truncated: int


@dataclass
class _Batch:
    payoff: np.ndarray
    bequest: np.ndarray
    exit_time: np.ndarray
    truncated: np.ndarray
    final: np.ndarray
    generator: np.ndarray | None = None
    states: list | None = None


def _n_steps(h: float, horizon: float) -> int:
    if not (h > 0 and np.isfinite(h)):
        raise ValueError(f"step size must be positive, got {h!r}")
    if not (horizon > 0 and np.isfinite(horizon)):
        raise ValueError(f"horizon must be positive, got {horizon!r}")
    ratio = horizon / h
    n = int(round(ratio))
    return n if abs(ratio - n) <= 1e-9 * max(ratio, 1.0) else int(np.ceil(ratio))


def _simulate(x0: np.ndarray, policy: ControlPolicy, h: float, horizon: float, keys: np.ndarray, exp: PExponent,
              track_generator: bool = False, record: bool = False) -> _Batch:
    """Euler-Maruyama for a batch of paths, vectorized across paths.

    ``x0`` has shape ``(n, 4)``; ``keys`` are the per-path stream states.
    """
    n_steps = _n_steps(h, horizon)
    p = exp.p
    X = np.array(x0, dtype=float)
    n = X.shape[0]
    payoff = np.zeros(n)
    gen_int = np.zeros(n) if track_generator else None
    exit_time = np.full(n, float(horizon))
    active = np.arange(n)
    sqrt_h = np.sqrt(h)
    states = [X[0].copy()] if record else None

    for k in range(n_steps):
        if active.size == 0:
            break
        t = k * h
        Xa = X[active]
        u = policy.evaluate(t, Xa)
        z = crng.normals(keys[active], k)
        Xn = Xa + u[:, :4] * (sqrt_h * z)[:, None]
        Xn[:, 2] -= u[:, 4] * h
        inside = domain_mask(Xn, exp, closed=True)
        rate = _payoff_unchecked(Xa, u[:, 4], p)
        moved = active[inside]
        payoff[moved] += h * rate[inside]
        if track_generator:
            gen_int[moved] += h * generator_applied(Xa[inside], u[inside], exp)
        X[moved] = Xn[inside]
        exit_time[active[~inside]] = t
        active = moved
        if record and X.shape[0] == 1 and inside.size and inside[0]:
            states.append(X[0].copy())

    truncated = np.zeros(n, dtype=bool)
    truncated[active] = True
    bequest = np.asarray(_bequest_unchecked(X, exp), dtype=float).reshape(n)
    return _Batch(payoff, bequest, exit_time, truncated, X, gen_int, states)


def _validate_start(x0, exp) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    pts = np.atleast_2d(x0)
    for row in pts:
        check = in_domain(row, exp)
        if not check:
            raise DomainError(f"start point {tuple(row)} outside domain: {', '.join(check.violations)}", check.violations)
    return pts


def simulate_path(x0, policy: ControlPolicy, h: float, horizon: float, seed: int, path_index: int, exp: PExponent) -> PathSample:
    """Single trajectory for stream ``(seed, path_index)``, storing every in-domain state."""
    pts = _validate_start(x0, exp)
    keys = crng.stream_keys(seed, [path_index])
    batch = _simulate(pts[:1], policy, h, horizon, keys, exp, record=True)
    return PathSample(
        h=float(h),
        states=np.array(batch.states),
        exit_time=float(batch.exit_time[0]),
        payoff_integral=float(batch.payoff[0]),
        bequest_value=float(batch.bequest[0]),
        truncated=bool(batch.truncated[0]),
    )


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(values))
    if values.size < 2:
        return mean, float("nan")
    return mean, float(np.std(values, ddof=1) / np.sqrt(values.size))


def estimate_value(x0, policy: ControlPolicy, h: float, horizon: float, n_paths: int, seed: int, exp: PExponent) -> ValueEstimate:
    """Monte Carlo mean and standard error of the total payoff over ``n_paths`` paths."""
    return estimate_values(np.atleast_2d(x0), policy, h, horizon, n_paths, seed, exp)[0]


def estimate_values(x0s, policy: ControlPolicy, h: float, horizon: float, n_paths: int, seed: int,
                    exp: PExponent) -> list[ValueEstimate]:
    """:func:`estimate_value` for several starts in one batch.

    Every start reuses streams ``(seed, 0..n_paths-1)``, so each result equals
    the one-start call exactly.
    """
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    pts = _validate_start(x0s, exp)
    m = pts.shape[0]
    keys = np.tile(crng.stream_keys(seed, np.arange(n_paths)), m)
    batch = _simulate(np.repeat(pts, n_paths, axis=0), policy, h, horizon, keys, exp)
    total = (batch.payoff + batch.bequest).reshape(m, n_paths)
    trunc = batch.truncated.reshape(m, n_paths)
    out = []
    for j in range(m):
        mean, se = _mean_se(total[j])
        out.append(ValueEstimate(mean, se, n_paths, int(trunc[j].sum())))
    return out


def optimal_value_parts(x0, exp: PExponent) -> tuple[float, float]:
    """Running payoff and bequest of the drift-only control, in closed form."""
    x0 = np.asarray(x0, dtype=float)
    check = in_domain(x0, exp)
    if not check:
        raise DomainError(f"point {tuple(x0)} outside domain: {', '.join(check.violations)}", check.violations)
    F, f, A, v = x0
    p = exp.p
    k = p**p / (p - 1) * f**p
    payoff = k / ((p - 1) * v) ** (p - 1) - k / (A + (p - 1) * v) ** (p - 1)
    bequest = float(_bequest_unchecked(np.array([F, f, 0.0, v]), exp))
    return float(payoff), bequest


def optimal_value_closed_form(x0, exp: PExponent) -> float:
    """Value of the drift-only control: integral of the payoff until ``A`` hits 0, plus bequest there."""
    payoff, bequest = optimal_value_parts(x0, exp)
    return payoff + bequest


def hjb_residuals(x, u, exp: PExponent, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Residual matrix ``r[i, j]`` for state ``x[i]`` and control ``u[j]``, plus matching scales."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = _check_controls(np.atleast_2d(u))
    grad, hess = bellman_derivatives(x, exp, check=check)
    sig = u[:, :4]
    quad = np.einsum("ja,iab,jb->ij", sig, hess, sig)
    pay = np.asarray(payoff_density(x, 1.0, exp)).reshape(-1)
    drift = -grad[:, 2:3] * u[None, :, 4]
    rew = pay[:, None] * u[None, :, 4]
    res = drift + 0.5 * quad + rew
    hnorm = np.abs(hess).sum(axis=(1, 2))
    scale = np.abs(drift) + np.abs(rew) + 0.5 * hnorm[:, None] * np.sum(sig**2, axis=1)[None, :]
    return res, np.where(scale > 0, scale, 1.0)


def hjb_residual(x, exp: PExponent, u_grid) -> tuple[float, np.ndarray]:
    """Maximum HJB residual over ``u_grid`` at one interior point, and its maximizer."""
    res, _ = hjb_residuals(np.asarray(x, dtype=float)[None, :], u_grid, exp)
    j = int(np.argmax(res[0]))
    return float(res[0, j]), np.atleast_2d(u_grid)[j].astype(float)


def dynkin_gap(x0, policy: ControlPolicy, h: float, horizon: float, n_paths: int, seed: int, exp: PExponent) -> tuple[float, float]:
    """``E B(X_end) - B(x0) - E int (L^u B)(X_s) ds`` with its standard error."""
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    pts = _validate_start(x0, exp)[:1]
    keys = crng.stream_keys(seed, np.arange(n_paths))
    batch = _simulate(np.repeat(pts, n_paths, axis=0), policy, h, horizon, keys, exp, track_generator=True)
    b0 = bellman_value(pts[0], exp)
    per_path = batch.bequest - b0 - batch.generator
    return _mean_se(per_path)
