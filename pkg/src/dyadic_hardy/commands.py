"""Command implementations behind the CLI.

Every command returns a :class:`Report`: named sections of reported values
plus the inequalities it asserts.  The exit status is 0 iff every asserted
inequality holds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import bellman, control, hardy, probe
from .instance_io import emit_csv, format_csv, parse_instance
from .tree import PExponent, compute_aggregates, testing_margins

COMMANDS = ("check", "ratio", "certificate", "probe", "simulate", "hjb", "report")


class UsageError(ValueError):
    pass


@dataclass
class Check:
    name: str
    value: float
    bound: float
    ok: bool


@dataclass
class Section:
    name: str
    values: dict[str, Any] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)

    def check(self, name: str, value: float, bound: float, ok: bool | None = None) -> bool:
        """Record ``value <= bound`` (or an explicit verdict)."""
        value, bound = float(value), float(bound)
        verdict = bool(value <= bound) if ok is None else bool(ok)
        self.checks.append(Check(name, value, bound, verdict))
        return verdict


@dataclass
class Report:
    sections: list[Section] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.ok for s in self.sections for c in s.checks)

    @property
    def exit_status(self) -> int:
        return 0 if self.ok else 1

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "sections": [
                {
                    "name": s.name,
                    "values": _jsonable(s.values),
                    "checks": [c.__dict__ for c in s.checks],
                }
                for s in self.sections
            ],
            "artifacts": self.artifacts,
        }

    def render(self) -> str:
        lines = []
        for s in self.sections:
            lines.append(f"[{s.name}]")
            for k, v in s.values.items():
                lines.append(f"  {k} = {_fmt(v)}")
            for c in s.checks:
                lines.append(f"  {'PASS' if c.ok else 'FAIL'} {c.name}: {c.value:.6g} <= {c.bound:.6g}")
        for k, v in self.artifacts.items():
            lines.append(f"wrote {k}: {v}")
        lines.append("status: " + ("PASS" if self.ok else "FAIL"))
        return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(float(x)) if isinstance(x, (float, np.floating)) else str(x) for x in v) + "]"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _require(opts: dict, *names):
    for name in names:
        if opts.get(name) is None:
            raise UsageError(f"missing required flag --{name.replace('_', '-')}")


def _load(opts: dict):
    _require(opts, "instance")
    inst, exp = parse_instance(Path(opts["instance"]))
    if opts.get("p") is not None:
        exp = PExponent(opts["p"])
    return inst, exp


def _check_section(inst, exp, tol) -> Section:
    agg = compute_aggregates(inst, exp)
    margins = testing_margins(inst, exp, agg)
    sec = Section("check", {"p": exp.p, "depth": inst.depth, "margins": margins.tolist(), "min_margin": float(margins.min())})
    rel = margins / agg.v
    sec.check("testing condition: max_I (A_I - v_I)/v_I", -rel.min(), tol)
    return sec


def _ratio_section(inst, exp, tol) -> Section:
    agg = compute_aggregates(inst, exp)
    sec = Section("ratio")
    lhs = hardy.hardy_lhs(agg, inst, exp)
    rhs = hardy.hardy_rhs(agg, exp)
    sec.values.update(lhs=lhs, rhs=rhs, cP=exp.c_p)
    margins = testing_margins(inst, exp, agg)
    condition = bool(np.all(margins >= -tol * agg.v))
    sec.values["testing_condition"] = condition
    if np.any(inst.phi > 0):
        ratio = hardy.hardy_ratio(inst, exp)
        sec.values["ratio"] = ratio
    psi = np.ones(inst.n_nodes)
    sec.values["dual_ratio_psi_one"] = hardy.dual_ratio(inst, psi, exp)
    cands = hardy.dual_constant_candidates(exp)
    sec.values["dual_constant_cP"] = cands["c_p"]
    sec.values["dual_constant_cP_pow"] = cands["c_p_pow_conj_over_p"]
    eta = hardy.dual_data(inst, exp).eta
    gap = hardy.adjointness_gap(eta, psi, inst)
    scale = float(np.sum(hardy.ancestor_sum(psi, inst) * eta * inst.lam)) or 1.0
    sec.values["adjointness_gap"] = gap
    sec.check("adjointness |gap|/scale", abs(gap) / abs(scale), 1e-12)
    if condition:
        sec.check("hardy lhs <= C(p) (phi^p)_I0", lhs, rhs * (1 + tol))
    return sec


def _certificate_section(inst, exp, tol) -> Section:
    sec = Section("certificate")
    try:
        cert = bellman.telescoping_replay(inst, exp)
    except bellman.DomainError as exc:
        sec.values["error"] = str(exc)
        sec.check("node point in domain", 1.0, 0.0, ok=False)
        return sec
    sec.values.update(lhs=cert.lhs, bellman_root=cert.bellman_root, upper=cert.upper,
                      min_margin=float(cert.margins.min()), min_relative_margin=cert.min_relative_margin)
    sec.check("per-node margin (negated, relative)", -cert.min_relative_margin, tol)
    sec.check("sum alpha f^p <= |I0| B(x_root)", cert.lhs, cert.bellman_root * (1 + tol))
    sec.check("|I0| B(x_root) <= |I0| C(p) F_root", cert.bellman_root, cert.upper * (1 + tol))
    return sec


def _probe_section(opts, tol, report: Report) -> Section:
    _require(opts, "seed")
    p_grid = opts.get("p_grid") or ([opts["p"]] if opts.get("p") is not None else [1.5, 2.0, 3.0])
    depth = opts.get("depth") if opts.get("depth") is not None else 4
    family = opts.get("family") or "uniform"
    rows = probe.p_sweep(depth, family, p_grid, opts["seed"], iters=opts.get("iters") or 5000,
                         depths=range(0, depth + 1))
    sec = Section("probe", {"family": family, "rows": len(rows)})
    worst = max(r[5] for r in rows)
    sec.values["max_fraction"] = worst
    sec.check("ratio*/C(p)", worst, 1 + tol)
    if opts.get("out"):
        report.artifacts["csv"] = str(emit_csv(rows, probe.SWEEP_HEADER, opts["out"]))
    else:
        sec.values["csv"] = "\n" + format_csv(rows, probe.SWEEP_HEADER).rstrip("\n")
    return sec


def _parse_x0(text) -> np.ndarray:
    if isinstance(text, str):
        try:
            vals = [float(t) for t in text.split(",")]
        except ValueError:
            raise UsageError(f"--x0 expects F,f,A,v, got {text!r}") from None
    else:
        vals = list(text)
    if len(vals) != 4:
        raise UsageError(f"--x0 expects 4 comma-separated numbers, got {len(vals)}")
    return np.array(vals, dtype=float)


def _simulate_section(opts, exp, tol) -> Section:
    _require(opts, "seed")
    x0 = _parse_x0(opts.get("x0") or "1,1,1,1")
    policy = control.ControlPolicy.from_name(opts.get("policy") or "drift-only")
    h = opts.get("h") or 1e-3
    horizon = opts.get("horizon") or 10.0
    n_paths = opts.get("paths") or (2 if policy.is_deterministic else 1000)
    est = control.estimate_value(x0, policy, h, horizon, n_paths, opts["seed"], exp)
    b = bellman.bellman_value(x0, exp)
    closed = control.optimal_value_closed_form(x0, exp)
    scale = max(abs(b), 1.0)
    sec = Section("simulate", {"policy": policy.name, "x0": x0.tolist(), "h": h, "horizon": horizon,
                               "paths": n_paths, "bellman": b, "closed_form": closed, "mean_J": est.mean,
                               "standard_error": est.se, "truncated_paths": est.n_truncated})
    sec.check("|closed form - B| / scale", abs(closed - b) / scale, 1e-10)
    sec.check("mean J - 3 SE <= B (g <= B)", est.mean - 3 * est.se, b + tol * scale)
    if policy.name == "drift-only":
        sec.check("|mean J - closed form| (drift-only)", abs(est.mean - closed), 0.05 * scale)
    return sec


def _hjb_section(opts, exp, tol) -> Section:
    _require(opts, "seed")
    n = opts.get("samples") or 1000
    gen = np.random.default_rng([opts["seed"], 0])
    xs = bellman.sample_domain_points(gen, n, exp, log_range=1.0)
    if exp.p < 2:
        xs = xs[xs[:, 1] > 1e-8 * (xs[:, 0] * xs[:, 3] ** (exp.p - 1)) ** (1 / exp.p)]
    us = gen.normal(size=(n, 5))
    us[:, 4] = np.abs(us[:, 4])
    us *= (10.0 * gen.uniform(size=(n, 1)) ** 0.5) / np.linalg.norm(us, axis=1, keepdims=True)
    res, scale = control.hjb_residuals(xs, us, exp)
    rel = res / scale
    drift_only = np.zeros((3, 5))
    drift_only[:, 4] = [0.5, 1.0, 2.0]
    res0, scale0 = control.hjb_residuals(xs, drift_only, exp)
    sec = Section("hjb", {"points": len(xs), "controls": n, "max_residual": float(res.max()),
                          "max_relative_residual": float(rel.max()),
                          "max_abs_relative_residual_drift_only": float(np.abs(res0 / scale0).max())})
    sec.check("sup_u residual / scale", rel.max(), tol)
    sec.check("|residual| / scale at u=(0,0,0,0,u5)", np.abs(res0 / scale0).max(), 1e-12)
    return sec


def run_command(command: str, opts: dict | None = None) -> Report:
    """Dispatch one command; ``opts`` holds the CLI flags with underscores."""
    opts = dict(opts or {})
    tol = opts.get("tol")
    tol = 1e-9 if tol is None else float(tol)
    report = Report()
    if command not in COMMANDS:
        raise UsageError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    if command in ("check", "ratio", "certificate"):
        inst, exp = _load(opts)
        section = {"check": _check_section, "ratio": _ratio_section, "certificate": _certificate_section}[command]
        report.sections.append(section(inst, exp, tol))
    elif command == "probe":
        report.sections.append(_probe_section(opts, tol, report))
    elif command in ("simulate", "hjb"):
        _require(opts, "p")
        exp = PExponent(opts["p"])
        section = _simulate_section if command == "simulate" else _hjb_section
        report.sections.append(section(opts, exp, tol))
    else:
        _require(opts, "seed")
        inst, exp = _load(opts)
        report.sections.append(_check_section(inst, exp, tol))
        report.sections.append(_ratio_section(inst, exp, tol))
        report.sections.append(_certificate_section(inst, exp, tol))
        sub = dict(opts, p=exp.p)
        report.sections.append(_hjb_section(sub, exp, tol))
        report.sections.append(_simulate_section(sub, exp, tol))
        report.sections.append(_probe_section(dict(sub, depth=min(inst.depth, opts.get("depth") or 4)), tol, report))
    return report
