"""Cross-module invariant suites with a machine-readable summary."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from . import _oracles as oracles
from .estimation import estimate, qfim
from .gaussian import lyapunov_residual, solve_lyapunov
from .model import REFERENCE_PARAMS, QUADRATURES, drift_diffusion, steady_state
from .sweep import TEMPERATURES, log_drive_grid

DEFAULT_TOLERANCES = {
    "lyapunov": 1e-10,
    "gradient_fd": 1e-5,
    "fi_dominance": 1e-9,
    "local_monotonicity": 1e-9,
    "decomposition": 1e-12,
    "physicality": 1e-9,
    "decoupled_oracle": 1e-12,
    "fidelity_oracle": 1e-3,
    "variant_agreement": 1e-12,
    "quadrature_integral": 1e-8,
    "dimensionless": 1e-5,
}
SUITES = tuple(DEFAULT_TOLERANCES)
FIDELITY_POINTS = 10
FIDELITY_SEED = 20240917


@dataclass
class SuiteResult:
    name: str
    passed: bool
    worst: float
    tol: float
    checks: int
    where: str = ""

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark} {self.name}: worst {self.worst:.3e} vs tol {self.tol:.1e} over {self.checks} checks {self.where}".rstrip()


def resolve_tolerances(overrides: dict | None = None) -> dict:
    """Defaults updated by ``overrides``; key ``default`` applies to every suite."""
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(SUITES) - {"default"}
    if unknown:
        raise KeyError(f"unknown tolerance keys {sorted(unknown)}; suites are {SUITES}")
    tols = dict(DEFAULT_TOLERANCES)
    if "default" in overrides:
        tols = dict.fromkeys(tols, float(overrides.pop("default")))
    tols.update({k: float(v) for k, v in overrides.items()})
    return tols


def _rel(a, b) -> float:
    """Norm-wise relative difference of ``a`` against reference ``b``."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = np.linalg.norm(b)
    diff = np.linalg.norm(a - b)
    return float(diff / scale) if scale > 0 else float(diff)


@dataclass
class Worst:
    value: float = -math.inf
    where: str = ""
    checks: int = 0

    def add(self, value: float, where: str) -> None:
        self.checks += 1
        if not value <= self.value:  # NaN always becomes the worst
            self.value, self.where = value, where

    def result(self, name: str, tol: float) -> SuiteResult:
        return SuiteResult(name, bool(self.value <= tol), float(self.value), tol, self.checks, self.where)


def _label(p) -> str:
    return f"(E={p.drive:.4g}, T={p.temperature:g}, {p.variant})"


@dataclass
class Context:
    """Grids shared by the suites; reports are computed once on demand."""

    drive_grid: tuple = field(default_factory=log_drive_grid)
    temperatures: tuple = TEMPERATURES
    fd_points: int = 20
    integral_points: int = 10

    @cached_property
    def reports(self) -> list:
        return [
            estimate(REFERENCE_PARAMS.replace(drive=E, temperature=T, variant=v))
            for v in ("linear", "quadratic")
            for T in self.temperatures
            for E in self.drive_grid
        ]

    def subgrid(self, n: int) -> tuple:
        idx = np.unique(np.linspace(0, len(self.drive_grid) - 1, n).round().astype(int))
        return tuple(self.drive_grid[i] for i in idx)


def suite_lyapunov(ctx: Context, tol: float) -> SuiteResult:
    """Relative residual of the steady covariance and agreement with Bartels-Stewart."""
    w = Worst()
    for rep in ctx.reports:
        dd = drift_diffusion(rep.params, rep.op)
        w.add(lyapunov_residual(dd.B, dd.C, rep.state.covariance), _label(rep.params))
        other = solve_lyapunov(dd.B, dd.C, method="bartels-stewart")
        w.add(_rel(rep.state.covariance, other), _label(rep.params) + " vs Bartels-Stewart")
    return w.result("lyapunov", tol)


def gradient_errors(params, rep=None) -> dict:
    """Analytic-vs-central-difference errors for one operating point.

    Vectors and matrices use a norm-wise relative error. Scalars are
    compared against ``tol |fd| + floor`` through the ratio
    ``|a - fd| / (|fd| + floor / tol)``, where ``floor`` is the roundoff
    resolution of the difference quotient; the caller supplies ``tol``.
    """
    rep = rep or estimate(params)
    fd = oracles.fd_gradients(params)
    opg = rep.gradients.op
    analytic = {
        "dR0": opg.dR0,
        "dSigma": rep.gradients.dSigma,
        "dDelta_eff": opg.dDelta_eff,
        "dAlpha2": opg.dAlpha2,
        "dOmega_eff": opg.dOmega_eff,
        "dG_eff": opg.dG_eff,
    }
    out = {}
    for key, val in analytic.items():
        for i, g in enumerate(("g1", "g2")):
            a, f = np.asarray(val[i]), np.asarray(fd[key][i])
            if a.ndim:
                out[f"{key}/{g}"] = (_rel(a, f), 0.0)
            else:
                out[f"{key}/{g}"] = (abs(float(a) - float(f)), abs(float(f)), float(fd["floor"][key][i]))
    return out


def _gradient_metric(entry, tol: float) -> float:
    if len(entry) == 2:
        return entry[0]
    diff, ref, floor = entry
    denom = ref + floor / tol
    return diff / denom if denom > 0 else diff


def suite_gradient_fd(ctx: Context, tol: float) -> SuiteResult:
    w = Worst()
    for T in ctx.temperatures:
        for E in ctx.subgrid(ctx.fd_points):
            p = REFERENCE_PARAMS.replace(drive=E, temperature=T)
            for key, entry in gradient_errors(p).items():
                w.add(_gradient_metric(entry, tol), f"{_label(p)} {key}")
    return w.result("gradient_fd", tol)


def suite_fi_dominance(ctx: Context, tol: float) -> SuiteResult:
    w = Worst()
    for rep in ctx.reports:
        I = np.diag(rep.qfim.I)
        for q in QUADRATURES:
            J = np.diag(rep.fi[q])
            for i in range(2):
                if I[i] > 0:
                    w.add(J[i] / I[i] - 1, f"{_label(rep.params)} {q} g{i + 1}")
    return w.result("fi_dominance", tol)


def suite_local_monotonicity(ctx: Context, tol: float) -> SuiteResult:
    w = Worst()
    for rep in ctx.reports:
        I = np.diag(rep.qfim.I)
        for name in ("light", "mechanics"):
            L = np.diag(getattr(rep, name).I)
            for i in range(2):
                if I[i] > 0:
                    w.add(L[i] / I[i] - 1, f"{_label(rep.params)} {name} g{i + 1}")
    return w.result("local_monotonicity", tol)


def suite_decomposition(ctx: Context, tol: float) -> SuiteResult:
    """``I = averages + variances`` after an independent recomputation of the QFIM."""
    w = Worst()
    for rep in ctx.reports:
        g = rep.gradients
        q = qfim(g.dR0, rep.state.covariance, g.dSigma)
        scale = math.sqrt(abs(q.I[0, 0] * q.I[1, 1])) or 1.0
        w.add(float(np.abs(q.I - q.averages_term - q.variances_term).max() / scale), _label(rep.params))
        w.add(_rel(q.I, rep.qfim.I), _label(rep.params) + " recomputed")
    return w.result("decomposition", tol)


def suite_physicality(ctx: Context, tol: float) -> SuiteResult:
    """Robertson-Schroedinger margin, reported as ``max(0, -margin)``."""
    w = Worst()
    for rep in ctx.reports:
        w.add(max(0.0, -rep.physicality_margin), _label(rep.params))
    return w.result("physicality", tol)


def suite_decoupled_oracle(ctx: Context, tol: float) -> SuiteResult:
    """``g1 = g2 = 0`` leaves vacuum light and thermal mechanics."""
    w = Worst()
    for T in (0.0, 8e-2):
        for E in ctx.subgrid(5):
            p = REFERENCE_PARAMS.replace(g1=0.0, g2=0.0, drive=E, temperature=T)
            _, state = steady_state(p)
            n = p.n_bar
            expected = np.diag([0.5, 0.5, n + 0.5, n + 0.5])
            w.add(float(np.abs(state.covariance - expected).max() / expected.max()), _label(p))
    return w.result("decoupled_oracle", tol)


def suite_fidelity_oracle(ctx: Context, tol: float) -> SuiteResult:
    rng = np.random.default_rng(FIDELITY_SEED)
    w = Worst()
    for _ in range(FIDELITY_POINTS):
        E = float(rng.choice(ctx.drive_grid))
        T = float(rng.choice(ctx.temperatures))
        p = REFERENCE_PARAMS.replace(drive=E, temperature=T)
        I = estimate(p).qfim.I
        for i, g in enumerate(("g1", "g2")):
            w.add(abs(oracles.fidelity_qfi(p, g) / I[i, i] - 1), f"{_label(p)} {g}")
    return w.result("fidelity_oracle", tol)


def suite_variant_agreement(ctx: Context, tol: float) -> SuiteResult:
    """At ``g2 = 0`` the two variants give the same state and ``g1`` information."""
    w = Worst()
    for T in ctx.temperatures:
        for E in ctx.drive_grid:
            lin = estimate(REFERENCE_PARAMS.replace(g2=0.0, drive=E, temperature=T, variant="linear"))
            quad = estimate(REFERENCE_PARAMS.replace(g2=0.0, drive=E, temperature=T, variant="quadratic"))
            pairs = [
                (lin.state.first_moments, quad.state.first_moments),
                (lin.state.covariance, quad.state.covariance),
                (lin.qfim.I[0, 0], quad.qfim.I[0, 0]),
                (lin.qfim.averages_term[0, 0], quad.qfim.averages_term[0, 0]),
                (lin.qfim.variances_term[0, 0], quad.qfim.variances_term[0, 0]),
                (lin.light.I[0, 0], quad.light.I[0, 0]),
                (lin.mechanics.I[0, 0], quad.mechanics.I[0, 0]),
            ] + [(lin.fi[q][0, 0], quad.fi[q][0, 0]) for q in QUADRATURES]
            for a, b in pairs:
                w.add(_rel(a, b), _label(lin.params))
    return w.result("variant_agreement", tol)


def suite_quadrature_integral(ctx: Context, tol: float) -> SuiteResult:
    w = Worst()
    for T in ctx.temperatures:
        for E in ctx.subgrid(ctx.integral_points):
            rep = estimate(REFERENCE_PARAMS.replace(drive=E, temperature=T))
            g = rep.gradients
            for k, q in enumerate(QUADRATURES):
                J = oracles.quadrature_fi_integral(k, rep.state.covariance, g.dR0, g.dSigma)
                w.add(_rel(rep.fi[q], J), f"{_label(rep.params)} {q}")
    return w.result("quadrature_integral", tol)


def dimensionless_qfi(params) -> np.ndarray:
    """QFIM for ``g_i / omega_m`` from Richardson-extrapolated central
    differences taken directly in the rescaled couplings."""
    wm = params.omega_m

    def central(which, gt, ht):
        _, plus = steady_state(params.replace(**{which: (gt + ht) * wm}))
        _, minus = steady_state(params.replace(**{which: (gt - ht) * wm}))
        return (
            (plus.first_moments - minus.first_moments) / (2 * ht),
            (plus.covariance - minus.covariance) / (2 * ht),
        )

    dR, dS = [], []
    for which in ("g1", "g2"):
        gt = getattr(params, which) / wm
        ht = oracles.fd_step(params, which) / wm
        (r1, s1), (r2, s2) = central(which, gt, ht), central(which, gt, ht / 2)
        dR.append((4 * r2 - r1) / 3)
        dS.append((4 * s2 - s1) / 3)
    _, state = steady_state(params)
    return qfim(np.array(dR), state.covariance, np.array(dS)).I


def suite_dimensionless(ctx: Context, tol: float) -> SuiteResult:
    w = Worst()
    for T in ctx.temperatures:
        for E in ctx.subgrid(5):
            p = REFERENCE_PARAMS.replace(drive=E, temperature=T)
            It = dimensionless_qfi(p)
            ref = estimate(p).qfim.I_dimensionless
            for i in range(2):
                w.add(abs(It[i, i] / ref[i, i] - 1), f"{_label(p)} g{i + 1}")
    return w.result("dimensionless", tol)


SUITE_FUNCS = {
    "lyapunov": suite_lyapunov,
    "gradient_fd": suite_gradient_fd,
    "fi_dominance": suite_fi_dominance,
    "local_monotonicity": suite_local_monotonicity,
    "decomposition": suite_decomposition,
    "physicality": suite_physicality,
    "decoupled_oracle": suite_decoupled_oracle,
    "fidelity_oracle": suite_fidelity_oracle,
    "variant_agreement": suite_variant_agreement,
    "quadrature_integral": suite_quadrature_integral,
    "dimensionless": suite_dimensionless,
}


def run_validation(overrides: dict | None = None, suites=None, ctx: Context | None = None) -> dict:
    """Run the named suites (all by default) and return a JSON-ready summary."""
    tols = resolve_tolerances(overrides)
    ctx = ctx or Context()
    names = list(suites) if suites else list(SUITES)
    results = []
    for name in names:
        if name not in SUITE_FUNCS:
            raise KeyError(f"unknown suite {name!r}")
        results.append(SUITE_FUNCS[name](ctx, tols[name]))
    return {
        "passed": all(r.passed for r in results),
        "failed": [r.name for r in results if not r.passed],
        "suites": [asdict(r) for r in results],
    }
