"""Local quantum estimation of the couplings ``(g1, g2)``.

All parameter derivatives are analytic: the operating point is differentiated
implicitly through its polynomial balance equation, and the covariance
derivatives come from differentiating the Lyapunov equation, which gives a
second Lyapunov equation with the same drift.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .gaussian import (
    MomentState,
    _as_real,
    commutator_matrix,
    lyapunov_residual,
    physicality_margin,
    quadrature_indices,
    solve_lyapunov,
)
from .model import (
    QUADRATURES,
    SQRT2,
    PhysicalParams,
    SteadyOperatingPoint,
    _mech_factor,
    drift_diffusion,
    steady_state,
)

PINV_RCOND = 1e-12
DEGENERATE_ROOT_TOL = 1e-12
PARAMETERS = ("g1", "g2")
SOURCES = ("global", "light", "mechanics") + QUADRATURES


class DegenerateRoot(ArithmeticError):
    """The operating point sits on a fold; implicit differentiation fails."""


class NonPhysicalState(ValueError):
    pass


class DegenerateVariance(ValueError):
    pass


class SingularInformation(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class OperatingPointGradients:
    """Derivatives with respect to ``(g1, g2)``; leading axis is the parameter."""

    dx0: np.ndarray
    dDelta_eff: np.ndarray
    dR0: np.ndarray  # (2, 4)
    dAlpha2: np.ndarray
    dOmega_eff: np.ndarray
    dG_eff: np.ndarray


@dataclass(frozen=True)
class ParameterGradients:
    op: OperatingPointGradients
    dSigma: np.ndarray  # (2, 4, 4)

    @property
    def dR0(self) -> np.ndarray:
        return self.op.dR0

    def reduced(self, idx) -> tuple[np.ndarray, np.ndarray]:
        """Gradient sub-blocks for the quadrature indices ``idx``."""
        idx = np.asarray(idx)
        return self.op.dR0[:, idx], self.dSigma[:, idx[:, None], idx[None, :]]


def operating_point_gradients(
    params: PhysicalParams, op: SteadyOperatingPoint
) -> OperatingPointGradients:
    """Implicit derivatives of the operating point.

    With ``F(x0; g1, g2) = 0`` the position balance,
    ``dx0/dg_i = -(dF/dg_i) / (dF/dx0)``; every other first moment follows by
    the chain rule through ``Delta_eff``. For the linear variant the
    ``g2`` derivatives vanish identically.
    """
    quadratic = params.variant == "quadratic"
    g1, g2 = params.g1, params.g2_eff
    E, kappa = params.drive, params.kappa
    x, delta = op.x0, op.Delta_eff
    a = _mech_factor(params)
    wE2 = params.omega_m * E**2
    lorentz = delta**2 + kappa**2 / 4

    ddelta_dx = -SQRT2 * g1 + 2 * g2 * x
    pdelta = np.array([-SQRT2 * x, x**2 if quadratic else 0.0])

    F_x = a * lorentz + 2 * g2 * wE2 + x * a * 2 * delta * ddelta_dx
    scale = abs(a * lorentz) + abs(2 * g2 * wE2) + abs(x * a * 2 * delta * ddelta_dx)
    if abs(F_x) < DEGENERATE_ROOT_TOL * scale:
        raise DegenerateRoot(f"dF/dx0 = {F_x:.3e} vanishes at x0 = {x:.6g}")
    F_g = np.array(
        [
            x * a * 2 * delta * pdelta[0] + SQRT2 * wE2,
            x * (a * 2 * delta * pdelta[1] + 2 * wE2) if quadratic else 0.0,
        ]
    )

    dx = -F_g / F_x
    dDelta = pdelta + ddelta_dx * dx
    dL = 2 * delta * dDelta
    dQ0 = -SQRT2 * E * (dDelta * lorentz - delta * dL) / lorentz**2
    dP0 = kappa * E * dL / (SQRT2 * lorentz**2)
    dp0 = params.Gamma_m / (2 * params.omega_m) * dx
    dAlpha2 = -(E**2) * dL / lorentz**2

    dOmega = 2 * g2 * dAlpha2
    dG = 2 * g2 * dx + np.array([-SQRT2, 0.0])
    if quadratic:
        dOmega[1] += 2 * op.photon_number
        dG[1] += 2 * x
    return OperatingPointGradients(
        dx0=dx,
        dDelta_eff=dDelta,
        dR0=np.stack([dQ0, dP0, dx, dp0], axis=1),
        dAlpha2=dAlpha2,
        dOmega_eff=dOmega,
        dG_eff=dG,
    )


def hamiltonian_derivative(
    op: SteadyOperatingPoint, opg: OperatingPointGradients, i: int
) -> np.ndarray:
    """``d(H / hbar) / dg_i`` for the bilinear Hamiltonian matrix."""
    Q0, P0 = op.R0[0], op.R0[1]
    dQ0, dP0 = opg.dR0[i, 0], opg.dR0[i, 1]
    c = opg.dG_eff[i] * Q0 + op.g_eff * dQ0
    s = opg.dG_eff[i] * P0 + op.g_eff * dP0
    d = opg.dDelta_eff[i]
    return np.array(
        [
            [d, 0.0, c, 0.0],
            [0.0, d, s, 0.0],
            [c, s, opg.dOmega_eff[i], 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ]
    )


def covariance_gradients(
    params: PhysicalParams,
    op: SteadyOperatingPoint,
    sigma: np.ndarray,
    opg: OperatingPointGradients,
) -> np.ndarray:
    """``d sigma / dg_i`` from ``B^T dS + dS B = -(dB^T S + S dB)``.

    The damping matrix carries no coupling dependence, so ``C`` is constant
    and ``dB = i dH W``.
    """
    B = drift_diffusion(params, op).B
    W = commutator_matrix(2)
    out = np.empty((2, 4, 4))
    for i in range(2):
        dB = _as_real(1j * hamiltonian_derivative(op, opg, i) @ W, "dB")
        out[i] = solve_lyapunov(B, -(dB.T @ sigma + sigma @ dB))
    return out


def parameter_gradients(
    params: PhysicalParams, op: SteadyOperatingPoint, state: MomentState
) -> ParameterGradients:
    opg = operating_point_gradients(params, op)
    return ParameterGradients(opg, covariance_gradients(params, op, state.covariance, opg))


@dataclass(frozen=True)
class QfimResult:
    I: np.ndarray
    averages_term: np.ndarray
    variances_term: np.ndarray
    I_dimensionless: np.ndarray | None = None

    def rescaled(self, omega_m: float) -> "QfimResult":
        """Same result with ``I_dimensionless = omega_m^2 I`` filled in."""
        return QfimResult(self.I, self.averages_term, self.variances_term, omega_m**2 * self.I)


def qfim_superoperator(sigma: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Matrix of ``X -> 4 sigma X sigma + W X W^T`` on column-major ``vec(X)``.

    ``W X W^T`` equals ``Omega X Omega`` for the real symplectic form
    ``Omega = -i W``; this is the sign for which the superoperator is
    singular exactly on pure states.
    """
    M = 4 * np.kron(sigma.T, sigma) + np.kron(W, W)
    return _as_real(M, "QFI superoperator")


def qfim(dR0, sigma, dSigma, W=None, tol: float = 1e-9) -> QfimResult:
    """Quantum Fisher information matrix of a Gaussian family.

    Parameters
    ----------
    dR0 : (p, 2N) array
        Derivatives of the first moments, one row per parameter.
    sigma : (2N, 2N) array
        Covariance matrix (vacuum ``I/2``).
    dSigma : (p, 2N, 2N) array
    W : (2N, 2N) complex array, optional
        Commutator matrix; built from ``N`` when omitted.
    tol : float
        Physicality tolerance on ``2 sigma + W``.

    Returns
    -------
    QfimResult
        ``averages_term = dR^T sigma^-1 dR`` and
        ``variances_term = 2 Tr[dS (4 L_sigma + L_W)^+ dS]``.
    """
    dR0 = np.atleast_2d(np.asarray(dR0, dtype=float))
    sigma = np.asarray(sigma, dtype=float)
    dSigma = np.asarray(dSigma, dtype=float).reshape((-1,) + sigma.shape)
    n = sigma.shape[0]
    if W is None:
        W = commutator_matrix(n // 2)
    margin = physicality_margin(MomentState(np.zeros(n), sigma))
    if margin < -tol:
        raise NonPhysicalState(f"2 sigma + W has eigenvalue {margin:.3e} < 0")

    chol = scipy.linalg.cho_factor(sigma)
    averages = dR0 @ scipy.linalg.cho_solve(chol, dR0.T)

    vecs = np.stack([d.reshape(-1, order="F") for d in dSigma], axis=1)
    Minv = np.linalg.pinv(qfim_superoperator(sigma, np.asarray(W)), rcond=PINV_RCOND)
    variances = 2 * vecs.T @ Minv @ vecs

    averages = (averages + averages.T) / 2
    variances = (variances + variances.T) / 2
    return QfimResult(averages + variances, averages, variances)


def quadrature_fi(k: int | str, sigma, dR0, dSigma) -> np.ndarray:
    """Classical Fisher information of a homodyne-type measurement of quadrature ``k``.

    The outcome is Gaussian with mean ``R0[k]`` and variance ``sigma[k, k]``.
    """
    if isinstance(k, str):
        k = QUADRATURES.index(k)
    var = float(np.asarray(sigma)[k, k])
    if not var > 0:
        raise DegenerateVariance(f"variance of quadrature {k} is {var!r}")
    ds = np.asarray(dR0)[:, k]
    dv = np.asarray(dSigma)[:, k, k]
    return (2 * var * np.outer(ds, ds) + np.outer(dv, dv)) / (2 * var**2)


@dataclass(frozen=True)
class FiResult:
    J: dict

    def __getitem__(self, quadrature: str) -> np.ndarray:
        return self.J[quadrature]


def all_quadrature_fi(sigma, gradients: ParameterGradients) -> FiResult:
    return FiResult(
        {q: quadrature_fi(k, sigma, gradients.dR0, gradients.dSigma) for k, q in enumerate(QUADRATURES)}
    )


@dataclass(frozen=True)
class ErrorBounds:
    relative: np.ndarray  # (2,) lower bounds on Delta g_i / g_i
    covariance: np.ndarray | None  # I^-1 / M, None when I is singular


def covariance_bound(I, runs: int = 1) -> np.ndarray:
    """Multiparameter bound ``Cov(g) >= I^-1 / M``."""
    I = np.asarray(I, dtype=float)
    if np.linalg.cond(I) > 1 / np.finfo(float).eps:
        raise SingularInformation("information matrix is not invertible")
    return np.linalg.inv(I) / runs


def error_bounds(I, g1: float, g2: float, runs: int = 1) -> ErrorBounds:
    """Relative error bounds ``1 / (g_i sqrt(M I_ii))`` and ``I^-1 / M``."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    I = np.asarray(I, dtype=float)
    g = np.array([g1, g2], dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = 1.0 / (np.abs(g) * np.sqrt(runs * np.diag(I)))
    rel = np.where(np.isnan(rel), np.inf, rel)
    try:
        cov = covariance_bound(I, runs)
    except SingularInformation:
        cov = None
    return ErrorBounds(rel, cov)


def _qfim_triplet(state: MomentState, gradients: ParameterGradients, omega_m: float):
    results = [qfim(gradients.dR0, state.covariance, gradients.dSigma).rescaled(omega_m)]
    W2 = commutator_matrix(1)
    for mode in ("light", "mechanics"):
        idx = quadrature_indices(state, [mode])
        dR, dS = gradients.reduced(idx)
        results.append(qfim(dR, state.covariance[np.ix_(idx, idx)], dS, W2).rescaled(omega_m))
    return tuple(results)


def local_qfim(params: PhysicalParams, allow_multistable: bool = False):
    """``(global, light, mechanics)`` QFIMs of the steady state."""
    op, state = steady_state(params, allow_multistable)
    grads = parameter_gradients(params, op, state)
    return _qfim_triplet(state, grads, params.omega_m)


@dataclass(frozen=True)
class EstimationReport:
    params: PhysicalParams
    op: SteadyOperatingPoint
    state: MomentState
    gradients: ParameterGradients
    qfim: QfimResult
    light: QfimResult
    mechanics: QfimResult
    fi: FiResult
    runs: int
    bounds: dict = field(repr=False)
    lyapunov_residual: float = 0.0
    physicality_margin: float = 0.0

    def information(self, source: str) -> np.ndarray:
        if source == "global":
            return self.qfim.I
        if source in ("light", "mechanics"):
            return getattr(self, source).I
        return self.fi[source]

    def relative_errors(self, source: str) -> np.ndarray:
        return self.bounds[source].relative


def estimate(
    params: PhysicalParams, runs: int = 1, allow_multistable: bool = False
) -> EstimationReport:
    """Full estimation report at one operating point."""
    op, state = steady_state(params, allow_multistable)
    grads = parameter_gradients(params, op, state)
    glob, light, mech = _qfim_triplet(state, grads, params.omega_m)
    fi = all_quadrature_fi(state.covariance, grads)
    infos = {"global": glob.I, "light": light.I, "mechanics": mech.I, **fi.J}
    bounds = {src: error_bounds(I, params.g1, params.g2, runs) for src, I in infos.items()}
    dd = drift_diffusion(params, op)
    return EstimationReport(
        params=params,
        op=op,
        state=state,
        gradients=grads,
        qfim=glob,
        light=light,
        mechanics=mech,
        fi=fi,
        runs=runs,
        bounds=bounds,
        lyapunov_residual=lyapunov_residual(dd.B, dd.C, state.covariance),
        physicality_margin=physicality_margin(state),
    )

