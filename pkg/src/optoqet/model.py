"""Driven-dissipative optomechanical model with linear and quadratic coupling.

Quadratures are ordered ``(Q, P, X_b, P_b)``: cavity amplitude and phase,
then mechanical position and momentum. All rates are angular frequencies in
s^-1, including the ones the literature quotes in "Hz".
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from numpy.polynomial import Polynomial

from .constants import HBAR, K_B
from .gaussian import (
    DampingMatrix,
    DriftDiffusion,
    MomentState,
    build_drift_diffusion,
    check_physical,
    is_stable,
    solve_lyapunov,
)

SQRT2 = math.sqrt(2.0)
MODE_LABELS = ("light", "mechanics")
QUADRATURES = ("Q", "P", "Xb", "Pb")
VARIANTS = ("linear", "quadratic")

# Below this intracavity photon number the bilinear (Gaussian) approximation
# is flagged as doubtful.
GAUSSIAN_MIN_PHOTONS = 50.0

ROOT_IMAG_TOL = 1e-8
ROOT_MERGE_TOL = 1e-8
ROOT_RESIDUAL_TOL = 1e-10


class ModelError(RuntimeError):
    """No usable steady operating point."""


class Multistable(ModelError):
    def __init__(self, message: str, roots: list["SteadyOperatingPoint"]):
        super().__init__(message)
        self.roots = roots


class Unstable(ModelError):
    def __init__(self, message: str, roots: list["SteadyOperatingPoint"]):
        super().__init__(message)
        self.roots = roots


class GaussianityWarning(UserWarning):
    """Intracavity photon number too small for the bilinear approximation."""


@dataclass(frozen=True)
class PhysicalParams:
    """Model constants. Rates in s^-1, mass in kg, temperature in K."""

    omega_m: float = 1.1e7
    mass: float = 4.8e-14
    Gamma_m: float = 32.0
    Delta_0: float = 1.1e7
    kappa: float = 1e5
    g1: float = 2e2
    g2: float = 1.1e-5
    drive: float = 1e8
    temperature: float = 0.0
    variant: str = "quadratic"

    def __post_init__(self):
        for name in ("omega_m", "mass", "Gamma_m", "kappa"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not (math.isfinite(self.temperature) and self.temperature >= 0):
            raise ValueError(f"temperature must be >= 0, got {self.temperature!r}")
        if not (math.isfinite(self.g1) and self.g1 >= 0):
            raise ValueError(f"g1 must be >= 0 (flip the sign of X_b), got {self.g1!r}")
        for name in ("Delta_0", "g2", "drive"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def g2_eff(self) -> float:
        """Quadratic coupling as it enters the formulas (0 for the linear model)."""
        return 0.0 if self.variant == "linear" else self.g2

    @property
    def n_bar(self) -> float:
        return thermal_occupation(self.omega_m, self.temperature)

    def replace(self, **changes) -> "PhysicalParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "PhysicalParams":
        """Build from flat key/value pairs; unknown keys raise ``KeyError``."""
        aliases = {"E": "drive", "T": "temperature", "model_variant": "variant"}
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in values.items():
            key = aliases.get(key, key)
            if key not in names:
                raise KeyError(f"unknown parameter {key!r}")
            kwargs[key] = str(value).strip() if key == "variant" else float(value)
        return cls(**kwargs)


REFERENCE_PARAMS = PhysicalParams()


def thermal_occupation(omega_m: float, temperature: float) -> float:
    """Bose-Einstein occupancy ``1 / (exp(hbar w / k T) - 1)``; 0 at ``T = 0``."""
    if omega_m <= 0 or temperature < 0:
        raise ValueError("need omega_m > 0 and temperature >= 0")
    if temperature == 0:
        return 0.0
    x = HBAR * omega_m / (K_B * temperature)
    if x > 1.0:
        # e^-x / (1 - e^-x) never overflows
        return math.exp(-x) / -math.expm1(-x)
    return 1.0 / math.expm1(x)


def fabry_perot_couplings(omega_0: float, length: float, mass: float, omega_m: float):
    """``(g1, g2) = (w0 x_zp / L, 2 w0 x_zp^2 / L^2)`` for a Fabry-Perot cavity."""
    if min(omega_0, length, mass, omega_m) <= 0:
        raise ValueError("all inputs must be positive")
    x_zp = math.sqrt(HBAR / (2 * mass * omega_m))
    return omega_0 * x_zp / length, 2 * omega_0 * x_zp**2 / length**2


@dataclass(frozen=True)
class SteadyOperatingPoint:
    R0: np.ndarray
    Delta_eff: float
    omega_eff: float
    g_eff: float
    photon_number: float
    n_bar: float
    residual: float = 0.0

    @property
    def x0(self) -> float:
        return float(self.R0[2])

    @property
    def gaussian_ok(self) -> bool:
        return self.photon_number >= GAUSSIAN_MIN_PHOTONS


def effective_detuning(params: PhysicalParams, x0: float) -> float:
    return params.Delta_0 - SQRT2 * params.g1 * x0 + params.g2_eff * x0**2


def _mech_factor(params: PhysicalParams) -> float:
    return params.omega_m**2 + params.Gamma_m**2 / 4


def operating_point_polynomial(params: PhysicalParams) -> Polynomial:
    """Cleared-denominator position balance ``F(x0) = 0``.

    ``F(x) = x [(w_m^2 + G^2/4)(Delta(x)^2 + k^2/4) + 2 g2 w_m E^2] + sqrt2 g1 w_m E^2``
    with ``Delta(x) = Delta_0 - sqrt2 g1 x + g2 x^2``. Degree 5, or 3 when
    ``g2 = 0``.
    """
    g2 = params.g2_eff
    wE2 = params.omega_m * params.drive**2
    detuning = Polynomial([params.Delta_0, -SQRT2 * params.g1, g2])
    lorentz = detuning**2 + params.kappa**2 / 4
    F = Polynomial([0.0, 1.0]) * (_mech_factor(params) * lorentz + 2 * g2 * wE2)
    F = F + SQRT2 * params.g1 * wE2
    return F.trim()


def _balance_residual(params: PhysicalParams, x0: float) -> float:
    """Relative residual of the mechanical-position balance at ``x0``."""
    delta = effective_detuning(params, x0)
    wE2 = params.omega_m * params.drive**2
    den = _mech_factor(params) * (delta**2 + params.kappa**2 / 4) + 2 * params.g2_eff * wE2
    num = SQRT2 * params.g1 * wE2
    scale = abs(x0 * den) + abs(num)
    if scale == 0:
        return 0.0
    res = abs(x0 * den + num) / scale
    return res if math.isfinite(res) else math.nan


def _polish(F: Polynomial, x: float, iters: int = 50) -> float:
    dF = F.deriv()
    for _ in range(iters):
        with np.errstate(all="ignore"):
            d = dF(x)
            step = F(x) / d if d != 0 else math.nan
        if not math.isfinite(step):
            break
        x_new = x - step
        if not math.isfinite(x_new):
            break
        if abs(x_new - x) <= 4 * np.finfo(float).eps * max(1.0, abs(x_new)):
            return x_new
        x = x_new
    return x


def _balanced_roots(F: Polynomial) -> np.ndarray:
    """Roots of ``F`` computed for ``x = 2^m y``, with ``m`` chosen so the
    extreme nonzero coefficients have equal magnitude.

    Without the rescaling a tiny leading coefficient overflows the
    companion matrix. Roots too large to represent are discarded.
    """
    c = F.coef
    nz = np.flatnonzero(c)
    lo, hi = nz[0], nz[-1]
    zeros = np.zeros(lo)
    if hi == lo:
        return zeros
    c = c[lo:]
    _, e_lo = math.frexp(c[0])
    _, e_hi = math.frexp(c[-1])
    m = round((e_lo - e_hi) / (hi - lo))
    scaled = np.array([math.ldexp(ck, m * k) for k, ck in enumerate(c)])
    y = Polynomial(scaled).roots()
    with np.errstate(over="ignore"):
        x = np.ldexp(y.real, m) + 1j * np.ldexp(y.imag, m)
    # roots beyond the double range are dropped
    return np.concatenate([zeros, x[np.isfinite(x)]])


def _relative_residual(F: Polynomial, x: float) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        terms = F.coef * np.float64(x) ** np.arange(F.coef.size)
        scale = np.abs(terms).sum()
        r = abs(terms.sum()) / scale if scale > 0 else 0.0
    return float(r) if np.isfinite(r) else np.inf


def real_roots(F: Polynomial) -> list[float]:
    """Real roots of ``F`` from companion eigenvalues, Newton-polished and merged."""
    if F.degree() < 1:
        return []
    # Widely separated root magnitudes spoil the small roots of the full
    # companion; truncating the top coefficients isolates the small cluster.
    coef = F.coef
    zs = [z for k in range(F.degree(), 0, -1) for z in _balanced_roots(Polynomial(coef[: k + 1]))]
    scored = []
    for z in zs:
        if abs(z.imag) < ROOT_IMAG_TOL * (1 + abs(z)):
            x = _polish(F, float(z.real))
            r = _relative_residual(F, x)
            if r < ROOT_RESIDUAL_TOL:
                scored.append((x, r))
    # each cluster of near-equal candidates keeps its best-converged member
    roots: list[float] = []
    best: list[float] = []
    for x, r in sorted(scored):
        if roots and abs(x - roots[-1]) < ROOT_MERGE_TOL * max(1.0, abs(x)):
            if r < best[-1]:
                roots[-1], best[-1] = x, r
            continue
        roots.append(x)
        best.append(r)
    return roots


def operating_point_from_x0(params: PhysicalParams, x0: float) -> SteadyOperatingPoint:
    """Reconstruct all first moments and effective quantities from ``x0``.

    Roots too large for double precision give non-finite fields and a NaN
    residual instead of raising.
    """
    E = params.drive
    x0 = np.float64(x0)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        delta = effective_detuning(params, x0)
        lorentz = delta**2 + params.kappa**2 / 4
        Q0 = -2 * delta * E / (SQRT2 * lorentz)
        P0 = -params.kappa * E / (SQRT2 * lorentz)
        p0 = params.Gamma_m / (2 * params.omega_m) * x0
        alpha2 = (Q0**2 + P0**2) / 2
        residual = _balance_residual(params, x0)
    return SteadyOperatingPoint(
        R0=np.array([Q0, P0, x0, p0]),
        Delta_eff=delta,
        omega_eff=params.omega_m + 2 * params.g2_eff * alpha2,
        g_eff=-SQRT2 * params.g1 + 2 * params.g2_eff * x0,
        photon_number=alpha2,
        n_bar=params.n_bar,
        residual=float(residual),
    )


def build_hamiltonian_matrix(params: PhysicalParams, op: SteadyOperatingPoint) -> np.ndarray:
    """Bilinear Hamiltonian matrix ``H / hbar`` in s^-1."""
    Q0, P0 = op.R0[0], op.R0[1]
    c, s = op.g_eff * Q0, op.g_eff * P0
    return np.array(
        [
            [op.Delta_eff, 0.0, c, 0.0],
            [0.0, op.Delta_eff, s, 0.0],
            [c, s, op.omega_eff, 0.0],
            [0.0, 0.0, 0.0, params.omega_m],
        ]
    )


def build_damping_matrix(params: PhysicalParams) -> DampingMatrix:
    k = params.kappa / 2
    G = params.Gamma_m / 2
    th = G * (2 * params.n_bar + 1)
    gamma = np.array(
        [
            [k, -1j * k, 0, 0],
            [1j * k, k, 0, 0],
            [0, 0, th, -1j * G],
            [0, 0, 1j * G, th],
        ],
        dtype=complex,
    )
    return DampingMatrix.from_gamma(gamma)


def drift_diffusion(params: PhysicalParams, op: SteadyOperatingPoint) -> DriftDiffusion:
    return build_drift_diffusion(build_hamiltonian_matrix(params, op), build_damping_matrix(params))


def _is_usable(params: PhysicalParams, op: SteadyOperatingPoint) -> bool:
    dd = drift_diffusion(params, op)
    if not is_stable(dd.B):
        return False
    sigma = solve_lyapunov(dd.B, dd.C)
    return check_physical(MomentState(np.zeros(4), sigma, MODE_LABELS))


def solve_operating_point(
    params: PhysicalParams, allow_multistable: bool = False
) -> SteadyOperatingPoint:
    """Unique stable semi-classical steady state.

    Raises
    ------
    Multistable
        More than one real root is stable (unless ``allow_multistable``, in
        which case the stable root with the smallest ``|x0|`` is returned).
    Unstable
        No real root gives a stable drift matrix.
    """
    roots = [operating_point_from_x0(params, x) for x in real_roots(operating_point_polynomial(params))]
    roots = [op for op in roots if op.residual <= ROOT_RESIDUAL_TOL]
    stable = [op for op in roots if _is_usable(params, op)]
    if not stable:
        raise Unstable(
            f"no stable operating point among {len(roots)} real root(s) "
            f"x0 = {[op.x0 for op in roots]}",
            roots,
        )
    if len(stable) > 1:
        if not allow_multistable:
            raise Multistable(
                f"{len(stable)} stable operating points x0 = {[op.x0 for op in stable]}",
                stable,
            )
        stable.sort(key=lambda op: abs(op.x0))
    return stable[0]


def steady_state(
    params: PhysicalParams, allow_multistable: bool = False
) -> tuple[SteadyOperatingPoint, MomentState]:
    """Operating point plus the Gaussian steady state ``(R0, sigma)``."""
    op = solve_operating_point(params, allow_multistable=allow_multistable)
    if not op.gaussian_ok:
        warnings.warn(
            f"intracavity photon number {op.photon_number:.3g} < {GAUSSIAN_MIN_PHOTONS:g}; "
            "bilinear approximation is questionable",
            GaussianityWarning,
            stacklevel=2,
        )
    dd = drift_diffusion(params, op)
    sigma = solve_lyapunov(dd.B, dd.C)
    return op, MomentState(op.R0.copy(), sigma, MODE_LABELS)
