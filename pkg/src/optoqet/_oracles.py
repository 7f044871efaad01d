"""Independent numerical cross-checks used by the test-suite and ``validate``.

None of these reuse the analytic derivative machinery: gradients are Richardson-extrapolated
finite differences of the full steady-state pipeline, the QFI is recovered from the
Uhlmann fidelity of two neighbouring Gaussian states, and quadrature Fisher
information is integrated numerically from the outcome density.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np
import scipy.integrate

from .model import PhysicalParams, steady_state

PARAMS = ("g1", "g2")
EPS = np.finfo(float).eps

_OMEGA1 = np.array([[0.0, 1.0], [-1.0, 0.0]])
FIDELITY_DPS = 60
FD_REL_STEP = 1e-3


def symplectic_form(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), _OMEGA1)


def gaussian_log_fidelity(mu1, V1, mu2, V2, dps: int = FIDELITY_DPS) -> float:
    """``-ln F`` for the root fidelity ``F = Tr sqrt(sqrt(r1) r2 sqrt(r1))``
    of two two-mode Gaussian states (vacuum covariance ``I/2``).

    Uses the determinant form of Marian & Marian (2012), evaluated with
    ``dps`` significant digits: near-pure steady states make the double
    precision evaluation lose every digit of ``1 - F``.
    """
    mu1, mu2 = np.asarray(mu1, float), np.asarray(mu2, float)
    if mu1.shape != (4,) or mu2.shape != (4,):
        raise ValueError("the fidelity oracle handles two-mode states only")
    with mpmath.workdps(dps):
        m = lambda a: mpmath.matrix(np.asarray(a, float).tolist())  # noqa: E731
        A, Bm, Om = m(V1), m(V2), m(symplectic_form(2))
        eye = mpmath.eye(4)
        half_i_om = mpmath.mpc(0, 0.5) * Om
        delta = mpmath.det(A + Bm)
        gamma = 16 * mpmath.det(Om * A * Om * Bm - eye / 4)
        lam = 16 * mpmath.re(mpmath.det(A + half_i_om) * mpmath.det(Bm + half_i_om))
        a = mpmath.sqrt(gamma) + mpmath.sqrt(max(lam, 0))
        # a - sqrt(a^2 - delta), rewritten without the cancellation
        denom = delta / (a + mpmath.sqrt(max(a * a - delta, 0)))
        d = m((mu1 - mu2).reshape(-1, 1))
        quad = (d.T * mpmath.lu_solve(A + Bm, d))[0]
        # squared fidelity is exp(-quad / 2) / denom
        return float((mpmath.log(denom) + quad / 2) / 2)


def gaussian_fidelity(mu1, V1, mu2, V2) -> float:
    return math.exp(-gaussian_log_fidelity(mu1, V1, mu2, V2))


def fidelity_qfi(params: PhysicalParams, which: str = "g1", rel_step: float = 1e-4) -> float:
    """QFI of one coupling from the fidelity of the two neighbouring states.

    Uses ``I ~ 8 (1 - F) / eps^2 ~ 8 (-ln F) / eps^2`` with the states taken at
    ``g -+ eps / 2`` so the estimate is centred on ``g``.
    """
    g = getattr(params, which)
    eps = rel_step * max(abs(g), params.Gamma_m)
    _, a = steady_state(params.replace(**{which: g - eps / 2}))
    _, b = steady_state(params.replace(**{which: g + eps / 2}))
    return 8 * gaussian_log_fidelity(a.first_moments, a.covariance, b.first_moments, b.covariance) / eps**2


def _pipeline(params: PhysicalParams) -> dict:
    op, state = steady_state(params)
    x0 = op.x0
    g2 = params.g2_eff
    return {
        "dR0": op.R0,
        "dSigma": state.covariance,
        # shifts computed from x0 and |alpha|^2 so the differences are resolvable
        "dDelta_eff": -math.sqrt(2) * params.g1 * x0 + g2 * x0**2,
        "dAlpha2": op.photon_number,
        "dOmega_eff": 2 * g2 * op.photon_number,
        "dG_eff": op.g_eff,
    }


def fd_step(params: PhysicalParams, which: str, rel_step: float = FD_REL_STEP) -> float:
    return rel_step * max(abs(getattr(params, which)), params.Gamma_m)


def _central(params: PhysicalParams, which: str, h: float) -> dict:
    g = getattr(params, which)
    plus = _pipeline(params.replace(**{which: g + h}))
    minus = _pipeline(params.replace(**{which: g - h}))
    return {key: (np.asarray(plus[key]) - np.asarray(minus[key])) / (2 * h) for key in plus}


def fd_gradients(params: PhysicalParams, rel_step: float = FD_REL_STEP) -> dict:
    """Richardson-extrapolated central differences for both couplings.

    Combines steps ``h`` and ``h / 2`` as ``(4 D(h/2) - D(h)) / 3`` so the
    ``h^2`` truncation term cancels. Returns a dict of arrays with a leading
    parameter axis, plus ``"floor"``: per-quantity roundoff resolution
    ``~eps |f| / h`` of each extrapolated quotient.
    """
    out: dict = {}
    floor: dict = {}
    base = _pipeline(params)
    for which in PARAMS:
        h = fd_step(params, which, rel_step)
        coarse = _central(params, which, h)
        fine = _central(params, which, h / 2)
        for key in base:
            out.setdefault(key, []).append((4 * fine[key] - coarse[key]) / 3)
            # |4 / (h/2) + 1 / h| / 3 = 3 / h amplification of eps |f|
            floor.setdefault(key, []).append(48 * EPS * float(np.linalg.norm(np.atleast_1d(base[key]))) / h)
    result = {key: np.array(val) for key, val in out.items()}
    result["floor"] = {key: np.array(val) for key, val in floor.items()}
    return result


def quadrature_fi_integral(k: int, sigma, dR0, dSigma) -> np.ndarray:
    """Fisher information of quadrature ``k`` by integrating the score products.

    The integral runs over the standardised outcome ``z = (s - s0) / sqrt(v)``
    and uses ``d ln p / dg = z ds0 / sqrt(v) + (z^2 - 1) dv / (2 v)``.
    """
    v = float(np.asarray(sigma)[k, k])
    ds = np.asarray(dR0)[:, k]
    dv = np.asarray(dSigma)[:, k, k]
    sd = math.sqrt(v)

    def density(z):
        return math.exp(-z * z / 2) / math.sqrt(2 * math.pi)

    def score(z, i):
        return z * ds[i] / sd + (z * z - 1) * dv[i] / (2 * v)

    J = np.empty((2, 2))
    for i in range(2):
        for j in range(i, 2):
            val, _ = scipy.integrate.quad(
                lambda z: density(z) * score(z, i) * score(z, j),
                -np.inf,
                np.inf,
                epsabs=0.0,
                epsrel=1e-13,
                limit=200,
            )
            J[i, j] = J[j, i] = val
    return J
