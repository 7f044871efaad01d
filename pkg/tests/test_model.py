import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optoqet.constants import HBAR, K_B
from optoqet.gaussian import check_physical, is_stable, lyapunov_residual
from optoqet.model import (
    REFERENCE_PARAMS,
    GaussianityWarning,
    Multistable,
    PhysicalParams,
    Unstable,
    build_damping_matrix,
    build_hamiltonian_matrix,
    drift_diffusion,
    fabry_perot_couplings,
    operating_point_polynomial,
    operating_point_from_x0,
    real_roots,
    solve_operating_point,
    steady_state,
    thermal_occupation,
)

SQRT2 = math.sqrt(2)
# two coexisting stable roots: negative g2 pulls the detuning back towards resonance
MULTISTABLE = REFERENCE_PARAMS.replace(g2=-0.1, drive=3162277660.1683793, Delta_0=1e5, kappa=1e6)


def fixed_point_x0(p: PhysicalParams, iters: int = 20000, damping: float = 0.5) -> float:
    """Damped iteration of the mean-field equations in their uncleared form.

    Light quadratures from the effective detuning, then the mechanical
    position from the radiation-pressure balance.
    """
    x = 0.0
    g2 = 0.0 if p.variant == "linear" else p.g2
    for _ in range(iters):
        delta = p.Delta_0 - SQRT2 * p.g1 * x + g2 * x * x
        den = delta**2 + p.kappa**2 / 4
        Q = -SQRT2 * delta * p.drive / den
        P = -p.kappa * p.drive / (SQRT2 * den)
        alpha2 = (Q * Q + P * P) / 2
        x_new = -SQRT2 * p.g1 * p.omega_m * alpha2 / (p.omega_m**2 + p.Gamma_m**2 / 4 + 2 * g2 * p.omega_m * alpha2)
        if abs(x_new - x) <= 1e-16 * max(1.0, abs(x)):
            return x_new
        x = (1 - damping) * x + damping * x_new
    return x


def mp_real_roots(p: PhysicalParams):
    """Real roots of the position balance, expanded and solved at 60 digits."""
    with mpmath.workdps(60):
        mp = mpmath.mpf
        g2 = mp(0) if p.variant == "linear" else mp(p.g2)
        wE2 = mp(p.omega_m) * mp(p.drive) ** 2
        a = mp(p.omega_m) ** 2 + mp(p.Gamma_m) ** 2 / 4
        d = [mp(p.Delta_0), -mpmath.sqrt(2) * mp(p.g1), g2]  # ascending powers
        d2 = [sum(d[i] * d[k - i] for i in range(3) if 0 <= k - i < 3) for k in range(5)]
        inner = [a * c for c in d2]
        inner[0] += a * mp(p.kappa) ** 2 / 4 + 2 * g2 * wE2
        coef = [mpmath.sqrt(2) * mp(p.g1) * wE2] + inner  # times x, plus constant
        while coef[-1] == 0:
            coef.pop()
        zs = mpmath.polyroots(coef[::-1], maxsteps=500, extraprec=400)
        return [float(z.real) for z in map(mpmath.mpc, zs) if abs(z.imag) <= mp(10) ** -40 * abs(z)]


def mp_occupation(omega, T):
    with mpmath.workdps(50):
        x = mpmath.mpf(HBAR) * omega / (mpmath.mpf(K_B) * T)
        return float(1 / mpmath.expm1(x))


# --- parameters ----------------------------------------------------------------


def test_reference_defaults():
    p = REFERENCE_PARAMS
    assert (p.omega_m, p.mass, p.Gamma_m, p.Delta_0, p.kappa) == (1.1e7, 4.8e-14, 32.0, 1.1e7, 1e5)
    assert (p.g1, p.g2, p.temperature, p.variant) == (200.0, 1.1e-5, 0.0, "quadratic")


@pytest.mark.parametrize(
    "change",
    [
        {"omega_m": 0.0},
        {"kappa": -1.0},
        {"Gamma_m": math.inf},
        {"mass": 0.0},
        {"temperature": -1e-3},
        {"g1": -1.0},
        {"g2": math.nan},
        {"variant": "cubic"},
    ],
)
def test_params_validation(change):
    with pytest.raises(ValueError):
        REFERENCE_PARAMS.replace(**change)


def test_linear_variant_forces_g2_zero():
    assert REFERENCE_PARAMS.replace(variant="linear").g2_eff == 0.0
    assert REFERENCE_PARAMS.g2_eff == REFERENCE_PARAMS.g2


def test_from_mapping_aliases_and_unknown():
    p = PhysicalParams.from_mapping({"E": "2e8", "T": "0.08", "model_variant": "linear"})
    assert (p.drive, p.temperature, p.variant) == (2e8, 0.08, "linear")
    with pytest.raises(KeyError):
        PhysicalParams.from_mapping({"bogus": 1})
    assert PhysicalParams.from_mapping(REFERENCE_PARAMS.to_dict()) == REFERENCE_PARAMS


# --- thermal occupation ------------------------------------------------------------


def test_occupation_zero_temperature():
    assert thermal_occupation(1.1e7, 0.0) == 0.0


@pytest.mark.parametrize("T, approx", [(8e-2, 951.648), (1e-3, 11.409)])
def test_occupation_reference_temperatures(T, approx):
    n = thermal_occupation(1.1e7, T)
    assert n == pytest.approx(mp_occupation(1.1e7, T), rel=1e-13)
    assert n == pytest.approx(approx, abs=1e-3)


def test_occupation_high_temperature_asymptote():
    x = HBAR * 1.1e7 / (K_B * 8e-2)
    assert abs(thermal_occupation(1.1e7, 8e-2) * x - 1) < 1e-3


@given(st.floats(1e-9, 1e3))
def test_occupation_never_overflows(T):
    n = thermal_occupation(1.1e7, T)
    assert math.isfinite(n) and n >= 0
    ref = mp_occupation(1.1e7, T)
    assert n == pytest.approx(ref, rel=1e-12, abs=1e-300)


# --- Fabry-Perot couplings -----------------------------------------------------------


@given(st.floats(1e9, 1e16), st.floats(1e-4, 1.0), st.floats(1e-16, 1e-9), st.floats(1e5, 1e8))
def test_fabry_perot_identity(w0, L, m, wm):
    g1, g2 = fabry_perot_couplings(w0, L, m, wm)
    assert g2 * w0 == pytest.approx(2 * g1**2, rel=1e-12)
    h1, h2 = fabry_perot_couplings(w0, 2 * L, m, wm)
    assert h1 == pytest.approx(g1 / 2, rel=1e-12)
    assert h2 == pytest.approx(g2 / 4, rel=1e-12)


def test_fabry_perot_reference_couplings():
    # pick the length that gives g1 = 200 s^-1 at the reference mass and frequency
    w0 = 2 * 200.0**2 / 1.1e-5
    x_zp = math.sqrt(HBAR / (2 * 4.8e-14 * 1.1e7))
    g1, g2 = fabry_perot_couplings(w0, w0 * x_zp / 200.0, 4.8e-14, 1.1e7)
    assert g1 == pytest.approx(200.0, rel=1e-12)
    assert g2 == pytest.approx(2 * 200.0**2 / w0, rel=1e-12)
    assert g2 == pytest.approx(1.1e-5, rel=1e-12)


# --- operating point -------------------------------------------------------------------


def test_polynomial_degrees():
    assert operating_point_polynomial(REFERENCE_PARAMS).degree() == 5
    assert operating_point_polynomial(REFERENCE_PARAMS.replace(variant="linear")).degree() == 3


def test_decoupled_operating_point():
    E, D, k = 1e9, 1.1e7, 1e5
    op = solve_operating_point(REFERENCE_PARAMS.replace(g1=0.0, g2=0.0, drive=E))
    assert op.x0 == 0 and op.R0[3] == 0 and op.Delta_eff == D
    assert op.R0[0] == pytest.approx(-2 * D * E / (SQRT2 * (D**2 + k**2 / 4)), rel=1e-14)
    assert op.R0[1] == pytest.approx(-k * E / (SQRT2 * (D**2 + k**2 / 4)), rel=1e-14)


@pytest.mark.parametrize("T", [0.0, 8e-2])
@pytest.mark.parametrize("E", [1e8, 1e9, 3.8e9])
@pytest.mark.parametrize("variant", ["linear", "quadratic"])
def test_x0_matches_fixed_point_oracle(E, T, variant):
    p = REFERENCE_PARAMS.replace(drive=E, temperature=T, variant=variant)
    op = solve_operating_point(p)
    assert op.x0 == pytest.approx(fixed_point_x0(p), rel=1e-12)
    assert op.residual <= 1e-10


def test_reference_low_drive_point():
    op = solve_operating_point(REFERENCE_PARAMS)
    assert op.photon_number == pytest.approx(82.6, abs=0.1)
    # magnitude checked against the fixed-point oracle
    assert op.x0 == pytest.approx(-2.125e-3, rel=1e-3)


def test_photon_range_over_reference_sweep():
    lo = solve_operating_point(REFERENCE_PARAMS.replace(drive=1e8)).photon_number
    hi = solve_operating_point(REFERENCE_PARAMS.replace(drive=3.8e9)).photon_number
    assert 80 <= lo <= 85
    assert 1.15e5 <= hi <= 1.25e5


def test_operating_point_invariants():
    op = solve_operating_point(REFERENCE_PARAMS.replace(drive=2e9))
    p = REFERENCE_PARAMS
    assert op.Delta_eff == p.Delta_0 - SQRT2 * p.g1 * op.x0 + p.g2 * op.x0**2
    assert op.R0[3] == p.Gamma_m / (2 * p.omega_m) * op.x0
    assert op.photon_number == pytest.approx((op.R0[0] ** 2 + op.R0[1] ** 2) / 2, rel=1e-15)


def test_photon_number_increases_with_drive():
    grid = np.logspace(8, np.log10(3.8e9), 60)
    n = [solve_operating_point(REFERENCE_PARAMS.replace(drive=E)).photon_number for E in grid]
    assert np.all(np.diff(n) > 0)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(1.0, 1e4),
    st.one_of(st.just(0.0), st.floats(1e-9, 1e-2)),
    st.floats(1e6, 1e10),
    st.floats(1e5, 3e7),
    st.sampled_from(["linear", "quadratic"]),
)
def test_roots_reproduce_balance_and_sign(g1, g2, E, D, variant):
    p = REFERENCE_PARAMS.replace(g1=g1, g2=g2, drive=E, Delta_0=D, variant=variant)
    F = operating_point_polynomial(p)
    roots = real_roots(F)
    assert len(roots) <= (5 if variant == "quadratic" else 3)
    # candidates failing the balance are near-real complex pairs; the solver drops them
    accepted = [x for x in roots if operating_point_from_x0(p, x).residual <= 1e-10]
    assert accepted and all(x <= 0 for x in accepted)
    for x in mp_real_roots(p):
        assert any(abs(x - y) <= 1e-8 * abs(x) for y in accepted)


@settings(max_examples=60, deadline=None)
@given(st.floats(1.0, 1e4), st.floats(0.0, 1e-2), st.floats(1e6, 1e10), st.floats(1e5, 3e7))
def test_root_finder_survives_tiny_quadratic_coupling(g1, g2, E, D):
    # subnormal g2 puts spurious roots far outside the double range
    p = REFERENCE_PARAMS.replace(g1=g1, g2=g2, drive=E, Delta_0=D)
    roots = real_roots(operating_point_polynomial(p))
    assert len(roots) <= 5
    accepted = [x for x in roots if operating_point_from_x0(p, x).residual <= 1e-10]
    assert accepted and all(x <= 0 for x in accepted)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e8, 3.8e9), st.floats(-0.05, 0.05))
def test_physical_root_to_full_precision(E, dg2):
    # finite-difference oracles difference x0 across tiny coupling steps
    p = REFERENCE_PARAMS.replace(drive=E, g2=REFERENCE_PARAMS.g2 + dg2)
    x0 = solve_operating_point(p).x0
    exact = min(mp_real_roots(p), key=lambda x: abs(x - x0))
    assert x0 == pytest.approx(exact, rel=1e-14)


def test_multistable_detected_and_override():
    with pytest.raises(Multistable) as info:
        solve_operating_point(MULTISTABLE)
    roots = info.value.roots
    assert len(roots) == 2
    op = solve_operating_point(MULTISTABLE, allow_multistable=True)
    assert abs(op.x0) == min(abs(r.x0) for r in roots)


def test_unstable_detected():
    with pytest.raises(Unstable):
        solve_operating_point(REFERENCE_PARAMS.replace(drive=1e12))
    with pytest.raises(Unstable):
        # blue detuning
        solve_operating_point(REFERENCE_PARAMS.replace(Delta_0=-1.1e7, drive=1e9))


def test_gaussianity_warning():
    with warnings.catch_warnings():
        warnings.simplefilter("error", GaussianityWarning)
        steady_state(REFERENCE_PARAMS)
        with pytest.raises(GaussianityWarning):
            steady_state(REFERENCE_PARAMS.replace(drive=5e7))


# --- matrices ---------------------------------------------------------------------------


def test_hamiltonian_decoupled():
    p = REFERENCE_PARAMS.replace(g1=0.0, g2=0.0)
    H = build_hamiltonian_matrix(p, solve_operating_point(p))
    assert np.array_equal(H, np.diag([p.Delta_0, p.Delta_0, p.omega_m, p.omega_m]))


def test_hamiltonian_linear_reduction():
    p = REFERENCE_PARAMS.replace(g2=0.0, drive=1e9)
    op = solve_operating_point(p)
    assert op.g_eff == -SQRT2 * p.g1 and op.omega_eff == p.omega_m


def test_hamiltonian_entries():
    op = solve_operating_point(REFERENCE_PARAMS)
    H = build_hamiltonian_matrix(REFERENCE_PARAMS, op)
    assert np.array_equal(H, H.T)
    x0 = fixed_point_x0(REFERENCE_PARAMS)
    oracle = operating_point_from_x0(REFERENCE_PARAMS, x0)
    g_eff = -SQRT2 * 200.0 + 2 * 1.1e-5 * x0
    assert H[0, 2] == pytest.approx(g_eff * oracle.R0[0], rel=1e-12)
    assert H[1, 2] == pytest.approx(g_eff * oracle.R0[1], rel=1e-12)
    assert H[2, 2] == pytest.approx(1.1e7 + 2 * 1.1e-5 * oracle.photon_number, rel=1e-15)


@pytest.mark.parametrize("T", [0.0, 1e-3, 8e-2])
def test_damping_matrix(T):
    p = REFERENCE_PARAMS.replace(temperature=T)
    g = build_damping_matrix(p).gamma
    assert np.allclose(g, g.conj().T)
    assert np.linalg.eigvalsh(g).min() >= -1e-12 * np.abs(g).max()
    n = thermal_occupation(p.omega_m, T)
    assert g[2, 2].real == pytest.approx(p.Gamma_m * (2 * n + 1) / 2, rel=1e-15)
    if T == 8e-2:
        assert g[2, 2].real == pytest.approx(32 * (2 * 951.648 + 1) / 2, rel=1e-6)


# --- steady state -------------------------------------------------------------------------


def test_stable_at_low_drive():
    op = solve_operating_point(REFERENCE_PARAMS)
    assert is_stable(drift_diffusion(REFERENCE_PARAMS, op).B)


@pytest.mark.parametrize("T", [0.0, 8e-2])
def test_decoupled_steady_state(T):
    p = REFERENCE_PARAMS.replace(g1=0.0, g2=0.0, temperature=T)
    _, st_ = steady_state(p)
    n = p.n_bar
    assert np.abs(st_.covariance - np.diag([0.5, 0.5, n + 0.5, n + 0.5])).max() <= 1e-12 * (n + 0.5)


def test_sweep_states_physical(fig1a_records):
    assert all(r["status"] == "ok" for r in fig1a_records)
    assert max(r["lyap_residual"] for r in fig1a_records) <= 1e-10
    assert min(r["physical_margin"] for r in fig1a_records) >= -1e-9


def test_light_reduction_physical():
    from optoqet.gaussian import reduce_state

    for E in (1e8, 1e9, 3.8e9):
        _, st_ = steady_state(REFERENCE_PARAMS.replace(drive=E, temperature=8e-2))
        assert check_physical(reduce_state(st_, "light"))


def test_variants_agree_at_zero_g2():
    for E in (1e8, 1e9, 3.8e9):
        a_op, a = steady_state(REFERENCE_PARAMS.replace(g2=0.0, drive=E, variant="linear"))
        b_op, b = steady_state(REFERENCE_PARAMS.replace(g2=0.0, drive=E))
        assert np.array_equal(a.first_moments, b.first_moments)
        assert np.array_equal(a.covariance, b.covariance)


def test_residual_small_on_steady_state():
    p = REFERENCE_PARAMS.replace(drive=2e9, temperature=1e-3)
    op, st_ = steady_state(p)
    dd = drift_diffusion(p, op)
    assert lyapunov_residual(dd.B, dd.C, st_.covariance) <= 1e-10
