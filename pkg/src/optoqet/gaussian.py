"""Mode-count-generic machinery for Gaussian states of bosonic modes.

Quadratures are ordered ``(X_1, P_1, ..., X_N, P_N)`` and covariance
matrices use the symmetrised convention in which the vacuum is ``I/2``.
Hamiltonian matrices are always passed as ``H / hbar`` (units of s^-1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "DampingMatrix",
    "DriftDiffusion",
    "ImaginaryResidue",
    "MomentState",
    "SingularSystem",
    "build_drift_diffusion",
    "check_physical",
    "commutator_matrix",
    "is_stable",
    "lyapunov_operator",
    "lyapunov_residual",
    "moment_time_derivatives",
    "physicality_margin",
    "reduce_state",
    "solve_lyapunov",
    "split_damping",
]

IMAG_TOL = 1e-12


class ImaginaryResidue(ValueError):
    """A matrix that should be real came out of complex algebra with a
    non-negligible imaginary part."""


class SingularSystem(np.linalg.LinAlgError):
    """The vectorised Lyapunov system is rank deficient."""


def commutator_matrix(n_modes: int) -> np.ndarray:
    """Return ``W`` with ``W_ij = [R_i, R_j]`` for ``n_modes`` modes.

    Block diagonal with ``[[0, i], [-i, 0]]`` per mode.
    """
    if int(n_modes) != n_modes or n_modes < 1:
        raise ValueError(f"n_modes must be a positive integer, got {n_modes!r}")
    block = np.array([[0, 1j], [-1j, 0]])
    return np.kron(np.eye(int(n_modes)), block)


def _check_square_even(matrix: np.ndarray, name: str) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"{name} must be square, got shape {matrix.shape}")
    if matrix.shape[0] % 2:
        raise ValueError(f"{name} must have even dimension, got {matrix.shape[0]}")


def split_damping(gamma) -> tuple[np.ndarray, np.ndarray]:
    """Split a damping matrix into symmetric and antisymmetric parts."""
    gamma = np.asarray(gamma, dtype=complex)
    _check_square_even(gamma, "gamma")
    return (gamma + gamma.T) / 2, (gamma - gamma.T) / 2


@dataclass(frozen=True)
class DampingMatrix:
    gamma: np.ndarray
    gamma_S: np.ndarray
    gamma_A: np.ndarray

    @classmethod
    def from_gamma(cls, gamma) -> "DampingMatrix":
        gamma = np.asarray(gamma, dtype=complex)
        gamma_S, gamma_A = split_damping(gamma)
        return cls(gamma, gamma_S, gamma_A)

    @property
    def dim(self) -> int:
        return self.gamma.shape[0]


@dataclass(frozen=True)
class DriftDiffusion:
    """Drift ``B`` and diffusion ``C`` of the Lyapunov equation
    ``B^T sigma + sigma B = C``."""

    B: np.ndarray
    C: np.ndarray


def _as_real(matrix: np.ndarray, name: str, tol: float = IMAG_TOL) -> np.ndarray:
    scale = max(1.0, float(np.abs(matrix).max(initial=0.0)))
    residue = float(np.abs(matrix.imag).max(initial=0.0))
    if residue > tol * scale:
        raise ImaginaryResidue(
            f"{name} has imaginary residue {residue:.3e} (scale {scale:.3e})"
        )
    return np.ascontiguousarray(matrix.real)


def _as_damping(gamma) -> DampingMatrix:
    if isinstance(gamma, DampingMatrix):
        return gamma
    return DampingMatrix.from_gamma(gamma)


def build_drift_diffusion(H_freq, gamma, tol: float = IMAG_TOL) -> DriftDiffusion:
    """Build ``B = i H W + gamma_A W`` and ``C = -W gamma_S W``.

    Parameters
    ----------
    H_freq : (2N, 2N) array
        Real symmetric Hamiltonian matrix divided by hbar.
    gamma : DampingMatrix or (2N, 2N) complex array
    tol : float
        Largest tolerated imaginary residue relative to the matrix scale.
    """
    H_freq = np.asarray(H_freq, dtype=float)
    damping = _as_damping(gamma)
    _check_square_even(H_freq, "H_freq")
    if H_freq.shape != damping.gamma.shape:
        raise ValueError(
            f"H_freq {H_freq.shape} and gamma {damping.gamma.shape} do not match"
        )
    W = commutator_matrix(H_freq.shape[0] // 2)
    B = 1j * H_freq @ W + damping.gamma_A @ W
    C = -W @ damping.gamma_S @ W
    C = _as_real(C, "C", tol)
    return DriftDiffusion(_as_real(B, "B", tol), (C + C.T) / 2)


def lyapunov_operator(B) -> np.ndarray:
    """Matrix of ``X -> B^T X + X B`` acting on column-major ``vec(X)``."""
    B = np.asarray(B, dtype=float)
    eye = np.eye(B.shape[0])
    return np.kron(eye, B.T) + np.kron(B.T, eye)


def solve_lyapunov(B, C, method: str = "vectorized") -> np.ndarray:
    """Solve ``B^T sigma + sigma B = C`` for ``sigma``.

    ``method="vectorized"`` solves the dense ``(n^2, n^2)`` Kronecker system,
    which is exact and cheap for two modes. ``method="bartels-stewart"``
    delegates to :func:`scipy.linalg.solve_continuous_lyapunov`.
    The result is symmetrised.
    """
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    n = B.shape[0]
    if B.shape != (n, n) or C.shape != (n, n):
        raise ValueError(f"B {B.shape} and C {C.shape} must be square and equal")

    if method == "vectorized":
        M = lyapunov_operator(B)
        svals = np.linalg.svd(M, compute_uv=False)
        if svals[-1] <= M.shape[0] * np.finfo(float).eps * svals[0]:
            raise SingularSystem(
                f"Lyapunov operator is rank deficient (smin/smax = {svals[-1] / svals[0]:.3e})"
            )
        sigma = np.linalg.solve(M, C.reshape(-1, order="F")).reshape(n, n, order="F")
    elif method == "bartels-stewart":
        # scipy solves A X + X A^H = Q
        sigma = scipy.linalg.solve_continuous_lyapunov(B.T, C)
        if not np.all(np.isfinite(sigma)):
            raise SingularSystem("Bartels-Stewart solve returned non-finite values")
    else:
        raise ValueError(f"unknown Lyapunov method {method!r}")
    return (sigma + sigma.T) / 2


def lyapunov_residual(B, C, sigma) -> float:
    """Relative Frobenius residual ``|B^T s + s B - C| / max(1, |C|)``."""
    B, C, sigma = (np.asarray(a, dtype=float) for a in (B, C, sigma))
    r = B.T @ sigma + sigma @ B - C
    return float(np.linalg.norm(r) / max(1.0, np.linalg.norm(C)))


def is_stable(B) -> bool:
    """True iff every eigenvalue of ``B`` has strictly negative real part."""
    B = np.asarray(B)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError(f"B must be square, got shape {B.shape}")
    return bool(np.linalg.eigvals(B).real.max() < 0)


@dataclass(frozen=True)
class MomentState:
    """First moments and covariance matrix of an N-mode Gaussian state."""

    first_moments: np.ndarray
    covariance: np.ndarray
    mode_labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        r = np.asarray(self.first_moments, dtype=float).reshape(-1)
        s = np.asarray(self.covariance, dtype=float)
        if s.shape != (r.size, r.size) or r.size % 2:
            raise ValueError(
                f"inconsistent shapes: first moments {r.shape}, covariance {s.shape}"
            )
        if not np.allclose(s, s.T, rtol=1e-12, atol=1e-14 * max(1.0, np.abs(s).max())):
            raise ValueError("covariance matrix is not symmetric")
        labels = tuple(self.mode_labels) or tuple(f"mode{k}" for k in range(r.size // 2))
        if len(labels) != r.size // 2:
            raise ValueError(f"expected {r.size // 2} mode labels, got {len(labels)}")
        object.__setattr__(self, "first_moments", r)
        object.__setattr__(self, "covariance", s)
        object.__setattr__(self, "mode_labels", labels)

    @property
    def n_modes(self) -> int:
        return self.first_moments.size // 2


def physicality_margin(state: MomentState) -> float:
    """Smallest eigenvalue of the Hermitian matrix ``2 sigma + W``."""
    W = commutator_matrix(state.n_modes)
    return float(np.linalg.eigvalsh(2 * state.covariance + W)[0])


def check_physical(state: MomentState, tol: float = 1e-9) -> bool:
    """Robertson-Schroedinger test: ``2 sigma + W >= -tol``."""
    return physicality_margin(state) >= -tol


def moment_time_derivatives(
    state: MomentState, H_freq, gamma, tol: float = IMAG_TOL
) -> tuple[np.ndarray, np.ndarray]:
    """Instantaneous ``(dR/dt, dsigma/dt)`` under the bilinear master equation."""
    H_freq = np.asarray(H_freq, dtype=float)
    damping = _as_damping(gamma)
    if H_freq.shape != state.covariance.shape or damping.gamma.shape != H_freq.shape:
        raise ValueError("state, H_freq and gamma dimensions disagree")
    W = commutator_matrix(state.n_modes)
    A = -1j * W @ H_freq + W @ damping.gamma_A
    dR = _as_real(A @ state.first_moments, "dR/dt", tol)
    dsigma = A @ state.covariance + state.covariance @ (1j * H_freq @ W + damping.gamma_A @ W)
    dsigma = _as_real(dsigma + W @ damping.gamma_S @ W, "dsigma/dt", tol)
    return dR, (dsigma + dsigma.T) / 2


def _resolve_modes(state: MomentState, modes: Sequence[int | str]) -> list[int]:
    if isinstance(modes, (int, str)):
        modes = [modes]
    modes = list(modes)
    if not modes:
        raise ValueError("mode subset must be nonempty")
    idx = []
    for m in modes:
        if isinstance(m, str):
            if m not in state.mode_labels:
                raise ValueError(f"unknown mode label {m!r}; have {state.mode_labels}")
            m = state.mode_labels.index(m)
        if not 0 <= m < state.n_modes:
            raise IndexError(f"mode index {m} out of range for {state.n_modes} modes")
        idx.append(int(m))
    if len(set(idx)) != len(idx):
        raise ValueError(f"repeated modes in subset {modes}")
    return idx


def quadrature_indices(state: MomentState, modes: Sequence[int | str]) -> np.ndarray:
    """Indices into ``R`` of the (position, momentum) pairs for ``modes``."""
    return np.array([q for m in _resolve_modes(state, modes) for q in (2 * m, 2 * m + 1)])


def reduce_state(state: MomentState, modes: Sequence[int | str]) -> MomentState:
    """Partial trace over every mode not in ``modes``."""
    idx = quadrature_indices(state, modes)
    labels = tuple(state.mode_labels[i // 2] for i in idx[::2])
    return MomentState(
        state.first_moments[idx], state.covariance[np.ix_(idx, idx)], labels
    )
