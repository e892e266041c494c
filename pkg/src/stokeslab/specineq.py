"""Best constants in the one-component spectral inequality

    sum_{mu_j <= Lambda} |a_j|^2  <=  C(Lambda) * int_omega |sum_j a_j e_{j,1}|^2,

the elliptic lift ``v_hat`` of low-frequency sums, and the lower bound of
``sum_j |A_j(s)|^2`` by ``||v_hat(s)||^2``.

Because the full-domain velocity Gram is the identity, the sharp constant
over the window is ``1 / lambda_min`` of the masked first-component Gram.
We obtain it as ``1 / sigma_min(F)**2`` from the singular values of the
observation factor ``F`` (with ``F^T F`` the Gram), which keeps full
relative accuracy far below the square root of machine precision.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .fitting import FitResult, linear_fit
from .grid import ObservationMask
from .spectral import StokesEigenbasis, curl_operators, velocity_laplacian

__all__ = [
    "SINGULAR_RCOND",
    "SingularGramError",
    "FrequencyWindow",
    "augmented_coefficients",
    "best_constant",
    "curve_csv",
    "fit_sqrt_law",
    "lemma_a1_constant",
    "lemma_a1_ratios",
    "midpoint_samples",
    "spectral_curve",
    "vhat",
    "vhat_norms",
    "vhat_residual",
    "window",
]

#: the restricted Gram counts as singular once sigma_min <= SINGULAR_RCOND * sigma_max
SINGULAR_RCOND = 1e-14


class SingularGramError(ArithmeticError):
    """A restricted Gram matrix is numerically singular."""

    def __init__(self, message: str, smallest: float):
        super().__init__(message)
        self.smallest = smallest


@dataclass(frozen=True)
class FrequencyWindow:
    """Cutoff ``lam`` and the 0-based indices of modes with ``mu_j <= lam``."""

    lam: float
    indices: np.ndarray

    @property
    def size(self) -> int:
        return len(self.indices)


def window(basis: StokesEigenbasis, lam: float) -> FrequencyWindow:
    """Low-frequency window ``J(lam)``; empty windows are rejected."""
    idx = basis.window(lam)
    if idx.size == 0:
        raise ValueError(f"window Lambda={lam:g} is below mu_1={basis.mu[0]:g}")
    return FrequencyWindow(float(lam), idx)


def _min_singular(F: np.ndarray, what: str) -> float:
    s = np.linalg.svd(F, compute_uv=False)
    if F.shape[0] < F.shape[1]:
        # fewer observation points than modes: the Gram has an exact kernel
        # that the thin singular value list does not show
        s = np.concatenate([s, np.zeros(F.shape[1] - F.shape[0])])
    if s[-1] <= SINGULAR_RCOND * s[0]:
        raise SingularGramError(
            f"{what} is numerically singular: smallest eigenvalue {s[-1] ** 2:.3e}, "
            f"largest {s[0] ** 2:.3e}; enlarge the region, refine the mesh or lower Lambda",
            float(s[-1] ** 2),
        )
    return float(s[-1])


def best_constant(basis: StokesEigenbasis, mask: ObservationMask, lam: float) -> float:
    """Smallest ``C`` in the one-component spectral inequality on ``J(lam)``.

    Raises
    ------
    SingularGramError
        When the masked Gram restricted to the window is numerically
        singular; the exception carries its smallest eigenvalue.
    """
    J = window(basis, lam).indices
    F = basis.observation_factor(mask, 1)[:, J]
    return 1.0 / _min_singular(F, f"masked Gram on {J.size} modes") ** 2


def midpoint_samples(basis: StokesEigenbasis, max_modes: int | None = None,
                     gap_tol: float = 1e-6) -> np.ndarray:
    """Cutoffs halfway between consecutive distinct eigenvalues.

    A cutoff is produced after mode ``k`` only if ``mu_{k+1}`` is separated
    from ``mu_k`` by more than ``gap_tol * mu_k``; cutoffs never split a
    cluster of (numerically) repeated eigenvalues, so every resulting window
    is invariant under rotations inside a cluster.
    """
    mu = basis.mu
    k_max = len(mu) - 1 if max_modes is None else min(max_modes, len(mu) - 1)
    out = []
    for k in range(k_max):
        if mu[k + 1] - mu[k] > gap_tol * mu[k]:
            out.append(0.5 * (mu[k] + mu[k + 1]))
    return np.array(out)


def spectral_curve(basis: StokesEigenbasis, mask: ObservationMask, lams) -> list[dict]:
    """Rows ``(Lambda, modes, C, logC, sqrtLambda, status)`` for each cutoff.

    Singular windows are recorded with ``status = "singular"`` and ``C = nan``.
    """
    rows = []
    for lam in lams:
        n = int(basis.window(lam).size)
        try:
            C = best_constant(basis, mask, lam)
            status = "ok"
        except SingularGramError:
            C, status = float("nan"), "singular"
        rows.append({"Lambda": float(lam), "modes": n, "C": C, "logC": float(np.log(C)),
                     "sqrtLambda": float(np.sqrt(lam)), "status": status})
    return rows


def curve_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    cols = ["Lambda", "modes", "C", "logC", "sqrtLambda", "status"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in (r[c] for c in cols)])
    return buf.getvalue()


def fit_sqrt_law(lams, Cs) -> FitResult:
    """Least-squares fit of ``log C = log M + K sqrt(Lambda)``.

    Raises
    ------
    ValueError
        With fewer than five samples, non-positive constants or coincident
        cutoffs.
    """
    lams = np.asarray(lams, dtype=float)
    Cs = np.asarray(Cs, dtype=float)
    if lams.size < 5 or lams.shape != Cs.shape:
        raise ValueError(f"need at least 5 matching samples, got {lams.size}")
    if np.any(~(Cs > 0)):
        raise ValueError("constants must be positive")
    alpha, beta, rss, r2 = linear_fit(np.sqrt(lams), np.log(Cs))
    return FitResult("sqrt-Lambda", alpha, beta, 0.5, r2, rss, int(lams.size),
                     (float(lams.min()), float(lams.max())))


# ---------------------------------------------------------------------------
# augmented solutions


def augmented_coefficients(mu, a, s) -> np.ndarray:
    """``A_j(s) = a_j sinh(s sqrt(mu_j)) / sqrt(mu_j)``, shape ``(len(s), len(a))``."""
    r = np.sqrt(np.asarray(mu, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    return np.asarray(a, dtype=float)[None, :] * np.sinh(np.outer(s, r)) / r[None, :]


def _lifted_modes(basis: StokesEigenbasis, J) -> np.ndarray:
    """Columns ``Delta_h e_{j,1}`` for ``j`` in ``J``."""
    return np.asarray(velocity_laplacian(basis.grid, 1) @ basis.e1[:, J])


def _check_coeffs(J, a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (len(J),):
        raise ValueError(f"expected {len(J)} coefficients for the window, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("coefficients must be finite")
    return a


def vhat(basis: StokesEigenbasis, lam: float, a, s) -> np.ndarray:
    """``v_hat(s, .) = sum_j A_j(s) Delta_h e_{j,1}`` as rows, one per ``s``."""
    J = window(basis, lam).indices
    a = _check_coeffs(J, a)
    return augmented_coefficients(basis.mu[J], a, s) @ _lifted_modes(basis, J).T


def vhat_norms(basis: StokesEigenbasis, lam: float, a, s) -> np.ndarray:
    """Discrete L2 norms of ``v_hat(s, .)`` for each ``s``."""
    return basis.grid.h * np.linalg.norm(vhat(basis, lam, a, s), axis=1)


def vhat_residual(basis: StokesEigenbasis, lam: float, a, s_samples) -> float:
    """Largest discrete L2 norm over ``s`` of ``-d_ss v_hat - Delta v_hat``.

    With ``d_ss A_j = mu_j A_j`` the residual is the sum of the first curl
    component of the pencil residuals ``B psi_j - mu_j A psi_j`` weighted by
    ``A_j(s)``; it vanishes for exact eigenpairs.
    """
    J = window(basis, lam).indices
    a = _check_coeffs(J, a)
    if not np.any(a):
        return 0.0
    psi = basis.psi[:, J]
    R = basis.stiffness @ psi - (basis.mass @ psi) * basis.mu[J]
    lifted = np.asarray(curl_operators(basis.grid)[0] @ R)
    rows = augmented_coefficients(basis.mu[J], a, s_samples) @ lifted.T
    return float(basis.grid.h * np.linalg.norm(rows, axis=1).max())


def lemma_a1_constant(basis: StokesEigenbasis, lam: float, s_samples=None) -> float:
    """Sharp ``C`` with ``sum_j |A_j|^2 <= C ||sum_j A_j Delta_h e_{j,1}||^2``.

    The ratio depends only on the direction of the vector ``(A_j(s))_j``, so
    the worst case over all ``s`` and all coefficients is ``1 / lambda_min``
    of the Gram of the lifted modes; ``s_samples`` is accepted for interface
    symmetry with :func:`lemma_a1_ratios` and does not change the value.
    """
    J = window(basis, lam).indices
    F = basis.grid.h * _lifted_modes(basis, J)
    return 1.0 / _min_singular(F, f"lifted-mode Gram on {J.size} modes") ** 2


def lemma_a1_ratios(basis: StokesEigenbasis, lam: float, coeffs, s_samples) -> np.ndarray:
    """Empirical ratios ``sum_j |A_j(s)|^2 / ||v_hat(s)||^2``.

    ``coeffs`` has one coefficient vector per row; the result has shape
    ``(n_draws, len(s_samples))``.
    """
    J = window(basis, lam).indices
    L = _lifted_modes(basis, J)
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    out = np.empty((coeffs.shape[0], len(np.atleast_1d(s_samples))))
    for i, a in enumerate(coeffs):
        A = augmented_coefficients(basis.mu[J], _check_coeffs(J, a), s_samples)
        v = basis.grid.h * np.linalg.norm(A @ L.T, axis=1)
        out[i] = (A**2).sum(axis=1) / v**2
    return out
