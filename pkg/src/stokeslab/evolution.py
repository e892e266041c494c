"""Exact modal evolution of the Stokes semigroup with a one-component control.

The state is the coefficient vector ``a`` of a velocity field in the
orthonormal eigenbasis, so ``||u||_H = ||a||_2`` and the free evolution is
``a_j -> a_j exp(-mu_j t)``.  Controls act through the first velocity
component on the observation region and are restricted to the exponential
family

    f_1(x, t) = sum_{j in S} q_j exp(-mu_j (t_e - t)) e_{j,1}(x) 1_omega(x),

for which every Duhamel integral has a closed form with the kernel
``(1 - exp(-(mu_j + mu_k) tau)) / (mu_j + mu_k)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .grid import ObservationMask
from .spectral import StokesEigenbasis, component_gram

__all__ = [
    "ControlSignal",
    "ModalSystem",
    "adjoint_observe",
    "apply_control",
    "control_pairing",
    "decay",
    "duhamel_kernel",
    "energy_integral",
    "observation_matrix",
    "trajectory_csv",
]


def duhamel_kernel(tau: float, mu_a, mu_b=None) -> np.ndarray:
    """``K_jk = (1 - exp(-(a_j + b_k) tau)) / (a_j + b_k)`` without cancellation."""
    mu_a = np.asarray(mu_a, dtype=float)
    mu_b = mu_a if mu_b is None else np.asarray(mu_b, dtype=float)
    s = mu_a[:, None] + mu_b[None, :]
    return -np.expm1(-s * tau) / s


@dataclass(frozen=True, eq=False)
class ModalSystem:
    """Eigenvalues and first-component observation data of a truncated basis.

    Attributes
    ----------
    mu : ndarray, shape (m,)
    gram : ndarray, shape (m, m)
        ``G_jk = <e_{j,1}, e_{k,1}>_omega``.
    factor : ndarray, shape (p, m)
        Any matrix with ``factor.T @ factor == gram``; the masked point
        values scaled by ``h`` for a real basis.
    label : str
        Region descriptor for reports.
    """

    mu: np.ndarray
    gram: np.ndarray = field(repr=False)
    factor: np.ndarray = field(repr=False)
    label: str = ""

    @classmethod
    def from_basis(cls, basis: StokesEigenbasis, mask: ObservationMask) -> "ModalSystem":
        return cls(basis.mu, component_gram(basis, 1, mask), basis.observation_factor(mask, 1),
                   mask.rect.describe())

    @classmethod
    def from_gram(cls, mu, gram, label: str = "synthetic") -> "ModalSystem":
        """Build from eigenvalues and a PSD Gram (factor from its eigendecomposition)."""
        mu = np.asarray(mu, dtype=float)
        gram = np.asarray(gram, dtype=float)
        if gram.shape != (mu.size, mu.size):
            raise ValueError("Gram shape does not match the number of modes")
        w, V = la.eigh(gram)
        factor = np.sqrt(np.clip(w, 0.0, None))[:, None] * V.T
        return cls(mu, gram, factor, label)

    @property
    def m(self) -> int:
        return self.mu.size

    def window(self, lam: float) -> np.ndarray:
        return np.flatnonzero(self.mu <= lam)

    def restrict(self, idx) -> "ModalSystem":
        """Subsystem on the modes ``idx``."""
        idx = np.asarray(idx)
        return ModalSystem(self.mu[idx], self.gram[np.ix_(idx, idx)], self.factor[:, idx], self.label)


def decay(state, mu, tau: float) -> np.ndarray:
    """Free evolution over ``tau``: ``a_j exp(-mu_j tau)``."""
    if not tau >= 0:
        raise ValueError(f"decay time must be non-negative, got {tau}")
    return np.asarray(state, dtype=float) * np.exp(-np.asarray(mu) * tau)


@dataclass(frozen=True)
class ControlSignal:
    """Exponential-family control on ``[t_start, t_end]``.

    ``sources`` are 0-based mode indices and ``weights`` the matching
    ``q_j``; the second velocity component of the control is zero.
    """

    t_start: float
    t_end: float
    sources: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError(f"degenerate control interval [{self.t_start}, {self.t_end}]")
        if np.shape(self.sources) != np.shape(self.weights):
            raise ValueError("sources and weights must have the same length")

    @property
    def tau(self) -> float:
        return self.t_end - self.t_start

    def norm_sq(self, system: ModalSystem) -> float:
        """``||f||^2`` over ``omega x (t_start, t_end)`` in closed form."""
        S, q = self.sources, self.weights
        if S.size == 0:
            return 0.0
        W = system.gram[np.ix_(S, S)] * duhamel_kernel(self.tau, system.mu[S])
        return float(max(q @ W @ q, 0.0))

    def scaled(self, c: float) -> "ControlSignal":
        return ControlSignal(self.t_start, self.t_end, self.sources, c * self.weights)

    def field(self, basis: StokesEigenbasis, mask: ObservationMask, t: float) -> np.ndarray:
        """First control component at time ``t`` on the ``(N, N + 1)`` points."""
        S = self.sources
        amp = self.weights * np.exp(-basis.mu[S] * (self.t_end - t))
        f = basis.e1[:, S] @ amp * mask.u_points.ravel()
        return f.reshape(basis.grid.shape_of("u"))


def apply_control(state, signal: ControlSignal, system: ModalSystem) -> np.ndarray:
    """State at ``t_end`` from the state at ``t_start`` under ``signal``.

    Every mode of the system receives the spillover
    ``sum_{j in S} q_j G_jk (1 - exp(-(mu_j + mu_k) tau)) / (mu_j + mu_k)``.
    """
    a = decay(state, system.mu, signal.tau)
    S = signal.sources
    if S.size:
        K = duhamel_kernel(signal.tau, system.mu[S], system.mu)
        a = a + signal.weights @ (system.gram[S, :] * K)
    return a


def observation_matrix(system: ModalSystem, T: float, idx=None) -> np.ndarray:
    """``N_T = G o K_T``, optionally restricted to the modes ``idx``."""
    if not T > 0:
        raise ValueError(f"observation time must be positive, got {T}")
    mu, G = system.mu, system.gram
    if idx is not None:
        mu, G = mu[idx], G[np.ix_(idx, idx)]
    return G * duhamel_kernel(T, mu)


def adjoint_observe(state, T: float, system: ModalSystem) -> float:
    """``int_0^T int_omega |z_1|^2`` for the adjoint started from ``state``."""
    a = np.asarray(state, dtype=float)
    return float(max(a @ observation_matrix(system, T) @ a, 0.0))


def energy_integral(state, mu, tau: float) -> float:
    """``int_0^tau ||z(t)||_H^2 dt`` for the free evolution."""
    a = np.asarray(state, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return float(np.sum(a**2 * -np.expm1(-2 * mu * tau) / (2 * mu)))


def control_pairing(signal: ControlSignal, adjoint_final, T: float, system: ModalSystem) -> float:
    """``int int_omega f_1 z_1`` with ``z(t) = sum_k b_k exp(-mu_k (T - t)) e_k``.

    Requires ``signal.t_end <= T``.
    """
    if signal.t_end > T:
        raise ValueError("control interval must end before the adjoint terminal time")
    S, q = signal.sources, signal.weights
    if S.size == 0:
        return 0.0
    b = np.asarray(adjoint_final, dtype=float)
    mu = system.mu
    # int_{ts}^{te} exp(-mu_j (te - t)) exp(-mu_k (T - t)) dt
    #   = exp(-mu_k (T - te)) (1 - exp(-(mu_j + mu_k) tau)) / (mu_j + mu_k)
    K = duhamel_kernel(signal.tau, mu[S], mu) * np.exp(-mu * (T - signal.t_end))[None, :]
    return float(q @ (system.gram[S, :] * K) @ b)


def trajectory_csv(rows) -> str:
    """CSV with columns ``t, norm_H, norm_high_block, cumulative_cost``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "norm_H", "norm_high_block", "cumulative_cost"])
    for r in rows:
        w.writerow([repr(float(x)) for x in r])
    return buf.getvalue()
