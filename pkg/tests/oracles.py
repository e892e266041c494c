"""Independent reference solvers shared by the unit and acceptance tests."""

from __future__ import annotations

import numpy as np
import scipy.linalg as la


def crank_nicolson(system, a0, signal, dt):
    """Reference integration of a' = -mu a + G^T (q o exp(-mu_S (t_e - t)))."""
    n = max(1, int(round(signal.tau / dt)))
    dt = signal.tau / n
    M = np.diag(system.mu)
    I = np.eye(system.m)
    lu = la.lu_factor(I + 0.5 * dt * M)
    R = I - 0.5 * dt * M
    S, q = signal.sources, signal.weights

    def forcing(t):
        return system.gram[S, :].T @ (q * np.exp(-system.mu[S] * (signal.tau - t)))

    x = np.asarray(a0, dtype=float).copy()
    for i in range(n):
        x = la.lu_solve(lu, R @ x + 0.5 * dt * (forcing(i * dt) + forcing((i + 1) * dt)))
    return x


def least_norm_qp(system, a, tau, steps):
    """Time-discretized least-norm control: piecewise-constant in time, free on the region."""
    F = system.factor  # rows are region points scaled by h, columns are modes
    mu = system.mu
    dt = tau / steps
    left = np.arange(steps) * dt
    right = left + dt
    # exact integral of exp(-mu_k (tau - t)) over each step
    w = (np.exp(-np.outer(mu, tau - right)) - np.exp(-np.outer(mu, tau - left))) / mu[:, None]
    M = np.einsum("kn,pk->knp", w, F).reshape(mu.size, -1) / np.sqrt(dt)
    rhs = -np.exp(-mu * tau) * a
    y = M.T @ la.solve(M @ M.T, rhs)
    return float(np.linalg.norm(y))
