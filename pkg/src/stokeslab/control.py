"""Low-mode steering, the dyadic Lebeau-Robbiano controller and a
penalized HUM comparator, all on a :class:`~stokeslab.evolution.ModalSystem`.

On a window ``J`` of low modes the minimal-norm control that zeroes the
window at the end of an interval of length ``tau`` lies in the exponential
family of :mod:`stokeslab.evolution`, with weights solving ``W q = -D a_J``
where ``W`` is the window Gramian and ``D = diag(exp(-mu_j tau))``.  The
controller alternates such steering on an active half-interval with free
decay on a passive half-interval while the cutoff grows geometrically.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.sparse.linalg import cg

from .evolution import ControlSignal, ModalSystem, apply_control, decay, duhamel_kernel

__all__ = [
    "GRAMIAN_RCOND",
    "CGStagnationError",
    "ControlRunReport",
    "ControlSchedule",
    "Gramian",
    "GramianError",
    "HumResult",
    "Interval",
    "ScheduleError",
    "TargetNotReached",
    "build_gramian",
    "hum_penalized",
    "lr_cost_constant",
    "lr_schedule",
    "run_lr",
    "steer_low_modes",
]

GRAMIAN_RCOND = 1e-13


class GramianError(np.linalg.LinAlgError):
    """Window Gramian is numerically singular."""

    def __init__(self, message: str, lambda_min: float):
        super().__init__(message)
        self.lambda_min = lambda_min


class ScheduleError(ValueError):
    """A schedule cannot be built for the requested parameters."""


class TargetNotReached(RuntimeError):
    """The controller finished with a terminal norm above the target."""

    def __init__(self, message: str, report: "ControlRunReport"):
        super().__init__(message)
        self.report = report


class CGStagnationError(RuntimeError):
    """Conjugate gradients did not converge."""

    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


# ---------------------------------------------------------------------------
# Gramians and steering


@dataclass(frozen=True, eq=False)
class Gramian:
    """Window Gramian ``W = G_J o K_tau`` with its Cholesky factor."""

    indices: np.ndarray
    tau: float
    matrix: np.ndarray = field(repr=False)
    cho: tuple = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    def solve(self, b: np.ndarray, refine: int = 2) -> np.ndarray:
        """``W^{-1} b`` by Cholesky with a few steps of iterative refinement."""
        x = la.cho_solve(self.cho, b)
        for _ in range(refine):
            r = b - self.matrix @ x
            x = x + la.cho_solve(self.cho, r)
        return x


def build_gramian(system: ModalSystem, lam: float, tau: float) -> Gramian:
    """Gramian of the window ``mu_j <= lam`` over an interval of length ``tau``.

    Raises
    ------
    GramianError
        If the window is empty or ``lambda_min < 1e-13 * lambda_max``.
    """
    if not tau > 0:
        raise ValueError(f"interval length must be positive, got {tau}")
    J = system.window(lam)
    if J.size == 0:
        raise GramianError(f"window Lambda={lam:g} contains no mode", 0.0)
    W = system.gram[np.ix_(J, J)] * duhamel_kernel(tau, system.mu[J])
    W = 0.5 * (W + W.T)
    ev = la.eigvalsh(W)
    if ev[0] < GRAMIAN_RCOND * ev[-1]:
        raise GramianError(
            f"Gramian on {J.size} modes (Lambda={lam:g}, tau={tau:g}) is near-singular: "
            f"lambda_min={ev[0]:.3e}, lambda_max={ev[-1]:.3e}; lower Lambda or enlarge omega/tau",
            float(ev[0]),
        )
    return Gramian(J, float(tau), W, la.cho_factor(W, lower=True), ev)


def steer_low_modes(state, system: ModalSystem, lam: float, t_start: float, tau: float,
                    gramian: Gramian | None = None) -> tuple[ControlSignal, float]:
    """Minimal-norm control zeroing the modes ``mu_j <= lam`` after ``tau``.

    Returns the signal on ``[t_start, t_start + tau]`` and its
    ``L^2(omega x interval)`` norm.  A state with no low-mode content gives
    a zero signal.
    """
    a = np.asarray(state, dtype=float)
    G = gramian if gramian is not None else build_gramian(system, lam, tau)
    J = G.indices
    b = -np.exp(-system.mu[J] * tau) * a[J]
    if not np.any(b):
        q = np.zeros(J.size)
        return ControlSignal(t_start, t_start + tau, J, q), 0.0
    q = G.solve(b)
    cost2 = float(max(q @ G.matrix @ q, 0.0))
    return ControlSignal(t_start, t_start + tau, J, q), float(np.sqrt(cost2))


# ---------------------------------------------------------------------------
# the dyadic schedule


@dataclass(frozen=True)
class Interval:
    k: int
    t_start: float
    t_switch: float
    t_end: float
    lam: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def active(self) -> float:
        return self.t_switch - self.t_start


@dataclass(frozen=True)
class ControlSchedule:
    """Consecutive intervals, each an active half then a passive half."""

    T: float
    eps: float
    ratio: float
    lam_max: float
    intervals: tuple[Interval, ...]

    def dump(self) -> str:
        """Plain-text table ``k t_start t_end active Lambda_k`` (one row per half)."""
        lines = ["k t_start t_end active Lambda_k"]
        for iv in self.intervals:
            t0, ts, t1, lam = (repr(float(x)) for x in (iv.t_start, iv.t_switch, iv.t_end, iv.lam))
            lines.append(f"{iv.k} {t0} {ts} 1 {lam}")
            lines.append(f"{iv.k} {ts} {t1} 0 {lam}")
        return "\n".join(lines) + "\n"


def lr_schedule(T: float, eps: float = 0.3, ratio: float = 0.5, lam_max: float = np.inf,
                active_fraction: float = 0.5) -> ControlSchedule:
    """Geometric schedule with cutoffs ``sqrt(Lambda_k) = 2**k / (eps T)``.

    Intervals are added until the cutoff reaches ``lam_max`` (the last one
    is capped there); durations are ``c T ratio**k`` with ``c`` normalizing
    the total to ``T``.

    Raises
    ------
    ScheduleError
        If ``Lambda_0 = 1 / (eps T)**2`` already exceeds ``lam_max`` (the
        time horizon is below the resolution of the basis), or if the
        parameters are out of range.
    """
    if not T > 0:
        raise ScheduleError(f"T must be positive, got {T}")
    if not 0 < eps < 1:
        raise ScheduleError(f"eps must lie in (0, 1), got {eps}")
    if not 0 < ratio < 1:
        raise ScheduleError(f"ratio must lie in (0, 1), got {ratio}")
    if not 0 < active_fraction < 1:
        raise ScheduleError(f"active fraction must lie in (0, 1), got {active_fraction}")
    lam0 = 1.0 / (eps * T) ** 2
    if lam0 > lam_max * (1 + 1e-12):
        raise ScheduleError(
            f"T={T:g} is below the resolution of the basis: first cutoff {lam0:.6g} "
            f"exceeds Lambda_max={lam_max:.6g}"
        )
    lams = []
    k = 0
    while True:
        lam = min((2.0**k / (eps * T)) ** 2, lam_max)
        lams.append(lam)
        if lam >= lam_max * (1 - 1e-12):
            break
        k += 1
    d = T * ratio ** np.arange(len(lams))
    d *= T / d.sum()
    t = 0.0
    out = []
    for k, (lam, dk) in enumerate(zip(lams, d)):
        end = T if k == len(lams) - 1 else t + dk
        out.append(Interval(k, t, t + active_fraction * (end - t), end, lam))
        t = end
    return ControlSchedule(float(T), float(eps), float(ratio), float(lam_max), tuple(out))


# ---------------------------------------------------------------------------
# the controller


@dataclass
class ControlRunReport:
    """Outcome of a controller run.

    ``spillover`` holds the norm of the modes above each active cutoff at
    the end of its active half; ``spillover_predicted`` is the same quantity
    from the closed-form Duhamel update of the pre-interval state.
    """

    initial_norm: float
    terminal_norm: float
    low_terminal_norm: float
    total_cost: float
    interval_costs: list[float]
    spillover: list[float]
    spillover_predicted: list[float]
    signals: list[ControlSignal]
    trajectory: list[tuple[float, float, float, float]]
    terminal_state: np.ndarray = field(repr=False)

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "t_start", "t_end", "cost", "spillover"])
        for k, (sig, c, s) in enumerate(zip(self.signals, self.interval_costs, self.spillover)):
            w.writerow([k] + [repr(float(x)) for x in (sig.t_start, sig.t_end, c, s)])
        return buf.getvalue()


def run_lr(state0, schedule: ControlSchedule, system: ModalSystem, tol_target: float = 1e-6,
           raise_on_miss: bool = True) -> ControlRunReport:
    """Alternate low-mode steering and free decay along ``schedule``.

    Raises
    ------
    TargetNotReached
        If ``||u(T)|| > tol_target * ||u_0||`` and ``raise_on_miss``; the
        exception carries the full report.
    """
    a = np.asarray(state0, dtype=float).copy()
    norm0 = float(np.linalg.norm(a))
    mu = system.mu
    costs, spill, spill_pred, signals = [], [], [], []
    cum2 = 0.0
    traj = [(0.0, norm0, norm0, 0.0)]
    low = np.zeros(system.m, dtype=bool)
    for iv in schedule.intervals:
        J = system.window(iv.lam)
        low[:] = False
        low[J] = True
        if J.size:
            sig, c = steer_low_modes(a, system, iv.lam, iv.t_start, iv.active)
            hi = np.flatnonzero(~low)
            # spillover into the high block alone, from the pre-interval state
            pred_hi = a[hi] * np.exp(-mu[hi] * iv.active) + sig.weights @ (
                system.gram[np.ix_(J, hi)] * duhamel_kernel(iv.active, mu[J], mu[hi]))
            pred = np.linalg.norm(pred_hi)
            a = apply_control(a, sig, system)
        else:
            sig = ControlSignal(iv.t_start, iv.t_switch, J, np.zeros(0))
            c = 0.0
            a = decay(a, mu, iv.active)
            pred = np.linalg.norm(a[~low])
        spill.append(float(np.linalg.norm(a[~low])))
        spill_pred.append(float(pred))
        signals.append(sig)
        costs.append(c)
        cum2 += c * c
        traj.append((iv.t_switch, float(np.linalg.norm(a)), spill[-1], float(np.sqrt(cum2))))
        a = decay(a, mu, iv.t_end - iv.t_switch)
        traj.append((iv.t_end, float(np.linalg.norm(a)), float(np.linalg.norm(a[~low])), float(np.sqrt(cum2))))
    terminal = float(np.linalg.norm(a))
    report = ControlRunReport(
        norm0, terminal, float(np.linalg.norm(a[low])), float(np.sqrt(cum2)), costs, spill, spill_pred,
        signals, traj, a,
    )
    if raise_on_miss and terminal > tol_target * norm0:
        raise TargetNotReached(
            f"terminal norm {terminal:.3e} exceeds target {tol_target:g} * {norm0:.3e}", report
        )
    return report


def lr_cost_constant(schedule: ControlSchedule, system: ModalSystem) -> tuple[float, float]:
    """Worst-case controller cost per unit initial norm.

    The controller is linear in the initial state, so propagating the
    identity matrix gives the cost operator ``Q``; returns the operator
    norm of the cost map and of the terminal-state map.
    """
    m = system.m
    mu = system.mu
    A = np.eye(m)
    S = np.zeros((m, m))
    for iv in schedule.intervals:
        J = system.window(iv.lam)
        if J.size:
            G = build_gramian(system, iv.lam, iv.active)
            Q = G.solve(-np.exp(-mu[J] * iv.active)[:, None] * A[J])
            K = system.gram[J, :] * duhamel_kernel(iv.active, mu[J], mu)
            A = A * np.exp(-mu * iv.active)[:, None] + K.T @ Q
            S += Q.T @ G.matrix @ Q
        else:
            A = A * np.exp(-mu * iv.active)[:, None]
        A = A * np.exp(-mu * (iv.t_end - iv.t_switch))[:, None]
    S = 0.5 * (S + S.T)
    return float(np.sqrt(max(la.eigvalsh(S)[-1], 0.0))), float(np.linalg.norm(A, 2))


# ---------------------------------------------------------------------------
# penalized HUM


@dataclass
class HumResult:
    signal: ControlSignal
    cost: float
    terminal_norm: float
    low_terminal_norm: float
    iterations: int
    residual_history: list[float]


def hum_penalized(state0, T: float, eps_pen: float, system: ModalSystem, lam: float,
                  rtol: float = 1e-10, maxiter: int | None = None) -> HumResult:
    """Penalized HUM control on ``[0, T]`` for the window ``mu_j <= lam``.

    Minimizes ``1/2 phi^T W phi + eps/2 |phi|^2 + phi^T D_T a_J`` over
    adjoint data ``phi`` by conjugate gradients; the control is the
    exponential-family signal with weights ``phi``, and the window block of
    the terminal state equals ``-eps phi``.

    Raises
    ------
    CGStagnationError
        If CG does not reach ``rtol`` within ``maxiter`` (default ``10 |J|``)
        iterations.
    """
    if not eps_pen > 0:
        raise ValueError(f"penalty must be positive, got {eps_pen}")
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    a = np.asarray(state0, dtype=float)
    J = system.window(lam)
    if J.size == 0:
        raise ValueError(f"window Lambda={lam:g} contains no mode")
    W = system.gram[np.ix_(J, J)] * duhamel_kernel(T, system.mu[J])
    W = 0.5 * (W + W.T)
    b = -np.exp(-system.mu[J] * T) * a[J]
    history: list[float] = []
    if not np.any(b):
        phi = np.zeros(J.size)
        it = 0
    else:
        Aop = W + eps_pen * np.eye(J.size)
        maxiter = 10 * J.size if maxiter is None else maxiter
        bnorm = np.linalg.norm(b)
        history.append(1.0)

        def record(xk):
            history.append(float(np.linalg.norm(b - Aop @ xk) / bnorm))

        phi, info = cg(Aop, b, rtol=rtol, atol=0.0, maxiter=maxiter, callback=record)
        it = len(history) - 1
        if info != 0:
            raise CGStagnationError(
                f"CG stopped after {it} iterations with relative residual {history[-1]:.3e}", history
            )
    sig = ControlSignal(0.0, float(T), J, phi)
    aT = apply_control(a, sig, system)
    return HumResult(sig, float(np.sqrt(max(phi @ W @ phi, 0.0))), float(np.linalg.norm(aT)),
                     float(np.linalg.norm(aT[J])), it, history)
