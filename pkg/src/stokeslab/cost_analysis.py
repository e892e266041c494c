"""Observability constants, cost-versus-time curves and exponent fits.

The observability constant on a window ``J`` is the smallest ``C`` with

    ||z(T)||_H  <=  C (int_0^T int_omega |z_1|^2)^{1/2}

over adjoint data spanned by ``J``, i.e. ``C^2 = lambda_max(D_T, N_T)``
with ``D_T = diag(exp(-2 mu_j T))`` and ``N_T`` the observation matrix.  For
small ``T`` the condition number of ``N_T`` exceeds ``1/eps``, so instead of
forming ``N_T`` we build a tall factor ``F`` with ``F^T F = N_T`` from a
time quadrature and work with the triangular factor of its QR
decomposition: ``C = ||diag(exp(-mu T)) R^{-1}||_2``.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .control import (
    GramianError,
    ScheduleError,
    hum_penalized,
    lr_cost_constant,
    lr_schedule,
)
from .evolution import ModalSystem
from .fitting import CANDIDATE_POWERS, FitResult, fit_power_law

__all__ = [
    "DEFAULT_KAPPA",
    "CostCurve",
    "JitterError",
    "LemmaReport",
    "ObsResult",
    "cost_curve",
    "fit_exponent",
    "lemma51_from_proof",
    "obs_constant",
    "resolution_floor",
    "time_quadrature",
    "verify_lemma51",
]

#: resolution floor T_min = DEFAULT_KAPPA / sqrt(mu_m)
DEFAULT_KAPPA = 1.1
JITTER = 1e-14
KINDS = ("observability", "lr-cost", "hum-cost")


class JitterError(ArithmeticError):
    """Regularization was needed more than once."""


def time_quadrature(T: float, rate_max: float, nodes_per_panel: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on ``[0, T]`` for ``exp(-s t)``, ``s <= rate_max``.

    Panels are graded geometrically toward ``t = 0`` (breakpoints
    ``T 2**-k``) until the first panel is shorter than ``1 / rate_max``, so
    every decay rate is resolved on the panel where it matters.
    """
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    n_panels = max(1, int(np.ceil(np.log2(max(T * rate_max, 1.0)))) + 1)
    breaks = np.concatenate([[0.0], T * 2.0 ** -np.arange(n_panels - 1, -1, -1)])
    x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    ts, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        ts.append(0.5 * (b - a) * x + 0.5 * (b + a))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(ts), np.concatenate(ws)


@dataclass(frozen=True)
class ObsResult:
    value: float
    jittered: bool
    modes: int


def _observation_factor(system: ModalSystem, T: float, idx) -> np.ndarray:
    mu = system.mu[idx]
    F0 = system.factor[:, idx]
    t, w = time_quadrature(T, 2 * mu.max())
    blocks = np.sqrt(w)[:, None, None] * np.exp(-np.outer(t, mu))[:, None, :] * F0[None, :, :]
    return blocks.reshape(-1, mu.size)


def obs_constant(system: ModalSystem, T: float, lam: float | None = None, terminal: bool = True,
                 detail: bool = False):
    """Observability constant on the window ``mu_j <= lam`` (all modes if None).

    With ``terminal=False`` the terminal weighting is dropped and the result
    is ``lambda_min(N_T)**-1/2``, the constant dual to the Gramian of the
    window.

    If ``N_T`` is numerically singular a Tikhonov term ``1e-14 trace(N_T)``
    is added once and the result is flagged (``detail=True`` returns an
    :class:`ObsResult`).

    Raises
    ------
    JitterError
        If the regularized matrix is still singular.
    """
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    idx = np.arange(system.m) if lam is None else system.window(lam)
    if idx.size == 0:
        raise ValueError(f"window Lambda={lam:g} contains no mode")
    F = _observation_factor(system, T, idx)
    jittered = False
    for attempt in range(2):
        R = la.qr(F, mode="r")[0][: idx.size]
        d = np.abs(np.diag(R))
        if d.min() > 1e-15 * d.max():
            break
        if attempt == 1:
            raise JitterError(f"observation matrix singular at T={T:g} even after regularization")
        trace = float(np.sum(F * F))
        F = np.vstack([F, np.sqrt(JITTER * trace) * np.eye(idx.size)])
        jittered = True
        warnings.warn(f"observation matrix at T={T:g} regularized with {JITTER:g} * trace", RuntimeWarning)
    Rinv = la.solve_triangular(R, np.eye(idx.size))
    if terminal:
        Rinv = np.exp(-system.mu[idx] * T)[:, None] * Rinv
    C = float(np.linalg.norm(Rinv, 2))
    return ObsResult(C, jittered, idx.size) if detail else C


def resolution_floor(system: ModalSystem, kappa: float = DEFAULT_KAPPA) -> float:
    """``T_min = kappa / sqrt(mu_m)`` below which a curve saturates."""
    return float(kappa / np.sqrt(system.mu[-1]))


@dataclass
class CostCurve:
    """Sampled constants ``C(T)`` with provenance and per-sample status."""

    kind: str
    T: np.ndarray
    C: np.ndarray
    status: list[str]
    decay_rate: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}; expected one of {KINDS}")
        self.T = np.asarray(self.T, dtype=float)
        self.C = np.asarray(self.C, dtype=float)

    @property
    def ok(self) -> np.ndarray:
        return np.array([s == "ok" for s in self.status], dtype=bool)

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["T", "C", "logC", "inv_T", "status"])
        for t, c, s in zip(self.T, self.C, self.status):
            w.writerow([repr(float(t)), repr(float(c)), repr(float(np.log(c))) if c > 0 else "nan",
                        repr(float(1 / t)), s])
        return buf.getvalue()


def cost_curve(kind: str, Ts, system: ModalSystem, *, lam_max: float | None = None,
               eps: float = 0.3, ratio: float = 0.5, eps_pen: float = 1e-10,
               kappa: float = DEFAULT_KAPPA, state=None, enforce_floor: bool = True) -> CostCurve:
    """Constant versus horizon for one of three provenances.

    ``observability``
        :func:`obs_constant` on the window ``mu_j <= lam_max``.
    ``lr-cost``
        Worst-case controller cost per unit initial norm
        (:func:`~stokeslab.control.lr_cost_constant`) for the schedule with
        parameters ``eps, ratio, lam_max``.
    ``hum-cost``
        Penalized HUM cost for ``state`` on the window ``mu_j <= lam_max``.

    Samples that fail are recorded with their error class as status.
    Horizons below :func:`resolution_floor` are rejected as a whole when
    ``enforce_floor``.

    Raises
    ------
    ValueError
        If the horizons are not strictly monotone and positive, lie below
        the floor, or no sample succeeds.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown curve kind {kind!r}; expected one of {KINDS}")
    Ts = np.asarray(Ts, dtype=float)
    dT = np.diff(Ts)
    if Ts.size == 0 or np.any(Ts <= 0) or not (np.all(dT > 0) or np.all(dT < 0)):
        raise ValueError("horizons must be positive and strictly monotone")
    floor = resolution_floor(system, kappa)
    if enforce_floor and Ts.min() < floor * (1 - 1e-12):
        raise ValueError(f"horizon {Ts.min():g} is below the resolution floor {floor:.6g}")
    lam = float(system.mu[-1]) if lam_max is None else float(lam_max)
    Cs, status = [], []
    for T in Ts:
        try:
            if kind == "observability":
                C = obs_constant(system, T, lam)
            elif kind == "lr-cost":
                C = lr_cost_constant(lr_schedule(T, eps, ratio, lam), system)[0]
            else:
                if state is None:
                    raise ValueError("hum-cost curves need a state")
                C = hum_penalized(state, T, eps_pen, system, lam).cost
            Cs.append(C)
            status.append("ok" if C > 0 and np.isfinite(C) else "nonpositive")
        except (GramianError, ScheduleError, JitterError, ArithmeticError, RuntimeError) as exc:
            Cs.append(float("nan"))
            status.append(type(exc).__name__)
    if "ok" not in status:
        raise ValueError(f"no {kind} sample succeeded: {sorted(set(status))}")
    meta = {"lam_max": lam, "floor": floor, "kappa": kappa, "modes": int(system.m),
            "region": system.label}
    # observability and HUM costs of a fixed horizon decay exactly like
    # exp(-mu_1 T) for large T; the controller acts on a fraction of the
    # horizon only, so no decay rate is known for its cost
    rate = 0.0 if kind == "lr-cost" else float(system.mu[0])
    return CostCurve(kind, Ts, np.array(Cs), status, rate, meta)


def fit_exponent(curve: CostCurve, candidates=CANDIDATE_POWERS, decay_rate: float | None = None) -> FitResult:
    """Fit ``log C + r T = alpha + beta T**(-p)`` on the successful samples.

    ``r`` is the known long-time decay rate of the curve (``mu_1`` for a
    curve built from a basis, zero for synthetic data); adding ``r T``
    removes the exact single-mode decay so that only the blow-up is fitted.
    ``p`` is chosen from ``candidates`` by residual and then refined; the
    residual table for all candidates is returned as evidence.

    Raises
    ------
    ValueError
        With non-positive constants, fewer than six samples or horizons
        spanning less than a factor four.
    """
    ok = curve.ok
    T, C = curve.T[ok], curve.C[ok]
    if np.any(~(C > 0)):
        raise ValueError("constants must be positive")
    if T.size < 6:
        raise ValueError(f"need at least 6 samples, got {T.size}")
    if T.max() < 4 * T.min() * (1 - 1e-12):
        raise ValueError(f"horizons span a factor {T.max() / T.min():.3g} < 4")
    r = curve.decay_rate if decay_rate is None else float(decay_rate)
    y = np.log(C) + r * T
    p, (alpha, beta, rss, r2), table = fit_power_law(T, y, candidates)
    return FitResult("inv-T-power", alpha, beta, p, r2, rss, int(T.size), (float(T.min()), float(T.max())),
                     table, r)


# ---------------------------------------------------------------------------
# decay/observation bookkeeping


@dataclass
class LemmaReport:
    """Per-horizon margins of the two inequalities.

    ``hypothesis_margin[i]`` is the smallest value over the sampled adjoint
    data of ``observation - (h ||z(T)||^2 - g ||z_0||^2)`` normalized by
    ``||z_0||^2``; ``conclusion_margin[i]`` is ``log(bound) - log(C_obs^2)``
    (logarithmic because the bound overflows for small ``T``).  Both are
    non-negative when the parameters certify the data.
    """

    T: np.ndarray
    hypothesis_margin: np.ndarray
    conclusion_margin: np.ndarray
    d: float
    T0: float
    params: dict

    @property
    def hypothesis_holds(self) -> bool:
        return bool(np.all(self.hypothesis_margin >= 0))

    @property
    def conclusion_holds(self) -> bool:
        return bool(np.all(self.conclusion_margin >= 0))

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["T", "hypothesis_margin", "conclusion_margin"])
        for t, a, b in zip(self.T, self.hypothesis_margin, self.conclusion_margin):
            w.writerow([repr(float(t)), repr(float(a)), repr(float(b))])
        return buf.getvalue()


def _hg(T, c0, d, beta):
    if c0 == 0:
        return np.zeros_like(T)
    return c0 * np.exp(-2.0 / (d * T) ** beta)


def verify_lemma51(curve: CostCurve, system: ModalSystem, h0: float, g0: float, d1: float, d2: float,
                   beta: float = 1.0, d: float | None = None, samples=None, T0: float | None = None,
                   lam: float | None = None) -> LemmaReport:
    """Check a decay/observation inequality and its concluded bound on ``curve``.

    With ``h(T) = h0 exp(-2 / (d2 T)**beta)`` and
    ``g(T) = g0 exp(-2 / (d1 T)**beta)``, the hypothesis

        h(T) ||z(T)||^2 - g(T) ||z_0||^2  <=  int_0^T int_omega |z_1|^2

    is tested on the adjoint data in ``samples`` (rows; random data should
    be supplied by the caller), and the conclusion
    ``C_obs(T)^2 <= exp(2 / (d T)**beta) / h0`` with ``d < d2 - d1``
    (``d = d2 - d1`` when ``g0 <= h0``) is tested at every horizon of the
    curve not exceeding ``T0`` (the right end of the curve by default).

    Raises
    ------
    ValueError
        For malformed parameters or a curve that is not an observability
        curve.
    """
    if curve.kind != "observability":
        raise ValueError("the check needs an observability curve")
    for name, v in (("h0", h0), ("g0", g0)):
        if not v >= 0:
            raise ValueError(f"{name} must be non-negative, got {v}")
    if not (d1 > 0 and d2 > 0 and beta > 0):
        raise ValueError("d1, d2 and beta must be positive")
    if not d1 < d2:
        raise ValueError(f"need d1 < d2, got d1={d1}, d2={d2}")
    if d is None:
        d = d2 - d1 if g0 <= h0 else 0.999 * (d2 - d1)
    elif not 0 < d <= d2 - d1 or (d == d2 - d1 and g0 > h0):
        raise ValueError(f"d={d} must satisfy 0 < d < d2 - d1 = {d2 - d1} (equality only when g0 <= h0)")
    ok = curve.ok
    T = curve.T[ok]
    Cobs = curve.C[ok]
    T0 = float(T.max()) if T0 is None else float(T0)
    idx = system.m if lam is None else system.window(lam).size
    sub = system.restrict(np.arange(idx))
    mu = sub.mu
    Z = np.zeros((0, idx)) if samples is None else np.atleast_2d(np.asarray(samples, dtype=float))[:, :idx]
    hT, gT = _hg(T, h0, d2, beta), _hg(T, g0, d1, beta)
    hyp = np.empty(T.size)
    for i, t in enumerate(T):
        if Z.shape[0] == 0:
            hyp[i] = np.inf
            continue
        Nt = sub.gram * (-np.expm1(-(mu[:, None] + mu[None, :]) * t) / (mu[:, None] + mu[None, :]))
        obs = np.einsum("ij,jk,ik->i", Z, Nt, Z)
        zT2 = np.sum((Z * np.exp(-mu * t)) ** 2, axis=1)
        z02 = np.sum(Z**2, axis=1)
        hyp[i] = np.min((obs - (hT[i] * zT2 - gT[i] * z02)) / z02)
    conc = np.full(T.size, np.inf)
    if h0 > 0:
        inside = T <= T0 * (1 + 1e-12)
        conc[inside] = 2.0 / (d * T[inside]) ** beta - np.log(h0) - 2 * np.log(Cobs[inside])
    params = {"h0": h0, "g0": g0, "d1": d1, "d2": d2, "beta": beta}
    return LemmaReport(T, hyp, conc, float(d), T0, params)


def lemma51_from_proof(M: float, K: float, M1: float, eps: float, T0: float) -> dict:
    """Parameters of the decay/observation inequality in the shapes of its proof.

    The low-frequency estimate gives ``h(T) = (4 M1 / M) exp(-(M1 + K) / (eps T))``,
    i.e. ``h0 = 4 M1 / M``, ``beta = 1`` and ``d2 = 2 eps / (M1 + K)``.  The
    high-frequency remainder is ``g(T) = (T0 + 2 h(T0)) exp(-2 (1 - eps) / (eps**2 T))``,
    i.e. ``g0 = T0 + 2 h(T0)`` and ``d1 = eps**2 / (1 - eps)``.

    Raises
    ------
    ValueError
        If the constants are out of range or the resulting ``d1 >= d2``
        (``eps`` too large for the given ``M1 + K``).
    """
    if not (M > 0 and M1 > 0 and 0 < eps < 1 and K >= 0 and T0 > 0):
        raise ValueError("need M, M1, T0 > 0, K >= 0 and eps in (0, 1)")
    d2 = 2 * eps / (M1 + K)
    d1 = eps**2 / (1 - eps)
    if not d1 < d2:
        raise ValueError(f"eps={eps} gives d1={d1:.4g} >= d2={d2:.4g}; decrease eps or M1")
    h0 = 4 * M1 / M
    g0 = float(T0 + 2 * h0 * np.exp(-2.0 / (d2 * T0)))
    return {"h0": float(h0), "g0": g0, "d1": float(d1), "d2": float(d2), "beta": 1.0, "T0": float(T0)}
