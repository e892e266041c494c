"""Least-squares fits of exponential growth laws.

Two models are used:

* ``sqrt-Lambda``: ``log C = alpha + beta * sqrt(Lambda)``;
* ``inv-T-power``: ``log C = alpha + beta * T**(-p)``, with ``p`` chosen by
  residual comparison over a candidate set and then refined continuously.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

__all__ = ["FitResult", "linear_fit", "fit_power_law", "CANDIDATE_POWERS"]

CANDIDATE_POWERS = (0.5, 1.0, 2.0, 4.0, 9.0)


@dataclass(frozen=True)
class FitResult:
    """Parameters and evidence of an exponential-law fit.

    ``residual_table`` maps each candidate power to the residual sum of
    squares of the corresponding two-parameter linear fit; for the
    ``sqrt-Lambda`` model it is empty and ``p`` is ``0.5``.
    """

    model: str
    alpha: float
    beta: float
    p: float
    r2: float
    rss: float
    n_samples: int
    window: tuple[float, float]
    residual_table: dict = field(default_factory=dict)
    decay_rate: float = 0.0

    @property
    def log_M(self) -> float:
        return self.alpha

    @property
    def K(self) -> float:
        return self.beta

    def residual_ratio(self, p_num: float, p_den: float = 1.0) -> float:
        """``rss(p_num) / rss(p_den)`` from the residual table."""
        return self.residual_table[p_num] / self.residual_table[p_den]

    def predict(self, x) -> np.ndarray:
        """Model ``C`` at abscissas ``x`` (``Lambda`` or ``T``)."""
        x = np.asarray(x, dtype=float)
        if self.model == "sqrt-Lambda":
            return np.exp(self.alpha + self.beta * np.sqrt(x))
        return np.exp(self.alpha + self.beta * x ** (-self.p) - self.decay_rate * x)

    def report(self) -> str:
        f = lambda x: repr(float(x))  # noqa: E731
        lines = [
            f"model = {self.model}",
            f"alpha = {f(self.alpha)}",
            f"beta = {f(self.beta)}",
            f"p = {f(self.p)}",
            f"R2 = {f(self.r2)}",
            f"rss = {f(self.rss)}",
            f"samples = {self.n_samples}",
            f"window = {f(self.window[0])},{f(self.window[1])}",
        ]
        if self.decay_rate:
            lines.append(f"decay_rate = {f(self.decay_rate)}")
        for p, r in self.residual_table.items():
            lines.append(f"rss_p{p:g} = {f(r)}")
        return "\n".join(lines) + "\n"


def linear_fit(x, y) -> tuple[float, float, float, float]:
    """Fit ``y = alpha + beta * x``; return ``(alpha, beta, rss, r2)``.

    ``r2`` is 1 when ``y`` is constant and reproduced exactly.

    Raises
    ------
    ValueError
        If the abscissas are all equal or there are fewer than two points.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need at least two matching samples")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise ValueError("samples must be finite")
    if np.ptp(x) <= 1e-14 * max(np.abs(x).max(), 1e-300):
        raise ValueError("degenerate abscissas: all x values coincide")
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    rss = float(r @ r)
    sst = float(((y - y.mean()) ** 2).sum())
    if sst <= 1e-300:
        r2 = 1.0 if rss <= 1e-24 * max(1.0, float(y @ y)) else 0.0
    else:
        r2 = max(0.0, 1.0 - rss / sst)
    return float(coef[0]), float(coef[1]), rss, float(r2)


def fit_power_law(T, y, candidates=CANDIDATE_POWERS, bounds=(0.5, 9.0)):
    """Fit ``y = alpha + beta * T**(-p)`` selecting and refining ``p``.

    Each candidate power gets a linear least-squares fit; the best candidate
    is then refined by bounded Brent minimization (golden-section steps with
    parabolic acceleration) of the residual over the interval between its
    neighbouring candidates, clipped to ``bounds``.

    Returns
    -------
    best_p : float
    (alpha, beta, rss, r2) : tuple
        Linear fit at ``best_p``.
    table : dict
        Residual sum of squares per candidate power.
    """
    T = np.asarray(T, dtype=float)
    y = np.asarray(y, dtype=float)
    cands = sorted(float(c) for c in candidates)
    scale = np.median(T)

    def fit_at(p):
        # rescaling T keeps T**(-p) well conditioned without changing rss
        return linear_fit((T / scale) ** (-p), y)

    table = {p: fit_at(p)[2] for p in cands}
    p0 = min(cands, key=table.get)
    i = cands.index(p0)
    lo = cands[i - 1] if i > 0 else bounds[0]
    hi = cands[i + 1] if i + 1 < len(cands) else bounds[1]
    lo, hi = max(lo, bounds[0]), min(hi, bounds[1])
    best_p = p0
    if hi > lo:
        res = minimize_scalar(lambda p: fit_at(p)[2], bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
        x = float(res.x)
        if lo < x < hi and res.fun < min(fit_at(lo)[2], fit_at(hi)[2]):
            # the bounded method stops at sqrt(eps) relative accuracy in p;
            # polish inside the bracket it found
            polished = minimize_scalar(lambda p: fit_at(p)[2], bracket=(lo, x, hi), method="brent",
                                       options={"xtol": 1e-13})
            if lo < polished.x < hi and polished.fun <= res.fun:
                x, res = float(polished.x), polished
        if res.fun < table[p0]:
            best_p = x
    alpha, beta, rss, r2 = fit_at(best_p)
    # undo the abscissa rescaling: beta (T/s)^-p = (beta s^p) T^-p
    return float(best_p), (alpha, float(beta * scale**best_p), rss, r2), table
