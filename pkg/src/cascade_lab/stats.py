"""Empirical CDFs, KS distances, exact binomial intervals, log-log fits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as _st


class Ecdf:
    """Right-continuous empirical distribution function of a sample."""

    def __init__(self, values):
        v = np.sort(np.asarray(values, dtype=float).ravel())
        if v.size == 0:
            raise ValueError("empty sample")
        self.values = v
        self.count = v.size

    def __call__(self, x):
        return np.searchsorted(self.values, x, side="right") / self.count

    def survival(self, x):
        """P(X >= x), i.e. one minus the left limit of the CDF."""
        return 1.0 - np.searchsorted(self.values, x, side="left") / self.count

    def __len__(self):
        return self.count


def _as_ecdf(a) -> Ecdf:
    return a if isinstance(a, Ecdf) else Ecdf(a)


def ks_distance(a, b) -> float:
    """Sup-norm distance between two empirical CDFs."""
    a, b = _as_ecdf(a), _as_ecdf(b)
    support = np.concatenate([a.values, b.values])
    return float(np.max(np.abs(a(support) - b(support))))


def ks_critical(n: int, m: int, level: float = 0.99) -> float:
    """Asymptotic two-sample KS critical value, e.g. 1.628*sqrt((n+m)/(n*m)) at 99%."""
    c = np.sqrt(-0.5 * np.log((1.0 - level) / 2.0))
    return float(c * np.sqrt((n + m) / (n * m)))


@dataclass(frozen=True)
class BinomialCI:
    successes: int
    trials: int
    level: float
    lower: float
    upper: float

    @property
    def estimate(self) -> float:
        return self.successes / self.trials


def clopper_pearson(k: int, n: int, level: float = 0.95) -> BinomialCI:
    """Exact equal-tailed binomial interval from beta quantiles."""
    if n < 1 or not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    alpha = 1.0 - level
    lo = 0.0 if k == 0 else float(_st.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(_st.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return BinomialCI(k, n, level, lo, hi)


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    residuals: np.ndarray
    x: np.ndarray
    y: np.ndarray

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.residuals))

    @property
    def local_slopes(self) -> np.ndarray:
        return np.diff(self.y) / np.diff(self.x)


def loglog_fit(t, values=None, *, neg_log=None, window=None) -> LogLogFit:
    """OLS of log log(1/value) against log log t.

    Pass either ``values`` in (0, 1/e) or ``neg_log = -log(values)`` (> 1);
    the latter avoids underflow when the values are astronomically small.
    """
    t = np.asarray(t, dtype=float)
    if (values is None) == (neg_log is None):
        raise ValueError("give exactly one of values / neg_log")
    if neg_log is None:
        v = np.asarray(values, dtype=float)
        if np.any(v <= 0) or np.any(v >= np.exp(-1.0)):
            raise ValueError("values must lie in (0, 1/e)")
        neg_log = -np.log(v)
    neg_log = np.asarray(neg_log, dtype=float)
    if window is not None:
        keep = (t >= window[0]) & (t <= window[1])
        t, neg_log = t[keep], neg_log[keep]
    if t.size < 5:
        raise ValueError(f"need at least 5 points in the fit window, got {t.size}")
    if np.any(neg_log <= 1.0):
        raise ValueError("values must lie in (0, 1/e)")
    if np.any(t <= 1.0):
        raise ValueError("t must exceed 1")
    x = np.log(np.log(t))
    y = np.log(neg_log)
    slope, intercept = np.polyfit(x, y, 1)
    return LogLogFit(float(slope), float(intercept), y - (slope * x + intercept), x, y)


@dataclass(frozen=True)
class Dominance:
    passed: bool
    worst_gap: float
    at: float
    slack: float


def dominance_check(a, b, slack: float | None = None) -> Dominance:
    """Does sample ``a`` stochastically dominate ``b`` up to ``slack``?

    Passes iff P_a(X >= x) >= P_b(X >= x) - slack on the merged support.
    Default slack is the two-sample KS critical value at 99%.
    """
    a, b = _as_ecdf(a), _as_ecdf(b)
    if slack is None:
        slack = ks_critical(a.count, b.count)
    support = np.concatenate([a.values, b.values])
    gap = b.survival(support) - a.survival(support)
    i = int(np.argmax(gap))
    worst = max(0.0, float(gap[i]))
    return Dominance(worst <= slack, worst, float(support[i]), float(slack))
