"""Laplace transform phi(t) = E exp(-tY): empirical, iterated, exponent fits.

Tables store -log phi rather than phi so that values far below the double
range at large t stay meaningful.  Between grid points the iterated solver
interpolates g = log(-log phi) against u = log t; a straight line in those
coordinates is exactly phi = exp(-a t^b), so the degenerate case
phi = exp(-t) is reproduced without interpolation error.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import logsumexp

from .generator import GeneratorSpec, log_tail_exponent
from .stats import loglog_fit

DEFAULT_TMIN = 1e-3
DEFAULT_TMAX = 1e10
DEFAULT_POINTS = 512
DEFAULT_TOL = 1e-8
DEFAULT_RTOL = 1e-9
DEFAULT_NODES = 8
MAX_EXTRAPOLATED_SHARE = 1e-6


class ConvergenceError(RuntimeError):
    def __init__(self, message, table=None):
        super().__init__(message)
        self.table = table


def default_grid(tmin=DEFAULT_TMIN, tmax=DEFAULT_TMAX, points=DEFAULT_POINTS) -> np.ndarray:
    return np.geomspace(tmin, tmax, points)


class LogPhiInterpolant:
    """-log phi as a function of t, built from grid values.

    Inside the grid: cubic spline (or linear) of g = log(-log phi) in u = log t.
    Below: g = u + d0 exp(u - u0), matching the grid at u0 and tending to
    phi(t) = exp(-t) with the O(t^2) correction of a mean-one variable.
    Above: straight line in (log u, g), slope from the last two grid points
    clamped to [1, slope_cap].
    """

    def __init__(self, t, neg_log_phi, *, slope_cap=None, kind="cubic", extrapolate=True):
        u = np.log(np.asarray(t, dtype=float))
        g = np.log(np.asarray(neg_log_phi, dtype=float))
        if u.size < 4:
            raise ValueError("need at least 4 grid points")
        self.u, self.g = u, g
        self.u0, self.uN = u[0], u[-1]
        self.d0 = g[0] - u[0]
        self.kind = kind
        self.extrapolate = extrapolate
        self._spline = CubicSpline(u, g) if kind == "cubic" else None
        self.slope = None
        if extrapolate and u[-2] > 0:
            s = (g[-1] - g[-2]) / (math.log(u[-1]) - math.log(u[-2]))
            cap = math.inf if slope_cap is None else slope_cap
            self.slope = float(min(max(s, 1.0), cap))

    def g_at(self, uq):
        uq = np.asarray(uq, dtype=float)
        inside = (uq >= self.u0) & (uq <= self.uN)
        out = np.empty(uq.shape)
        if self._spline is not None:
            out[inside] = self._spline(uq[inside])
        else:
            out[inside] = np.interp(uq[inside], self.u, self.g)
        below, above = uq < self.u0, uq > self.uN
        if (below.any() or above.any()) and not self.extrapolate:
            raise ValueError("t outside the table range")
        if below.any():
            ub = uq[below]
            out[below] = ub + self.d0 * np.exp(ub - self.u0)
        if above.any():
            if self.slope is None:
                raise ValueError("cannot extrapolate above a grid ending below t = e")
            out[above] = self.g[-1] + self.slope * (np.log(uq[above]) - math.log(self.uN))
        return out

    def neg_log_phi(self, t):
        return np.exp(self.g_at(np.log(np.asarray(t, dtype=float))))

    def phi(self, t):
        return np.exp(-self.neg_log_phi(t))


@dataclass
class LaplaceTable:
    t: np.ndarray
    neg_log_phi: np.ndarray
    method: str
    stderr: np.ndarray | None = None
    log_err: np.ndarray | None = None
    iterations: int | None = None
    samples: int | None = None
    converged: bool = True
    sup_change: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.neg_log_phi = np.asarray(self.neg_log_phi, dtype=float)
        if self.t.shape != self.neg_log_phi.shape:
            raise ValueError("t and phi must have equal length")
        if np.any(np.diff(self.t) <= 0) or np.any(self.t <= 0):
            raise ValueError("t grid must be positive and increasing")
        if np.any(~np.isfinite(self.neg_log_phi)) or np.any(self.neg_log_phi < 0):
            raise ValueError("phi must lie in (0, 1]")
        if np.any(np.diff(self.neg_log_phi) < 0):
            raise ValueError("phi must be non-increasing in t")

    @property
    def phi(self) -> np.ndarray:
        return np.exp(-self.neg_log_phi)

    def interpolant(self) -> LogPhiInterpolant:
        return LogPhiInterpolant(
            self.t, self.neg_log_phi,
            slope_cap=self.meta.get("slope_cap"),
            kind=self.meta.get("interpolation", "linear"),
            extrapolate=self.method == "iterated",
        )

    def neg_log_phi_at(self, t, *, conservative=False):
        """-log phi at arbitrary t; ``conservative`` adds the error bracket."""
        t = np.asarray(t, dtype=float)
        val = self.interpolant().neg_log_phi(t)
        if conservative and self.log_err is not None:
            val = val + np.interp(np.log(t), np.log(self.t), self.log_err)
        return val

    def phi_at(self, t, *, conservative=False):
        return np.exp(-self.neg_log_phi_at(t, conservative=conservative))

    # -- persistence -------------------------------------------------------
    def header(self) -> dict:
        h = {
            "method": self.method,
            "iterations": self.iterations,
            "samples": self.samples,
            "converged": self.converged,
            "sup_change": self.sup_change,
        }
        h.update(self.meta)
        return h

    def to_csv(self, path) -> None:
        cols = ["t", "phi", "neg_log_phi"]
        extra = []
        if self.stderr is not None:
            cols.insert(2, "stderr")
            extra.append(self.stderr)
        if self.log_err is not None:
            cols.append("log_err")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("# " + json.dumps(self.header(), sort_keys=True) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for i in range(self.t.size):
                row = [repr(float(self.t[i])), repr(float(self.phi[i]))]
                if self.stderr is not None:
                    row.append(repr(float(self.stderr[i])))
                row.append(repr(float(self.neg_log_phi[i])))
                if self.log_err is not None:
                    row.append(repr(float(self.log_err[i])))
                w.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "LaplaceTable":
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
            if not first.startswith("#"):
                raise ValueError(f"{path}: missing JSON metadata header")
            header = json.loads(first[1:])
            rows = list(csv.DictReader(fh))
        col = lambda k: np.array([float(r[k]) for r in rows]) if rows and k in rows[0] else None
        meta = {k: v for k, v in header.items()
                if k not in ("method", "iterations", "samples", "converged", "sup_change")}
        return cls(col("t"), col("neg_log_phi"), header["method"], stderr=col("stderr"),
                   log_err=col("log_err"), iterations=header.get("iterations"),
                   samples=header.get("samples"), converged=header.get("converged", True),
                   sup_change=header.get("sup_change"), meta=meta)


def empirical_phi(samples, t_grid) -> LaplaceTable:
    """Sample mean of exp(-t y) with per-point standard errors."""
    y = np.asarray(samples, dtype=float).ravel()
    t = np.asarray(t_grid, dtype=float)
    if y.size == 0:
        raise ValueError("no samples")
    if np.any(y <= 0):
        raise ValueError("samples must be positive")
    nlp = np.empty(t.size)
    se = np.empty(t.size)
    for i, ti in enumerate(t):
        a = -ti * y
        nlp[i] = -(logsumexp(a) - math.log(y.size))
        e = np.exp(a)
        se[i] = e.std(ddof=1) / math.sqrt(y.size) if y.size > 1 else 0.0
    nlp = np.maximum(nlp, 0.0)
    # exact per-point means are monotone; enforce against rounding only
    nlp = np.maximum.accumulate(nlp)
    return LaplaceTable(t, nlp, "empirical", stderr=se, samples=int(y.size),
                        meta={"interpolation": "linear"})


def _apply_operator(interp, u, rule):
    """One step phi -> (E phi(tW))^2 on the grid, in log space.

    Returns (-log phi_new, half-width of the log bracket from truncated tails,
    share of the quadrature mass taken from above the grid).
    """
    log_w, log_p, tail_lo, tail_hi = rule
    uq = u[:, None] + log_w[None, :]
    A = log_p[None, :] - np.exp(interp.g_at(uq))
    core = logsumexp(A, axis=1)
    above = uq > interp.uN
    share = np.zeros(u.size)
    if above.any():
        masked = np.where(above, A, -np.inf)
        share = np.exp(logsumexp(masked, axis=1) - core)
    lo_node = np.argmin(log_w)
    hi_node = np.argmax(log_w)
    # truncated tails: phi <= 1 everywhere and phi is decreasing in w
    lower_lo = tail_lo - np.exp(interp.g_at(u + log_w[lo_node]))
    upper_hi = tail_hi - np.exp(interp.g_at(u + log_w[hi_node]))
    log_I_lo = np.logaddexp(core, lower_lo)
    log_I_hi = np.logaddexp(np.logaddexp(core, tail_lo), upper_hi)
    log_I = np.logaddexp(log_I_lo, log_I_hi) - math.log(2.0)
    return -2.0 * log_I, (log_I_hi - log_I_lo), share


def _rule_for(spec, nodes_per_panel):
    return spec.quadrature_rule(nodes_per_panel)


def iterate_phi(spec: GeneratorSpec, t_grid=None, tol: float = DEFAULT_TOL, max_iter: int = 500, *,
                rtol: float = DEFAULT_RTOL, nodes_per_panel: int = DEFAULT_NODES,
                interpolation: str = "cubic", strict: bool = True, check_extrapolation: bool = True
                ) -> LaplaceTable:
    """Solve phi = (E phi(tW))^2 by fixed-point iteration from phi_0(t) = exp(-t).

    Iterate k equals the Laplace transform of Y_k up to quadrature and
    interpolation error.  Stops at the first iterate whose sup change in phi
    is below ``tol`` and whose relative change in -log phi is below ``rtol``.
    With ``strict`` a non-converged run raises ConvergenceError; otherwise
    the last iterate is returned with ``converged=False`` (this is how fixed
    depth iterates are obtained).
    """
    t = default_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    if not tol > 0:
        raise ValueError("tol must be positive")
    if t[0] > 1e-2 * (1 + 1e-12) or t[-1] < 1e8 * (1 - 1e-12):
        raise ValueError("grid must span at least [1e-2, 1e8]")
    if np.any(np.diff(np.log(t)) <= 0):
        raise ValueError("grid must be strictly increasing")
    rule = _rule_for(spec, nodes_per_panel)
    cap = log_tail_exponent(spec)
    u = np.log(t)
    nlp = t.copy()
    sup_change = math.inf
    rel_change = math.inf
    converged = False
    k = 0
    bracket = np.zeros(t.size)
    share = np.zeros(t.size)
    step = np.zeros(t.size)
    while k < max_iter:
        interp = LogPhiInterpolant(t, nlp, slope_cap=cap, kind=interpolation)
        new, bracket, share = _apply_operator(interp, u, rule)
        if np.any(np.diff(new) < -1e-12 * np.abs(new[1:])):
            raise ConvergenceError(f"iterate {k + 1} lost monotonicity")
        new = np.maximum.accumulate(new)
        step = np.abs(new - nlp)
        sup_change = float(np.max(np.abs(np.exp(-new) - np.exp(-nlp))))
        rel_change = float(np.max(step / new))
        nlp = new
        k += 1
        if sup_change < tol and rel_change < rtol:
            converged = True
            break
    ext = float(share.max())
    meta = {
        "interpolation": interpolation,
        "slope_cap": cap,
        "nodes_per_panel": nodes_per_panel,
        "quadrature": "composite Gauss-Legendre in log w",
        "quadrature_nodes": int(rule[0].size),
        "tol": tol,
        "rtol": rtol,
        "rel_change": rel_change,
        "max_extrapolated_share": ext,
        "spec": spec.to_dict(),
    }
    # error budget in log phi: truncated-tail bracket plus ten last steps
    log_err = 0.5 * bracket + 10.0 * step
    table = LaplaceTable(t, nlp, "iterated", log_err=log_err, iterations=k,
                         converged=converged, sup_change=sup_change, meta=meta)
    if check_extrapolation and converged:
        ok = t <= t[-1] / 100.0
        worst = float(share[ok].max()) if ok.any() else 0.0
        if worst > MAX_EXTRAPOLATED_SHARE:
            raise ConvergenceError(
                f"grid too narrow: {worst:.2e} of a quadrature integral comes from extrapolation", table)
    if strict and not converged:
        raise ConvergenceError(
            f"no convergence after {k} iterations (sup change {sup_change:.3e}, "
            f"relative change {rel_change:.3e})", table)
    return table


def phi_residual(table: LaplaceTable, spec: GeneratorSpec, nodes_per_panel: int | None = None) -> float:
    """sup_t |phi(t) - (E phi(tW))^2| with the operator evaluated at the given order."""
    n = nodes_per_panel or 2 * table.meta.get("nodes_per_panel", DEFAULT_NODES)
    interp = LogPhiInterpolant(table.t, table.neg_log_phi, slope_cap=log_tail_exponent(spec),
                               kind=table.meta.get("interpolation", "cubic"))
    new, _, _ = _apply_operator(interp, np.log(table.t), _rule_for(spec, n))
    return float(np.max(np.abs(np.exp(-new) - table.phi)))


@dataclass(frozen=True)
class ExponentEstimate:
    slope: float
    intercept: float
    window: tuple[float, float]
    residual_norm: float
    local_slopes: np.ndarray
    n_points: int

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "window": list(self.window),
            "residual_norm": self.residual_norm,
            "local_slopes": [float(s) for s in self.local_slopes],
            "n_points": self.n_points,
        }


def fit_exponent(table: LaplaceTable, window) -> ExponentEstimate:
    """Least-squares slope of log log(1/phi) against log log t over ``window``."""
    lo, hi = float(window[0]), float(window[1])
    keep = (table.t >= lo) & (table.t <= hi)
    if keep.sum() < 5:
        raise ValueError(f"window [{lo:g}, {hi:g}] holds {int(keep.sum())} grid points, need >= 5")
    if np.any(table.neg_log_phi[keep] <= 1.0):
        raise ValueError("phi >= 1/e inside the window; log log 1/phi is not positive")
    fit = loglog_fit(table.t[keep], neg_log=table.neg_log_phi[keep])
    return ExponentEstimate(fit.slope, fit.intercept, (lo, hi), fit.residual_norm,
                            fit.local_slopes, int(keep.sum()))
