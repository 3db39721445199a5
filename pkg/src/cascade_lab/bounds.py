"""Explicit bounds: bootstrap exponents, the k0 optimisation, certified lower
bounds on phi, Markov bridges to small-deviation probabilities, and the
negative-moment envelope.

Values of phi and of the bounds get astronomically small at large t, so the
workhorses return natural logs; plain values are derived from them.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _pykernels, rng as rngmod
from .generator import GeneratorSpec, TailCertificate
from .laplace import LaplaceTable


class ValidityError(ValueError):
    """t outside the range where a bound is proven."""


@dataclass(frozen=True)
class BootstrapSequence:
    gamma: float
    alphas: np.ndarray
    deficits: np.ndarray
    tolerance: float

    def __len__(self):
        return self.alphas.size

    def closed_form_deficits(self) -> np.ndarray:
        n = np.arange(self.alphas.size)
        r = self.gamma / (self.gamma + 1.0)
        return (self.gamma - 1.0) * r ** n

    def explicit_sum(self, n: int) -> float:
        """alpha_n as the finite geometric sum sum_{k=1}^n r^k + r^n."""
        r = self.gamma / (self.gamma + 1.0)
        return float(sum(r ** k for k in range(1, n + 1)) + r ** n)

    def max_relative_error(self) -> float:
        ref = self.closed_form_deficits()
        return float(np.max(np.abs(self.deficits - ref) / ref))


def alpha_sequence(gamma: float, tol: float = 1e-9, max_len: int = 10_000) -> BootstrapSequence:
    """alpha_0 = 1, alpha_k = r alpha_{k-1} + r with r = gamma/(gamma+1), until gamma - alpha_n < tol.

    The deficit gamma - alpha_k obeys d_k = r d_{k-1}; it is iterated directly so
    that it keeps full relative precision when alpha_k is within rounding of gamma.
    """
    if not gamma > 1:
        raise ValueError("gamma must exceed 1")
    if not tol > 0:
        raise ValueError("tol must be positive")
    r = gamma / (gamma + 1.0)
    deficits = [gamma - 1.0]
    alphas = [1.0]
    while deficits[-1] >= tol:
        if len(deficits) > max_len:
            raise RuntimeError("alpha sequence did not reach the tolerance")
        prev = alphas[-1]
        alphas.append(r * prev + r)
        deficits.append(deficits[-1] - deficits[-1] / (gamma + 1.0))
    return BootstrapSequence(float(gamma), np.array(alphas), np.array(deficits), float(tol))


def f_t(k, c, C_alpha, alpha, gamma, t):
    """(C_alpha/2^alpha) k (log t)^alpha + (c/2^gamma) k^-gamma (log t)^gamma."""
    if not t > 1:
        raise ValueError("t must exceed 1")
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise ValueError("k must be positive")
    L = math.log(t)
    out = C_alpha / 2.0 ** alpha * k * L ** alpha + c / 2.0 ** gamma * k ** (-gamma) * L ** gamma
    return float(out) if out.ndim == 0 else out


def k0_optimal(c, C_alpha, alpha, gamma, t) -> float:
    """Stationary point of f_t in k."""
    if not t > 1:
        raise ValueError("t must exceed 1")
    base = c * gamma * 2.0 ** (alpha - gamma) / C_alpha
    return float(base ** (1.0 / (gamma + 1.0)) * math.log(t) ** ((gamma - alpha) / (gamma + 1.0)))


@dataclass(frozen=True)
class TauDistribution:
    t: float
    probs: np.ndarray      # P(tau = k), k = 1..n_max
    stderr: np.ndarray
    dominating: np.ndarray  # k * P(W <= t^(-1/(2k)))
    count: int
    beyond: float          # P(tau > n_max)

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, self.probs.size + 1)

    def dominated(self, n_se: float = 3.0) -> bool:
        return bool(np.all(self.probs <= self.dominating + n_se * self.stderr))


def tau_distribution(spec: GeneratorSpec, t: float, n_max: int, count: int, master_seed: int, *,
                     chunk_size: int = rngmod.DEFAULT_CHUNK, workers: int | None = None) -> TauDistribution:
    """Monte Carlo law of tau_t = inf{n : W_1 ... W_n <= t^(-1/2)}."""
    if not t > 1:
        raise ValueError("t must exceed 1")
    if n_max < 1 or count < 1:
        raise ValueError("n_max and count must be positive")
    code, a, b, c = spec.kernel_params()
    level = -0.5 * math.log(t)

    def run(index, start, stop):
        n = stop - start
        if code == _pykernels.DETERMINISTIC:
            logw = np.full((n, n_max), math.log(a))
        else:
            g = rngmod.stream(master_seed, rngmod.TAU, index)
            raw = _pykernels.draw_raw(g, code, (n, n_max))
            logw = np.log(_pykernels.weights_from_draws(raw, code, a, b, c))
        hit = np.cumsum(logw, axis=1) <= level + 1e-12
        first = np.where(hit.any(axis=1), hit.argmax(axis=1) + 1, 0)
        return np.bincount(first, minlength=n_max + 1)

    counts = np.sum(rngmod.map_chunks(run, rngmod.chunks(count, chunk_size), workers), axis=0)
    p = counts[1:] / count
    k = np.arange(1, n_max + 1)
    dom = k * spec.cdf(t ** (-1.0 / (2.0 * k)))
    return TauDistribution(float(t), p, np.sqrt(p * (1 - p) / count), dom,
                           int(count), float(counts[0] / count))


@dataclass(frozen=True)
class LowerBound:
    t: float
    n: int
    log_product: float
    log_closed: float
    anchor: str
    anchor_point: float

    @property
    def product(self) -> float:
        return math.exp(self.log_product)

    @property
    def closed(self) -> float:
        return math.exp(self.log_closed)


ANCHORS = ("squared", "inverse")


def anchor_point(cert: TailCertificate, anchor: str = "squared") -> float:
    """Where phi must be known: x'^-2 (proved) or 1/x' (optimistic variant)."""
    if anchor == "squared":
        return cert.x_prime ** -2
    if anchor == "inverse":
        return 1.0 / cert.x_prime
    raise ValueError(f"anchor must be one of {ANCHORS}")


def validity_threshold(cert: TailCertificate) -> float:
    """Smallest t with at least one halving step: t >= x'^-2."""
    return cert.x_prime ** -2


def phi_lower_certified(cert: TailCertificate, log_phi_anchor: float, t: float, *,
                        anchor: str = "squared", spec: GeneratorSpec | None = None) -> LowerBound:
    """Lower bounds on log phi(t) from a cdf-lower tail certificate.

    Repeated use of phi(t) >= P(W <= t^-1/2)^2 phi(t^1/2)^2 gives
        phi(t) >= prod_{k=1}^n P(W <= t^(-2^-k))^(2^k) * phi(t^(2^-n))^(2^n)
    with n the largest integer such that t^(-2^-n) <= x'.  Then
    x'^-1 <= t^(2^-n) < x'^-2 and 2^n <= log t / (-log x'), so the last factor
    is at least phi(x'^-2)^(log t / -log x').  The closed form replaces each
    cdf by the certified exp(-c log(1/x)^gamma) and sums the geometric series.

    ``log_phi_anchor`` is log phi at ``anchor_point(cert, anchor)``; pass a
    conservative (error-bracketed) value.  With ``anchor="inverse"`` the
    anchor is taken at 1/x' instead, which is not a proven bound.
    """
    if cert.direction != "cdf-lower":
        raise ValueError("need a cdf-lower certificate")
    spec = spec or cert.spec
    if spec is None:
        raise ValueError("certificate carries no generator spec")
    if not log_phi_anchor <= 0:
        raise ValueError("log phi must be <= 0")
    anchor_point(cert, anchor)
    if not t >= validity_threshold(cert) * (1 - 1e-12):
        raise ValidityError(f"t = {t:g} below the validity threshold {validity_threshold(cert):g}")
    if t ** -0.5 < cert.x_min:
        raise ValidityError(f"t = {t:g} needs the certificate below its range (x_min = {cert.x_min:g})")
    L = math.log(t)
    ratio = L / -math.log(cert.x_prime)
    n = int(math.floor(math.log2(ratio) + 1e-12))
    k = np.arange(1, n + 1)
    pts = np.exp(-L * 2.0 ** -k)
    log_prod = float(np.sum(2.0 ** k * spec.logcdf(pts))) + ratio * log_phi_anchor
    g = cert.gamma
    log_closed = -cert.c / (2.0 ** (g - 1.0) - 1.0) * L ** g + ratio * log_phi_anchor
    return LowerBound(float(t), n, log_prod, float(log_closed), anchor, anchor_point(cert, anchor))


def _table_range_check(table: LaplaceTable, t) -> None:
    t = np.atleast_1d(t)
    if np.any(t < table.t[0] * (1 - 1e-12)) or np.any(t > table.t[-1] * (1 + 1e-12)):
        raise ValueError(f"t outside the table range [{table.t[0]:g}, {table.t[-1]:g}]")


def smalldev_upper(table: LaplaceTable, x):
    """P(Y <= x) <= e phi(1/x), from Markov applied to exp(-Y/x)."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or np.any(x >= 1):
        raise ValueError("x must lie in (0, 1)")
    _table_range_check(table, 1.0 / x)
    out = np.minimum(1.0, np.exp(1.0 - table.neg_log_phi_at(1.0 / x)))
    return float(out) if out.ndim == 0 else out


def smalldev_lower(table: LaplaceTable, x):
    """P(Y <= x) >= phi(x^-2) - exp(-1/x), clamped at 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or np.any(x >= 1):
        raise ValueError("x must lie in (0, 1)")
    _table_range_check(table, x ** -2.0)
    out = np.maximum(0.0, np.exp(-table.neg_log_phi_at(x ** -2.0)) - np.exp(-1.0 / x))
    return float(out) if out.ndim == 0 else out


def log_molchan_envelope(neg_moment, q, t):
    """log of q^q e^-q t^-q E[Y^-q]."""
    if not q > 0:
        raise ValueError("q must be positive")
    if not neg_moment > 0:
        raise ValueError("negative moment must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    return q * math.log(q) - q - q * np.log(t) + math.log(neg_moment)


def molchan_envelope(neg_moment, q, t):
    """Upper bound on phi(t) from exp(-u) <= q^q e^-q u^-q."""
    out = np.exp(log_molchan_envelope(neg_moment, q, t))
    return float(out) if out.ndim == 0 else out


@dataclass
class BoundReport:
    t: np.ndarray
    log_product: np.ndarray
    log_closed: np.ndarray
    log_phi: np.ndarray
    log_envelope: np.ndarray
    certificate: TailCertificate
    moments: dict
    anchor: str
    log_phi_anchor: float
    meta: dict = field(default_factory=dict)

    @property
    def lower_ok(self) -> np.ndarray:
        return self.log_product <= self.log_phi

    @property
    def upper_ok(self) -> np.ndarray:
        return self.log_phi <= self.log_envelope

    @property
    def closed_ok(self) -> np.ndarray:
        return self.log_closed <= self.log_product

    @property
    def all_ok(self) -> bool:
        return bool(self.lower_ok.all() and self.upper_ok.all() and self.closed_ok.all())

    def summary(self) -> dict:
        return {
            "points": int(self.t.size),
            "t_min": float(self.t[0]) if self.t.size else None,
            "t_max": float(self.t[-1]) if self.t.size else None,
            "lower_ok": bool(self.lower_ok.all()),
            "upper_ok": bool(self.upper_ok.all()),
            "closed_le_product": bool(self.closed_ok.all()),
            "all_ok": self.all_ok,
            "anchor": self.anchor,
            "log_phi_anchor": self.log_phi_anchor,
            "moments": {str(k): v for k, v in self.moments.items()},
            "certificate": self.certificate.to_dict(),
            **self.meta,
        }

    def to_csv(self, path) -> None:
        cols = ["t", "product_bound", "closed_bound", "phi", "envelope",
                "log_product_bound", "log_closed_bound", "log_phi", "log_envelope",
                "lower_ok", "upper_ok", "closed_le_product"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for i in range(self.t.size):
                logs = [self.log_product[i], self.log_closed[i], self.log_phi[i], self.log_envelope[i]]
                w.writerow([repr(float(self.t[i]))] + [repr(math.exp(v)) for v in logs]
                           + [repr(float(v)) for v in logs]
                           + [int(self.lower_ok[i]), int(self.upper_ok[i]), int(self.closed_ok[i])])

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def bound_report(table: LaplaceTable, cert: TailCertificate, moments: dict, *, t_max: float = 1e8,
                 anchor: str = "squared") -> BoundReport:
    """Evaluate lower bound, phi and envelope at every table point in [x'^-2, t_max].

    ``moments`` maps q to an estimate of E[Y^-q]; the envelope is the minimum
    over the supplied q.  phi at the anchor is read from the table minus its
    error bracket.
    """
    if not moments:
        raise ValueError("need at least one negative moment")
    lo = validity_threshold(cert)
    keep = (table.t >= lo * (1 - 1e-12)) & (table.t <= t_max * (1 + 1e-12))
    keep &= table.t ** -0.5 >= cert.x_min
    t = table.t[keep]
    a = anchor_point(cert, anchor)
    log_anchor = -float(table.neg_log_phi_at(np.array([a]), conservative=True)[0])
    lows = [phi_lower_certified(cert, log_anchor, ti, anchor=anchor) for ti in t]
    env = np.min([log_molchan_envelope(m, q, t) for q, m in moments.items()], axis=0) if t.size else np.array([])
    return BoundReport(t, np.array([b.log_product for b in lows]), np.array([b.log_closed for b in lows]),
                       -table.neg_log_phi[keep], np.asarray(env, dtype=float), cert,
                       {float(q): float(m) for q, m in moments.items()}, anchor, log_anchor)
