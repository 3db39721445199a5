"""Cascade generators W with E W = 1/2 and their left tails.

Three families are supported, all written as ``W = scale * base``:

* ``deterministic-half``: base = 1, scale = 1/2;
* ``lognormal(sigma)``: base = exp(sigma Z - sigma^2/2), scale = 1/2;
* ``log-weibull(c, gamma)``: base = exp(-V) with P(V > v) = exp(-c v^gamma),
  scale = 1 / (2 E exp(-V)).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special
from scipy.stats import norm

from . import _pykernels

MEAN_TOL = 1e-10
_LOG_TAIL_CUT = -700.0  # log of truncated tail mass in quadrature rules
_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}

FAMILIES = ("deterministic-half", "lognormal", "log-weibull")


class CertificationError(RuntimeError):
    """No tail constant satisfies the requested inequality on the grid."""


def _gauss_legendre(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    sigma: float | None = None
    c: float | None = None
    gamma: float | None = None
    scale: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "lognormal":
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("lognormal generator needs sigma > 0")
        if self.family == "log-weibull":
            if self.c is None or not self.c > 0:
                raise ValueError("log-weibull generator needs c > 0")
            if self.gamma is None or not self.gamma > 1:
                raise ValueError("log-weibull generator needs gamma > 1")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        err = abs(self.mean_by_quadrature() - 0.5)
        if err > MEAN_TOL:
            raise ValueError(f"E W deviates from 1/2 by {err:.3e}")

    # -- parameters --------------------------------------------------------
    @property
    def mu(self) -> float:
        """Mean of log W (lognormal family)."""
        return math.log(self.scale) - 0.5 * self.sigma**2

    def kernel_params(self) -> tuple[int, float, float, float]:
        if self.family == "lognormal":
            return _pykernels.LOGNORMAL, self.mu, self.sigma, 0.0
        if self.family == "log-weibull":
            return _pykernels.LOG_WEIBULL, self.scale, self.c, 1.0 / self.gamma
        return _pykernels.DETERMINISTIC, self.scale, 0.0, 0.0

    def mean_by_quadrature(self) -> float:
        if self.family == "deterministic-half":
            return self.scale
        if self.family == "lognormal":
            s = self.sigma
            f = lambda z: math.exp(s * z - 0.5 * s * s) * norm.pdf(z)
            val, _ = integrate.quad(f, -40.0, 40.0, epsabs=1e-14, epsrel=1e-13, points=[s], limit=200)
            return self.scale * val
        # E exp(-V) through the exponential variable U = c V^gamma, independent
        # of the v-space quadrature used to fix the scale
        c, g = self.c, self.gamma
        f = lambda u: math.exp(-u - (u / c) ** (1.0 / g))
        val, _ = integrate.quad(f, 0.0, 40.0, epsabs=1e-15, epsrel=1e-13, limit=200)
        return self.scale * val

    # -- distribution ------------------------------------------------------
    def logcdf(self, x):
        """log P(W <= x), vectorised."""
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, -np.inf)
        pos = x > 0
        if self.family == "deterministic-half":
            out[x >= self.scale] = 0.0
        elif self.family == "lognormal":
            out[pos] = special.log_ndtr((np.log(x[pos]) - self.mu) / self.sigma)
        else:
            lv = np.log(self.scale / x[pos])  # the V level giving W <= x
            out[pos] = np.where(lv > 0, -self.c * np.clip(lv, 0, None) ** self.gamma, 0.0)
        return out if out.ndim else float(out)

    def cdf(self, x):
        return np.exp(self.logcdf(x))

    def moment(self, p: float) -> float:
        """E W^p for real p (negative allowed)."""
        if self.family == "deterministic-half":
            return self.scale**p
        if self.family == "lognormal":
            return math.exp(p * self.mu + 0.5 * (p * self.sigma) ** 2)
        c, g = self.c, self.gamma
        if p > 0:
            f = lambda u: math.exp(-u - p * (u / c) ** (1.0 / g))
            val, _ = integrate.quad(f, 0.0, 50.0, limit=200, epsrel=1e-12)
        else:
            # E exp(|p| V) is finite because gamma > 1
            f = lambda v: math.exp(-p * v - c * v**g) * c * g * v ** (g - 1)
            val, _ = integrate.quad(f, 0.0, (800.0 / c) ** (1.0 / g), limit=400, epsrel=1e-12)
        return self.scale**p * val

    def quadrature_rule(self, nodes_per_panel: int = 8):
        """Nodes in log w with log probability weights, covering the support.

        Returns ``(log_w, log_weight, log_tail_low, log_tail_high)`` where the
        tails are the probability masses left out below / above the nodes.
        """
        if self.family == "deterministic-half":
            return np.array([math.log(self.scale)]), np.array([0.0]), -np.inf, -np.inf
        x, w = _gauss_legendre(nodes_per_panel)
        if self.family == "lognormal":
            zmax = 30.0
            edges = np.arange(-zmax, zmax + 1e-12, 0.5)
            a, b = edges[:-1, None], edges[1:, None]
            z = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
            lw = np.log(0.5 * (b - a) * w).ravel() - 0.5 * z * z - 0.5 * math.log(2 * math.pi)
            tail = float(special.log_ndtr(-zmax))
            return self.mu + self.sigma * z, lw, tail, tail
        # log-weibull: V = r^2 with r uniform panels; density of r is
        # 2 c gamma r^(2 gamma - 1) exp(-c r^(2 gamma))
        c, g = self.c, self.gamma
        rmax = math.sqrt((-_LOG_TAIL_CUT / c) ** (1.0 / g))
        npanel = max(64, int(math.ceil(4 * rmax**2)))
        edges = np.linspace(0.0, rmax, npanel + 1)
        # r^(2 gamma - 1) is not smooth at 0: grade the first panel geometrically
        edges = np.concatenate([[0.0], edges[1] * 0.5 ** np.arange(30, 0, -1), edges[1:]])
        a, b = edges[:-1, None], edges[1:, None]
        r = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
        wr = (0.5 * (b - a) * w).ravel()
        lw = np.log(wr) + math.log(2 * c * g) + (2 * g - 1) * np.log(r) - c * r ** (2 * g)
        return math.log(self.scale) - r * r, lw, _LOG_TAIL_CUT, -np.inf

    # -- serialisation -----------------------------------------------------
    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.family == "lognormal":
            d["sigma"] = self.sigma
        elif self.family == "log-weibull":
            d["c"] = self.c
            d["gamma"] = self.gamma
        d["scale"] = self.scale
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def label(self) -> str:
        if self.family == "lognormal":
            return f"lognormal:{self.sigma:g}"
        if self.family == "log-weibull":
            return f"log-weibull:{self.c:g}:{self.gamma:g}"
        return self.family


def make_deterministic_half() -> GeneratorSpec:
    return GeneratorSpec("deterministic-half")


def make_lognormal(sigma: float) -> GeneratorSpec:
    """log W ~ N(-log 2 - sigma^2/2, sigma^2), so that E W = 1/2."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return GeneratorSpec("lognormal", sigma=float(sigma))


def _log_weibull_scale(c: float, gamma: float) -> float:
    # E exp(-V) by adaptive quadrature in v; the cut at vmax drops < 1e-14
    vmax = (-math.log(1e-14) / c) ** (1.0 / gamma)
    f = lambda v: math.exp(-v - c * v**gamma) * c * gamma * v ** (gamma - 1)
    brk = [min(1.0, vmax / 2)]
    val, _ = integrate.quad(f, 0.0, vmax, epsabs=1e-15, epsrel=1e-13, limit=400, points=brk)
    return 1.0 / (2.0 * val)


def make_log_weibull(c: float, gamma: float) -> GeneratorSpec:
    """W = s exp(-V) with P(V > v) = exp(-c v^gamma) and E W = 1/2."""
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    if not gamma > 1:
        raise ValueError(f"gamma must exceed 1, got {gamma}")
    return GeneratorSpec("log-weibull", c=float(c), gamma=float(gamma), scale=_log_weibull_scale(c, gamma))


def from_dict(d: dict) -> GeneratorSpec:
    fam = d.get("family")
    if fam == "deterministic-half":
        return make_deterministic_half()
    if fam == "lognormal":
        return make_lognormal(d["sigma"])
    if fam == "log-weibull":
        return make_log_weibull(d["c"], d["gamma"])
    raise ValueError(f"unknown generator family {fam!r}")


def from_json(text: str) -> GeneratorSpec:
    return from_dict(json.loads(text))


def parse_spec(text: str) -> GeneratorSpec:
    """Parse ``lognormal:0.5``, ``log-weibull:1:2``, ``deterministic-half`` or JSON."""
    text = text.strip()
    if text.startswith("{"):
        return from_json(text)
    name, *args = text.split(":")
    try:
        vals = [float(a) for a in args]
    except ValueError:
        raise ValueError(f"bad generator parameters in {text!r}") from None
    if name == "deterministic-half" and not vals:
        return make_deterministic_half()
    if name == "lognormal" and len(vals) == 1:
        return make_lognormal(vals[0])
    if name == "log-weibull" and len(vals) == 2:
        return make_log_weibull(*vals)
    raise ValueError(
        f"cannot parse generator {text!r}; expected deterministic-half, "
        "lognormal:SIGMA or log-weibull:C:GAMMA"
    )


def sample(spec: GeneratorSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. draws of W; uses the same transforms as the cascade kernels."""
    if n < 1:
        raise ValueError("n must be >= 1")
    code, a, b, c = spec.kernel_params()
    if code == _pykernels.DETERMINISTIC:
        return np.full(n, a)
    return _pykernels.weights_from_draws(_pykernels.draw_raw(rng, code, n), code, a, b, c)


def cdf(spec: GeneratorSpec, x):
    return spec.cdf(x)


def log_tail_exponent(spec: GeneratorSpec) -> float | None:
    """The limit of log log 1/P(W<=x) / log log 1/x as x -> 0, if any."""
    if spec.family == "lognormal":
        return 2.0
    if spec.family == "log-weibull":
        return spec.gamma
    return None


@dataclass(frozen=True)
class TailCertificate:
    """Grid-verified bound P(W <= x) >=/<= exp(-c (-log x)^gamma) on [x_min, x_prime]."""

    direction: str
    c: float
    gamma: float
    x_prime: float
    x_min: float
    grid: int
    margin: float
    spec: GeneratorSpec
    worst_log_slack: float
    fine_grid_passed: bool

    def bound_log(self, x):
        return -self.c * (-np.log(x)) ** self.gamma

    def holds(self, x) -> np.ndarray:
        lc = self.spec.logcdf(np.asarray(x, dtype=float))
        b = self.bound_log(x)
        return lc >= b if self.direction == "cdf-lower" else lc <= b

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "c": self.c,
            "gamma": self.gamma,
            "x_prime": self.x_prime,
            "x_min": self.x_min,
            "grid": self.grid,
            "margin": self.margin,
            "spec": self.spec.to_dict(),
            "worst_log_slack": self.worst_log_slack,
            "fine_grid_passed": self.fine_grid_passed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TailCertificate":
        cert = cls(
            direction=d["direction"],
            c=float(d["c"]),
            gamma=float(d["gamma"]),
            x_prime=float(d["x_prime"]),
            x_min=float(d["x_min"]),
            grid=int(d["grid"]),
            margin=float(d["margin"]),
            spec=from_dict(d["spec"]),
            worst_log_slack=float(d["worst_log_slack"]),
            fine_grid_passed=bool(d["fine_grid_passed"]),
        )
        xs = np.geomspace(cert.x_min, cert.x_prime, cert.grid)
        if not np.all(cert.holds(xs)):
            raise CertificationError("loaded certificate does not hold on its own grid")
        return cert


def certify_tail(
    spec: GeneratorSpec,
    direction: str,
    gamma_target: float,
    x_range: tuple[float, float] = (1e-12, 1e-2),
    grid: int = 4096,
    margin: float = 0.01,
) -> TailCertificate:
    """Find the extremal constant c making the tail inequality hold on a log grid.

    ``cdf-lower`` certifies P(W <= x) >= exp(-c (-log x)^gamma) and takes the
    largest ratio over the grid inflated by ``margin``; ``cdf-upper`` takes the
    smallest ratio deflated by ``margin``.  The result is re-checked on a grid
    ten times finer.
    """
    if direction not in ("cdf-lower", "cdf-upper"):
        raise ValueError(f"direction must be cdf-lower or cdf-upper, got {direction!r}")
    if not gamma_target > 1:
        raise ValueError("gamma_target must exceed 1")
    x_min, x_max = map(float, x_range)
    if not 0 < x_min < x_max < 1:
        raise ValueError("x_range must satisfy 0 < x_min < x_prime < 1")
    exponent = log_tail_exponent(spec)
    if exponent is not None:
        if direction == "cdf-upper" and gamma_target > exponent:
            raise ValueError(f"cdf-upper needs gamma_target <= {exponent}")
        if direction == "cdf-lower" and gamma_target < exponent:
            raise ValueError(f"cdf-lower needs gamma_target >= {exponent}")

    xs = np.geomspace(x_min, x_max, grid)
    ratio = -spec.logcdf(xs) / (-np.log(xs)) ** gamma_target
    if direction == "cdf-lower":
        if not np.all(np.isfinite(ratio)):
            bad = xs[~np.isfinite(ratio)]
            raise CertificationError(
                f"P(W <= x) = 0 at {bad.size} grid points (largest {bad.max():.3g}); "
                "no lower tail bound exists"
            )
        c = float(ratio.max()) * (1.0 + margin)
    else:
        if np.all(np.isinf(ratio)):
            raise CertificationError("left tail vanishes on the whole grid; any c works, none is extremal")
        c = float(ratio.min()) * (1.0 - margin)
        if not c > 0:
            raise CertificationError("P(W <= x) = 1 somewhere on the grid; no upper tail bound exists")

    def slack(x):
        lc = spec.logcdf(x)
        b = -c * (-np.log(x)) ** gamma_target
        return lc - b if direction == "cdf-lower" else b - lc

    worst = float(np.min(slack(xs)))
    fine = bool(np.all(slack(np.geomspace(x_min, x_max, 10 * grid)) >= 0))
    if worst < 0 or not fine:
        raise CertificationError(f"certificate fails verification (worst log slack {worst:.3e})")
    return TailCertificate(direction, c, float(gamma_target), x_max, x_min, grid, margin, spec, worst, fine)
