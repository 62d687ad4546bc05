"""Rectangle probabilities of (shifted) spherical densities.

The unit of work is a density on R^m of the form

    t -> norm_const * h(t^T t / 2 + shift),

where ``h`` is one of the generators ``g_n``, ``Gbar_n`` or ``Gbar2_n`` of a
family at its original dimension ``n``.  Fixing one or two standardized
coordinates at a band endpoint produces exactly this shape with ``m = n - 1``
or ``m = n - 2``.

Three evaluation strategies are available:

``mixture``
    Normal, Student-t, Pearson VII and Laplace generators (and all their
    cumulative versions) are completely monotone, so ``h(u + s)`` is a
    Laplace transform ``int exp(-u w) nu(w) dw`` of an explicit positive
    measure.  A rectangle probability then becomes a one-dimensional integral
    over the precision ``w`` of products of normal CDF differences, whatever
    ``m`` is.  This is the default for those four families.
``cubature``
    Tensor Gauss-Legendre in ``theta = arctan(t)`` coordinates with panel
    doubling, for ``m <= 3``.
``rqmc``
    Randomized quasi-Monte Carlo on scrambled Sobol points in the same
    coordinates, for ``m >= 4``.

The logistic generator is not completely monotone and always goes through the
last two.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special
from scipy.stats import qmc

from .errors import DimensionMismatch, DomainError, ShapeConstraintViolated
from .generators import (
    GeneratorFamily,
    GeneratorKind,
    eval_generator,
    generic_norm_const,
    log_eval_generator,
    power_law_params,
)

__all__ = [
    "DEFAULT_SEED",
    "SphericalDensitySpec",
    "Rectangle",
    "RectResult",
    "shifted_norm_const",
    "log_shifted_norm_const",
    "make_spec",
    "rectangle_prob",
    "rectangle_prob_normal",
    "phi_diff",
    "parallel_map",
]

DEFAULT_SEED = 0
DEFAULT_ACCURACY = 1e-10
RQMC_REPLICATES = 16
RQMC_START_LOG2 = 16
RQMC_MAX_LOG2 = 20
MAX_PANELS = {1: 1024, 2: 64, 3: 8}
GL_NODES = 20
_ROUNDOFF = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class SphericalDensitySpec:
    """``t -> norm_const * h(t^T t / 2 + shift)`` on R^m, with ``h`` the ``base_kind`` generator at dimension ``n``."""

    m: int
    family: GeneratorFamily
    base_kind: GeneratorKind
    n: int
    shift: float
    norm_const: float

    def __post_init__(self):
        if self.m < 0 or self.n < 1:
            raise DomainError("spec needs m >= 0 and n >= 1")
        if not (self.shift >= 0 and math.isfinite(self.shift)):
            raise DomainError(f"shift must be finite and non-negative, got {self.shift}")
        if not (self.norm_const > 0 and math.isfinite(self.norm_const)):
            raise DomainError("norm_const must be positive and finite")

    def h(self, u):
        return eval_generator(self.family, self.base_kind, self.n, u)

    def density(self, t):
        t = np.atleast_2d(np.asarray(t, dtype=float))
        return self.norm_const * self.h(0.5 * np.sum(t * t, axis=-1) + self.shift)


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned box with possibly infinite faces."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch("rectangle bounds must be 1-d arrays of equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo >= hi):
            raise DomainError("rectangle needs lower < upper componentwise")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @classmethod
    def full(cls, m: int) -> "Rectangle":
        return cls(np.full(m, -np.inf), np.full(m, np.inf))


@dataclass(frozen=True)
class RectResult:
    """Rectangle probability with an error estimate.

    ``converged`` is False when the integration budget ran out before the
    requested accuracy; the value is then the best estimate available.
    """

    value: float
    error: float
    method: str
    converged: bool = True
    detail: dict = field(default_factory=dict, compare=False)


def phi_diff(a, b):
    """``Phi(b) - Phi(a)`` evaluated on the side of zero that avoids cancellation."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper = special.ndtr(-a) - special.ndtr(-b)
    lower = special.ndtr(b) - special.ndtr(a)
    return np.where(a > 0, upper, lower)


# --------------------------------------------------------------------------
# normalizing constants of shifted generators

def _log_radial_power_law(params, shift: float, m: int) -> float:
    coef, alpha, beta, gamma = params
    if gamma <= m / 2.0:
        raise ShapeConstraintViolated(
            f"shifted generator is not integrable in {m} dimensions (exponent {gamma} <= {m / 2})")
    big_a = alpha + beta * shift
    log_val = (math.log(coef) - gamma * math.log(big_a) + (m / 2.0) * math.log(big_a / beta)
               + special.betaln(m / 2.0, gamma - m / 2.0))
    return float(log_val)


def log_shifted_norm_const(family: GeneratorFamily, n: int, kind: GeneratorKind, shift: float,
                           m: int, *, method: str = "auto") -> float:
    """Natural log of :func:`shifted_norm_const`; stays finite when the constant overflows."""
    if not (shift >= 0 and math.isfinite(shift)):
        raise DomainError(f"shift must be finite and non-negative, got {shift}")
    if m < 0:
        raise DomainError("reduced dimension must be >= 0")
    if method not in ("auto", "quadrature"):
        raise DomainError(f"unknown method {method!r}")
    log_h0 = log_eval_generator(family, kind, n, shift)
    if m == 0:
        return -log_h0
    log_pre = math.lgamma(m / 2.0) - (m / 2.0) * math.log(2 * math.pi)
    params = power_law_params(family, kind, n)
    if method == "auto":
        if family.name == "normal":
            return -(m / 2.0) * math.log(2 * math.pi) + shift
        if params is not None:
            return log_pre - _log_radial_power_law(params, shift, m)
    if params is not None and params[3] <= m / 2.0:
        raise ShapeConstraintViolated(
            f"shifted generator is not integrable in {m} dimensions")
    # factor h(shift) out so the quadrature sees an O(1) integrand
    ratio = generic_norm_const(
        lambda s: math.exp(log_eval_generator(family, kind, n, s + shift) - log_h0), m)
    return math.log(ratio) - log_h0


def shifted_norm_const(family: GeneratorFamily, n: int, kind: GeneratorKind, shift: float,
                       m: int, *, method: str = "auto") -> float:
    """Constant making ``t -> c * h(t^T t/2 + shift)`` a density on R^m.

    ``h`` is the ``kind`` generator of ``family`` at dimension ``n``.  Closed
    forms are used for the normal and power-law families; the logistic and
    Laplace generators go through quadrature.  ``method="quadrature"`` forces
    quadrature for every family.  For ``m = 0`` the "density" is a point mass
    and the constant is ``1 / h(shift)``.
    """
    return float(np.exp(log_shifted_norm_const(family, n, kind, shift, m, method=method)))


def make_spec(family: GeneratorFamily, n: int, kind: GeneratorKind, shift: float, m: int,
              *, method: str = "auto") -> SphericalDensitySpec:
    """Build the normalized shifted spec in ``m`` dimensions."""
    return SphericalDensitySpec(m, family, kind, n, float(shift),
                                shifted_norm_const(family, n, kind, shift, m, method=method))


# --------------------------------------------------------------------------
# mixture representation

def _log_mixing(spec: SphericalDensitySpec):
    """Log density of the measure ``nu`` with ``h(u + shift) = int exp(-u w) nu(w) dw``.

    Returns ``None`` for generators that are not completely monotone.
    """
    fam, kind, n, s = spec.family, spec.base_kind, spec.n, spec.shift
    lvl = kind.level
    if fam.name == "laplace":
        def lognu(w):
            return (-1.5 - lvl) * np.log(w) - 0.5 / w - 0.5 * math.log(2 * math.pi) - s * w
        return lognu
    params = power_law_params(fam, kind, n)
    if params is not None:
        coef, alpha, beta, gamma = params
        lead = math.log(coef) - special.gammaln(gamma) - gamma * math.log(beta)

        def lognu(w):
            return lead + (gamma - 1.0) * np.log(w) - (alpha / beta + s) * w
        return lognu
    return None


def _mixture_prob(spec: SphericalDensitySpec, rect: Rectangle) -> RectResult:
    lognu = _log_mixing(spec)
    m = spec.m
    lo, hi = rect.lower, rect.upper
    log_norm = math.log(spec.norm_const) + 0.5 * m * math.log(2 * math.pi)

    # integrate over x = log w; envelope excludes the CDF product (which is <= 1)
    def log_env(x):
        w = np.exp(x)
        return lognu(w) + x - 0.5 * m * x + log_norm

    grid = np.linspace(-60.0, 60.0, 4801)
    env = log_env(grid)
    top = np.nanmax(env)
    keep = np.nonzero(env > top - 90.0)[0]
    x_lo = grid[max(keep[0] - 1, 0)]
    x_hi = grid[min(keep[-1] + 1, grid.size - 1)]
    x_mode = grid[int(np.nanargmax(env))]

    def f(x):
        rw = math.exp(0.5 * x)
        return math.exp(log_env(x)) * float(np.prod(phi_diff(lo * rw, hi * rw)))

    pts = [x_mode] if x_lo < x_mode < x_hi else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, x_lo, x_hi, points=pts, epsabs=1e-15, epsrel=1e-12, limit=500)
    err = err + _ROUNDOFF * abs(val)
    return RectResult(min(max(val, 0.0), 1.0), err, "mixture", converged=err < 1e-8)


# --------------------------------------------------------------------------
# cubature and randomized QMC in arctan coordinates

def _theta_bounds(rect: Rectangle):
    return np.arctan(rect.lower), np.arctan(rect.upper)


def _gl_rule(ta: float, tb: float, panels: int):
    """Gauss-Legendre nodes in theta on [ta, tb] with a breakpoint at 0; returns (t, weight*jacobian)."""
    x, w = np.polynomial.legendre.leggauss(GL_NODES)
    cuts = [ta, tb] if not (ta < 0.0 < tb) else [ta, 0.0, tb]
    nodes, weights = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        edges = np.linspace(a, b, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        th = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        wt = (half[:, None] * w[None, :]).ravel()
        nodes.append(th)
        weights.append(wt)
    th = np.concatenate(nodes)
    wt = np.concatenate(weights)
    c = np.cos(th)
    return np.tan(th), wt / (c * c)


def _tensor_sum(spec: SphericalDensitySpec, rules) -> float:
    m = spec.m
    if m == 1:
        t, w = rules[0]
        return float(np.sum(w * spec.h(0.5 * t * t + spec.shift))) * spec.norm_const
    if m == 2:
        (t1, w1), (t2, w2) = rules
        u = 0.5 * (t1[:, None] ** 2 + t2[None, :] ** 2) + spec.shift
        return float(w1 @ spec.h(u) @ w2) * spec.norm_const
    (t1, w1), (t2, w2), (t3, w3) = rules
    base = 0.5 * (t2[:, None] ** 2 + t3[None, :] ** 2) + spec.shift
    total = 0.0
    step = max(1, 2_000_000 // base.size)
    for i in range(0, t1.size, step):
        u = 0.5 * t1[i:i + step, None, None] ** 2 + base[None, :, :]
        total += float(np.einsum("i,ijk,j,k->", w1[i:i + step], spec.h(u), w2, w3))
    return total * spec.norm_const


def _cubature_prob(spec: SphericalDensitySpec, rect: Rectangle, accuracy: float) -> RectResult:
    ta, tb = _theta_bounds(rect)
    panels = 1
    prev = _tensor_sum(spec, [_gl_rule(a, b, panels) for a, b in zip(ta, tb)])
    while True:
        panels *= 2
        cur = _tensor_sum(spec, [_gl_rule(a, b, panels) for a, b in zip(ta, tb)])
        err = abs(cur - prev) + _ROUNDOFF * abs(cur)
        if err <= accuracy or panels >= MAX_PANELS[spec.m]:
            break
        prev = cur
    return RectResult(min(max(cur, 0.0), 1.0), err, "cubature", converged=err <= accuracy,
                      detail={"panels": panels})


def _rqmc_prob(spec: SphericalDensitySpec, rect: Rectangle, accuracy: float, seed) -> RectResult:
    m = spec.m
    ta, tb = _theta_bounds(rect)
    width = tb - ta
    vol = float(np.prod(width))
    children = np.random.SeedSequence(seed).spawn(RQMC_REPLICATES)
    engines = [qmc.Sobol(d=m, scramble=True, seed=np.random.default_rng(c)) for c in children]
    sums = np.zeros(RQMC_REPLICATES)
    count = 0
    log2 = RQMC_START_LOG2
    block = 2 ** log2
    while True:
        # each step draws as many new points as already used, doubling the total
        for r, eng in enumerate(engines):
            u = eng.random(block)
            th = ta + u * width
            t = np.tan(th)
            c = np.cos(th)
            jac = vol / np.prod(c * c, axis=1)
            sums[r] += float(np.sum(jac * spec.h(0.5 * np.sum(t * t, axis=1) + spec.shift)))
        count += block
        est = sums / count * spec.norm_const
        val = float(np.mean(est))
        se = float(np.std(est, ddof=1) / math.sqrt(RQMC_REPLICATES))
        if se <= accuracy or count >= 2 ** RQMC_MAX_LOG2:
            break
        block = count
    return RectResult(min(max(val, 0.0), 1.0), se + _ROUNDOFF * abs(val), "rqmc",
                      converged=se <= accuracy, detail={"points": count})


def rectangle_prob(spec: SphericalDensitySpec, rect: Rectangle, accuracy: float | None = None,
                   *, seed=DEFAULT_SEED, method: str = "auto") -> RectResult:
    """``int_rect norm_const * h(t^T t/2 + shift) dt`` with an error estimate.

    ``method`` is ``"auto"``, ``"mixture"``, ``"cubature"`` (m <= 3) or
    ``"rqmc"``.  ``accuracy`` is the target absolute error (standard error for
    RQMC).  Results are clamped to [0, 1] and are deterministic for a given
    ``seed``.
    """
    if rect.dim != spec.m:
        raise DimensionMismatch(f"rectangle has dimension {rect.dim}, spec has {spec.m}")
    if method not in ("auto", "mixture", "cubature", "rqmc"):
        raise DomainError(f"unknown method {method!r}")
    if spec.m == 0:
        val = spec.norm_const * float(spec.h(spec.shift))
        return RectResult(min(val, 1.0), _ROUNDOFF * val, "point")
    if method == "auto":
        if spec.family.name == "normal":
            method = "normal"
        elif _log_mixing(spec) is not None:
            method = "mixture"
        elif spec.m <= 3:
            method = "cubature"
        else:
            method = "rqmc"
    if method == "normal":
        scale = spec.norm_const * math.exp(-spec.shift) * (2 * math.pi) ** (spec.m / 2.0)
        r = rectangle_prob_normal(rect)
        val = scale * r.value
        return RectResult(min(val, 1.0), _ROUNDOFF * val, "normal")
    if method == "mixture":
        if _log_mixing(spec) is None:
            raise DomainError(f"{spec.family.name} generator has no mixture representation")
        return _mixture_prob(spec, rect)
    if method == "cubature":
        if spec.m > 3:
            raise DomainError("cubature supports m <= 3")
        return _cubature_prob(spec, rect, DEFAULT_ACCURACY if accuracy is None else accuracy)
    return _rqmc_prob(spec, rect, 1e-5 if accuracy is None else accuracy, seed)


def rectangle_prob_normal(rect: Rectangle, accuracy: float | None = None) -> RectResult:
    """Standard normal probability of ``rect``: a product of one-dimensional CDF differences."""
    val = float(np.prod(phi_diff(rect.lower, rect.upper)))
    return RectResult(val, _ROUNDOFF * val, "normal")


def parallel_map(fn, items):
    """Map ``fn`` over ``items`` on up to ``ELLRISK_THREADS`` threads; output order matches input."""
    items = list(items)
    try:
        threads = int(os.environ.get("ELLRISK_THREADS", "1"))
    except ValueError:
        threads = 1
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
