"""Elliptical model objects, marginals, the VaR map and band standardization."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import (
    BandInvertedAfterStandardization,
    DimensionMismatch,
    DomainError,
    IntegralDiverged,
    InsufficientData,
    InvalidBand,
    NotPositiveDefinite,
    RootNotBracketed,
    SingularCovariance,
)
from .generators import GeneratorFamily, GeneratorKind, eval_generator, norm_const
from .integrate import log_shifted_norm_const

__all__ = [
    "EllipticalDist",
    "TruncationBand",
    "StandardizedBand",
    "sqrt_spd",
    "inv_sqrt_spd",
    "marginal_density",
    "marginal_cdf",
    "var_quantile",
    "var_bounds",
    "std_marginal_cdf",
    "std_marginal_density",
    "std_marginal_quantile",
    "standardize_band",
    "fit_normal_mle",
    "pvii_from_t",
]

SYM_TOL = 1e-12
EIG_TOL = 1e-12
QUANTILE_TOL = 1e-10
BRACKET = 40.0


def _eigh_checked(sigma) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(sigma, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.max(np.abs(a)), 1e-300)
    if np.max(np.abs(a - a.T)) > SYM_TOL * scale:
        raise NotPositiveDefinite("matrix is not symmetric")
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    if w[-1] <= 0 or w[0] <= EIG_TOL * w[-1]:
        raise NotPositiveDefinite(f"matrix is not positive definite (eigenvalues {w})")
    return w, v


def sqrt_spd(sigma) -> np.ndarray:
    """Symmetric principal square root of an SPD matrix."""
    w, v = _eigh_checked(sigma)
    s = (v * np.sqrt(w)) @ v.T
    return 0.5 * (s + s.T)


def inv_sqrt_spd(sigma) -> np.ndarray:
    """Inverse of the symmetric principal square root."""
    w, v = _eigh_checked(sigma)
    s = (v / np.sqrt(w)) @ v.T
    return 0.5 * (s + s.T)


@dataclass(frozen=True, eq=False)
class EllipticalDist:
    """Elliptical law with location ``mu``, SPD scale ``sigma`` and a generator family."""

    mu: np.ndarray
    sigma: np.ndarray
    family: GeneratorFamily

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float)).copy()
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float)).copy()
        if mu.ndim != 1 or mu.size < 1:
            raise DimensionMismatch("mu must be a non-empty vector")
        if sigma.shape != (mu.size, mu.size):
            raise DimensionMismatch(f"sigma has shape {sigma.shape}, expected {(mu.size, mu.size)}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise DomainError("mu and sigma must be finite")
        _eigh_checked(sigma)
        if not isinstance(self.family, GeneratorFamily):
            raise DomainError("family must be a GeneratorFamily")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def n(self) -> int:
        return self.mu.size

    @cached_property
    def sqrt_sigma(self) -> np.ndarray:
        return sqrt_spd(self.sigma)

    @cached_property
    def inv_sqrt_sigma(self) -> np.ndarray:
        return inv_sqrt_spd(self.sigma)

    @property
    def is_diagonal(self) -> bool:
        return bool(np.all(self.sigma == np.diag(np.diag(self.sigma))))

    def scaled(self, b: float) -> "EllipticalDist":
        """Law of ``b * X``."""
        return EllipticalDist(b * self.mu, b * b * self.sigma, self.family)

    def shifted(self, gamma) -> "EllipticalDist":
        """Law of ``X + gamma``."""
        return EllipticalDist(self.mu + np.asarray(gamma, dtype=float), self.sigma, self.family)

    def __repr__(self):
        return f"EllipticalDist(n={self.n}, family={self.family.label()})"


@dataclass(frozen=True, eq=False)
class TruncationBand:
    """Per-component probability levels ``p_k < q_k``; 0 and 1 mean unbounded."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p, dtype=float)).copy()
        q = np.atleast_1d(np.asarray(self.q, dtype=float)).copy()
        if p.shape != q.shape or p.ndim != 1:
            raise DimensionMismatch("p and q must be vectors of equal length")
        if np.any(~np.isfinite(p)) or np.any(~np.isfinite(q)):
            raise InvalidBand("probability levels must be finite")
        if np.any(p < 0) or np.any(p >= 1) or np.any(q <= 0) or np.any(q > 1):
            raise InvalidBand("levels must satisfy 0 <= p < 1 and 0 < q <= 1")
        if np.any(p >= q):
            raise InvalidBand(f"p_k >= q_k in component(s) {np.nonzero(p >= q)[0].tolist()}")
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @classmethod
    def broadcast(cls, p, q, n: int) -> "TruncationBand":
        p = np.broadcast_to(np.asarray(p, dtype=float), (n,))
        q = np.broadcast_to(np.asarray(q, dtype=float), (n,))
        return cls(p, q)

    @property
    def n(self) -> int:
        return self.p.size

    def reflected(self) -> "TruncationBand":
        """The band ``(1 - q, 1 - p)``."""
        return TruncationBand(1.0 - self.q, 1.0 - self.p)

    def to_dict(self) -> dict:
        return {"p": self.p.tolist(), "q": self.q.tolist()}


@dataclass(frozen=True, eq=False)
class StandardizedBand:
    """Bounds ``eta_p < eta_q`` of the standardized truncation rectangle."""

    eta_p: np.ndarray
    eta_q: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.eta_p, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.eta_q, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch("eta_p and eta_q must be vectors of equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise DomainError("standardized bounds must be ordered extended reals")
        bad = np.nonzero(lo >= hi)[0]
        if bad.size:
            raise BandInvertedAfterStandardization(
                f"eta_p >= eta_q in component(s) {bad.tolist()}: eta_p={lo.tolist()}, eta_q={hi.tolist()}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "eta_p", lo)
        object.__setattr__(self, "eta_q", hi)

    @property
    def n(self) -> int:
        return self.eta_p.size


def _check_index(dist: EllipticalDist, k: int) -> None:
    if not (0 <= k < dist.n):
        raise DimensionMismatch(f"component index {k} out of range for n={dist.n}")


# --------------------------------------------------------------------------
# standardized one-dimensional marginal Z of the spherical law in n dimensions

def _std_density(family: GeneratorFamily, n: int, z: float) -> float:
    c_n = norm_const(family, GeneratorKind.G, n)
    if n == 1:
        return c_n * eval_generator(family, GeneratorKind.G, 1, 0.5 * z * z)
    return math.exp(math.log(c_n) - log_shifted_norm_const(family, n, GeneratorKind.G, 0.5 * z * z, n - 1))


def _radial_pdf_factory(family: GeneratorFamily, n: int):
    c_n = norm_const(family, GeneratorKind.G, n)
    area = 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)

    def f_r(r):
        return c_n * area * r ** (n - 1) * eval_generator(family, GeneratorKind.G, n, 0.5 * r * r)
    return f_r


def _std_upper_tail(family: GeneratorFamily, n: int, z: float) -> float:
    """``P(Z > z)`` for ``z >= 0`` through the radial representation ``Z = R U_1``."""
    if z == 0.0:
        return 0.5
    f_r = _radial_pdf_factory(family, n)
    if n == 1:
        def f(x):
            return f_r(z + x)
    else:
        b = 0.5 * (n - 1)

        def f(x):
            r = z + x
            return special.betaincc(0.5, b, (z / r) ** 2) * f_r(r)

    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            for lo, hi in ((0.0, 1.0), (1.0, 8.0), (8.0, math.inf)):
                total += integrate.quad(f, lo, hi, epsabs=1e-300, epsrel=1e-12, limit=400)[0]
        except integrate.IntegrationWarning as exc:
            raise IntegralDiverged(f"marginal tail integral did not converge: {exc}") from exc
    return 0.5 * total


def _fast_marginal(family: GeneratorFamily, n: int):
    """scipy.stats frozen law of Z when one is available."""
    if family.name == "normal":
        return stats.norm()
    if family.name == "student_t":
        return stats.t(df=family.shape)
    if family.name == "pearson7":
        # PVII_n(t) with identity scale is t_n(2t - n) scaled by 1/sqrt(2t - n)
        df = 2.0 * family.shape - n
        if df <= 0:
            raise DomainError(f"Pearson VII needs t > n/2 (t={family.shape}, n={n})")
        return stats.t(df=df, scale=1.0 / math.sqrt(df))
    return None


def std_marginal_cdf(family: GeneratorFamily, n: int, z: float, *, method: str = "auto") -> float:
    """CDF of the one-dimensional marginal of the spherical law ``family`` in ``n`` dimensions."""
    fast = _fast_marginal(family, n) if method == "auto" else None
    if fast is not None:
        return float(fast.cdf(z))
    if z >= 0:
        return 1.0 - _std_upper_tail(family, n, z)
    return _std_upper_tail(family, n, -z)


def std_marginal_density(family: GeneratorFamily, n: int, z: float, *, method: str = "auto") -> float:
    fast = _fast_marginal(family, n) if method == "auto" else None
    if fast is not None:
        return float(fast.pdf(z))
    return _std_density(family, n, float(z))


@lru_cache(maxsize=4096)
def std_marginal_quantile(family: GeneratorFamily, n: int, level: float, *, method: str = "auto") -> float:
    """Quantile of the standardized marginal, solved to ``|CDF - level| < 1e-10``."""
    if not (0.0 < level < 1.0):
        raise DomainError(f"level must lie strictly between 0 and 1, got {level}")
    fast = _fast_marginal(family, n) if method == "auto" else None
    if fast is not None:
        return float(fast.ppf(level))
    if level == 0.5:
        return 0.0
    # solve on the lower side where the tail probability is computed directly
    target = min(level, 1.0 - level)
    sign = -1.0 if level < 0.5 else 1.0

    def resid(x):
        return _std_upper_tail(family, n, x) - target

    hi = BRACKET
    while resid(hi) > 0:
        hi *= 4.0
        if hi > 1e15:
            raise RootNotBracketed(f"could not bracket the {level} quantile")
    x = optimize.brentq(resid, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(resid(x)) > QUANTILE_TOL:
        raise RootNotBracketed(f"quantile solve stalled at residual {resid(x)}")
    return sign * x


def marginal_density(dist: EllipticalDist, k: int, x: float, *, method: str = "auto") -> float:
    """Density of the component ``X_k`` at ``x``."""
    _check_index(dist, k)
    s = math.sqrt(dist.sigma[k, k])
    return std_marginal_density(dist.family, dist.n, (x - dist.mu[k]) / s, method=method) / s


def marginal_cdf(dist: EllipticalDist, k: int, x: float, *, method: str = "auto") -> float:
    """Distribution function of the component ``X_k`` at ``x``."""
    _check_index(dist, k)
    if x == -np.inf:
        return 0.0
    if x == np.inf:
        return 1.0
    s = math.sqrt(dist.sigma[k, k])
    return std_marginal_cdf(dist.family, dist.n, (x - dist.mu[k]) / s, method=method)


def var_quantile(dist: EllipticalDist, k: int, level: float, *, method: str = "auto") -> float:
    """Value at risk ``VaR_level(X_k)``, the ``level`` quantile of the component ``X_k``."""
    _check_index(dist, k)
    z = std_marginal_quantile(dist.family, dist.n, level, method=method)
    return float(dist.mu[k] + math.sqrt(dist.sigma[k, k]) * z)


def var_bounds(dist: EllipticalDist, band: TruncationBand):
    """Componentwise VaR vectors ``x_p`` and ``x_q``; levels 0 and 1 map to -inf and +inf."""
    if band.n != dist.n:
        raise DimensionMismatch(f"band has {band.n} components, model has {dist.n}")
    x_p = np.array([-np.inf if p == 0 else var_quantile(dist, k, p) for k, p in enumerate(band.p)])
    x_q = np.array([np.inf if q == 1 else var_quantile(dist, k, q) for k, q in enumerate(band.q)])
    return x_p, x_q


def _standardize(dist: EllipticalDist, x: np.ndarray) -> np.ndarray:
    inf = np.isinf(x)
    if not inf.any():
        return dist.inv_sqrt_sigma @ (x - dist.mu)
    if inf.all() and np.all(x == x[0]):
        return x.copy()
    if dist.is_diagonal:
        return (x - dist.mu) / np.sqrt(np.diag(dist.sigma))
    raise DomainError(
        "a vector mixing finite VaR bounds with 0/1 limit markers has no finite standardized image "
        "under a non-diagonal scale matrix")


def standardize_band(dist: EllipticalDist, band: TruncationBand) -> StandardizedBand:
    """``eta_v = Sigma^{-1/2} (x_v - mu)`` for the VaR vectors of ``band``."""
    x_p, x_q = var_bounds(dist, band)
    return StandardizedBand(_standardize(dist, x_p), _standardize(dist, x_q))


def fit_normal_mle(samples) -> EllipticalDist:
    """Maximum-likelihood normal fit: sample mean and the 1/N sample covariance."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionMismatch("samples must be a matrix with one row per observation")
    big_n, n = x.shape
    if big_n < n + 1:
        raise InsufficientData(f"need at least {n + 1} rows to fit {n} columns, got {big_n}")
    if not np.all(np.isfinite(x)):
        raise DomainError("samples contain non-finite values")
    mu = x.mean(axis=0)
    d = x - mu
    sigma = d.T @ d / big_n
    w = np.linalg.eigvalsh(sigma)
    if w[-1] <= 0 or w[0] <= EIG_TOL * w[-1]:
        raise SingularCovariance("sample covariance is singular")
    return EllipticalDist(mu, sigma, GeneratorFamily.normal())


def pvii_from_t(t_dist: EllipticalDist) -> EllipticalDist:
    """Pearson VII law of ``mu + (Y - mu)/sqrt(m)`` for ``Y ~ St_n(mu, Sigma, m)``.

    The result has the same ``mu`` and ``Sigma`` and exponent ``t = (m + n)/2``.
    """
    if t_dist.family.name != "student_t":
        raise DimensionMismatch("pvii_from_t expects a Student-t model")
    t = 0.5 * (t_dist.family.shape + t_dist.n)
    return EllipticalDist(t_dist.mu, t_dist.sigma, GeneratorFamily.pearson7(t))
