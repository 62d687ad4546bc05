"""Density generators of the five elliptical families and their normalizing constants.

An elliptical law in ``n`` dimensions has density

    c_n / sqrt(|Sigma|) * g_n((x - mu)^T Sigma^{-1} (x - mu) / 2).

Besides the density generator ``g_n`` the truncated-moment formulas need its
upper integral ``Gbar_n(u) = int_u^inf g_n`` and the upper integral of that,
``Gbar2_n``.  Each one is itself a valid generator (after renormalisation) and
this module evaluates all three together with their normalizing constants.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import (
    DomainError,
    IntegralDiverged,
    NegativeArgument,
    ShapeConstraintViolated,
)

__all__ = [
    "FAMILY_NAMES",
    "GeneratorFamily",
    "GeneratorKind",
    "eval_generator",
    "log_eval_generator",
    "power_law_params",
    "norm_const",
    "generic_norm_const",
    "radial_integral",
    "lerch_zeta_star",
]

FAMILY_NAMES = ("normal", "student_t", "logistic", "laplace", "pearson7")
_SHAPED = {"student_t": "m", "pearson7": "t"}

# generic quadrature target
QUAD_RTOL = 1e-12


class GeneratorKind(enum.Enum):
    """Which member of the generator triple is meant."""

    G = "g"
    GBAR = "gbar"
    GBAR2 = "gbar2"

    @property
    def level(self) -> int:
        return {"g": 0, "gbar": 1, "gbar2": 2}[self.value]


@dataclass(frozen=True)
class GeneratorFamily:
    """One of the five named elliptical families.

    ``shape`` is the degrees of freedom ``m`` for ``student_t`` and the
    exponent ``t`` for ``pearson7``; it must be ``None`` for the others.
    Constraints that depend on the dimension (for instance ``m > 4`` for the
    double-cumulative constant) are checked when a quantity is requested, not
    here.
    """

    name: str
    shape: float | None = None

    def __post_init__(self):
        if self.name not in FAMILY_NAMES:
            raise DomainError(f"unknown family {self.name!r}; expected one of {FAMILY_NAMES}")
        if self.name in _SHAPED:
            if self.shape is None or not math.isfinite(self.shape) or self.shape <= 0:
                raise ShapeConstraintViolated(
                    f"{self.name} needs a positive shape parameter {_SHAPED[self.name]}"
                )
            object.__setattr__(self, "shape", float(self.shape))
        elif self.shape is not None:
            raise DomainError(f"{self.name} takes no shape parameter")

    @classmethod
    def normal(cls) -> "GeneratorFamily":
        return cls("normal")

    @classmethod
    def student_t(cls, m: float) -> "GeneratorFamily":
        return cls("student_t", m)

    @classmethod
    def logistic(cls) -> "GeneratorFamily":
        return cls("logistic")

    @classmethod
    def laplace(cls) -> "GeneratorFamily":
        return cls("laplace")

    @classmethod
    def pearson7(cls, t: float) -> "GeneratorFamily":
        return cls("pearson7", t)

    @property
    def is_power_law(self) -> bool:
        return self.name in _SHAPED

    def label(self) -> str:
        if self.shape is None:
            return self.name
        return f"{self.name}({_SHAPED[self.name]}={self.shape:g})"


def _check_kind_shape(family: GeneratorFamily, kind: GeneratorKind, n: int) -> None:
    """Reject generator levels whose closed form has a non-positive exponent or coefficient."""
    if n < 1:
        raise DomainError(f"dimension must be >= 1, got {n}")
    lvl = kind.level
    if family.name == "student_t":
        m = family.shape
        if lvl >= 1 and m + n - 2 <= 0:
            raise ShapeConstraintViolated(f"Gbar of Student-t needs m + n > 2 (m={m}, n={n})")
        if lvl >= 2 and m + n - 4 <= 0:
            raise ShapeConstraintViolated(f"Gbar2 of Student-t needs m + n > 4 (m={m}, n={n})")
    elif family.name == "pearson7":
        t = family.shape
        if t <= lvl:
            raise ShapeConstraintViolated(
                f"level-{lvl} cumulative generator of Pearson VII needs t > {lvl} (t={t})"
            )


def power_law_params(family: GeneratorFamily, kind: GeneratorKind, n: int):
    """Return ``(C, alpha, beta, gamma)`` with ``h(u) = C * (alpha + beta*u)**(-gamma)``.

    Only Student-t and Pearson VII generators have this form; other families
    return ``None``.
    """
    if not family.is_power_law:
        return None
    _check_kind_shape(family, kind, n)
    lvl = kind.level
    if family.name == "student_t":
        m = family.shape
        gamma = (m + n) / 2.0 - lvl
        coef = 1.0
        if lvl >= 1:
            coef *= m / (m + n - 2)
        if lvl >= 2:
            coef *= m / (m + n - 4)
        return coef, 1.0, 2.0 / m, gamma
    t = family.shape
    coef = 1.0
    if lvl >= 1:
        coef /= 2.0 * (t - 1)
    if lvl >= 2:
        coef /= 2.0 * (t - 2)
    return coef, 1.0, 2.0, t - lvl


def eval_generator(family: GeneratorFamily, kind: GeneratorKind, n: int, u):
    """Evaluate ``g_n``, ``Gbar_n`` or ``Gbar2_n`` at ``u >= 0`` (array-friendly)."""
    _check_kind_shape(family, kind, n)
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0) or np.any(np.isnan(u_arr)):
        raise NegativeArgument("generator argument must be a non-negative number")
    lvl = kind.level
    name = family.name
    with np.errstate(over="ignore", under="ignore"):
        if name == "normal":
            out = np.exp(-u_arr)
        elif name in _SHAPED:
            c, a, b, g = power_law_params(family, kind, n)
            out = c * (a + b * u_arr) ** (-g)
        elif name == "logistic":
            e = np.exp(-u_arr)
            if lvl == 0:
                out = e / (1.0 + e) ** 2
            elif lvl == 1:
                out = e / (1.0 + e)
            else:
                out = np.log1p(e)
        else:  # laplace; r = sqrt(2u) is exactly 0 at the origin so no 0*inf terms arise
            r = np.sqrt(2.0 * u_arr)
            er = np.exp(-r)
            if lvl == 0:
                out = er
            elif lvl == 1:
                out = (1.0 + r) * er
            else:
                out = (3.0 + 3.0 * r + r * r) * er
    if np.ndim(u) == 0:
        return float(out)
    return out


def log_eval_generator(family: GeneratorFamily, kind: GeneratorKind, n: int, u):
    """Natural log of :func:`eval_generator`, finite for arguments where the value underflows."""
    _check_kind_shape(family, kind, n)
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0) or np.any(np.isnan(u_arr)):
        raise NegativeArgument("generator argument must be a non-negative number")
    lvl = kind.level
    name = family.name
    with np.errstate(over="ignore", under="ignore", divide="ignore"):
        if name == "normal":
            out = -u_arr
        elif name in _SHAPED:
            c, a, b, g = power_law_params(family, kind, n)
            out = math.log(c) - g * np.log(a + b * u_arr)
        elif name == "logistic":
            e = np.exp(-u_arr)
            if lvl == 0:
                out = -u_arr - 2.0 * np.log1p(e)
            elif lvl == 1:
                out = -u_arr - np.log1p(e)
            else:
                # log(log1p(e)) = -u + log(log1p(e)/e); the ratio is 1 - e/2 + ... for small e
                ratio = np.where(e > 1e-8, np.log1p(e) / np.where(e > 0, e, 1.0), 1.0 - 0.5 * e)
                out = -u_arr + np.log(ratio)
        else:
            r = np.sqrt(2.0 * u_arr)
            if lvl == 0:
                out = -r
            elif lvl == 1:
                out = np.log1p(r) - r
            else:
                out = np.log(3.0 + 3.0 * r + r * r) - r
    if np.ndim(u) == 0:
        return float(out)
    return out


def lerch_zeta_star(kappa: float, z: float, s: float, a: float, *, tol: float = 1e-14,
                    max_terms: int = 1_000_000) -> float:
    """Generalised Hurwitz-Lerch zeta ``Psi*_kappa(z, s, a)``.

    Sums ``(1/Gamma(kappa)) sum_k Gamma(kappa+k)/k! z^k / (k+a)^s`` until the
    tail bound drops under ``tol``.  When the series cannot get there within
    ``max_terms`` (for example ``z = -1`` with small ``s``, where the terms
    decay only algebraically or even grow) the integral representation

        Psi* = 1/Gamma(s) int_0^inf t^{s-1} e^{-a t} (1 - z e^{-t})^{-kappa} dt

    is used instead.
    """
    if not (kappa > 0 and s > 0 and a > 0):
        raise DomainError("lerch_zeta_star needs kappa > 0, s > 0, a > 0")
    if not (-1.0 <= z < 1.0):
        raise DomainError("lerch_zeta_star needs -1 <= z < 1")
    if z == 0.0:
        return a ** (-s)

    def log_abs_term(k):
        k = np.asarray(k, dtype=float)
        lz = k * math.log(abs(z)) if z != 0 else 0.0
        return (special.gammaln(kappa + k) - special.gammaln(kappa) - special.gammaln(k + 1)
                + lz - s * np.log(k + a))

    # term ratio tends to |z|; for |z| < 1 the tail beyond k is bounded by a
    # geometric series once the ratio has settled below (1 + |z|)/2
    def tail_bound(k):
        t_k = math.exp(float(log_abs_term(k)))
        if z < 0 and _terms_decreasing(kappa, abs(z), s, a, k):
            return t_k
        if abs(z) < 1:
            r = _ratio(kappa, abs(z), s, a, k)
            if r < 1:
                return t_k * r / (1 - r)
        return math.inf

    if tail_bound(max_terms) > tol * 1e-3:
        return _lerch_integral(kappa, z, s, a)

    total = 0.0
    chunk = 4096
    start = 0
    while start < max_terms:
        k = np.arange(start, start + chunk, dtype=float)
        terms = np.exp(log_abs_term(k))
        if z < 0:
            terms = terms * np.where(k % 2 == 0, 1.0, -1.0)
        total += math.fsum(terms)
        start += chunk
        if tail_bound(start) < tol * max(abs(total), 1e-300):
            return total
    return _lerch_integral(kappa, z, s, a)


def _ratio(kappa, az, s, a, k):
    return az * (kappa + k) / (k + 1) * ((k + a) / (k + 1 + a)) ** s


def _terms_decreasing(kappa, az, s, a, k):
    # the term ratio is monotone in k for large k; check it is below 1 from here on
    return _ratio(kappa, az, s, a, k) < 1 and _ratio(kappa, az, s, a, 10 * k + 10) < 1


def _lerch_integral(kappa, z, s, a):
    def f(t):
        return math.exp(-a * t) * (1.0 - z * math.exp(-t)) ** (-kappa)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            # algebraic weight handles the t^{s-1} endpoint behaviour exactly
            head, _ = integrate.quad(f, 0.0, 1.0, weight="alg", wvar=(s - 1.0, 0.0),
                                     epsabs=0.0, epsrel=1e-13, limit=200)
            tail, _ = integrate.quad(lambda t: t ** (s - 1.0) * f(t), 1.0, math.inf,
                                     epsabs=0.0, epsrel=1e-13, limit=200)
        except integrate.IntegrationWarning as exc:
            raise IntegralDiverged(f"Lerch zeta integral did not converge: {exc}") from exc
    return (head + tail) / math.gamma(s)


def _closed_norm_const(family: GeneratorFamily, kind: GeneratorKind, n: int) -> float:
    lvl = kind.level
    name = family.name
    half = n / 2.0
    if name == "normal":
        return (2 * math.pi) ** (-half)
    if name == "student_t":
        m = family.shape
        need = (0, 2, 4)[lvl]
        if m <= need:
            raise ShapeConstraintViolated(
                f"Student-t constant at level {lvl} needs m > {need} (m={m})")
        if lvl == 0:
            return math.exp(special.gammaln((m + n) / 2) - special.gammaln(m / 2)) / (m * math.pi) ** half
        if lvl == 1:
            return ((m + n - 2) * math.gamma(half)
                    / ((m * math.pi) ** half * m * special.beta(half, (m - 2) / 2)))
        return ((m + n - 2) * (m + n - 4) * math.gamma(half)
                / ((m * math.pi) ** half * m * m * special.beta(half, (m - 4) / 2)))
    if name == "logistic":
        pre = (2 * math.pi) ** (-half)
        if lvl == 0:
            return pre / lerch_zeta_star(2, -1.0, half, 1.0)
        if lvl == 1:
            return pre / lerch_zeta_star(1, -1.0, half, 1.0)
        return pre / lerch_zeta_star(1, -1.0, half + 1, 1.0)
    if name == "laplace":
        base = math.gamma(half) / (2 * math.pi ** half)
        if lvl == 0:
            return base / math.gamma(n)
        if lvl == 1:
            return base * n / math.gamma(n + 2)
        return base * n * (n + 2) / math.gamma(n + 4)
    # pearson7
    t = family.shape
    if t <= half + lvl:
        raise ShapeConstraintViolated(
            f"Pearson VII constant at level {lvl} needs t > {lvl} + n/2 (t={t}, n={n})")
    if lvl == 0:
        return math.exp(special.gammaln(t) - special.gammaln(t - half)) / math.pi ** half
    if lvl == 1:
        return math.gamma(half) * 2 * (t - 1) / (math.pi ** half * special.beta(half, t - 1 - half))
    return (math.gamma(half) * 4 * (t - 1) * (t - 2)
            / (math.pi ** half * special.beta(half, t - 2 - half)))


def norm_const(family: GeneratorFamily, kind: GeneratorKind, n: int) -> float:
    """Closed-form ``c_n``, ``c_n*`` or ``c_n**`` of ``family`` in dimension ``n``."""
    _check_kind_shape(family, kind, n)
    return _closed_norm_const(family, kind, n)


def radial_integral(h: Callable[[float], float], m: int) -> float:
    """``int_0^inf s^{m/2-1} h(s) ds``, computed as ``2^{1-m/2} int_0^inf r^{m-1} h(r^2/2) dr``.

    The substitution ``s = r^2/2`` removes the ``s^{-1/2}`` endpoint singularity
    at ``m = 1`` and turns the integrand into the radial profile.
    """
    if m < 1:
        raise DomainError("radial_integral needs m >= 1")

    def f(r):
        return r ** (m - 1) * h(0.5 * r * r)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            parts = [integrate.quad(f, lo, hi, epsabs=0.0, epsrel=QUAD_RTOL, limit=400)
                     for lo, hi in ((0.0, 2.0), (2.0, 16.0), (16.0, math.inf))]
        except integrate.IntegrationWarning as exc:
            raise IntegralDiverged(f"radial integral did not converge: {exc}") from exc
    total = sum(p[0] for p in parts)
    err = sum(p[1] for p in parts)
    if not math.isfinite(total) or total <= 0 or err > 1e-8 * total:
        raise IntegralDiverged(f"radial integral unreliable (value={total}, err={err})")
    return 2.0 ** (1.0 - m / 2.0) * total


def generic_norm_const(h: Callable[[float], float], m: int) -> float:
    """Normalizing constant of the generator ``h`` in ``m`` dimensions by quadrature."""
    return math.gamma(m / 2.0) / (2 * math.pi) ** (m / 2.0) / radial_integral(h, m)
