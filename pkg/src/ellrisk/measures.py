"""Doubly truncated expectation and covariance measures of elliptical laws.

Everything is computed for the spherical vector ``Y = Sigma^{-1/2}(X - mu)``
restricted to the standardized rectangle ``[eta_p, eta_q]`` and mapped back
with the symmetric root ``Sigma^{1/2}``.

With ``c_n`` the density constant, the building blocks are

* ``F = P(eta_p < Y < eta_q)``;
* ``A_{v,k} = c_n int Gbar_n(t^T t/2 + eta_{v,k}^2/2) dt`` over the rectangle
  with coordinate ``k`` removed, so that ``E[Y_k; band] = A_{p,k} - A_{q,k}``;
* ``B_{uv,ij} = c_n int Gbar2_n(t^T t/2 + eta_{u,i}^2/2 + eta_{v,j}^2/2) dt``
  over the rectangle with coordinates ``i`` and ``j`` removed, giving
  ``E[Y_i Y_j; band] = B_pp - B_pq - B_qp + B_qq``;
* ``E[Y_i^2; band] = eta_{p,i} A_{p,i} - eta_{q,i} A_{q,i} + (c_n/c_n*) F*``
  where ``F*`` is the band probability under the ``Gbar_n`` density.

Terms attached to an infinite bound vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVariance, DimensionMismatch, DomainError, EmptyBand
from .generators import GeneratorFamily, GeneratorKind, generic_norm_const, eval_generator, norm_const
from .integrate import (
    DEFAULT_SEED,
    Rectangle,
    SphericalDensitySpec,
    make_spec,
    parallel_map,
    rectangle_prob,
)
from .model import (
    EllipticalDist,
    StandardizedBand,
    TruncationBand,
    standardize_band,
    std_marginal_quantile,
)

__all__ = [
    "BandMoments",
    "RiskReport",
    "band_moments",
    "dte",
    "dtv",
    "standardized_mdte",
    "mdte",
    "mdtcov",
    "mdtcorr",
    "mdtccov",
    "mtce",
    "mtcov",
    "risk_report",
    "MEASURES",
]

MEASURES = ("dte", "dtv", "mdte", "mdtcov", "mdtcorr", "mdtccov", "mtce", "mtcov")
EMPTY_BAND_TOL = 1e-12
G, GBAR, GBAR2 = GeneratorKind.G, GeneratorKind.GBAR, GeneratorKind.GBAR2


@dataclass
class BandMoments:
    """Moments of the spherical ``Y`` on a standardized rectangle.

    ``mean`` and ``second`` are conditional on the band; ``delta`` is the
    unnormalized first moment ``E[Y; band]``.  Every quantity carries an
    absolute integration-error estimate.
    """

    prob: float
    prob_err: float
    delta: np.ndarray
    delta_err: np.ndarray
    mean: np.ndarray
    mean_err: np.ndarray
    second: np.ndarray | None = None
    second_err: np.ndarray | None = None

    @property
    def upsilon(self) -> np.ndarray:
        """Conditional covariance of ``Y`` on the band."""
        return self.second - np.outer(self.mean, self.mean)

    @property
    def upsilon_err(self) -> np.ndarray:
        m = np.abs(self.mean)
        return self.second_err + np.outer(self.mean_err, m) + np.outer(m, self.mean_err)


def _density_const(family: GeneratorFamily, n: int, method: str) -> float:
    if method == "generic":
        return generic_norm_const(lambda s: eval_generator(family, G, n, s), n)
    return norm_const(family, G, n)


def _job(family, n, kind, shift, m, lo, hi, scale_num, method, seed):
    """One rectangle integral ``scale_num * int h(t^T t/2 + shift)`` over ``[lo, hi]``.

    The density is normalized with its own shifted constant ``c`` and the
    result multiplied by ``scale_num / c``, which mirrors the ``c_n / c*``
    ratios of the closed-form expressions.
    """
    return dict(family=family, n=n, kind=kind, shift=float(shift), m=m, lo=np.asarray(lo, float),
                hi=np.asarray(hi, float), scale=scale_num, method=method, seed=seed)


def _run(job, accuracy):
    const_method = "quadrature" if job["method"] == "generic" else "auto"
    spec = make_spec(job["family"], job["n"], job["kind"], job["shift"], job["m"], method=const_method)
    rect_method = "auto"
    if job["method"] == "generic" and spec.m >= 1:
        rect_method = "cubature" if spec.m <= 3 else "rqmc"
    res = rectangle_prob(spec, Rectangle(job["lo"], job["hi"]) if spec.m else Rectangle.full(0),
                         accuracy, seed=job["seed"], method=rect_method)
    ratio = job["scale"] / spec.norm_const
    return ratio * res.value, abs(ratio) * res.error, res.converged


def band_moments(family: GeneratorFamily, n: int, eta_p, eta_q, *, second: bool = True,
                 accuracy: float | None = None, seed=DEFAULT_SEED, method: str = "closed") -> BandMoments:
    """First (and optionally second) moments of the spherical law on ``[eta_p, eta_q]``.

    ``method="closed"`` uses closed-form constants and the fastest rectangle
    integrator; ``method="generic"`` uses quadrature for every constant and
    cubature or RQMC for every rectangle, as an independent cross-check.
    """
    if method not in ("closed", "generic"):
        raise DomainError(f"unknown method {method!r}")
    band = StandardizedBand(eta_p, eta_q)
    if band.n != n:
        raise DimensionMismatch(f"band has {band.n} components, expected {n}")
    lo, hi = band.eta_p, band.eta_q
    c_n = _density_const(family, n, method)
    ss = np.random.SeedSequence(seed)

    def seed_for(i):
        return int(ss.spawn(i + 1)[-1].generate_state(1)[0]) if method == "generic" else seed

    jobs = [_job(family, n, G, 0.0, n, lo, hi, c_n, method, seed_for(0))]
    a_index = {}
    for k in range(n):
        keep = [i for i in range(n) if i != k]
        for v, eta in (("p", lo[k]), ("q", hi[k])):
            if math.isfinite(eta):
                a_index[(v, k)] = len(jobs)
                jobs.append(_job(family, n, GBAR, 0.5 * eta * eta, n - 1, lo[keep], hi[keep], c_n,
                                 method, seed_for(len(jobs))))
    b_index = {}
    star_index = None
    if second:
        star_index = len(jobs)
        # normalized by c_n* inside _run, so this yields (c_n / c_n*) F*
        jobs.append(_job(family, n, GBAR, 0.0, n, lo, hi, c_n, method, seed_for(len(jobs))))
        for i in range(n):
            for j in range(i + 1, n):
                keep = [r for r in range(n) if r not in (i, j)]
                for u, ei in (("p", lo[i]), ("q", hi[i])):
                    for v, ej in (("p", lo[j]), ("q", hi[j])):
                        if math.isfinite(ei) and math.isfinite(ej):
                            b_index[(u, v, i, j)] = len(jobs)
                            jobs.append(_job(family, n, GBAR2, 0.5 * (ei * ei + ej * ej), n - 2,
                                             lo[keep], hi[keep], c_n, method, seed_for(len(jobs))))
    results = parallel_map(lambda jb: _run(jb, accuracy), jobs)
    prob, prob_err, _ = results[0]
    if prob < EMPTY_BAND_TOL:
        raise EmptyBand(f"band probability {prob:.3e} is below {EMPTY_BAND_TOL}")

    def a_val(v, k):
        idx = a_index.get((v, k))
        return (0.0, 0.0) if idx is None else results[idx][:2]

    delta = np.zeros(n)
    delta_err = np.zeros(n)
    for k in range(n):
        ap, ape = a_val("p", k)
        aq, aqe = a_val("q", k)
        delta[k] = ap - aq
        delta_err[k] = ape + aqe
    mean = delta / prob
    mean_err = delta_err / prob + np.abs(mean) * prob_err / prob
    out = BandMoments(prob, prob_err, delta, delta_err, mean, mean_err)
    if not second:
        return out

    e2 = np.zeros((n, n))
    e2_err = np.zeros((n, n))
    fstar, fstar_err, _ = results[star_index]
    for i in range(n):
        ap, ape = a_val("p", i)
        aq, aqe = a_val("q", i)
        tp = lo[i] * ap if math.isfinite(lo[i]) else 0.0
        tq = hi[i] * aq if math.isfinite(hi[i]) else 0.0
        e2[i, i] = tp - tq + fstar
        e2_err[i, i] = (abs(lo[i]) * ape if math.isfinite(lo[i]) else 0.0) + \
                       (abs(hi[i]) * aqe if math.isfinite(hi[i]) else 0.0) + fstar_err
        for j in range(i + 1, n):
            val = 0.0
            err = 0.0
            for u, su in (("p", 1.0), ("q", -1.0)):
                for v, sv in (("p", 1.0), ("q", -1.0)):
                    idx = b_index.get((u, v, i, j))
                    if idx is not None:
                        val += su * sv * results[idx][0]
                        err += results[idx][1]
            e2[i, j] = e2[j, i] = val
            e2_err[i, j] = e2_err[j, i] = err
    out.second = e2 / prob
    out.second_err = e2_err / prob + np.abs(out.second) * prob_err / prob
    return out


# --------------------------------------------------------------------------
# univariate measures

def _marginal_eta(dist: EllipticalDist, p: float, q: float):
    band = TruncationBand([p], [q])
    p, q = band.p[0], band.q[0]
    eta_p = -np.inf if p == 0 else std_marginal_quantile(dist.family, dist.n, p)
    eta_q = np.inf if q == 1 else std_marginal_quantile(dist.family, dist.n, q)
    lo = np.full(dist.n, -np.inf)
    hi = np.full(dist.n, np.inf)
    lo[0], hi[0] = eta_p, eta_q
    return lo, hi


def _check_component(dist: EllipticalDist, k: int):
    if not (0 <= k < dist.n):
        raise DimensionMismatch(f"component index {k} out of range for n={dist.n}")


def dte(dist: EllipticalDist, p: float, q: float, k: int = 0, *, accuracy=None, seed=DEFAULT_SEED,
        method: str = "closed", return_error: bool = False):
    """Doubly truncated expectation ``E[X_k | VaR_p(X_k) < X_k < VaR_q(X_k)]``.

    ``p = 0`` and ``q = 1`` mean an unbounded side; ``q = 1`` gives the tail
    conditional expectation.
    """
    _check_component(dist, k)
    lo, hi = _marginal_eta(dist, p, q)
    bm = band_moments(dist.family, dist.n, lo, hi, second=False, accuracy=accuracy, seed=seed,
                      method=method)
    s = math.sqrt(dist.sigma[k, k])
    val = float(dist.mu[k] + s * bm.mean[0])
    return (val, float(s * bm.mean_err[0])) if return_error else val


def dtv(dist: EllipticalDist, p: float, q: float, k: int = 0, *, accuracy=None, seed=DEFAULT_SEED,
        method: str = "closed", return_error: bool = False):
    """Doubly truncated variance of ``X_k``: conditional second moment minus squared conditional mean."""
    _check_component(dist, k)
    lo, hi = _marginal_eta(dist, p, q)
    bm = band_moments(dist.family, dist.n, lo, hi, second=True, accuracy=accuracy, seed=seed,
                      method=method)
    s2 = float(dist.sigma[k, k])
    val = s2 * float(bm.upsilon[0, 0])
    err = s2 * float(bm.upsilon_err[0, 0])
    val = max(val, 0.0)
    return (val, err) if return_error else val


# --------------------------------------------------------------------------
# multivariate measures

def standardized_mdte(dist: EllipticalDist, band: StandardizedBand, *, accuracy=None,
                      seed=DEFAULT_SEED, method: str = "closed") -> np.ndarray:
    """Conditional mean of ``Y`` on the standardized rectangle."""
    return band_moments(dist.family, dist.n, band.eta_p, band.eta_q, second=False,
                        accuracy=accuracy, seed=seed, method=method).mean


def _moments(dist, band, second, accuracy, seed, method):
    if band.n != dist.n:
        raise DimensionMismatch(f"band has {band.n} components, model has {dist.n}")
    sband = standardize_band(dist, band)
    return band_moments(dist.family, dist.n, sband.eta_p, sband.eta_q, second=second,
                        accuracy=accuracy, seed=seed, method=method)


def _mdte_from(dist, bm):
    s = dist.sqrt_sigma
    return dist.mu + s @ bm.mean, np.abs(s) @ bm.mean_err


def _mdtcov_from(dist, bm):
    s = dist.sqrt_sigma
    cov = s @ bm.upsilon @ s
    err = np.abs(s) @ bm.upsilon_err @ np.abs(s)
    return 0.5 * (cov + cov.T), 0.5 * (err + err.T)


def _corr_from(cov, err):
    d = np.diag(cov)
    if np.any(d <= 0):
        raise DegenerateVariance(f"non-positive truncated variance on the diagonal: {d.tolist()}")
    sd = np.sqrt(d)
    corr = cov / np.outer(sd, sd)
    np.fill_diagonal(corr, 1.0)
    # first-order propagation, ignoring the diagonal's own error correlation
    cerr = err / np.outer(sd, sd) + 0.5 * np.abs(corr) * (
        np.add.outer(np.diag(err) / d, np.diag(err) / d))
    np.fill_diagonal(cerr, 0.0)
    return corr, cerr


def _ccov_from(mdte_v, mdte_e, cov, cov_e, mu):
    d = mdte_v - mu
    # MDTCov + m m^T - m mu^T - mu m^T + mu mu^T collapses to MDTCov + d d^T
    return cov + np.outer(d, d), cov_e + np.outer(mdte_e, np.abs(d)) + np.outer(np.abs(d), mdte_e)


def mdte(dist: EllipticalDist, band: TruncationBand, *, accuracy=None, seed=DEFAULT_SEED,
         method: str = "closed", return_error: bool = False):
    """Multivariate doubly truncated expectation ``mu + Sigma^{1/2} E[Y | band]``."""
    bm = _moments(dist, band, False, accuracy, seed, method)
    val, err = _mdte_from(dist, bm)
    return (val, err) if return_error else val


def mdtcov(dist: EllipticalDist, band: TruncationBand, *, accuracy=None, seed=DEFAULT_SEED,
           method: str = "closed", return_error: bool = False):
    """Multivariate doubly truncated covariance ``Sigma^{1/2} Upsilon Sigma^{1/2}``."""
    bm = _moments(dist, band, True, accuracy, seed, method)
    val, err = _mdtcov_from(dist, bm)
    return (val, err) if return_error else val


def mdtcorr(dist: EllipticalDist, band: TruncationBand, *, accuracy=None, seed=DEFAULT_SEED,
            method: str = "closed", return_error: bool = False):
    """Correlation matrix of the doubly truncated covariance; unit diagonal."""
    cov, err = mdtcov(dist, band, accuracy=accuracy, seed=seed, method=method, return_error=True)
    corr, cerr = _corr_from(cov, err)
    return (corr, cerr) if return_error else corr


def mdtccov(dist: EllipticalDist, band: TruncationBand, *, accuracy=None, seed=DEFAULT_SEED,
            method: str = "closed", return_error: bool = False):
    """Truncated second moment centred at the unconditional mean ``mu``."""
    bm = _moments(dist, band, True, accuracy, seed, method)
    m, me = _mdte_from(dist, bm)
    cov, ce = _mdtcov_from(dist, bm)
    val, err = _ccov_from(m, me, cov, ce, dist.mu)
    return (val, err) if return_error else val


def _tail_band(dist, p):
    p = np.broadcast_to(np.asarray(p, dtype=float), (dist.n,))
    return TruncationBand(p, np.ones(dist.n))


def mtce(dist: EllipticalDist, p, **kw):
    """Multivariate tail conditional expectation: ``mdte`` with every ``q_k = 1``."""
    return mdte(dist, _tail_band(dist, p), **kw)


def mtcov(dist: EllipticalDist, p, **kw):
    """Multivariate tail covariance: ``mdtcov`` with every ``q_k = 1``."""
    return mdtcov(dist, _tail_band(dist, p), **kw)


# --------------------------------------------------------------------------
# reports

@dataclass
class RiskReport:
    """Requested measures for one model and band, with integration-error diagnostics."""

    family: str
    band: TruncationBand
    seed: int
    band_prob: float | None = None
    values: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    @property
    def mdte(self):
        return self.values.get("mdte")

    @property
    def mdtcov(self):
        return self.values.get("mdtcov")

    @property
    def mdtcorr(self):
        return self.values.get("mdtcorr")

    @property
    def diagnostics(self) -> dict:
        return dict(self.errors)

    def records(self) -> list[dict]:
        out = []
        for name, val in self.values.items():
            out.append({
                "measure": name,
                "value": _jsonable(val),
                "error_estimate": _jsonable(self.errors[name]),
                "band": self.band.to_dict(),
                "family": self.family,
                "seed": self.seed,
            })
        return out

    def to_dict(self) -> dict:
        return {"band_prob": self.band_prob, "results": self.records()}


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    return float(x)


def risk_report(dist: EllipticalDist, band: TruncationBand, measures=("mdte",), *, accuracy=None,
                seed=DEFAULT_SEED) -> RiskReport:
    """Compute the named ``measures`` sharing one set of band integrals.

    ``dte`` and ``dtv`` are reported per component using that component's
    ``(p_k, q_k)``; ``mtce`` and ``mtcov`` use the ``p`` levels only.
    """
    bad = [m for m in measures if m not in MEASURES]
    if bad:
        raise DomainError(f"unknown measure(s) {bad}; choose from {MEASURES}")
    if band.n != dist.n:
        raise DimensionMismatch(f"band has {band.n} components, model has {dist.n}")
    rep = RiskReport(dist.family.label(), band, int(seed) if seed is not None else None)
    kw = dict(accuracy=accuracy, seed=seed)
    need_second = any(m in measures for m in ("mdtcov", "mdtcorr", "mdtccov"))
    if any(m in measures for m in ("mdte", "mdtcov", "mdtcorr", "mdtccov")):
        bm = _moments(dist, band, need_second, accuracy, seed, "closed")
        rep.band_prob = bm.prob
        m, me = _mdte_from(dist, bm)
        if need_second:
            cov, ce = _mdtcov_from(dist, bm)
    for name in measures:
        if name == "mdte":
            rep.values[name], rep.errors[name] = m, me
        elif name == "mdtcov":
            rep.values[name], rep.errors[name] = cov, ce
        elif name == "mdtcorr":
            rep.values[name], rep.errors[name] = _corr_from(cov, ce)
        elif name == "mdtccov":
            rep.values[name], rep.errors[name] = _ccov_from(m, me, cov, ce, dist.mu)
        elif name in ("dte", "dtv"):
            fn = dte if name == "dte" else dtv
            pairs = [fn(dist, band.p[k], band.q[k], k, return_error=True, **kw) for k in range(dist.n)]
            rep.values[name] = np.array([v for v, _ in pairs])
            rep.errors[name] = np.array([e for _, e in pairs])
        elif name == "mtce":
            rep.values[name], rep.errors[name] = mtce(dist, band.p, return_error=True, **kw)
        else:
            rep.values[name], rep.errors[name] = mtcov(dist, band.p, return_error=True, **kw)
    return rep
