"""Doubly truncated risk measures for multivariate elliptical distributions."""

from .generators import GeneratorFamily, GeneratorKind, eval_generator, norm_const
from .integrate import Rectangle, rectangle_prob
from .measures import (
    band_moments,
    dte,
    dtv,
    mdtccov,
    mdtcorr,
    mdtcov,
    mdte,
    mtce,
    mtcov,
    risk_report,
)
from .model import (
    EllipticalDist,
    StandardizedBand,
    TruncationBand,
    fit_normal_mle,
    pvii_from_t,
    standardize_band,
    var_quantile,
)
from .oracle import oracle_band_moments, oracle_direct_moments, sample_spherical

__version__ = "0.1.0"

__all__ = [
    "GeneratorFamily", "GeneratorKind", "eval_generator", "norm_const",
    "Rectangle", "rectangle_prob",
    "band_moments", "dte", "dtv", "mdte", "mdtcov", "mdtcorr", "mdtccov", "mtce", "mtcov", "risk_report",
    "EllipticalDist", "TruncationBand", "StandardizedBand", "standardize_band", "var_quantile",
    "fit_normal_mle", "pvii_from_t",
    "sample_spherical", "oracle_band_moments", "oracle_direct_moments",
]
