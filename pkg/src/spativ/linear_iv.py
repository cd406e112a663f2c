"""Linear instrumental-variable estimators on a decomposed exposure.

Three strategies produce the exposure coefficient from an exposure split
A = a_c + a_uc: regress the outcome on the small-scale component alone
(``fit_2sls``), on both components (``fit_2sri``), or residualize outcome and
exposure on the same basis and regress residual on residual
(``fit_double_prediction``). When the basis spans the constant these give
identical coefficients in finite samples; the equivalence is a test target,
not an implementation shortcut, so each strategy is computed by its own
regression.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .basis import ExposureDecomposition, SpatialBasis, ZeroInstrumentWarning, decompose
from .numkernel import least_squares

__all__ = [
    "IvFit",
    "ZeroInstrumentVariance",
    "BasisWithoutConstant",
    "fit_2sls",
    "fit_2sri",
    "fit_double_prediction",
]

STRATEGY_2SLS = "TwoSLS"
STRATEGY_2SRI = "TwoSRI"
STRATEGY_DOUBLE_PREDICTION = "DoublePrediction"

_MIN_VARIANCE_SHARE = 1e-12


class ZeroInstrumentVariance(ValueError):
    """The small-scale component has no variance; the coefficient is unidentified."""


class BasisWithoutConstant(ValueError):
    """Double prediction requires the constant vector in the basis span so
    both residual vectors are centered."""


@dataclass(frozen=True)
class IvFit:
    beta: float
    intercept: float
    strategy: str
    instrument_variance_share: float


def _check_instrument(dec: ExposureDecomposition) -> float:
    share = dec.instrument_variance_share
    if float(np.var(dec.a_uc)) <= 0.0 or share < _MIN_VARIANCE_SHARE:
        raise ZeroInstrumentVariance(
            "instrument variance share is "
            f"{share:.3e}; exposure is collinear with the basis"
        )
    return share


def fit_2sls(y, dec: ExposureDecomposition) -> IvFit:
    """Regress the outcome on [1, a_uc]; beta is Cov(y, a_uc)/Var(a_uc)."""
    y = np.asarray(y, dtype=float)
    share = _check_instrument(dec)
    design = np.column_stack([np.ones_like(dec.a_uc), dec.a_uc])
    fit = least_squares(design, y)
    return IvFit(
        beta=float(fit.coefficients[1]),
        intercept=float(fit.coefficients[0]),
        strategy=STRATEGY_2SLS,
        instrument_variance_share=share,
    )


def fit_2sri(y, dec: ExposureDecomposition) -> IvFit:
    """Regress the outcome on [1, a_uc, a_c]; beta is the a_uc coefficient."""
    y = np.asarray(y, dtype=float)
    share = _check_instrument(dec)
    design = np.column_stack([np.ones_like(dec.a_uc), dec.a_uc, dec.a_c])
    fit = least_squares(design, y)
    return IvFit(
        beta=float(fit.coefficients[1]),
        intercept=float(fit.coefficients[0]),
        strategy=STRATEGY_2SRI,
        instrument_variance_share=share,
    )


def fit_double_prediction(y, a, basis: SpatialBasis) -> IvFit:
    """Residualize outcome and exposure on the basis, then regress residuals.

    The intercept of the final regression is reported but is ~0 by
    construction: both residual vectors are orthogonal to the constant.
    """
    if not basis.includes_constant:
        raise BasisWithoutConstant(
            "double prediction needs the constant in the basis span"
        )
    y = np.asarray(y, dtype=float)
    a = np.asarray(a, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ZeroInstrumentWarning)
        dec_a = decompose(a, basis)
        dec_y = decompose(y, basis)
    share = _check_instrument(dec_a)
    design = np.column_stack([np.ones_like(dec_a.a_uc), dec_a.a_uc])
    fit = least_squares(design, dec_y.a_uc)
    return IvFit(
        beta=float(fit.coefficients[1]),
        intercept=float(fit.coefficients[0]),
        strategy=STRATEGY_DOUBLE_PREDICTION,
        instrument_variance_share=share,
    )
