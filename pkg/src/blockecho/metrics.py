"""Normalization and evaluation metrics.

Data is min-max scaled into [eps, 1] using observed cells only (per column
by default, since columns typically carry different units). Two RMSE
variants over the missing cells are reported side by side:

* ``rmse_standard``  = sqrt(sum(err^2) / count)
* ``rmse_paper_form`` = sqrt(sum(err^2)) / count

The second divides the Frobenius norm by the missing-cell count itself
rather than its square root; some published tables use that convention, so
both are emitted and ``rmse_standard`` is the default in reports.
"""

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import EvaluationError, ShapeError, SpecError, ValidationError
from .kernel import as_matrix

EPS_NORM = 1e-3  # lower edge of the normalized range; keeps KL away from 0


@dataclass
class NormParams:
    """Affine column maps fitted on observed cells; invertible where max > min.

    Degenerate columns (constant or fully missing) fall back to the global
    observed span so transform/inverse stay bijective; their observed values
    land exactly on eps.
    """

    col_min: np.ndarray
    col_span: np.ndarray          # per-column max - min, with fallback applied
    degenerate: np.ndarray        # bool per column
    eps: float
    per_column: bool

    def transform(self, x) -> np.ndarray:
        x = as_matrix(x)
        if x.shape[1] != self.col_min.size:
            raise ShapeError(f"matrix has {x.shape[1]} columns, params have {self.col_min.size}")
        return self.eps + (1.0 - self.eps) * (x - self.col_min) / self.col_span

    def inverse(self, xn) -> np.ndarray:
        xn = as_matrix(xn)
        if xn.shape[1] != self.col_min.size:
            raise ShapeError(f"matrix has {xn.shape[1]} columns, params have {self.col_min.size}")
        return self.col_min + (xn - self.eps) * self.col_span / (1.0 - self.eps)


def normalize(x, mask, eps=EPS_NORM, per_column=True):
    """Map observed entries into [eps, 1]; returns (matrix, NormParams).

    Missing cells of the returned matrix hold the 0.0 sentinel.
    """
    x = as_matrix(x)
    mask = as_matrix(mask)
    if x.shape != mask.shape:
        raise ShapeError(f"data {x.shape} != mask {mask.shape}")
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise ValidationError("mask entries must be exactly 0 or 1")
    if not 0.0 <= eps < 1.0:
        raise ValidationError(f"eps must lie in [0, 1), got {eps}")
    obs = mask > 0
    if not obs.any():
        raise SpecError("cannot normalize a matrix with no observed entries")
    if not np.all(np.isfinite(x[obs])):
        raise ValidationError("observed entries must be finite")

    n = x.shape[1]
    xo = np.where(obs, x, np.nan)
    counts = obs.sum(axis=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns handled below
        col_min = np.nanmin(xo, axis=0)
        col_max = np.nanmax(xo, axis=0)
    gmin = float(np.min(x[obs]))
    gmax = float(np.max(x[obs]))
    gspan = gmax - gmin if gmax > gmin else 1.0

    degenerate = (counts == 0) | ~(col_max > col_min)
    col_min = np.where(counts == 0, gmin, col_min)
    span = np.where(degenerate, gspan, col_max - col_min)
    if not per_column:
        col_min = np.full(n, gmin)
        span = np.full(n, gspan)
        degenerate = np.zeros(n, dtype=bool)

    params = NormParams(col_min, span, degenerate, float(eps), per_column)
    out = np.where(obs, params.transform(x), 0.0)
    return out, params


class RmsePair(NamedTuple):
    standard: float
    paper_form: float


def rmse_missing(imputed, truth, mask) -> RmsePair:
    """Both RMSE conventions over the missing (mask == 0) cells."""
    imputed = as_matrix(imputed)
    truth = as_matrix(truth)
    mask = as_matrix(mask)
    if not imputed.shape == truth.shape == mask.shape:
        raise ShapeError(
            f"shape mismatch: imputed {imputed.shape}, truth {truth.shape}, mask {mask.shape}"
        )
    miss = mask == 0
    count = int(miss.sum())
    if count == 0:
        raise EvaluationError("no missing cells to evaluate")
    err = imputed[miss] - truth[miss]
    sq = float(np.sum(err * err))
    return RmsePair(np.sqrt(sq / count), np.sqrt(sq) / count)


def wmape(pred, actual) -> float:
    """Sum of absolute errors over sum of absolute actuals."""
    pred = as_matrix(pred)
    actual = as_matrix(actual)
    if pred.shape != actual.shape:
        raise ShapeError(f"pred {pred.shape} != actual {actual.shape}")
    denom = float(np.sum(np.abs(actual)))
    if denom == 0.0:
        raise EvaluationError("reference values are all zero; WMAPE undefined")
    return float(np.sum(np.abs(pred - actual)) / denom)
