"""Masked nonnegative matrix factorization under KL divergence.

Approximates the observed cells of X by U @ V with U (m x h) and V (h x n)
strictly positive, minimizing

    F = sum over observed (i,j) of  x*log(x/xhat) - x + xhat,

the generalized KL divergence (the x = 0 term is taken at its limit, xhat).
Factors are fitted by alternating multiplicative updates

    u_ia <- u_ia * (sum_j m_ij v_aj x_ij / xhat_ij) / (sum_j m_ij v_aj)

and symmetrically for V. Each half-update minimizes an auxiliary upper
bound of F that is tight at the current iterate, so F never increases; the
loss trace of every run is checked against that guarantee in the tests.

This pre-training stage produces the anchor embeddings consumed by the
adversarial imputer, and doubles as the plain matrix factorization
baseline (impute with U @ V directly).
"""

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SpecError, ValidationError
from .kernel import as_matrix, make_rng
from .masking import MaskedMatrix

EPS_FLOOR = 1e-8  # positivity floor keeping KL and the updates defined

DEFAULT_MAX_ITERS = 2000
DEFAULT_TOL = 1e-6


@dataclass
class FactorPair:
    """Row embeddings U (m x h) and column embeddings V (h x n), entries >= EPS_FLOOR."""

    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        self.U = as_matrix(self.U)
        self.V = as_matrix(self.V)
        if self.U.shape[1] != self.V.shape[0]:
            raise SpecError(f"U is {self.U.shape}, V is {self.V.shape}: inner dims differ")
        if self.U.shape[1] < 1:
            raise SpecError("rank h must be at least 1")
        if np.min(self.U) < EPS_FLOOR or np.min(self.V) < EPS_FLOOR:
            raise ValidationError(f"factor entries must be >= {EPS_FLOOR}")

    @property
    def h(self):
        return self.U.shape[1]


@dataclass
class MfTrace:
    losses: list        # loss before any update, then after each full (U, V) update
    iterations: int
    converged: bool


def kl_loss(x, xhat, mask) -> float:
    """Generalized KL divergence over observed cells (x = 0 contributes xhat)."""
    x = as_matrix(x)
    xhat = as_matrix(xhat)
    mask = as_matrix(mask)
    if not x.shape == xhat.shape == mask.shape:
        raise SpecError(f"shape mismatch: x {x.shape}, xhat {xhat.shape}, mask {mask.shape}")
    obs = mask > 0
    xv = x[obs]
    xh = xhat[obs]
    if np.any(xv < 0):
        raise ValidationError(
            "observed values must be nonnegative; run metrics.normalize first"
        )
    if np.any(xh <= 0):
        raise ValidationError("estimates must be strictly positive for the KL loss")
    terms = xh - xv
    pos = xv > 0
    terms[pos] += xv[pos] * np.log(xv[pos] / xh[pos])
    return float(terms.sum())


def _dead_axis_warning(kind, count):
    warnings.warn(
        f"{count} {kind} have no observed entries; their factors are left unchanged",
        RuntimeWarning,
        stacklevel=3,
    )


def mu_step(x, mask, factors: FactorPair) -> FactorPair:
    """One alternating multiplicative update of U then V on observed cells.

    Rows/columns without any observed entry have a zero update denominator;
    those factor rows are left unchanged (and flagged with a warning).
    """
    x = as_matrix(x)
    mask = as_matrix(mask)
    U, V = factors.U, factors.V
    xo = np.where(mask > 0, x, 0.0)

    xhat = U @ V
    ratio = np.where(mask > 0, xo / xhat, 0.0)
    numer = ratio @ V.T
    denom = mask @ V.T
    mult = np.divide(numer, denom, out=np.ones_like(numer), where=denom > 0)
    dead_rows = int(np.sum(~(denom > 0).any(axis=1)))
    if dead_rows:
        _dead_axis_warning("rows", dead_rows)
    U2 = np.maximum(U * mult, EPS_FLOOR)

    xhat = U2 @ V
    ratio = np.where(mask > 0, xo / xhat, 0.0)
    numer = U2.T @ ratio
    denom = U2.T @ mask
    mult = np.divide(numer, denom, out=np.ones_like(numer), where=denom > 0)
    dead_cols = int(np.sum(~(denom > 0).any(axis=0)))
    if dead_cols:
        _dead_axis_warning("columns", dead_cols)
    V2 = np.maximum(V * mult, EPS_FLOOR)

    return FactorPair(U2, V2)


def init_factors(x, mask, h, seed) -> FactorPair:
    """Uniform [0.1, 1.1] factors rescaled so mean(U @ V) matches the observed
    mean, which puts the first update multipliers near 1."""
    x = as_matrix(x)
    mask = as_matrix(mask)
    if h < 1:
        raise SpecError(f"rank h must be at least 1, got {h}")
    rng = make_rng(seed)
    m, n = x.shape
    U = rng.uniform(0.1, 1.1, size=(m, h))
    V = rng.uniform(0.1, 1.1, size=(h, n))
    obs = mask > 0
    target = float(np.mean(x[obs])) if obs.any() else 1.0
    current = float(np.mean(U @ V))
    if target > 0 and current > 0:
        scale = np.sqrt(target / current)
        U *= scale
        V *= scale
    return FactorPair(np.maximum(U, EPS_FLOOR), np.maximum(V, EPS_FLOOR))


def pretrain(xm: MaskedMatrix, h, max_iters=DEFAULT_MAX_ITERS, tol=DEFAULT_TOL, seed=0):
    """Run mu_step until relative loss improvement < tol or max_iters.

    Rows or columns without a single observed entry receive no updates, so
    after the loop their factors are replaced by the average live embedding:
    the factorization then predicts the average row/column profile there
    instead of its random initialization. Returns (FactorPair, MfTrace);
    deterministic for a given seed.
    """
    x, mask = xm.values, xm.mask
    if not (mask > 0).any():
        raise SpecError("cannot factorize: the mask has no observed entries")
    if np.any(x[mask > 0] < 0):
        raise ValidationError("observed values must be nonnegative; normalize first")
    factors = init_factors(x, mask, h, seed)
    losses = [kl_loss(x, factors.U @ factors.V, mask)]
    converged = False
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # dead axes handled below
        for _ in range(max_iters):
            factors = mu_step(x, mask, factors)
            losses.append(kl_loss(x, factors.U @ factors.V, mask))
            prev, cur = losses[-2], losses[-1]
            if prev <= 0 or (prev - cur) / prev < tol:
                converged = True
                break
    dead_rows = mask.sum(axis=1) == 0
    dead_cols = mask.sum(axis=0) == 0
    if dead_rows.any() and not dead_rows.all():
        factors.U[dead_rows] = factors.U[~dead_rows].mean(axis=0)
    if dead_cols.any() and not dead_cols.all():
        factors.V[:, dead_cols] = factors.V[:, ~dead_cols].mean(axis=1, keepdims=True)
    return factors, MfTrace(losses, iterations=len(losses) - 1, converged=converged)


def mf_impute(factors: FactorPair) -> np.ndarray:
    """The plain factorization estimate U @ V (the MF baseline's output)."""
    return factors.U @ factors.V


def save_factors(factors: FactorPair, out_dir, meta: dict | None = None):
    """U and V as CSV plus a JSON metadata sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    np.savetxt(out_dir / "U.csv", factors.U, delimiter=",", fmt="%.17g")
    np.savetxt(out_dir / "V.csv", factors.V, delimiter=",", fmt="%.17g")
    info = {"h": factors.h, "rows": factors.U.shape[0], "cols": factors.V.shape[1]}
    if meta:
        info.update(meta)
    with open(out_dir / "factors.json", "w") as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_factors(out_dir) -> FactorPair:
    out_dir = Path(out_dir)
    U = np.loadtxt(out_dir / "U.csv", delimiter=",", ndmin=2)
    V = np.loadtxt(out_dir / "V.csv", delimiter=",", ndmin=2)
    return FactorPair(U, V)
