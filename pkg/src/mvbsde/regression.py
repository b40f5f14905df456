"""Laguerre regression bases and the least-squares projection step.

The backward solver projects conditional expectations onto a small
Laguerre basis evaluated at the standardized factor value.  Raw factor
levels can sit far from the Laguerre scale (Problem-A-like models have
means near 28), so each time slice carries its own affine standardization
fitted from the cross-section.  Rank-deficient designs (degenerate
cross-sections near the initial time) are handled by a truncated-SVD
pseudo-inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Basis", "LsqFit", "eval_basis", "fit_standardization", "lsq_solve"]

SVD_CUTOFF = 1e-10


@dataclass(frozen=True)
class Basis:
    """Laguerre basis of given size with an affine input map."""

    size: int
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("basis size must be >= 1")
        if not self.scale > 0.0:
            raise ValueError("standardization scale must be positive")


@dataclass(frozen=True)
class LsqFit:
    coefficients: np.ndarray
    residual_norm: float
    condition_diag: float  # smallest retained singular value

    def __post_init__(self):
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("non-finite regression coefficients")


def fit_standardization(sample, size: int) -> Basis:
    """Basis whose input map centers/scales the cross-sectional sample.

    A degenerate cross-section (all paths at the same value, e.g. t = 0)
    gets unit scale; the SVD truncation in lsq_solve absorbs the
    resulting column collinearity.
    """
    x = np.asarray(sample, dtype=float)
    loc = float(np.mean(x))
    scale = float(np.std(x))
    # summation noise makes the std of a constant column ~1e-15, not 0
    if not scale > 1e-12 * max(abs(loc), 1.0):
        scale = 1.0
    return Basis(size=size, loc=loc, scale=scale)


def eval_basis(basis: Basis, x) -> np.ndarray:
    """Rows [L_0(z), ..., L_{K-1}(z)] at z = (x - loc)/scale.

    Three-term recurrence: L_0 = 1, L_1 = 1 - z,
    (k+1) L_{k+1} = (2k+1-z) L_k - k L_{k-1}.
    """
    z = (np.atleast_1d(np.asarray(x, dtype=float)) - basis.loc) / basis.scale
    out = np.empty((z.shape[0], basis.size))
    out[:, 0] = 1.0
    if basis.size > 1:
        out[:, 1] = 1.0 - z
    for k in range(1, basis.size - 1):
        out[:, k + 1] = ((2 * k + 1 - z) * out[:, k] - k * out[:, k - 1]) / (k + 1)
    return out


def lsq_solve(design, target) -> LsqFit:
    """Minimum-norm least squares via SVD with relative truncation.

    Singular values below SVD_CUTOFF times the largest are dropped, so
    duplicated or nearly collinear columns yield finite coefficients
    instead of blowing up.
    """
    a = np.asarray(design, dtype=float)
    b = np.asarray(target, dtype=float)
    if a.ndim != 2 or b.ndim != 1 or a.shape[0] != b.shape[0]:
        raise ValueError("design must be 2-D with rows matching target")
    if a.shape[0] < a.shape[1]:
        raise ValueError("need at least as many samples as regressors")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    keep = s > SVD_CUTOFF * s[0]
    s_kept = s[keep]
    coef = vt[keep].T @ ((u[:, keep].T @ b) / s_kept)
    resid = b - a @ coef
    return LsqFit(
        coefficients=coef,
        residual_norm=float(np.linalg.norm(resid)),
        condition_diag=float(s_kept[-1]) if s_kept.size else 0.0,
    )
