"""One-shot orthogonalized Nystrom eigendecomposition of the fused graph,
eigen-image extraction, and a dense reference pipeline for desk-scale
verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .graph import EPS_DEGREE, AffinityBlocks, SampleSet
from .raster_io import RasterImage

# Eigenvalues of the jittered sample block below this (relative to the
# largest) use the pseudo-inverse branch of the inverse square root.
SQRT_RCOND = 1e-12

# Columns of the orthogonalization matrix with eigenvalues at or below this
# fraction of the largest are dropped as rank-deficient.
DROP_RCOND = 1e-14

DENSE_GUARD = 4096


@dataclass(frozen=True)
class EigenSystem:
    """Approximate orthogonal eigenvectors of the fused graph, graph order."""

    vectors: np.ndarray = field(repr=False)  # (n_s + c, r) columns orthonormal
    values: np.ndarray  # (r,) descending
    n_s: int
    c: int
    jitter: float = 0.0
    dropped: int = 0

    @property
    def n_retained(self) -> int:
        return self.values.size


def _fix_column_signs(vectors: np.ndarray) -> np.ndarray:
    """Force the largest-magnitude entry of each column positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def orthogonal_nystrom(g: AffinityBlocks) -> EigenSystem:
    """Orthogonal eigenvectors of the Nystrom-approximated fused affinity.

    The sample block is symmetrized and, if not positive definite, jittered
    by eps*I before its square roots are taken. The eigenvectors come from
    the thin SVD of the stacked matrix V = [A^{1/2}; ab A^{-1/2}]: its left
    singular vectors equal V U_s Lambda_s^{-1/2} for the Gram matrix
    S = V^T V = A + A^{-1/2} B B^T A^{-1/2}, but stay orthonormal to machine
    precision even when S is ill-conditioned. Eigenvalues are the squared
    singular values; near-zero ones are dropped with their columns.
    """
    n_s = g.n_s
    if n_s < 1:
        raise ConfigError("empty sample block")
    if not np.any(g.aa) and not np.any(g.ab):
        raise NumericalError("degenerate graph: all-zero affinity")
    if np.max(np.abs(g.aa - g.aa.T)) > 1e-12:
        raise NumericalError("sample affinity block is not symmetric")
    A = 0.5 * (g.aa + g.aa.T)

    if g.c == 0:
        # Full sampling: the approximation degenerates to the exact
        # decomposition of the (possibly indefinite) fused matrix itself.
        vals, vecs = np.linalg.eigh(A)
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
        if vals[0] <= 0:
            raise NumericalError("degenerate graph: no positive spectrum")
        keep = vals > DROP_RCOND * vals[0]
        return EigenSystem(
            vectors=_fix_column_signs(vecs[:, keep]),
            values=vals[keep],
            n_s=n_s,
            c=0,
            jitter=0.0,
            dropped=int(np.count_nonzero(~keep)),
        )

    evals, Q = np.linalg.eigh(A)
    lam_max = evals[-1]
    if lam_max <= 0:
        raise NumericalError("degenerate graph: sample block has no positive spectrum")
    # The fused min can leave A indefinite; pseudo square roots project those
    # directions out instead of inflating them (recorded as jitter applied).
    jitter = max(0.0, -evals[0])
    pos = evals > SQRT_RCOND * lam_max
    sqrt_vals = np.where(pos, np.sqrt(np.maximum(evals, 0.0)), 0.0)
    inv_sqrt = np.where(pos, 1.0 / np.sqrt(np.maximum(evals, EPS_DEGREE)), 0.0)
    A_half = (Q * sqrt_vals) @ Q.T
    A_inv_half = (Q * inv_sqrt) @ Q.T

    M = g.ab @ A_inv_half  # (c, n_s)
    V = np.vstack([A_half, M])
    U_hat, sing, _ = np.linalg.svd(V, full_matrices=False)
    s_vals = sing * sing  # eigenvalues of S = V^T V, already descending
    if s_vals[0] <= 0:
        raise NumericalError("degenerate graph: orthogonalization matrix not positive")
    keep = s_vals > DROP_RCOND * s_vals[0]
    dropped = int(np.count_nonzero(~keep))
    return EigenSystem(
        vectors=_fix_column_signs(U_hat[:, keep]),
        values=s_vals[keep],
        n_s=n_s,
        c=g.c,
        jitter=jitter,
        dropped=dropped,
    )


def eigen_image(
    e: EigenSystem, index: int, s: SampleSet, width: int, height: int
) -> RasterImage:
    """Scatter one eigenvector from graph order back to raster layout.

    The result is min-max scaled to [0, 1]; a constant column maps to 0.5
    everywhere.
    """
    if not 0 <= index < e.n_retained:
        raise ConfigError(f"eigenvector index {index} out of range (0..{e.n_retained - 1})")
    if s.n_total != width * height:
        raise ConfigError(
            f"sample set covers {s.n_total} pixels, raster is {width}x{height}"
        )
    col = e.vectors[:, index]
    img = np.empty(s.n_total)
    img[s.graph_to_pixel()] = col
    lo, hi = img.min(), img.max()
    if hi > lo:
        img = (img - lo) / (hi - lo)
    else:
        img = np.full_like(img, 0.5)
    return RasterImage(width=width, height=height, data=img)


def dense_normalized_affinity(image: RasterImage, sigma: float) -> np.ndarray:
    """Dense per-epoch graph: power-1 distances, exact degrees, kernel."""
    x = image.data
    D = np.abs(x[:, None] - x[None, :])
    deg = np.maximum(D.sum(axis=1), EPS_DEGREE)
    inv_sqrt = 1.0 / np.sqrt(deg)
    Dn = (D * inv_sqrt[:, None]) * inv_sqrt[None, :]
    with np.errstate(over="ignore"):
        W = np.exp(-(Dn * Dn) / (2.0 * sigma * sigma))
    np.fill_diagonal(W, 1.0)
    return W


def dense_reference_pipeline(
    pre: RasterImage, post: RasterImage, sigma1: float, sigma2: float
) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """Exact dense analogue of the full fusion pipeline (test oracle).

    Distances use power 1 everywhere (the complement-block cubing has no
    dense analogue). Returns the fused N x N matrix plus its exact
    eigensystem (values descending, sign-fixed vectors in pixel order).
    Guarded to N <= 4096.
    """
    if pre.n_pixels != post.n_pixels:
        raise ConfigError("epoch images differ in size")
    if pre.n_pixels > DENSE_GUARD:
        raise ConfigError(
            f"dense reference limited to N <= {DENSE_GUARD}, got {pre.n_pixels}"
        )
    W1 = dense_normalized_affinity(pre, sigma1)
    W2 = dense_normalized_affinity(post, sigma2)
    W_f = np.minimum(W1, W2)
    vals, vecs = np.linalg.eigh(W_f)
    order = np.argsort(vals)[::-1]
    return W_f, (vals[order], _fix_column_signs(vecs[:, order]))
