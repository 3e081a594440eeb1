"""Change-bearing eigenvector selection by mutual information and
binarization of the selected eigen-image; also hosts the classical
Kittler-Illingworth baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .graph import SampleSet
from .raster_io import ChangeMask, RasterImage
from .spectral import EigenSystem, eigen_image

DEFAULT_MI_BINS = 64
THRESHOLD_BINS = 256


@dataclass(frozen=True)
class MICurve:
    """Mutual information (nats) of each eigen-image against the difference
    image, plus the winning index (ties go to the smallest index)."""

    values: np.ndarray
    selected: int


def difference_image(pre: RasterImage, post: RasterImage, mode: str = "abs") -> RasterImage:
    """Per-pixel difference of the two epochs, min-max scaled to [0, 1].

    mode "abs" takes |post - pre| (default); "signed" keeps the sign before
    scaling. A constant difference maps to all zeros.
    """
    if (pre.width, pre.height) != (post.width, post.height):
        raise ConfigError(
            f"epoch size mismatch: {pre.width}x{pre.height} vs {post.width}x{post.height}"
        )
    if mode not in ("abs", "signed"):
        raise ConfigError(f"unknown difference mode {mode!r}")
    d = post.data - pre.data
    if mode == "abs":
        d = np.abs(d)
    lo, hi = d.min(), d.max()
    d = (d - lo) / (hi - lo) if hi > lo else np.zeros_like(d)
    return RasterImage(width=pre.width, height=pre.height, data=d)


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def mutual_information(a: RasterImage, b: RasterImage, bins: int = DEFAULT_MI_BINS) -> float:
    """MI in nats from a bins x bins joint histogram over [0, 1]^2.

    Computed as H(a) + H(b) - H(a, b), which equals the usual
    sum p log(p / (px py)) with the 0 log 0 = 0 convention and makes
    MI(a, a) = H(a) hold exactly in floating point.
    """
    if bins < 2:
        raise ConfigError(f"bins must be >= 2, got {bins}")
    if a.n_pixels == 0 or (a.width, a.height) != (b.width, b.height):
        raise ConfigError("mutual information needs two same-sized non-empty images")
    joint, _, _ = np.histogram2d(a.data, b.data, bins=bins, range=[[0, 1], [0, 1]])
    joint /= joint.sum()
    return _entropy(joint.sum(axis=1)) + _entropy(joint.sum(axis=0)) - _entropy(joint.ravel())


def otsu_threshold(values: np.ndarray, bins: int = THRESHOLD_BINS) -> float:
    """Otsu threshold over a histogram binned across the data range.

    Returns the bin edge maximizing between-class variance (first maximum on
    ties); values >= the threshold form the upper class. Binning over
    [min, max] makes the split invariant to increasing affine rescaling.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = values.min(), values.max()
    if hi <= lo:
        raise NumericalError("no separable classes: constant input")
    hist, edges = np.histogram(values, bins=bins, range=(lo, hi))
    p = hist / hist.sum()
    centers = 0.5 * (edges[:-1] + edges[1:])
    w0 = np.cumsum(p)[:-1]  # weight of classes below each interior edge
    w1 = 1.0 - w0
    m0 = np.cumsum(p * centers)[:-1]
    mu_total = float(np.sum(p * centers))
    with np.errstate(invalid="ignore", divide="ignore"):
        mu0 = m0 / w0
        mu1 = (mu_total - m0) / w1
        var_between = w0 * w1 * (mu0 - mu1) ** 2
    var_between[~np.isfinite(var_between)] = -np.inf
    k = int(np.argmax(var_between))
    return float(edges[k + 1])


def threshold_map(eig_img: RasterImage, diff: RasterImage) -> ChangeMask:
    """Binarize an eigen-image with Otsu and orient polarity by the
    difference image: the class with the higher mean difference is labeled
    changed (ties: the upper class). Pixels at the threshold go up."""
    if (eig_img.width, eig_img.height) != (diff.width, diff.height):
        raise ConfigError("eigen-image and difference image sizes differ")
    t = otsu_threshold(eig_img.data)
    upper = eig_img.data >= t
    mean_up = diff.data[upper].mean() if upper.any() else -np.inf
    mean_lo = diff.data[~upper].mean() if (~upper).any() else -np.inf
    changed = upper if mean_up >= mean_lo else ~upper
    return ChangeMask(width=eig_img.width, height=eig_img.height, data=changed)


def select_eigenvector(
    e: EigenSystem,
    diff: RasterImage,
    s: SampleSet,
    bins: int = DEFAULT_MI_BINS,
    mi_on: str = "raw",
) -> MICurve:
    """Score every retained eigenvector by MI against the difference image.

    mi_on "raw" scores the continuous eigen-image; "thresholded" binarizes
    each candidate first. Candidates that cannot be scored (constant
    eigen-image in thresholded mode) get -inf and are never selected.
    """
    if e.n_retained == 0:
        raise NumericalError("no retained eigenvectors to select from")
    if mi_on not in ("raw", "thresholded"):
        raise ConfigError(f"unknown mi_on mode {mi_on!r}")
    mi = np.empty(e.n_retained)
    for i in range(e.n_retained):
        img = eigen_image(e, i, s, diff.width, diff.height)
        if mi_on == "thresholded":
            try:
                mask = threshold_map(img, diff)
            except NumericalError:
                mi[i] = -np.inf
                continue
            img = RasterImage(
                width=img.width, height=img.height, data=mask.data.astype(np.float64)
            )
        mi[i] = mutual_information(img, diff, bins=bins)
    if not np.any(np.isfinite(mi)):
        raise NumericalError("no scorable eigenvectors")
    return MICurve(values=mi, selected=int(np.argmax(mi)))


def ki_threshold(diff: RasterImage, bins: int = THRESHOLD_BINS) -> ChangeMask:
    """Kittler-Illingworth minimum-error threshold of the difference image.

    Assumes two Gaussian classes over a 256-bin histogram on [0, 1] and
    scans every cut point for the minimum of the error criterion; the upper
    class is labeled changed.
    """
    values = diff.data
    hist, edges = np.histogram(values, bins=bins, range=(0.0, 1.0))
    h = hist.astype(np.float64)
    centers = 0.5 * (edges[:-1] + edges[1:])
    c = np.cumsum(h)
    m = np.cumsum(h * centers)
    sq = np.cumsum(h * centers * centers)
    n = c[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        var_f = sq / c - (m / c) ** 2
        cb = n - c
        var_b = (sq[-1] - sq) / cb - ((m[-1] - m) / cb) ** 2
        p = c / n
        J = (
            p * np.log(np.sqrt(var_f))
            + (1 - p) * np.log(np.sqrt(var_b))
            - p * np.log(p)
            - (1 - p) * np.log(1 - p)
        )
    J = J[:-1]  # a cut must leave both classes non-empty
    J[~np.isfinite(J)] = np.inf
    if not np.any(np.isfinite(J)):
        raise NumericalError("degenerate single-class histogram")
    k = int(np.argmin(J))
    changed = values >= edges[k + 1]
    return ChangeMask(width=diff.width, height=diff.height, data=changed)
