"""Per-epoch graph construction: sampling, distance blocks, approximate
degree normalization, and the Gaussian-kernel affinity.

The full N x N affinity is never materialized; only the sample block
(n_s x n_s) and the complement block (c x n_s) are kept, so memory stays
O(N * n_s). Graph node order is: sample positions 0..n_s-1, then the
complement pixels in ascending pixel order at positions n_s..N-1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .raster_io import RasterImage

# Degrees at or below this are clamped to it; keeps constant images total.
EPS_DEGREE = 1e-300

PINV_RCOND = 1e-12


@dataclass(frozen=True)
class SampleSet:
    """Partition of pixel indices into Nystrom samples and their complement."""

    n_total: int
    sample_indices: np.ndarray
    complement_indices: np.ndarray
    seed: int

    def __post_init__(self):
        object.__setattr__(
            self, "sample_indices", np.asarray(self.sample_indices, dtype=np.int64)
        )
        object.__setattr__(
            self,
            "complement_indices",
            np.asarray(self.complement_indices, dtype=np.int64),
        )

    @property
    def n_s(self) -> int:
        return self.sample_indices.size

    @property
    def c(self) -> int:
        return self.complement_indices.size

    def graph_to_pixel(self) -> np.ndarray:
        """Pixel index for each graph position (length N)."""
        return np.concatenate([self.sample_indices, self.complement_indices])

    def pixel_to_graph(self) -> np.ndarray:
        """Graph position for each pixel index (inverse permutation)."""
        perm = self.graph_to_pixel()
        inv = np.empty(self.n_total, dtype=np.int64)
        inv[perm] = np.arange(self.n_total)
        return inv


@dataclass(frozen=True)
class DistanceBlocks:
    """Sample-sample (aa) and complement-sample (ab) distance blocks."""

    aa: np.ndarray  # (n_s, n_s), symmetric, zero diagonal
    ab: np.ndarray  # (c, n_s)


@dataclass(frozen=True)
class AffinityBlocks:
    """Blocks of the Nystrom-approximated normalized affinity matrix."""

    aa: np.ndarray  # (n_s, n_s), symmetric, unit diagonal after kernel
    ab: np.ndarray  # (c, n_s)

    @property
    def n_s(self) -> int:
        return self.aa.shape[0]

    @property
    def c(self) -> int:
        return self.ab.shape[0]


@dataclass
class GraphBuildStats:
    """Diagnostics from one per-epoch graph build."""

    clamped_degrees: int = 0


def sample_pixels(
    n_total: int, n_s: int, seed: int, strategy: str = "uniform-random"
) -> SampleSet:
    """Pick n_s sample pixels out of n_total.

    uniform-random draws without replacement from a seeded PCG64 generator
    (numpy default_rng), so the same arguments reproduce the same set on any
    platform. grid places samples on an evenly spaced lattice and ignores the
    seed.
    """
    if not 1 <= n_s <= n_total:
        raise ConfigError(f"n_s={n_s} must be in [1, {n_total}]")
    if strategy == "uniform-random":
        rng = np.random.default_rng(seed)
        samples = rng.choice(n_total, size=n_s, replace=False).astype(np.int64)
    elif strategy == "grid":
        samples = (np.arange(n_s, dtype=np.int64) * n_total) // n_s
    else:
        raise ConfigError(f"unknown sampling strategy {strategy!r}")
    complement = np.setdiff1d(np.arange(n_total, dtype=np.int64), samples)
    return SampleSet(
        n_total=n_total, sample_indices=samples, complement_indices=complement, seed=seed
    )


def pairwise_distances(
    image: RasterImage, s: SampleSet, ab_power: int = 3
) -> DistanceBlocks:
    """Intensity distance blocks.

    The sample-sample block uses plain |x_i - x_j|; the complement-sample
    block raises the distance to ab_power (default 3, matching the original
    method; pass 1 for the symmetric variant used by the dense oracle).
    """
    if s.n_total != image.n_pixels:
        raise ConfigError(
            f"sample set built for {s.n_total} pixels, image has {image.n_pixels}"
        )
    if ab_power not in (1, 3):
        raise ConfigError(f"ab_power must be 1 or 3, got {ab_power}")
    xs = image.data[s.sample_indices]
    xc = image.data[s.complement_indices]
    aa = np.abs(xs[:, None] - xs[None, :])
    ab = np.abs(xc[:, None] - xs[None, :])
    if ab_power != 1:
        ab = ab**ab_power
    return DistanceBlocks(aa=aa, ab=ab)


def approximate_degree(d: DistanceBlocks) -> tuple[np.ndarray, int]:
    """Nystrom row-sum degree approximation over the distance blocks.

    Sample rows use their exact row sums plus the observed complement column
    sums; complement rows add the completion term ab @ pinv(aa) @ colsum(ab)
    for the never-materialized complement-complement block. Returns the
    degree vector (length n_s + c) and the number of clamped entries.
    """
    n_s = d.aa.shape[0]
    col_b = d.ab.sum(axis=0)  # length n_s
    deg_samples = d.aa.sum(axis=1) + col_b
    if d.ab.shape[0] > 0:
        pinv_aa = np.linalg.pinv(d.aa, rcond=PINV_RCOND)
        deg_complement = d.ab.sum(axis=1) + d.ab @ (pinv_aa @ col_b)
        deg = np.concatenate([deg_samples, deg_complement])
    else:
        deg = deg_samples
    clamped = int(np.count_nonzero(deg <= EPS_DEGREE))
    deg = np.maximum(deg, EPS_DEGREE)
    return deg, clamped


def normalize_blocks(d: DistanceBlocks, deg: np.ndarray) -> DistanceBlocks:
    """Symmetric degree normalization of the distance blocks.

    Entry (i, j) is divided by sqrt(deg_i * deg_j); degrees must be strictly
    positive (clamping in approximate_degree guarantees this).
    """
    n_s = d.aa.shape[0]
    if deg.shape != (n_s + d.ab.shape[0],):
        raise ConfigError("degree vector length does not match the blocks")
    if np.any(deg <= 0):
        raise NumericalError("non-positive degree in normalization")
    inv_sqrt = 1.0 / np.sqrt(deg)
    # Scale rows then columns; zero entries stay zero even when the inverse
    # square roots are astronomically large (clamped degenerate degrees).
    aa = (d.aa * inv_sqrt[:n_s, None]) * inv_sqrt[None, :n_s]
    ab = (d.ab * inv_sqrt[n_s:, None]) * inv_sqrt[None, :n_s]
    return DistanceBlocks(aa=aa, ab=ab)


def gaussian_kernel(d: DistanceBlocks, sigma: float) -> AffinityBlocks:
    """Entrywise exp(-v^2 / (2 sigma^2)) on the normalized distances."""
    if not sigma > 0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    denom = 2.0 * sigma * sigma
    with np.errstate(over="ignore"):
        aa = np.exp(-(d.aa * d.aa) / denom)
        ab = np.exp(-(d.ab * d.ab) / denom)
    np.fill_diagonal(aa, 1.0)
    return AffinityBlocks(aa=aa, ab=ab)


def build_temporal_graph(
    image: RasterImage,
    s: SampleSet,
    sigma: float,
    ab_power: int = 3,
    stats: GraphBuildStats | None = None,
) -> AffinityBlocks:
    """Full per-epoch pipeline: distances, degree normalization, kernel."""
    d = pairwise_distances(image, s, ab_power=ab_power)
    deg, clamped = approximate_degree(d)
    if stats is not None:
        stats.clamped_degrees += clamped
    return gaussian_kernel(normalize_blocks(d, deg), sigma)
