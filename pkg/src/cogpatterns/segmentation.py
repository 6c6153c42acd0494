"""Raster segmentation of the 2-D embedding.

Samples are binned into a pixel grid; the occupied-pixel mask (optionally
smoothed by binary closing) is segmented by growing each marker through
iterated geodesic dilation until fixpoint, which on a binary mask yields the
connected component containing the marker. Pixel regions map back to samples
to produce the cluster assignment and its CN/MCI census.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import (
    ConfigError,
    InternalConsistencyError,
    InvalidMarkerError,
    ParameterError,
)

NOISE = -1

_STRUCTURE_8 = np.ones((3, 3), dtype=bool)
_STRUCTURE_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class RasterConfig:
    resolution: int = 512
    margin_frac: float = 0.02
    closing_radius: int = 2

    def __post_init__(self):
        if self.resolution < 2:
            raise ConfigError("raster resolution must be >= 2")
        if self.margin_frac < 0:
            raise ConfigError("margin_frac must be >= 0")
        if self.closing_radius < 0:
            raise ConfigError("closing_radius must be >= 0")


@dataclass(frozen=True)
class RasterGrid:
    width: int
    height: int
    bounds: tuple[float, float, float, float]  # x_min, x_max, y_min, y_max
    mask: np.ndarray           # (height, width) bool, after optional closing
    count: np.ndarray          # (height, width) samples per pixel
    sample_rows: np.ndarray    # (n,) pixel row per sample
    sample_cols: np.ndarray    # (n,) pixel col per sample
    pixel_samples: dict = field(repr=False)  # (row, col) -> list of sample idx


@dataclass(frozen=True)
class Marker:
    pixel: tuple[int, int]     # (row, col)
    source: str = "manual"


@dataclass(frozen=True)
class ClusterCensus:
    cluster: int
    cn: int
    mci: int

    @property
    def total(self) -> int:
        return self.cn + self.mci


@dataclass(frozen=True)
class ClusterAssignment:
    cluster_of: np.ndarray     # (n,) cluster index, NOISE for unassigned
    n_clusters: int
    census: tuple[ClusterCensus, ...]

    @property
    def noise_count(self) -> int:
        return int(np.sum(self.cluster_of == NOISE))


def _disc(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.ogrid[-r : r + 1, -r : r + 1]
    return (yy * yy + xx * xx) <= r * r


def rasterize(coords: np.ndarray, cfg: RasterConfig) -> RasterGrid:
    """Bin embedding coordinates into a square pixel grid.

    Bounds are the data bounds expanded by ``margin_frac`` per side (or by one
    unit when an axis is degenerate). Closing (dilation then erosion with a
    disc) smooths the mask only; per-pixel sample lists are unaffected.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 1:
        raise ParameterError("coords must be a non-empty (n, 2) matrix")
    res = cfg.resolution
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    pad = np.where(hi > lo, (hi - lo) * cfg.margin_frac, 1.0)
    lo = lo - pad
    hi = hi + pad
    cols = np.floor((coords[:, 0] - lo[0]) / (hi[0] - lo[0]) * res).astype(np.int64)
    rows = np.floor((coords[:, 1] - lo[1]) / (hi[1] - lo[1]) * res).astype(np.int64)
    np.clip(cols, 0, res - 1, out=cols)
    np.clip(rows, 0, res - 1, out=rows)

    count = np.zeros((res, res), dtype=np.int32)
    np.add.at(count, (rows, cols), 1)
    occupied = count > 0

    mask = occupied
    if cfg.closing_radius > 0:
        structure = _disc(cfg.closing_radius)
        pad_px = cfg.closing_radius + 1
        work = np.pad(occupied, pad_px)
        work = ndimage.binary_dilation(work, structure=structure)
        work = ndimage.binary_erosion(work, structure=structure)
        mask = work[pad_px:-pad_px, pad_px:-pad_px] | occupied

    pixel_samples: dict = {}
    for i, (r, c) in enumerate(zip(rows, cols)):
        pixel_samples.setdefault((int(r), int(c)), []).append(i)

    return RasterGrid(
        width=res,
        height=res,
        bounds=(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])),
        mask=mask,
        count=count,
        sample_rows=rows.astype(np.int32),
        sample_cols=cols.astype(np.int32),
        pixel_samples=pixel_samples,
    )


def marker_from_xy(x: float, y: float, grid: RasterGrid) -> Marker:
    """Convert embedding coordinates to a manual marker pixel."""
    x_min, x_max, y_min, y_max = grid.bounds
    col = int(np.floor((x - x_min) / (x_max - x_min) * grid.width))
    row = int(np.floor((y - y_min) / (y_max - y_min) * grid.height))
    if not (0 <= row < grid.height and 0 <= col < grid.width):
        raise InvalidMarkerError(f"marker ({x}, {y}) falls outside the grid bounds")
    marker = Marker(pixel=(row, col), source="manual")
    if not grid.mask[row, col]:
        raise InvalidMarkerError(
            f"marker ({x}, {y}) -> pixel ({row}, {col}) is on background"
        )
    return marker


def reconstruct(marker: Marker, grid: RasterGrid, connectivity: int = 8) -> set:
    """Region-grow the marker under the mask by iterated geodesic dilation.

    For a binary mask the fixpoint equals the connectivity-connected component
    of the mask containing the marker. Returns the region as a set of
    (row, col) pixels.
    """
    if connectivity not in (4, 8):
        raise ParameterError("connectivity must be 4 or 8")
    r, c = marker.pixel
    if not (0 <= r < grid.height and 0 <= c < grid.width):
        raise InvalidMarkerError(f"marker pixel {marker.pixel} outside the grid")
    if not grid.mask[r, c]:
        raise InvalidMarkerError(f"marker pixel {marker.pixel} is on background")
    structure = _STRUCTURE_8 if connectivity == 8 else _STRUCTURE_4
    region = np.zeros_like(grid.mask)
    region[r, c] = True
    size = 1
    while True:
        region = ndimage.binary_dilation(region, structure=structure) & grid.mask
        new_size = int(region.sum())
        if new_size == size:
            break
        size = new_size
    rr, cc = np.nonzero(region)
    return {(int(a), int(b)) for a, b in zip(rr, cc)}


def auto_markers(grid: RasterGrid) -> list[Marker]:
    """One marker per 8-connected mask component: its highest-count pixel.

    Ties on the count resolve to the smallest (row, col) in row-major order.
    """
    if not grid.mask.any():
        raise ParameterError("mask is empty; nothing to mark")
    labels, n_components = ndimage.label(grid.mask, structure=_STRUCTURE_8)
    markers = []
    for comp in range(1, n_components + 1):
        rr, cc = np.nonzero(labels == comp)  # row-major order
        best = int(np.argmax(grid.count[rr, cc]))
        markers.append(Marker(pixel=(int(rr[best]), int(cc[best])), source="auto"))
    return markers


def assign_clusters(
    grid: RasterGrid,
    regions: list,
    labels: np.ndarray,
    min_cluster_size: int | None = None,
) -> ClusterAssignment:
    """Map samples to regions and build the per-cluster CN/MCI census.

    Regions must be pairwise disjoint pixel sets. Regions holding fewer than
    ``min_cluster_size`` samples become noise, as do samples outside every
    region. Clusters are re-indexed by descending sample count.
    """
    labels = np.asarray(labels)
    n = len(grid.sample_rows)
    if min_cluster_size is None:
        min_cluster_size = max(10, int(np.ceil(0.005 * n)))

    owner = np.full((grid.height, grid.width), NOISE, dtype=np.int32)
    for ridx, region in enumerate(regions):
        for (r, c) in region:
            if owner[r, c] != NOISE:
                raise InternalConsistencyError(
                    f"pixel ({r}, {c}) belongs to regions {owner[r, c]} and {ridx}"
                )
            owner[r, c] = ridx

    raw = owner[grid.sample_rows, grid.sample_cols]
    sizes = [int(np.sum(raw == ridx)) for ridx in range(len(regions))]
    kept = [ridx for ridx, s in enumerate(sizes) if s >= min_cluster_size]
    kept.sort(key=lambda ridx: (-sizes[ridx], ridx))
    remap = {ridx: new for new, ridx in enumerate(kept)}

    cluster_of = np.full(n, NOISE, dtype=np.int32)
    for ridx, new in remap.items():
        cluster_of[raw == ridx] = new

    census = tuple(
        ClusterCensus(
            cluster=new,
            cn=int(np.sum((cluster_of == new) & (labels == 0))),
            mci=int(np.sum((cluster_of == new) & (labels == 1))),
        )
        for new in range(len(kept))
    )
    return ClusterAssignment(
        cluster_of=cluster_of, n_clusters=len(kept), census=census
    )


def segment_embedding(
    coords: np.ndarray,
    labels: np.ndarray,
    cfg: RasterConfig,
    manual_markers_xy: list | None = None,
    min_cluster_size: int | None = None,
    connectivity: int = 8,
):
    """Full segmentation: rasterize, place markers, reconstruct, assign.

    Returns (grid, markers, regions, assignment).
    """
    grid = rasterize(coords, cfg)
    if manual_markers_xy:
        markers = [marker_from_xy(x, y, grid) for x, y in manual_markers_xy]
    else:
        markers = auto_markers(grid)
    regions = []
    seen = set()
    for m in markers:
        region = reconstruct(m, grid, connectivity=connectivity)
        if region & seen:
            # Two markers inside one component grow to the same region; the
            # duplicate is dropped rather than reported twice.
            continue
        seen |= region
        regions.append(region)
    assignment = assign_clusters(grid, regions, labels, min_cluster_size)
    return grid, markers, regions, assignment


# ---------------------------------------------------------------------------
# PGM export
# ---------------------------------------------------------------------------

def write_pgm(image: np.ndarray, path) -> None:
    """Write a 2-D uint8 image as plain (P2) PGM, row 0 at the top."""
    image = np.asarray(image, dtype=np.uint8)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"P2\n{image.shape[1]} {image.shape[0]}\n255\n")
        for row in image[::-1]:  # flip so increasing y renders upward
            fh.write(" ".join(str(int(v)) for v in row) + "\n")


def mask_to_image(grid: RasterGrid) -> np.ndarray:
    return np.where(grid.mask, 255, 0).astype(np.uint8)


def regions_to_image(grid: RasterGrid, regions: list) -> np.ndarray:
    """Grayscale for inspection: background 0, region i at a spread level."""
    img = np.zeros((grid.height, grid.width), dtype=np.uint8)
    k = max(len(regions), 1)
    for i, region in enumerate(regions):
        level = 255 - int(round(i * (200 / k)))
        for (r, c) in region:
            img[r, c] = level
    return img
