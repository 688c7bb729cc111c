"""Discretization of pings into rasters, thresholding, and rescaling.

Cell coordinates follow the mobility-dataset convention: (0, 0) is the
upper-left (northwest) cell, x grows east, y grows south.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .geo import ProjectionRef, project, unproject
from .ingest import GeoPing, PingRecord


@dataclass(frozen=True)
class GridSpec:
    """Geographic anchor + scale + dimensions of a cell grid.

    anchor_lat/anchor_lon is the outer corner of cell (0, 0), i.e. the
    northwest corner of the grid.
    """

    anchor_lat: float
    anchor_lon: float
    cell_size_m: float
    width_cells: int
    height_cells: int
    ref_lat: float

    def __post_init__(self):
        if self.cell_size_m <= 0:
            raise ValueError(f"cell_size_m must be positive, got {self.cell_size_m}")
        if self.width_cells < 1 or self.height_cells < 1:
            raise ValueError(f"grid dims must be >= 1, got {self.width_cells}x{self.height_cells}")

    def projection_ref(self) -> ProjectionRef:
        return ProjectionRef(self.anchor_lat, self.anchor_lon, self.ref_lat)


@dataclass(eq=False)
class ActivityRaster:
    """Per-cell non-negative integer counts, row-major from the NW corner."""

    values: np.ndarray  # int64, shape (height, width)
    mode: str = "records"  # "records" | "users"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        if self.values.ndim != 2:
            raise ValueError("raster values must be 2-D")
        if (self.values < 0).any():
            raise ValueError("raster values must be non-negative")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def total(self) -> int:
        return int(self.values.sum())


@dataclass(eq=False)
class BinaryImage:
    """Thresholded silhouette; True = active/land = black."""

    bits: np.ndarray  # bool, shape (height, width)

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2:
            raise ValueError("bits must be 2-D")

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


@dataclass(frozen=True)
class HexSpec:
    """Pointy-top axial hexagon tiling of the projected plane.

    The origin hexagon is centered on the projected (0, 0), i.e. the grid
    anchor. Stands in for H3: only cell area and the partition matter here,
    not the external indexing standard.
    """

    edge_m: float

    def __post_init__(self):
        if self.edge_m <= 0:
            raise ValueError(f"edge_m must be positive, got {self.edge_m}")


def discretize(ping: GeoPing, spec: GridSpec):
    """Cell (x, y) containing the ping, or None when outside the grid."""
    east, south = project(ping.lat, ping.lon, spec.projection_ref())
    x = math.floor(east / spec.cell_size_m)
    y = math.floor(south / spec.cell_size_m)
    if 0 <= x < spec.width_cells and 0 <= y < spec.height_cells:
        return x, y
    return None


def discretize_many(lats, lons, spec: GridSpec):
    """Vectorized discretize: returns (x, y, in_bounds) arrays."""
    east, south = project(np.asarray(lats, dtype=np.float64),
                          np.asarray(lons, dtype=np.float64),
                          spec.projection_ref())
    x = np.floor(east / spec.cell_size_m).astype(np.int64)
    y = np.floor(south / spec.cell_size_m).astype(np.int64)
    ok = (x >= 0) & (x < spec.width_cells) & (y >= 0) & (y < spec.height_cells)
    return x, y, ok


def _dims(spec_or_dims) -> tuple[int, int]:
    if isinstance(spec_or_dims, GridSpec):
        return spec_or_dims.width_cells, spec_or_dims.height_cells
    width, height = spec_or_dims
    return int(width), int(height)


def _chunks(pings: Iterable[PingRecord], width: int, chunk: int):
    """Yield (cell_index, uid) int64 array pairs from a record stream."""
    cells, uids = [], []
    for r in pings:
        cells.append(r.cell_y * width + r.cell_x)
        uids.append(r.uid)
        if len(cells) >= chunk:
            yield np.asarray(cells, dtype=np.int64), np.asarray(uids, dtype=np.int64)
            cells, uids = [], []
    if cells:
        yield np.asarray(cells, dtype=np.int64), np.asarray(uids, dtype=np.int64)


def accumulate(pings: Iterable[PingRecord], spec_or_dims, mode: str = "records",
               chunk: int = 1 << 20) -> ActivityRaster:
    """Count pings per cell.

    records mode counts every ping; users mode counts distinct uids per
    cell. Accepts any iterable of PingRecord (discretize GeoPings first)
    and streams it in chunks: persistent memory is O(cells) for records
    mode plus the surviving (cell, uid) pairs for users mode.
    """
    if mode not in ("records", "users"):
        raise ValueError(f"unknown mode {mode!r}")
    width, height = _dims(spec_or_dims)
    counts = np.zeros(height * width, dtype=np.int64)
    pairs = None
    for cells, uids in _chunks(pings, width, chunk):
        if (cells < 0).any() or (cells >= height * width).any():
            raise ValueError("ping cell outside the grid; records must be pre-validated")
        if mode == "records":
            np.add.at(counts, cells, 1)
        else:
            seen = np.unique(np.stack([cells, uids]), axis=1)
            pairs = seen if pairs is None else np.unique(np.concatenate([pairs, seen], axis=1), axis=1)
    if mode == "users" and pairs is not None:
        np.add.at(counts, pairs[0], 1)
    return ActivityRaster(counts.reshape(height, width), mode)


def threshold(raster: ActivityRaster, t: int) -> BinaryImage:
    """Active iff count >= t; t = 0 marks everything active."""
    if t < 0:
        raise ValueError(f"threshold must be non-negative, got {t}")
    return BinaryImage(raster.values >= t)


def threshold_nonzero(raster: ActivityRaster) -> BinaryImage:
    """Active iff the cell saw any activity; same as threshold(raster, 1)."""
    return threshold(raster, 1)


def threshold_real(values, t: float) -> BinaryImage:
    """Threshold a real-valued grid (e.g. population shares): active iff value >= t."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("real-valued raster must be 2-D")
    if (values < 0).any():
        raise ValueError("real-valued raster must be non-negative")
    return BinaryImage(values >= t)


def block_aggregate(raster: ActivityRaster, k: int) -> ActivityRaster:
    """Sum k x k blocks into one coarse cell (simulates coarser anonymization).

    Total activity is conserved; dims must be divisible by k.
    """
    if k < 1:
        raise ValueError(f"block factor must be >= 1, got {k}")
    h, w = raster.values.shape
    if h % k or w % k:
        raise ValueError(f"dims {w}x{h} not divisible by block factor {k}")
    coarse = raster.values.reshape(h // k, k, w // k, k).sum(axis=(1, 3))
    return ActivityRaster(coarse, raster.mode)


def log_view(raster: ActivityRaster) -> np.ndarray:
    """log10(1 + count), display only; thresholds always apply to raw counts."""
    return np.log10(1.0 + raster.values)


def upscale_cells(x, y, factor: int):
    """Map original cell indices to the coarse grid (floor division)."""
    return np.asarray(x) // factor, np.asarray(y) // factor


# --- hexagonal binning ------------------------------------------------------

SQRT3 = math.sqrt(3.0)


def hex_edge_for_area(area_km2: float) -> float:
    """Edge length (m) of the regular hexagon with the given area (km^2)."""
    if area_km2 <= 0:
        raise ValueError(f"area must be positive, got {area_km2}")
    return math.sqrt(2.0 * area_km2 * 1e6 / (3.0 * SQRT3))


def axial_from_xy(x_m, y_m, spec: HexSpec):
    """Fractional axial (q, r) of projected points for a pointy-top tiling."""
    x = np.asarray(x_m, dtype=np.float64)
    y = np.asarray(y_m, dtype=np.float64)
    q = (SQRT3 / 3.0 * x - y / 3.0) / spec.edge_m
    r = (2.0 / 3.0 * y) / spec.edge_m
    return q, r


def cube_round(qf, rf):
    """Round fractional axial coordinates to the containing hexagon."""
    qf = np.asarray(qf, dtype=np.float64)
    rf = np.asarray(rf, dtype=np.float64)
    sf = -qf - rf
    q = np.round(qf)
    r = np.round(rf)
    s = np.round(sf)
    dq = np.abs(q - qf)
    dr = np.abs(r - rf)
    ds = np.abs(s - sf)
    fix_q = (dq > dr) & (dq > ds)
    fix_r = ~fix_q & (dr > ds)
    q = np.where(fix_q, -r - s, q)
    r = np.where(fix_r, -q - s, r)
    return q.astype(np.int64), r.astype(np.int64)


def hex_center(q, r, spec: HexSpec):
    """Projected-meter center of hexagon (q, r)."""
    x = spec.edge_m * SQRT3 * (np.asarray(q) + np.asarray(r) / 2.0)
    y = spec.edge_m * 1.5 * np.asarray(r)
    return x, y


def hex_polygon(q: int, r: int, spec: HexSpec):
    """Vertex ring of hexagon (q, r) in projected meters, closed."""
    cx, cy = hex_center(q, r, spec)
    pts = []
    for k in range(6):
        ang = math.pi / 180.0 * (60.0 * k - 30.0)
        pts.append((cx + spec.edge_m * math.cos(ang), cy + spec.edge_m * math.sin(ang)))
    pts.append(pts[0])
    return pts


def hex_aggregate(x_m, y_m, spec: HexSpec, mode: str = "records", uids=None) -> dict:
    """Count projected points per hexagon; keys are axial (q, r) pairs."""
    if mode not in ("records", "users"):
        raise ValueError(f"unknown mode {mode!r}")
    q, r = cube_round(*axial_from_xy(x_m, y_m, spec))
    out: dict = {}
    if mode == "records":
        keys, counts = np.unique(np.stack([q, r]), axis=1, return_counts=True)
        for (qq, rr), c in zip(keys.T, counts):
            out[(int(qq), int(rr))] = int(c)
    else:
        if uids is None:
            raise ValueError("users mode needs uids")
        uids = np.asarray(uids)
        triples = np.unique(np.stack([q, r, uids.astype(np.int64)]), axis=1)
        keys, counts = np.unique(triples[:2], axis=1, return_counts=True)
        for (qq, rr), c in zip(keys.T, counts):
            out[(int(qq), int(rr))] = int(c)
    return out


def hex_rasterize(counts: dict, spec: HexSpec, bbox_m, pixel_size_m: float, t: int = 1) -> BinaryImage:
    """Paint hexagon counts onto a pixel grid: pixel true iff the hexagon
    containing its center has count >= t.

    bbox_m is (x_min, y_min, x_max, y_max) in projected meters.
    """
    x0, y0, x1, y1 = bbox_m
    width = max(1, int(math.ceil((x1 - x0) / pixel_size_m - 1e-9)))
    height = max(1, int(math.ceil((y1 - y0) / pixel_size_m - 1e-9)))
    xs = x0 + (np.arange(width) + 0.5) * pixel_size_m
    ys = y0 + (np.arange(height) + 0.5) * pixel_size_m
    gx, gy = np.meshgrid(xs, ys)
    q, r = cube_round(*axial_from_xy(gx.ravel(), gy.ravel(), spec))
    bits = np.fromiter(
        (counts.get((int(qq), int(rr)), 0) >= t for qq, rr in zip(q, r)),
        dtype=bool, count=q.size,
    )
    return BinaryImage(bits.reshape(height, width))


# --- raw check-ins -> grid pings -------------------------------------------

def geo_to_grid_pings(geopings, spec: GridSpec, uid_map: dict | None = None) -> list[PingRecord]:
    """Discretize raw check-ins into validated grid pings.

    Days are numbered from the earliest UTC date seen; slots are 30-minute
    intervals of the UTC day. String uids are assigned dense integer ids in
    first-seen order (pass uid_map to pin or recover the assignment).
    Out-of-grid pings are dropped.
    """
    geopings = list(geopings)
    if not geopings:
        return []
    base = min(p.timestamp for p in geopings).date()
    if uid_map is None:
        uid_map = {}
    out = []
    for p in geopings:
        cell = discretize(p, spec)
        if cell is None:
            continue
        uid = uid_map.setdefault(p.uid, len(uid_map))
        day = (p.timestamp.date() - base).days
        slot = p.timestamp.hour * 2 + p.timestamp.minute // 30
        out.append(PingRecord(uid, day, slot, cell[0], cell[1]))
    return out


def cell_centroid_geo(spec: GridSpec, x: int, y: int):
    """lat/lon of the center of cell (x, y); inverse of discretize at centers."""
    if not (0 <= x < spec.width_cells and 0 <= y < spec.height_cells):
        raise ValueError(f"cell ({x}, {y}) outside grid {spec.width_cells}x{spec.height_cells}")
    east = (x + 0.5) * spec.cell_size_m
    south = (y + 0.5) * spec.cell_size_m
    return unproject(east, south, spec.projection_ref())
