"""Local projection and polygon rasterization.

Geographic coordinates are WGS84 degrees. The projection is a local
equirectangular: meters east/south of an origin, with the longitude scale
fixed by the cosine of a single reference latitude. Residual distortion
relative to whatever projection produced a dataset is absorbed by the
anisotropic scale search in the match stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EARTH_RADIUS_M = 6371000.0
_DEG_M = math.pi / 180.0 * EARTH_RADIUS_M  # meters per degree of latitude


@dataclass(frozen=True)
class ProjectionRef:
    """Origin and reference latitude of the local equirectangular plane."""

    origin_lat: float
    origin_lon: float
    ref_lat: float
    earth_radius_m: float = EARTH_RADIUS_M

    def __post_init__(self):
        if not abs(self.origin_lat) < 90.0:
            raise ValueError(f"origin_lat must satisfy |lat| < 90, got {self.origin_lat}")


@dataclass(frozen=True)
class GeoBox:
    """Geographic bounding box, degrees. North edge is the top."""

    west: float
    south: float
    east: float
    north: float

    def __post_init__(self):
        if not (self.west < self.east and self.south < self.north):
            raise ValueError(f"degenerate bounding box: {self}")

    @property
    def center_lat(self) -> float:
        return 0.5 * (self.south + self.north)

    def projection_ref(self, ref_lat: float | None = None) -> ProjectionRef:
        """Reference anchored at the northwest corner; ref_lat defaults to the box center."""
        return ProjectionRef(self.north, self.west, self.center_lat if ref_lat is None else ref_lat)


def project(lat, lon, ref: ProjectionRef):
    """Degrees -> (east_m, south_m) relative to the reference origin.

    Accepts scalars or numpy arrays.
    """
    scale = math.cos(math.radians(ref.ref_lat))
    k = math.pi / 180.0 * ref.earth_radius_m
    east = (np.asarray(lon) - ref.origin_lon) * k * scale
    south = (ref.origin_lat - np.asarray(lat)) * k
    if np.ndim(east) == 0:
        return float(east), float(south)
    return east, south


def unproject(east_m, south_m, ref: ProjectionRef):
    """(east_m, south_m) -> (lat, lon) degrees. Exact inverse of project."""
    scale = math.cos(math.radians(ref.ref_lat))
    k = math.pi / 180.0 * ref.earth_radius_m
    lat = ref.origin_lat - np.asarray(south_m) / k
    lon = ref.origin_lon + np.asarray(east_m) / (k * scale)
    if np.ndim(lat) == 0:
        return float(lat), float(lon)
    return lat, lon


@dataclass
class LandMask:
    """Binary land raster with the geographic box and scale it was drawn at."""

    bits: np.ndarray  # bool, shape (height, width), True = land
    bbox: GeoBox
    pixel_size_m: float
    ref: ProjectionRef = field(repr=False, default=None)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


def _ring_edges(ring_m):
    """Edge endpoint arrays (x1, y1, x2, y2) for one projected ring."""
    pts = np.asarray(ring_m, dtype=np.float64)
    return pts[:-1, 0], pts[:-1, 1], pts[1:, 0], pts[1:, 1]


def _fill_rings(edges, width, height, pixel_size_m, out):
    """OR even-odd scanline fill of one ring set into `out` (bool, h x w)."""
    x1, y1, x2, y2 = edges
    for row in range(height):
        yc = (row + 0.5) * pixel_size_m
        crossing = (y1 > yc) != (y2 > yc)
        if not crossing.any():
            continue
        xa, ya, xb, yb = x1[crossing], y1[crossing], x2[crossing], y2[crossing]
        xs = np.sort(xa + (yc - ya) * (xb - xa) / (yb - ya))
        # pixel center (col + 0.5)*pix is inside while an odd number of
        # crossings lie to its left
        for lo, hi in zip(xs[0::2], xs[1::2]):
            c0 = int(np.ceil(lo / pixel_size_m - 0.5))
            c1 = int(np.ceil(hi / pixel_size_m - 0.5))  # exclusive
            if c1 > 0 and c0 < width:
                out[row, max(c0, 0):min(c1, width)] = True


def rasterize_polygons(polygons, bbox: GeoBox, pixel_size_m: float,
                       ref: ProjectionRef | None = None) -> LandMask:
    """Rasterize polygons into a land mask: pixel true iff its center is inside.

    Containment per polygon is the even-odd rule over all of its rings, so
    holes subtract; the mask is the union over polygons. An empty polygon
    list yields an all-false mask.
    """
    if pixel_size_m <= 0:
        raise ValueError("pixel_size_m must be positive")
    if ref is None:
        ref = bbox.projection_ref()
    east1, south0 = project(bbox.north, bbox.east, ref)
    east0, south1 = project(bbox.south, bbox.west, ref)
    width = max(1, int(math.ceil((east1 - east0) / pixel_size_m - 1e-9)))
    height = max(1, int(math.ceil((south1 - south0) / pixel_size_m - 1e-9)))

    mask = np.zeros((height, width), dtype=bool)
    scratch = np.empty_like(mask)
    for poly in polygons:
        rings_m = []
        for group in poly.groups:
            for ring in group:
                lons = np.array([p[0] for p in ring])
                lats = np.array([p[1] for p in ring])
                east, south = project(lats, lons, ref)
                rings_m.append(np.column_stack([east - east0, south - south0]))
        if not rings_m:
            continue
        x1 = np.concatenate([_ring_edges(r)[0] for r in rings_m])
        y1 = np.concatenate([_ring_edges(r)[1] for r in rings_m])
        x2 = np.concatenate([_ring_edges(r)[2] for r in rings_m])
        y2 = np.concatenate([_ring_edges(r)[3] for r in rings_m])
        scratch[:] = False
        _fill_rings((x1, y1, x2, y2), width, height, pixel_size_m, scratch)
        mask |= scratch
    return LandMask(mask, bbox, float(pixel_size_m), ref)


def point_in_ring(x: float, y: float, ring) -> bool:
    """Crossing-number test against one ring, half-open edge convention."""
    inside = False
    n = len(ring) - 1
    for i in range(n):
        x1, y1 = ring[i][0], ring[i][1]
        x2, y2 = ring[i + 1][0], ring[i + 1][1]
        if (y1 > y) != (y2 > y):
            if x < x1 + (y - y1) * (x2 - x1) / (y2 - y1):
                inside = not inside
    return inside


def point_in_polygon(point, polygon) -> bool:
    """Even-odd containment of (lon, lat) in a NamedPolygon, holes subtract."""
    x, y = point
    crossings = 0
    for group in polygon.groups:
        for ring in group:
            if point_in_ring(x, y, ring):
                crossings += 1
    return crossings % 2 == 1


def _clip_ring_to_box(ring_m, x0, y0, x1, y1):
    """Sutherland-Hodgman clip of a projected ring against an axis box."""
    def clip(points, inside, intersect):
        out = []
        n = len(points)
        for i in range(n):
            cur, prev = points[i], points[i - 1]
            if inside(cur):
                if not inside(prev):
                    out.append(intersect(prev, cur))
                out.append(cur)
            elif inside(prev):
                out.append(intersect(prev, cur))
        return out

    def x_cross(bound):
        def f(p, q):
            t = (bound - p[0]) / (q[0] - p[0])
            return (bound, p[1] + t * (q[1] - p[1]))
        return f

    def y_cross(bound):
        def f(p, q):
            t = (bound - p[1]) / (q[1] - p[1])
            return (p[0] + t * (q[0] - p[0]), bound)
        return f

    pts = [tuple(p) for p in ring_m[:-1]]
    for inside, intersect in (
        (lambda p: p[0] >= x0, x_cross(x0)),
        (lambda p: p[0] <= x1, x_cross(x1)),
        (lambda p: p[1] >= y0, y_cross(y0)),
        (lambda p: p[1] <= y1, y_cross(y1)),
    ):
        pts = clip(pts, inside, intersect)
        if not pts:
            return 0.0
    return _shoelace(pts)


def _shoelace(points) -> float:
    """Absolute polygon area from vertices (unclosed list accepted)."""
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    return abs(float(np.dot(xs, np.roll(ys, -1)) - np.dot(ys, np.roll(xs, -1)))) / 2.0


def coverage_fraction(polygon, bbox: GeoBox, ref: ProjectionRef | None = None) -> float:
    """Fraction of the polygon's area that falls inside the bounding box.

    Computed on the projected plane by clipping every ring against the box
    (outer rings add, holes subtract).
    """
    if ref is None:
        ref = bbox.projection_ref()
    east1, _ = project(bbox.north, bbox.east, ref)
    _, south1 = project(bbox.south, bbox.west, ref)

    total = 0.0
    clipped = 0.0
    for group in polygon.groups:
        for k, ring in enumerate(group):
            lons = np.array([p[0] for p in ring])
            lats = np.array([p[1] for p in ring])
            east, south = project(lats, lons, ref)
            ring_m = np.column_stack([east, south])
            sign = 1.0 if k == 0 else -1.0
            total += sign * _shoelace(ring_m[:-1])
            clipped += sign * _clip_ring_to_box(ring_m, 0.0, 0.0, east1, south1)
    if total <= 0.0:
        raise ValueError(f"polygon {polygon.name!r} has zero area")
    return min(max(clipped / total, 0.0), 1.0)
