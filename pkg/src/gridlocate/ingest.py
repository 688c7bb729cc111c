"""Parsers for mobility records, census tables, and GeoJSON boundaries.

All readers take an open binary stream or a path, decode UTF-8, and either
fail fast on the first bad row (strict, the default) or skip-and-count bad
rows (permissive). Column layouts are declared by the caller; nothing is
sniffed, because the source datasets all use different schemas.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import unicodedata
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

log = logging.getLogger(__name__)

SLOTS_PER_DAY = 48


class ParseError(ValueError):
    """Malformed or out-of-range input row; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"{message} at line {line}" if line is not None else message)


@dataclass(frozen=True)
class PingRecord:
    """One observation of one user, in grid-cell coordinates."""

    uid: int
    day: int
    slot: int
    cell_x: int
    cell_y: int


@dataclass(frozen=True)
class GeoPing:
    """One raw check-in: user, UTC instant, WGS84 degrees."""

    uid: str
    timestamp: datetime
    lat: float
    lon: float


@dataclass(frozen=True)
class CensusRow:
    region_name: str
    population: int


@dataclass(frozen=True)
class NamedPolygon:
    """Polygon or multipolygon: groups of closed rings, first ring of each
    group the outer boundary (counterclockwise), the rest holes (clockwise)."""

    name: str
    groups: tuple  # tuple of groups; group = tuple of rings; ring = tuple of (lon, lat)


@dataclass(frozen=True)
class GridPingLayout:
    """Column names for grid-ping CSVs (uid, day, slot, cell x, cell y)."""

    uid: str = "uid"
    day: str = "d"
    slot: str = "t"
    x: str = "x"
    y: str = "y"


@dataclass(frozen=True)
class GeoPingLayout:
    uid: str = "uid"
    timestamp: str = "timestamp"
    lat: str = "lat"
    lon: str = "lon"


@dataclass
class ParsedRows:
    """Rows accepted by a parser plus the permissive-mode bookkeeping."""

    records: list
    total_rows: int
    rejected: int

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def normalize_region_name(name: str) -> str:
    """NFC-normalize and trim; region joins are exact equality after this."""
    return unicodedata.normalize("NFC", name).strip()


def _open_text(source) -> io.TextIOBase:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def _reader(source):
    fh = _open_text(source)
    reader = csv.DictReader(fh)
    if reader.fieldnames is None:
        raise ParseError("missing header row")
    return fh, reader


def _require_columns(fieldnames, wanted):
    missing = [c for c in wanted if c not in fieldnames]
    if missing:
        raise ParseError(f"missing columns {missing}, header has {list(fieldnames)}")


def iter_grid_pings(source, layout: GridPingLayout, width_cells: int, height_cells: int,
                    day_range: tuple[int, int] | None = None) -> Iterator[PingRecord]:
    """Streaming strict parse; see parse_grid_pings for the collected form.

    day_range is an inclusive (first, last) filter applied after validation;
    the source datasets disagree on the observed span, so the caller decides.
    """
    fh, reader = _reader(source)
    with fh:
        _require_columns(reader.fieldnames, [layout.uid, layout.day, layout.slot, layout.x, layout.y])
        for lineno, row in enumerate(reader, start=2):
            rec = _grid_row(row, layout, width_cells, height_cells, lineno)
            if day_range is not None and not (day_range[0] <= rec.day <= day_range[1]):
                continue
            yield rec


def _grid_row(row, layout, width_cells, height_cells, lineno) -> PingRecord:
    try:
        uid = int(row[layout.uid])
        day = int(row[layout.day])
        slot = int(row[layout.slot])
        x = int(row[layout.x])
        y = int(row[layout.y])
    except (TypeError, ValueError, KeyError):
        raise ParseError(f"non-integer or missing field in row {row}", lineno) from None
    if uid < 0:
        raise ParseError(f"uid out of range (negative): {uid}", lineno)
    if day < 0:
        raise ParseError(f"day out of range (negative): {day}", lineno)
    if not 0 <= slot < SLOTS_PER_DAY:
        raise ParseError(f"slot out of range [0,{SLOTS_PER_DAY - 1}]: {slot}", lineno)
    if not 0 <= x < width_cells:
        raise ParseError(f"cell_x out of range [0,{width_cells}): {x}", lineno)
    if not 0 <= y < height_cells:
        raise ParseError(f"cell_y out of range [0,{height_cells}): {y}", lineno)
    return PingRecord(uid, day, slot, x, y)


def parse_grid_pings(source, layout: GridPingLayout, width_cells: int, height_cells: int,
                     strict: bool = True, day_range: tuple[int, int] | None = None) -> ParsedRows:
    """Parse a grid-ping CSV into validated records, preserving row order."""
    fh, reader = _reader(source)
    records, total, rejected = [], 0, 0
    with fh:
        _require_columns(reader.fieldnames, [layout.uid, layout.day, layout.slot, layout.x, layout.y])
        for lineno, row in enumerate(reader, start=2):
            total += 1
            try:
                rec = _grid_row(row, layout, width_cells, height_cells, lineno)
            except ParseError as exc:
                if strict:
                    raise
                rejected += 1
                log.warning("skipping bad row: %s", exc)
                continue
            if day_range is None or day_range[0] <= rec.day <= day_range[1]:
                records.append(rec)
    return ParsedRows(records, total, rejected)


def _parse_timestamp(text: str, lineno: int) -> datetime:
    try:
        ts = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError:
        raise ParseError(f"unparseable timestamp {text!r}", lineno) from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def parse_geo_pings(source, layout: GeoPingLayout, strict: bool = True) -> ParsedRows:
    """Parse a raw check-in CSV (uid, ISO-8601 timestamp, lat, lon)."""
    fh, reader = _reader(source)
    records, total, rejected = [], 0, 0
    with fh:
        _require_columns(reader.fieldnames, [layout.uid, layout.timestamp, layout.lat, layout.lon])
        for lineno, row in enumerate(reader, start=2):
            total += 1
            try:
                ts = _parse_timestamp(row[layout.timestamp], lineno)
                try:
                    lat = float(row[layout.lat])
                    lon = float(row[layout.lon])
                except (TypeError, ValueError):
                    raise ParseError(f"non-numeric coordinate in row {row}", lineno) from None
                if not -90.0 <= lat <= 90.0:
                    raise ParseError(f"lat out of bounds [-90,90]: {lat}", lineno)
                if not -180.0 <= lon <= 180.0:
                    raise ParseError(f"lon out of bounds [-180,180]: {lon}", lineno)
            except ParseError:
                if strict:
                    raise
                rejected += 1
                continue
            records.append(GeoPing(str(row[layout.uid]), ts, lat, lon))
    return ParsedRows(records, total, rejected)


def parse_census(source, strict: bool = True) -> ParsedRows:
    """Parse a two-column census CSV with `region` and `population` headers."""
    fh, reader = _reader(source)
    records, total, rejected = [], 0, 0
    with fh:
        _require_columns(reader.fieldnames, ["region", "population"])
        for lineno, row in enumerate(reader, start=2):
            total += 1
            try:
                name = normalize_region_name(row["region"] or "")
                if not name:
                    raise ParseError("empty region name", lineno)
                try:
                    population = int(row["population"])
                except (TypeError, ValueError):
                    raise ParseError(f"non-integer population {row['population']!r}", lineno) from None
                if population < 0:
                    raise ParseError(f"negative population {population}", lineno)
            except ParseError:
                if strict:
                    raise
                rejected += 1
                continue
            records.append(CensusRow(name, population))
    return ParsedRows(records, total, rejected)


def _ring_signed_area(ring) -> float:
    area = 0.0
    for i in range(len(ring) - 1):
        area += ring[i][0] * ring[i + 1][1] - ring[i + 1][0] * ring[i][1]
    return area / 2.0


def _normalize_ring(ring, outer: bool, where: str):
    """Validate closure/bounds and orient: outer counterclockwise, holes clockwise."""
    if len(ring) < 4:
        raise ParseError(f"ring with fewer than 4 points in {where}")
    if tuple(ring[0]) != tuple(ring[-1]):
        raise ParseError(f"unclosed ring in {where}")
    for lon, lat in ring:
        if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
            raise ParseError(f"coordinate out of bounds ({lon}, {lat}) in {where}")
    ccw = _ring_signed_area(ring) > 0
    if ccw != outer:
        ring = ring[::-1]
    return tuple((float(lon), float(lat)) for lon, lat in ring)


def _polygon_groups(coords, where: str):
    return tuple(
        tuple(_normalize_ring([tuple(p[:2]) for p in ring], k == 0, where)
              for k, ring in enumerate(poly))
        for poly in coords
    )


def parse_polygons(source, name_property: str = "name") -> list[NamedPolygon]:
    """Parse a GeoJSON FeatureCollection of Polygon/MultiPolygon features."""
    if isinstance(source, (str, Path)):
        data = json.loads(Path(source).read_text(encoding="utf-8"))
    elif isinstance(source, bytes):
        data = json.loads(source.decode("utf-8"))
    elif isinstance(source, dict):
        data = source
    else:
        data = json.load(_open_text(source))

    if data.get("type") != "FeatureCollection":
        raise ParseError(f"expected FeatureCollection, got {data.get('type')!r}")
    out = []
    for i, feature in enumerate(data.get("features", [])):
        geom = feature.get("geometry") or {}
        gtype = geom.get("type")
        props = feature.get("properties") or {}
        name = normalize_region_name(str(props.get(name_property, f"feature-{i}")))
        where = f"feature {i} ({name})"
        if gtype == "Polygon":
            groups = _polygon_groups([geom["coordinates"]], where)
        elif gtype == "MultiPolygon":
            groups = _polygon_groups(geom["coordinates"], where)
        else:
            raise ParseError(f"unsupported geometry type {gtype!r} in {where}")
        out.append(NamedPolygon(name, groups))
    return out


def write_grid_pings(records: Iterable[PingRecord], path, layout: GridPingLayout = GridPingLayout()):
    """Serialize records back to CSV (lossless round trip with parse_grid_pings)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([layout.uid, layout.day, layout.slot, layout.x, layout.y])
        for r in records:
            w.writerow([r.uid, r.day, r.slot, r.cell_x, r.cell_y])
