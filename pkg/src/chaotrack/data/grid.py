"""Weekly gridded series and their two on-disk formats.

CSV layout::

    #start_week,1880-01-05
    #lat,10.5,-20.0
    #lon,100.0,35.25
    week,loc0,loc1
    0,0.125,1.5
    1,0.25,1.75

The ``#`` metadata lines are optional (missing coordinates default to 0,
missing start week to 1970-01-05). The first ``week`` cell sets
``week_offset`` (prediction files continue the index of their history).
Values are written with ``repr`` so they round-trip exactly.

Binary layout (little endian): magic ``CTGR``, version u32, T u64, N u64,
start week (u16 length + UTF-8), then per location id (u16 length + UTF-8),
lat f64, lon f64, then T*N f64 values row-major.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatVersionError, GridFormatError

GRID_MAGIC = b"CTGR"
GRID_VERSION = 1
DEFAULT_START_WEEK = "1970-01-05"


@dataclass(frozen=True)
class Location:
    id: str
    lat: float = 0.0
    lon: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise GridFormatError(f"location {self.id!r}: latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise GridFormatError(f"location {self.id!r}: longitude {self.lon} outside [-180, 180]")


@dataclass
class GridSeries:
    """T x N weekly observations (rows are weeks, columns locations)."""

    values: np.ndarray
    locations: list[Location]
    start_week: str = DEFAULT_START_WEEK
    week_offset: int = 0
    cadence: str = field(default="weekly", init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise GridFormatError(f"values must be a non-empty T x N matrix, got {self.values.shape}")
        if self.values.shape[1] != len(self.locations):
            raise GridFormatError(
                f"{self.values.shape[1]} value columns but {len(self.locations)} locations"
            )
        if np.isnan(self.values).any():
            t, n = np.argwhere(np.isnan(self.values))[0]
            raise GridFormatError(f"NaN at week {t}, location {self.locations[n].id!r}")
        _check_unique([loc.id for loc in self.locations])

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    @property
    def ids(self) -> list[str]:
        return [loc.id for loc in self.locations]

    def slice_rows(self, start: int, stop: int | None = None) -> "GridSeries":
        start = range(self.T)[start] if start < 0 else start
        return GridSeries(
            self.values[start:stop].copy(), list(self.locations), self.start_week,
            self.week_offset + start,
        )

    def with_values(self, values: np.ndarray, week_offset: int | None = None) -> "GridSeries":
        offset = self.week_offset if week_offset is None else week_offset
        return GridSeries(values, list(self.locations), self.start_week, offset)


def default_locations(n: int) -> list[Location]:
    """``loc0..loc{n-1}`` spread over a coarse lat/lon lattice."""
    locs = []
    for i in range(n):
        lat = -60.0 + 120.0 * ((i * 7) % max(n, 1)) / max(n, 1)
        lon = -180.0 + 360.0 * i / max(n, 1)
        locs.append(Location(f"loc{i}", round(lat, 6), round(lon, 6)))
    return locs


def _check_unique(ids: list[str]) -> None:
    seen = set()
    for loc_id in ids:
        if loc_id in seen:
            raise GridFormatError(f"duplicate location id {loc_id!r}")
        seen.add(loc_id)


def _parse_float(text: str, line: int, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise GridFormatError(f"line {line}: cannot parse {what} {text!r}") from None


def read_grid_csv(text: str) -> GridSeries:
    meta: dict[str, list[str]] = {}
    header: list[str] | None = None
    rows: list[list[float]] = []
    first_week = 0
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line:
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None and cells[0].startswith("#"):
            meta[cells[0][1:]] = cells[1:]
            continue
        if header is None:
            if cells[0] != "week" or len(cells) < 2:
                raise GridFormatError(f"line {lineno}: expected header 'week,<id>,...'")
            header = cells[1:]
            _check_unique(header)
            continue
        if len(cells) != len(header) + 1:
            raise GridFormatError(
                f"line {lineno}: expected {len(header) + 1} fields, got {len(cells)}"
            )
        if not rows:
            try:
                first_week = int(cells[0])
            except ValueError:
                raise GridFormatError(f"line {lineno}: week index {cells[0]!r} is not an integer") from None
        row = [_parse_float(c, lineno, "value") for c in cells[1:]]
        if any(np.isnan(v) for v in row):
            bad = header[next(i for i, v in enumerate(row) if np.isnan(v))]
            raise GridFormatError(f"line {lineno}: NaN for location {bad!r}")
        rows.append(row)
    if header is None:
        raise GridFormatError("line 1: empty grid file (no header)")
    if not rows:
        raise GridFormatError("grid has a header but no data rows")
    n = len(header)
    lats = meta.get("lat", ["0"] * n)
    lons = meta.get("lon", ["0"] * n)
    if len(lats) != n or len(lons) != n:
        raise GridFormatError("#lat/#lon metadata length does not match header")
    locations = [
        Location(loc_id, _parse_float(la, 0, "lat"), _parse_float(lo, 0, "lon"))
        for loc_id, la, lo in zip(header, lats, lons)
    ]
    start = meta.get("start_week", [DEFAULT_START_WEEK])[0]
    return GridSeries(np.array(rows, dtype=np.float64), locations, start, first_week)


def write_grid_csv(series: GridSeries) -> str:
    out = io.StringIO()
    out.write(f"#start_week,{series.start_week}\n")
    out.write("#lat," + ",".join(repr(loc.lat) for loc in series.locations) + "\n")
    out.write("#lon," + ",".join(repr(loc.lon) for loc in series.locations) + "\n")
    out.write("week," + ",".join(series.ids) + "\n")
    for t, row in enumerate(series.values):
        out.write(f"{series.week_offset + t}," + ",".join(repr(float(v)) for v in row) + "\n")
    return out.getvalue()


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def write_grid_binary(series: GridSeries) -> bytes:
    parts = [GRID_MAGIC, struct.pack("<IQQ", GRID_VERSION, series.T, series.N)]
    parts.append(_pack_str(series.start_week))
    for loc in series.locations:
        parts.append(_pack_str(loc.id))
        parts.append(struct.pack("<dd", loc.lat, loc.lon))
    parts.append(np.ascontiguousarray(series.values, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise GridFormatError(f"offset {self.pos}: truncated file (need {n} more bytes)")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<H")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise GridFormatError(f"offset {self.pos - n}: invalid UTF-8") from None


def read_grid_binary(data: bytes) -> GridSeries:
    r = _Reader(data)
    if r.take(4) != GRID_MAGIC:
        raise GridFormatError("offset 0: bad magic (not a CTGR grid file)")
    version, T, N = r.unpack("<IQQ")
    if version != GRID_VERSION:
        raise FormatVersionError(f"unsupported grid format version {version}")
    start = r.string()
    locations = []
    for _ in range(N):
        loc_id = r.string()
        lat, lon = r.unpack("<dd")
        locations.append(Location(loc_id, lat, lon))
    values = np.frombuffer(r.take(8 * T * N), dtype="<f8").astype(np.float64).reshape(T, N)
    if r.pos != len(data):
        raise GridFormatError(f"offset {r.pos}: trailing bytes after values")
    return GridSeries(values, locations, start)


def _is_binary(path: Path) -> bool:
    return path.suffix.lower() in (".ctgr", ".bin")


def load_grid(path: str | Path) -> GridSeries:
    """Load a grid; ``.ctgr``/``.bin`` files are binary, anything else CSV."""
    path = Path(path)
    if _is_binary(path):
        return read_grid_binary(path.read_bytes())
    data = path.read_bytes()
    if data[:4] == GRID_MAGIC:
        return read_grid_binary(data)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise GridFormatError(f"{path}: not UTF-8 text and not a binary grid") from None
    return read_grid_csv(text)


def save_grid(series: GridSeries, path: str | Path) -> None:
    path = Path(path)
    if _is_binary(path):
        path.write_bytes(write_grid_binary(series))
    else:
        path.write_text(write_grid_csv(series), encoding="utf-8")
