"""Elevation grids built from point clouds, and what can be measured on them.

Grid convention: ``origin`` is the lower-left corner of cell ``(0, 0)``; row
index grows northward (+y), column index eastward (+x). The centre of cell
``(r, c)`` is ``(x0 + (c + 0.5) * cell, y0 + (r + 0.5) * cell)``. Nodata is
NaN in memory and in files, so any arithmetic touching nodata yields nodata.
"""
import csv
import enum
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (EmptyCloud, GridMismatch, MalformedDemFile, NonPositiveCell,
                     NonPositiveSpacing)

NODATA = float("nan")
DEFAULT_CELL_M = 0.10
DEM_MAGIC = b"DEM1"
_SNAP_EPS = 1e-9


class Aggregator(enum.Enum):
    MEAN = "mean"
    MAX = "max"
    MIN = "min"


@dataclass(eq=False)
class DemGrid:
    origin: tuple
    cell_size_m: float
    elevations: np.ndarray
    crs_label: str = ""

    def __post_init__(self):
        self.origin = (float(self.origin[0]), float(self.origin[1]))
        self.cell_size_m = float(self.cell_size_m)
        self.elevations = np.asarray(self.elevations, dtype=np.float64)
        if self.elevations.ndim != 2:
            raise ValueError("elevations must be a 2-D array")
        if not self.cell_size_m > 0:
            raise NonPositiveCell(f"cell size must be positive, got {self.cell_size_m}")
        if np.any(np.isinf(self.elevations)):
            raise ValueError("elevations must be finite or nodata")

    @property
    def n_rows(self):
        return self.elevations.shape[0]

    @property
    def n_cols(self):
        return self.elevations.shape[1]

    @property
    def shape(self):
        return self.elevations.shape

    @property
    def cell_area_m2(self):
        return self.cell_size_m * self.cell_size_m

    @property
    def valid(self):
        return ~np.isnan(self.elevations)

    def bounds(self):
        x0, y0 = self.origin
        return (x0, y0, x0 + self.n_cols * self.cell_size_m, y0 + self.n_rows * self.cell_size_m)

    def cell_centers(self):
        """``(xs, ys)`` 1-D arrays of column and row centre coordinates."""
        x0, y0 = self.origin
        cs = self.cell_size_m
        return x0 + (np.arange(self.n_cols) + 0.5) * cs, y0 + (np.arange(self.n_rows) + 0.5) * cs

    def aligned_with(self, other):
        return (self.origin == other.origin and self.cell_size_m == other.cell_size_m
                and self.shape == other.shape)

    def __eq__(self, other):
        if not isinstance(other, DemGrid):
            return NotImplemented
        return (self.aligned_with(other) and self.crs_label == other.crs_label
                and np.array_equal(self.elevations, other.elevations, equal_nan=True))


def _snap_down(value, cell):
    q = value / cell
    k = round(q)
    if abs(q - k) > _SNAP_EPS:
        k = math.floor(q)
    return k * cell


def _snap_up(value, cell):
    q = value / cell
    k = round(q)
    if abs(q - k) > _SNAP_EPS:
        k = math.ceil(q)
    return k * cell


def grid_frame(bounds, cell_size_m):
    """Origin and ``(n_rows, n_cols)`` of the grid covering ``bounds`` snapped outward."""
    xmin, ymin, xmax, ymax = bounds
    x0, y0 = _snap_down(xmin, cell_size_m), _snap_down(ymin, cell_size_m)
    n_cols = max(1, round((_snap_up(xmax, cell_size_m) - x0) / cell_size_m))
    n_rows = max(1, round((_snap_up(ymax, cell_size_m) - y0) / cell_size_m))
    return (x0, y0), (n_rows, n_cols)


def cell_index(x, y, origin, cell_size_m, shape):
    """Row and column of each point; points on the far edge fall in the last cell."""
    x = np.asarray(x)
    y = np.asarray(y)
    n_rows, n_cols = shape
    cols = np.floor((x - origin[0]) / cell_size_m).astype(np.int64)
    rows = np.floor((y - origin[1]) / cell_size_m).astype(np.int64)
    cols[(cols == n_cols) & (x <= origin[0] + n_cols * cell_size_m)] = n_cols - 1
    rows[(rows == n_rows) & (y <= origin[1] + n_rows * cell_size_m)] = n_rows - 1
    return rows, cols


def rasterize(cloud, cell_size_m=DEFAULT_CELL_M, aggregator=Aggregator.MEAN, bounds=None):
    """Aggregate point elevations into a grid.

    ``bounds`` (``xmin, ymin, xmax, ymax``) fixes the grid extent, which is how
    two survey epochs are put on the same cells; points outside are dropped.
    By default the cloud's own bounds are used. Cells without points are
    nodata. The result does not depend on point order.
    """
    if not cell_size_m > 0:
        raise NonPositiveCell(f"cell size must be positive, got {cell_size_m}")
    aggregator = Aggregator(aggregator)
    if len(cloud) == 0:
        raise EmptyCloud("cannot rasterize an empty cloud")
    origin, shape = grid_frame(bounds if bounds is not None else cloud.bounds(), cell_size_m)
    rows, cols = cell_index(cloud.x, cloud.y, origin, cell_size_m, shape)
    z = cloud.z
    inside = (rows >= 0) & (rows < shape[0]) & (cols >= 0) & (cols < shape[1])
    if not inside.all():
        rows, cols, z = rows[inside], cols[inside], z[inside]

    out = np.full(shape[0] * shape[1], NODATA)
    if len(z):
        flat = rows * shape[1] + cols
        # sort by cell, then by z, so the reduction order is fixed
        order = np.lexsort((z, flat))
        flat, zs = flat[order], z[order]
        starts = np.flatnonzero(np.r_[True, flat[1:] != flat[:-1]])
        cells = flat[starts]
        if aggregator is Aggregator.MEAN:
            counts = np.diff(np.r_[starts, len(zs)])
            out[cells] = np.add.reduceat(zs, starts) / counts
        elif aggregator is Aggregator.MAX:
            out[cells] = zs[np.r_[starts[1:], len(zs)] - 1]
        else:
            out[cells] = zs[starts]
    return DemGrid(origin, cell_size_m, out.reshape(shape), cloud.crs_label)


def fill_holes(grid, max_radius_cells, power=2.0):
    """Fill nodata cells by inverse-distance weighting of valid cells within a radius.

    Only cells that were valid on input act as sources, so the result does not
    depend on fill order. Valid cells are never changed.
    """
    if max_radius_cells < 0:
        raise ValueError("max_radius_cells must be non-negative")
    z = grid.elevations
    holes = np.isnan(z)
    if max_radius_cells == 0 or not holes.any() or holes.all():
        return DemGrid(grid.origin, grid.cell_size_m, z.copy(), grid.crs_label)

    r = int(max_radius_cells)
    n_rows, n_cols = z.shape
    padded = np.pad(z, r, constant_values=np.nan)
    weighted = np.zeros_like(z)
    weights = np.zeros_like(z)
    for dr in range(-r, r + 1):
        for dc in range(-r, r + 1):
            d2 = dr * dr + dc * dc
            if d2 == 0 or d2 > r * r:
                continue
            src = padded[r + dr:r + dr + n_rows, r + dc:r + dc + n_cols]
            ok = holes & ~np.isnan(src)
            w = d2 ** (-power / 2.0)
            weighted[ok] += w * src[ok]
            weights[ok] += w
    out = z.copy()
    fill = holes & (weights > 0)
    out[fill] = weighted[fill] / weights[fill]
    return DemGrid(grid.origin, grid.cell_size_m, out, grid.crs_label)


def sample_bilinear_many(grid, x, y):
    """Vectorized bilinear sampling over the four surrounding cell centres.

    Queries outside the hull of cell centres, or touching a nodata cell with
    non-zero weight, return nodata.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n_rows, n_cols = grid.shape
    u = (x - grid.origin[0]) / grid.cell_size_m - 0.5
    v = (y - grid.origin[1]) / grid.cell_size_m - 0.5
    inside = (u >= 0) & (u <= n_cols - 1) & (v >= 0) & (v <= n_rows - 1)
    u = np.where(inside, u, 0.0)
    v = np.where(inside, v, 0.0)
    c0 = np.clip(np.floor(u).astype(np.int64), 0, max(n_cols - 2, 0))
    r0 = np.clip(np.floor(v).astype(np.int64), 0, max(n_rows - 2, 0))
    c1 = np.minimum(c0 + 1, n_cols - 1)
    r1 = np.minimum(r0 + 1, n_rows - 1)
    t = u - c0
    s = v - r0

    z = grid.elevations
    bad = ~inside
    corners = {}
    for key, rr, cc, w in (("00", r0, c0, (1 - s) * (1 - t)), ("01", r0, c1, (1 - s) * t),
                           ("10", r1, c0, s * (1 - t)), ("11", r1, c1, s * t)):
        val = z[rr, cc]
        bad |= (w > 0) & np.isnan(val)
        corners[key] = np.nan_to_num(val)
    # lerp form keeps constant fields exact
    lower = corners["00"] + t * (corners["01"] - corners["00"])
    upper = corners["10"] + t * (corners["11"] - corners["10"])
    total = lower + s * (upper - lower)
    return np.where(bad, NODATA, total)


def sample_bilinear(grid, x, y):
    return float(sample_bilinear_many(grid, [x], [y])[0])


@dataclass(frozen=True)
class Transect:
    """Straight sampling line; ``direction`` is normalized on construction."""

    start: tuple
    direction: tuple
    length_m: float
    id: str = ""

    def __post_init__(self):
        dx, dy = map(float, self.direction)
        norm = math.hypot(dx, dy)
        if not norm > 0:
            raise ValueError("transect direction must be non-zero")
        if not self.length_m > 0:
            raise ValueError("transect length must be positive")
        object.__setattr__(self, "start", (float(self.start[0]), float(self.start[1])))
        object.__setattr__(self, "direction", (dx / norm, dy / norm))
        object.__setattr__(self, "length_m", float(self.length_m))

    @classmethod
    def between(cls, a, b, id=""):
        dx, dy = b[0] - a[0], b[1] - a[1]
        return cls(a, (dx, dy), math.hypot(dx, dy), id)

    def stations(self, spacing_m):
        if not spacing_m > 0:
            raise NonPositiveSpacing(f"profile spacing must be positive, got {spacing_m}")
        count = math.floor(self.length_m / spacing_m + _SNAP_EPS) + 1
        return np.arange(count) * float(spacing_m)

    def points(self, stations):
        stations = np.asarray(stations, dtype=np.float64)
        return (self.start[0] + stations * self.direction[0],
                self.start[1] + stations * self.direction[1])


@dataclass(eq=False)
class SurfaceProfile:
    transect_id: str
    spacing_m: float
    stations: np.ndarray
    elevations: np.ndarray

    def __post_init__(self):
        self.stations = np.asarray(self.stations, dtype=np.float64)
        self.elevations = np.asarray(self.elevations, dtype=np.float64)
        if self.stations.shape != self.elevations.shape or self.stations.ndim != 1:
            raise ValueError("stations and elevations must be 1-D arrays of equal length")

    def __len__(self):
        return len(self.stations)

    @property
    def valid(self):
        return ~np.isnan(self.elevations)

    def __sub__(self, other):
        """Elevation difference on shared stations (e.g. snow depth)."""
        if not np.array_equal(self.stations, other.stations):
            raise ValueError("profiles do not share stations")
        return SurfaceProfile(self.transect_id, self.spacing_m, self.stations,
                              self.elevations - other.elevations)

    def __eq__(self, other):
        if not isinstance(other, SurfaceProfile):
            return NotImplemented
        return (self.transect_id == other.transect_id and self.spacing_m == other.spacing_m
                and np.array_equal(self.stations, other.stations)
                and np.array_equal(self.elevations, other.elevations, equal_nan=True))


def extract_profile(grid, transect, spacing_m=0.05):
    stations = transect.stations(spacing_m)
    xs, ys = transect.points(stations)
    return SurfaceProfile(transect.id, float(spacing_m), stations, sample_bilinear_many(grid, xs, ys))


def diff(winter, reference):
    """Cellwise ``winter - reference``; both grids must be exactly aligned."""
    if not winter.aligned_with(reference):
        raise GridMismatch(
            f"grid mismatch: origin {winter.origin} vs {reference.origin}, "
            f"cell {winter.cell_size_m} vs {reference.cell_size_m}, "
            f"shape {winter.shape} vs {reference.shape}"
        )
    if winter.crs_label and reference.crs_label and winter.crs_label != reference.crs_label:
        raise GridMismatch(f"grid mismatch: CRS {winter.crs_label!r} vs {reference.crs_label!r}")
    return DemGrid(winter.origin, winter.cell_size_m, winter.elevations - reference.elevations,
                   winter.crs_label or reference.crs_label)


def volume(depth_grid, min_depth_m=0.0):
    """Volume (m³) of cells deeper than ``min_depth_m``; nodata cells are skipped."""
    if min_depth_m < 0:
        raise ValueError("min_depth_m must be non-negative")
    d = depth_grid.elevations
    deep = d > min_depth_m  # NaN compares false
    return float(d[deep].sum() * depth_grid.cell_area_m2)


# --- files -----------------------------------------------------------------

_DEM_HEADER = struct.Struct("<dddII")


def write_dem(grid, path):
    label = grid.crs_label.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DEM_MAGIC)
        fh.write(_DEM_HEADER.pack(grid.origin[0], grid.origin[1], grid.cell_size_m,
                                  grid.n_rows, grid.n_cols))
        fh.write(struct.pack("<H", len(label)) + label)
        fh.write(grid.elevations.astype("<f4").tobytes())


def read_dem(path):
    data = Path(path).read_bytes()
    if data[:4] != DEM_MAGIC:
        raise MalformedDemFile(f"{path}: not a DEM1 file")
    try:
        x0, y0, cell, n_rows, n_cols = _DEM_HEADER.unpack_from(data, 4)
        offset = 4 + _DEM_HEADER.size
        (label_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        label = data[offset:offset + label_len].decode("utf-8")
    except (struct.error, UnicodeDecodeError) as exc:
        raise MalformedDemFile(f"{path}: bad header ({exc})") from None
    offset += label_len
    if len(data) - offset != 4 * n_rows * n_cols:
        raise MalformedDemFile(f"{path}: elevation block does not match {n_rows}x{n_cols}")
    z = np.frombuffer(data, dtype="<f4", offset=offset).astype(np.float64).reshape(n_rows, n_cols)
    if np.any(np.isinf(z)):
        raise MalformedDemFile(f"{path}: infinite elevation")
    try:
        return DemGrid((x0, y0), cell, z, label)
    except (ValueError, NonPositiveCell) as exc:
        raise MalformedDemFile(f"{path}: {exc}") from None


def write_profile_csv(profile, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["station_m", "elevation_m"])
        for s, z in zip(profile.stations, profile.elevations):
            writer.writerow([f"{s:.3f}", "" if math.isnan(z) else f"{z:.4f}"])


def read_profile_csv(path, transect_id=""):
    stations, elevations = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            stations.append(float(row["station_m"]))
            z = row["elevation_m"]
            elevations.append(float(z) if z else NODATA)
    spacing = stations[1] - stations[0] if len(stations) > 1 else 0.0
    return SurfaceProfile(transect_id or Path(path).stem, round(spacing, 9), stations, elevations)
