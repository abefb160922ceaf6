"""Deterministic synthetic roads with closed-form surfaces, used as test oracles.

Road frame: ``along`` is arc length on the centreline, ``offset`` the signed
lateral distance (positive to the left of travel). Across-road *stations* are
measured from the left roadway edge, ``station = roadway_width / 2 - offset``,
so the designed roadway occupies stations ``[0, roadway_width]``.

The bare surface is a crowned roadway (tent with its apex on the centreline),
fore slopes dropping away beyond both edges, and flat ground further out.
Winter adds snow heaps (Gaussian across the road, with an optional plateau
along it) and optional flat-topped snow-banks. Obstacles are boxes present
in both epochs.
"""
import enum
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .dem import SurfaceProfile, Transect
from .ingest.cloud import PointCloud
from .kvtext import parse_sections


class Epoch(enum.Enum):
    BARE = "bare"
    WINTER = "winter"


class Label(enum.IntEnum):
    ROAD = 0
    SNOW = 1
    OFF_ROAD = 2
    OBSTACLE = 3


# snow thinner than this still counts as road surface for labelling
SNOW_LABEL_MIN_DEPTH_M = 0.01

INTENSITY = {Label.ROAD: 0.15, Label.SNOW: 0.8, Label.OFF_ROAD: 0.3, Label.OBSTACLE: 0.5}


@dataclass(frozen=True)
class SnowHeap:
    """Gaussian heap across the road.

    Without ``along_center_m`` the heap is a ridge running the full road
    length. With it, the heap has a flat plateau ``along_extent_m`` long and
    Gaussian flanks (same sigma) beyond the plateau; ``along_extent_m = 0``
    gives an isotropic heap of volume ``2 pi sigma^2 peak``.
    """

    center_station_m: float
    peak_m: float
    sigma_m: float
    along_center_m: float | None = None
    along_extent_m: float = 0.0

    def depth(self, station, along):
        d = self.peak_m * np.exp(-0.5 * ((station - self.center_station_m) / self.sigma_m) ** 2)
        if self.along_center_m is not None:
            gap = np.maximum(np.abs(along - self.along_center_m) - self.along_extent_m / 2, 0.0)
            d = d * np.exp(-0.5 * (gap / self.sigma_m) ** 2)
        return d

    def volume(self, road_length_m):
        cross = self.peak_m * self.sigma_m * math.sqrt(2 * math.pi)
        if self.along_center_m is None:
            return cross * road_length_m
        return cross * (self.along_extent_m + self.sigma_m * math.sqrt(2 * math.pi))


@dataclass(frozen=True)
class Obstacle:
    """Box standing on the surface, given in road-frame coordinates."""

    along_start_m: float
    along_end_m: float
    station_start_m: float
    station_end_m: float
    height_m: float

    def contains(self, station, along):
        return ((along >= self.along_start_m) & (along <= self.along_end_m)
                & (station >= self.station_start_m) & (station <= self.station_end_m))


@dataclass(frozen=True)
class SyntheticRoadSpec:
    roadway_width_m: float = 8.0
    crown_slope: float = 0.03
    fore_slope_drop_m: float = 0.3
    fore_slope_run_m: float = 0.1
    margin_m: float = 2.0
    length_m: float = 50.0
    snow_features: tuple = ()
    bank_gap_m: float | None = None
    bank_height_m: float = 0.4
    bank_width_m: float = 1.0
    obstacles: tuple = ()
    point_density: float = 100.0
    seed: int = 0
    jitter_m: float = 0.005
    curve_radius_m: float | None = None
    base_elevation_m: float = 0.0
    origin: tuple = (0.0, 0.0)
    crs_label: str = "ETRS-GK26FIN"

    def __post_init__(self):
        object.__setattr__(self, "snow_features", tuple(self.snow_features))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for name in ("roadway_width_m", "length_m", "point_density"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("crown_slope", "fore_slope_drop_m", "fore_slope_run_m", "margin_m",
                     "jitter_m", "bank_height_m", "bank_width_m"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.bank_gap_m is not None and not self.bank_gap_m > 0:
            raise ValueError("bank_gap_m must be positive")
        if self.curve_radius_m is not None and abs(self.curve_radius_m) <= self.half_extent_m:
            raise ValueError("curve radius must exceed the half width of the generated strip")
        for heap in self.snow_features:
            if not (heap.peak_m > 0 and heap.sigma_m > 0 and heap.along_extent_m >= 0):
                raise ValueError("snow heaps need positive peak and sigma")

    @property
    def half_extent_m(self):
        """Half width of the generated strip (roadway, fore slopes and margins)."""
        return self.roadway_width_m / 2 + self.fore_slope_run_m + self.margin_m

    # --- surface ------------------------------------------------------------

    def station_of(self, offset):
        return self.roadway_width_m / 2 - offset

    def bare_surface(self, along, offset):
        a = np.abs(offset)
        half = self.roadway_width_m / 2
        z = self.base_elevation_m - self.crown_slope * np.minimum(a, half)
        beyond = np.maximum(a - half, 0.0)
        if self.fore_slope_run_m > 0:
            frac = np.minimum(beyond / self.fore_slope_run_m, 1.0)
        else:
            frac = (beyond > 0).astype(np.float64)
        z = z - self.fore_slope_drop_m * frac
        return z + self.obstacle_height(along, offset)

    def obstacle_height(self, along, offset):
        station = self.station_of(offset)
        h = np.zeros(np.broadcast(along, offset).shape)
        for box in self.obstacles:
            h = np.where(box.contains(station, along), np.maximum(h, box.height_m), h)
        return h

    def snow_depth(self, along, offset):
        """Analytic winter-minus-bare depth at road-frame coordinates."""
        station = self.station_of(offset)
        depth = np.zeros(np.broadcast(along, offset).shape)
        for heap in self.snow_features:
            depth = depth + heap.depth(station, along)
        if self.bank_gap_m is not None:
            a = np.abs(offset)
            inner = self.bank_gap_m / 2
            depth = depth + np.where((a >= inner) & (a <= inner + self.bank_width_m),
                                     self.bank_height_m, 0.0)
        return depth

    def surface(self, along, offset, epoch):
        z = self.bare_surface(along, offset)
        if Epoch(epoch) is Epoch.WINTER:
            z = z + self.snow_depth(along, offset)
        return z

    # --- geometry -----------------------------------------------------------

    def to_world(self, along, offset):
        along = np.asarray(along, dtype=np.float64)
        offset = np.asarray(offset, dtype=np.float64)
        x0, y0 = self.origin
        if self.curve_radius_m is None:
            return x0 + along, y0 + offset
        r = self.curve_radius_m
        theta = along / r
        return x0 + (r - offset) * np.sin(theta), y0 + r - (r - offset) * np.cos(theta)

    def to_road(self, x, y):
        """Inverse of :meth:`to_world`: ``(along, offset)`` of world points."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        x0, y0 = self.origin
        if self.curve_radius_m is None:
            return x - x0, y - y0
        r = self.curve_radius_m
        dx, dy = x - x0, y0 + r - y
        rho = math.copysign(1.0, r) * np.hypot(dx, dy)
        theta = np.arctan2(dx / rho, dy / rho)
        return r * theta, r - rho

    def left_normal(self, along):
        if self.curve_radius_m is None:
            return 0.0, 1.0
        theta = along / self.curve_radius_m
        return -math.sin(theta), math.cos(theta)


def roadway_transect(spec, along_m, overhang_m=0.0, id=None):
    """Transect across the road at ``along_m``, station 0 at the left roadway edge.

    ``overhang_m`` extends the transect beyond both edges; station 0 then lies
    ``overhang_m`` outside the left edge.
    """
    half = spec.roadway_width_m / 2 + overhang_m
    x, y = spec.to_world(along_m, half)
    nx, ny = spec.left_normal(along_m)
    return Transect((float(x), float(y)), (-nx, -ny), 2 * half,
                    id if id is not None else f"s{along_m:g}")


def centerline(spec, step_m=1.0):
    """Centreline polyline as an ``(n, 2)`` array of world coordinates."""
    n = max(1, math.ceil(spec.length_m / step_m))
    along = np.linspace(0.0, spec.length_m, n + 1)
    x, y = spec.to_world(along, np.zeros_like(along))
    return np.column_stack([x, y])


@dataclass(eq=False)
class SyntheticCloud:
    cloud: PointCloud
    labels: np.ndarray
    along: np.ndarray
    offset: np.ndarray


def generate_cloud(spec, epoch=Epoch.BARE):
    """Sample the synthetic surface on a jittered lattice.

    The lattice, its jitter and the vertical noise come from ``spec.seed``
    alone, so both epochs share identical planimetric positions and noise and
    differ only by the snow. Each lattice stratum holds exactly one point,
    giving ``round(length * density**0.5) * round(width * density**0.5)``
    points.
    """
    epoch = Epoch(epoch)
    rng = np.random.default_rng(spec.seed)
    step = 1.0 / math.sqrt(spec.point_density)
    width = 2 * spec.half_extent_m
    n_along = max(1, round(spec.length_m / step))
    n_across = max(1, round(width / step))
    n = n_along * n_across
    u_along = rng.random(n)
    u_across = rng.random(n)
    noise = rng.uniform(-spec.jitter_m, spec.jitter_m, n) if spec.jitter_m > 0 else np.zeros(n)

    i = np.repeat(np.arange(n_along), n_across)
    j = np.tile(np.arange(n_across), n_along)
    along = (i + u_along) * (spec.length_m / n_along)
    offset = -spec.half_extent_m + (j + u_across) * (width / n_across)

    z = spec.surface(along, offset, epoch) + noise
    x, y = spec.to_world(along, offset)

    labels = np.where(np.abs(offset) <= spec.roadway_width_m / 2, Label.ROAD, Label.OFF_ROAD)
    if epoch is Epoch.WINTER:
        labels = np.where(spec.snow_depth(along, offset) > SNOW_LABEL_MIN_DEPTH_M, Label.SNOW, labels)
    if spec.obstacles:
        labels = np.where(spec.obstacle_height(along, offset) > 0, Label.OBSTACLE, labels)
    labels = labels.astype(np.uint8)
    intensity = np.zeros(n, dtype=np.float32)
    for label, value in INTENSITY.items():
        intensity[labels == label] = value

    cloud = PointCloud(np.column_stack([x, y, z]), intensity=intensity, crs_label=spec.crs_label)
    return SyntheticCloud(cloud, labels, along, offset)


def analytic_profile(spec, epoch, transect, spacing_m=0.05):
    """Exact surface elevations along ``transect`` (no sampling or noise)."""
    stations = transect.stations(spacing_m)
    xs, ys = transect.points(stations)
    along, offset = spec.to_road(xs, ys)
    return SurfaceProfile(transect.id, float(spacing_m), stations, spec.surface(along, offset, epoch))


# --- spec files --------------------------------------------------------------

_FLOAT_KEYS = {f.name for f in fields(SyntheticRoadSpec)} - {
    "snow_features", "obstacles", "seed", "origin", "crs_label"}


def parse_road_spec(text):
    """Build a :class:`SyntheticRoadSpec` from ``[road]``/``[snow]``/``[obstacle]`` sections."""
    road = {}
    heaps, boxes = [], []
    for section in parse_sections(text):
        values = section.values
        line = section.line
        try:
            if section.name == "road":
                for key, value in values.items():
                    line = section.lines.get(key, section.line)
                    if key in _FLOAT_KEYS:
                        road[key] = None if value.lower() == "none" else float(value)
                    elif key == "seed":
                        road[key] = int(value)
                    elif key == "origin":
                        x, y = value.split(",")
                        road[key] = (float(x), float(y))
                    elif key == "crs_label":
                        road[key] = value
                    else:
                        raise ValueError(f"unknown key {key!r}")
            elif section.name == "snow":
                kw = {k: float(v) for k, v in values.items()}
                heaps.append(SnowHeap(**kw))
            elif section.name == "obstacle":
                boxes.append(Obstacle(**{k: float(v) for k, v in values.items()}))
            else:
                raise ValueError(f"unknown section [{section.name}]")
        except (TypeError, ValueError) as exc:
            raise ValueError(f"line {line}: {exc}") from None
    return SyntheticRoadSpec(**road, snow_features=tuple(heaps), obstacles=tuple(boxes))


def load_road_spec(path):
    return parse_road_spec(Path(path).read_text(encoding="utf-8"))


def format_road_spec(spec):
    """Text form accepted by :func:`parse_road_spec`."""
    lines = ["[road]"]
    for f in fields(SyntheticRoadSpec):
        value = getattr(spec, f.name)
        if f.name in ("snow_features", "obstacles"):
            continue
        if f.name == "origin":
            value = f"{value[0]!r},{value[1]!r}"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    for heap in spec.snow_features:
        lines.append("")
        lines.append("[snow]")
        for f in fields(SnowHeap):
            value = getattr(heap, f.name)
            if value is not None:
                lines.append(f"{f.name} = {value!r}")
    for box in spec.obstacles:
        lines.append("")
        lines.append("[obstacle]")
        for f in fields(Obstacle):
            lines.append(f"{f.name} = {getattr(box, f.name)!r}")
    return "\n".join(lines) + "\n"
