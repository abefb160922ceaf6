"""Measurements on profiles, clouds and intensity images.

Across-road quantities are expressed in profile stations. Threshold
crossings between two valid samples are located by linear interpolation; a
run that ends at nodata or at the end of the profile ends on its last
sample.
"""
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import (EdgesNotFound, EmptyCorridor, EmptyResult, ProfileMismatch,
                     SeedOutsideCloud, TransectTooShort)
from .roadspec import design_roadway_width

DEFAULT_MIN_DEPTH_M = 0.05


def true_runs(mask):
    """Inclusive ``(first, last)`` index pairs of the runs of True in ``mask``."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return []
    edges = np.diff(np.r_[0, mask.astype(np.int8), 0])
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1) - 1
    return list(zip(starts.tolist(), stops.tolist()))


def _crossing(s0, v0, s1, v1, level):
    return s0 + (level - v0) / (v1 - v0) * (s1 - s0)


def _run_span(stations, values, valid, first, last, level):
    """Station span of a run, extended to the interpolated level crossings."""
    n = len(stations)
    start = stations[first]
    if first > 0 and valid[first - 1]:
        start = _crossing(stations[first - 1], values[first - 1], stations[first], values[first], level)
    end = stations[last]
    if last < n - 1 and valid[last + 1]:
        end = _crossing(stations[last], values[last], stations[last + 1], values[last + 1], level)
    return float(start), float(end)


def _depth(profile, reference):
    if not np.array_equal(profile.stations, reference.stations):
        raise ProfileMismatch("profile and reference do not share stations")
    return profile.elevations - reference.elevations


@dataclass(frozen=True)
class SnowFeature:
    start_station_m: float
    end_station_m: float
    max_depth_m: float
    area_m2: float

    @property
    def extent_m(self):
        return self.end_station_m - self.start_station_m


def detect_snow_features(profile, reference, min_depth_m=DEFAULT_MIN_DEPTH_M, min_extent_m=0.0):
    """Runs of the profile standing more than ``min_depth_m`` above the reference."""
    if not min_depth_m > 0:
        raise ValueError("min_depth_m must be positive")
    depth = _depth(profile, reference)
    stations = profile.stations
    valid = ~np.isnan(depth)
    over = valid & (depth > min_depth_m)
    features = []
    for first, last in true_runs(over):
        start, end = _run_span(stations, depth, valid, first, last, min_depth_m)
        if end - start < min_extent_m:
            continue
        xs = [start] if start < stations[first] else []
        ys = [min_depth_m] if xs else []
        xs += stations[first:last + 1].tolist()
        ys += depth[first:last + 1].tolist()
        if end > stations[last]:
            xs.append(end)
            ys.append(min_depth_m)
        features.append(SnowFeature(start, end, float(depth[first:last + 1].max()),
                                    float(np.trapezoid(ys, xs))))
    return features


@dataclass(frozen=True)
class WidthMeasurement:
    transect_id: str
    effective_width_m: float
    design_roadway_width_m: float
    deficit_m: float
    clear_span: tuple | None
    fully_blocked: bool

    def to_dict(self):
        return {
            "transect_id": self.transect_id,
            "effective_width_m": self.effective_width_m,
            "design_roadway_width_m": self.design_roadway_width_m,
            "deficit_m": self.deficit_m,
            "clear_span": list(self.clear_span) if self.clear_span is not None else None,
            "fully_blocked": self.fully_blocked,
        }


def effective_width(profile, reference, design, min_depth_m=DEFAULT_MIN_DEPTH_M, roadway_start_m=0.0):
    """Longest clear span inside the designed roadway.

    The roadway occupies stations ``[roadway_start_m, roadway_start_m + W]``
    where ``W`` is the design roadway width (``design`` may be a
    :class:`~winterscan.roadspec.DesignCrossSection` or a width in metres).
    Stations whose depth is nodata count as blocked.
    """
    width = float(design) if isinstance(design, (int, float)) else design_roadway_width(design)
    depth = _depth(profile, reference)
    stations = profile.stations
    lo, hi = roadway_start_m, roadway_start_m + width
    tol = profile.spacing_m / 2 + 1e-9
    if len(stations) == 0 or stations[0] > lo + tol or stations[-1] < hi - tol:
        raise TransectTooShort(
            f"profile {profile.transect_id!r} covers stations "
            f"[{stations[0] if len(stations) else 0:g}, {stations[-1] if len(stations) else 0:g}], "
            f"roadway needs [{lo:g}, {hi:g}]"
        )
    valid = ~np.isnan(depth)
    clear = valid & (depth <= min_depth_m)
    lo_clip, hi_clip = max(lo, float(stations[0])), min(hi, float(stations[-1]))

    best = None
    for first, last in true_runs(clear):
        start, end = _run_span(stations, depth, valid, first, last, min_depth_m)
        start, end = max(start, lo_clip), min(end, hi_clip)
        if end <= start:
            continue
        if best is None or end - start > best[1] - best[0]:
            best = (start, end)

    if best is None:
        return WidthMeasurement(profile.transect_id, 0.0, width, width, None, True)
    effective = best[1] - best[0]
    return WidthMeasurement(profile.transect_id, effective, width, width - effective, best, False)


def detect_profile_edges(profile, drop_m=0.15):
    """Stations ``(left, right)`` where the roadway ends on either side.

    The roadway level is the median elevation of the central third of the
    profile. On each half, the outermost sample lying at least ``drop_m``
    below that level marks ground beyond the roadway; walking inward from it,
    the edge is where the surface climbs back above ``level - drop_m``.
    """
    z = profile.elevations
    st = profile.stations
    valid = ~np.isnan(z)
    if valid.sum() < 3:
        raise EdgesNotFound("profile needs at least three valid samples")
    span = st[-1] - st[0]
    central = valid & (st >= st[0] + span / 3) & (st <= st[0] + 2 * span / 3)
    if not central.any():
        raise EdgesNotFound("no valid samples in the central third")
    cut = float(np.median(z[central])) - drop_m
    fallen = valid & (z <= cut)
    mid = len(st) // 2

    def walk(indices):
        fallen_at = [i for i in indices if fallen[i]]
        if not fallen_at:
            return None
        last_fallen = fallen_at[0]
        for i in indices[indices.index(last_fallen):]:
            if not valid[i]:
                continue
            if fallen[i]:
                last_fallen = i
            else:
                return float(_crossing(st[last_fallen], z[last_fallen], st[i], z[i], cut))
        return None

    left = walk(list(range(0, mid)))
    right = walk(list(range(len(st) - 1, mid - 1, -1)))
    if left is None or right is None:
        raise EdgesNotFound(f"no drop of {drop_m} m below the roadway level on "
                            f"{'both sides' if left is None and right is None else 'one side'}")
    return left, right


@dataclass(eq=False)
class SegmentationResult:
    member_indices: np.ndarray
    seed: tuple
    params: dict = field(default_factory=dict)
    cell_count: int = 0

    def __len__(self):
        return len(self.member_indices)


def _cell_medians(keys, values, n_cells):
    """Median of ``values`` per integer key, independent of input order."""
    order = np.lexsort((values, keys))
    k, v = keys[order], values[order]
    starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
    counts = np.diff(np.r_[starts, len(k)])
    lo = starts + (counts - 1) // 2
    hi = starts + counts // 2
    med = np.full(n_cells, np.nan)
    med[k[starts]] = (v[lo] + v[hi]) / 2
    return med


def segment_road(cloud, seed, cell_m=0.25, max_step_m=0.05, max_slope=0.15, intensity_band=None):
    """Region-grow the road surface over a grid of cell medians.

    A neighbouring cell (8-connectivity) joins when its median elevation
    differs by at most ``max_step_m`` and the implied slope is at most
    ``max_slope``, and, with ``intensity_band=(lo, hi)``, its median intensity
    lies in the band. The grid is anchored at the cloud's minimum corner so the
    result is unchanged by translating the cloud. Members are the points of
    accepted cells lying within ``max_step_m`` of their cell median.
    """
    if not cell_m > 0:
        raise ValueError("cell_m must be positive")
    xmin, ymin, xmax, ymax = cloud.bounds()
    sx, sy = float(seed[0]), float(seed[1])
    if not (xmin <= sx <= xmax and ymin <= sy <= ymax):
        raise SeedOutsideCloud(f"seed ({sx}, {sy}) lies outside the cloud bounds")
    n_cols = int((xmax - xmin) // cell_m) + 1
    n_rows = int((ymax - ymin) // cell_m) + 1
    cols = ((cloud.x - xmin) // cell_m).astype(np.int64)
    rows = ((cloud.y - ymin) // cell_m).astype(np.int64)
    flat = rows * n_cols + cols
    n_cells = n_rows * n_cols
    med_z = _cell_medians(flat, cloud.z, n_cells)

    seed_cell = int((sy - ymin) // cell_m) * n_cols + int((sx - xmin) // cell_m)
    if np.isnan(med_z[seed_cell]):
        raise EmptyResult("the seed cell holds no points")

    ok_cell = ~np.isnan(med_z)
    if intensity_band is not None:
        if cloud.intensity is None:
            raise ValueError("intensity_band given but the cloud has no intensity")
        med_i = _cell_medians(flat, cloud.intensity.astype(np.float64), n_cells)
        lo, hi = intensity_band
        ok_cell &= (med_i >= lo) & (med_i <= hi)
        ok_cell[seed_cell] = True

    grid = med_z.reshape(n_rows, n_cols)
    ok = ok_cell.reshape(n_rows, n_cols)
    src, dst = [], []
    ids = np.arange(n_cells).reshape(n_rows, n_cols)
    for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
        r0, r1 = slice(0, n_rows - dr), slice(dr, n_rows)
        c0 = slice(max(0, -dc), n_cols - max(0, dc))
        c1 = slice(max(0, dc), n_cols - max(0, -dc))
        a, b = grid[r0, c0], grid[r1, c1]
        step = np.abs(b - a)
        dist = cell_m * (2 ** 0.5 if dr and dc else 1.0)
        joined = ok[r0, c0] & ok[r1, c1] & (step <= max_step_m) & (step / dist <= max_slope)
        src.append(ids[r0, c0][joined])
        dst.append(ids[r1, c1][joined])
    src = np.concatenate(src)
    dst = np.concatenate(dst)
    graph = coo_matrix((np.ones(len(src), dtype=np.int8), (src, dst)), shape=(n_cells, n_cells))
    _, component = connected_components(graph, directed=False)
    accepted = component == component[seed_cell]
    accepted &= ok_cell

    members = accepted[flat] & (np.abs(cloud.z - med_z[flat]) <= max_step_m)
    params = {"cell_m": cell_m, "max_step_m": max_step_m, "max_slope": max_slope,
              "intensity_band": None if intensity_band is None else tuple(intensity_band)}
    return SegmentationResult(np.flatnonzero(members), (sx, sy, float(seed[2]) if len(seed) > 2 else None),
                              params, int(accepted.sum()))


BankWidth = namedtuple("BankWidth", "station_m width_m")


def _polyline_frames(line, stations):
    line = np.asarray(line, dtype=np.float64)
    seg = np.diff(line, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    keep = seg_len > 0
    seg, seg_len, starts = seg[keep], seg_len[keep], line[:-1][keep]
    if len(seg) == 0:
        raise ValueError("centerline needs at least two distinct points")
    cum = np.r_[0.0, np.cumsum(seg_len)]
    k = np.clip(np.searchsorted(cum, stations, side="right") - 1, 0, len(seg) - 1)
    tangent = seg[k] / seg_len[k][:, None]
    pos = starts[k] + tangent * (stations - cum[k])[:, None]
    return pos, tangent, cum[-1]


def _rise(centers, medians, level, height):
    """Lateral position where binned elevations first reach ``level + height``."""
    target = level + height
    prev = None
    for c, m in zip(centers, medians):
        if np.isnan(m):
            continue
        if m >= target:
            if prev is None:
                return float(c)
            return float(_crossing(prev[0], prev[1], c, m, target))
        prev = (c, m)
    return None


def snowbank_width(map_cloud, centerline, station_step_m=1.0, bank_height_m=0.2, cell_m=0.1,
                   strip_half_length_m=0.25, max_half_width_m=15.0, core_half_width_m=1.0):
    """Distance between the inner faces of the snow-banks along a centreline.

    At every station a strip ``2 * strip_half_length_m`` long is cut across the
    road and binned laterally at ``cell_m``. The local road level is the
    median elevation within ``core_half_width_m`` of the centreline; on each
    side the bank face is where the bin medians first reach
    ``bank_height_m`` above it. Returns ``(station_m, width_m)`` pairs with
    ``width_m = None`` where either side has no bank.
    """
    line = np.asarray(centerline, dtype=np.float64)
    seg_total = float(np.hypot(*np.diff(line, axis=0).T).sum())
    stations = np.arange(0.0, seg_total + 1e-9, station_step_m)
    pos, tangent, _ = _polyline_frames(line, stations)
    normal = np.column_stack([-tangent[:, 1], tangent[:, 0]])
    tree = cKDTree(map_cloud.xyz[:, :2])
    radius = float(np.hypot(strip_half_length_m, max_half_width_m))
    neighbours = tree.query_ball_point(pos, radius)
    n_bins = int(np.ceil(max_half_width_m / cell_m))
    centers = (np.arange(n_bins) + 0.5) * cell_m

    results = []
    any_points = False
    for s, p, t, nrm, idx in zip(stations, pos, tangent, normal, neighbours):
        idx = np.sort(np.asarray(idx, dtype=np.int64))
        rel = map_cloud.xyz[idx, :2] - p
        along = rel @ t
        lateral = rel @ nrm
        sel = (np.abs(along) <= strip_half_length_m) & (np.abs(lateral) <= max_half_width_m)
        lateral, z = lateral[sel], map_cloud.z[idx[sel]]
        if len(z) == 0:
            results.append(BankWidth(float(s), None))
            continue
        any_points = True
        core = np.abs(lateral) <= core_half_width_m
        if not core.any():
            results.append(BankWidth(float(s), None))
            continue
        level = float(np.median(z[core]))
        b = np.clip(np.floor(lateral / cell_m).astype(np.int64), -n_bins, n_bins - 1)
        left = b >= 0
        left_med = _cell_medians(b[left], z[left], n_bins) if left.any() else np.full(n_bins, np.nan)
        right_med = (_cell_medians(-b[~left] - 1, z[~left], n_bins) if (~left).any()
                     else np.full(n_bins, np.nan))
        lf = _rise(centers, left_med, level, bank_height_m)
        rt = _rise(centers, right_med, level, bank_height_m)
        width = None if lf is None or rt is None else lf + rt
        results.append(BankWidth(float(s), width))
    if not any_points:
        raise EmptyCorridor("no map points near the centreline")
    return results


@dataclass(eq=False)
class MarkingDetection:
    mask: np.ndarray
    clusters: list  # inclusive (first_col, last_col) pairs

    @property
    def widths(self):
        return [last - first + 1 for first, last in self.clusters]


def detect_markings(image, threshold=0.5):
    """Bright pixels and the column runs where they fill most of the column.

    ``image`` is an :class:`~winterscan.lidarimg.IntensityImage` or a 2-D
    array. A column belongs to a cluster when more than half of its pixels
    exceed ``threshold``.
    """
    values = np.asarray(getattr(image, "values", image), dtype=np.float64)
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    if values is not image and hasattr(image, "values") and not threshold < 1:
        raise ValueError("threshold must lie in (0, 1) for normalized images")
    mask = values > threshold
    heavy = mask.sum(axis=0) * 2 > values.shape[0]
    return MarkingDetection(mask, true_runs(heavy))
