import math
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from winterscan import dem, synthgen
from winterscan.dem import DemGrid, SurfaceProfile, Transect
from winterscan.errors import EmptyCloud, GridMismatch, NonPositiveCell, NonPositiveSpacing
from winterscan.ingest import PointCloud


def _plane_cloud(rng, n, fn, extent=(0.0, 0.0, 10.0, 6.0)):
    x = rng.uniform(extent[0], extent[2], n)
    y = rng.uniform(extent[1], extent[3], n)
    return PointCloud(np.column_stack([x, y, fn(x, y)]))


def _grid_from_field(fn, origin=(100.0, 200.0), cell=0.5, shape=(8, 12)):
    xs = origin[0] + (np.arange(shape[1]) + 0.5) * cell
    ys = origin[1] + (np.arange(shape[0]) + 0.5) * cell
    X, Y = np.meshgrid(xs, ys)
    return DemGrid(origin, cell, fn(X, Y))


# --- rasterize --------------------------------------------------------------------

@pytest.mark.parametrize("cell", [0.1, 0.25, 0.7])
def test_rasterize_horizontal_plane(rng, cell):
    grid = dem.rasterize(_plane_cloud(rng, 5000, lambda x, y: np.full_like(x, 5.0)), cell)
    covered = grid.elevations[grid.valid]
    assert covered.size > 0
    assert np.all(covered == 5.0)


def test_rasterize_mean_matches_bucketing_oracle(rng):
    cloud = _plane_cloud(rng, 4000, lambda x, y: 0.1 * x, extent=(0.03, -1.37, 7.9, 3.3))
    cell = 0.5
    grid = dem.rasterize(cloud, cell)
    # independent oracle: python loop bucketing with integer cell keys
    x0 = math.floor(0.03 / cell) * cell
    y0 = math.floor(-1.37 / cell) * cell
    assert grid.origin == pytest.approx((x0, y0))
    buckets = defaultdict(list)
    for x, y, z in cloud.xyz:
        buckets[(int((y - y0) // cell), int((x - x0) // cell))].append(z)
    assert int(grid.valid.sum()) == len(buckets)
    for (r, c), zs in buckets.items():
        assert grid.elevations[r, c] == pytest.approx(sum(zs) / len(zs), abs=1e-12)


@pytest.mark.parametrize("agg, fn", [("max", max), ("min", min)])
def test_rasterize_max_min(rng, agg, fn):
    cloud = _plane_cloud(rng, 2000, lambda x, y: np.sin(x) + y)
    grid = dem.rasterize(cloud, 1.0, agg)
    buckets = defaultdict(list)
    for x, y, z in cloud.xyz:
        buckets[(int((y - grid.origin[1]) // 1.0), int((x - grid.origin[0]) // 1.0))].append(z)
    for (r, c), zs in buckets.items():
        assert grid.elevations[r, c] == fn(zs)


def test_rasterize_gap_is_nodata():
    # 0.05 m lattice over 10 x 10 m with a 2 x 2 m hole
    g = np.arange(0.025, 10, 0.05)
    X, Y = np.meshgrid(g, g)
    keep = ~((X > 4) & (X < 6) & (Y > 4) & (Y < 6))
    cloud = PointCloud(np.column_stack([X[keep], Y[keep], np.zeros(keep.sum())]))
    grid = dem.rasterize(cloud, 0.5)
    xs, ys = grid.cell_centers()
    hole = (xs[None, :] > 4) & (xs[None, :] < 6) & (ys[:, None] > 4) & (ys[:, None] < 6)
    assert hole.sum() == 16
    assert np.all(np.isnan(grid.elevations[hole]))
    assert np.all(grid.elevations[~hole] == 0.0)


def test_rasterize_errors():
    with pytest.raises(EmptyCloud):
        dem.rasterize(PointCloud(np.zeros((0, 3))), 0.1)
    with pytest.raises(NonPositiveCell):
        dem.rasterize(PointCloud(np.zeros((1, 3))), 0.0)


def test_rasterize_permutation_invariant(rng):
    cloud = _plane_cloud(rng, 20000, lambda x, y: rng.normal(size=x.shape))
    perm = rng.permutation(len(cloud))
    for agg in ("mean", "max", "min"):
        assert dem.rasterize(cloud, 0.3, agg) == dem.rasterize(cloud.subset(perm), 0.3, agg)


def test_rasterize_shared_bounds_align_epochs(rng):
    a = _plane_cloud(rng, 500, lambda x, y: x, extent=(0.2, 0.2, 9.0, 5.0))
    b = _plane_cloud(rng, 500, lambda x, y: x, extent=(1.0, 0.6, 8.0, 6.0))
    bounds = (0.0, 0.0, 10.0, 6.0)
    ga, gb = dem.rasterize(a, 0.5, bounds=bounds), dem.rasterize(b, 0.5, bounds=bounds)
    assert ga.aligned_with(gb) and ga.shape == (12, 20)


# --- fill_holes -------------------------------------------------------------------------

def test_fill_radius_zero_is_identity():
    z = np.arange(20.0).reshape(4, 5)
    z[1, 2] = np.nan
    grid = DemGrid((0, 0), 1.0, z)
    assert dem.fill_holes(grid, 0) == grid


def test_fill_single_hole_uniform():
    z = np.full((5, 5), 5.0)
    z[2, 2] = np.nan
    out = dem.fill_holes(DemGrid((0, 0), 1.0, z), 1)
    assert out.elevations[2, 2] == 5.0


def test_fill_single_hole_on_tilted_plane():
    plane = lambda x, y: 0.1 * x + 0.03 * y + 2.0  # noqa: E731
    grid = _grid_from_field(plane, origin=(0.0, 0.0), cell=1.0, shape=(7, 7))
    z = grid.elevations.copy()
    z[3, 3] = np.nan
    out = dem.fill_holes(DemGrid(grid.origin, 1.0, z), 2)
    # explicit inverse-distance-weighting over the disk of radius 2
    num = den = 0.0
    for dr in range(-2, 3):
        for dc in range(-2, 3):
            d = math.hypot(dr, dc)
            if 0 < d <= 2:
                w = 1 / d ** 2
                num += w * z[3 + dr, 3 + dc]
                den += w
    assert out.elevations[3, 3] == pytest.approx(num / den, abs=1e-12)
    assert out.elevations[3, 3] == pytest.approx(plane(3.5, 3.5), abs=1e-6)


def test_fill_leaves_far_holes_and_valid_cells():
    z = np.full((9, 9), np.nan)
    z[0, 0] = 1.0
    out = dem.fill_holes(DemGrid((0, 0), 1.0, z), 2)
    assert out.elevations[0, 0] == 1.0
    assert not np.isnan(out.elevations[2, 0]) and not np.isnan(out.elevations[1, 1])
    assert np.isnan(out.elevations[2, 2])  # distance sqrt(8) > 2
    assert np.isnan(out.elevations[8, 8])


@given(st.integers(0, 3), st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_fill_property(radius, seed):
    r = np.random.default_rng(seed)
    z = r.normal(size=(10, 10))
    z[r.random((10, 10)) < 0.4] = np.nan
    out = dem.fill_holes(DemGrid((0, 0), 1.0, z), radius).elevations
    valid = ~np.isnan(z)
    assert np.array_equal(out[valid], z[valid])
    for i, j in zip(*np.nonzero(~valid)):
        near = any(valid[a, b] for a in range(10) for b in range(10)
                   if 0 < (a - i) ** 2 + (b - j) ** 2 <= radius ** 2)
        assert np.isnan(out[i, j]) != near


# --- sample_bilinear -----------------------------------------------------------------------

def test_sample_at_cell_centres():
    grid = _grid_from_field(lambda x, y: np.sin(x) * y)
    xs, ys = grid.cell_centers()
    for r in (0, 3, grid.n_rows - 1):
        for c in (0, 5, grid.n_cols - 1):
            assert dem.sample_bilinear(grid, xs[c], ys[r]) == grid.elevations[r, c]


def test_sample_midpoint():
    grid = DemGrid((0, 0), 1.0, np.array([[1.0, 3.0]]))
    assert dem.sample_bilinear(grid, 1.0, 0.5) == 2.0


def test_sample_exact_on_linear_field(rng):
    a, b, c = 0.37, -1.25, 12.5
    grid = _grid_from_field(lambda x, y: a * x + b * y + c)
    x0, y0, x1, y1 = grid.bounds()
    xq = rng.uniform(x0 + 0.25, x1 - 0.25, 2000)
    yq = rng.uniform(y0 + 0.25, y1 - 0.25, 2000)
    got = dem.sample_bilinear_many(grid, xq, yq)
    np.testing.assert_allclose(got, a * xq + b * yq + c, rtol=0, atol=1e-9)


def test_sample_nodata_and_outside():
    z = np.ones((3, 3))
    z[1, 1] = np.nan
    grid = DemGrid((0, 0), 1.0, z)
    assert math.isnan(dem.sample_bilinear(grid, 1.2, 1.2))
    assert math.isnan(dem.sample_bilinear(grid, -5, 1))
    assert math.isnan(dem.sample_bilinear(grid, 0.2, 0.5))  # inside the grid, outside the centre hull
    assert dem.sample_bilinear(grid, 0.5, 2.0) == 1.0       # nodata cell has zero weight here


# --- profiles ------------------------------------------------------------------------------------

def test_profile_constant_plane():
    grid = _grid_from_field(lambda x, y: np.full_like(x, 5.0))
    t = Transect((101.0, 201.0), (1.0, 0.5), 3.0, "t")
    prof = dem.extract_profile(grid, t, 0.1)
    assert len(prof) == 31
    assert np.all(prof.elevations == 5.0)
    assert prof.stations[0] == 0 and np.allclose(np.diff(prof.stations), 0.1)


def test_profile_count_and_spacing_errors():
    grid = _grid_from_field(lambda x, y: x)
    t = Transect((101.0, 201.0), (0.0, 1.0), 1.0, "t")
    assert len(dem.extract_profile(grid, t, 0.3)) == 4
    assert len(dem.extract_profile(grid, t, 0.25)) == 5
    with pytest.raises(NonPositiveSpacing):
        dem.extract_profile(grid, t, 0.0)


def test_profile_crown_apex():
    spec = synthgen.SyntheticRoadSpec(crown_slope=0.03, point_density=400, length_m=6.0, jitter_m=0.0)
    grid = dem.rasterize(synthgen.generate_cloud(spec).cloud, 0.1)
    t = synthgen.roadway_transect(spec, 3.0, overhang_m=1.0)
    prof = dem.extract_profile(grid, t, 0.05)
    centre = 1.0 + spec.roadway_width_m / 2
    apex = prof.stations[np.nanargmax(prof.elevations)]
    assert abs(apex - centre) <= 0.05 + 1e-9


def test_profile_half_off_grid():
    grid = DemGrid((0, 0), 1.0, np.zeros((4, 4)))
    prof = dem.extract_profile(grid, Transect((1.0, 2.0), (1.0, 0.0), 6.0), 0.5)
    inside = prof.stations <= 2.5
    assert np.all(prof.elevations[inside] == 0.0)
    assert np.all(np.isnan(prof.elevations[~inside]))
    assert np.isnan(prof.elevations[-1])


@given(st.floats(0.01, 0.5), st.floats(0.5, 8.0), st.floats(0, 2 * math.pi))
@settings(max_examples=100, deadline=None)
def test_profile_coarse_is_every_other_fine_sample(spacing, length, angle):
    grid = _grid_from_field(lambda x, y: np.sin(x) + np.cos(3 * y), origin=(0, 0), cell=0.5, shape=(30, 30))
    t = Transect((7.5, 7.5), (math.cos(angle), math.sin(angle)), length, "t")
    fine = dem.extract_profile(grid, t, spacing)
    coarse = dem.extract_profile(grid, t, 2 * spacing)
    n = len(coarse)
    assert np.array_equal(fine.stations[::2][:n], coarse.stations)
    assert np.array_equal(fine.elevations[::2][:n], coarse.elevations, equal_nan=True)


# --- diff / volume ------------------------------------------------------------------------------

def test_diff_identical_is_zero():
    grid = _grid_from_field(lambda x, y: x * y)
    assert np.all(dem.diff(grid, grid).elevations == 0.0)


def test_diff_mismatch():
    a = _grid_from_field(lambda x, y: x)
    with pytest.raises(GridMismatch, match="grid mismatch"):
        dem.diff(a, _grid_from_field(lambda x, y: x, shape=(8, 11)))
    with pytest.raises(GridMismatch):
        dem.diff(a, _grid_from_field(lambda x, y: x, origin=(100.0, 200.5)))
    with pytest.raises(GridMismatch):
        dem.diff(a, _grid_from_field(lambda x, y: x, cell=0.25))


def test_diff_nodata_and_antisymmetry(rng):
    za, zb = rng.normal(size=(6, 6)), rng.normal(size=(6, 6))
    za[0, 0] = np.nan
    zb[1, 1] = np.nan
    a, b = DemGrid((0, 0), 1.0, za), DemGrid((0, 0), 1.0, zb)
    ab, ba = dem.diff(a, b).elevations, dem.diff(b, a).elevations
    assert np.isnan(ab[0, 0]) and np.isnan(ab[1, 1])
    ok = ~np.isnan(ab)
    assert np.array_equal(ab[ok], -ba[ok])
    assert (ab < 0).any()


def test_diff_recovers_gaussian_heap(heap_road):
    bare = dem.rasterize(synthgen.generate_cloud(heap_road, "bare").cloud, 0.1)
    winter = dem.rasterize(synthgen.generate_cloud(heap_road, "winter").cloud, 0.1)
    depth = dem.diff(winter, bare)
    xs, ys = depth.cell_centers()
    X, Y = np.meshgrid(xs, ys)
    along, offset = heap_road.to_road(X, Y)
    truth = heap_road.snow_depth(along, offset)
    heap = heap_road.snow_features[0]
    max_gradient = heap.peak_m / heap.sigma_m * math.exp(-0.5)
    tol = 2 * depth.cell_size_m * max_gradient
    assert np.nanmax(np.abs(depth.elevations - truth)) <= tol


def test_volume_uniform():
    grid = DemGrid((0, 0), 0.5, np.full((20, 20), 0.1))
    assert dem.volume(grid, 0.0) == pytest.approx(10.0, abs=1e-12)


def test_volume_all_nodata():
    assert dem.volume(DemGrid((0, 0), 0.5, np.full((4, 4), np.nan))) == 0.0


def test_volume_gaussian_closed_form(heap_road):
    bare = dem.rasterize(synthgen.generate_cloud(heap_road, "bare").cloud, 0.1)
    winter = dem.rasterize(synthgen.generate_cloud(heap_road, "winter").cloud, 0.1)
    expected = 2 * math.pi * 0.5 ** 2 * 0.4
    assert dem.volume(dem.diff(winter, bare), 0.0) == pytest.approx(expected, rel=0.01)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=6))
def test_volume_monotone_in_threshold(thresholds):
    z = np.random.default_rng(3).normal(0.2, 0.3, (15, 15))
    grid = DemGrid((0, 0), 0.1, z)
    vols = [dem.volume(grid, t) for t in sorted(thresholds)]
    assert all(a >= b for a, b in zip(vols, vols[1:]))


# --- files ------------------------------------------------------------------------------------------

def test_dem_file_round_trip(tmp_path):
    z = np.arange(12, dtype=np.float32).reshape(3, 4) / 7
    z[1, 2] = np.nan
    grid = DemGrid((385000.25, 6720000.5), 0.1, z, "ETRS-GK26FIN")
    path = tmp_path / "g.dem"
    dem.write_dem(grid, path)
    data = path.read_bytes()
    assert data[:4] == b"DEM1"
    assert dem.read_dem(path) == grid


def test_profile_csv(tmp_path):
    prof = SurfaceProfile("t1", 0.5, [0.0, 0.5, 1.0], [1.25, np.nan, 2.0])
    path = tmp_path / "t1.csv"
    dem.write_profile_csv(prof, path)
    assert path.read_text() == "station_m,elevation_m\n0.000,1.2500\n0.500,\n1.000,2.0000\n"
    assert dem.read_profile_csv(path) == prof
