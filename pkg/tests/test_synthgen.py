import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from winterscan import dem, synthgen
from winterscan.ingest import write_point_cloud
from winterscan.synthgen import Label, Obstacle, SnowHeap, SyntheticRoadSpec


def test_point_count_matches_density():
    spec = SyntheticRoadSpec(roadway_width_m=8.0, length_m=50.0, margin_m=0.0, fore_slope_run_m=0.0,
                             point_density=100)
    n = len(synthgen.generate_cloud(spec).cloud)
    assert abs(n - 40_000) <= 400


@pytest.mark.parametrize("density", [37.0, 250.0])
def test_point_count_other_densities(density):
    spec = SyntheticRoadSpec(length_m=20.0, point_density=density)
    area = spec.length_m * 2 * spec.half_extent_m
    assert len(synthgen.generate_cloud(spec).cloud) == pytest.approx(area * density, rel=0.02)


def test_bare_epoch_has_no_snow(narrowed_road):
    sc = synthgen.generate_cloud(narrowed_road, "bare")
    assert not (sc.labels == Label.SNOW).any()
    assert set(np.unique(sc.labels)) == {Label.ROAD, Label.OFF_ROAD}


def test_winter_minus_bare_is_gaussian_sum(heap_road):
    bare = synthgen.generate_cloud(heap_road, "bare")
    winter = synthgen.generate_cloud(heap_road, "winter")
    assert np.array_equal(bare.cloud.xyz[:, :2], winter.cloud.xyz[:, :2])
    heap = heap_road.snow_features[0]
    station = heap_road.station_of(winter.offset)
    closed_form = heap.peak_m * np.exp(-0.5 * ((station - heap.center_station_m) ** 2
                                               + (winter.along - heap.along_center_m) ** 2) / heap.sigma_m ** 2)
    np.testing.assert_allclose(winter.cloud.z - bare.cloud.z, closed_form, rtol=0, atol=1e-12)
    assert np.all(winter.labels[closed_form > 0.02] == Label.SNOW)


def test_ridges_and_banks_sum():
    spec = SyntheticRoadSpec(length_m=5.0, bank_gap_m=6.0,
                             snow_features=(SnowHeap(2.0, 0.2, 0.3), SnowHeap(5.0, 0.1, 0.4)))
    along = np.linspace(0, 5, 11)
    for offset in (-3.5, -1.0, 0.0, 2.0, 3.2):
        st_ = 4.0 - offset
        want = 0.2 * np.exp(-0.5 * ((st_ - 2.0) / 0.3) ** 2) + 0.1 * np.exp(-0.5 * ((st_ - 5.0) / 0.4) ** 2)
        want = want + (0.4 if 3.0 <= abs(offset) <= 4.0 else 0.0)
        np.testing.assert_allclose(spec.snow_depth(along, np.full(11, offset)), want, atol=1e-15)


def test_obstacle_labels_and_height():
    spec = SyntheticRoadSpec(crown_slope=0.0, length_m=10.0, obstacles=(Obstacle(4, 6, 3, 5, 0.5),))
    sc = synthgen.generate_cloud(spec)
    box = sc.labels == Label.OBSTACLE
    assert box.any()
    np.testing.assert_allclose(sc.cloud.z[box], 0.5, atol=spec.jitter_m)


def test_analytic_profile_flat():
    spec = SyntheticRoadSpec(crown_slope=0.0)
    prof = synthgen.analytic_profile(spec, "bare", synthgen.roadway_transect(spec, 7.3))
    assert np.all(prof.elevations == 0.0)


def test_analytic_profile_crown_tent():
    spec = SyntheticRoadSpec(crown_slope=0.03, base_elevation_m=10.0)
    prof = synthgen.analytic_profile(spec, "bare", synthgen.roadway_transect(spec, 3.0))
    np.testing.assert_allclose(prof.elevations, 10.0 - 0.03 * np.abs(prof.stations - 4.0), atol=1e-12)
    assert prof.stations[np.argmax(prof.elevations)] == pytest.approx(4.0)


def test_analytic_winter_is_bare_plus_gaussian(narrowed_road):
    t = synthgen.roadway_transect(narrowed_road, 12.0, overhang_m=1.0)
    bare = synthgen.analytic_profile(narrowed_road, "bare", t)
    winter = synthgen.analytic_profile(narrowed_road, "winter", t)
    s = bare.stations - 1.0
    sigma = narrowed_road.snow_features[0].sigma_m
    gauss = sum(0.4 * np.exp(-0.5 * ((s - c) / sigma) ** 2) for c in (0.0, 8.0))
    np.testing.assert_allclose(winter.elevations - bare.elevations, gauss, atol=1e-12)


def test_transect_on_curve_follows_arc():
    spec = SyntheticRoadSpec(curve_radius_m=40.0, crown_slope=0.0, snow_features=(SnowHeap(2.0, 0.3, 0.5),))
    t = synthgen.roadway_transect(spec, 25.0)
    along, offset = spec.to_road(*t.points(t.stations(0.5)))
    np.testing.assert_allclose(along, 25.0, atol=1e-9)
    np.testing.assert_allclose(spec.station_of(offset), t.stations(0.5), atol=1e-9)


def test_generation_is_deterministic(tmp_path, heap_road):
    a = synthgen.generate_cloud(heap_road, "winter")
    b = synthgen.generate_cloud(heap_road, "winter")
    assert a.cloud == b.cloud and np.array_equal(a.labels, b.labels)
    write_point_cloud(a.cloud, tmp_path / "a.ptr")
    write_point_cloud(b.cloud, tmp_path / "b.ptr")
    assert (tmp_path / "a.ptr").read_bytes() == (tmp_path / "b.ptr").read_bytes()
    other = synthgen.generate_cloud(SyntheticRoadSpec(**{**heap_road.__dict__, "seed": 6}), "winter")
    assert not np.array_equal(other.cloud.xyz, a.cloud.xyz)


def test_pipeline_closure(heap_road):
    cell = 0.1
    grid = dem.rasterize(synthgen.generate_cloud(heap_road, "winter").cloud, cell)
    heap = heap_road.snow_features[0]
    max_slope = heap_road.crown_slope + heap.peak_m / heap.sigma_m * math.exp(-0.5)
    tol = 2 * cell * max_slope
    worst = 0.0
    for along in np.arange(1.0, heap_road.length_m - 1.0, 0.5):
        t = synthgen.roadway_transect(heap_road, float(along))
        measured = dem.extract_profile(grid, t, 0.05)
        truth = synthgen.analytic_profile(heap_road, "winter", t, 0.05)
        worst = max(worst, float(np.nanmax(np.abs(measured.elevations - truth.elevations))))
        assert not np.isnan(measured.elevations).any()
    assert worst <= tol


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticRoadSpec(roadway_width_m=0)
    with pytest.raises(ValueError):
        SyntheticRoadSpec(point_density=-1)
    with pytest.raises(ValueError):
        SyntheticRoadSpec(curve_radius_m=3.0)
    with pytest.raises(ValueError):
        SyntheticRoadSpec(snow_features=(SnowHeap(1.0, 0.0, 1.0),))


def test_spec_file_round_trip(tmp_path):
    spec = SyntheticRoadSpec(
        roadway_width_m=7.5, bank_gap_m=6.0, curve_radius_m=-80.0, seed=42, origin=(385000.0, 6720000.5),
        snow_features=(SnowHeap(1.0, 0.4, 0.5), SnowHeap(3.0, 0.2, 0.3, along_center_m=10.0, along_extent_m=2.0)),
        obstacles=(Obstacle(1, 2, 3, 4, 0.5),),
    )
    text = synthgen.format_road_spec(spec)
    assert synthgen.parse_road_spec(text) == spec
    path = tmp_path / "road.spec"
    path.write_text(text)
    assert synthgen.load_road_spec(path) == spec


def test_spec_file_defaults_and_errors():
    spec = synthgen.parse_road_spec("[road]\nroadway_width_m = 8\n# comment\n[snow]\ncenter_station_m = 3\n"
                                    "peak_m = 0.4\nsigma_m = 0.5\n")
    assert spec.roadway_width_m == 8.0 and spec.snow_features == (SnowHeap(3.0, 0.4, 0.5),)
    with pytest.raises(ValueError, match="line 2"):
        synthgen.parse_road_spec("[road]\nwidth = 8\n")
    with pytest.raises(ValueError):
        synthgen.parse_road_spec("[lane]\n")


@given(st.floats(1.0, 20.0), st.floats(0.0, 0.05), st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_points_stay_on_surface(width, crown, seed):
    spec = SyntheticRoadSpec(roadway_width_m=width, crown_slope=crown, length_m=3.0, seed=seed)
    sc = synthgen.generate_cloud(spec, "winter")
    surface = spec.surface(sc.along, sc.offset, "winter")
    assert np.all(np.abs(sc.cloud.z - surface) <= spec.jitter_m)
    assert np.all(np.abs(sc.offset) <= spec.half_extent_m)
