"""``winterscan`` command line."""
import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import analysis, dem, lidarimg, pipeline, roadspec, synthgen
from .errors import WinterscanError
from .ingest import (DatasetStore, decode_record, load_point_cloud, scan_dataset, snapshot,
                     write_point_cloud)


class DataError(click.ClickException):
    exit_code = 1

    def format_message(self):
        return self.message


def _run(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (WinterscanError, ValueError, OSError, KeyError) as exc:
        raise DataError(str(exc)) from None


def _emit(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


def _read_record(path):
    return decode_record(Path(path).read_bytes())


@click.group()
def main():
    """Winter road measurements from point clouds, DEMs and lidar frames."""


# --- ingest -------------------------------------------------------------------

@main.group()
def ingest():
    """Live store snapshots and archive scans."""


@ingest.command("snapshot")
@click.option("--live", "live_dir", required=True, type=click.Path(file_okay=False))
@click.option("--archive", "archive_dir", required=True, type=click.Path(file_okay=False))
def ingest_snapshot(live_dir, archive_dir):
    """Copy the latest live records into the timestamped archive."""
    for path in _run(snapshot, DatasetStore(Path(live_dir), Path(archive_dir))):
        click.echo(str(path))


@ingest.command("scan")
@click.option("--archive", "archive_dir", required=True, type=click.Path(file_okay=False))
@click.option("--from", "t0", type=int, default=None, help="first timestamp (ns), inclusive")
@click.option("--to", "t1", type=int, default=None, help="last timestamp (ns), inclusive")
@click.option("--sensor", "sensors", multiple=True, help="keep only these sensor ids")
def ingest_scan(archive_dir, t0, t1, sensors):
    """List archived records in time order."""
    time_range = None
    if t0 is not None or t1 is not None:
        time_range = (t0 if t0 is not None else 0, t1 if t1 is not None else 2**64)
    for t, sensor, path in _run(scan_dataset, archive_dir, time_range, sensors or None):
        click.echo(f"{t} {sensor} {path}")


# --- dem ------------------------------------------------------------------------

@main.group("dem")
def dem_group():
    """Build, difference and sample elevation grids."""


def _parse_bounds(text):
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) != 4:
        raise click.BadParameter("expected xmin,ymin,xmax,ymax", param_hint="'--bounds'")
    return tuple(float(p) for p in parts)


@dem_group.command("build")
@click.option("--in", "src", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--cell", type=float, default=dem.DEFAULT_CELL_M, show_default=True)
@click.option("--aggregator", type=click.Choice([a.value for a in dem.Aggregator]), default="mean",
              show_default=True)
@click.option("--bounds", default=None, help="xmin,ymin,xmax,ymax shared by all epochs")
@click.option("--fill-radius", type=int, default=0, show_default=True,
              help="fill holes from valid cells within this many cells")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def dem_build(src, cell, aggregator, bounds, fill_radius, out):
    """Rasterize a point cloud into a DEM file."""
    if cell <= 0:
        raise click.BadParameter("must be positive", param_hint="'--cell'")
    cloud = _run(load_point_cloud, src)
    grid = _run(dem.rasterize, cloud, cell, aggregator, _parse_bounds(bounds))
    if fill_radius:
        grid = dem.fill_holes(grid, fill_radius)
    _run(dem.write_dem, grid, out)


@dem_group.command("diff")
@click.option("--winter", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--reference", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=None, type=click.Path(dir_okay=False), help="depth DEM to write")
@click.option("--min-depth", type=float, default=0.0, show_default=True)
def dem_diff(winter, reference, out, min_depth):
    """Snow depth grid (winter minus reference) and its volume."""
    depth = _run(dem.diff, _run(dem.read_dem, winter), _run(dem.read_dem, reference))
    if out:
        _run(dem.write_dem, depth, out)
    result = {"min_depth_m": pipeline.mm(min_depth),
              "snow_volume_m3": pipeline.mm(dem.volume(depth, min_depth))}
    click.echo(json.dumps(result, sort_keys=True))


@dem_group.command("profile")
@click.option("--dem", "dem_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--transects", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--spacing", type=float, default=0.05, show_default=True)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
def dem_profile(dem_path, transects, spacing, out_dir):
    """Write one station_m,elevation_m CSV per transect."""
    if spacing <= 0:
        raise click.BadParameter("must be positive", param_hint="'--spacing'")
    grid = _run(dem.read_dem, dem_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for t in _run(pipeline.read_transects, transects):
        path = out / f"{t.id}.csv"
        dem.write_profile_csv(dem.extract_profile(grid, t, spacing), path)
        click.echo(str(path))


# --- width / report ----------------------------------------------------------------

def _design(notation):
    try:
        return roadspec.parse_cross_section(notation)
    except WinterscanError as exc:
        raise click.BadParameter(str(exc), param_hint="'--design'") from None


@main.command()
@click.option("--winter", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--reference", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--design", required=True, help='cross-section notation, e.g. "(8/7.5)"')
@click.option("--transects", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--spacing", type=float, default=0.05, show_default=True)
@click.option("--min-depth", type=float, default=analysis.DEFAULT_MIN_DEPTH_M, show_default=True)
@click.option("--roadway-start", type=float, default=0.0, show_default=True,
              help="station of the roadway edge on each transect")
@click.option("--segment", default="", help="segment name for the report")
@click.option("--reference-label", default="reference", show_default=True)
@click.option("--winter-label", default="winter", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("--out", default=None, type=click.Path(dir_okay=False))
def width(winter, reference, design, transects, spacing, min_depth, roadway_start, segment,
          reference_label, winter_label, fmt, out):
    """Effective drivable width per transect against the design roadway width."""
    spec = _design(design)
    measurements = _run(pipeline.measure_widths, _run(dem.read_dem, winter),
                        _run(dem.read_dem, reference), _run(pipeline.read_transects, transects),
                        spec, spacing, min_depth, roadway_start)
    rows = pipeline.width_rows(measurements, segment,
                               {"reference": reference_label, "winter": winter_label})
    text = pipeline.width_csv(rows) if fmt == "csv" else pipeline.dumps(rows)
    _emit(text, out)


_PARAM_OPTIONS = {
    "profile_spacing_m": "spacing",
    "min_depth_m": "min_depth",
    "roadway_start_m": "roadway_start",
    "volume_min_depth_m": "volume_min_depth",
    "normalize_low_pct": "low_pct",
    "normalize_high_pct": "high_pct",
    "marking_threshold": "threshold",
}


@main.command()
@click.option("--segment", required=True, help="segment name in the registry")
@click.option("--registry", default=None, type=click.Path(exists=True, dir_okay=False),
              help="road registry (defaults to the bundled one)")
@click.option("--winter", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--reference", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--transects", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--winter-frame", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--reference-frame", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--reference-label", default="reference", show_default=True)
@click.option("--winter-label", default="winter", show_default=True)
@click.option("--params", "params_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="parameter block (JSON) of an earlier report to reproduce it")
@click.option("--spacing", type=float, default=0.05, show_default=True)
@click.option("--min-depth", type=float, default=analysis.DEFAULT_MIN_DEPTH_M, show_default=True)
@click.option("--roadway-start", type=float, default=0.0, show_default=True)
@click.option("--volume-min-depth", type=float, default=0.0, show_default=True)
@click.option("--low-pct", type=float, default=1.0, show_default=True)
@click.option("--high-pct", type=float, default=99.0, show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--out", default=None, type=click.Path(dir_okay=False))
def report(segment, registry, winter, reference, transects, winter_frame, reference_frame,
           reference_label, winter_label, params_path, out, **params):
    """Aggregate widths, snow volume and marking counts into one JSON report."""
    if params_path:
        block = json.loads(Path(params_path).read_text(encoding="utf-8"))
        block = block.get("parameters", block)
        for key, option in _PARAM_OPTIONS.items():
            if key in block:
                params[option] = block[key]
    records = _run(roadspec.load_road_registry, registry or roadspec.default_registry_path())
    matches = [r for r in records if r.name == segment]
    if not matches:
        raise DataError(f"segment {segment!r} not found in the registry")
    frames = {}
    if reference_frame:
        frames["reference"] = _run(lidarimg.frame_from_record, _run(_read_record, reference_frame))
    if winter_frame:
        frames["winter"] = _run(lidarimg.frame_from_record, _run(_read_record, winter_frame))
    result = _run(
        pipeline.inspect, _run(dem.read_dem, winter), _run(dem.read_dem, reference),
        _run(pipeline.read_transects, transects), matches[0].cross_section,
        segment=segment, epochs={"reference": reference_label, "winter": winter_label},
        spacing_m=params["spacing"], min_depth_m=params["min_depth"],
        roadway_start_m=params["roadway_start"], volume_min_depth_m=params["volume_min_depth"],
        frames=frames, low_pct=params["low_pct"], high_pct=params["high_pct"],
        marking_threshold=params["threshold"],
    )
    _emit(pipeline.dumps(result), out)


# --- snowbanks / intensity ------------------------------------------------------------

def _read_centerline(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([[float(r["x"]), float(r["y"])] for r in rows])


@main.command()
@click.option("--cloud", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--centerline", required=True, type=click.Path(exists=True, dir_okay=False),
              help="CSV with x,y columns")
@click.option("--step", type=float, default=1.0, show_default=True)
@click.option("--bank-height", type=float, default=0.2, show_default=True)
@click.option("--cell", type=float, default=0.1, show_default=True)
@click.option("--out", default=None, type=click.Path(dir_okay=False))
def snowbanks(cloud, centerline, step, bank_height, cell, out):
    """Width between snow-banks along a centreline of a map cloud."""
    if step <= 0:
        raise click.BadParameter("must be positive", param_hint="'--step'")
    widths = _run(analysis.snowbank_width, _run(load_point_cloud, cloud),
                  _run(_read_centerline, centerline), step, bank_height, cell)
    rows = [{"station_m": pipeline.mm(s), "width_m": pipeline.mm(w)} for s, w in widths]
    _emit(pipeline.dumps({"parameters": {"station_step_m": pipeline.mm(step),
                                         "bank_height_m": pipeline.mm(bank_height),
                                         "cell_m": pipeline.mm(cell)},
                          "widths": rows}), out)


@main.command()
@click.option("--frame", required=True, type=click.Path(exists=True, dir_okay=False),
              help="sensor record with intensity/shape/pixel_shift channels")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="PGM image to write")
@click.option("--low-pct", type=float, default=1.0, show_default=True)
@click.option("--high-pct", type=float, default=99.0, show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
def intensity(frame, out, low_pct, high_pct, threshold):
    """Destagger and normalize a lidar frame, write it as PGM, report markings."""
    raw = _run(lidarimg.frame_from_record, _run(_read_record, frame))
    image = _run(lidarimg.normalize, lidarimg.destagger(raw), low_pct, high_pct)
    _run(lidarimg.write_pgm, image, out)
    found = analysis.detect_markings(image, threshold)
    click.echo(json.dumps({"clusters": [list(c) for c in found.clusters],
                           "degenerate": image.degenerate}, sort_keys=True))


# --- synth ---------------------------------------------------------------------------

@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--epoch", type=click.Choice([e.value for e in synthgen.Epoch]), default="bare",
              show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--transects-out", default=None, type=click.Path(dir_okay=False),
              help="also write roadway transects (station 0 at the left roadway edge)")
@click.option("--transect-count", type=int, default=10, show_default=True)
@click.option("--centerline-out", default=None, type=click.Path(dir_okay=False))
def synth(spec_path, epoch, out, transects_out, transect_count, centerline_out):
    """Generate a synthetic road cloud."""
    spec = _run(synthgen.load_road_spec, spec_path)
    generated = synthgen.generate_cloud(spec, epoch)
    _run(write_point_cloud, generated.cloud, out)
    if transects_out:
        step = spec.length_m / transect_count
        transects = [synthgen.roadway_transect(spec, (k + 0.5) * step, id=f"t{k:03d}")
                     for k in range(transect_count)]
        pipeline.write_transects(transects, transects_out)
    if centerline_out:
        line = synthgen.centerline(spec)
        with open(centerline_out, "w", encoding="utf-8") as fh:
            fh.write("x,y\n")
            for x, y in line:
                fh.write(f"{float(x)!r},{float(y)!r}\n")


if __name__ == "__main__":
    sys.exit(main())
