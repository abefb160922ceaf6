"""Inspection pipeline shared by the CLI ``width`` and ``report`` commands."""
import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor

from . import analysis, dem, lidarimg
from .dem import Transect

REPORT_VERSION = 1


def thread_count():
    """Worker cap from ``WINTERSCAN_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("WINTERSCAN_THREADS", "1")))
    except ValueError:
        return 1


def ordered_map(fn, items):
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def mm(value):
    """Round to millimetres for reports; ``-0.0`` becomes ``0.0``."""
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [mm(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return round(float(value), 3) + 0.0


def read_transects(path):
    """Transects from a CSV with header ``id,x,y,dx,dy,length``."""
    transects = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"id", "x", "y", "dx", "dy", "length"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: transect CSV lacks columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                transects.append(Transect((float(row["x"]), float(row["y"])),
                                          (float(row["dx"]), float(row["dy"])),
                                          float(row["length"]), row["id"]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return transects


def write_transects(transects, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "x", "y", "dx", "dy", "length"])
        for t in transects:
            writer.writerow([t.id, repr(t.start[0]), repr(t.start[1]), repr(t.direction[0]),
                             repr(t.direction[1]), repr(t.length_m)])


def measure_widths(winter, reference, transects, design, spacing_m=0.05,
                   min_depth_m=analysis.DEFAULT_MIN_DEPTH_M, roadway_start_m=0.0):
    """Effective width along every transect, in input order."""
    def one(transect):
        return analysis.effective_width(dem.extract_profile(winter, transect, spacing_m),
                                        dem.extract_profile(reference, transect, spacing_m),
                                        design, min_depth_m, roadway_start_m)
    return ordered_map(one, transects)


def width_rows(measurements, segment, epochs):
    rows = []
    for m in measurements:
        d = m.to_dict()
        for key in ("effective_width_m", "design_roadway_width_m", "deficit_m", "clear_span"):
            d[key] = mm(d[key])
        d["segment"] = segment
        d["epochs"] = dict(epochs)
        rows.append(d)
    return rows


def width_csv(rows):
    header = ["segment", "reference_epoch", "winter_epoch", "transect_id", "effective_width_m",
              "design_roadway_width_m", "deficit_m", "clear_start_m", "clear_end_m", "fully_blocked"]
    lines = [",".join(header)]
    for r in rows:
        span = r["clear_span"] or ["", ""]
        values = [r["segment"], r["epochs"]["reference"], r["epochs"]["winter"], r["transect_id"],
                  r["effective_width_m"], r["design_roadway_width_m"], r["deficit_m"],
                  span[0], span[1], str(r["fully_blocked"]).lower()]
        lines.append(",".join("" if v is None else str(v) for v in values))
    return "\n".join(lines) + "\n"


def marking_count(frame, low_pct, high_pct, threshold):
    image = lidarimg.normalize(lidarimg.destagger(frame), low_pct, high_pct)
    return len(analysis.detect_markings(image, threshold).clusters)


def inspect(winter, reference, transects, design, *, segment="", epochs=None,
            spacing_m=0.05, min_depth_m=analysis.DEFAULT_MIN_DEPTH_M, roadway_start_m=0.0,
            volume_min_depth_m=0.0, frames=None, low_pct=1.0, high_pct=99.0,
            marking_threshold=0.5):
    """Assemble an inspection report as a plain dict.

    ``frames`` maps epoch keys (``"reference"``/``"winter"``) to raw lidar
    frames whose marking clusters are counted.
    """
    epochs = dict(epochs or {"reference": "reference", "winter": "winter"})
    measurements = measure_widths(winter, reference, transects, design, spacing_m,
                                  min_depth_m, roadway_start_m)
    depth = dem.diff(winter, reference)
    snow_volume = dem.volume(depth, volume_min_depth_m)
    markings = {}
    for key, frame in sorted((frames or {}).items()):
        markings[epochs.get(key, key)] = marking_count(frame, low_pct, high_pct, marking_threshold)

    design_width = float(design) if isinstance(design, (int, float)) else design.roadway_width_m
    return {
        "version": REPORT_VERSION,
        "segment": segment,
        "epochs": epochs,
        "design": {
            "notation": None if isinstance(design, (int, float)) else str(design),
            "roadway_width_m": mm(design_width),
        },
        "widths": width_rows(measurements, segment, epochs),
        "snow_volume_m3": mm(snow_volume),
        "marking_clusters": markings,
        "parameters": {
            "cell_size_m": mm(winter.cell_size_m),
            "profile_spacing_m": mm(spacing_m),
            "min_depth_m": mm(min_depth_m),
            "roadway_start_m": mm(roadway_start_m),
            "volume_min_depth_m": mm(volume_min_depth_m),
            "normalize_low_pct": mm(low_pct),
            "normalize_high_pct": mm(high_pct),
            "marking_threshold": mm(marking_threshold),
        },
    }


def dumps(report):
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
