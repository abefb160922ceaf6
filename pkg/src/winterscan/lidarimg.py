"""Panoramic intensity images from multi-beam lidar frames.

Shift convention: a positive ``pixel_shift[r]`` means row ``r`` is stored
rotated right by that many columns, so destaggering rotates it left:
``out[r, c] = raw[r, (c + shift[r]) % n_cols]``.
"""
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRange, IoFailure, ShiftOutOfRange
from .ingest.record import SensorRecord

PGM_MAXVAL = 65535


@dataclass(eq=False)
class RawLidarFrame:
    intensities: np.ndarray  # (n_beams, n_cols) raw counts
    pixel_shift: np.ndarray

    def __post_init__(self):
        self.intensities = np.asarray(self.intensities)
        if self.intensities.ndim != 2:
            raise ValueError("intensities must be a 2-D (beams x columns) array")
        self.pixel_shift = np.asarray(self.pixel_shift, dtype=np.int64).reshape(-1)
        if len(self.pixel_shift) != self.n_beams:
            raise ValueError(f"pixel_shift has {len(self.pixel_shift)} entries for {self.n_beams} beams")

    @property
    def n_beams(self):
        return self.intensities.shape[0]

    @property
    def n_cols(self):
        return self.intensities.shape[1]

    def __eq__(self, other):
        if not isinstance(other, RawLidarFrame):
            return NotImplemented
        return (self.intensities.dtype == other.intensities.dtype
                and np.array_equal(self.intensities, other.intensities)
                and np.array_equal(self.pixel_shift, other.pixel_shift))


@dataclass(eq=False)
class IntensityImage:
    values: np.ndarray  # (n_rows, n_cols) in [0, 1]
    degenerate: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("image values must be 2-D")
        if not np.all((self.values >= 0) & (self.values <= 1)):
            raise ValueError("image values must lie in [0, 1]")

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_cols(self):
        return self.values.shape[1]


def _rotate_rows(data, shift):
    n_cols = data.shape[1]
    if np.any(np.abs(shift) >= n_cols):
        raise ShiftOutOfRange(f"pixel shifts must satisfy |shift| < {n_cols}")
    cols = (np.arange(n_cols)[None, :] + shift[:, None]) % n_cols
    return np.take_along_axis(data, cols, axis=1)


def destagger(frame):
    """Align all beams to common azimuth columns."""
    out = _rotate_rows(frame.intensities, frame.pixel_shift)
    return RawLidarFrame(out, np.zeros(frame.n_beams, dtype=np.int64))


def restagger(frame, pixel_shift):
    """Inverse of :func:`destagger`: store an aligned frame with per-beam shifts."""
    shift = np.asarray(pixel_shift, dtype=np.int64).reshape(-1)
    if len(shift) != frame.n_beams:
        raise ValueError("one shift per beam required")
    out = _rotate_rows(frame.intensities, -shift)
    return RawLidarFrame(out, shift)


def normalize(frame, low_pct=1.0, high_pct=99.0):
    """Stretch raw intensities so the two percentiles map to 0 and 1.

    Values beyond the percentiles are clamped. When the percentiles coincide
    the image is flagged ``degenerate``, a :class:`DegenerateRange` warning is
    issued and pixels at that value map to 0.5.
    """
    if not 0 <= low_pct < high_pct <= 100:
        raise ValueError("need 0 <= low_pct < high_pct <= 100")
    raw = np.asarray(getattr(frame, "intensities", frame), dtype=np.float64)
    lo, hi = np.percentile(raw, [low_pct, high_pct])
    if hi <= lo:
        warnings.warn(f"intensity range collapses at {lo:g}; image flagged degenerate",
                      DegenerateRange, stacklevel=2)
        values = np.where(raw < lo, 0.0, np.where(raw > lo, 1.0, 0.5))
        return IntensityImage(values, degenerate=True)
    return IntensityImage(np.clip((raw - lo) / (hi - lo), 0.0, 1.0))


def write_pgm(image, path):
    """Write a 16-bit binary PGM (P5, big-endian samples)."""
    values = np.asarray(getattr(image, "values", image), dtype=np.float64)
    pixels = np.round(values * PGM_MAXVAL).astype(">u2")
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n{PGM_MAXVAL}\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(pixels.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from None


def read_pgm(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from None
    # header: magic, width, height, maxval separated by whitespace, then one whitespace byte
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise IoFailure(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise IoFailure(f"{path}: not a binary PGM")
    width, height, maxval = (int(t) for t in tokens[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    count = width * height
    if len(data) - pos < count * np.dtype(dtype).itemsize:
        raise IoFailure(f"{path}: truncated PGM pixel data")
    pixels = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    return IntensityImage(pixels.reshape(height, width).astype(np.float64) / maxval)


def frame_from_record(record):
    """Rebuild a frame from a sensor record with ``intensity``/``shape``/``pixel_shift`` channels."""
    ch = record.payload
    try:
        shape = tuple(int(v) for v in np.asarray(ch["shape"]).reshape(-1))
        intensity = np.asarray(ch["intensity"]).reshape(shape)
        shift = np.asarray(ch["pixel_shift"]).reshape(-1)
    except KeyError as exc:
        raise ValueError(f"record lacks channel {exc}") from None
    return RawLidarFrame(intensity, shift)


def frame_to_record(frame, timestamp_ns, sensor_id="lidar"):
    return SensorRecord(timestamp_ns, sensor_id, {
        "intensity": frame.intensities.reshape(-1),
        "shape": np.array(frame.intensities.shape, dtype=np.int64),
        "pixel_shift": frame.pixel_shift.astype(np.int64),
    })
