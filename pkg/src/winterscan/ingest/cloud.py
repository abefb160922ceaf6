"""Point clouds and their two on-disk formats.

``xyz_ascii``
    First line ``# crs=<label> imax=<number>``, then one point per line as
    whitespace separated ``x y z [i [beam [t_ns]]]``. Intensities are divided
    by ``imax`` on load.

``pointrec_binary``
    Little-endian. Magic ``PTR1``, ``u16`` label length, label bytes (UTF-8),
    ``u64`` point count, ``u8`` field mask, then one packed record per point:
    ``f8 x, f8 y, f8 z`` followed by ``f4 intensity`` (mask bit 0),
    ``u2 beam`` (bit 1) and ``i8 t_ns`` (bit 2) when present. Intensities are
    stored already normalized.
"""
import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import MalformedCloudFile, UnknownFormat

MAGIC = b"PTR1"
HAS_INTENSITY = 1
HAS_BEAM = 2
HAS_TIME = 4


class CloudFormat(enum.Enum):
    XYZ_ASCII = "xyz_ascii"
    POINTREC_BINARY = "pointrec_binary"


@dataclass(eq=False)
class PointCloud:
    """Points in a projected planar CRS (easting, northing, elevation in metres)."""

    xyz: np.ndarray
    intensity: np.ndarray | None = None
    beam: np.ndarray | None = None
    t_ns: np.ndarray | None = None
    crs_label: str = ""

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        n = len(self.xyz)
        if not np.all(np.isfinite(self.xyz)):
            raise ValueError("point coordinates must be finite")
        if self.intensity is not None:
            self.intensity = np.asarray(self.intensity, dtype=np.float32).reshape(n)
            if not np.all((self.intensity >= 0) & (self.intensity <= 1)):
                raise ValueError("intensity must lie in [0, 1]")
        if self.beam is not None:
            self.beam = np.asarray(self.beam, dtype=np.uint16).reshape(n)
        if self.t_ns is not None:
            self.t_ns = np.asarray(self.t_ns, dtype=np.int64).reshape(n)

    def __len__(self):
        return len(self.xyz)

    @property
    def x(self):
        return self.xyz[:, 0]

    @property
    def y(self):
        return self.xyz[:, 1]

    @property
    def z(self):
        return self.xyz[:, 2]

    def bounds(self):
        """``(xmin, ymin, xmax, ymax)`` of the cloud."""
        lo = self.xyz[:, :2].min(axis=0)
        hi = self.xyz[:, :2].max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def subset(self, index):
        pick = lambda a: None if a is None else a[index]  # noqa: E731
        return PointCloud(self.xyz[index], pick(self.intensity), pick(self.beam),
                          pick(self.t_ns), self.crs_label)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.dtype == b.dtype and np.array_equal(a, b)

        return (self.crs_label == other.crs_label and same(self.xyz, other.xyz)
                and same(self.intensity, other.intensity) and same(self.beam, other.beam)
                and same(self.t_ns, other.t_ns))


def _record_dtype(mask):
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    if mask & HAS_INTENSITY:
        fields.append(("i", "<f4"))
    if mask & HAS_BEAM:
        fields.append(("beam", "<u2"))
    if mask & HAS_TIME:
        fields.append(("t", "<i8"))
    return np.dtype(fields)  # packed, no alignment padding


def _field_mask(cloud):
    mask = 0
    if cloud.intensity is not None:
        mask |= HAS_INTENSITY
    if cloud.beam is not None:
        mask |= HAS_BEAM
    if cloud.t_ns is not None:
        mask |= HAS_TIME
    return mask


def _parse_header(line, path):
    crs, imax = "", 1.0
    for token in line.lstrip("#").split():
        key, _, value = token.partition("=")
        if key == "crs":
            crs = value
        elif key == "imax":
            try:
                imax = float(value)
            except ValueError:
                raise MalformedCloudFile(f"{path}: bad imax {value!r}") from None
            if not (np.isfinite(imax) and imax > 0):
                raise MalformedCloudFile(f"{path}: imax must be positive")
    return crs, imax


def _read_ascii(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    crs, imax = "", 1.0
    first = 1
    if lines and lines[0].startswith("#"):
        crs, imax = _parse_header(lines[0], path)
        lines = lines[1:]
        first = 2
    rows = []
    width = None
    for lineno, line in enumerate(lines, start=first):
        text = line.split("#", 1)[0].split()
        if not text:
            continue
        if width is None:
            width = len(text)
            if not 3 <= width <= 6:
                raise MalformedCloudFile(f"{path}:{lineno}: expected 3 to 6 columns, got {width}")
        elif len(text) != width:
            raise MalformedCloudFile(f"{path}:{lineno}: expected {width} columns, got {len(text)}")
        rows.append((lineno, text))

    n = len(rows)
    xyzi = np.empty((n, min(width or 3, 4)), dtype=np.float64)
    beam = np.empty(n, dtype=np.int64) if width and width >= 5 else None
    t_ns = np.empty(n, dtype=np.int64) if width and width >= 6 else None
    for k, (lineno, text) in enumerate(rows):
        try:
            xyzi[k] = [float(v) for v in text[:4]]
            if beam is not None:
                beam[k] = int(text[4])
            if t_ns is not None:
                t_ns[k] = int(text[5])
        except ValueError:
            raise MalformedCloudFile(f"{path}:{lineno}: bad value in row {' '.join(text)!r}") from None
        if not np.all(np.isfinite(xyzi[k])):
            raise MalformedCloudFile(f"{path}:{lineno}: non-finite value in row {' '.join(text)!r}")
    if beam is not None and (np.any(beam < 0) or np.any(beam > 0xFFFF)):
        raise MalformedCloudFile(f"{path}: beam index out of range")

    intensity = None
    if xyzi.shape[1] == 4:
        intensity = xyzi[:, 3] / imax
        if np.any(intensity < 0) or np.any(intensity > 1):
            raise MalformedCloudFile(f"{path}: intensity outside [0, imax]")
    return PointCloud(xyzi[:, :3], intensity, beam, t_ns, crs)


def _read_binary(path):
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise MalformedCloudFile(f"{path}: not a PTR1 file")
    try:
        (label_len,) = struct.unpack_from("<H", data, 4)
        offset = 6 + label_len
        crs = data[6:offset].decode("utf-8")
        count, mask = struct.unpack_from("<QB", data, offset)
    except (struct.error, UnicodeDecodeError) as exc:
        raise MalformedCloudFile(f"{path}: bad header ({exc})") from None
    offset += 9
    if mask & ~(HAS_INTENSITY | HAS_BEAM | HAS_TIME):
        raise MalformedCloudFile(f"{path}: unknown field mask {mask:#x}")
    dtype = _record_dtype(mask)
    if len(data) - offset != count * dtype.itemsize:
        raise MalformedCloudFile(f"{path}: expected {count} points, file size disagrees")
    rec = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    xyz = np.column_stack([rec["x"], rec["y"], rec["z"]])
    if not np.all(np.isfinite(xyz)):
        raise MalformedCloudFile(f"{path}: non-finite coordinate")
    intensity = rec["i"].astype(np.float32) if mask & HAS_INTENSITY else None
    if intensity is not None and not np.all((intensity >= 0) & (intensity <= 1)):
        raise MalformedCloudFile(f"{path}: intensity outside [0, 1]")
    beam = rec["beam"].astype(np.uint16) if mask & HAS_BEAM else None
    t_ns = rec["t"].astype(np.int64) if mask & HAS_TIME else None
    return PointCloud(xyz, intensity, beam, t_ns, crs)


def _as_format(fmt):
    if isinstance(fmt, CloudFormat):
        return fmt
    try:
        return CloudFormat(fmt)
    except ValueError:
        raise UnknownFormat(f"unknown point cloud format {fmt!r}") from None


def guess_format(path):
    suffix = Path(path).suffix.lower()
    if suffix in (".ptr", ".bin"):
        return CloudFormat.POINTREC_BINARY
    if suffix in (".xyz", ".txt", ".asc"):
        return CloudFormat.XYZ_ASCII
    raise UnknownFormat(f"cannot infer point cloud format from {path}")


def load_point_cloud(path, format=None):
    fmt = guess_format(path) if format is None else _as_format(format)
    if fmt is CloudFormat.XYZ_ASCII:
        return _read_ascii(path)
    return _read_binary(path)


def write_point_cloud(cloud, path, format=None):
    """Companion writer for :func:`load_point_cloud`."""
    fmt = guess_format(path) if format is None else _as_format(format)
    if fmt is CloudFormat.POINTREC_BINARY:
        mask = _field_mask(cloud)
        rec = np.empty(len(cloud), dtype=_record_dtype(mask))
        rec["x"], rec["y"], rec["z"] = cloud.x, cloud.y, cloud.z
        if mask & HAS_INTENSITY:
            rec["i"] = cloud.intensity
        if mask & HAS_BEAM:
            rec["beam"] = cloud.beam
        if mask & HAS_TIME:
            rec["t"] = cloud.t_ns
        label = cloud.crs_label.encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC + struct.pack("<H", len(label)) + label)
            fh.write(struct.pack("<QB", len(cloud), mask))
            fh.write(rec.tobytes())
        return

    if cloud.t_ns is not None and cloud.beam is None:
        raise MalformedCloudFile("xyz_ascii needs a beam column to carry timestamps")
    if cloud.beam is not None and cloud.intensity is None:
        raise MalformedCloudFile("xyz_ascii needs an intensity column to carry beams")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# crs={cloud.crs_label} imax=1\n")
        for k in range(len(cloud)):
            cols = [repr(float(v)) for v in cloud.xyz[k]]
            if cloud.intensity is not None:
                cols.append(repr(float(cloud.intensity[k])))
            if cloud.beam is not None:
                cols.append(str(int(cloud.beam[k])))
            if cloud.t_ns is not None:
                cols.append(str(int(cloud.t_ns[k])))
            fh.write(" ".join(cols) + "\n")
