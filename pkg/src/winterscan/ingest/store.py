"""Latest-overwrite live store and timestamped archive of sensor records.

The live directory keeps one ``<sensor_id>.rec`` file per sensor, replaced
atomically on every write. ``snapshot`` copies the live files into the
archive as ``<timestamp_ns:019d>_<sensor_id>.rec`` so that plain
lexicographic order is time order.
"""
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path

from ..errors import MalformedEnvelope, StoreUnavailable
from .record import decode_record, encode_record

LIVE_SUFFIX = ".rec"
ARCHIVE_NAME = re.compile(r"(\d{19})_([^_]+)\.rec")


def archive_name(timestamp_ns, sensor_id):
    return f"{timestamp_ns:019d}_{sensor_id}.rec"


def _atomic_write(directory, name, data):
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, os.path.join(directory, name))
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


@dataclass(frozen=True)
class DatasetStore:
    live_dir: Path
    archive_dir: Path

    @classmethod
    def at(cls, root, create=False):
        """Store with ``live/`` and ``archive/`` under ``root``."""
        root = Path(root)
        store = cls(root / "live", root / "archive")
        if create:
            store.live_dir.mkdir(parents=True, exist_ok=True)
            store.archive_dir.mkdir(parents=True, exist_ok=True)
        return store

    def live_files(self):
        try:
            names = os.listdir(self.live_dir)
        except OSError as exc:
            raise StoreUnavailable(f"live directory unavailable: {exc}") from None
        return sorted(
            Path(self.live_dir, n) for n in names
            if n.endswith(LIVE_SUFFIX) and not n.startswith(".")
        )


def write_live(store, record):
    """Replace the live file of ``record.sensor_id`` with ``record``."""
    data = encode_record(record)
    if not os.path.isdir(store.live_dir):
        raise StoreUnavailable(f"live directory {store.live_dir} does not exist")
    name = record.sensor_id + LIVE_SUFFIX
    try:
        _atomic_write(store.live_dir, name, data)
    except OSError as exc:
        raise StoreUnavailable(f"cannot write {name}: {exc}") from None
    return Path(store.live_dir, name)


def snapshot(store):
    """Copy every live record into the archive; returns the archived paths."""
    if not os.path.isdir(store.archive_dir):
        raise StoreUnavailable(f"archive directory {store.archive_dir} does not exist")
    archived = []
    for path in store.live_files():
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            continue
        except OSError as exc:
            raise StoreUnavailable(f"cannot read {path}: {exc}") from None
        try:
            record = decode_record(data)
        except MalformedEnvelope:
            # foreign or damaged file in the live area; never archive it
            continue
        name = archive_name(record.timestamp_ns, record.sensor_id)
        try:
            _atomic_write(store.archive_dir, name, data)
        except OSError as exc:
            raise StoreUnavailable(f"cannot write {name}: {exc}") from None
        archived.append(Path(store.archive_dir, name))
    return sorted(archived)


def scan_dataset(archive_dir, time_range=None, sensors=None):
    """List archived records as ``(timestamp_ns, sensor_id, path)`` in time order.

    ``time_range`` is an inclusive ``(t0, t1)`` pair; ``sensors`` is an
    iterable of sensor ids to keep.
    """
    try:
        names = os.listdir(archive_dir)
    except OSError as exc:
        raise StoreUnavailable(f"archive directory unavailable: {exc}") from None
    if isinstance(sensors, str):
        sensors = {sensors}
    elif sensors is not None:
        sensors = set(sensors)
    entries = []
    for name in names:
        m = ARCHIVE_NAME.fullmatch(name)
        if m is None:
            continue
        t, sensor_id = int(m.group(1)), m.group(2)
        if time_range is not None and not time_range[0] <= t <= time_range[1]:
            continue
        if sensors is not None and sensor_id not in sensors:
            continue
        entries.append((t, sensor_id, Path(archive_dir, name)))
    entries.sort(key=lambda e: (e[0], e[1]))
    return entries
