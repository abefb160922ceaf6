"""CBOR envelope for timestamped sensor records.

Every record is a three-entry map ``{"t": ns, "id": sensor, "ch": channels}``
encoded canonically (RFC 8949 deterministic ordering), so identical records
always produce identical bytes. Numeric arrays travel as RFC 8746 typed
arrays wrapped in the multi-dimensional array tag 40.
"""
import io
import math
import re
from dataclasses import dataclass, field

import cbor2
import numpy as np

from ..errors import MalformedEnvelope, UnencodablePayload

# RFC 8746 little-endian typed array tags
_DTYPE_TAGS = {
    np.dtype("u1"): 64,
    np.dtype("<u2"): 69,
    np.dtype("<u4"): 70,
    np.dtype("<u8"): 71,
    np.dtype("i1"): 72,
    np.dtype("<i2"): 77,
    np.dtype("<i4"): 78,
    np.dtype("<i8"): 79,
    np.dtype("<f2"): 84,
    np.dtype("<f4"): 85,
    np.dtype("<f8"): 86,
}
_TAG_DTYPES = {tag: dt for dt, tag in _DTYPE_TAGS.items()}
_MULTIDIM_TAG = 40

_SENSOR_ID = re.compile(r'[^_/\\:*?"<>|\x00-\x1f]+')


def valid_sensor_id(sensor_id):
    return (
        isinstance(sensor_id, str)
        and _SENSOR_ID.fullmatch(sensor_id) is not None
        and sensor_id not in (".", "..")
        and not sensor_id.startswith(".")
    )


def _normalize_channel(name, value):
    if isinstance(value, (bool, int, float, bytes)):
        return value
    if isinstance(value, bytearray):
        return bytes(value)
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (list, tuple, np.ndarray)):
        arr = np.asarray(value)
        if arr.ndim == 0:
            return arr.item()
        if arr.dtype.newbyteorder("<") not in _DTYPE_TAGS:
            raise UnencodablePayload(f"channel {name!r}: unsupported array dtype {arr.dtype}")
        return arr
    raise UnencodablePayload(f"channel {name!r}: unsupported kind {type(value).__name__}")


@dataclass(eq=False)
class SensorRecord:
    """One timestamped measurement; payload scalars are in SI units."""

    timestamp_ns: int
    sensor_id: str
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        self.payload = {k: _normalize_channel(k, v) for k, v in self.payload.items()}

    def __eq__(self, other):
        if not isinstance(other, SensorRecord):
            return NotImplemented
        if (self.timestamp_ns, self.sensor_id) != (other.timestamp_ns, other.sensor_id):
            return False
        if self.payload.keys() != other.payload.keys():
            return False
        for key, a in self.payload.items():
            b = other.payload[key]
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if not (isinstance(a, np.ndarray) and isinstance(b, np.ndarray)):
                    return False
                if a.dtype != b.dtype or a.shape != b.shape or not np.array_equal(a, b):
                    return False
            elif type(a) is not type(b) or a != b:
                return False
        return True


def _encode_channel(name, value):
    if isinstance(value, float):
        if not math.isfinite(value):
            raise UnencodablePayload(f"channel {name!r}: non-finite scalar {value}")
        return value
    if isinstance(value, (bool, int, bytes)):
        return value
    arr = value
    dtype = arr.dtype.newbyteorder("<") if arr.dtype.byteorder != "|" else arr.dtype
    if dtype.kind == "f" and not np.all(np.isfinite(arr)):
        raise UnencodablePayload(f"channel {name!r}: array holds non-finite values")
    data = np.ascontiguousarray(arr, dtype=dtype).tobytes()
    return cbor2.CBORTag(_MULTIDIM_TAG, [list(arr.shape), cbor2.CBORTag(_DTYPE_TAGS[dtype], data)])


def encode_record(record):
    if not isinstance(record.timestamp_ns, int) or record.timestamp_ns <= 0:
        raise UnencodablePayload(f"timestamp_ns must be a positive integer, got {record.timestamp_ns!r}")
    if not valid_sensor_id(record.sensor_id):
        raise UnencodablePayload(f"invalid sensor id {record.sensor_id!r}")
    channels = {}
    for name, value in record.payload.items():
        if not isinstance(name, str):
            raise UnencodablePayload(f"channel names must be text, got {name!r}")
        channels[name] = _encode_channel(name, _normalize_channel(name, value))
    envelope = {"t": record.timestamp_ns, "id": record.sensor_id, "ch": channels}
    return cbor2.dumps(envelope, canonical=True)


def _decode_channel(name, value):
    if isinstance(value, cbor2.CBORTag):
        if value.tag != _MULTIDIM_TAG or not isinstance(value.value, (list, tuple)) or len(value.value) != 2:
            raise MalformedEnvelope(f"channel {name!r}: unexpected tag {value.tag}")
        shape, typed = value.value
        if not isinstance(typed, cbor2.CBORTag) or typed.tag not in _TAG_DTYPES:
            raise MalformedEnvelope(f"channel {name!r}: not a typed array")
        if not isinstance(shape, (list, tuple)) or not all(
            isinstance(n, int) and not isinstance(n, bool) and n >= 0 for n in shape
        ):
            raise MalformedEnvelope(f"channel {name!r}: bad array shape")
        dtype = _TAG_DTYPES[typed.tag]
        if not isinstance(typed.value, bytes) or len(typed.value) != dtype.itemsize * math.prod(shape):
            raise MalformedEnvelope(f"channel {name!r}: array size does not match shape")
        arr = np.frombuffer(typed.value, dtype=dtype).reshape(shape)
        return arr.astype(dtype.newbyteorder("="), copy=True)
    if isinstance(value, (bool, int, float, bytes)):
        return value
    raise MalformedEnvelope(f"channel {name!r}: unsupported item {type(value).__name__}")


def decode_record(data):
    stream = io.BytesIO(data)
    try:
        envelope = cbor2.CBORDecoder(stream).decode()
    except Exception as exc:  # cbor2 raises a variety of decode errors
        raise MalformedEnvelope(f"cannot decode envelope: {exc}") from None
    if stream.tell() != len(data):
        raise MalformedEnvelope("trailing bytes after envelope")
    if not isinstance(envelope, dict):
        raise MalformedEnvelope("envelope is not a map")
    for key in ("t", "id", "ch"):
        if key not in envelope:
            raise MalformedEnvelope(f"envelope is missing {key!r}")
    if len(envelope) != 3:
        raise MalformedEnvelope("envelope has unexpected keys")
    t, sensor_id, channels = envelope["t"], envelope["id"], envelope["ch"]
    if not isinstance(t, int) or isinstance(t, bool) or t <= 0:
        raise MalformedEnvelope("timestamp must be a positive integer")
    if not valid_sensor_id(sensor_id):
        raise MalformedEnvelope(f"invalid sensor id {sensor_id!r}")
    if not isinstance(channels, dict) or not all(isinstance(k, str) for k in channels):
        raise MalformedEnvelope("channels must be a text-keyed map")
    payload = {name: _decode_channel(name, value) for name, value in channels.items()}
    return SensorRecord(t, sensor_id, payload)
