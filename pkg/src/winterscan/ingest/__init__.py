"""Sensor record envelopes, the live/archive dataset store and point cloud files."""
from .cloud import CloudFormat, PointCloud, load_point_cloud, write_point_cloud
from .record import SensorRecord, decode_record, encode_record
from .store import DatasetStore, archive_name, scan_dataset, snapshot, write_live

__all__ = [
    "CloudFormat",
    "DatasetStore",
    "PointCloud",
    "SensorRecord",
    "archive_name",
    "decode_record",
    "encode_record",
    "load_point_cloud",
    "scan_dataset",
    "snapshot",
    "write_live",
    "write_point_cloud",
]
