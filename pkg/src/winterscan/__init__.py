"""Winter road condition measurements from point clouds, DEMs and lidar records."""
__version__ = "0.1.0"
