"""Pose estimation, unwrapping and stitching of fisheye images taken inside pipes."""

__version__ = "0.1.0"
