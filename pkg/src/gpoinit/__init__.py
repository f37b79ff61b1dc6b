"""Planar-scene monocular SLAM initialization."""
