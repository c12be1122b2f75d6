"""Segment a geolocated point cloud by registering OSM building footprints onto it."""

__version__ = "0.1.0"
