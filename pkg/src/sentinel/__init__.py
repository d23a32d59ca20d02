"""Sentinel: a desk-scale camera-network face surveillance system.

Camera nodes stream frames to a gateway that detects faces with a
three-stage cascade, embeds them on a 128-D unit hypersphere, matches
them against an identity gallery (enrolling unknowns as guests), and
fans sightings and blacklist alerts out to monitoring clients.
"""

__version__ = "0.1.0"
