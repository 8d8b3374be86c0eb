"""Partial-matching UAV geo-localization toolkit.

Ground footprints and IOU pairing against a satellite tile pyramid,
mutually exclusive batch sampling, IOU-weighted contrastive losses, a toy
embedding trainer on synthetic worlds, and retrieval metrics in meters.
"""

__version__ = "0.1.0"
