"""pointseg: proposal-free point-cloud instance segmentation engine."""

__version__ = "1.0.0"
