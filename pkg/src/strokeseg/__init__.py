"""Interactive within-brain tumor segmentation from sparse user strokes."""

__version__ = "0.1.0"
