"""HSI-guided material segmentation of degraded RGB aerial imagery."""

__version__ = "0.1.0"
