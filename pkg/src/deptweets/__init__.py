"""Multi-class depression-type detection for short social-media texts."""

from deptweets.labels import DepressionClass, LABEL_ORDER

__version__ = "0.1.0"

__all__ = ["DepressionClass", "LABEL_ORDER", "__version__"]
