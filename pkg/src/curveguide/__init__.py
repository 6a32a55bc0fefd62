"""Guidance-curve decomposition of bottom features, iso-scallop toolpaths and feed simulation."""

from .errors import CurveGuideError, InvalidInputError

__version__ = "0.1.0"
__all__ = ["CurveGuideError", "InvalidInputError", "__version__"]
