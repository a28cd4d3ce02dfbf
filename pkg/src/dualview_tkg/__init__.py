"""Dual-view temporal knowledge graph extrapolation on a small numpy autodiff engine."""
from .errors import DataError, NumericError, ShapeError, StaleTapeError, TKGError

__version__ = "0.1.0"

__all__ = ["DataError", "NumericError", "ShapeError", "StaleTapeError", "TKGError", "__version__"]
