"""
Exception hierarchy shared by every fullswap module.

Library code raises these; the CLI catches FullSwapError, logs it and exits 1.
"""

from typing import Dict, Optional

import numpy as np


class FullSwapError(Exception):
    """Base class for all fullswap errors"""


class InvalidInputError(FullSwapError, ValueError):
    """Arguments violate an operation's preconditions"""


class UnsupportedBodyError(FullSwapError):
    """The convex body family has no constructive discretizer"""


class UnsupportedDimensionError(FullSwapError):
    """Operation is only defined for a restricted set of dimensions"""


class GeometryInconsistencyError(FullSwapError):
    """A point that should lie in a hull could not be located there"""


class ConfigurationError(FullSwapError):
    """Engine, loss or experiment components do not fit together"""


class UnsupportedEvaluationError(FullSwapError):
    """No evaluator exists for the (dimension, loss class) combination"""


class NumericalError(FullSwapError):
    """A numerical routine failed to converge"""

    def __init__(self, message: str, diagnostics: Optional[Dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InfeasibleError(FullSwapError):
    """Point is outside the convex hull; certificate separates it"""

    def __init__(self, message: str, certificate: Optional[np.ndarray] = None):
        super().__init__(message)
        self.certificate = certificate
