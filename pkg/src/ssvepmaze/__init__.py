"""SSVEP-driven maze robot: signal pipeline, CNN classifier, and closed loop."""

__version__ = "0.1.0"

from .backend import USING_NUMBA, backend_name  # noqa: F401
