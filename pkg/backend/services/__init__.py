from .errors import TwinBeamError
from .pipeline import twinbeam_service

__all__ = [
    "TwinBeamError",
    "twinbeam_service",
]
