"""Point-diffraction phase-shifting tomography of spatial qudits."""

from pdiqt.field import (
    ComplexFieldGrid,
    RealGrid,
    apply_mask,
    forward_fourier,
    intensity,
    inverse_fourier,
    total_power,
)
from pdiqt.states import QuditState, fidelity, haar_random, normalize

__version__ = "0.1.0"

__all__ = [
    "ComplexFieldGrid",
    "QuditState",
    "RealGrid",
    "apply_mask",
    "fidelity",
    "forward_fourier",
    "haar_random",
    "intensity",
    "inverse_fourier",
    "normalize",
    "total_power",
]
