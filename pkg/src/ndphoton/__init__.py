"""Simulation and efficiency analytics for cavity-based nondestructive photon detection."""
from .cavity import (ReflectionAmplitudes, SystemParams, measured_reflectivity, mhz,
                     reflection_amplitude, reflection_amplitudes, reflection_spectrum)
from .errors import DomainError, ParameterError

__version__ = "0.1.0"
