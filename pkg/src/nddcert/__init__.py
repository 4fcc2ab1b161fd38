"""Simulation and small-gain certification of networked dynamical systems
perturbed by state-dependent unintended interactions."""

__version__ = "0.1.0"

from .core import (
    CertificateReport,
    Edge,
    IntervalBox,
    NetworkDescriptor,
    NetworkValidationError,
    SignedStructure,
    SimulationConfig,
    SubsystemDescriptor,
    validate_network,
)

__all__ = [
    "__version__",
    "CertificateReport",
    "Edge",
    "IntervalBox",
    "NetworkDescriptor",
    "NetworkValidationError",
    "SignedStructure",
    "SimulationConfig",
    "SubsystemDescriptor",
    "validate_network",
]
