"""Chiral quantum interconnect simulator: cascaded waveguide-QED modules,
master-equation transfer protocols, scattering and pulse calibration."""

__version__ = "0.1.0"

from . import analysis, lindblad, network, protocol, pulses, qops, rloptim, scattering, slh  # noqa: E402,F401

__all__ = ["analysis", "lindblad", "network", "protocol", "pulses", "qops", "rloptim", "scattering", "slh", "cli"]
