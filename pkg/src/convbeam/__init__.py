"""Mask-based WPE, MVDR and multi-source WPD beamforming for multi-channel speech."""

__version__ = "0.1.0"
