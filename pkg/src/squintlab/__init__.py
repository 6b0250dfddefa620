"""Wideband beam-squint simulation: arrays, channels, beamformers, estimators and ISAC."""

__version__ = "0.1.0"
