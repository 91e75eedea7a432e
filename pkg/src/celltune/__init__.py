"""Antenna-tuning testbed: simulated macro network plus cooperative
multi-agent Q-learning with graph networks."""

__version__ = "0.1.0"
