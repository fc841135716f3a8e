"""Kernel-weighted spatio-temporal graph networks for pedestrian trajectory
prediction on ETH/UCY-format data."""

__version__ = "0.1.0"
