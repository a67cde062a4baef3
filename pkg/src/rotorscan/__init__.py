"""Localize a rotating wind turbine in accumulated LiDAR scans and plan its inspection."""

__version__ = "0.1.0"
