"""Modulating-retroreflector satellite laser link: channel, sensing and positioning."""

__version__ = "0.1.0"
