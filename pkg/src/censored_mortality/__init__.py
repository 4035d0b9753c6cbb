"""Mortality estimates for registries whose outcomes are censored by transfer out."""

__version__ = "0.1.0"
