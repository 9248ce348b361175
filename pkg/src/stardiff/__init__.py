"""Desk-scale masked discrete diffusion samplers with exact oracles."""

__version__ = "0.1.0"
