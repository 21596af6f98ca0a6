"""Desk-scale workbench for visually guided 1-D latent-action teleoperation."""

__version__ = "0.1.0"
