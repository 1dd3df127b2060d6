"""Transferable fiat-backed electronic cash, simulated end to end."""

__version__ = "0.1.0"

from .profiles import STANDARD, TOY, Profile, get_profile  # noqa: F401
