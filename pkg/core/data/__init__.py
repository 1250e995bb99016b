"""
Solver and output defaults.
"""

from .settings_loader import load_settings, DEFAULT_SETTINGS

__all__ = ['load_settings', 'DEFAULT_SETTINGS']
