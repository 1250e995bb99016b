"""
Standard exchange-kernel shapes.
"""

from .kernel_library import KernelLibrary, kernel_library

__all__ = ['KernelLibrary', 'kernel_library']
