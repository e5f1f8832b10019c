"""Pyramid wavelet and Fourier image restoration in numpy.

Submodules: ``autodiff``, ``fourier``, ``wavelet``, ``swaplab``, ``model``,
``training``, ``imaging``, ``rain``, ``checkpoint`` and ``cli``.
"""
__version__ = "0.1.0"
