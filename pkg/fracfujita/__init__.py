"""
Space-time fractional heat kernels and Fujita-type blow-up experiments.
"""

__version__ = "0.1.0"
