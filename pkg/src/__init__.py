"""Honest random forests with generalized fiducial uncertainty quantification"""

__version__ = "0.1.0"
