"""
cropsim
Multi-conditional WGAN-GP for crop growth prediction and what-if simulation
"""

__version__ = "0.1.0"
