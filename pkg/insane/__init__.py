"""
INS²ANE Toolkit
Novelty-scored, strategically sampled autonomous experiments on image-spectrum grids
"""

__version__ = "1.0.0"
