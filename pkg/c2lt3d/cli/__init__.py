"""
Command-line interface utilities for the c2lt3d package.
"""
