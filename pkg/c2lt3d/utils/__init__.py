"""
Utility functions shared across the c2lt3d package.
"""
