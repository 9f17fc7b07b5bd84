"""
Runner modules for orchestrating c2lt3d pipeline commands.
"""
