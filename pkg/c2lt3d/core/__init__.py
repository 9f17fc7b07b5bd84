"""
Core algorithms: geometry, charts, tokens, context, seams, repair and realization.
"""
