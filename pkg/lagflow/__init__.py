"""
lagflow: numerical laboratory for graphical Lagrangian mean curvature flow
"""

from lagflow.core.config import settings

__version__ = settings.VERSION
