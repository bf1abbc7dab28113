"""
双积分轨道关联系统
Linkage of short-arc attributables by the two-body integrals
"""

from .core import VERSION as __version__
