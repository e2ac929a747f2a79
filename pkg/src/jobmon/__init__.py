"""
jobmon - job-aware cluster performance monitoring.

Collectors write line-protocol metrics to the router, which tags them with the
jobs running on their origin host, stores and republishes them. The analysis
and dashboard packages read the stored job series back.
"""

__version__ = "0.1.0"
