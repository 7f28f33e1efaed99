"""Post-processing figures for hydrochain study output directories.

These scripts never recompute physics: they read the CSV/JSON files written
by the `hydro` CLI, check every CSV header against the directory manifest,
and fail loudly (nonzero exit) on any schema drift.
"""

__version__ = "0.1.0"
