"""Correct incident count series for reporting delays."""
__version__ = "0.1.0"
