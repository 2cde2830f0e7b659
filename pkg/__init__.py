"""
DeskAIA - Desk-scale Asynchronous Interaction Aggregation
Version 1.0.0
"""

__version__ = "1.0.0"
__author__ = "DeskAIA Team"
__license__ = "MIT"
