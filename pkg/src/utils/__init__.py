"""
DeskAIA Utilities Module
"""
