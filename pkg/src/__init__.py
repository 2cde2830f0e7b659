"""
DeskAIA Source Package
"""
