"""
Utility functions for RewriteNet
"""
