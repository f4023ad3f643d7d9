"""
tests package - Unit tests for the GraphJigsaw library
"""
