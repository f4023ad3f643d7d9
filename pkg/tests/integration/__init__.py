"""
integration tests package - command line and variant comparison runs
"""
