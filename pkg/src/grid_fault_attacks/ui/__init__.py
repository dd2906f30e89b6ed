"""
Terminal output for grid-fault-attacks.

This package contains the rich log handler, RESULT lines and summary tables.
"""
