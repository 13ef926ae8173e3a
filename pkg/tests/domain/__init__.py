"""Domain model tests: validation and persistence formats."""
