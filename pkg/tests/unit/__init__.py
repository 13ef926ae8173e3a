"""Unit tests with fakes.

Tests for business logic without external dependencies.
"""
