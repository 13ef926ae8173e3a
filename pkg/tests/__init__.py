"""Test suite for advartifact."""
