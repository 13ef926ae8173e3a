"""Integration tests.

End-to-end pipeline runs on small synthetic datasets and real adapters.
"""
