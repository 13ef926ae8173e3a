"""Service layer - pipeline logic as plain functions.

Network, attack, artifact and detector services are pure functions of
their arguments and an explicit seed. Pipeline stages take an
ExperimentContext carrying the filesystem, artifact store and config.
"""

from advartifact.services.context import ExperimentContext

__all__ = ["ExperimentContext"]
