"""Domain layer - value types, validation rules and persistence formats.

No dependencies on adapters or infrastructure.
"""

from advartifact.domain.exceptions import DomainError, ValidationError

__all__ = [
    "DomainError",
    "ValidationError",
]
