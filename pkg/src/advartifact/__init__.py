"""advartifact - detect adversarial samples from density and uncertainty artifacts.

A small numpy network with dropout is trained on an image dataset, attacked
with gradient and saliency attacks, and each sample is described by two
features: a kernel density estimate in the last hidden layer and the
variance of Monte Carlo dropout predictions. A logistic-regression detector
combines them.

Layers:
- domain: value types, validation and persistence formats
- protocols / adapters: filesystem and artifact store
- services: pure functions over the domain types
- cli: typer commands, one per pipeline stage
"""

__version__ = "0.1.0"
