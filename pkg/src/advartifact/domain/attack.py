"""Attack domain models.

Attack kinds with their parameters, per-sample results and the
summary row for a batch of results.
"""

from dataclasses import dataclass
from enum import StrEnum
from typing import Any

import numpy as np

from advartifact.domain.exceptions import InvalidSpecError
from advartifact.domain.tensor import Tensor, decode_tensor, encode_tensor


class AttackName(StrEnum):
    """Attack identifiers as used in config files and CLI flags."""

    FGSM = "fgsm"
    BIM_A = "bim-a"
    BIM_B = "bim-b"
    JSMA = "jsma"
    CW = "cw"

    @property
    def is_targeted(self) -> bool:
        return self in (AttackName.JSMA, AttackName.CW)

    @property
    def uses_pixel_flips(self) -> bool:
        """Whether the matched noisy sample flips pixels (L0) instead of adding Gaussian noise (L2)."""
        return self.is_targeted


@dataclass(frozen=True)
class FgsmParams:
    """Single signed-gradient step of size ``epsilon``."""

    epsilon: float = 0.25

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise InvalidSpecError(f"fgsm epsilon must be >= 0, got {self.epsilon}")


@dataclass(frozen=True)
class BimParams:
    """Iterated FGSM projected onto the epsilon_clip ball around x.

    Attributes:
        epsilon_step: Step size per iteration
        epsilon_clip: Radius of the L-infinity ball around x
        iterations: max_iters for BIM-A, n_iters for BIM-B
    """

    epsilon_step: float = 0.03
    epsilon_clip: float = 0.3
    iterations: int = 50

    def __post_init__(self) -> None:
        if self.epsilon_step <= 0 or self.epsilon_clip <= 0:
            raise InvalidSpecError("bim epsilon_step and epsilon_clip must be positive")
        if self.iterations < 0:
            raise InvalidSpecError(f"bim iterations must be >= 0, got {self.iterations}")


@dataclass(frozen=True)
class JsmaParams:
    """Saliency-map attack settings.

    Attributes:
        theta: Amount added to each selected feature (1.0 saturates)
        max_fraction: Upper bound on the fraction of features changed
    """

    theta: float = 1.0
    max_fraction: float = 0.1

    def __post_init__(self) -> None:
        if self.theta <= 0:
            raise InvalidSpecError(f"jsma theta must be positive, got {self.theta}")
        if not 0 < self.max_fraction <= 1:
            raise InvalidSpecError(f"jsma max_fraction must lie in (0, 1], got {self.max_fraction}")


@dataclass(frozen=True)
class CwL0Params:
    """Settings for the tanh-reparameterized L0 attack.

    Attributes:
        kappa: Confidence margin (hinge floor is -kappa)
        c: Weight of the hinge term
        steps: Fixed number of descent steps on omega
        step_size: Descent step size
        grad_threshold: Relative gradient magnitude below which changes are undone
        min_change: Changes smaller than this (one 8-bit grey level) are undone
    """

    kappa: float = 0.0
    c: float = 1.0
    steps: int = 1000
    step_size: float = 0.01
    grad_threshold: float = 0.01
    min_change: float = 1.0 / 255.0

    def __post_init__(self) -> None:
        if self.kappa < 0:
            raise InvalidSpecError(f"cw kappa must be >= 0, got {self.kappa}")
        if self.c < 0:
            raise InvalidSpecError(f"cw c must be >= 0, got {self.c}")
        if self.steps < 0:
            raise InvalidSpecError(f"cw steps must be >= 0, got {self.steps}")
        if self.step_size <= 0:
            raise InvalidSpecError(f"cw step_size must be positive, got {self.step_size}")
        if not 0 <= self.grad_threshold <= 1:
            raise InvalidSpecError("cw grad_threshold must lie in [0, 1]")
        if self.min_change < 0:
            raise InvalidSpecError("cw min_change must be >= 0")


AttackParams = FgsmParams | BimParams | JsmaParams | CwL0Params

_PARAM_TYPES: dict[AttackName, type] = {
    AttackName.FGSM: FgsmParams,
    AttackName.BIM_A: BimParams,
    AttackName.BIM_B: BimParams,
    AttackName.JSMA: JsmaParams,
    AttackName.CW: CwL0Params,
}


@dataclass(frozen=True)
class AttackKind:
    """An attack algorithm together with its parameters."""

    name: AttackName
    params: AttackParams

    def __post_init__(self) -> None:
        expected = _PARAM_TYPES[self.name]
        if not isinstance(self.params, expected):
            raise InvalidSpecError(f"{self.name} expects {expected.__name__}")

    @classmethod
    def fgsm(cls, epsilon: float = 0.25) -> "AttackKind":
        return cls(AttackName.FGSM, FgsmParams(epsilon))

    @classmethod
    def bim_a(cls, epsilon_step: float = 0.03, epsilon_clip: float = 0.3, max_iters: int = 50) -> "AttackKind":
        return cls(AttackName.BIM_A, BimParams(epsilon_step, epsilon_clip, max_iters))

    @classmethod
    def bim_b(cls, epsilon_step: float = 0.03, epsilon_clip: float = 0.3, n_iters: int = 50) -> "AttackKind":
        return cls(AttackName.BIM_B, BimParams(epsilon_step, epsilon_clip, n_iters))

    @classmethod
    def jsma(cls, theta: float = 1.0, max_fraction: float = 0.1) -> "AttackKind":
        return cls(AttackName.JSMA, JsmaParams(theta, max_fraction))

    @classmethod
    def cw_l0(cls, **kwargs: Any) -> "AttackKind":
        return cls(AttackName.CW, CwL0Params(**kwargs))

    @staticmethod
    def params_type(name: AttackName) -> type:
        return _PARAM_TYPES[name]

    def to_dict(self) -> dict[str, Any]:
        return {"name": str(self.name), **vars(self.params)}


@dataclass(frozen=True, eq=False)
class AttackResult:
    """Outcome of attacking one correctly classified sample.

    Attributes:
        kind: Attack that produced the sample
        x: Original sample
        x_adv: Adversarial sample
        x_noisy: Perturbation-matched noisy counterpart
        true_label: Label of x
        adv_label: Deterministic prediction on x_adv
        success: Misclassified (untargeted) or hit target (targeted)
        l2_norm: ||x_adv - x||_2
        l0_count: Number of changed elements
        iterations: Steps the attack performed
        target: Target class for targeted attacks
        sample_id: Index of x in its source dataset
    """

    kind: AttackName
    x: Tensor
    x_adv: Tensor
    x_noisy: Tensor
    true_label: int
    adv_label: int
    success: bool
    l2_norm: float
    l0_count: int
    iterations: int
    target: int | None = None
    sample_id: int | None = None

    @property
    def perturbation(self) -> Tensor:
        return self.x_adv - self.x

    def to_dict(self) -> dict[str, Any]:
        """JSON-lines record with base64 tensors."""
        return {
            "kind": str(self.kind),
            "sample_id": self.sample_id,
            "true_label": self.true_label,
            "adv_label": self.adv_label,
            "target": self.target,
            "success": self.success,
            "l2_norm": self.l2_norm,
            "l0_count": self.l0_count,
            "iterations": self.iterations,
            "x": encode_tensor(self.x),
            "x_adv": encode_tensor(self.x_adv),
            "x_noisy": encode_tensor(self.x_noisy),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AttackResult":
        return cls(
            kind=AttackName(data["kind"]),
            x=decode_tensor(data["x"]),
            x_adv=decode_tensor(data["x_adv"]),
            x_noisy=decode_tensor(data["x_noisy"]),
            true_label=int(data["true_label"]),
            adv_label=int(data["adv_label"]),
            success=bool(data["success"]),
            l2_norm=float(data["l2_norm"]),
            l0_count=int(data["l0_count"]),
            iterations=int(data["iterations"]),
            target=None if data.get("target") is None else int(data["target"]),
            sample_id=None if data.get("sample_id") is None else int(data["sample_id"]),
        )


def perturbation_norms(x: Tensor, x_adv: Tensor) -> tuple[float, int]:
    """(L2 norm, L0 count) of ``x_adv - x``."""
    delta = x_adv - x
    return float(np.linalg.norm(delta.ravel())), int(np.count_nonzero(delta))


@dataclass(frozen=True)
class AttackStats:
    """Summary row for one attack over a batch of results.

    Attributes:
        kind: Attack
        count: Number of attacked samples
        mean_l2: Mean perturbation L2 norm
        adv_accuracy: Fraction of adversarial samples still classified correctly
        mean_l0: Mean number of changed elements
        success_rate: Fraction of successful attacks
        noisy_accuracy: Accuracy on the matched noisy samples
    """

    kind: AttackName
    count: int
    mean_l2: float
    adv_accuracy: float
    mean_l0: float
    success_rate: float
    noisy_accuracy: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "attack": str(self.kind),
            "count": self.count,
            "mean_l2": self.mean_l2,
            "adv_accuracy": self.adv_accuracy,
            "mean_l0": self.mean_l0,
            "success_rate": self.success_rate,
            "noisy_accuracy": self.noisy_accuracy,
        }
