"""Round-trip and validation tests for the persisted artifact types.

Rationale:
    Every stage reads what an earlier stage wrote, so save -> load -> save
    must reproduce the same bytes.
"""

import json
import math

import numpy as np
import pytest

from advartifact.domain.artifacts import ArtifactFeatures, ClassFeatureBank
from advartifact.domain.attack import AttackKind, AttackName, AttackResult, FgsmParams, JsmaParams
from advartifact.domain.dataset import Dataset
from advartifact.domain.detector import (
    DetectorModel,
    FeatureRecord,
    SampleSet,
    ZScoreParams,
)
from advartifact.domain.exceptions import (
    EmptyClassError,
    InvalidGridError,
    InvalidSpecError,
    ShapeMismatchError,
    UnfittedBankError,
    UnknownClassError,
    ValidationError,
)
from advartifact.domain.tensor import decode_tensor, encode_tensor


def _dumps(data: dict) -> str:
    return json.dumps(data, sort_keys=True)


class TestTensorEncoding:
    """Tests for the base64 float64 tensor form."""

    def test_exact_values_survive(self) -> None:
        """Should preserve awkward floats bit for bit."""
        x = np.array([[0.1, -0.0, 1e-300], [np.pi, 2.0**-1074, 1.0 / 3.0]])

        decoded = decode_tensor(encode_tensor(x))

        assert decoded.shape == (2, 3)
        assert decoded.tobytes() == x.tobytes()

    def test_payload_length_checked(self) -> None:
        """Should reject a payload that disagrees with its shape."""
        data = encode_tensor(np.zeros(4))
        data["shape"] = [5]

        with pytest.raises(ShapeMismatchError):
            decode_tensor(data)


class TestClassFeatureBank:
    """Tests for ClassFeatureBank."""

    def test_round_trip_is_bit_exact(self) -> None:
        """Should reproduce identical bytes after save -> load -> save."""
        rng = np.random.default_rng(0)
        bank = ClassFeatureBank((rng.normal(size=(3, 4)), rng.normal(size=(5, 4))), bandwidth=0.37)

        first = _dumps(bank.to_dict())
        assert _dumps(ClassFeatureBank.from_dict(json.loads(first)).to_dict()) == first

    def test_unfitted_bank_has_no_sigma(self) -> None:
        """Should raise UnfittedBankError before a bandwidth is set."""
        bank = ClassFeatureBank((np.zeros((2, 3)),))

        with pytest.raises(UnfittedBankError):
            _ = bank.sigma
        assert bank.with_bandwidth(0.5).sigma == 0.5

    def test_empty_class_rejected(self) -> None:
        """Should reject a class without points."""
        with pytest.raises(EmptyClassError) as exc_info:
            ClassFeatureBank((np.zeros((2, 3)), np.zeros((0, 3))))
        assert exc_info.value.class_index == 1

    def test_mixed_dimensions_rejected(self) -> None:
        """Should require one hidden dimension across classes."""
        with pytest.raises(ShapeMismatchError):
            ClassFeatureBank((np.zeros((2, 3)), np.zeros((2, 4))))

    def test_non_positive_bandwidth_rejected(self) -> None:
        """Should reject sigma <= 0."""
        with pytest.raises(InvalidGridError):
            ClassFeatureBank((np.zeros((2, 3)),), bandwidth=0.0)

    def test_unknown_class(self) -> None:
        """Should raise UnknownClassError for an index outside the bank."""
        with pytest.raises(UnknownClassError):
            ClassFeatureBank((np.zeros((2, 3)),)).class_features(1)


class TestDetectorModel:
    """Tests for the detector document."""

    def test_round_trip_is_bit_exact(self) -> None:
        """Should reproduce identical bytes after save -> load -> save."""
        detector = DetectorModel(
            zscore=ZScoreParams(mean=(0.013, 41.5), std=(0.002, 7.25)),
            weights=(1.3, -0.7),
            bias=0.1,
            initial_loss=math.log(2.0),
            final_loss=0.42,
        )

        first = _dumps(detector.to_dict())
        assert _dumps(DetectorModel.from_dict(json.loads(first)).to_dict()) == first

    def test_non_finite_weights_rejected(self) -> None:
        """Should refuse NaN parameters."""
        with pytest.raises(ValidationError):
            DetectorModel(zscore=ZScoreParams((0.0, 0.0), (1.0, 1.0)), weights=(float("nan"), 0.0))

    def test_zero_std_rejected(self) -> None:
        """Should refuse a zero z-score scale."""
        with pytest.raises(ValidationError):
            ZScoreParams(mean=(0.0, 0.0), std=(1.0, 0.0))


class TestFeatureRecord:
    """Tests for feature-table rows."""

    def test_row_round_trip(self) -> None:
        """Should parse the string row a CSV reader returns."""
        record = FeatureRecord(7, SampleSet.NOISY, "jsma", ArtifactFeatures(0.0125, 88.5, 3))
        row = {k: repr(v) if isinstance(v, float) else str(v) for k, v in record.to_row().items()}

        assert FeatureRecord.from_row(row) == record


class TestAttackResult:
    """Tests for attack-result records."""

    def test_round_trip_is_bit_exact(self) -> None:
        """Should reproduce identical JSON after save -> load -> save."""
        rng = np.random.default_rng(1)
        x = rng.uniform(size=(1, 4, 4))
        result = AttackResult(
            kind=AttackName.JSMA,
            x=x,
            x_adv=np.minimum(x + 0.5, 1.0),
            x_noisy=x.copy(),
            true_label=2,
            adv_label=3,
            success=True,
            l2_norm=1.75,
            l0_count=16,
            iterations=8,
            target=3,
            sample_id=41,
        )

        first = _dumps(result.to_dict())
        assert _dumps(AttackResult.from_dict(json.loads(first)).to_dict()) == first

    def test_params_must_match_attack(self) -> None:
        """Should reject JSMA parameters on an FGSM attack."""
        with pytest.raises(InvalidSpecError):
            AttackKind(AttackName.FGSM, JsmaParams())

    def test_negative_epsilon_rejected(self) -> None:
        """Should reject a negative FGSM magnitude."""
        with pytest.raises(InvalidSpecError):
            FgsmParams(-0.1)

    def test_targeted_attacks_use_pixel_flips(self) -> None:
        """Should pair L0 attacks with pixel-flip noise and L2 attacks with Gaussian noise."""
        assert AttackName.JSMA.uses_pixel_flips
        assert AttackName.CW.uses_pixel_flips
        assert not AttackName.BIM_B.uses_pixel_flips


class TestDataset:
    """Tests for Dataset validation."""

    def test_pixels_out_of_range_rejected(self) -> None:
        """Should refuse pixels above 1."""
        with pytest.raises(ValidationError, match=r"\[0, 1\]"):
            Dataset(np.full((1, 1, 2, 2), 1.5), np.zeros(1, dtype=np.int64), 2)

    def test_take_keeps_metadata(self) -> None:
        """Should subset images and labels together."""
        dataset = Dataset(
            np.linspace(0, 1, 12).reshape(3, 1, 2, 2), np.array([0, 1, 1]), 2, source="toy.csv"
        )

        taken = dataset.take([2, 0], split="validation")

        assert len(taken) == 2
        assert taken.labels.tolist() == [1, 0]
        assert taken.split == "validation"
        assert taken.source == "toy.csv"
        assert taken.onehot().tolist() == [[0.0, 1.0], [1.0, 0.0]]
