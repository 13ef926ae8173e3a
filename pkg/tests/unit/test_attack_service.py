"""Unit tests for attack service.

Linear softmax models keep the gradients signs and saliency values
computable by hand.
"""

import itertools

import numpy as np
import pytest

from advartifact.domain.attack import AttackKind, AttackName, CwL0Params
from advartifact.domain.exceptions import (
    EmptyInputError,
    InvalidSpecError,
    NoAdmissiblePairError,
    NotCorrectlyClassifiedError,
)
from advartifact.services import attack_service, network_service
from tests.builders import linear_model, small_convnet

X = np.array([0.6, 0.4])
Y0 = np.array([1.0, 0.0])


def _grid_minimizer(weight, x: np.ndarray, target: int, c: float, kappa: float) -> np.ndarray:
    """Brute-force minimizer of the C&W objective over a 2D omega grid (two classes)."""
    omega = np.linspace(-4.0, 4.0, 801)
    w0, w1 = np.meshgrid(omega, omega, indexing="ij")
    points = np.stack([attack_service.from_tanh_space(w0), attack_service.from_tanh_space(w1)], axis=-1)
    logits = points @ np.asarray(weight, dtype=np.float64).T
    margin = logits[..., 1 - target] - logits[..., target]
    value = ((points - x) ** 2).sum(axis=-1) + c * np.maximum(margin, -kappa)
    i, j = np.unravel_index(np.argmin(value), value.shape)
    return points[i, j]


@pytest.fixture
def identity_model():
    return linear_model(np.eye(2))


@pytest.fixture
def paired_model():
    """Class 0 reads features 0-1, class 1 reads features 2-3."""
    return linear_model([[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]])


class TestFgsm:
    """Tests for fgsm."""

    def test_single_step_flips_prediction(self, identity_model) -> None:
        """Should step to [0.3, 0.7] and succeed with epsilon 0.3."""
        result = attack_service.fgsm(identity_model, X, Y0, 0.3)

        assert result.x_adv.tolist() == pytest.approx([0.3, 0.7])
        assert result.adv_label == 1
        assert result.success
        assert result.iterations == 1
        assert result.l0_count == 2
        assert result.l2_norm == pytest.approx(np.sqrt(0.18))

    def test_zero_epsilon_leaves_sample_unchanged(self, identity_model) -> None:
        """Should return x itself and report failure for epsilon 0."""
        result = attack_service.fgsm(identity_model, X, Y0, 0.0)

        assert np.array_equal(result.x_adv, X)
        assert not result.success
        assert result.l2_norm == 0.0

    def test_output_stays_in_unit_box(self) -> None:
        """Should clamp every adversarial pixel to [0, 1]."""
        model = small_convnet(seed=3)
        x = np.random.default_rng(3).uniform(size=(1, 6, 6))
        label = network_service.predict(model, x)

        result = attack_service.fgsm(model, x, np.eye(3)[label], 0.5)

        assert result.x_adv.min() >= 0.0
        assert result.x_adv.max() <= 1.0
        assert np.abs(result.x_adv - x).max() <= 0.5 + 1e-12

    def test_misclassified_sample_rejected(self, identity_model) -> None:
        """Should refuse a sample the model already gets wrong."""
        with pytest.raises(NotCorrectlyClassifiedError):
            attack_service.fgsm(identity_model, [0.4, 0.6], Y0, 0.1)

    def test_negative_epsilon_rejected(self, identity_model) -> None:
        """Should reject epsilon < 0."""
        with pytest.raises(InvalidSpecError):
            attack_service.fgsm(identity_model, X, Y0, -0.1)


class TestBim:
    """Tests for both BIM variants."""

    def test_bim_a_stops_at_first_misclassification(self, identity_model) -> None:
        """Should stop after one iteration once the label flips."""
        result = attack_service.bim(identity_model, X, Y0, AttackKind.bim_a(0.3, 0.3, 10))

        assert result.iterations == 1
        assert result.success

    def test_bim_b_runs_every_iteration(self, identity_model) -> None:
        """Should keep stepping after success and stay in the clip ball."""
        result = attack_service.bim(identity_model, X, Y0, AttackKind.bim_b(0.1, 0.2, 5))

        assert result.iterations == 5
        assert result.success
        assert np.abs(result.x_adv - X).max() <= 0.2 + 1e-12
        assert result.x_adv.tolist() == pytest.approx([0.4, 0.6])

    def test_zero_iterations_return_x(self, identity_model) -> None:
        """Should return x unchanged when n_iters is 0."""
        result = attack_service.bim(identity_model, X, Y0, AttackKind.bim_b(0.1, 0.2, 0))

        assert np.array_equal(result.x_adv, X)
        assert result.iterations == 0
        assert not result.success

    @pytest.mark.parametrize("seed", range(20))
    def test_stays_in_clip_ball_and_unit_box(self, seed: int) -> None:
        """Should keep x_adv within epsilon_clip of x and inside [0, 1] for both variants."""
        model = small_convnet(seed=seed)
        rng = np.random.default_rng(seed)
        x = rng.uniform(size=(1, 6, 6))
        label = network_service.predict(model, x)
        clip = float(rng.uniform(0.05, 0.5))

        for kind in (AttackKind.bim_a(clip / 4, clip, 10), AttackKind.bim_b(clip / 4, clip, 10)):
            result = attack_service.bim(model, x, np.eye(3)[label], kind, seed=seed)

            assert np.abs(result.x_adv - x).max() <= clip + 1e-12
            assert result.x_adv.min() >= 0.0
            assert result.x_adv.max() <= 1.0
            assert result.iterations <= 10
            if kind.name is AttackName.BIM_A and result.success:
                assert result.adv_label != label

    def test_other_kind_rejected(self, identity_model) -> None:
        """Should only accept BIM attack kinds."""
        with pytest.raises(InvalidSpecError):
            attack_service.bim(identity_model, X, Y0, AttackKind.fgsm(0.1))


class TestJsma:
    """Tests for the saliency-map attack."""

    def test_saliency_favours_target_features(self) -> None:
        """Should give positive saliency only where the target gains and others lose."""
        d_probs = np.array([[-1.0, -1.0, 1.0, 0.5], [1.0, 1.0, -1.0, -0.5]])

        saliency = attack_service.saliency_map(d_probs, 0)

        assert saliency.tolist() == [0.0, 0.0, 1.0, 0.25]

    def test_pair_selection_prefers_lower_index_on_ties(self) -> None:
        """Should return the two highest-saliency admissible features, ordered."""
        saliency = np.array([0.0, 0.5, 0.9, 0.5, 0.9])
        domain = np.array([True, True, True, True, False])

        assert attack_service.select_pair(saliency, domain) == (1, 2)

    @pytest.mark.parametrize("seed", range(20))
    def test_pair_matches_exhaustive_search(self, seed: int) -> None:
        """Should pick a pair whose saliency sum is the best of all three pairs."""
        rng = np.random.default_rng(seed)
        d_probs = rng.choice([-1.0, 1.0], size=(3, 3)) * rng.uniform(0.1, 1.0, size=(3, 3))
        saliency = attack_service.saliency_map(d_probs, seed % 3)
        domain = np.ones(3, dtype=bool)

        assert np.all(saliency >= 0.0)
        if not np.any(saliency > 0.0):
            with pytest.raises(NoAdmissiblePairError):
                attack_service.select_pair(saliency, domain)
            return
        best = max(saliency[i] + saliency[j] for i, j in itertools.combinations(range(3), 2))

        i, j = attack_service.select_pair(saliency, domain)

        assert i < j
        assert saliency[i] + saliency[j] == best

    def test_no_admissible_pair(self) -> None:
        """Should raise when every remaining saliency is zero."""
        with pytest.raises(NoAdmissiblePairError):
            attack_service.select_pair(np.zeros(4), np.ones(4, dtype=bool))

    def test_saturating_step_succeeds(self, paired_model) -> None:
        """Should raise features 2 and 3 to 1 and reach the target in one iteration."""
        result = attack_service.jsma(paired_model, [0.6, 0.6, 0.2, 0.2], 1, theta=1.0, max_fraction=0.5)

        assert result.x_adv.tolist() == [0.6, 0.6, 1.0, 1.0]
        assert result.success
        assert result.target == 1
        assert result.iterations == 1
        assert result.l0_count == 2

    def test_budget_exhausted(self, paired_model) -> None:
        """Should stop when the changed fraction exceeds max_fraction."""
        result = attack_service.jsma(paired_model, [0.6, 0.6, 0.2, 0.2], 1, theta=0.2, max_fraction=0.4)

        assert not result.success
        assert result.adv_label == 0
        assert result.x_adv.tolist() == pytest.approx([0.6, 0.6, 0.4, 0.4])

    def test_stops_without_admissible_pair(self) -> None:
        """Should stop with a failed result once only unhelpful features remain."""
        model = linear_model([[2.0, 2.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]])

        result = attack_service.jsma(model, [0.6, 0.6, 0.2, 0.2], 1, theta=1.0, max_fraction=1.0)

        assert not result.success
        assert result.iterations == 1
        assert result.x_adv.tolist() == [0.6, 0.6, 1.0, 1.0]

    def test_features_only_increase(self) -> None:
        """Should never decrease a feature."""
        model = small_convnet(seed=6)
        x = np.random.default_rng(6).uniform(0.0, 0.5, size=(1, 6, 6))
        source = network_service.predict(model, x)

        result = attack_service.jsma(model, x, (source + 1) % 3, theta=1.0, max_fraction=0.3)

        assert np.all(result.x_adv >= x)
        assert result.x_adv.max() <= 1.0

    def test_target_equal_to_true_class_rejected(self, paired_model) -> None:
        """Should refuse to target the sample's own class."""
        with pytest.raises(InvalidSpecError):
            attack_service.jsma(paired_model, [0.6, 0.6, 0.2, 0.2], 0, theta=1.0, max_fraction=0.5)


class TestCarliniWagner:
    """Tests for the L0 tanh-space attack."""

    def test_tanh_space_round_trip(self) -> None:
        """Should recover interior pixels within 1e-9."""
        x = np.linspace(0.001, 0.999, 50)

        assert np.abs(attack_service.from_tanh_space(attack_service.to_tanh_space(x)) - x).max() <= 1e-9

    def test_box_edges_are_finite(self) -> None:
        """Should map 0 and 1 to finite omega."""
        omega = attack_service.to_tanh_space(np.array([0.0, 1.0]))

        assert np.all(np.isfinite(omega))

    def test_zero_weight_on_hinge_leaves_x(self, identity_model) -> None:
        """Should return x and fail when c is 0."""
        result = attack_service.cw_l0(identity_model, X, 1, CwL0Params(c=0.0, steps=50, step_size=0.05))

        assert np.array_equal(result.x_adv, X)
        assert not result.success
        assert result.l0_count == 0

    def test_reaches_target_with_margin(self, identity_model) -> None:
        """Should push logit 1 above logit 0 on an identity model."""
        params = CwL0Params(kappa=0.5, c=10.0, steps=100, step_size=0.05)

        result = attack_service.cw_l0(identity_model, X, 1, params)

        assert result.success
        assert result.adv_label == 1
        assert result.x_adv[1] > result.x_adv[0]
        assert result.l0_count == 2

    def test_saturated_hinge_leaves_only_distance_pull(self, identity_model) -> None:
        """Should reduce the objective to ||x' - x||^2 - c * kappa once the hinge sits at its floor."""
        x = np.array([0.2, 0.8])
        params = CwL0Params(kappa=0.1, c=1.0)

        value, gradient = attack_service.cw_objective(
            identity_model, attack_service.to_tanh_space(x), x, 1, params
        )

        assert value == pytest.approx(-0.1, abs=1e-12)
        assert np.abs(gradient).max() <= 1e-12

    @pytest.mark.parametrize(
        "weight, x, c, kappa",
        [
            (np.eye(2), [0.6, 0.4], 0.4, 0.5),
            (np.eye(2), [0.7, 0.5], 0.3, 1.0),
            (np.eye(2), [0.8, 0.3], 0.2, 0.1),
            ([[2.0, 0.0], [0.0, 1.0]], [0.6, 0.4], 0.2, 1.0),
        ],
    )
    def test_descent_endpoint_matches_grid_search(self, weight, x, c: float, kappa: float) -> None:
        """Should end within grid resolution of the brute-force minimizer over omega."""
        model = linear_model(weight)
        sample = np.array(x)
        params = CwL0Params(
            kappa=kappa, c=c, steps=2000, step_size=0.05, grad_threshold=0.0, min_change=0.0
        )

        result = attack_service.cw_l0(model, sample, 1, params)

        assert np.abs(result.x_adv - _grid_minimizer(weight, sample, 1, c, kappa)).max() <= 0.01

    def test_objective_gradient_matches_finite_differences(self) -> None:
        """Should differentiate the objective in omega correctly away from the hinge kink."""
        model = linear_model([[1.0, -0.5, 0.2], [0.3, 0.8, -0.4], [-0.2, 0.1, 0.9]])
        x = np.array([0.3, 0.5, 0.7])
        params = CwL0Params(kappa=0.0, c=2.0)
        omega = attack_service.to_tanh_space(x) + 0.1
        _, gradient = attack_service.cw_objective(model, omega, x, 2, params)
        numeric = np.zeros(3)
        for i in range(3):
            step = np.zeros(3)
            step[i] = 1e-6
            upper, _ = attack_service.cw_objective(model, omega + step, x, 2, params)
            lower, _ = attack_service.cw_objective(model, omega - step, x, 2, params)
            numeric[i] = (upper - lower) / 2e-6

        assert np.allclose(gradient, numeric, atol=1e-6)


class TestNoisyCounterpart:
    """Tests for perturbation-matched noise."""

    def test_pixel_flips_match_changed_count(self) -> None:
        """Should flip exactly as many pixels as the L0 attack changed."""
        x = np.full((1, 4, 4), 0.5)
        x_adv = x.copy()
        x_adv.flat[[0, 3, 5, 6, 9, 12, 15]] = 1.0

        noisy = attack_service.noisy_counterpart(x, x_adv, AttackName.JSMA, seed=2)

        assert np.count_nonzero(noisy != x) == 7
        assert set(noisy[noisy != x].tolist()) <= {0.0, 1.0}

    @pytest.mark.parametrize("seed", range(20))
    def test_pixel_flips_on_dark_image(self, seed: int) -> None:
        """Should change every chosen pixel when most of x is already 0."""
        x = np.zeros((1, 28, 28))
        x[0, 10:18, 13:15] = 0.9
        x_adv = x.copy()
        x_adv.flat[np.random.default_rng(100 + seed).choice(x.size, size=40, replace=False)] = 1.0

        for kind in (AttackName.JSMA, AttackName.CW):
            noisy = attack_service.noisy_counterpart(x, x_adv, kind, seed=seed)

            assert np.count_nonzero(noisy != x) == 40
            assert set(noisy[noisy != x].tolist()) <= {0.0, 1.0}

    def test_pixel_flips_on_saturated_image(self) -> None:
        """Should send pixels already at 1 to 0."""
        x = np.ones(12)
        x_adv = x.copy()
        x_adv[:5] = 0.0

        noisy = attack_service.noisy_counterpart(x, x_adv, AttackName.JSMA, seed=3)

        assert np.count_nonzero(noisy == 0.0) == 5

    def test_gaussian_norm_matches(self) -> None:
        """Should rescale Gaussian noise to the adversarial L2 norm."""
        x = np.full((1, 4, 4), 0.5)
        x_adv = x + 0.01

        noisy = attack_service.noisy_counterpart(x, x_adv, AttackName.FGSM, seed=4)

        assert np.linalg.norm((noisy - x).ravel()) == pytest.approx(0.04, abs=1e-12)

    def test_exact_gaussian_norm(self) -> None:
        """Should return noise with exactly the requested norm."""
        noise = attack_service.gaussian_perturbation((3, 5), 0.75, seed=1)

        assert np.linalg.norm(noise) == pytest.approx(0.75, abs=1e-12)

    def test_unchanged_sample_gives_unchanged_noise(self) -> None:
        """Should return x when the attack changed nothing."""
        x = np.full(6, 0.3)

        for kind in (AttackName.BIM_A, AttackName.CW):
            assert np.array_equal(attack_service.noisy_counterpart(x, x, kind, seed=0), x)

    def test_seeded(self) -> None:
        """Should reproduce the same noisy sample for the same seed."""
        x = np.full(10, 0.5)
        x_adv = x + 0.1

        first = attack_service.noisy_counterpart(x, x_adv, AttackName.BIM_B, seed=8)
        second = attack_service.noisy_counterpart(x, x_adv, AttackName.BIM_B, seed=8)

        assert first.tobytes() == second.tobytes()


class TestRunAttack:
    """Tests for run_attack and batch summaries."""

    def test_targeted_attacks_aim_at_next_class(self, paired_model) -> None:
        """Should target (label + 1) mod num_classes and record the sample id."""
        result = attack_service.run_attack(
            paired_model, [0.6, 0.6, 0.2, 0.2], 0, AttackKind.jsma(1.0, 0.5), seed=3, sample_id=5
        )

        assert result.target == 1
        assert result.sample_id == 5
        assert result.kind is AttackName.JSMA

    def test_untargeted_attack_dispatch(self, identity_model) -> None:
        """Should run FGSM with the configured epsilon."""
        result = attack_service.run_attack(identity_model, X, 0, AttackKind.fgsm(0.3), seed=0)

        assert result.kind is AttackName.FGSM
        assert result.target is None
        assert result.success

    def test_summary(self, identity_model) -> None:
        """Should aggregate norms, accuracy and success rate."""
        results = [
            attack_service.fgsm(identity_model, X, Y0, 0.3, seed=0),
            attack_service.fgsm(identity_model, X, Y0, 0.0, seed=1),
        ]

        stats = attack_service.summarize_attack(identity_model, AttackName.FGSM, results)

        assert stats.count == 2
        assert stats.mean_l2 == pytest.approx(np.sqrt(0.18) / 2)
        assert stats.adv_accuracy == 0.5
        assert stats.success_rate == 0.5
        assert 0.0 <= stats.noisy_accuracy <= 1.0

    def test_empty_results(self) -> None:
        """Should raise EmptyInputError for an empty batch."""
        with pytest.raises(EmptyInputError):
            attack_service.perturbation_stats([])
