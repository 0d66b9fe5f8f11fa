"""Tests for label-free feature-scattering positives."""

import torch

from gacd.attacks.feature_scatter import feature_distortion, feature_scatter_positive
from gacd.attacks.pgd import AttackStats
from gacd.config.settings import AttackBudget, OTConfig


def batch(seed: int = 0) -> torch.Tensor:
    return torch.rand(8, 3, 32, 32, generator=torch.Generator().manual_seed(seed))


class TestFeatureScatter:
    """Test positive construction."""

    def test_stays_in_ball_and_box(self, small_model):
        """Test stays in ball and box."""
        model = small_model.eval()
        x = batch()
        budget = AttackBudget(epsilon=8 / 255, steps=3, step_size=2 / 255)
        x_pos = feature_scatter_positive(
            model.features, x, budget, OTConfig(), generator=torch.Generator().manual_seed(0)
        )
        assert x_pos.shape == x.shape
        assert ((x_pos - x).abs() <= budget.epsilon + 1e-6).all()
        assert ((x_pos >= 0) & (x_pos <= 1)).all()
        assert not x_pos.requires_grad

    def test_scatters_features(self):
        """Test scatters features."""
        weight = torch.randn(64, 3 * 32 * 32, generator=torch.Generator().manual_seed(5))

        def extractor(z):
            return (z.flatten(1) - 0.5) @ weight.T

        x = batch(1)
        budget = AttackBudget(epsilon=8 / 255, steps=3, step_size=2 / 255, random_start=True)
        x_pos = feature_scatter_positive(
            extractor, x, budget, OTConfig(), generator=torch.Generator().manual_seed(0)
        )
        assert feature_distortion(extractor, x, x, OTConfig()) < 1e-4
        assert feature_distortion(extractor, x, x_pos, OTConfig()) > 1e-3

    def test_more_steps_scatter_further(self):
        """Seven ascent steps from the same start distort more than one."""
        weight = torch.randn(64, 3 * 32 * 32, generator=torch.Generator().manual_seed(5))

        def extractor(z):
            return (z.flatten(1) - 0.5) @ weight.T

        x = batch(2)
        distortions = {}
        for steps in (1, 7):
            budget = AttackBudget(epsilon=8 / 255, steps=steps, step_size=2 / 255, random_start=True)
            x_pos = feature_scatter_positive(
                extractor, x, budget, OTConfig(), generator=torch.Generator().manual_seed(0)
            )
            distortions[steps] = feature_distortion(extractor, x, x_pos, OTConfig())

        assert distortions[7] > distortions[1]

    def test_zero_budget_is_identity(self, small_model):
        """Test zero budget is identity."""
        x = batch()
        x_pos = feature_scatter_positive(
            small_model.eval().features, x, AttackBudget(epsilon=0.0, step_size=0.0), OTConfig()
        )
        assert torch.equal(x_pos, x)

    def test_reproducible_with_generator(self, small_model):
        """Test reproducible with generator."""
        model = small_model.eval()
        x = batch()
        budget = AttackBudget(epsilon=8 / 255, steps=2, step_size=2 / 255, random_start=True)
        runs = [
            feature_scatter_positive(
                model.features, x, budget, OTConfig(), generator=torch.Generator().manual_seed(3)
            )
            for _ in range(2)
        ]
        assert torch.equal(runs[0], runs[1])

    def test_leaves_model_untouched(self, small_model):
        """Test leaves model untouched."""
        model = small_model.eval()
        before = {k: v.clone() for k, v in model.state_dict().items()}
        stats = AttackStats()
        feature_scatter_positive(
            model.features, batch(), AttackBudget(steps=2), OTConfig(), stats=stats
        )
        after = model.state_dict()
        assert all(torch.equal(before[k], after[k]) for k in before)
        assert all(p.grad is None for p in model.parameters())
        assert stats.attacked == 8
        assert stats.nonfinite == 0
