"""Tests for log-domain Sinkhorn transport."""

import pytest
import torch
import torch.nn.functional as F
from scipy.optimize import linear_sum_assignment

from gacd.attacks.sinkhorn import (
    cosine_cost,
    entropic_transport_cost,
    sinkhorn_distance,
    sinkhorn_plan,
)
from gacd.config.settings import OTConfig
from gacd.utils.exceptions import NonFiniteError, ShapeMismatchError


def features(n: int, d: int, seed: int) -> torch.Tensor:
    return torch.randn(n, d, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)


class TestCosineCost:
    """Test the ground cost."""

    def test_range_and_diagonal(self):
        """Test range and diagonal."""
        a = features(5, 8, 0)
        cost = cosine_cost(a, a)
        assert torch.allclose(cost.diagonal(), torch.zeros(5, dtype=torch.float64), atol=1e-12)
        assert ((cost >= -1e-12) & (cost <= 2 + 1e-12)).all()

    def test_dimension_mismatch(self):
        """Test dimension mismatch."""
        with pytest.raises(ShapeMismatchError):
            cosine_cost(features(3, 4, 0), features(3, 5, 1))


class TestSinkhornPlan:
    """Test the transport plan."""

    def test_marginals_are_uniform(self):
        """Test marginals are uniform."""
        cost = cosine_cost(features(6, 4, 0), features(6, 4, 1))
        plan = sinkhorn_plan(cost, reg=0.05, iterations=200)
        uniform = torch.full((6,), 1 / 6, dtype=torch.float64)
        assert torch.allclose(plan.sum(dim=1), uniform, atol=1e-10)
        assert torch.allclose(plan.sum(dim=0), uniform, atol=1e-6)

    def test_small_regularization_stays_finite(self):
        """Test small regularization stays finite."""
        cost = cosine_cost(features(8, 4, 0), features(8, 4, 1))
        plan = sinkhorn_plan(cost, reg=1e-4, iterations=50)
        assert torch.isfinite(plan).all()


class TestSinkhornDistance:
    """Test the entropic OT distance."""

    def test_identical_batches(self):
        """Test identical batches."""
        a = features(8, 64, 0)
        assert sinkhorn_distance(a, a, OTConfig()).item() < 1e-6

    def test_symmetric(self):
        """Test symmetric."""
        a, b = features(7, 16, 1), features(7, 16, 2)
        cfg = OTConfig(iterations=5)
        assert sinkhorn_distance(a, b, cfg).item() == pytest.approx(
            sinkhorn_distance(b, a, cfg).item(), abs=1e-10
        )

    def test_single_sample_is_cosine_cost(self):
        """Test single sample is cosine cost."""
        a, b = features(1, 6, 3), features(1, 6, 4)
        expected = 1 - F.cosine_similarity(a, b).item()
        assert sinkhorn_distance(a, b, OTConfig()).item() == pytest.approx(expected, abs=1e-10)

    def test_matches_assignment_when_separated(self):
        """With well-separated costs the entropic plan is the optimal permutation."""
        e1 = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
        e2 = torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64)
        a = torch.stack([e1, e2])
        b = torch.stack([e2 + 0.1 * e1, e1 + 0.1 * e2])

        cost = cosine_cost(a, b)
        rows, cols = linear_sum_assignment(cost.numpy())
        optimum = cost.numpy()[rows, cols].sum() / 2

        value = sinkhorn_distance(a, b, OTConfig(reg=1e-3, iterations=200)).item()
        assert value == pytest.approx(optimum, abs=1e-6)

    def test_nonnegative(self):
        """Test nonnegative."""
        for seed in range(5):
            a, b = features(4, 8, seed), features(4, 8, seed + 10)
            assert sinkhorn_distance(a, b, OTConfig()).item() >= 0

    def test_plan_is_constant_for_gradients(self):
        """Test plan is constant for gradients."""
        a = features(4, 8, 0)
        b = features(4, 8, 1).requires_grad_(True)
        cfg = OTConfig(reg=0.1, iterations=30)
        sinkhorn_distance(a, b, cfg).backward()

        cost = cosine_cost(a, b.detach())
        forward = sinkhorn_plan(cost, cfg.reg, cfg.iterations)
        backward = sinkhorn_plan(cost.T, cfg.reg, cfg.iterations)
        b_ref = b.detach().clone().requires_grad_(True)
        ref_cost = cosine_cost(a, b_ref)
        (0.5 * ((forward * ref_cost).sum() + (backward * ref_cost.T).sum())).backward()
        assert torch.allclose(b.grad, b_ref.grad, atol=1e-12)

    def test_shape_mismatch(self):
        """Test shape mismatch."""
        with pytest.raises(ShapeMismatchError):
            sinkhorn_distance(features(3, 4, 0), features(4, 4, 1), OTConfig())

    def test_nonfinite_features(self):
        """Test nonfinite features."""
        a = features(3, 4, 0)
        b = a.clone()
        b[0, 0] = float("nan")
        with pytest.raises(NonFiniteError):
            sinkhorn_distance(a, b, OTConfig())

    def test_nonfinite_cost(self):
        """Test nonfinite cost."""
        cost = torch.tensor([[0.0, float("inf")], [1.0, 0.0]])
        with pytest.raises(NonFiniteError):
            entropic_transport_cost(cost, OTConfig())
