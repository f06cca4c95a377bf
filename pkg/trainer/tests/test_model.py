import numpy as np
import pytest
import torch

from navpolicy.model import ENCODING_DIM, FEATURE_DIM, NavigationPolicy, parameter_count


@pytest.fixture(scope="module")
def policy():
    torch.manual_seed(0)
    return NavigationPolicy()


class TestShapes:
    def test_output_shape_batch_one(self, policy):
        out = policy(torch.rand(1, 3, 3, 144, 256), torch.zeros(1, 2), torch.zeros(1, 2))
        assert out.shape == (1, 2)

    def test_encoder_dim(self, policy):
        enc = policy.encoder(torch.rand(2, 3, 144, 256))
        assert enc.shape == (2, ENCODING_DIM)
        assert ENCODING_DIM == 20

    def test_concat_is_64(self, policy):
        feats = policy.features(torch.rand(2, 3, 3, 144, 256), torch.zeros(2, 2), torch.zeros(2, 2))
        assert feats.shape == (2, 64)
        assert FEATURE_DIM == 64

    def test_parameter_count_near_2m(self, policy):
        n = parameter_count(policy)
        assert 1_000_000 <= n <= 3_000_000

    def test_feature_ordering(self, policy):
        # prev action occupies dims 60:62, rel goal 62:64, in (v, w), (dx, dy) order
        frames = torch.rand(1, 3, 3, 144, 256)
        base = policy.features(frames, torch.zeros(1, 2), torch.zeros(1, 2))
        with_pa = policy.features(frames, torch.tensor([[1.0, 0.0]]), torch.zeros(1, 2))
        with_rg = policy.features(frames, torch.zeros(1, 2), torch.tensor([[10.0, 0.0]]))
        d_pa = (with_pa - base).abs().squeeze(0)
        d_rg = (with_rg - base).abs().squeeze(0)
        assert d_pa[60] > 0 and d_pa[61] == 0 and d_pa[62:].sum() == 0
        assert d_rg[62] > 0 and d_rg[63] == 0 and d_rg[:62].sum() == 0

    def test_act_clamped(self, policy):
        frames = torch.rand(1, 3, 3, 144, 256) * 100  # absurd input
        action = policy.act(frames, torch.zeros(1, 2), torch.full((1, 2), 99.0))
        assert abs(float(action[0, 0])) <= policy.v_max + 1e-9
        assert abs(float(action[0, 1])) <= policy.w_max + 1e-9


class TestGradientCheck:
    def test_analytic_matches_finite_difference(self):
        torch.manual_seed(1)
        policy = NavigationPolicy().double()
        frames = torch.rand(4, 3, 3, 36, 64, dtype=torch.float64)
        pa = torch.rand(4, 2, dtype=torch.float64)
        rg = torch.rand(4, 2, dtype=torch.float64) * 4
        target = torch.rand(4, 2, dtype=torch.float64) - 0.5

        def loss_fn():
            pred = policy(frames, pa, rg)
            return torch.mean((pred - target) ** 2)

        loss = loss_fn()
        loss.backward()
        params = [p for p in policy.parameters() if p.grad is not None]
        rng = np.random.default_rng(2)
        eps = 1e-6
        checked = 0
        for _ in range(10):
            p = params[rng.integers(len(params))]
            flat = p.detach().reshape(-1)
            idx = int(rng.integers(len(flat)))
            analytic = float(p.grad.reshape(-1)[idx])
            with torch.no_grad():
                flat[idx] += eps
                up = float(loss_fn())
                flat[idx] -= 2 * eps
                down = float(loss_fn())
                flat[idx] += eps
            numeric = (up - down) / (2 * eps)
            denom = max(abs(analytic), abs(numeric), 1e-8)
            assert abs(analytic - numeric) / denom <= 1e-3, (analytic, numeric)
            checked += 1
        assert checked == 10
