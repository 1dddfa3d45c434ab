import pytest
import torch

from sketchdiff.seeding import torch_generator
from sketchdiff.unet import (
    ConditionalUNet,
    UNetConfig,
    count_parameters,
    init_unet,
    sinusoidal_embedding,
    unet_predict,
)


def conv_pair_params(cin: int, cout: int, td: int) -> int:
    """Hand count for one two-conv block with timestep injection."""
    conv1 = cin * cout * 9 + cout
    time_proj = td * cout + cout
    conv2 = cout * cout * 9 + cout
    return conv1 + time_proj + conv2


def analytic_param_count(w: int, d: int, td: int) -> int:
    widths = [w * 2**i for i in range(d + 1)]
    total = 2 * (td * td + td)  # time MLP
    total += 11 * w * 9 + w  # stem
    for i in range(d):
        total += conv_pair_params(widths[i], widths[i + 1], td)
    total += conv_pair_params(widths[d], widths[d], td)  # middle
    for i in reversed(range(d)):
        total += conv_pair_params(2 * widths[i + 1], widths[i], td)  # skip concat
    total += w * 3 * 9 + 3  # head
    return total


class TestConfig:
    def test_channel_contract_enforced(self):
        with pytest.raises(ValueError, match="channel contract"):
            UNetConfig(in_channels=12)
        with pytest.raises(ValueError, match="channel contract"):
            UNetConfig(out_channels=1)

    def test_odd_time_dim_rejected(self):
        with pytest.raises(ValueError):
            UNetConfig(time_embed_dim=9)


class TestSinusoidalEmbedding:
    def test_shape_and_range(self):
        e = sinusoidal_embedding(torch.tensor([1, 50, 999]), 16)
        assert e.shape == (3, 16)
        assert torch.all(e.abs() <= 1.0)

    def test_distinct_timesteps_distinct_embeddings(self):
        e = sinusoidal_embedding(torch.arange(1, 101), 32)
        assert torch.unique(e, dim=0).shape[0] == 100


class TestForward:
    def _net(self, seed: int = 0) -> ConditionalUNet:
        return init_unet(UNetConfig(base_width=4, depth=1, time_embed_dim=8), seed)

    def test_shape_contract(self):
        net = init_unet(UNetConfig(base_width=4, depth=2, time_embed_dim=8), 0)
        out = unet_predict(torch.randn(3, 64, 64), 5, torch.randn(8, 64, 64), net)
        assert out.shape == (3, 64, 64)

    def test_batched_shape(self):
        net = self._net()
        out = unet_predict(
            torch.randn(2, 3, 8, 8), torch.tensor([1, 9]), torch.randn(2, 8, 8, 8), net
        )
        assert out.shape == (2, 3, 8, 8)

    def test_deterministic(self):
        net = self._net(1)
        z = torch.randn(3, 8, 8, generator=torch_generator(0))
        c = torch.randn(8, 8, 8, generator=torch_generator(1))
        assert torch.equal(unet_predict(z, 4, c, net), unet_predict(z.clone(), 4, c.clone(), net))

    def test_finite_for_random_input(self):
        net = self._net(2)
        out = unet_predict(
            torch.randn(3, 8, 8, generator=torch_generator(2)),
            7,
            torch.randn(8, 8, 8, generator=torch_generator(3)),
            net,
        )
        assert torch.isfinite(out).all()

    def test_timestep_changes_output(self):
        net = self._net(3)
        z = torch.randn(3, 8, 8, generator=torch_generator(4))
        c = torch.randn(8, 8, 8, generator=torch_generator(5))
        assert not torch.equal(unet_predict(z, 1, c, net), unet_predict(z, 99, c, net))

    @pytest.mark.parametrize(
        "z_shape,c_shape",
        [
            ((4, 8, 8), (8, 8, 8)),  # wrong latent channels
            ((3, 8, 8), (7, 8, 8)),  # wrong cond channels
            ((3, 8, 8), (8, 16, 16)),  # spatial mismatch
            ((3, 7, 7), (8, 7, 7)),  # not divisible by 2^depth
        ],
    )
    def test_bad_shapes_rejected(self, z_shape, c_shape):
        net = self._net()
        with pytest.raises(ValueError):
            unet_predict(torch.zeros(*z_shape), 1, torch.zeros(*c_shape), net)

    def test_t_below_one_rejected(self):
        net = self._net()
        with pytest.raises(ValueError):
            unet_predict(torch.zeros(3, 8, 8), 0, torch.zeros(8, 8, 8), net)

    def test_spatial_sizes_sweep(self):
        net = self._net()
        for size in (8, 16, 32):
            out = unet_predict(torch.zeros(3, size, size), 1, torch.zeros(8, size, size), net)
            assert out.shape == (3, size, size)


class TestInit:
    def test_same_seed_identical_parameters(self):
        cfg = UNetConfig(base_width=4, depth=1, time_embed_dim=8)
        a, b = init_unet(cfg, 5), init_unet(cfg, 5)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)

    def test_different_seed_differs(self):
        cfg = UNetConfig(base_width=4, depth=1, time_embed_dim=8)
        a, b = init_unet(cfg, 5), init_unet(cfg, 6)
        assert any(not torch.equal(pa, pb) for pa, pb in zip(a.parameters(), b.parameters()))

    @pytest.mark.parametrize("w,d,td", [(4, 1, 8), (8, 2, 16), (32, 2, 64), (3, 3, 10)])
    def test_parameter_count_matches_hand_formula(self, w, d, td):
        net = init_unet(UNetConfig(base_width=w, depth=d, time_embed_dim=td), 0)
        assert count_parameters(net) == analytic_param_count(w, d, td)


class TestGradients:
    def test_noise_loss_gradient_matches_finite_differences(self):
        net = init_unet(UNetConfig(base_width=4, depth=1, time_embed_dim=8), 1).double()
        gen = torch_generator(0)
        z = torch.randn(2, 3, 4, 4, dtype=torch.float64, generator=gen)
        cond = torch.randn(2, 8, 4, 4, dtype=torch.float64, generator=gen)
        eps_true = torch.randn(2, 3, 4, 4, dtype=torch.float64, generator=gen)
        t = torch.tensor([3, 7])

        def loss_fn():
            return torch.mean((net(z, t, cond) - eps_true) ** 2)

        loss_fn().backward()
        params = list(net.parameters())
        for seed in range(3):
            vgen = torch_generator(seed)
            vs = [torch.randn(p.shape, dtype=torch.float64, generator=vgen) for p in params]
            analytic = sum((p.grad * v).sum().item() for p, v in zip(params, vs))
            h = 1e-5
            with torch.no_grad():
                for p, v in zip(params, vs):
                    p += h * v
                up = loss_fn().item()
                for p, v in zip(params, vs):
                    p -= 2 * h * v
                dn = loss_fn().item()
                for p, v in zip(params, vs):
                    p += h * v
            fd = (up - dn) / (2 * h)
            assert analytic == pytest.approx(fd, rel=1e-4)
