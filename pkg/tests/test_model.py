import numpy as np
import pytest
import torch

from conftest import random_distribution
from motor_anticipate.container import ContainerError
from motor_anticipate.model import (GumbelConfig, InteractionModel,
                                    ModelConfig, gumbel_sample, load_checkpoint,
                                    pool_attention, save_checkpoint)


def _frames(cfg, seed=0):
    rng = np.random.default_rng(seed)
    shape = (2, cfg.num_frames, *cfg.frame_size, cfg.in_channels)
    return torch.from_numpy(rng.random(shape, dtype=np.float32))


class TestConfig:
    def test_default_grids(self):
        cfg = ModelConfig()
        assert cfg.motor_grid == (4, 16, 16)
        assert cfg.hotspot_grid == (8, 8)
        assert cfg.block_grids()[4] == (4, 4, 4)

    def test_bad_grid_rejected(self):
        cfg = ModelConfig(strides=((2, 2, 2), (2, 2, 2), (1, 3, 3),
                                   (1, 2, 2), (1, 1, 1)))
        with pytest.raises(ValueError):
            cfg.validate()

    def test_wrong_block_count(self):
        with pytest.raises(ValueError, match="5 blocks"):
            ModelConfig(channels=(4, 4)).validate()


class TestDistributionInvariants:
    @torch.no_grad()
    def test_all_outputs_normalized(self, small_model, small_model_config):
        out = small_model(_frames(small_model_config), sample=True)
        tol = 1e-5
        assert float((out["psi"].sum(dim=(1, 2, 3)) - 1).abs().max()) < tol
        for key in ("motor", "motor_sample"):
            s = out[key].sum(dim=(-2, -1))
            assert float((s - 1).abs().max()) < tol
            assert float(out[key].min()) >= 0
        for key in ("hotspot", "hotspot_sample"):
            s = out[key].sum(dim=(-2, -1))
            assert float((s - 1).abs().max()) < tol
        assert float((out["action"].sum(dim=-1) - 1).abs().max()) < tol
        assert float(out["action"].min()) >= 0

    @torch.no_grad()
    def test_motor_m_is_per_slice_renormalized_psi(self, small_model,
                                                   small_model_config):
        out = small_model(_frames(small_model_config), sample=False)
        psi, m = out["psi"], out["motor"]
        renorm = psi / psi.sum(dim=(-2, -1), keepdim=True)
        assert float((m - renorm).abs().max()) < 1e-5

    @torch.no_grad()
    def test_deterministic_path_feeds_expectation(self, small_model,
                                                  small_model_config):
        out = small_model(_frames(small_model_config), sample=False)
        assert float((out["motor_sample"] - out["motor"]).abs().max()) < 1e-6

    def test_shape_validation(self, small_model):
        with pytest.raises(ValueError, match="does not match config"):
            small_model(torch.zeros(1, 4, 32, 32, 3))


class TestGumbel:
    def test_noise_off_unit_temperature_identity(self):
        # float64: the noise-free theta=1 sample reproduces the input exactly
        rng = np.random.default_rng(0)
        psi = torch.from_numpy(random_distribution(rng, (3, 5, 5)))
        out = gumbel_sample(psi, GumbelConfig(temperature=1.0, noise_enabled=False))
        assert float((out - psi).abs().max()) < 1e-12

    def test_zero_temperature_limit_one_hot(self):
        rng = np.random.default_rng(1)
        psi = torch.from_numpy(random_distribution(rng, (2, 4, 4)))
        noise = torch.from_numpy(rng.gumbel(size=(2, 4, 4)))
        out = gumbel_sample(psi, GumbelConfig(temperature=1e-5), noise=noise)
        for t in range(2):
            flat = out[t].flatten()
            assert float(flat.max()) == pytest.approx(1.0, abs=1e-9)
            assert int((flat > 0.5).sum()) == 1
            winner = int((torch.log(psi[t]) + noise[t]).flatten().argmax())
            assert int(flat.argmax()) == winner

    def test_sample_statistics_match_distribution(self):
        # near-zero temperature: argmax frequencies estimate psi; 3 standard
        # errors of the binomial proportion
        rng = np.random.default_rng(2)
        psi_np = random_distribution(rng, (6,)).reshape(2, 3)[None].repeat(1, 0)
        psi_np = random_distribution(rng, (2, 3))[None]
        psi = torch.from_numpy(psi_np)
        gen = torch.Generator().manual_seed(0)
        n = 20000
        counts = np.zeros(6)
        cfg = GumbelConfig(temperature=1e-4, noise_enabled=True)
        for _ in range(n):
            s = gumbel_sample(psi, cfg, generator=gen)
            counts[int(s.flatten().argmax())] += 1
        freq = counts / n
        p = psi_np.flatten()
        se = np.sqrt(p * (1 - p) / n)
        assert np.all(np.abs(freq - p) <= 3 * se + 1e-12)

    def test_temperature_validation(self):
        with pytest.raises(ValueError, match="temperature"):
            gumbel_sample(torch.ones(2, 2) / 4, GumbelConfig(temperature=0.0))

    def test_differentiable(self):
        psi = torch.softmax(torch.randn(3, 3, dtype=torch.float64,
                                        requires_grad=True).flatten(), -1
                            ).reshape(3, 3)
        out = gumbel_sample(psi, GumbelConfig(temperature=2.0, rng_seed=0))
        out.sum().backward
        assert out.requires_grad

    def test_single_sample_gradient_aligns_with_mean(self):
        # pathwise estimator: one sampled gradient points roughly along the
        # average over many samples (cosine > 0.9 at temperature 2)
        torch.manual_seed(0)
        z = torch.randn(3, 3, dtype=torch.float64, requires_grad=True)
        w = torch.randn(3, 3, dtype=torch.float64)
        cfg = GumbelConfig(temperature=2.0, noise_enabled=True)
        gen = torch.Generator().manual_seed(5)

        def grad_of(noise):
            psi = torch.softmax(z.flatten(), -1).reshape(3, 3)
            s = gumbel_sample(psi, cfg, noise=noise)
            g, = torch.autograd.grad((w * s).sum(), z)
            return g

        n = 10000
        u = torch.rand(n, 3, 3, generator=gen, dtype=torch.float64)
        noise = -torch.log(-torch.log(u))
        mean_grad = grad_of(noise) / n
        single = grad_of(noise[0])
        cos = torch.nn.functional.cosine_similarity(
            single.flatten(), mean_grad.flatten(), dim=0)
        assert float(cos) > 0.9

    def test_reproducible_given_generator(self):
        rng = np.random.default_rng(3)
        psi = torch.from_numpy(random_distribution(rng, (2, 4, 4)))
        cfg = GumbelConfig(temperature=2.0, noise_enabled=True)
        a = gumbel_sample(psi, cfg, torch.Generator().manual_seed(9))
        b = gumbel_sample(psi, cfg, torch.Generator().manual_seed(9))
        assert torch.equal(a, b)


class TestPoolAttention:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(4)
        att = torch.from_numpy(rng.random((2, 4, 8, 8)))
        out = pool_attention(att, (2, 4, 4))
        assert out.shape == (2, 2, 4, 4)
        for n in range(2):
            for t in range(2):
                for y in range(4):
                    for x in range(4):
                        window = att[n, 2 * t:2 * t + 2,
                                     2 * y:2 * y + 2, 2 * x:2 * x + 2]
                        assert float(out[n, t, y, x]) == float(window.max())

    def test_2d(self):
        att = torch.arange(16.0).reshape(4, 4)
        out = pool_attention(att, (2, 2))
        assert torch.equal(out, torch.tensor([[5.0, 7.0], [13.0, 15.0]]))

    def test_identity_grid(self):
        att = torch.rand(3, 6, 6)
        assert torch.equal(pool_attention(att, (3, 6, 6)), att)

    def test_non_divisible_rejected(self):
        with pytest.raises(ValueError, match="does not divide"):
            pool_attention(torch.rand(4, 6, 6), (4, 4, 4))


class TestHeads:
    def test_one_hot_attention_isolates_cell(self, small_model, small_model_config):
        # with a one-hot motor sample, the hotspot logits only see phi3 at
        # that cell: perturbing any other cell leaves the output unchanged
        model = small_model.eval()
        T, H, W = model.config.block_grids()[2]
        phi3 = torch.rand(1, small_model_config.channels[2], T, H, W)
        one_hot = torch.zeros(1, T, H, W)
        one_hot[0, :, 1, 1] = 1.0
        base = model.hotspot_head(phi3, one_hot)
        perturbed = phi3.clone()
        perturbed[0, :, 0, 0, 0] += 10.0
        assert torch.allclose(model.hotspot_head(perturbed, one_hot), base)
        moved = phi3.clone()
        moved[0, :, 0, 1, 1] += 10.0
        assert not torch.allclose(model.hotspot_head(moved, one_hot), base)

    def test_uniform_attention_zero_weights_uniform_hotspot(
            self, small_model, small_model_config):
        model = small_model.eval()
        for p in model.hotspot_conv.parameters():
            torch.nn.init.zeros_(p)
        T, H, W = model.config.block_grids()[2]
        phi3 = torch.rand(1, small_model_config.channels[2], T, H, W)
        uniform = torch.full((1, T, H, W), 1.0 / (H * W))
        out = model.hotspot_head(phi3, uniform)
        assert torch.allclose(out, torch.full_like(out, 1.0 / (H * W)))

    def test_anticipation_hand_computed(self, small_model):
        # tiny tensors against a direct numpy transcription of the head:
        # shared classifier over the two gated global averages
        model = small_model.eval()
        C = model.config.channels[4]
        T, H, W = model.config.block_grids()[4]
        rng = np.random.default_rng(5)
        phi5 = rng.random((1, C, T, H, W))
        m5 = random_distribution(rng, (T, H, W))[None]
        a5 = random_distribution(rng, (H, W))[None]
        out = model.anticipation_head(
            torch.from_numpy(phi5).float(), torch.from_numpy(m5).float(),
            torch.from_numpy(a5).float())

        Wp = model.classifier.weight.detach().numpy()
        gate_m = m5[0] / m5[0].mean(axis=(-2, -1), keepdims=True)
        gate_a = a5[0] / a5[0].mean()
        v_motor = (phi5[0] * gate_m[None]).mean(axis=(1, 2, 3))
        v_hot = (phi5[0, :, -1] * gate_a[None]).mean(axis=(1, 2))
        logits = Wp @ v_motor + Wp @ v_hot
        expect = np.exp(logits) / np.exp(logits).sum()
        np.testing.assert_allclose(out[0].detach().numpy(), expect, atol=1e-5)

    def test_grid_mismatch_errors(self, small_model):
        model = small_model
        with pytest.raises(ValueError, match="does not match"):
            model.hotspot_head(torch.rand(1, model.config.channels[2], 2, 8, 8),
                               torch.rand(1, 2, 4, 4))


class TestDeterminismAndPersistence:
    def test_seeded_init_reproducible(self, small_model_config):
        a = InteractionModel(small_model_config, seed=5)
        b = InteractionModel(small_model_config, seed=5)
        for (na, pa), (nb, pb) in zip(a.state_dict().items(),
                                      b.state_dict().items()):
            assert na == nb and torch.equal(pa, pb)

    def test_checkpoint_round_trip(self, tmp_path, small_model,
                                   small_model_config):
        path = tmp_path / "m.bin"
        save_checkpoint(small_model, path, epoch=4)
        loaded, epoch, opt = load_checkpoint(path, small_model_config)
        assert epoch == 4 and opt is None
        for (na, pa), (nb, pb) in zip(small_model.state_dict().items(),
                                      loaded.state_dict().items()):
            assert na == nb and torch.equal(pa, pb)

    def test_checkpoint_with_optimizer_state(self, tmp_path, small_model):
        buf = {"classifier.weight": torch.rand_like(small_model.classifier.weight)}
        path = tmp_path / "m.bin"
        save_checkpoint(small_model, path, epoch=1, optimizer_state=buf)
        _, _, opt = load_checkpoint(path)
        assert torch.equal(opt["classifier.weight"], buf["classifier.weight"])

    def test_num_actions_mismatch(self, tmp_path, small_model,
                                  small_model_config):
        path = tmp_path / "m.bin"
        save_checkpoint(small_model, path)
        import dataclasses
        other = dataclasses.replace(small_model_config, num_actions=7)
        with pytest.raises(ContainerError, match="num_actions"):
            load_checkpoint(path, other)

    def test_corrupted_checkpoint(self, tmp_path, small_model):
        path = tmp_path / "m.bin"
        save_checkpoint(small_model, path)
        path.write_bytes(path.read_bytes()[:64])
        with pytest.raises(ContainerError):
            load_checkpoint(path)

    def test_forward_deterministic_given_seed(self, small_model_config):
        frames = _frames(small_model_config, seed=8)
        outs = []
        for _ in range(2):
            model = InteractionModel(small_model_config, seed=2)
            outs.append(model(frames, sample=True)["action"])
        assert torch.equal(outs[0], outs[1])
