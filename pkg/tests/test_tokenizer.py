"""Tests for the dual tokenizer: shapes, noise, losses and training"""

import math

import pytest
import torch

from tokgen_module.core.config_loader import replace
from tokgen_module.core.errors import ConfigError, DivergenceError, DomainError
from tokgen_module.telemetry import InMemoryMonitor, TrainingMetricsCollector
from tokgen_module.tokenizer import (
    BranchMode,
    DualViTok,
    NoiseKind,
    NoiseSpec,
    TokenizerConfig,
    TokenizerTrainer,
    inject_noise,
    noise_mask,
    semantic_loss,
)


class TestTokenizerConfig:
    """Test presets and validation."""

    def test_desk_grid_arithmetic(self):
        cfg = TokenizerConfig.desk()
        assert cfg.lcm_multiple == 8
        assert cfg.pixel_ratio == 2

    def test_reference_grid_arithmetic(self):
        cfg = TokenizerConfig.reference()
        assert cfg.lcm_multiple == 112
        assert 224 // cfg.sem_downsample == 8
        assert 224 // cfg.pix_downsample == 14

    def test_rejects_non_power_of_two_pixel_factor(self):
        with pytest.raises(ConfigError):
            TokenizerConfig(pix_downsample=6)

    def test_noise_bounds(self):
        with pytest.raises(ConfigError):
            NoiseSpec(NoiseKind.RANDOM, 1.5, 0.1)
        assert NoiseSpec.reference().label() == "random(a=0.1,b=0.1)"
        assert NoiseSpec.off().label() == "none"


class TestEncodeDecode:
    """Test grid shapes and determinism."""

    def test_grid_shapes(self, tiny_tokenizer):
        images = torch.rand(2, 3, 32, 32, generator=torch.Generator().manual_seed(0))
        out = tiny_tokenizer.encode(images)
        assert out.sem_indices.shape == (2, 4, 4)
        assert out.pix_indices.shape == (2, 8, 8)
        assert out.sem_features.shape == (2, 4, 4, 8)

    def test_single_image(self, tiny_tokenizer, tiny_images):
        out = tiny_tokenizer.encode(tiny_images[0])
        assert out.sem_grid == (2, 2)
        assert out.pix_grid == (4, 4)

    def test_non_divisible_dims(self, tiny_tokenizer):
        with pytest.raises(DomainError, match="dims must be divisible by 8"):
            tiny_tokenizer.encode(torch.rand(1, 3, 30, 30))

    def test_decode_shape_and_range(self, tiny_tokenizer, tiny_images):
        out = tiny_tokenizer.encode(tiny_images)
        images = tiny_tokenizer.decode(out.sem_indices, out.pix_indices)
        assert images.shape == tiny_images.shape
        assert float(images.min()) >= 0.0 and float(images.max()) <= 1.0

    def test_decode_zero_indices_is_deterministic(self, tiny_tokenizer):
        sem = torch.zeros(2, 2, dtype=torch.long)
        pix = torch.zeros(4, 4, dtype=torch.long)
        assert torch.equal(tiny_tokenizer.decode(sem, pix), tiny_tokenizer.decode(sem, pix))

    def test_decode_inconsistent_grids(self, tiny_tokenizer):
        with pytest.raises(DomainError):
            tiny_tokenizer.decode(torch.zeros(2, 2, dtype=torch.long), torch.zeros(3, 4, dtype=torch.long))

    def test_decode_out_of_range(self, tiny_tokenizer):
        sem = torch.full((2, 2), 64, dtype=torch.long)
        with pytest.raises(DomainError):
            tiny_tokenizer.decode(sem, torch.zeros(4, 4, dtype=torch.long))

    @pytest.mark.parametrize("branch", list(BranchMode))
    def test_branch_modes_reconstruct(self, branch, tiny_images):
        torch.manual_seed(0)
        model = DualViTok(replace(TokenizerConfig.tiny(), branch=branch))
        assert model.reconstruct(tiny_images).shape == tiny_images.shape

    def test_space_to_channel_toggle(self, tiny_images):
        for dc_block in (True, False):
            torch.manual_seed(0)
            model = DualViTok(replace(TokenizerConfig.tiny(), dc_block=dc_block))
            assert model.reconstruct(tiny_images).shape == tiny_images.shape


class TestSemanticLoss:
    """Test the cosine distillation loss."""

    def test_identical(self):
        x = torch.randn(3, 4)
        assert semantic_loss(x, x.clone()).item() == pytest.approx(0.0, abs=1e-6)

    def test_antiparallel(self):
        x = torch.tensor([[1.0, 0.0]])
        assert semantic_loss(x, -x).item() == pytest.approx(2.0)

    def test_orthogonal(self):
        assert semantic_loss(torch.tensor([[1.0, 0.0]]), torch.tensor([[0.0, 1.0]])).item() == pytest.approx(1.0)

    def test_zero_norm_counts(self):
        monitor = InMemoryMonitor()
        loss = semantic_loss(torch.zeros(2, 3), torch.ones(2, 3), monitor)
        assert loss.item() == pytest.approx(1.0)
        assert monitor.get_counter("semantic_zero_norm") == 2


class TestNoise:
    """Test token-grid noise injection."""

    def test_alpha_zero_is_identity(self):
        grid = torch.randint(0, 16, (8, 8), generator=torch.Generator().manual_seed(0))
        out = inject_noise(grid, NoiseSpec(NoiseKind.RANDOM, 0.0, 1.0), torch.Generator().manual_seed(1), 16)
        assert torch.equal(out, grid)

    def test_zero_kind_replaces_everything(self):
        grid = torch.randint(1, 16, (4, 4), generator=torch.Generator().manual_seed(0))
        out = inject_noise(grid, NoiseSpec(NoiseKind.ZERO, 1.0, 1.0), torch.Generator().manual_seed(1), 16)
        assert torch.all(out == 0)

    def test_replacement_rate_is_binomial(self):
        spec = NoiseSpec(NoiseKind.RANDOM, 1.0, 0.1)
        mask = noise_mask(torch.Size([100, 100]), spec, torch.Generator().manual_seed(0))
        assert 700 <= mask.replaced <= 1300

    def test_reference_rates_within_three_sigma(self):
        spec = NoiseSpec.reference()
        n, cells = 10_000, 16
        mask = noise_mask(torch.Size([n, 4, 4]), spec, torch.Generator().manual_seed(0))

        p_token = spec.alpha * spec.beta
        sigma = math.sqrt(n * cells * p_token * (1 - p_token))
        assert abs(mask.replaced - n * cells * p_token) <= 3 * sigma

        sample_sigma = math.sqrt(spec.alpha * (1 - spec.alpha) / n)
        assert abs(mask.samples.float().mean().item() - spec.alpha) <= 3 * sample_sigma

    def test_rejects_out_of_range_ids(self):
        with pytest.raises(DomainError):
            inject_noise(torch.tensor([[16]]), NoiseSpec.reference(), torch.Generator(), 16)

    def test_per_sample_selection(self):
        spec = NoiseSpec(NoiseKind.ZERO, 0.5, 1.0)
        grid = torch.ones(64, 2, 2, dtype=torch.long)
        out = inject_noise(grid, spec, torch.Generator().manual_seed(0), 4)
        per_sample = (out == 0).flatten(1).all(1) | (out == 1).flatten(1).all(1)
        assert bool(per_sample.all())


class TestTokenizerTrainer:
    """Test the tokenizer training step."""

    def _trainer(self, total_steps=4):
        torch.manual_seed(0)
        return TokenizerTrainer(DualViTok(TokenizerConfig.tiny()), total_steps)

    def test_step_reports_finite_losses(self, tiny_images):
        collector = TrainingMetricsCollector()
        trainer = self._trainer()
        trainer.collector = collector
        report = trainer.train_step(tiny_images)
        for value in report.to_dict().values():
            assert value == value and abs(value) != float("inf")
        assert collector.snapshot().steps == 1

    def test_identical_seeds_identical_reports(self, tiny_images):
        a = self._trainer().train_step(tiny_images)
        b = self._trainer().train_step(tiny_images)
        assert a == b

    def test_backbone_stays_frozen(self, tiny_images):
        trainer = self._trainer()
        before = {k: v.clone() for k, v in trainer.model.semantic_backbone.state_dict().items()}
        trainer.train_step(tiny_images)
        after = trainer.model.semantic_backbone.state_dict()
        assert all(torch.equal(before[k], after[k]) for k in before)

    def test_codebooks_move(self, tiny_images):
        trainer = self._trainer()
        before = trainer.model.codebook_sem.effective().detach().clone()
        trainer.train_step(tiny_images)
        assert not torch.equal(before, trainer.model.codebook_sem.effective().detach())

    def test_gan_phase_starts_late(self, tiny_images):
        trainer = self._trainer(total_steps=3)
        assert not trainer.gan_active
        reports = [trainer.train_step(tiny_images) for _ in range(3)]
        assert reports[0].gan_d == 0.0
        assert reports[-1].gan_d > 0.0

    def test_continuous_gradients_reach_encoder(self, tiny_images):
        trainer = self._trainer()
        objective, _, _ = trainer.compute_losses(tiny_images, quantize=False, noise=False)
        objective.backward()
        grads = [p.grad for p in trainer.model.pixel_encoder.parameters()]
        assert any(g is not None and g.abs().sum() > 0 for g in grads)

    def test_total_loss_gradient_matches_finite_difference(self, tiny_images):
        previous = torch.get_default_dtype()
        torch.set_default_dtype(torch.float64)
        try:
            trainer = self._trainer(total_steps=100)
            trainer.model.double()
            images = tiny_images.double()

            def total():
                objective, _, _ = trainer.compute_losses(images, quantize=False, noise=False)
                return objective

            total().backward()
            weight = max(
                (p for p in trainer.model.pixel_encoder.parameters() if p.grad is not None),
                key=lambda p: float(p.grad.abs().max()),
            )
            index = int(weight.grad.abs().argmax())
            analytic = float(weight.grad.reshape(-1)[index])
            flat = weight.data.view(-1)
            eps = 1e-6
            with torch.no_grad():
                original = float(flat[index])
                flat[index] = original + eps
                upper = float(total())
                flat[index] = original - eps
                lower = float(total())
                flat[index] = original
            assert (upper - lower) / (2 * eps) == pytest.approx(analytic, rel=1e-3)
        finally:
            torch.set_default_dtype(previous)

    def test_discriminator_divergence_applies_no_update(self, tiny_images, monkeypatch):
        trainer = self._trainer(total_steps=1)
        trainer.model.monitor = InMemoryMonitor()
        assert trainer.gan_active
        monkeypatch.setattr(
            "tokgen_module.tokenizer.trainer.hinge_d_loss",
            lambda real, fake: real.new_tensor(float("nan")),
        )
        before = {name: p.detach().clone() for name, p in trainer.model.named_parameters()}
        with pytest.raises(DivergenceError) as info:
            trainer.train_step(tiny_images)
        assert info.value.component == "discriminator"
        for name, p in trainer.model.named_parameters():
            assert torch.equal(p, before[name]), name
        assert trainer.model.monitor.get_counter("divergences", {"component": "discriminator"}) == 1
        assert trainer.step == 0
