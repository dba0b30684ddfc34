"""Tests for the token-conditioned diffusion decoder"""

import pytest
import torch

from tokgen_module.core.errors import ConfigError, DivergenceError, DomainError
from tokgen_module.datapipe import ASPECT_RATIOS
from tokgen_module.diffusion import (
    CondMaskSpec,
    DiffusionConfig,
    DiffusionDecoder,
    DiffusionTrainer,
    NoiseSchedule,
    mask_condition,
)
from tokgen_module.telemetry import InMemoryMonitor


@pytest.fixture
def decoder(tiny_tokenizer):
    torch.manual_seed(0)
    return DiffusionDecoder(DiffusionConfig.tiny(), tiny_tokenizer)


def grids(tokenizer, height, width, seed=0):
    images = torch.rand(1, 3, height, width, generator=torch.Generator().manual_seed(seed))
    out = tokenizer.encode(images)
    return out.sem_indices, out.pix_indices


class TestDiffusionConfig:
    """Test validation of the decoder config and mask spec."""

    def test_betas_must_be_ordered(self):
        with pytest.raises(ConfigError):
            DiffusionConfig(beta_start=0.02, beta_end=0.01)
        with pytest.raises(ConfigError):
            DiffusionConfig(beta_end=1.0)

    def test_upscale_is_fixed(self):
        with pytest.raises(ConfigError):
            DiffusionConfig(upscale=3)

    def test_mask_probabilities(self):
        with pytest.raises(ConfigError):
            CondMaskSpec(sem_mask_prob=1.5)
        spec = CondMaskSpec.reference()
        assert (spec.sample_perturb_prob, spec.token_replace_prob) == (0.5, 0.1)
        assert (spec.sem_mask_prob, spec.pix_mask_prob) == (0.1, 0.5)


class TestNoiseSchedule:
    """Test the linear-beta schedule."""

    def test_monotone(self):
        schedule = NoiseSchedule(50, 1e-4, 0.02)
        assert bool((schedule.betas[1:] >= schedule.betas[:-1]).all())
        assert bool((schedule.alphas_cumprod[1:] < schedule.alphas_cumprod[:-1]).all())

    def test_q_sample_round_trip(self):
        schedule = NoiseSchedule(10, 1e-4, 0.02)
        x0 = torch.rand(2, 3, 4, 4)
        noise = torch.randn(2, 3, 4, 4)
        t = torch.tensor([0, 9])
        x_t = schedule.q_sample(x0, t, noise)
        assert torch.allclose(schedule.predict_x0(x_t, t, noise), x0, atol=1e-4)


class TestConditioning:
    """Test condition embedding and masking."""

    def test_condition_map_shape(self, decoder, tiny_tokenizer):
        sem, pix = grids(tiny_tokenizer, 32, 32)
        assert sem.shape == (1, 4, 4) and pix.shape == (1, 8, 8)
        assert decoder.cond_embed(sem, pix).shape == (1, 16, 8, 8)

    def test_all_masked_is_null_embedding(self, decoder, tiny_tokenizer):
        sem, pix = grids(tiny_tokenizer, 16, 16)
        on = torch.ones(1, dtype=torch.bool)
        cond = decoder.cond_embed(sem, pix, on, on)
        d = decoder.condition.dim
        assert torch.equal(cond[0, :d, 0, 0], decoder.condition.null_sem.detach())
        assert torch.equal(cond[0, d:, 2, 3], decoder.condition.null_pix.detach())

    def test_inconsistent_grids(self, decoder):
        with pytest.raises(DomainError):
            decoder.cond_embed(torch.zeros(1, 2, 2, dtype=torch.long), torch.zeros(1, 3, 4, dtype=torch.long))

    def test_disabled_spec_is_identity(self):
        sem = torch.randint(0, 8, (4, 2, 2))
        pix = torch.randint(0, 8, (4, 4, 4))
        out = mask_condition(sem, pix, CondMaskSpec.disabled(), torch.Generator().manual_seed(0), 8, 8)
        assert torch.equal(out.sem_indices, sem) and torch.equal(out.pix_indices, pix)
        assert not out.null_sem.any() and not out.null_pix.any()

    def test_full_semantic_masking(self):
        spec = CondMaskSpec(0.0, 0.0, 1.0, 0.0)
        out = mask_condition(
            torch.zeros(6, 1, 1, dtype=torch.long), torch.zeros(6, 2, 2, dtype=torch.long),
            spec, torch.Generator().manual_seed(0), 4, 4,
        )
        assert out.null_sem.all()
        assert not out.null_pix.any()

    def test_perturbed_fraction_is_binomial(self):
        n = 10_000
        out = mask_condition(
            torch.zeros(n, 1, 1, dtype=torch.long), torch.zeros(n, 2, 2, dtype=torch.long),
            CondMaskSpec.reference(), torch.Generator().manual_seed(0), 4, 4,
        )
        fraction = out.perturbed.float().mean().item()
        assert 0.485 <= fraction <= 0.515


class TestSampling:
    """Test the 2x shape law and determinism."""

    @pytest.mark.parametrize("size", [(16, 16), (16, 32), (32, 16)])
    def test_output_is_twice_the_source(self, decoder, tiny_tokenizer, size):
        sem, pix = grids(tiny_tokenizer, *size)
        out = decoder.sample(sem, pix, seed=0)
        assert out.shape == (1, 3, 2 * size[0], 2 * size[1])
        assert float(out.min()) >= 0.0 and float(out.max()) <= 1.0

    @pytest.mark.parametrize("ratio", ASPECT_RATIOS, ids=str)
    def test_every_aspect_ratio(self, decoder, ratio):
        sem_h, sem_w = ratio.denominator, ratio.numerator
        sem = torch.zeros(sem_h, sem_w, dtype=torch.long)
        pix = torch.zeros(2 * sem_h, 2 * sem_w, dtype=torch.long)
        out = decoder.sample(sem, pix, seed=0)
        assert out.shape == (3, 16 * sem_h, 16 * sem_w)
        assert torch.equal(out, decoder.sample(sem, pix, seed=0))

    def test_unbatched_grids(self, decoder, tiny_tokenizer):
        sem, pix = grids(tiny_tokenizer, 16, 16)
        assert decoder.sample(sem[0], pix[0], seed=0).shape == (3, 32, 32)

    def test_fixed_seed_is_deterministic(self, decoder, tiny_tokenizer):
        sem, pix = grids(tiny_tokenizer, 16, 16)
        assert torch.equal(decoder.sample(sem, pix, seed=5), decoder.sample(sem, pix, seed=5))

    def test_null_conditioning_ignores_tokens(self, decoder, tiny_tokenizer):
        a = grids(tiny_tokenizer, 16, 16, seed=0)
        b = (torch.zeros_like(a[0]), torch.ones_like(a[1]))
        out_a = decoder.sample(*a, seed=1, null_sem=True, null_pix=True)
        out_b = decoder.sample(*b, seed=1, null_sem=True, null_pix=True)
        assert torch.equal(out_a, out_b)


class TestDiffusionTrainer:
    """Test training against a frozen tokenizer."""

    def _trainer(self, tokenizer):
        torch.manual_seed(0)
        return DiffusionTrainer(DiffusionDecoder(DiffusionConfig.tiny(), tokenizer), tokenizer)

    def test_tokenizer_is_untouched(self, tiny_tokenizer):
        before = {k: v.clone() for k, v in tiny_tokenizer.state_dict().items()}
        trainer = self._trainer(tiny_tokenizer)
        targets = torch.rand(2, 3, 32, 32, generator=torch.Generator().manual_seed(0))
        trainer.train_step(targets)
        after = tiny_tokenizer.state_dict()
        assert all(torch.equal(before[k], after[k]) for k in before)

    def test_codebook_snapshot_is_not_trained(self, tiny_tokenizer):
        trainer = self._trainer(tiny_tokenizer)
        names = {name for name, _ in trainer.decoder.named_parameters()}
        assert "condition.sem_codes" not in names and "condition.pix_codes" not in names

    def test_deterministic_loss(self, tiny_tokenizer):
        targets = torch.rand(2, 3, 32, 32, generator=torch.Generator().manual_seed(0))
        a = self._trainer(tiny_tokenizer).train_step(targets)
        b = self._trainer(tiny_tokenizer).train_step(targets)
        assert a == b

    def test_target_dims_must_be_doubled(self, decoder, tiny_tokenizer):
        sem, pix = grids(tiny_tokenizer, 16, 16)
        with pytest.raises(DomainError):
            decoder.loss(torch.rand(1, 3, 16, 16), sem, pix, torch.Generator().manual_seed(0))

    def test_divergence_is_counted_on_the_tokenizer_monitor(self, tiny_tokenizer, monkeypatch):
        tiny_tokenizer.monitor = InMemoryMonitor()
        trainer = self._trainer(tiny_tokenizer)
        before = {name: p.detach().clone() for name, p in trainer.decoder.named_parameters()}
        monkeypatch.setattr(
            trainer.decoder, "loss", lambda *args: torch.tensor(float("nan"), requires_grad=True)
        )
        targets = torch.rand(2, 3, 32, 32, generator=torch.Generator().manual_seed(0))
        with pytest.raises(DivergenceError):
            trainer.train_step(targets)
        assert tiny_tokenizer.monitor.get_counter("divergences", {"component": "diffusion"}) == 1
        assert all(torch.equal(p, before[name]) for name, p in trainer.decoder.named_parameters())
