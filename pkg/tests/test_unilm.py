"""Tests for the unified model: embedding, loss, CFG and constrained sampling"""

import math

import numpy as np
import pytest
import torch
from torch import nn

from tokgen_module.core.errors import ConfigError, DivergenceError, DomainError
from tokgen_module.harness.text import ByteTextCodec
from tokgen_module.seqcodec import ImageTokenBlock, TokenKind, parse
from tokgen_module.telemetry import InMemoryMonitor
from tokgen_module.unilm import (
    GenerationParams,
    LMStage,
    LMTrainer,
    ModelConfig,
    SequenceBuilder,
    UnifiedLM,
    cfg_logits,
    edit_image,
    generate_image,
    generate_image_tokens,
    next_token_loss,
    sample_image_tokens,
)


def random_block(sem_h, sem_w, layout, seed=0):
    rng = np.random.default_rng(seed)
    return ImageTokenBlock(
        rng.integers(0, layout.sem_codebook_size, size=(sem_h, sem_w)),
        rng.integers(0, layout.pix_codebook_size, size=(2 * sem_h, 2 * sem_w)),
    )


def caption_sequence(layout, text="a red circle", seed=0):
    codec = ByteTextCodec()
    return SequenceBuilder(layout).text(codec.encode(text)).image_target(random_block(2, 2, layout, seed)).build()


class TestGenerationParams:
    """Test sampling parameter validation."""

    def test_defaults(self):
        params = GenerationParams()
        assert (params.cfg_scale, params.temperature, params.top_k) == (2.0, 1.0, 50)
        assert params.target is None

    @pytest.mark.parametrize("kwargs", [
        {"cfg_scale": -1.0},
        {"temperature": 0.0},
        {"top_k": 0},
        {"sem_h": 2},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            GenerationParams(**kwargs)


class TestEmbedMultimodal:
    """Test input embedding of mixed sequences."""

    def test_text_only_matches_table(self, tiny_lm):
        seq = SequenceBuilder(tiny_lm.layout).text([1, 2, 3]).build()
        expected = tiny_lm.token_embedding(seq.tokens)
        assert torch.equal(tiny_lm.embed_multimodal(seq), expected)

    def test_adapter_outputs_at_grammar_positions(self, tiny_lm):
        layout = tiny_lm.layout
        block = random_block(4, 4, layout)
        sem_feats = torch.randn(4, 4, 8)
        pix_feats = torch.randn(8, 8, 8)
        seq = SequenceBuilder(layout).image_input(block, sem_feats, pix_feats).build()
        assert seq.sem_positions.numel() == 16
        emb = tiny_lm.embed_multimodal(seq)
        expected = tiny_lm.sem_adapter(sem_feats.reshape(16, 8))
        assert torch.allclose(emb[seq.sem_positions], expected)
        # the first sem code sits after <soi> H W <sos>
        assert int(seq.sem_positions[0]) == 4

    def test_missing_features(self, tiny_lm):
        seq = SequenceBuilder(tiny_lm.layout).image_input(random_block(2, 2, tiny_lm.layout)).build()
        with pytest.raises(DomainError):
            tiny_lm.embed_multimodal(seq)

    def test_discrete_input_uses_table(self, tiny_layout):
        torch.manual_seed(0)
        config = ModelConfig.tiny()
        config.continuous_input = False
        model = UnifiedLM(config, tiny_layout)
        seq = SequenceBuilder(tiny_layout).image_input(random_block(2, 2, tiny_layout)).build()
        assert torch.equal(model.embed_multimodal(seq), model.token_embedding(seq.tokens))

    def test_single_unified_head(self, tiny_lm):
        heads = [m for m in tiny_lm.modules() if isinstance(m, nn.Linear) and m.out_features == tiny_lm.vocab_size]
        assert heads == [tiny_lm.head]


class TestNextTokenLoss:
    """Test the next-token objective."""

    def test_uniform_logits_give_log_vocab(self, tiny_lm):
        with torch.no_grad():
            tiny_lm.head.weight.zero_()
            tiny_lm.head.bias.zero_()
        loss = next_token_loss(tiny_lm, [caption_sequence(tiny_lm.layout)])
        assert loss.item() == pytest.approx(math.log(tiny_lm.vocab_size), rel=1e-5)

    def test_prompt_is_not_supervised(self, tiny_lm):
        seq = caption_sequence(tiny_lm.layout)
        prompt_len = len(ByteTextCodec().encode("a red circle"))
        assert not seq.loss_mask[:prompt_len].any()
        assert seq.loss_mask[prompt_len:].all()

    def test_masking_image_positions_matches_text_only(self, tiny_lm):
        layout = tiny_lm.layout
        codec = ByteTextCodec()
        answer = codec.encode("blue", bos=False)
        mixed = (SequenceBuilder(layout)
            .text(codec.encode("q", eos=False))
            .text(answer, supervise=True)
            .image_target(random_block(1, 1, layout))
            .build())
        mixed.loss_mask[len(mixed) - layout.sequence_length(1, 1):] = False
        text_only = (SequenceBuilder(layout)
            .text(codec.encode("q", eos=False))
            .text(answer, supervise=True)
            .build())
        assert next_token_loss(tiny_lm, [mixed]).item() == pytest.approx(
            next_token_loss(tiny_lm, [text_only]).item(), abs=1e-6
        )

    def test_label_out_of_vocab(self, tiny_lm):
        seq = caption_sequence(tiny_lm.layout)
        seq.tokens[-1] = tiny_lm.vocab_size
        with pytest.raises(DomainError):
            next_token_loss(tiny_lm, [seq])

    def test_cached_forward_matches_full(self, tiny_lm):
        tiny_lm.eval()
        seq = caption_sequence(tiny_lm.layout)
        emb = tiny_lm.embed_multimodal(seq)[None]
        with torch.no_grad():
            full = tiny_lm(emb)
            cache = tiny_lm.new_cache()
            steps = torch.cat([tiny_lm(emb[:, i:i + 1], cache) for i in range(emb.shape[1])], dim=1)
        assert torch.allclose(full, steps, atol=1e-5)

    def test_context_overflow(self, tiny_lm):
        seq = SequenceBuilder(tiny_lm.layout).text([1] * 300).build()
        with pytest.raises(DomainError):
            next_token_loss(tiny_lm, [seq])


class TestCfgLogits:
    """Test classifier-free guidance algebra."""

    def test_identities(self):
        cond = torch.tensor([0.3, -1.2, 2.0])
        uncond = torch.tensor([1.0, 0.5, -0.7])
        assert torch.equal(cfg_logits(cond, uncond, 1.0), cond)
        assert torch.equal(cfg_logits(cond, uncond, 0.0), uncond)

    def test_scale_two(self):
        out = cfg_logits(torch.tensor([2.0, 0.0]), torch.tensor([1.0, 0.0]), 2.0)
        assert torch.allclose(out, torch.tensor([3.0, 0.0]))

    def test_affine_in_scale(self):
        cond, uncond = torch.randn(5), torch.randn(5)
        a, b, c = (cfg_logits(cond, uncond, s) for s in (0.5, 1.5, 2.5))
        assert torch.allclose(b - a, c - b, atol=1e-6)

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            cfg_logits(torch.zeros(3), torch.zeros(4), 2.0)


class TestSampling:
    """Test grammar-constrained generation."""

    def test_generations_parse_and_are_coarse_to_fine(self, tiny_lm):
        layout = tiny_lm.layout
        prompt = ByteTextCodec().encode("a green square")
        sem_lo, sem_hi = layout.range_of(TokenKind.SEMANTIC)
        pix_lo, pix_hi = layout.range_of(TokenKind.PIXEL)
        for seed in range(5):
            tokens = generate_image_tokens(tiny_lm, prompt, GenerationParams(top_k=1000, seed=seed))
            parse(tokens, layout)
            sem = [i for i, t in enumerate(tokens) if sem_lo <= t < sem_hi]
            pix = [i for i, t in enumerate(tokens) if pix_lo <= t < pix_hi]
            assert max(sem) < min(pix)

    @pytest.mark.slow
    def test_thousand_untrained_generations_parse(self, tiny_lm):
        sem_lo, sem_hi = tiny_lm.layout.range_of(TokenKind.SEMANTIC)
        pix_lo, pix_hi = tiny_lm.layout.range_of(TokenKind.PIXEL)
        for seed in range(1000):
            tokens = generate_image_tokens(tiny_lm, [seed % 256], GenerationParams(top_k=1000, seed=seed))
            parse(tokens, tiny_lm.layout)
            kinds = [t for t in tokens if sem_lo <= t < sem_hi or pix_lo <= t < pix_hi]
            first_pix = next(i for i, t in enumerate(kinds) if t >= pix_lo)
            assert all(t < sem_hi for t in kinds[:first_pix])
            assert all(t >= pix_lo for t in kinds[first_pix:])

    def test_pinned_grid(self, tiny_lm):
        block = generate_image(tiny_lm, [1, 2], GenerationParams(sem_h=2, sem_w=1, seed=3))
        assert (block.sem_h, block.sem_w) == (2, 1)
        assert (block.pix_h, block.pix_w) == (4, 2)

    def test_scale_one_equals_conditional_sampling(self, tiny_lm):
        prompt = [5, 6, 7]
        params = GenerationParams(cfg_scale=1.0, sem_h=1, sem_w=1, seed=11)
        cond = SequenceBuilder(tiny_lm.layout).text(prompt).build()
        assert generate_image_tokens(tiny_lm, prompt, params) == sample_image_tokens(tiny_lm, cond, None, params)

    def test_same_seed_same_tokens(self, tiny_lm):
        params = GenerationParams(sem_h=1, sem_w=2, seed=4)
        assert generate_image_tokens(tiny_lm, [9], params) == generate_image_tokens(tiny_lm, [9], params)

    def test_context_overflow_before_sampling(self, tiny_lm):
        with pytest.raises(DomainError, match="context overflow"):
            generate_image_tokens(tiny_lm, [1] * 200, GenerationParams())

    def test_edit_keeps_source_size(self, tiny_lm, tiny_tokenizer, tiny_images):
        source = tiny_tokenizer.encode(tiny_images[0])
        instruction = ByteTextCodec().encode("invert colors")
        block = edit_image(tiny_lm, source, instruction, GenerationParams(seed=0))
        assert (block.sem_h, block.sem_w) == source.sem_grid
        assert (block.pix_h, block.pix_w) == source.pix_grid


class TestLMTrainer:
    """Test stage-aware parameter groups."""

    def test_vision_stage_freezes_body_and_text_rows(self, tiny_lm):
        text_rows = tiny_lm.token_embedding.weight[: tiny_lm.layout.text_vocab_size].detach().clone()
        head_rows = tiny_lm.head.weight[: tiny_lm.layout.text_vocab_size].detach().clone()
        body = [p.detach().clone() for p in tiny_lm.body_parameters()]
        trainer = LMTrainer(tiny_lm, LMStage.VISION)
        for _ in range(2):
            trainer.train_step([caption_sequence(tiny_lm.layout)])
        assert torch.equal(tiny_lm.token_embedding.weight[: tiny_lm.layout.text_vocab_size], text_rows)
        assert torch.equal(tiny_lm.head.weight[: tiny_lm.layout.text_vocab_size], head_rows)
        assert all(torch.equal(a, b) for a, b in zip(body, tiny_lm.body_parameters()))

    def test_vision_rows_move(self, tiny_lm):
        start = tiny_lm.layout.marker_offset
        before = tiny_lm.head.weight[start:].detach().clone()
        LMTrainer(tiny_lm, LMStage.VISION).train_step([caption_sequence(tiny_lm.layout)])
        assert not torch.equal(tiny_lm.head.weight[start:], before)

    def test_loss_decreases_when_overfitting(self, tiny_lm):
        trainer = LMTrainer(tiny_lm, LMStage.SFT, {"adapter": 3e-3, "vocab": 3e-3, "body": 3e-3})
        batch = [caption_sequence(tiny_lm.layout)]
        first = trainer.train_step(batch)
        for _ in range(30):
            last = trainer.train_step(batch)
        assert last < first

    def test_divergence_is_counted(self, tiny_lm, monkeypatch):
        monitor = InMemoryMonitor()
        trainer = LMTrainer(tiny_lm, LMStage.SFT, monitor=monitor)
        monkeypatch.setattr(
            "tokgen_module.unilm.trainer.next_token_loss",
            lambda model, batch: torch.tensor(float("inf"), requires_grad=True),
        )
        with pytest.raises(DivergenceError):
            trainer.train_step([caption_sequence(tiny_lm.layout)])
        assert monitor.get_counter("divergences", {"component": "lm"}) == 1
