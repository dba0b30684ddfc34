"""Tests for metrics, toy data, run configuration, checkpoints, stages and the CLI"""

import json
import math

import numpy as np
import pytest
import torch
from safetensors import safe_open

from tokgen_module.core.config_loader import replace
from tokgen_module.core.errors import (
    CheckpointMismatchError,
    ConfigError,
    DomainError,
    StageError,
)
from tokgen_module.harness import (
    AXES,
    ByteTextCodec,
    EditTriples,
    MetricsRecord,
    RunConfig,
    StageRunner,
    SyntheticShapes,
    batch_metrics,
    load_checkpoint,
    load_image,
    psnr,
    read_info,
    reconstruct_cli,
    run_ablation,
    run_stages,
    save_checkpoint,
    save_image,
    ssim,
    tokenizer_variants,
)
from tokgen_module.harness.checkpoint import checkpoint_namespaces, load_extras
from tokgen_module.harness.cli import _parse_noise, build_parser, main
from tokgen_module.harness.evaluation import evaluate_tokenizer
from tokgen_module.harness.stages import (
    build_tokenizer,
    checkpoint_path,
    restore_trainer_state,
    tokenizer_modules,
    trainer_state,
)
from tokgen_module.seqcodec import ImageTokenBlock, serialize, write_token_stream
from tokgen_module.telemetry import InMemoryMonitor
from tokgen_module.tokenizer import DualViTok, TokenizerConfig, TokenizerTrainer
from tokgen_module.tokenizer.config import NoiseKind


def noisy_pair(seed=0, size=16):
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-0.25, 0.25, size=(size, size))
    return 0.5 + noise, 0.5 - noise


class TestPSNR:
    """Test peak signal-to-noise ratio."""

    def test_identical_is_infinite(self):
        a = np.full((4, 4), 0.3)
        assert psnr(a, a) == math.inf

    def test_known_values(self):
        zeros = np.zeros((4, 4))
        assert psnr(zeros, np.full((4, 4), 0.1)) == pytest.approx(20.0)
        assert psnr(zeros, np.ones((4, 4))) == pytest.approx(0.0)

    def test_accepts_tensors(self):
        a = torch.zeros(3, 4, 4)
        assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-5)

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))


class TestSSIM:
    """Test structural similarity."""

    def test_identical_is_one(self):
        a, _ = noisy_pair()
        assert ssim(a, a) == pytest.approx(1.0)

    def test_anticorrelated_is_negative(self):
        a, b = noisy_pair()
        assert ssim(a, b) < 0

    def test_single_window_matches_formula(self):
        a, b = noisy_pair(seed=1, size=7)
        c1, c2 = 0.01 ** 2, 0.03 ** 2
        mx, my = a.mean(), b.mean()
        vx, vy = a.var(), b.var()
        cov = ((a - mx) * (b - my)).mean()
        expected = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2))
        assert ssim(a, b, window=7) == pytest.approx(expected, abs=1e-9)

    def test_window_must_fit(self):
        a, b = noisy_pair(size=5)
        with pytest.raises(DomainError, match="does not fit"):
            ssim(a, b, window=7)

    def test_matches_skimage(self):
        metrics = pytest.importorskip("skimage.metrics")
        rng = np.random.default_rng(3)
        a = rng.random((20, 24, 3))
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        reference = metrics.structural_similarity(
            a, b, win_size=7, data_range=1.0, channel_axis=-1,
            gaussian_weights=False, use_sample_covariance=False,
        )
        assert ssim(a, b, window=7) == pytest.approx(reference, abs=1e-6)

    def test_batch_metrics_caps_identical_psnr(self):
        images = torch.rand(2, 3, 8, 8, generator=torch.Generator().manual_seed(0))
        scores = batch_metrics(images, images.clone())
        assert scores["psnr"] == 100.0
        assert scores["ssim"] == pytest.approx(1.0)


class TestMetricsRecord:
    """Test the per-step metrics record."""

    def test_ssim_out_of_range(self):
        with pytest.raises(DomainError):
            MetricsRecord(step=1, ssim=1.5)

    def test_from_dict_reads_infinite_psnr(self):
        record = MetricsRecord.from_dict({"step": 3, "stage": "tok-1", "psnr": "inf", "timestamp": 0.0})
        assert record.psnr == math.inf
        assert record.stage == "tok-1"

    def test_to_dict(self):
        record = MetricsRecord(step=2, losses={"total": 0.5}, timestamp=1.0)
        data = record.to_dict()
        assert data["step"] == 2
        assert data["losses"] == {"total": 0.5}
        assert MetricsRecord.from_dict(data) == record


class TestByteTextCodec:
    """Test the byte-level text codec."""

    def test_encode(self):
        assert ByteTextCodec().encode("hi") == [256, 104, 105, 257]
        assert ByteTextCodec().encode("hi", bos=False, eos=False) == [104, 105]

    def test_decode(self):
        codec = ByteTextCodec()
        ids = codec.encode("héllo")
        assert codec.decode(ids) == "héllo"
        assert codec.decode(codec.encode("hi"), keep_special=True) == "<bos>hi<eos>"

    def test_decode_rejects_foreign_ids(self):
        with pytest.raises(DomainError):
            ByteTextCodec().decode([10_000])


class TestToyData:
    """Test the synthetic datasets."""

    def test_shapes_are_deterministic(self):
        a = SyntheticShapes(4, size=16, seed=5)
        b = SyntheticShapes(4, size=16, seed=5)
        assert torch.equal(a.images(), b.images())
        assert [a[i].caption for i in range(4)] == [b[i].caption for i in range(4)]

    def test_caption_describes_sample(self):
        sample = SyntheticShapes(8, size=(16, 24), seed=0)[3]
        assert sample.image.shape == (3, 16, 24)
        assert sample.caption == f"a {sample.color} {sample.shape} on a {sample.background} background"
        assert sample.color != sample.background

    def test_bounds(self):
        with pytest.raises(DomainError):
            SyntheticShapes(0)
        with pytest.raises(IndexError):
            SyntheticShapes(2)[2]

    def test_edit_triples(self):
        triple = EditTriples(3, size=16, instruction="invert colors")[1]
        assert triple.instruction == "invert colors"
        assert torch.allclose(triple.target, 1.0 - triple.source)

    def test_edit_cycles_instructions(self):
        triples = EditTriples(3, size=16)
        assert len({triples[i].instruction for i in range(3)}) == 3

    def test_unknown_instruction(self):
        with pytest.raises(DomainError, match="unknown instruction"):
            EditTriples(2, instruction="paint it gold")


class TestRunConfig:
    """Test run configuration validation and serialisation."""

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            RunConfig.from_dict({"seed": 1, "colour": "red"})

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError, match="train"):
            RunConfig.from_dict({"train": {"epochs": 3}})

    def test_unknown_stage(self):
        with pytest.raises(ConfigError, match="unknown stage"):
            RunConfig(stages=("tok-1", "tok-9"))

    def test_image_size_multiple(self):
        cfg = RunConfig.tiny()
        with pytest.raises(ConfigError, match="multiple of 8"):
            replace(cfg, data=replace(cfg.data, image_size=12))

    def test_feature_dims_follow_codebook(self):
        cfg = RunConfig.tiny()
        with pytest.raises(ConfigError, match="codebook_dim"):
            replace(cfg, lm=replace(cfg.lm, sem_feature_dim=4))

    def test_folder_requires_path(self):
        cfg = RunConfig.tiny()
        with pytest.raises(ConfigError, match="data.folder"):
            replace(cfg.data, kind="folder")

    def test_save_load(self, tmp_path):
        cfg = RunConfig.tiny(output_dir=str(tmp_path / "run"))
        loaded = RunConfig.load(cfg.save(tmp_path / "run.json"))
        assert loaded.to_dict() == cfg.to_dict()
        assert loaded.structural_hash() == cfg.structural_hash()

    def test_load_rejects_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{", encoding="utf-8")
        with pytest.raises(ConfigError, match="invalid JSON"):
            RunConfig.load(path)
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigError, match="object"):
            RunConfig.load(path)

    def test_structural_hash_ignores_training_knobs(self):
        cfg = RunConfig.tiny()
        knobs = replace(cfg, seed=7, train=replace(cfg.train, steps=99))
        assert knobs.structural_hash() == cfg.structural_hash()
        wider = replace(cfg, tokenizer=replace(cfg.tokenizer, backbone_seed=cfg.tokenizer.backbone_seed + 1))
        assert wider.structural_hash() != cfg.structural_hash()
        assert len(cfg.structural_hash()) == 64


class TestCheckpoint:
    """Test safetensors checkpoints."""

    def test_round_trip(self, tiny_run_config, tmp_path):
        source = build_tokenizer(tiny_run_config)
        path = save_checkpoint(tmp_path / "tok.safetensors", tokenizer_modules(source), tiny_run_config,
                               stage="tok-1", step=4)
        target = build_tokenizer(replace(tiny_run_config, seed=1))
        info = load_checkpoint(path, tokenizer_modules(target), tiny_run_config)
        assert info.stage == "tok-1"
        assert info.step == 4
        assert info.complete
        for key, value in source.state_dict().items():
            assert torch.equal(value, target.state_dict()[key]), key

    def test_records_codebook_kind(self, tiny_run_config, tmp_path):
        model = build_tokenizer(tiny_run_config)
        path = save_checkpoint(tmp_path / "tok.safetensors", tokenizer_modules(model), tiny_run_config)
        info = read_info(path)
        assert info.metadata["codebook_sem.kind"] == model.codebook_sem.kind.value
        assert info.config_hash == tiny_run_config.structural_hash()

    def test_structure_mismatch(self, tiny_run_config, tmp_path):
        model = build_tokenizer(tiny_run_config)
        path = save_checkpoint(tmp_path / "tok.safetensors", tokenizer_modules(model), tiny_run_config)
        tok = tiny_run_config.tokenizer
        other = replace(tiny_run_config, tokenizer=replace(tok, backbone_seed=tok.backbone_seed + 1))
        with pytest.raises(CheckpointMismatchError) as excinfo:
            load_checkpoint(path, tokenizer_modules(model), other)
        assert excinfo.value.found == tiny_run_config.structural_hash()
        load_checkpoint(path, tokenizer_modules(model), other, allow_mismatch=True)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DomainError, match="does not exist"):
            read_info(tmp_path / "nope.safetensors")

    def test_stores_effective_codebook_tables(self, tiny_run_config, tmp_path):
        model = build_tokenizer(tiny_run_config)
        path = save_checkpoint(tmp_path / "tok.safetensors", tokenizer_modules(model), tiny_run_config)
        with safe_open(str(path), framework="pt") as f:
            for name in ("codebook_sem", "codebook_pix"):
                stored = f.get_tensor(f"{name}.effective")
                assert torch.equal(stored, getattr(model, name).effective().detach())
        assert checkpoint_namespaces(path) == list(tokenizer_modules(model))

    def test_extras_round_trip(self, tiny_run_config, tmp_path):
        model = build_tokenizer(tiny_run_config)
        state = {"generator.rng": torch.Generator().manual_seed(5).get_state()}
        path = save_checkpoint(tmp_path / "tok.safetensors", tokenizer_modules(model), tiny_run_config,
                               extras=state)
        assert torch.equal(load_extras(path)["generator.rng"], state["generator.rng"])
        load_checkpoint(path, tokenizer_modules(model), tiny_run_config)


class TestStageRunner:
    """Test stage orchestration, skipping and resume."""

    def test_missing_prerequisite(self, tiny_run_config):
        with pytest.raises(StageError, match="missing prerequisite checkpoint for stage 'tok-1'"):
            StageRunner(tiny_run_config).run("tok-2")

    def test_unknown_stage(self, tiny_run_config):
        with pytest.raises(StageError, match="unknown stage"):
            StageRunner(tiny_run_config).run("tok-9")

    def test_tokenizer_stage(self, tiny_run_config):
        result = StageRunner(tiny_run_config).run("tok-1")
        assert result.checkpoint == checkpoint_path(tiny_run_config, "tok-1")
        assert [r.step for r in result.records] == [2, 4]
        assert all(math.isfinite(r.losses["total"]) for r in result.records)
        assert read_info(result.checkpoint).complete
        assert not checkpoint_path(tiny_run_config, "tok-1", partial=True).exists()

        lines = (tiny_run_config.output_path / "metrics.jsonl").read_text(encoding="utf-8").splitlines()
        assert [json.loads(line)["step"] for line in lines] == [2, 4]

    def test_complete_stage_is_skipped(self, tiny_run_config):
        runner = StageRunner(tiny_run_config)
        runner.run("tok-1")
        again = runner.run("tok-1")
        assert again.skipped
        assert again.records == []

    def test_rerun_reproduces_metrics(self, tmp_path):
        first = StageRunner(RunConfig.tiny(output_dir=str(tmp_path / "a"))).run("tok-1")
        second = StageRunner(RunConfig.tiny(output_dir=str(tmp_path / "b"))).run("tok-1")
        assert [r.losses for r in first.records] == [r.losses for r in second.records]
        assert [r.psnr for r in first.records] == [r.psnr for r in second.records]

    def test_resume_from_partial(self, tiny_run_config):
        model = build_tokenizer(tiny_run_config)
        save_checkpoint(checkpoint_path(tiny_run_config, "tok-1", partial=True), tokenizer_modules(model),
                        tiny_run_config, stage="tok-1", step=3, complete=False)
        result = StageRunner(tiny_run_config).run("tok-1")
        assert result.start_step == 3
        assert [r.step for r in result.records] == [4]

    def test_interrupted_stage_ends_on_uninterrupted_weights(self, tmp_path, monkeypatch):
        straight = RunConfig.tiny(output_dir=str(tmp_path / "straight"))
        StageRunner(straight).run("tok-1")

        resumed = RunConfig.tiny(output_dir=str(tmp_path / "resumed"))
        original = TokenizerTrainer.train_step

        def stop_at_third_step(trainer, images):
            if trainer.step == 2:
                raise RuntimeError("interrupted")
            return original(trainer, images)

        monkeypatch.setattr(TokenizerTrainer, "train_step", stop_at_third_step)
        with pytest.raises(RuntimeError, match="interrupted"):
            StageRunner(resumed).run("tok-1")
        partial = checkpoint_path(resumed, "tok-1", partial=True)
        assert read_info(partial).step == 2
        assert any(key.startswith("optimizer.") for key in load_extras(partial))

        monkeypatch.setattr(TokenizerTrainer, "train_step", original)
        result = StageRunner(resumed).run("tok-1")
        assert result.start_step == 2
        assert [r.step for r in result.records] == [4]

        expected = build_tokenizer(straight)
        load_checkpoint(checkpoint_path(straight, "tok-1"), tokenizer_modules(expected), straight)
        actual = build_tokenizer(resumed)
        load_checkpoint(checkpoint_path(resumed, "tok-1"), tokenizer_modules(actual), resumed)
        for key, value in expected.state_dict().items():
            torch.testing.assert_close(actual.state_dict()[key], value)

    def test_trainer_state_round_trip(self, tiny_images):
        torch.manual_seed(0)
        source = TokenizerTrainer(DualViTok(TokenizerConfig.tiny()), 4)
        source.train_step(tiny_images)
        torch.manual_seed(0)
        target = TokenizerTrainer(DualViTok(TokenizerConfig.tiny()), 4)
        restore_trainer_state(target, trainer_state(source))
        assert torch.equal(target.generator.get_state(), source.generator.get_state())
        restored = target.optimizer.state_dict()["state"]
        for index, fields in source.optimizer.state_dict()["state"].items():
            for key, value in fields.items():
                assert torch.equal(restored[index][key], value), (index, key)
        assert target.disc_optimizer.state_dict()["state"] == {}

    def test_prerequisite_must_carry_the_tokenizer(self, tiny_run_config):
        model = build_tokenizer(tiny_run_config)
        partial_modules = {"pixel_encoder": model.pixel_encoder}
        save_checkpoint(checkpoint_path(tiny_run_config, "tok-1"), partial_modules, tiny_run_config, stage="tok-1")
        with pytest.raises(StageError, match="lacks semantic_backbone"):
            StageRunner(tiny_run_config).run("tok-2")

    def test_monitor_snapshot_is_written(self, tiny_run_config):
        result = StageRunner(tiny_run_config).run("tok-1")
        path = tiny_run_config.output_path / "monitor" / "tok-1.json"
        snapshot = json.loads(path.read_text(encoding="utf-8"))
        assert snapshot == result.monitor
        gauges = snapshot["gauges"]
        assert gauges["util_semantic"] == pytest.approx(result.records[-1].utilization["semantic"])
        assert 0.0 < gauges["util_pixel"] <= 1.0
        assert not any(key.startswith("divergences") for key in snapshot["counters"])

    @pytest.mark.slow
    def test_full_pipeline(self, tiny_run_config):
        results = run_stages(tiny_run_config)
        assert [r.stage for r in results] == list(tiny_run_config.stages)
        for result in results:
            assert read_info(result.checkpoint).complete


class TestEvaluateTokenizer:
    """Test tokenizer evaluation."""

    def test_utilization_gauges(self, tiny_tokenizer, tiny_images):
        monitor = InMemoryMonitor()
        tiny_tokenizer.monitor = monitor
        scores = evaluate_tokenizer(tiny_tokenizer, tiny_images)
        assert monitor.get_gauge("util_semantic") == scores["utilization"]["semantic"]
        assert monitor.get_gauge("util_pixel") == scores["utilization"]["pixel"]

    def test_explicit_monitor(self, tiny_tokenizer, tiny_images):
        monitor = InMemoryMonitor()
        scores = evaluate_tokenizer(tiny_tokenizer, tiny_images, monitor=monitor)
        assert set(monitor.to_dict()["gauges"]) == {"util_semantic", "util_pixel"}
        assert 0.0 < scores["utilization"]["pixel"] <= 1.0


class TestReconstruct:
    """Test single-image reconstruction."""

    def test_keeps_input_size(self, tiny_run_config, tmp_path):
        model = build_tokenizer(tiny_run_config)
        ckpt = save_checkpoint(tmp_path / "tok.safetensors", tokenizer_modules(model), tiny_run_config)
        image = SyntheticShapes(1, size=(20, 12), seed=0)[0].image
        source = save_image(image, tmp_path / "shape.png")

        result = reconstruct_cli(source, ckpt, tiny_run_config, output=tmp_path / "out.png")
        assert result.output.exists()
        assert -1.0 <= result.record.ssim <= 1.0
        assert result.record.extra["noise"] == "none"

        assert load_image(result.output).shape == (3, 20, 12)


class TestAblation:
    """Test ablation variants and tables."""

    def test_axes(self):
        assert len(AXES) == 8

    def test_unknown_axis(self, tiny_run_config):
        with pytest.raises(ConfigError, match="unknown ablation axis"):
            run_ablation(tiny_run_config, "learning_rate")

    def test_input_mode_is_not_a_tokenizer_axis(self, tiny_run_config):
        with pytest.raises(ConfigError):
            tokenizer_variants(tiny_run_config.tokenizer, "input_mode")

    def test_noise_variants(self, tiny_run_config):
        variants = tokenizer_variants(tiny_run_config.tokenizer, "noise")
        labels = [label for label, _ in variants]
        assert len(variants) == 11
        assert labels[0] == "none"
        assert "random(a=0.1,b=0.1)" in labels
        assert "zero(a=1,b=0.1)" in labels

    def test_branch_variants(self, tiny_run_config):
        labels = [label for label, _ in tokenizer_variants(tiny_run_config.tokenizer, "branch")]
        assert labels == ["semantic", "pixel", "dual"]

    @pytest.mark.slow
    def test_dc_block_table(self, tiny_run_config):
        table = run_ablation(tiny_run_config, "dc_block", steps=2)
        assert [r.variant for r in table.rows] == ["off", "on"]
        saved = json.loads((tiny_run_config.output_path / "ablations" / "dc_block.json").read_text())
        assert saved["axis"] == "dc_block"
        assert "psnr" in table.format()


class TestCLI:
    """Test the tokgen command line."""

    def test_parser(self):
        args = build_parser().parse_args(["tok", "train", "--preset", "tiny", "--stage", "tok-1", "--steps", "3"])
        assert args.preset == "tiny"
        assert args.stage == ["tok-1"]
        assert args.steps == 3

    def test_parser_rejects_unknown_stage(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["lm", "train", "--stage", "tok-1"])

    def test_parse_noise(self):
        spec = _parse_noise("random,0.1,0.2")
        assert spec.kind is NoiseKind.RANDOM
        assert (spec.alpha, spec.beta) == (0.1, 0.2)
        assert _parse_noise(None) is None
        with pytest.raises(ConfigError):
            _parse_noise("random,0.1")
        with pytest.raises(ConfigError):
            _parse_noise("random,2,0.1")

    def test_domain_errors_exit_two(self, tmp_path, capsys):
        code = main(["tok", "eval", "--preset", "tiny", "--output-dir", str(tmp_path),
                     "--checkpoint", str(tmp_path / "missing.safetensors")])
        assert code == 2
        assert "does not exist" in capsys.readouterr().err

    def test_seq_check(self, tmp_path, tiny_layout, capsys):
        block = ImageTokenBlock(np.zeros((2, 2), dtype=np.int64), np.ones((4, 4), dtype=np.int64))
        tokens = serialize(block, tiny_layout)
        good = write_token_stream(tmp_path / "good.utg", tokens, tiny_layout)
        bad = write_token_stream(tmp_path / "bad.utg", tokens[:-1], tiny_layout)
        common = ["--preset", "tiny", "--output-dir", str(tmp_path)]

        assert main(["seq", "check", *common, "--tokens", str(good)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report == {"ok": True, "sem": [2, 2], "pix": [4, 4]}

        assert main(["seq", "check", *common, "--tokens", str(bad)]) == 1
        report = json.loads(capsys.readouterr().out)
        assert report["ok"] is False
        assert report["kind"] == "truncated"
        assert report["rejections"] == {"parse_rejections{kind=truncated}": 1}
