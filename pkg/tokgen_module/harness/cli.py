"""
``tokgen`` command line

    tokgen tok train|eval|ablate
    tokgen lm train|generate|edit
    tokgen diffusion train|decode
    tokgen data plan
    tokgen seq dump|check

Every command accepts ``--config run.json`` (defaults to the desk preset,
``--preset tiny`` for a seconds-scale run) and ``--output-dir``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import torch
import torch.nn.functional as F

from tokgen_module.core.config_loader import replace
from tokgen_module.core.errors import ConfigError, ParseError, TokgenError
from tokgen_module.datapipe.manifest import plan_manifest
from tokgen_module.diffusion.decoder import DiffusionDecoder
from tokgen_module.harness.ablation import AXES, run_ablation
from tokgen_module.harness.checkpoint import load_checkpoint
from tokgen_module.harness.config import RunConfig
from tokgen_module.harness.data import SyntheticShapes, load_image, save_image
from tokgen_module.harness.evaluation import evaluate_tokenizer
from tokgen_module.harness.reconstruct import reconstruct_cli
from tokgen_module.harness.stages import (
    StageRunner,
    build_diffusion,
    build_lm,
    build_logger,
    build_tokenizer,
    resolve_plan,
    tokenizer_modules,
)
from tokgen_module.harness.text import ByteTextCodec
from tokgen_module.seqcodec.block import ImageTokenBlock
from tokgen_module.seqcodec.grammar import find_image_block, parse, serialize
from tokgen_module.seqcodec.stream import read_token_stream, write_token_stream
from tokgen_module.telemetry.monitor import InMemoryMonitor
from tokgen_module.tokenizer.config import NoiseSpec
from tokgen_module.unilm.config import GenerationParams
from tokgen_module.unilm.sampling import edit_image, generate_image_tokens

TOKENIZER_STAGES = ("tok-1", "tok-2", "tok-3")
LM_STAGE_IDS = ("lm-1", "lm-2-1", "lm-2-2", "lm-3")


def _load_config(args) -> RunConfig:
    if args.config:
        config = RunConfig.load(args.config)
    elif args.preset == "tiny":
        config = RunConfig.tiny()
    else:
        config = RunConfig.desk()
    changes = {}
    if args.output_dir:
        changes["output_dir"] = args.output_dir
    if args.device:
        changes["device"] = args.device
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.steps is not None:
        changes["train"] = replace(config.train, steps=args.steps)
    return replace(config, **changes) if changes else config


def _parse_noise(text: Optional[str]) -> Optional[NoiseSpec]:
    """``kind,alpha,beta`` e.g. ``random,0.1,0.1``."""
    if not text:
        return None
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"noise must be kind,alpha,beta, got {text!r}")
    try:
        return NoiseSpec(parts[0], float(parts[1]), float(parts[2]))
    except ValueError as exc:
        raise ConfigError(f"bad noise spec {text!r}: {exc}") from exc


def _print_json(data) -> None:
    print(json.dumps(data, indent=2, sort_keys=True, default=str))


def _fit_to_multiple(image: torch.Tensor, multiple: int) -> torch.Tensor:
    h, w = image.shape[1:]
    th, tw = max(multiple, h // multiple * multiple), max(multiple, w // multiple * multiple)
    if (th, tw) == (h, w):
        return image
    return F.interpolate(image.unsqueeze(0), size=(th, tw), mode="bilinear", antialias=True, align_corners=False)[0]


def _load_generation_models(config: RunConfig, checkpoint: str, allow_mismatch: bool):
    tokenizer = build_tokenizer(config)
    model = build_lm(config)
    load_checkpoint(
        checkpoint, dict(tokenizer_modules(tokenizer), lm=model), config, allow_mismatch=allow_mismatch
    )
    tokenizer.eval()
    model.eval()
    return tokenizer, model


def _generation_params(config: RunConfig, args) -> GenerationParams:
    changes = {}
    for attr, name in (("cfg", "cfg_scale"), ("temperature", "temperature"), ("top_k", "top_k"),
                       ("sem_h", "sem_h"), ("sem_w", "sem_w"), ("gen_seed", "seed")):
        value = getattr(args, attr, None)
        if value is not None:
            changes[name] = value
    return replace(config.generation, **changes)


def _write_block(tokenizer, block: ImageTokenBlock, tokens: List[int], layout, out_prefix: Path):
    stream = write_token_stream(out_prefix.with_suffix(".utg"), tokens, layout)
    image = tokenizer.decode(torch.from_numpy(block.sem_indices), torch.from_numpy(block.pix_indices))
    png = save_image(image, out_prefix.with_suffix(".png"))
    return stream, png


# -- command handlers --------------------------------------------------


def cmd_tok_train(args) -> int:
    config = _load_config(args)
    runner = StageRunner(config, build_logger(config), allow_mismatch=args.allow_mismatch, progress=True)
    for stage in args.stage or TOKENIZER_STAGES:
        runner.run(stage, fresh=args.fresh)
    return 0


def cmd_tok_eval(args) -> int:
    config = _load_config(args)
    logger = build_logger(config)
    if args.image:
        result = reconstruct_cli(
            args.image, args.checkpoint, config, noise=_parse_noise(args.noise),
            output=args.out, seed=config.seed, allow_mismatch=args.allow_mismatch, logger=logger,
        )
        _print_json(result.record.to_dict())
        return 0
    tokenizer = build_tokenizer(config)
    load_checkpoint(args.checkpoint, tokenizer_modules(tokenizer), config, allow_mismatch=args.allow_mismatch)
    images = SyntheticShapes(args.images, config.data.image_size, config.seed + 10_000).images()
    scores = evaluate_tokenizer(tokenizer, images.to(config.device), noise=_parse_noise(args.noise), seed=config.seed)
    _print_json(scores)
    return 0


def cmd_tok_ablate(args) -> int:
    config = _load_config(args)
    table = run_ablation(config, args.axis, steps=args.steps, logger=build_logger(config),
                         output=Path(args.out) if args.out else None)
    print(table.format())
    return 0


def cmd_lm_train(args) -> int:
    config = _load_config(args)
    runner = StageRunner(config, build_logger(config), allow_mismatch=args.allow_mismatch, progress=True)
    for stage in args.stage or LM_STAGE_IDS:
        runner.run(stage, fresh=args.fresh)
    return 0


def cmd_lm_generate(args) -> int:
    config = _load_config(args)
    tokenizer, model = _load_generation_models(config, args.checkpoint, args.allow_mismatch)
    params = _generation_params(config, args)
    prompt = ByteTextCodec().encode(args.prompt)
    tokens = generate_image_tokens(model, prompt, params)
    block = parse(tokens, model.layout)
    stream, png = _write_block(tokenizer, block, tokens, model.layout, Path(args.out))
    _print_json({"tokens": str(stream), "image": str(png), "sem_h": block.sem_h, "sem_w": block.sem_w})
    return 0


def cmd_lm_edit(args) -> int:
    config = _load_config(args)
    tokenizer, model = _load_generation_models(config, args.checkpoint, args.allow_mismatch)
    params = _generation_params(config, args)
    image = _fit_to_multiple(load_image(args.image), config.tokenizer.lcm_multiple)
    source = tokenizer.encode(image.to(config.device))
    instruction = ByteTextCodec().encode(args.instruction)
    block = edit_image(model, source, instruction, params)
    tokens = serialize(block, model.layout)
    stream, png = _write_block(tokenizer, block, tokens, model.layout, Path(args.out))
    _print_json({"tokens": str(stream), "image": str(png), "sem_h": block.sem_h, "sem_w": block.sem_w})
    return 0


def cmd_diffusion_train(args) -> int:
    config = _load_config(args)
    runner = StageRunner(config, build_logger(config), allow_mismatch=args.allow_mismatch, progress=True)
    runner.run("diffusion", fresh=args.fresh)
    return 0


def cmd_diffusion_decode(args) -> int:
    config = _load_config(args)
    layout = config.layout()
    tokenizer = build_tokenizer(config)
    decoder: DiffusionDecoder = build_diffusion(config, tokenizer)
    load_checkpoint(
        args.checkpoint, dict(tokenizer_modules(tokenizer), diffusion=decoder), config,
        allow_mismatch=args.allow_mismatch,
    )
    _, tokens = read_token_stream(args.tokens, layout)
    start, end = find_image_block(tokens, layout)
    block = parse(tokens[start:end], layout)
    image = decoder.sample(
        torch.from_numpy(block.sem_indices), torch.from_numpy(block.pix_indices), seed=config.seed
    )
    png = save_image(image, args.out)
    _print_json({"image": str(png), "height": int(image.shape[1]), "width": int(image.shape[2])})
    return 0


def cmd_data_plan(args) -> int:
    config = _load_config(args)
    stage = resolve_plan(config, args.stage) if args.stage else None
    records = plan_manifest(args.folder, args.manifest, stage=stage, logger=build_logger(config))
    _print_json({
        "manifest": args.manifest,
        "images": len(records),
        "kept": sum(r.keep for r in records),
    })
    return 0


def cmd_seq_dump(args) -> int:
    config = _load_config(args)
    layout = config.layout()
    layout_hash, tokens = read_token_stream(args.tokens)
    print(f"# layout {layout_hash:08x} ({'match' if layout_hash == layout.layout_hash() else 'MISMATCH'}), {len(tokens)} tokens")
    for i, token in enumerate(tokens):
        local = layout.from_global(token)
        value = local.value.name if hasattr(local.value, "name") else local.value
        print(f"{i:6d} {token:8d} {local.kind.value:>9} {value}")
    return 0


def cmd_seq_check(args) -> int:
    config = _load_config(args)
    layout = config.layout()
    monitor = InMemoryMonitor()
    try:
        _, tokens = read_token_stream(args.tokens, layout)
        start, end = find_image_block(tokens, layout, monitor)
        block = parse(tokens[start:end], layout, monitor)
    except ParseError as exc:
        _print_json({
            "ok": False, "kind": exc.kind.value, "position": exc.position, "detail": exc.detail,
            "rejections": monitor.to_dict()["counters"],
        })
        return 1
    _print_json({"ok": True, "sem": [block.sem_h, block.sem_w], "pix": [block.pix_h, block.pix_w]})
    return 0


# -- parser ------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run configuration (JSON)")
    p.add_argument("--preset", choices=("desk", "tiny"), default="desk")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--device")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--allow-mismatch", action="store_true", help="load checkpoints of another structure")


def _generation_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cfg", type=float, help="guidance scale")
    p.add_argument("--temperature", type=float)
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--sem-h", dest="sem_h", type=int)
    p.add_argument("--sem-w", dest="sem_w", type=int)
    p.add_argument("--gen-seed", dest="gen_seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tokgen", description="Desk-scale unified token generation stack")
    groups = parser.add_subparsers(dest="group", required=True)

    tok = groups.add_parser("tok", help="vision tokenizer").add_subparsers(dest="verb", required=True)
    p = tok.add_parser("train")
    _common(p)
    p.add_argument("--stage", action="append", choices=TOKENIZER_STAGES)
    p.add_argument("--fresh", action="store_true")
    p.set_defaults(func=cmd_tok_train)
    p = tok.add_parser("eval")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", help="reconstruct this file instead of the held-out set")
    p.add_argument("--noise", help="kind,alpha,beta")
    p.add_argument("--images", type=int, default=16)
    p.add_argument("--out")
    p.set_defaults(func=cmd_tok_eval)
    p = tok.add_parser("ablate")
    _common(p)
    p.add_argument("--axis", required=True, choices=AXES)
    p.add_argument("--out")
    p.set_defaults(func=cmd_tok_ablate)

    lm = groups.add_parser("lm", help="unified language model").add_subparsers(dest="verb", required=True)
    p = lm.add_parser("train")
    _common(p)
    p.add_argument("--stage", action="append", choices=LM_STAGE_IDS)
    p.add_argument("--fresh", action="store_true")
    p.set_defaults(func=cmd_lm_train)
    p = lm.add_parser("generate")
    _common(p)
    _generation_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--out", default="generated")
    p.set_defaults(func=cmd_lm_generate)
    p = lm.add_parser("edit")
    _common(p)
    _generation_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--instruction", required=True)
    p.add_argument("--out", default="edited")
    p.set_defaults(func=cmd_lm_edit)

    diff = groups.add_parser("diffusion", help="diffusion decoder").add_subparsers(dest="verb", required=True)
    p = diff.add_parser("train")
    _common(p)
    p.add_argument("--fresh", action="store_true")
    p.set_defaults(func=cmd_diffusion_train)
    p = diff.add_parser("decode")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tokens", required=True)
    p.add_argument("--out", default="decoded.png")
    p.set_defaults(func=cmd_diffusion_decode)

    data = groups.add_parser("data", help="data pipeline").add_subparsers(dest="verb", required=True)
    p = data.add_parser("plan")
    _common(p)
    p.add_argument("--folder", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--stage", help="stage whose resolution policy sets target sizes")
    p.set_defaults(func=cmd_data_plan)

    seq = groups.add_parser("seq", help="token streams").add_subparsers(dest="verb", required=True)
    for verb, func in (("dump", cmd_seq_dump), ("check", cmd_seq_check)):
        p = seq.add_parser(verb)
        _common(p)
        p.add_argument("--tokens", required=True)
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TokgenError as exc:
        print(f"tokgen: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
