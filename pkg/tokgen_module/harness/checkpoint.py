"""
Named-array checkpoints

One safetensors file per checkpoint. Tensors are namespaced by module
("codebook_sem.base", "unet.inc.weight", ...); string metadata records the
structural config hash, the full config, the stage and the step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

import torch
from safetensors import safe_open
from safetensors.torch import save_file
from torch import nn

from tokgen_module.core.errors import CheckpointMismatchError, DomainError
from tokgen_module.harness.config import RunConfig
from tokgen_module.vq.codebook import Codebook

EFFECTIVE_KEY = "effective"
EXTRAS_NAMESPACE = "resume"


@dataclass
class CheckpointInfo:
    path: Path
    config_hash: str
    stage: str
    step: int
    complete: bool
    metadata: Dict[str, str]


def _flatten(modules: Mapping[str, nn.Module]) -> Dict[str, torch.Tensor]:
    tensors = {}
    for namespace, module in modules.items():
        for name, tensor in module.state_dict().items():
            tensors[f"{namespace}.{name}"] = tensor.detach().cpu().clone().contiguous()
    return tensors


def save_checkpoint(
    path: Union[str, Path],
    modules: Mapping[str, nn.Module],
    config: RunConfig,
    stage: str = "",
    step: int = 0,
    complete: bool = True,
    extras: Optional[Mapping[str, torch.Tensor]] = None,
) -> Path:
    """
    Write every module's state under its namespace.

    Codebooks also get their effective table as ``<namespace>.effective``
    so the code vectors can be read without rebuilding the projection.
    ``extras`` go under the ``resume`` namespace; see load_extras.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metadata = {
        "config_hash": config.structural_hash(),
        "config": json.dumps(config.to_dict(), sort_keys=True),
        "stage": stage,
        "step": str(step),
        "complete": "1" if complete else "0",
        "namespaces": ",".join(modules),
    }
    tensors = _flatten(modules)
    for namespace, module in modules.items():
        if isinstance(module, Codebook):
            arrays, book_meta = module.to_named_arrays()
            metadata[f"{namespace}.kind"] = book_meta["kind"]
            tensors[f"{namespace}.{EFFECTIVE_KEY}"] = arrays[EFFECTIVE_KEY].cpu()
    for key, tensor in (extras or {}).items():
        tensors[f"{EXTRAS_NAMESPACE}.{key}"] = tensor.detach().cpu().clone().contiguous()
    tmp = path.with_name(path.name + ".tmp")
    save_file(tensors, str(tmp), metadata=metadata)
    tmp.replace(path)
    return path


def read_info(path: Union[str, Path]) -> CheckpointInfo:
    path = Path(path)
    if not path.exists():
        raise DomainError(f"checkpoint {path} does not exist")
    with safe_open(str(path), framework="pt") as f:
        metadata = dict(f.metadata() or {})
    return CheckpointInfo(
        path=path,
        config_hash=metadata.get("config_hash", ""),
        stage=metadata.get("stage", ""),
        step=int(metadata.get("step", "0")),
        complete=metadata.get("complete", "1") == "1",
        metadata=metadata,
    )


def load_checkpoint(
    path: Union[str, Path],
    modules: Mapping[str, nn.Module],
    config: RunConfig,
    allow_mismatch: bool = False,
    strict: bool = True,
) -> CheckpointInfo:
    """
    Restore the given namespaces in place.

    Raises:
        CheckpointMismatchError: If the checkpoint's structural hash differs
            from ``config``'s and ``allow_mismatch`` is false
        DomainError: If a requested namespace is missing from the file
    """
    info = read_info(path)
    expected = config.structural_hash()
    if info.config_hash != expected and not allow_mismatch:
        raise CheckpointMismatchError(str(path), expected, info.config_hash)

    grouped: Dict[str, Dict[str, torch.Tensor]] = {name: {} for name in modules}
    with safe_open(str(info.path), framework="pt") as f:
        for key in f.keys():
            namespace, _, name = key.partition(".")
            if namespace in grouped and not (name == EFFECTIVE_KEY and isinstance(modules[namespace], Codebook)):
                grouped[namespace][name] = f.get_tensor(key)
    for namespace, module in modules.items():
        state = grouped[namespace]
        if not state and any(True for _ in module.state_dict()):
            raise DomainError(f"checkpoint {path} has no namespace {namespace!r}")
        module.load_state_dict(state, strict=strict)
    return info


def checkpoint_namespaces(path: Union[str, Path]) -> List[str]:
    """Module namespaces recorded in a checkpoint's metadata."""
    names = read_info(path).metadata.get("namespaces", "")
    return names.split(",") if names else []


def load_extras(path: Union[str, Path]) -> Dict[str, torch.Tensor]:
    """Tensors written through ``save_checkpoint(extras=...)``, keyed as given."""
    prefix = f"{EXTRAS_NAMESPACE}."
    with safe_open(str(path), framework="pt") as f:
        return {key[len(prefix):]: f.get_tensor(key) for key in f.keys() if key.startswith(prefix)}
