"""ViT geometry: token counts and payload sizes derived from a model spec."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import SpecError


@dataclass(frozen=True)
class ModelSpec:
    name: str
    num_layers: int
    input_dims: tuple[int, int, int, int]  # frames, height, width, channels
    patch_dims: tuple[int, int, int]  # frames, height, width
    embed_dim: int
    bytes_per_element: int = 4
    special_tokens: int = 1
    device_overhead_ms: float = 0.0
    cloud_overhead_ms: float = 0.0
    result_payload_bytes: int = 0

    def __post_init__(self):
        object.__setattr__(self, "input_dims", tuple(int(v) for v in self.input_dims))
        object.__setattr__(self, "patch_dims", tuple(int(v) for v in self.patch_dims))
        validate_spec(self)

    @property
    def initial_tokens(self) -> int:
        return initial_token_count(self)

    @property
    def token_bytes(self) -> int:
        """Bytes per token (D_M in the scheduler)."""
        return self.embed_dim * self.bytes_per_element

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["input_dims"] = list(self.input_dims)
        d["patch_dims"] = list(self.patch_dims)
        return d


def validate_spec(spec: ModelSpec) -> None:
    if spec.num_layers < 1:
        raise SpecError(f"num_layers must be >= 1, got {spec.num_layers}")
    if spec.embed_dim < 1 or spec.bytes_per_element < 1:
        raise SpecError("embed_dim and bytes_per_element must be >= 1")
    if spec.special_tokens < 0 or spec.result_payload_bytes < 0:
        raise SpecError("special_tokens and result_payload_bytes must be >= 0")
    if spec.device_overhead_ms < 0 or spec.cloud_overhead_ms < 0:
        raise SpecError("overheads must be non-negative")
    if len(spec.input_dims) != 4 or len(spec.patch_dims) != 3:
        raise SpecError("input_dims is (frames, height, width, channels); patch_dims is (frames, height, width)")
    for axis, (size, patch) in enumerate(zip(spec.input_dims, spec.patch_dims)):
        if size < 1 or patch < 1:
            raise SpecError(f"axis {axis}: dimensions must be positive")
        if size % patch:
            raise SpecError(f"axis {axis}: patch size {patch} does not divide input size {size}")


def initial_token_count(spec: ModelSpec) -> int:
    """Patch grid size plus special tokens (x0)."""
    validate_spec(spec)
    grid = math.prod(size // patch for size, patch in zip(spec.input_dims, spec.patch_dims))
    return grid + spec.special_tokens


def token_payload_bytes(spec: ModelSpec, tokens: int) -> int:
    if tokens < 0:
        raise SpecError(f"token count must be >= 0, got {tokens}")
    return tokens * spec.embed_dim * spec.bytes_per_element


_FIELDS = {f.name for f in dataclasses.fields(ModelSpec)}
_REQUIRED = {f.name for f in dataclasses.fields(ModelSpec)
             if f.default is dataclasses.MISSING}


def spec_from_dict(doc: dict[str, Any]) -> ModelSpec:
    unknown = set(doc) - _FIELDS
    if unknown:
        raise SpecError(f"unknown spec fields: {sorted(unknown)}")
    missing = _REQUIRED - set(doc)
    if missing:
        raise SpecError(f"missing spec fields: {sorted(missing)}")
    try:
        return ModelSpec(**doc)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(str(exc)) from exc


def load_spec(path: str | Path) -> ModelSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SpecError(f"{path}: expected a JSON object")
    return spec_from_dict(doc)


VIT_B = ModelSpec("vit-b", 12, (1, 224, 224, 3), (1, 16, 16), embed_dim=768)
VIT_L_384 = ModelSpec("vit-l-384", 24, (1, 384, 384, 3), (1, 16, 16), embed_dim=1024)
VIDEO_VIT_L = ModelSpec("video-vit-l", 24, (16, 224, 224, 3), (2, 16, 16), embed_dim=1024)

PRESETS = {s.name: s for s in (VIT_B, VIT_L_384, VIDEO_VIT_L)}


def resolve_spec(name_or_path: str) -> ModelSpec:
    """Return a preset by name, otherwise load the JSON file at that path."""
    if name_or_path in PRESETS:
        return PRESETS[name_or_path]
    return load_spec(name_or_path)
