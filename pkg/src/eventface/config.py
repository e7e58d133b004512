"""Flat run configuration shared by the command-line tools.

Every key lives at the top level of a YAML mapping. Unknown keys and
ill-typed values are rejected before any computation starts.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .backbone import BackboneConfig
from .data import SynthConfig
from .model import ModelConfig
from .train import TrainConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_override", "KEY_DOCS"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # -- data generation ------------------------------------------------------
    num_ids: int = 8
    test_ids: int = 2
    sequences_per_id: int = 16
    sensor_hw: int = 64
    duration_us: int = 200_000
    contrast_threshold: float = 0.15
    # -- encoding ---------------------------------------------------------------
    delta_t_us: int = 50_000
    num_frames: int = 4
    input_hw: int = 32
    # -- backbone / adapters ----------------------------------------------------
    stage_channels: list = field(default_factory=lambda: [8, 16, 32])
    blocks_per_stage: int = 2
    embed_dim: int = 32
    lora_rank: int = 6
    lora_layers: list | None = None
    # -- motion encoder / modulator ---------------------------------------------
    mpe_kernel_large: int = 7
    mpe_kernel_small: int = 3
    mpe_reduction: int = 2
    shift: str = "octa"
    arrangement: str = "interleaved"
    wkv_method: str = "scan"
    mu_r: float = 0.5
    mu_k: float = 0.5
    mu_v: float = 0.5
    mu_cm: float = 0.5
    stm_out_std: float = 0.02
    # -- objective / optimisation -----------------------------------------------
    margin: float = 0.5
    scale: float = 32.0
    lr: float = 0.01
    batch_size: int = 8
    epochs_stage1: int = 30
    epochs_stage2: int = 10
    pretrain_ids: int = 64
    pretrain_images_per_id: int = 12
    pretrain_epochs: int = 8
    pretrain_lr: float = 0.05
    # -- paths --------------------------------------------------------------------
    events_dir: str | None = None
    data_dir: str | None = None
    output_dir: str | None = None
    stage1_checkpoint: str | None = None
    checkpoint: str | None = None
    # -- misc -----------------------------------------------------------------------
    seed: int = 0

    def __post_init__(self):
        self.validate()

    # -- validation -----------------------------------------------------------
    def validate(self) -> None:
        for f in fields(self):
            _check_type(f.name, getattr(self, f.name), f.type)
        positive = (
            "num_ids", "sequences_per_id", "sensor_hw", "duration_us", "contrast_threshold",
            "delta_t_us", "num_frames", "input_hw", "blocks_per_stage", "embed_dim", "lora_rank",
            "mpe_kernel_large", "mpe_kernel_small", "mpe_reduction", "scale", "lr", "batch_size",
            "pretrain_images_per_id", "pretrain_lr",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("test_ids", "epochs_stage1", "epochs_stage2", "pretrain_ids", "pretrain_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.num_ids < 2 or self.test_ids >= self.num_ids:
            raise ConfigError("need num_ids >= 2 and at least one training identity")
        if self.num_frames < 2:
            raise ConfigError("num_frames must be at least 2 (motion needs frame pairs)")
        if not 0 <= self.margin < 1:
            raise ConfigError("margin must lie in [0, 1)")
        for name in ("mu_r", "mu_k", "mu_v", "mu_cm"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        choices = {
            "shift": ("octa", "q"),
            "arrangement": ("interleaved", "sequential"),
            "wkv_method": ("naive", "scan"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        try:
            self.model_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # -- conversions --------------------------------------------------------------
    def backbone_config(self) -> BackboneConfig:
        return BackboneConfig(
            stage_channels=tuple(self.stage_channels),
            blocks_per_stage=self.blocks_per_stage,
            input_hw=self.input_hw,
            embed_dim=self.embed_dim,
        )

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            backbone=self.backbone_config(),
            num_frames=self.num_frames,
            lora_rank=self.lora_rank,
            lora_layers=tuple(self.lora_layers) if self.lora_layers is not None else None,
            mpe_kernels=(self.mpe_kernel_large, self.mpe_kernel_small),
            mpe_reduction=self.mpe_reduction,
            shift=self.shift,
            arrangement=self.arrangement,
            wkv_method=self.wkv_method,
            mu_r=self.mu_r, mu_k=self.mu_k, mu_v=self.mu_v, mu_cm=self.mu_cm,
            stm_out_std=self.stm_out_std,
            margin=self.margin,
            scale=self.scale,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr, batch_size=self.batch_size,
            epochs_stage1=self.epochs_stage1, epochs_stage2=self.epochs_stage2,
            seed=self.seed, pretrain_ids=self.pretrain_ids,
            pretrain_images_per_id=self.pretrain_images_per_id,
            pretrain_epochs=self.pretrain_epochs, pretrain_lr=self.pretrain_lr,
        )

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            sensor_hw=self.sensor_hw, duration_us=self.duration_us,
            contrast_threshold=self.contrast_threshold,
        )

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, data: dict[str, Any] | None) -> "RunConfig":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:  # pragma: no cover - guarded by the key check
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes) -> "RunConfig":
        return RunConfig.from_dict({**self.to_dict(), **changes})


_SCALARS = {"int": int, "float": float, "str": str}


def _check_type(name: str, value: Any, annotation: str) -> None:
    ann = str(annotation).replace(" ", "")
    optional = ann.endswith("|None")
    base = ann[: -len("|None")] if optional else ann
    if value is None:
        if optional:
            return
        raise ConfigError(f"{name} must not be null")
    if base == "list":
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name} must be a list, got {type(value).__name__}")
        return
    expected = _SCALARS[base]
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be {base}, got a boolean")
    if expected is float and isinstance(value, int):
        return
    if not isinstance(value, expected):
        raise ConfigError(f"{name} must be {base}, got {type(value).__name__} {value!r}")


def parse_override(text: str) -> tuple[str, Any]:
    """``"key=value"`` with the value parsed as YAML (``lr=0.1``, ``stage_channels=[8,16]``)."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override must look like key=value, got {text!r}")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value of {key!r}: {exc}") from exc
    return key.strip(), value


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> RunConfig:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError("config file must contain a mapping")
        data.update(loaded or {})
    for item in overrides or []:
        key, value = parse_override(item)
        data[key] = value
    return RunConfig.from_dict(data)


KEY_DOCS = {
    "num_ids": "identities generated by `simulate` (train + test)",
    "test_ids": "identities held out for testing (the last ones)",
    "sequences_per_id": "event sequences per identity",
    "sensor_hw": "simulated sensor resolution (square)",
    "duration_us": "length of each simulated sequence",
    "contrast_threshold": "log-intensity change that triggers one event",
    "delta_t_us": "accumulation window per frame",
    "num_frames": "frames per sequence",
    "input_hw": "frame resolution after resizing",
    "stage_channels": "backbone width per stage (each divisible by 8)",
    "blocks_per_stage": "3x3 convs per stage",
    "embed_dim": "embedding size",
    "lora_rank": "adapter rank (capped at C_in - 1 per layer)",
    "lora_layers": "conv layers receiving adapters; null = all",
    "mpe_kernel_large": "large depthwise kernel of the motion encoder",
    "mpe_kernel_small": "small depthwise kernel of the motion encoder",
    "mpe_reduction": "channel reduction of the motion encoder",
    "shift": "token shift: octa (8 neighbours) | q (4 neighbours)",
    "arrangement": "token arrangement: interleaved | sequential",
    "wkv_method": "bidirectional WKV evaluation: naive (O(L^2)) | scan (O(L))",
    "mu_r": "token-shift mix for receptance",
    "mu_k": "token-shift mix for keys",
    "mu_v": "token-shift mix for values",
    "mu_cm": "token-shift mix in the channel mix",
    "stm_out_std": "init std of the modulator output projections",
    "margin": "margin m of the adaptive-margin loss",
    "scale": "logit scale s",
    "lr": "SGD learning rate for both training stages",
    "batch_size": "sequences per step",
    "epochs_stage1": "adapter-training epochs",
    "epochs_stage2": "motion/modulator-training epochs",
    "pretrain_ids": "identities of the emulated intensity-image pretraining",
    "pretrain_images_per_id": "images per pretraining identity",
    "pretrain_epochs": "pretraining epochs",
    "pretrain_lr": "pretraining learning rate",
    "events_dir": "directory written by `simulate`",
    "data_dir": "directory written by `encode`",
    "output_dir": "where a command writes its outputs",
    "stage1_checkpoint": "merged stage-1 checkpoint used by stage 2",
    "checkpoint": "checkpoint evaluated by `eval`",
    "seed": "master seed",
}
