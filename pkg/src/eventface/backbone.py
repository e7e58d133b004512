"""Small multi-stage conv backbone with low-rank conv adapters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "BackboneConfig",
    "LoraConvLayer",
    "Backbone",
    "BackboneOutput",
    "lora_forward",
    "lora_merge",
    "adapter_parameter_count",
    "backbone_forward",
]


@dataclass
class BackboneConfig:
    stage_channels: tuple[int, ...] = (8, 16, 32)
    blocks_per_stage: int = 2
    input_hw: int = 32
    embed_dim: int = 32
    in_channels: int = 3
    kernel_size: int = 3

    def __post_init__(self):
        self.stage_channels = tuple(int(c) for c in self.stage_channels)
        if len(self.stage_channels) < 2:
            raise ValueError("backbone needs at least two stages")
        if any(c % 8 for c in self.stage_channels):
            raise ValueError(f"stage channels must be divisible by 8, got {self.stage_channels}")
        if self.blocks_per_stage < 1 or self.embed_dim < 1:
            raise ValueError("blocks_per_stage and embed_dim must be positive")
        if self.input_hw % (2 ** len(self.stage_channels)):
            raise ValueError(
                f"input_hw={self.input_hw} must be divisible by 2**{len(self.stage_channels)}"
            )

    @property
    def layer_names(self) -> list[str]:
        return [
            f"stage{s}.conv{j}"
            for s in range(len(self.stage_channels))
            for j in range(self.blocks_per_stage)
        ]

    def stage_hw(self, stage: int) -> int:
        return self.input_hw // 2 ** (stage + 1)


@dataclass
class LoraConvLayer:
    """Frozen conv weight ``w0`` plus optional adapters ``w_b * (w_a * x)``."""

    w0: Tensor
    stride: int = 1
    padding: int = 1
    w_a: Tensor | None = None
    w_b: Tensor | None = None

    @property
    def rank(self) -> int:
        return 0 if self.w_a is None else self.w_a.shape[0]

    @property
    def has_adapters(self) -> bool:
        return self.w_a is not None

    def attach(self, rank: int, rng: np.random.Generator, std: float = 0.02) -> None:
        c_out, c_in, k, _ = self.w0.shape
        if not 0 < rank < c_in:
            raise ValueError(f"LoRA rank must satisfy 0 < r < C_in={c_in}, got {rank}")
        self.w_a = Tensor(rng.normal(0.0, std, size=(rank, c_in, k, k)), requires_grad=True)
        self.w_b = Tensor(np.zeros((c_out, rank, 1, 1)), requires_grad=True)

    def merge(self) -> None:
        """Fold the adapters into ``w0`` and drop them."""
        if self.has_adapters:
            self.w0 = Tensor(lora_merge(self), requires_grad=self.w0.requires_grad)
            self.w_a = self.w_b = None

    def __call__(self, x: Tensor, use_adapters: bool = True) -> Tensor:
        if use_adapters and self.has_adapters:
            return lora_forward(x, self, self.stride, self.padding)
        return ad.conv2d(x, self.w0, stride=self.stride, padding=self.padding)


def lora_forward(x: Tensor, layer: LoraConvLayer, stride: int, padding: int) -> Tensor:
    base = ad.conv2d(x, layer.w0, stride=stride, padding=padding)
    if not layer.has_adapters:
        return base
    if layer.w_a.shape[1:] != layer.w0.shape[1:] or layer.w_b.shape != (
        layer.w0.shape[0], layer.w_a.shape[0], 1, 1
    ):
        raise ad.ShapeError(
            f"adapter shapes A{layer.w_a.shape} B{layer.w_b.shape} inconsistent with W0{layer.w0.shape}"
        )
    low = ad.conv2d(x, layer.w_a, stride=stride, padding=padding)
    return base + ad.conv2d(low, layer.w_b)


def lora_merge(layer: LoraConvLayer) -> np.ndarray:
    """``w0[o,i,u,v] + sum_r w_b[o,r,0,0] * w_a[r,i,u,v]``."""
    if not layer.has_adapters:
        return layer.w0.data.copy()
    delta = np.tensordot(layer.w_b.data[:, :, 0, 0], layer.w_a.data, axes=([1], [0]))
    return layer.w0.data + delta


def adapter_parameter_count(layer: LoraConvLayer) -> int:
    c_out, c_in, k, _ = layer.w0.shape
    return layer.rank * c_in * k * k + c_out * layer.rank


@dataclass
class BackboneOutput:
    stage_features: list[Tensor]  # each [N*F, C_s, H_s, W_s]
    embedding: Tensor  # [N, embed_dim], mean over frames then batch-norm, not unit-norm
    num_frames: int = 1


class Backbone:
    """Each stage halves the resolution with 2x2 average pooling, then applies
    ``blocks_per_stage`` 3x3 convs with ReLU. A global-average-pool plus linear
    projection gives per-frame embeddings; these are averaged over the frames
    of a sequence and passed through a feature batch-norm."""

    BN_MOMENTUM = 0.1
    BN_EPS = 1e-5

    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.layers: dict[str, LoraConvLayer] = {}
        c_prev = cfg.in_channels
        k = cfg.kernel_size
        for s, c in enumerate(cfg.stage_channels):
            for j in range(cfg.blocks_per_stage):
                c_in = c_prev if j == 0 else c
                std = np.sqrt(2.0 / (c_in * k * k))
                w = Tensor(rng.normal(0.0, std, size=(c, c_in, k, k)), requires_grad=True)
                self.layers[f"stage{s}.conv{j}"] = LoraConvLayer(w, stride=1, padding=(k - 1) // 2)
            c_prev = c
        self.embed = Tensor(
            rng.normal(0.0, 1.0 / np.sqrt(c_prev), size=(c_prev, cfg.embed_dim)),
            requires_grad=True,
        )
        # affine-free feature batch-norm on the embedding
        self.bn_mean = np.zeros(cfg.embed_dim)
        self.bn_var = np.ones(cfg.embed_dim)
        self.training = False

    # -- adapters -----------------------------------------------------------
    def attach_lora(
        self, rank: int, rng: np.random.Generator, layer_names: Sequence[str] | None = None
    ) -> dict[str, int]:
        """Attach adapters; the rank of each layer is capped at ``C_in - 1``.

        Returns the rank actually used per layer.
        """
        names = list(layer_names) if layer_names is not None else self.cfg.layer_names
        used = {}
        for name in names:
            if name not in self.layers:
                raise KeyError(f"no conv layer named {name!r}")
            layer = self.layers[name]
            r = min(rank, layer.w0.shape[1] - 1)
            layer.attach(r, rng)
            used[name] = r
        return used

    def merge_lora(self) -> None:
        for layer in self.layers.values():
            layer.merge()

    @property
    def has_adapters(self) -> bool:
        return any(l.has_adapters for l in self.layers.values())

    # -- parameters ---------------------------------------------------------
    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for name, layer in self.layers.items():
            out[f"backbone.{name}"] = layer.w0
            if layer.has_adapters:
                out[f"lora.{name}.A"] = layer.w_a
                out[f"lora.{name}.B"] = layer.w_b
        out["backbone.embed"] = self.embed
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        """Non-trainable running statistics."""
        return {"backbone.bn_mean": self.bn_mean, "backbone.bn_var": self.bn_var}

    def base_parameters(self) -> list[Tensor]:
        return [l.w0 for l in self.layers.values()] + [self.embed]

    def adapter_parameters(self) -> list[Tensor]:
        ps = []
        for layer in self.layers.values():
            if layer.has_adapters:
                ps += [layer.w_a, layer.w_b]
        return ps

    def load_state(self, entries: dict[str, np.ndarray], rng: np.random.Generator | None = None):
        for name, layer in self.layers.items():
            layer.w0 = Tensor(entries[f"backbone.{name}"], requires_grad=layer.w0.requires_grad)
            a, b = entries.get(f"lora.{name}.A"), entries.get(f"lora.{name}.B")
            if a is not None and b is not None:
                layer.w_a = Tensor(a, requires_grad=True)
                layer.w_b = Tensor(b, requires_grad=True)
            else:
                layer.w_a = layer.w_b = None
        self.embed = Tensor(entries["backbone.embed"], requires_grad=self.embed.requires_grad)
        if "backbone.bn_mean" in entries:
            self.bn_mean = np.array(entries["backbone.bn_mean"], dtype=np.float64)
            self.bn_var = np.array(entries["backbone.bn_var"], dtype=np.float64)

    # -- forward --------------------------------------------------------------
    def stage(self, h: Tensor, s: int, use_adapters: bool = True) -> Tensor:
        h = avg_pool2(h)
        for j in range(self.cfg.blocks_per_stage):
            h = ad.relu(self.layers[f"stage{s}.conv{j}"](h, use_adapters))
        return h

    def project(self, h: Tensor, group: int = 1) -> Tensor:
        """[N, C, H, W] -> [N // group, embed_dim]: global average pooling,
        linear projection, mean over each run of ``group`` consecutive rows
        (the frames of one sequence), then feature batch-norm.

        In training mode (and with more than one sequence) the batch-norm uses
        batch statistics and updates the running ones; otherwise it uses the
        running statistics.
        """
        z = ad.linear(ad.mean(h, axis=(2, 3)), self.embed)
        z = ad.mean(z.reshape(-1, group, z.shape[-1]), axis=1)
        if self.training and z.shape[0] > 1:
            mu = ad.mean(z, axis=0, keepdims=True)
            d = z - mu
            var = ad.mean(d * d, axis=0, keepdims=True)
            m = self.BN_MOMENTUM
            self.bn_mean = (1 - m) * self.bn_mean + m * mu.data[0]
            self.bn_var = (1 - m) * self.bn_var + m * var.data[0]
            return d / ad.sqrt(var + self.BN_EPS)
        return (z - self.bn_mean) / np.sqrt(self.bn_var + self.BN_EPS)


def avg_pool2(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ad.ShapeError(f"avg_pool2 needs even spatial size, got {h}x{w}")
    return ad.mean(x.reshape(n, c, h // 2, 2, w // 2, 2), axis=(3, 5))


def frames_to_nchw(frames) -> tuple[Tensor, int, int]:
    """[F,H,W,3] or [B,F,H,W,3] -> ([B*F, 3, H, W], B, F)."""
    arr = frames.frames if hasattr(frames, "frames") else frames
    x = arr if isinstance(arr, Tensor) else Tensor._wrap(np.asarray(arr, dtype=np.float64))
    if x.ndim == 4:
        x = x.reshape((1,) + x.shape)
    if x.ndim != 5 or x.shape[-1] != 3:
        raise ad.ShapeError(f"frames must be [B,F,H,W,3] or [F,H,W,3], got {x.shape}")
    b, f, h, w, c = x.shape
    return ad.transpose(x.reshape(b * f, h, w, c), (0, 3, 1, 2)), b, f


def backbone_forward(frames, backbone: Backbone, mode: str = "lora") -> BackboneOutput:
    """Run every frame independently through all stages.

    ``mode`` is ``"lora"`` (adapters active when present) or ``"plain"``
    (``w0`` only).
    """
    if mode not in ("plain", "lora"):
        raise ValueError(f"mode must be 'plain' or 'lora', got {mode!r}")
    x, b, f = frames_to_nchw(frames)
    hw = backbone.cfg.input_hw
    if x.shape[2:] != (hw, hw):
        raise ad.ShapeError(f"frames are {x.shape[2]}x{x.shape[3]}, config expects {hw}x{hw}")
    feats = []
    h = x
    for s in range(len(backbone.cfg.stage_channels)):
        h = backbone.stage(h, s, use_adapters=(mode == "lora"))
        feats.append(h)
    return BackboneOutput(feats, backbone.project(h, group=f), f)
