"""Full network: backbone (+adapters) with one motion encoder and one STM
block per stage, plus the margin-softmax head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .backbone import Backbone, BackboneConfig, frames_to_nchw
from .loss import AdaFaceHead
from .motion import MpeParams, mpe_sequence
from .stm import StmParams, stm_block

__all__ = ["ModelConfig", "EventFaceModel", "set_stage", "extract_embedding", "UnmergedCheckpointError"]


class UnmergedCheckpointError(ValueError):
    pass


@dataclass
class ModelConfig:
    backbone: BackboneConfig
    num_frames: int = 4
    lora_rank: int = 6
    lora_layers: tuple[str, ...] | None = None
    mpe_kernels: tuple[int, int] = (7, 3)
    mpe_reduction: int = 2
    shift: str = "octa"
    arrangement: str = "interleaved"
    wkv_method: str = "scan"
    mu_r: float = 0.5
    mu_k: float = 0.5
    mu_v: float = 0.5
    mu_cm: float = 0.5
    stm_out_std: float = 0.02
    margin: float = 0.5
    scale: float = 32.0

    def stm_hyper(self) -> dict:
        return dict(
            mu_r=self.mu_r, mu_k=self.mu_k, mu_v=self.mu_v, mu_cm=self.mu_cm,
            shift=self.shift, arrangement=self.arrangement, wkv_method=self.wkv_method,
        )


class EventFaceModel:
    """``stage`` is one of ``"plain"`` (backbone only), ``"stage1"`` (adapters
    trainable) or ``"stage2"`` (merged backbone + motion encoder + STM)."""

    def __init__(self, cfg: ModelConfig, num_ids: int, seed: int):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.backbone = Backbone(cfg.backbone, rng)
        self.head = AdaFaceHead(cfg.backbone.embed_dim, num_ids, rng, cfg.margin, cfg.scale)
        self.mpe: list[MpeParams] | None = None
        self.stm: list[StmParams] | None = None
        self.stage = "plain"
        self._rng = np.random.default_rng([seed, 1])

    # -- structure ----------------------------------------------------------
    def attach_lora(self) -> dict[str, int]:
        return self.backbone.attach_lora(self.cfg.lora_rank, self._rng, self.cfg.lora_layers)

    def add_stage2_modules(self, seed: int | None = None) -> None:
        rng = self._rng if seed is None else np.random.default_rng(seed)
        self.mpe, self.stm = [], []
        for c in self.cfg.backbone.stage_channels:
            self.mpe.append(
                MpeParams.init(c, self.cfg.num_frames, rng, self.cfg.mpe_kernels, self.cfg.mpe_reduction)
            )
            self.stm.append(StmParams.init(c, rng, out_std=self.cfg.stm_out_std, **self.cfg.stm_hyper()))

    # -- parameters -----------------------------------------------------------
    def named_tensors(self) -> dict[str, Tensor]:
        out = dict(self.backbone.named_parameters())
        if self.mpe is not None:
            for s, p in enumerate(self.mpe):
                out.update({f"mpe.stage{s}.{k}": v for k, v in p.named().items()})
            for s, p in enumerate(self.stm):
                out.update({f"stm.stage{s}.{k}": v for k, v in p.named().items()})
        out["head.weight"] = self.head.weight
        return out

    def trainable_parameters(self) -> list[Tensor]:
        return [t for t in self.named_tensors().values() if t.requires_grad]

    def state(self) -> dict[str, np.ndarray]:
        entries = {k: v.data for k, v in self.named_tensors().items()}
        entries.update(self.backbone.buffers())
        entries.update(self.head.named())
        return entries

    def load_state(self, entries: dict[str, np.ndarray]) -> None:
        self.backbone.load_state(entries)
        self.head.load(entries)
        if any(k.startswith("mpe.") for k in entries):
            if self.mpe is None:
                self.add_stage2_modules(seed=0)
            for s, p in enumerate(self.mpe):
                for k in p.named():
                    setattr(p, k, Tensor(entries[f"mpe.stage{s}.{k}"], requires_grad=True))
            for s, p in enumerate(self.stm):
                for k in p.tensors:
                    p.tensors[k] = Tensor(entries[f"stm.stage{s}.{k}"], requires_grad=True)
            self.stage = "stage2"
        else:
            self.mpe = self.stm = None
            self.stage = "stage1" if self.backbone.has_adapters else "plain"

    # -- forward --------------------------------------------------------------
    def embed(self, frames) -> Tensor:
        """Raw (unnormalised) sequence embeddings [B, D] from [B, F, H, W, 3]."""
        x, b, f = frames_to_nchw(frames)
        hw = self.cfg.backbone.input_hw
        if x.shape[2:] != (hw, hw):
            raise ad.ShapeError(f"frames are {x.shape[2]}x{x.shape[3]}, config expects {hw}x{hw}")
        h = x
        use_stm = self.stage == "stage2" and self.mpe is not None
        for s in range(len(self.cfg.backbone.stage_channels)):
            h = self.backbone.stage(h, s)
            if use_stm:
                h = self._modulate(h, s, b, f)
        return self.backbone.project(h, group=f)

    def _modulate(self, h: Tensor, s: int, b: int, f: int) -> Tensor:
        _, c, hh, ww = h.shape
        feats = h.reshape(b, f, c, hh, ww)
        motion = mpe_sequence(feats, self.mpe[s])  # [B, F-1, C, H, W]
        # motion of pair (f-1, f) sits at frame f; frame 0 has no predecessor
        pad = Tensor._wrap(np.zeros((b, 1, c, hh, ww)))
        motion = ad.concat([pad, motion], axis=1)
        tok_s = ad.transpose(feats, (0, 1, 3, 4, 2))
        tok_m = ad.transpose(motion, (0, 1, 3, 4, 2))
        out_s, _ = stm_block(tok_s, tok_m, self.stm[s])
        return ad.transpose(out_s, (0, 1, 4, 2, 3)).reshape(b * f, c, hh, ww)


def set_stage(model: EventFaceModel, stage: str) -> None:
    """Configure which parameters train.

    ``stage1``: adapters (attached if absent) and head train, everything else
    frozen, no motion/STM modules. ``stage2``: adapters merged, whole backbone
    frozen, motion encoder, STM and head train.
    """
    bb = model.backbone
    if stage == "stage1":
        if not bb.has_adapters:
            model.attach_lora()
        model.mpe = model.stm = None
        for t in bb.base_parameters():
            t.requires_grad = False
        for t in bb.adapter_parameters():
            t.requires_grad = True
    elif stage == "stage2":
        bb.merge_lora()
        for t in bb.base_parameters():
            t.requires_grad = False
        if model.mpe is None:
            model.add_stage2_modules()
        for p in model.mpe:
            for t in p.named().values():
                t.requires_grad = True
        for p in model.stm:
            for t in p.tensors.values():
                t.requires_grad = True
    elif stage == "plain":
        for t in bb.base_parameters():
            t.requires_grad = True
    else:
        raise ValueError(f"unknown stage {stage!r}")
    model.head.weight.requires_grad = True
    model.stage = stage


def extract_embedding(frames, model: EventFaceModel, batch_size: int = 32) -> np.ndarray:
    """Unit-norm embeddings, [D] for one sequence or [B, D] for a batch."""
    arr = frames.frames if hasattr(frames, "frames") else np.asarray(frames)
    single = arr.ndim == 4
    if single:
        arr = arr[None]
    outs = []
    was_training = model.backbone.training
    model.backbone.training = False
    try:
        with ad.no_grad():
            for i in range(0, len(arr), batch_size):
                outs.append(model.embed(arr[i : i + batch_size]).data)
    finally:
        model.backbone.training = was_training
    emb = np.concatenate(outs, axis=0)
    emb = emb / np.linalg.norm(emb, axis=1, keepdims=True)
    return emb[0] if single else emb


def check_merged(entries: dict[str, np.ndarray]) -> None:
    bad = [k for k in entries if k.startswith("lora.")]
    if bad:
        raise UnmergedCheckpointError(f"checkpoint still holds adapter entries, e.g. {bad[0]!r}")
