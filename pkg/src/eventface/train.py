"""Emulated backbone pretraining and the two progressive training stages."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import SyntheticDataset, make_pretrain_images
from .loss import AdaFaceHead, adaface_loss
from .model import EventFaceModel, ModelConfig, check_merged, set_stage

__all__ = [
    "TrainConfig",
    "SGD",
    "TrainResult",
    "pretrain_backbone",
    "train_stage1",
    "train_stage2",
    "dataset_loss",
]

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Optimisation settings. Defaults are desk-scale (synthetic data, small
    backbone); :meth:`reference` gives the full-scale schedule."""

    lr: float = 0.01
    batch_size: int = 8
    epochs_stage1: int = 30
    epochs_stage2: int = 10
    seed: int = 0
    pretrain_ids: int = 64
    pretrain_images_per_id: int = 12
    pretrain_epochs: int = 8
    pretrain_lr: float = 0.05

    def __post_init__(self):
        for name in ("lr", "batch_size", "pretrain_lr"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("epochs_stage1", "epochs_stage2", "pretrain_epochs", "pretrain_ids"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def reference(cls, **overrides) -> "TrainConfig":
        """Full-scale schedule: SGD at lr 5e-5, batch 80, 60 + 20 epochs."""
        return cls(**{"lr": 5e-5, "batch_size": 80, "epochs_stage1": 60, "epochs_stage2": 20, **overrides})


class SGD:
    """Plain SGD; only parameters with ``requires_grad`` and a gradient move."""

    def __init__(self, params, lr: float):
        self.params = list(params)
        self.lr = lr

    def step(self) -> None:
        for p in self.params:
            if p.requires_grad and p.grad is not None:
                p.data -= self.lr * p.grad

    def zero_grad(self) -> None:
        ad.zero_grads(self.params)


@dataclass
class TrainResult:
    model: EventFaceModel
    log: list[tuple[int, int, float]] = field(default_factory=list)

    def checkpoint(self) -> dict[str, np.ndarray]:
        return self.model.state()

    def log_csv(self) -> str:
        rows = ["epoch,step,loss"] + [f"{e},{s},{l!r}" for e, s, l in self.log]
        return "\n".join(rows) + "\n"


def _run_epochs(
    model: EventFaceModel,
    frames: np.ndarray,
    labels: np.ndarray,
    epochs: int,
    lr: float,
    batch_size: int,
    seed: int,
    tag: int,
    log: list,
) -> None:
    if len(labels) == 0:
        raise ValueError("cannot train on an empty dataset")
    opt = SGD(model.trainable_parameters(), lr)
    # the embedding norm belongs to the backbone: its statistics only adapt
    # while backbone weights (or their adapters) train, not in stage 2
    model.backbone.training = model.stage != "stage2"
    step = 0
    for epoch in range(epochs):
        order = np.random.default_rng([seed, tag, epoch]).permutation(len(labels))
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            opt.zero_grad()
            loss = adaface_loss(model.embed(frames[idx]), labels[idx], model.head)
            loss.backward()
            opt.step()
            model.head.renormalize()
            log.append((epoch, step, loss.item()))
            step += 1
        logger.info("tag %d epoch %d loss %.4f", tag, epoch, log[-1][2])
    model.backbone.training = False


def _relabel(labels: np.ndarray) -> tuple[np.ndarray, int]:
    ids = np.unique(labels)
    return np.searchsorted(ids, labels), len(ids)


def pretrain_backbone(model_cfg: ModelConfig, cfg: TrainConfig) -> EventFaceModel:
    """Emulate an intensity-image pretrained backbone: train the plain network
    on single-image "sequences" of a separate identity population."""
    images, labels = make_pretrain_images(
        cfg.pretrain_ids, cfg.pretrain_images_per_id, cfg.seed + 10_000, model_cfg.backbone.input_hw
    )
    model = EventFaceModel(model_cfg, num_ids=max(cfg.pretrain_ids, 1), seed=cfg.seed)
    set_stage(model, "plain")
    if cfg.pretrain_epochs and cfg.pretrain_ids:
        log: list = []
        _run_epochs(
            model, images[:, None], labels, cfg.pretrain_epochs, cfg.pretrain_lr,
            max(cfg.batch_size, 16), cfg.seed, 0, log,
        )
    return model


def _fresh_head(model: EventFaceModel, num_ids: int, seed: int) -> None:
    cfg = model.cfg
    model.head = AdaFaceHead(
        cfg.backbone.embed_dim, num_ids, np.random.default_rng([seed, 7]), cfg.margin, cfg.scale
    )


def train_stage1(dataset: SyntheticDataset, cfg: TrainConfig, model: EventFaceModel) -> TrainResult:
    """Freeze the backbone and train the conv adapters and a new head on the
    training identities; adapters are merged into the backbone at the end."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    labels, n_ids = _relabel(dataset.labels)
    _fresh_head(model, n_ids, cfg.seed)
    set_stage(model, "stage1")
    result = TrainResult(model)
    _run_epochs(
        model, dataset.frames, labels, cfg.epochs_stage1, cfg.lr, cfg.batch_size, cfg.seed, 1,
        result.log,
    )
    model.backbone.merge_lora()
    model.stage = "plain"
    return result


def train_stage2(
    stage1_state: dict[str, np.ndarray],
    dataset: SyntheticDataset,
    cfg: TrainConfig,
    model_cfg: ModelConfig,
) -> TrainResult:
    """Load a merged stage-1 checkpoint, freeze it, and train the motion
    encoders, STM blocks and head."""
    check_merged(stage1_state)
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    labels, n_ids = _relabel(dataset.labels)
    model = EventFaceModel(model_cfg, num_ids=n_ids, seed=cfg.seed)
    model.load_state(stage1_state)
    if model.head.num_ids != n_ids:
        _fresh_head(model, n_ids, cfg.seed)
    model._rng = np.random.default_rng([cfg.seed, 2])
    set_stage(model, "stage2")
    result = TrainResult(model)
    _run_epochs(
        model, dataset.frames, labels, cfg.epochs_stage2, cfg.lr, cfg.batch_size, cfg.seed, 2,
        result.log,
    )
    return result


def dataset_loss(model: EventFaceModel, dataset: SyntheticDataset, batch_size: int = 32) -> float:
    """Mean loss over the dataset with frozen norm statistics."""
    labels, _ = _relabel(dataset.labels)
    total = 0.0
    model.backbone.training = False
    with ad.no_grad():
        for i in range(0, len(labels), batch_size):
            sl = slice(i, i + batch_size)
            loss = adaface_loss(model.embed(dataset.frames[sl]), labels[sl], model.head, update_stats=False)
            total += loss.item() * len(labels[sl])
    return total / len(labels)
