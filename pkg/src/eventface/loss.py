"""Quality-adaptive margin softmax loss (AdaFace form).

The feature norm serves as an image-quality proxy. With running mean and
std of the batch norms,

    q = clip((|z| - mean) / (std + eps) * h, -1, 1)
    g_angle = -m * q,  g_add = m * q + m
    target logit     = s * (cos(clip(theta_y + g_angle, eps, pi - eps)) - g_add)
    non-target logit = s * cos(theta_j)

followed by softmax cross-entropy. Norms enter ``q`` without gradient.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = ["AdaFaceHead", "adaface_loss", "l2_normalize", "cross_entropy"]


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    norm = ad.sqrt(ad.tsum(x * x, axis=axis, keepdims=True) + eps * eps)
    return x / norm


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy of [B, K] logits."""
    peak = logits.data.max(axis=1, keepdims=True)
    shifted = logits - peak
    lse = ad.log(ad.tsum(ad.exp(shifted), axis=1))
    picked = shifted[np.arange(len(labels)), labels]
    return ad.mean(lse - picked)


class AdaFaceHead:
    """Class-centre matrix [embed_dim, num_ids] with unit-norm columns plus
    running statistics of embedding norms."""

    def __init__(
        self,
        embed_dim: int,
        num_ids: int,
        rng: np.random.Generator,
        margin: float = 0.5,
        scale: float = 32.0,
        h: float = 0.333,
        momentum: float = 0.01,
        eps: float = 1e-3,
    ):
        if scale <= 0:
            raise ValueError("scale must be positive")
        if not 0 <= margin < 1:
            raise ValueError("margin must lie in [0, 1)")
        w = rng.normal(0.0, 1.0, size=(embed_dim, num_ids))
        self.weight = Tensor(w / np.linalg.norm(w, axis=0, keepdims=True), requires_grad=True)
        self.margin = float(margin)
        self.scale = float(scale)
        self.h = float(h)
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.norm_mean = 20.0
        self.norm_std = 100.0

    @property
    def num_ids(self) -> int:
        return self.weight.shape[1]

    def renormalize(self) -> None:
        self.weight.data /= np.linalg.norm(self.weight.data, axis=0, keepdims=True)

    def update_stats(self, norms: np.ndarray) -> None:
        norms = np.clip(norms, 1e-3, 100.0)
        std = float(norms.std(ddof=1)) if len(norms) > 1 else 0.0
        a = self.momentum
        self.norm_mean = a * float(norms.mean()) + (1 - a) * self.norm_mean
        self.norm_std = a * std + (1 - a) * self.norm_std

    def quality(self, norms: np.ndarray) -> np.ndarray:
        norms = np.clip(norms, 1e-3, 100.0)
        q = (norms - self.norm_mean) / (self.norm_std + self.eps) * self.h
        return np.clip(q, -1.0, 1.0)

    def named(self) -> dict[str, np.ndarray]:
        return {
            "head.weight": self.weight.data,
            "head.norm_mean": np.array(self.norm_mean),
            "head.norm_std": np.array(self.norm_std),
        }

    def load(self, entries: dict[str, np.ndarray]) -> None:
        self.weight = Tensor(entries["head.weight"], requires_grad=self.weight.requires_grad)
        self.norm_mean = float(entries["head.norm_mean"])
        self.norm_std = float(entries["head.norm_std"])


def adaface_loss(
    embeddings: Tensor,
    labels,
    head: AdaFaceHead,
    update_stats: bool = True,
    quality: np.ndarray | None = None,
) -> Tensor:
    """Mean loss over a batch of raw (unnormalised) embeddings [B, D].

    ``quality`` overrides the norm proxy (useful to pin it, e.g. to 0);
    otherwise running stats are updated from this batch first when
    ``update_stats`` is set.
    """
    labels = np.asarray(labels, dtype=np.intp)
    if embeddings.ndim != 2 or embeddings.shape[0] == 0:
        raise ValueError("adaface_loss needs a non-empty [B, D] batch")
    if len(labels) != embeddings.shape[0]:
        raise ValueError("one label per embedding required")
    if labels.min() < 0 or labels.max() >= head.num_ids:
        raise ValueError(f"labels must lie in [0, {head.num_ids})")

    if quality is None:
        norms = np.linalg.norm(embeddings.data, axis=1)
        if update_stats:
            head.update_stats(norms)
        quality = head.quality(norms)
    quality = np.asarray(quality, dtype=np.float64)

    feats = l2_normalize(embeddings, axis=1)
    centres = l2_normalize(head.weight, axis=0)
    cosine = ad.linear(feats, centres)  # [B, K]
    rows = np.arange(len(labels))
    onehot = np.zeros(cosine.shape)
    onehot[rows, labels] = 1.0

    m, eps = head.margin, head.eps
    tiny = 1e-7
    target_cos = ad.clip(cosine[rows, labels], -1.0 + tiny, 1.0 - tiny)
    theta = ad.arccos(target_cos)
    theta_m = ad.clip(theta + (-m * quality), eps, math.pi - eps)
    target = ad.cos(theta_m) - (m * quality + m)
    # swap the target column for the margin-adjusted value
    adjusted = cosine * (1.0 - onehot) + ad.mul(onehot, target.reshape(-1, 1))
    return cross_entropy(adjusted * head.scale, labels)
