"""Motion prompt encoder: differences of differently smoothed adjacent-frame
features, fused across the pair axis by a 1x1 conv."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = ["MpeParams", "motion_map", "mpe_pairwise", "mpe_sequence", "InsufficientFramesError"]


class InsufficientFramesError(ValueError):
    pass


@dataclass
class MpeParams:
    """Weights of one encoder instance.

    ``temporal`` maps the ``(F-1) * C_r`` stacked motion channels to
    ``(F-1) * C_out`` so each fused motion map has the width of the stream it
    is paired with.
    """

    reduce: Tensor  # [C_r, C, 1, 1]
    dw_large: Tensor  # [C_r, 1, kL, kL]
    dw_small: Tensor  # [C_r, 1, kS, kS]
    temporal: Tensor  # [(F-1)*C_out, (F-1)*C_r, 1, 1]

    def __post_init__(self):
        kl, ks = self.dw_large.shape[-1], self.dw_small.shape[-1]
        if not (kl > ks and kl % 2 == 1 and ks % 2 == 1):
            raise ValueError(f"need odd kernels with large > small, got {kl}, {ks}")
        if self.reduce.shape[0] > self.reduce.shape[1]:
            raise ValueError("reduced width C_r must not exceed C")

    @classmethod
    def init(
        cls,
        channels: int,
        num_frames: int,
        rng: np.random.Generator,
        kernels: tuple[int, int] = (7, 3),
        reduction: int = 2,
        out_channels: int | None = None,
    ) -> "MpeParams":
        c_r = max(1, channels // reduction)
        c_out = channels if out_channels is None else out_channels
        pairs = max(1, num_frames - 1)
        kl, ks = kernels

        def param(shape, std):
            return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)

        return cls(
            reduce=param((c_r, channels, 1, 1), 1.0 / np.sqrt(channels)),
            dw_large=param((c_r, 1, kl, kl), 1.0 / kl),
            dw_small=param((c_r, 1, ks, ks), 1.0 / ks),
            temporal=param((pairs * c_out, pairs * c_r, 1, 1), 1.0 / np.sqrt(pairs * c_r)),
        )

    def named(self) -> dict[str, Tensor]:
        return {
            "reduce": self.reduce,
            "dw_large": self.dw_large,
            "dw_small": self.dw_small,
            "temporal": self.temporal,
        }

    @property
    def kernels(self) -> tuple[int, int]:
        return self.dw_large.shape[-1], self.dw_small.shape[-1]


def motion_map(x_prev: Tensor, x_next: Tensor, reduce: Tensor, dw_next: Tensor, dw_prev: Tensor) -> Tensor:
    """``dw_next(reduce(x_next)) - dw_prev(reduce(x_prev))`` on [N, C, H, W] maps."""
    if x_prev.shape != x_next.shape:
        raise ad.ShapeError(f"adjacent frames differ in shape: {x_prev.shape} vs {x_next.shape}")
    a = ad.depthwise_conv2d(ad.conv2d(x_next, reduce), dw_next)
    b = ad.depthwise_conv2d(ad.conv2d(x_prev, reduce), dw_prev)
    return a - b


def mpe_pairwise(x_f: Tensor, x_f1: Tensor, params: MpeParams) -> Tensor:
    """Motion map of one adjacent pair; accepts [C, H, W] or [N, C, H, W]."""
    single = x_f.ndim == 3
    if single:
        x_f = x_f.reshape((1,) + x_f.shape)
        x_f1 = x_f1.reshape((1,) + x_f1.shape)
    m = motion_map(x_f, x_f1, params.reduce, params.dw_large, params.dw_small)
    return m.reshape(m.shape[1:]) if single else m


def mpe_sequence(features: Tensor, params: MpeParams) -> Tensor:
    """Fused motion prompts for all adjacent pairs.

    ``features`` is [B, F, C, H, W] (or [F, C, H, W]); returns
    [B, F-1, C_out, H, W] (or [F-1, C_out, H, W]).
    """
    single = features.ndim == 4
    if single:
        features = features.reshape((1,) + features.shape)
    b, f, c, h, w = features.shape
    if f < 2:
        raise InsufficientFramesError(f"motion prompts need at least 2 frames, got {f}")
    pairs = f - 1
    if params.temporal.shape[1] != pairs * params.reduce.shape[0]:
        raise ad.ShapeError(
            f"temporal aggregation expects {params.temporal.shape[1] // params.reduce.shape[0]} "
            f"pairs, got {pairs}"
        )
    prev = features[:, :-1].reshape(b * pairs, c, h, w)
    nxt = features[:, 1:].reshape(b * pairs, c, h, w)
    m = motion_map(prev, nxt, params.reduce, params.dw_large, params.dw_small)
    c_r = m.shape[1]
    stacked = m.reshape(b, pairs * c_r, h, w)
    fused = ad.conv2d(stacked, params.temporal)
    out = fused.reshape(b, pairs, -1, h, w)
    return out.reshape(out.shape[1:]) if single else out
