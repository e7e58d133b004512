"""Synthetic stand-in for a face event dataset.

Each identity is a smooth random log-intensity pattern (a shared face-like
template plus identity-specific blobs). A sequence moves the pattern
rigidly (translation + rotation) in front of the sensor; the resulting
intensity video is converted to events and then to frame sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .events import EventStream, build_sequence, resize_bilinear, simulate_events

__all__ = [
    "SynthConfig",
    "IdentityPattern",
    "SyntheticDataset",
    "identity_pattern",
    "render_log_intensity",
    "simulate_sequence",
    "synthesize_streams",
    "make_synthetic_dataset",
    "make_pretrain_images",
]

# shared template: (cx, cy, sigma, amplitude) in normalised coordinates
_TEMPLATE = (
    (0.0, 0.0, 0.55, 0.6),
    (-0.28, -0.2, 0.09, -0.9),
    (0.28, -0.2, 0.09, -0.9),
    (0.0, 0.35, 0.12, -0.6),
)


@dataclass
class SynthConfig:
    sensor_hw: int = 64
    duration_us: int = 200_000
    frame_step_us: int = 2_000
    contrast_threshold: float = 0.15
    blobs: int = 8
    speed: tuple[float, float] = (1.0, 2.5)  # normalised units per second
    spin: float = 0.3  # max |angular velocity|, rad/s
    direction_spread: float = 0.3  # max deviation (rad) of motion from the horizontal axis
    pose_jitter: float = 0.08
    base_log_intensity: float = 0.0
    sigma_range: tuple[float, float] = (0.06, 0.2)
    amplitude_range: tuple[float, float] = (0.5, 1.2)
    template: bool = True
    pattern_std: float | None = 0.5  # rescale each identity's log-intensity field to this std
    gain_range: tuple[float, float] = (0.7, 1.3)  # per-sequence contrast gain (session variation)


@dataclass
class IdentityPattern:
    centers: np.ndarray  # [K, 2]
    sigmas: np.ndarray  # [K]
    amplitudes: np.ndarray  # [K]


def identity_pattern(rng: np.random.Generator, cfg: "SynthConfig") -> IdentityPattern:
    blobs = cfg.blobs
    centers = rng.uniform(-0.55, 0.55, size=(blobs, 2))
    sigmas = rng.uniform(*cfg.sigma_range, size=blobs)
    amps = rng.choice([-1.0, 1.0], size=blobs) * rng.uniform(*cfg.amplitude_range, size=blobs)
    if cfg.template:
        t = np.array(_TEMPLATE)
        centers = np.concatenate([t[:, :2], centers])
        sigmas = np.concatenate([t[:, 2], sigmas])
        amps = np.concatenate([t[:, 3], amps])
    pattern = IdentityPattern(centers, sigmas, amps)
    if cfg.pattern_std is not None:
        # equalise global contrast so identities differ only in structure
        std = render_log_intensity(pattern, cfg.sensor_hw, np.zeros(2), 0.0).std()
        pattern.amplitudes = amps * (cfg.pattern_std / std)
    return pattern


def render_log_intensity(
    pattern: IdentityPattern, hw: int, shift: np.ndarray, angle: float, base: float = 0.0
) -> np.ndarray:
    """Log intensity of the pattern seen through a rigid motion on an hw x hw sensor."""
    coords = (np.arange(hw) + 0.5) / hw * 2.0 - 1.0
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    # sensor point -> pattern frame (inverse rigid transform)
    c, s = np.cos(angle), np.sin(angle)
    px = c * (xx - shift[0]) + s * (yy - shift[1])
    py = -s * (xx - shift[0]) + c * (yy - shift[1])
    d2 = (px[..., None] - pattern.centers[:, 0]) ** 2 + (py[..., None] - pattern.centers[:, 1]) ** 2
    field_ = np.exp(-d2 / (2.0 * pattern.sigmas**2)) @ pattern.amplitudes
    return base + field_


def _trajectory(rng: np.random.Generator, cfg: SynthConfig):
    start = rng.uniform(-cfg.pose_jitter, cfg.pose_jitter, size=2)
    theta0 = rng.uniform(-0.15, 0.15)
    direction = rng.choice([0.0, np.pi]) + rng.uniform(-cfg.direction_spread, cfg.direction_spread)
    speed = rng.uniform(*cfg.speed)
    velocity = speed * np.array([np.cos(direction), np.sin(direction)])
    spin = rng.uniform(-cfg.spin, cfg.spin)
    return start, theta0, velocity, spin


def simulate_sequence(pattern: IdentityPattern, rng: np.random.Generator, cfg: SynthConfig) -> EventStream:
    start, theta0, velocity, spin = _trajectory(rng, cfg)
    gain = rng.uniform(*cfg.gain_range)
    times = np.arange(0, cfg.duration_us + cfg.frame_step_us, cfg.frame_step_us)
    video = np.empty((len(times), cfg.sensor_hw, cfg.sensor_hw))
    for i, t in enumerate(times):
        sec = t * 1e-6
        # centre the motion on the window so the pattern stays in view
        mid = sec - cfg.duration_us * 0.5e-6
        video[i] = gain * render_log_intensity(
            pattern, cfg.sensor_hw, start + velocity * mid, theta0 + spin * mid
        ) + cfg.base_log_intensity
    return simulate_events(np.exp(video), times, cfg.contrast_threshold)


@dataclass
class SyntheticDataset:
    frames: np.ndarray  # [N, F, hw, hw, 3]
    labels: np.ndarray  # [N]
    sample_ids: list[str]
    splits: np.ndarray  # [N] of "train" / "test"
    delta_t_us: int = 50_000

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, split: str) -> "SyntheticDataset":
        idx = np.nonzero(self.splits == split)[0]
        return SyntheticDataset(
            self.frames[idx], self.labels[idx], [self.sample_ids[i] for i in idx],
            self.splits[idx], self.delta_t_us,
        )

    def identities(self) -> set[int]:
        return set(self.labels.tolist())


def _split_of(identity: int, num_ids: int, test_ids: int) -> str:
    return "test" if identity >= num_ids - test_ids else "train"


def synthesize_streams(
    num_ids: int, sequences_per_id: int, seed: int, test_ids: int = 2, cfg: SynthConfig | None = None
):
    """Yield ``(sample_id, identity, split, EventStream)`` in a fixed order."""
    if num_ids < 2:
        raise ValueError("need at least two identities")
    if not 0 <= test_ids < num_ids:
        raise ValueError("test_ids must leave at least one training identity")
    cfg = cfg or SynthConfig()
    for i in range(num_ids):
        pattern = identity_pattern(np.random.default_rng([seed, 0, i]), cfg)
        for j in range(sequences_per_id):
            stream = simulate_sequence(pattern, np.random.default_rng([seed, 1, i, j]), cfg)
            yield f"id{i:03d}_seq{j:03d}", i, _split_of(i, num_ids, test_ids), stream


def make_synthetic_dataset(
    num_ids: int,
    sequences_per_id: int,
    seed: int,
    test_ids: int = 2,
    num_frames: int = 4,
    delta_t_us: int = 50_000,
    target_hw: int = 32,
    cfg: SynthConfig | None = None,
) -> SyntheticDataset:
    frames, labels, ids, splits = [], [], [], []
    for sid, ident, split, stream in synthesize_streams(num_ids, sequences_per_id, seed, test_ids, cfg):
        frames.append(build_sequence(stream, 0, num_frames, delta_t_us, target_hw).frames)
        labels.append(ident)
        ids.append(sid)
        splits.append(split)
    return SyntheticDataset(
        np.stack(frames), np.array(labels), ids, np.array(splits), delta_t_us
    )


def make_pretrain_images(
    num_ids: int, images_per_id: int, seed: int, target_hw: int = 32, cfg: SynthConfig | None = None
):
    """Intensity ("RGB-style") images of a separate identity population.

    Returns ``(images [N, hw, hw, 3] in [-1, 1], labels [N])``.
    """
    cfg = cfg or SynthConfig()
    images, labels = [], []
    for i in range(num_ids):
        pattern = identity_pattern(np.random.default_rng([seed, 2, i]), cfg)
        for j in range(images_per_id):
            rng = np.random.default_rng([seed, 3, i, j])
            start, theta0, velocity, spin = _trajectory(rng, cfg)
            mid = rng.uniform(-0.1, 0.1)
            logi = render_log_intensity(
                pattern, cfg.sensor_hw, start + velocity * mid, theta0 + spin * mid
            )
            img = np.exp(logi)
            img = (img - img.min()) / (img.max() - img.min() + 1e-12)
            img = resize_bilinear(img, target_hw, target_hw)
            images.append(np.repeat((2.0 * img - 1.0)[..., None], 3, axis=-1))
            labels.append(i)
    return np.stack(images), np.array(labels)
