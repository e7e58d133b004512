"""Event streams: CSV I/O, log-intensity simulation, windowed accumulation
and rendering into 3-channel frames in [-1, 1]."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

__all__ = [
    "EventFormatError",
    "EventParseError",
    "EventOrderError",
    "EventGeometryError",
    "EventRecord",
    "EventStream",
    "PolarityMaps",
    "EventFrameSequence",
    "parse_event_file",
    "write_event_file",
    "simulate_events",
    "accumulate_window",
    "render_frame",
    "resize_bilinear",
    "build_sequence",
]


class EventFormatError(ValueError):
    pass


class EventParseError(EventFormatError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class EventOrderError(EventFormatError):
    pass


class EventGeometryError(EventFormatError):
    pass


class EventRecord(NamedTuple):
    x: int
    y: int
    t: int
    p: int


@dataclass
class EventStream:
    """Events stored column-wise; ``t`` in microseconds, ``p`` in {-1, +1}."""

    width: int
    height: int
    t: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    x: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    p: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.p = np.asarray(self.p, dtype=np.int64)
        if not (len(self.t) == len(self.x) == len(self.y) == len(self.p)):
            raise EventFormatError("event columns have different lengths")

    @classmethod
    def from_records(cls, width: int, height: int, records: Sequence[EventRecord]) -> "EventStream":
        if not records:
            return cls(width, height)
        x, y, t, p = (np.array(col, dtype=np.int64) for col in zip(*records))
        return cls(width, height, t=t, x=x, y=y, p=p)

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[EventRecord]:
        for x, y, t, p in zip(self.x.tolist(), self.y.tolist(), self.t.tolist(), self.p.tolist()):
            yield EventRecord(x, y, t, p)

    def validate(self) -> None:
        if np.any(np.diff(self.t) < 0):
            i = int(np.argmax(np.diff(self.t) < 0)) + 1
            raise EventOrderError(f"timestamp decreases at event {i}")
        if len(self) and (
            self.x.min() < 0 or self.y.min() < 0
            or self.x.max() >= self.width or self.y.max() >= self.height
        ):
            raise EventGeometryError(f"event outside {self.width}x{self.height} sensor")
        if np.any((self.p != 1) & (self.p != -1)):
            raise EventFormatError("polarity must be -1 or +1")


@dataclass
class PolarityMaps:
    gamma_pos: np.ndarray
    gamma_neg: np.ndarray
    t_start: int
    t_end: int


@dataclass
class EventFrameSequence:
    frames: np.ndarray  # [F, H, W, 3]
    delta_t_us: int

    def __len__(self) -> int:
        return len(self.frames)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

HEADER = "t_us,x,y,p"


def parse_event_file(data: bytes | str) -> EventStream:
    """Parse the event CSV format: ``width,height``, header, then ``t_us,x,y,p`` rows."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 2:
        raise EventParseError(len(lines) + 1, "missing geometry line or header")
    try:
        width, height = (int(v) for v in lines[0].split(","))
    except ValueError:
        raise EventParseError(1, f"expected 'width,height', got {lines[0]!r}") from None
    if width <= 0 or height <= 0:
        raise EventParseError(1, "sensor geometry must be positive")
    if lines[1].strip() != HEADER:
        raise EventParseError(2, f"expected header {HEADER!r}, got {lines[1]!r}")

    n = len(lines) - 2
    cols = np.zeros((4, n), dtype=np.int64)
    prev_t = None
    for i, line in enumerate(lines[2:]):
        lineno = i + 3
        fields = line.split(",")
        if len(fields) != 4:
            raise EventParseError(lineno, f"expected 4 fields, got {len(fields)}")
        try:
            t, x, y, p = (int(f) for f in fields)
        except ValueError:
            raise EventParseError(lineno, f"non-integer field in {line!r}") from None
        if p not in (-1, 1):
            raise EventParseError(lineno, f"polarity must be -1 or 1, got {p}")
        if t < 0:
            raise EventParseError(lineno, "negative timestamp")
        if not (0 <= x < width and 0 <= y < height):
            raise EventGeometryError(f"line {lineno}: ({x},{y}) outside {width}x{height} sensor")
        if prev_t is not None and t < prev_t:
            raise EventOrderError(f"line {lineno}: timestamp {t} < previous {prev_t}")
        prev_t = t
        cols[:, i] = (t, x, y, p)
    return EventStream(width, height, t=cols[0], x=cols[1], y=cols[2], p=cols[3])


def write_event_file(stream: EventStream) -> bytes:
    rows = [f"{stream.width},{stream.height}", HEADER]
    rows.extend(
        f"{t},{x},{y},{p}"
        for t, x, y, p in zip(stream.t.tolist(), stream.x.tolist(), stream.y.tolist(), stream.p.tolist())
    )
    return ("\n".join(rows) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


def simulate_events(
    frames: Sequence[np.ndarray] | np.ndarray,
    timestamps_us: Sequence[int] | np.ndarray,
    contrast_threshold: float,
) -> EventStream:
    """Convert an intensity video into events.

    Each pixel keeps a log-intensity reference, initialised from the first
    frame. When a later frame's log intensity is at least ``C`` away from the
    reference, ``floor(|diff| / C)`` events of the sign of ``diff`` are emitted
    and the reference moves by ``C`` per event. Event times are linearly
    interpolated between the two frame timestamps at the crossing level.
    """
    video = np.asarray(frames, dtype=np.float64)
    ts = np.asarray(timestamps_us, dtype=np.int64)
    if video.ndim != 3:
        raise ValueError(f"video must be [T, H, W], got shape {video.shape}")
    if len(ts) != len(video):
        raise ValueError("one timestamp per frame required")
    if contrast_threshold <= 0:
        raise ValueError("contrast threshold must be positive")
    if np.any(video <= 0):
        raise ValueError("intensities must be strictly positive")
    if np.any(np.diff(ts) <= 0):
        raise ValueError("frame timestamps must be strictly increasing")

    C = float(contrast_threshold)
    _, H, W = video.shape
    logv = np.log(video)
    ref = logv[0].copy()
    chunks_t, chunks_x, chunks_y, chunks_p = [], [], [], []
    for f in range(1, len(video)):
        prev, cur = logv[f - 1], logv[f]
        diff = cur - ref
        n = np.floor(np.abs(diff) / C + 1e-12).astype(np.int64)
        if not n.any():
            continue
        ys, xs = np.nonzero(n)
        counts = n[ys, xs]
        sign = np.sign(diff[ys, xs]).astype(np.int64)
        rep = np.repeat(np.arange(len(ys)), counts)
        # j-th crossing (1-based) within each pixel's run
        j = np.arange(len(rep)) - np.repeat(np.cumsum(counts) - counts, counts) + 1
        level = ref[ys, xs][rep] + sign[rep] * j * C
        span = (cur - prev)[ys, xs][rep]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(span != 0, (level - prev[ys, xs][rep]) / span, 1.0)
        frac = np.clip(frac, 0.0, 1.0)
        t = ts[f - 1] + np.floor(frac * (ts[f] - ts[f - 1])).astype(np.int64)
        chunks_t.append(t)
        chunks_x.append(xs[rep])
        chunks_y.append(ys[rep])
        chunks_p.append(sign[rep])
        ref[ys, xs] += sign * counts * C
    if not chunks_t:
        return EventStream(W, H)
    t = np.concatenate(chunks_t)
    order = np.argsort(t, kind="stable")
    return EventStream(
        W,
        H,
        t=t[order],
        x=np.concatenate(chunks_x)[order],
        y=np.concatenate(chunks_y)[order],
        p=np.concatenate(chunks_p)[order],
    )


# ---------------------------------------------------------------------------
# accumulation and rendering
# ---------------------------------------------------------------------------


def accumulate_window(stream: EventStream, t_start: int, delta_t: int) -> PolarityMaps:
    """Per-polarity event counts over the half-open window ``[t_start, t_start + delta_t)``."""
    if delta_t <= 0:
        raise ValueError("delta_t must be positive")
    t_end = t_start + delta_t
    lo = np.searchsorted(stream.t, t_start, side="left")
    hi = np.searchsorted(stream.t, t_end, side="left")
    x, y, p = stream.x[lo:hi], stream.y[lo:hi], stream.p[lo:hi]
    size = stream.width * stream.height
    flat = y * stream.width + x
    pos = np.bincount(flat[p > 0], minlength=size).reshape(stream.height, stream.width)
    neg = np.bincount(flat[p < 0], minlength=size).reshape(stream.height, stream.width)
    return PolarityMaps(pos.astype(np.int64), neg.astype(np.int64), int(t_start), int(t_end))


def _normalized_rgb(maps: PolarityMaps) -> np.ndarray:
    """Counts scaled into [0, 1]: R = positive, G = 0, B = negative."""
    H, W = maps.gamma_pos.shape
    out = np.zeros((H, W, 3))
    peak = max(int(maps.gamma_pos.max(initial=0)), int(maps.gamma_neg.max(initial=0)))
    if peak > 0:
        out[..., 0] = maps.gamma_pos / peak
        out[..., 2] = maps.gamma_neg / peak
    return out


def render_frame(maps: PolarityMaps) -> np.ndarray:
    return 2.0 * _normalized_rgb(maps) - 1.0


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of [H, W, ...] with half-pixel centres and edge clamping."""
    H, W = img.shape[:2]
    if (H, W) == (out_h, out_w):
        return img.copy()

    def coords(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        i0 = np.floor(src).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, src - i0

    y0, y1, fy = coords(H, out_h)
    x0, x1, fx = coords(W, out_w)
    shape = (-1, 1) + (1,) * (img.ndim - 2)
    fy = fy.reshape(shape)
    fx = fx.reshape((1, -1) + (1,) * (img.ndim - 2))
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def build_sequence(
    stream: EventStream, t_start: int, num_frames: int, delta_t: int, target_hw: int
) -> EventFrameSequence:
    """Render ``num_frames`` consecutive windows, each resized to ``target_hw``."""
    if num_frames < 1:
        raise ValueError("need at least one frame")
    frames = np.empty((num_frames, target_hw, target_hw, 3))
    for f in range(num_frames):
        maps = accumulate_window(stream, t_start + f * delta_t, delta_t)
        unit = resize_bilinear(_normalized_rgb(maps), target_hw, target_hw)
        frames[f] = 2.0 * unit - 1.0
    return EventFrameSequence(frames, int(delta_t))
