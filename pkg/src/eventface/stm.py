"""Spatiotemporal modulator: token shifts, bidirectional WKV attention over
interleaved spatial/motion sequences, and the Spatial Mix / Channel Mix blocks.

Token grids are laid out as ``[..., F, H, W, C]``; flattened sequences as
``[..., L, C]`` with ``L = F * H * W`` in frame-major, row-major order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "OCTA_NEIGHBORS",
    "QUAD_NEIGHBORS",
    "octa_shift",
    "q_shift",
    "token_shift",
    "bi_wkv",
    "scan_order",
    "interleave",
    "sequential_arrange",
    "deinterleave",
    "arrange",
    "st_wkv",
    "StmParams",
    "spatial_mix",
    "channel_mix",
    "stm_block",
]

# (dh, dw) offsets in group order W, E, N, S, NW, NE, SW, SE
OCTA_NEIGHBORS = ((0, -1), (0, 1), (-1, 0), (1, 0), (-1, -1), (-1, 1), (1, -1), (1, 1))
QUAD_NEIGHBORS = OCTA_NEIGHBORS[:4]


def _neighbor_shift(x: Tensor, mu: float, neighbors) -> Tensor:
    c = x.shape[-1]
    n = len(neighbors)
    if c % n:
        raise ValueError(f"channel count {c} must be divisible by {n} for this token shift")
    groups = ad.split(x, n, axis=-1)
    shifted = ad.concat([ad.shift2d(g, dh, dw) for g, (dh, dw) in zip(groups, neighbors)], axis=-1)
    return x + (1.0 - mu) * shifted


def octa_shift(x: Tensor, mu: float) -> Tensor:
    """``x + (1 - mu) * X_dagger``; group i of X_dagger comes from neighbor i
    of the 8-neighbourhood, with out-of-grid neighbours clipped to the edge."""
    return _neighbor_shift(x, mu, OCTA_NEIGHBORS)


def q_shift(x: Tensor, mu: float) -> Tensor:
    """Four-neighbour (W, E, N, S) variant with C/4 channel groups."""
    return _neighbor_shift(x, mu, QUAD_NEIGHBORS)


def token_shift(x: Tensor, mu: float, mode: str = "octa") -> Tensor:
    if mode == "octa":
        return octa_shift(x, mu)
    if mode == "q":
        return q_shift(x, mu)
    raise ValueError(f"unknown shift mode {mode!r}")


# ---------------------------------------------------------------------------
# Bi-WKV
# ---------------------------------------------------------------------------


def _check_wkv(k: Tensor, v: Tensor, w: Tensor, u: Tensor) -> None:
    if k.shape != v.shape or k.ndim < 2:
        raise ad.ShapeError(f"bi_wkv: k and v must share shape [..., L, C], got {k.shape}, {v.shape}")
    c = k.shape[-1]
    if w.shape != (c,) or u.shape != (c,):
        raise ad.ShapeError(f"bi_wkv: w and u must have shape ({c},), got {w.shape}, {u.shape}")
    for name, t in (("k", k), ("v", v), ("w", w), ("u", u)):
        if not np.all(np.isfinite(t.data)):
            raise ValueError(f"bi_wkv: non-finite values in {name}")


def bi_wkv(k: Tensor, v: Tensor, w: Tensor, u: Tensor, method: str = "naive") -> Tensor:
    """Bidirectional distance-decayed key/value aggregation over axis -2.

    For each channel::

        y_l = (sum_{i!=l} e^{-(|l-i|-1) w / L + k_i} v_i + e^{u + k_l} v_l)
              / (sum_{i!=l} e^{-(|l-i|-1) w / L + k_i} + e^{u + k_l})

    ``method="naive"`` builds the full L x L weight tensor from recorded
    primitives (exponents shifted by their per-token maximum).
    ``method="scan"`` is the O(L) two-direction prefix form with its own
    backward pass.
    """
    k, v, w, u = (ad._as_tensor(t) for t in (k, v, w, u))
    _check_wkv(k, v, w, u)
    if method == "naive":
        return _bi_wkv_naive(k, v, w, u)
    if method == "scan":
        return _bi_wkv_scan(k, v, w, u)
    raise ValueError(f"unknown bi_wkv method {method!r}")


def _bi_wkv_naive(k: Tensor, v: Tensor, w: Tensor, u: Tensor) -> Tensor:
    L = k.shape[-2]
    idx = np.arange(L)
    dist = np.abs(idx[:, None] - idx[None, :]) - 1.0  # -1 on the diagonal
    eye = np.eye(L)[:, :, None]
    lead = k.shape[:-2]
    # exponent[..., l, i, c]; the diagonal becomes u + k_l after the eye term
    decay = ad.mul(dist[:, :, None] * (-1.0 / L), w)
    expo = decay + k.reshape(lead + (1, L, k.shape[-1]))
    expo = expo + ad.mul(eye, u - w * (1.0 / L))
    peak = expo.data.max(axis=-2, keepdims=True)
    weights = ad.exp(expo - peak)
    num = ad.tsum(weights * v.reshape(lead + (1,) + v.shape[-2:]), axis=-2)
    den = ad.tsum(weights, axis=-2)
    return num / den


def _excl_cumsum(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    np.cumsum(x[..., :-1, :], axis=-2, out=out[..., 1:, :])
    return out


def _excl_rcumsum(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    out[..., :-1, :] = np.cumsum(x[..., :0:-1, :], axis=-2)[..., ::-1, :]
    return out


class _Decay:
    """Two-sided sums ``S(x)_l = sum_{i != l} e^{-(|l-i|-1) d} x_i`` and the
    distance-weighted ``T(x)_l = sum_{i != l} (|l-i|-1) e^{-(|l-i|-1) d} x_i``."""

    def __init__(self, d: np.ndarray, L: int):
        pos = np.arange(L, dtype=np.float64)[:, None]
        self.pos = pos
        self.up = np.exp(d * pos)  # e^{d i}
        self.down = np.exp(-d * pos)  # e^{-d i}
        self.left_scale = np.exp(-d * (pos - 1.0))
        self.right_scale = np.exp(d * (pos + 1.0))

    def S(self, x: np.ndarray) -> np.ndarray:
        left = _excl_cumsum(x * self.up) * self.left_scale
        right = _excl_rcumsum(x * self.down) * self.right_scale
        return left + right

    def T(self, x: np.ndarray) -> np.ndarray:
        pos = self.pos
        xu, xd = x * self.up, x * self.down
        left = ((pos - 1.0) * _excl_cumsum(xu) - _excl_cumsum(pos * xu)) * self.left_scale
        right = (_excl_rcumsum(pos * xd) - (pos + 1.0) * _excl_rcumsum(xd)) * self.right_scale
        return left + right


def _bi_wkv_scan(k: Tensor, v: Tensor, w: Tensor, u: Tensor) -> Tensor:
    L = k.shape[-2]
    d = w.data / L
    ops = _Decay(d, L)
    # one common shift for every term so the ratio is unchanged
    kmax = k.data.max(axis=-2, keepdims=True)
    K = np.exp(k.data - kmax)
    bonus = np.exp(u.data) * K  # e^{u + k - kmax}
    Kv = K * v.data
    den = ops.S(K) + bonus
    y = (ops.S(Kv) + bonus * v.data) / den
    reduce_axes = tuple(range(k.ndim - 1))

    def backward(g):
        alpha = g / den
        beta = -g * y / den
        s_alpha = ops.S(alpha)
        gk = gv = gw = gu = None
        if v.requires_grad:
            gv = K * s_alpha + bonus * alpha
        if k.requires_grad:
            gk = K * (v.data * s_alpha + ops.S(beta)) + bonus * (alpha * v.data + beta)
        if u.requires_grad:
            gu = (bonus * (alpha * v.data + beta)).sum(axis=reduce_axes)
        if w.requires_grad:
            gw = -(alpha * ops.T(Kv) + beta * ops.T(K)).sum(axis=reduce_axes) / L
        return gk, gv, gw, gu

    return ad._result(y, (k, v, w, u), backward, "bi_wkv_scan")


# ---------------------------------------------------------------------------
# token arrangement
# ---------------------------------------------------------------------------


def scan_order(frames: int, height: int, width: int, scan: str = "row_major") -> np.ndarray:
    """Flat (frame-major, row-major) grid indices in visiting order."""
    f, h, w = np.meshgrid(np.arange(frames), np.arange(height), np.arange(width), indexing="ij")
    flat = (f * height + h) * width + w
    if scan == "row_major":
        return flat.reshape(-1)
    if scan == "col_major":
        return flat.transpose(0, 2, 1).reshape(-1)
    raise ValueError(f"unknown scan {scan!r}")


def _check_pair(spatial: Tensor, motion: Tensor) -> None:
    if spatial.shape != motion.shape:
        raise ad.ShapeError(
            f"spatial and motion grids differ: {spatial.shape} vs {motion.shape}"
        )
    if spatial.ndim < 4:
        raise ad.ShapeError(f"token grids must be [..., F, H, W, C], got {spatial.shape}")


def arrange(spatial: Tensor, motion: Tensor, scan: str = "row_major", mode: str = "interleaved"):
    """Arrange two [..., F, H, W, C] grids into one [..., 2L, C] sequence.

    Returns ``(sequence, perm)`` where ``perm[j]`` is the index of token j in
    ``concat(flat(spatial), flat(motion))``.
    """
    _check_pair(spatial, motion)
    *lead, F, H, W, C = spatial.shape
    L = F * H * W
    order = scan_order(F, H, W, scan)
    if mode == "interleaved":
        perm = np.empty(2 * L, dtype=np.intp)
        perm[0::2] = order
        perm[1::2] = order + L
    elif mode == "sequential":
        perm = np.concatenate([order, order + L])
    else:
        raise ValueError(f"unknown arrangement {mode!r}")
    both = ad.concat(
        [spatial.reshape(tuple(lead) + (L, C)), motion.reshape(tuple(lead) + (L, C))], axis=-2
    )
    return ad.take(both, perm, axis=-2), perm


def interleave(spatial: Tensor, motion: Tensor, scan: str = "row_major"):
    """``[s_o0, m_o0, s_o1, m_o1, ...]`` for scan order ``o``."""
    return arrange(spatial, motion, scan, "interleaved")


def sequential_arrange(spatial: Tensor, motion: Tensor, scan: str = "row_major"):
    """Block arrangement ``[s_o0 .. s_o(L-1), m_o0 .. m_o(L-1)]``."""
    return arrange(spatial, motion, scan, "sequential")


def deinterleave(sequence: Tensor, perm: np.ndarray, grid_shape: tuple[int, ...]):
    """Inverse of :func:`arrange`; returns the (spatial, motion) grids."""
    inv = np.argsort(perm)
    both = ad.take(sequence, inv, axis=-2)
    s, m = ad.split(both, 2, axis=-2)
    lead = sequence.shape[:-2]
    return s.reshape(lead + tuple(grid_shape)), m.reshape(lead + tuple(grid_shape))


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass
class StmParams:
    """Weights and fixed hyperparameters of one STM block of width ``C``.

    Projection matrices act as ``x @ W``. Names ending in ``_s`` / ``_m``
    belong to the spatial / motion stream of Spatial Mix, ``_cm`` to
    Channel Mix (width ``2C``). ``w1, u1`` parameterise the row-major scan,
    ``w2, u2`` the column-major one.
    """

    tensors: dict[str, Tensor]
    mu_r: float = 0.5
    mu_k: float = 0.5
    mu_v: float = 0.5
    mu_cm: float = 0.5
    shift: str = "octa"
    arrangement: str = "interleaved"
    wkv_method: str = "naive"
    scans: tuple[str, ...] = ("row_major", "col_major")
    ln_eps: float = 1e-5

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    @property
    def channels(self) -> int:
        return self.tensors["w1"].shape[0]

    @classmethod
    def init(cls, channels: int, rng: np.random.Generator, out_std: float = 0.02, **hyper) -> "StmParams":
        c = channels
        if c % 8:
            raise ValueError(f"STM width must be divisible by 8, got {c}")
        t: dict[str, Tensor] = {}

        def p(name, value):
            t[name] = Tensor(value, requires_grad=True)

        for s in ("s", "m"):
            p(f"ln_{s}_gamma", np.ones(c))
            p(f"ln_{s}_beta", np.zeros(c))
            for proj in ("R", "K", "V"):
                p(f"W_{proj}_{s}", rng.normal(0.0, 1.0 / np.sqrt(c), (c, c)))
            p(f"W_O_{s}", rng.normal(0.0, out_std, (c, c)))
        decay = np.linspace(0.3, 1.3, c)
        p("w1", decay.copy())
        p("u1", np.zeros(c))
        p("w2", decay.copy())
        p("u2", np.zeros(c))
        c2 = 2 * c
        p("ln_cm_gamma", np.ones(c2))
        p("ln_cm_beta", np.zeros(c2))
        for proj in ("R", "K", "V"):
            p(f"W_{proj}_cm", rng.normal(0.0, 1.0 / np.sqrt(c2), (c2, c2)))
        p("W_O_cm", rng.normal(0.0, out_std, (c2, c2)))
        return cls(t, **hyper)

    def named(self) -> dict[str, Tensor]:
        return dict(self.tensors)


# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------


def st_wkv(k_s: Tensor, v_s: Tensor, k_m: Tensor, v_m: Tensor, params: StmParams):
    """Cascade of Bi-WKV passes over the joint spatial/motion sequence, one per
    scan order (row-major with ``w1, u1``, then column-major with ``w2, u2``).
    The output of each pass is the value input of the next; keys are
    re-arranged alongside. Inputs and outputs are [..., F, H, W, C] grids."""
    grid = k_s.shape[-4:]
    ks, ms = k_s, k_m
    vs, vm = v_s, v_m
    for n, scan in enumerate(params.scans, start=1):
        k_seq, perm = arrange(ks, ms, scan, params.arrangement)
        v_seq, _ = arrange(vs, vm, scan, params.arrangement)
        out = bi_wkv(k_seq, v_seq, params[f"w{n}"], params[f"u{n}"], method=params.wkv_method)
        vs, vm = deinterleave(out, perm, grid)
    return vs, vm


def spatial_mix(x_s: Tensor, x_m: Tensor, params: StmParams):
    _check_pair(x_s, x_m)
    proj = {}
    for s, x in (("s", x_s), ("m", x_m)):
        h = ad.layer_norm(x, params[f"ln_{s}_gamma"], params[f"ln_{s}_beta"], params.ln_eps)
        for name, mu in (("R", params.mu_r), ("K", params.mu_k), ("V", params.mu_v)):
            proj[name, s] = ad.linear(token_shift(h, mu, params.shift), params[f"W_{name}_{s}"])
    wkv_s, wkv_m = st_wkv(proj["K", "s"], proj["V", "s"], proj["K", "m"], proj["V", "m"], params)
    y_s = ad.linear(ad.sigmoid(proj["R", "s"]) * wkv_s, params["W_O_s"]) + x_s
    y_m = ad.linear(ad.sigmoid(proj["R", "m"]) * wkv_m, params["W_O_m"]) + x_m
    return y_s, y_m


def channel_mix(y_s: Tensor, y_m: Tensor, params: StmParams):
    _check_pair(y_s, y_m)
    x = ad.concat([y_s, y_m], axis=-1)
    if x.shape[-1] % 8:
        raise ValueError(f"concatenated width {x.shape[-1]} must be divisible by 8")
    h = ad.layer_norm(x, params["ln_cm_gamma"], params["ln_cm_beta"], params.ln_eps)
    h = token_shift(h, params.mu_cm, params.shift)
    r = ad.linear(h, params["W_R_cm"])
    k = ad.linear(h, params["W_K_cm"])
    v = ad.linear(ad.relu_squared(k), params["W_V_cm"])
    out = ad.linear(ad.sigmoid(r) * v, params["W_O_cm"]) + x
    s, m = ad.split(out, 2, axis=-1)
    return s, m


def stm_block(x_s: Tensor, x_m: Tensor, params: StmParams):
    y_s, y_m = spatial_mix(x_s, x_m, params)
    return channel_mix(y_s, y_m, params)
