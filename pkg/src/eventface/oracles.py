"""Deliberately slow reference implementations.

Everything here is written with explicit Python loops over the defining
sums so it shares no code path with the vectorised versions it checks.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "conv2d_loop",
    "depthwise_conv2d_loop",
    "linear_loop",
    "bi_wkv_loop",
    "shift2d_loop",
    "octa_shift_loop",
    "accumulate_loop",
    "eer_sweep",
    "auc_pairwise",
    "tar_at_far_sweep",
    "cmc_loop",
]


def conv2d_loop(x: np.ndarray, w: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
    n, c_in, h, wd = x.shape
    c_out, _, k, _ = w.shape
    ho = (h + 2 * padding - k) // stride + 1
    wo = (wd + 2 * padding - k) // stride + 1
    out = np.zeros((n, c_out, ho, wo))
    for b in range(n):
        for o in range(c_out):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for c in range(c_in):
                        for u in range(k):
                            for v in range(k):
                                r = i * stride + u - padding
                                s = j * stride + v - padding
                                if 0 <= r < h and 0 <= s < wd:
                                    acc += x[b, c, r, s] * w[o, c, u, v]
                    out[b, o, i, j] = acc
    return out


def depthwise_conv2d_loop(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Stride 1, 'same' zero padding, one k x k filter per channel."""
    n, c, h, wd = x.shape
    k = w.shape[-1]
    p = (k - 1) // 2
    out = np.zeros_like(x, dtype=np.float64)
    for b in range(n):
        for ch in range(c):
            for i in range(h):
                for j in range(wd):
                    acc = 0.0
                    for u in range(k):
                        for v in range(k):
                            r, s = i + u - p, j + v - p
                            if 0 <= r < h and 0 <= s < wd:
                                acc += x[b, ch, r, s] * w[ch, 0, u, v]
                    out[b, ch, i, j] = acc
    return out


def linear_loop(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    lead = x.shape[:-1]
    flat = x.reshape(-1, x.shape[-1])
    out = np.zeros((flat.shape[0], w.shape[1]))
    for r in range(flat.shape[0]):
        for o in range(w.shape[1]):
            out[r, o] = sum(flat[r, i] * w[i, o] for i in range(w.shape[0]))
    return out.reshape(lead + (w.shape[1],))


def bi_wkv_loop(k: np.ndarray, v: np.ndarray, w: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Direct double sum for one sequence ``k, v: [L, C]``, no stabilisation.

    Uses ``math.exp`` on Python floats and ``math.fsum`` so the rounding
    behaviour differs from the vectorised paths.
    """
    L, C = k.shape
    out = np.zeros((L, C))
    for c in range(C):
        for t in range(L):
            num, den = [], []
            for i in range(L):
                if i == t:
                    e = math.exp(u[c] + k[t, c])
                else:
                    e = math.exp(-(abs(t - i) - 1) / L * w[c] + k[i, c])
                num.append(e * v[i, c])
                den.append(e)
            out[t, c] = math.fsum(num) / math.fsum(den)
    return out


def shift2d_loop(x: np.ndarray, dh: int, dw: int) -> np.ndarray:
    """``out[..., i, j, :] = x[..., clamp(i + dh), clamp(j + dw), :]``."""
    h, w = x.shape[-3], x.shape[-2]
    out = np.empty_like(x)
    for i in range(h):
        for j in range(w):
            si = min(max(i + dh, 0), h - 1)
            sj = min(max(j + dw, 0), w - 1)
            out[..., i, j, :] = x[..., si, sj, :]
    return out


# neighbour each channel group reads from, as (row offset, col offset)
_OCTA_SOURCES = [(0, -1), (0, 1), (-1, 0), (1, 0), (-1, -1), (-1, 1), (1, -1), (1, 1)]


def octa_shift_loop(x: np.ndarray, mu: float) -> np.ndarray:
    """Index-level definition: channel group g of token (i, j) is replaced by
    that group at neighbour ``(i + di_g, j + dj_g)`` (edge-clamped), and the
    result is ``x + (1 - mu) * shifted``. Groups in order W, E, N, S, NW, NE, SW, SE."""
    *lead, h, w, c = x.shape
    g = c // 8
    shifted = np.empty_like(x)
    for grp, (di, dj) in enumerate(_OCTA_SOURCES):
        lo, hi = grp * g, (grp + 1) * g
        for i in range(h):
            for j in range(w):
                si = min(max(i + di, 0), h - 1)
                sj = min(max(j + dj, 0), w - 1)
                shifted[..., i, j, lo:hi] = x[..., si, sj, lo:hi]
    return x + (1.0 - mu) * shifted


def accumulate_loop(t, x, y, p, width: int, height: int, t_start: int, delta_t: int):
    """Count events one by one into ``(pos, neg)`` maps over ``[t_start, t_start + delta_t)``."""
    pos = np.zeros((height, width), dtype=np.int64)
    neg = np.zeros((height, width), dtype=np.int64)
    for ti, xi, yi, pi in zip(t, x, y, p):
        if t_start <= ti < t_start + delta_t:
            if pi > 0:
                pos[yi, xi] += 1
            else:
                neg[yi, xi] += 1
    return pos, neg


# -- metrics -------------------------------------------------------------------


def _rates(genuine, impostor, thr):
    far = sum(1 for s in impostor if s >= thr) / len(impostor)
    frr = sum(1 for s in genuine if s < thr) / len(genuine)
    return far, frr


def _thresholds(genuine, impostor):
    return sorted(set(list(genuine) + list(impostor))) + [math.inf]


def eer_sweep(genuine, impostor) -> float:
    """Walk every candidate threshold; interpolate linearly across the first
    sign change of FAR - FRR."""
    pts = [_rates(genuine, impostor, t) for t in _thresholds(genuine, impostor)]
    prev = None
    for far, frr in pts:
        d = far - frr
        if d <= 0:
            if d == 0 or prev is None:
                return far
            pfar, pfrr = prev
            pd = pfar - pfrr
            frac = pd / (pd - d)
            return pfar + frac * (far - pfar)
        prev = (far, frr)
    raise AssertionError("unreachable: FAR - FRR ends at -1")


def auc_pairwise(genuine, impostor) -> float:
    """Mann-Whitney: P(genuine > impostor) + 0.5 P(tie), over all pairs."""
    total = 0.0
    for g in genuine:
        for i in impostor:
            total += 1.0 if g > i else 0.5 if g == i else 0.0
    return total / (len(genuine) * len(impostor))


def tar_at_far_sweep(genuine, impostor, target: float) -> float:
    for thr in _thresholds(genuine, impostor):
        far, frr = _rates(genuine, impostor, thr)
        if far <= target:
            return 1.0 - frr
    raise AssertionError("unreachable: FAR is 0 at +inf")


def cmc_loop(gallery, gallery_labels, probes, probe_labels, max_rank: int) -> list[float]:
    hits = [0] * max_rank
    for p, pl in zip(probes, probe_labels):
        pn = p / np.linalg.norm(p)
        sims = []
        for idx, g in enumerate(gallery):
            sims.append((-float(np.dot(pn, g / np.linalg.norm(g))), idx))
        sims.sort()  # ties fall back to gallery position
        rank = next(r for r, (_, idx) in enumerate(sims) if gallery_labels[idx] == pl)
        for k in range(max_rank):
            if rank <= k:
                hits[k] += 1
    return [h / len(probes) for h in hits]
