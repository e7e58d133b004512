"""Verification and identification metrics over cosine-similarity scores.

A comparison is accepted when ``score >= threshold``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProtocolError",
    "ScoreSet",
    "far_frr_curve",
    "compute_eer",
    "compute_roc_auc",
    "compute_tar_at_far",
    "compute_cmc",
    "pair_scores",
    "write_score_csv",
    "read_score_csv",
    "format_report",
    "parse_report",
    "REPORT_KEYS",
]

REPORT_KEYS = ("eer", "auc", "tar_at_far_1e2", "tar_at_far_1e3", "rank1")


class ProtocolError(ValueError):
    pass


@dataclass
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        self.genuine = np.asarray(self.genuine, dtype=np.float64).reshape(-1)
        self.impostor = np.asarray(self.impostor, dtype=np.float64).reshape(-1)

    def check(self) -> None:
        if len(self.genuine) == 0 or len(self.impostor) == 0:
            raise ProtocolError("both genuine and impostor scores are required")


def far_frr_curve(scores: ScoreSet):
    """FAR and FRR at every distinct score used as threshold, plus +inf.

    Returns ``(thresholds, far, frr)`` with thresholds ascending.
    """
    scores.check()
    gen = np.sort(scores.genuine)
    imp = np.sort(scores.impostor)
    thr = np.unique(np.concatenate([gen, imp]))
    thr = np.append(thr, np.inf)
    # accepted iff score >= thr
    far = (len(imp) - np.searchsorted(imp, thr, side="left")) / len(imp)
    frr = np.searchsorted(gen, thr, side="left") / len(gen)
    return thr, far, frr


def compute_eer(scores: ScoreSet) -> float:
    """Point where FAR and FRR cross, linearly interpolated between the two
    adjacent thresholds that bracket the crossing."""
    _, far, frr = far_frr_curve(scores)
    diff = far - frr  # non-increasing along ascending thresholds
    j = int(np.argmax(diff <= 0))  # diff[-1] = -1 so a crossing always exists
    if diff[j] == 0 or j == 0:
        return float(far[j])
    t = diff[j - 1] / (diff[j - 1] - diff[j])
    return float(far[j - 1] + t * (far[j] - far[j - 1]))


def compute_roc_auc(scores: ScoreSet) -> float:
    """Area under TPR(FPR) by the trapezoid rule, equal to the Mann-Whitney
    statistic with ties counted as one half."""
    _, far, frr = far_frr_curve(scores)
    tpr = 1.0 - frr
    # thresholds ascending -> FPR descending; integrate in ascending order
    x, y = far[::-1], tpr[::-1]
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) * 0.5))


def compute_tar_at_far(scores: ScoreSet, far: float) -> float:
    """Genuine acceptance rate at the smallest threshold whose FAR <= ``far``."""
    if not 0 < far < 1:
        raise ValueError("far must lie in (0, 1)")
    thr, fars, frr = far_frr_curve(scores)
    ok = np.nonzero(fars <= far)[0]
    return float(1.0 - frr[ok[0]])


def compute_cmc(gallery_emb, gallery_labels, probe_emb, probe_labels, max_rank: int = 5) -> np.ndarray:
    """Rank-k identification rates for k = 1..max_rank.

    Gallery entries are ranked by cosine similarity (ties keep gallery order);
    a probe's rank is the position of the first gallery entry with its label.
    """
    g = np.asarray(gallery_emb, dtype=np.float64)
    p = np.asarray(probe_emb, dtype=np.float64)
    gl = np.asarray(gallery_labels)
    pl = np.asarray(probe_labels)
    missing = set(pl.tolist()) - set(gl.tolist())
    if missing:
        raise ProtocolError(f"probe identities missing from gallery: {sorted(missing)}")
    if max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    gn = g / np.linalg.norm(g, axis=1, keepdims=True)
    pn = p / np.linalg.norm(p, axis=1, keepdims=True)
    sim = pn @ gn.T
    order = np.argsort(-sim, axis=1, kind="stable")
    hits = gl[order] == pl[:, None]
    first = np.argmax(hits, axis=1)  # 0-based rank of first correct entry
    return np.array([(first < k).mean() for k in range(1, max_rank + 1)])


def pair_scores(embeddings: np.ndarray, labels) -> ScoreSet:
    """Cosine scores of all unordered pairs i < j, split by label equality."""
    e = np.asarray(embeddings, dtype=np.float64)
    e = e / np.linalg.norm(e, axis=1, keepdims=True)
    labels = np.asarray(labels)
    sim = np.clip(e @ e.T, -1.0, 1.0)
    iu, ju = np.triu_indices(len(e), k=1)
    same = labels[iu] == labels[ju]
    return ScoreSet(sim[iu, ju][same], sim[iu, ju][~same])


def write_score_csv(scores: ScoreSet) -> str:
    buf = io.StringIO()
    buf.write("label,score\n")
    for s in scores.genuine:
        buf.write(f"genuine,{float(s)!r}\n")
    for s in scores.impostor:
        buf.write(f"impostor,{float(s)!r}\n")
    return buf.getvalue()


def read_score_csv(text: str) -> ScoreSet:
    lines = text.strip("\n").split("\n")
    if not lines or lines[0] != "label,score":
        raise ValueError("score CSV must start with 'label,score'")
    gen, imp = [], []
    for n, line in enumerate(lines[1:], start=2):
        label, _, value = line.partition(",")
        if label == "genuine":
            gen.append(float(value))
        elif label == "impostor":
            imp.append(float(value))
        else:
            raise ValueError(f"line {n}: unknown label {label!r}")
    return ScoreSet(gen, imp)


def format_report(metrics: dict[str, float]) -> str:
    missing = [k for k in REPORT_KEYS if k not in metrics]
    if missing:
        raise KeyError(f"report is missing {missing}")
    lines = [f"{k}: {float(metrics[k])!r}" for k in REPORT_KEYS]
    lines += [f"{k}: {float(v)!r}" for k, v in metrics.items() if k not in REPORT_KEYS]
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict[str, float]:
    out = {}
    for line in text.strip().split("\n"):
        key, _, value = line.partition(":")
        out[key.strip()] = float(value)
    return out
