#!/usr/bin/env python3
"""Verification and identification metrics on toy embeddings.

Three identities, five samples each, embedded as noisy copies of a class
direction. All pairs give genuine/impostor cosine scores; the first sample
of each identity forms the gallery for the identification curve.
"""

import numpy as np

from eventface.metrics import (
    compute_cmc,
    compute_eer,
    compute_roc_auc,
    compute_tar_at_far,
    format_report,
    pair_scores,
)

rng = np.random.default_rng(0)
centres = rng.normal(size=(3, 16))
labels = np.repeat(np.arange(3), 5)
emb = centres[labels] + 0.9 * rng.normal(size=(15, 16))

scores = pair_scores(emb, labels)
print("pairs           : %d genuine, %d impostor" % (len(scores.genuine), len(scores.impostor)))

gallery = np.array([0, 5, 10])
probes = np.setdiff1d(np.arange(15), gallery)
cmc = compute_cmc(emb[gallery], labels[gallery], emb[probes], labels[probes], max_rank=3)

report = {
    "eer": compute_eer(scores),
    "auc": compute_roc_auc(scores),
    "tar_at_far_1e2": compute_tar_at_far(scores, 1e-2),
    "tar_at_far_1e3": compute_tar_at_far(scores, 1e-3),
    "rank1": cmc[0],
}
print(format_report(report), end="")
print("CMC             :", np.round(cmc, 3))

# every threshold-based metric only depends on the ordering of the scores
squashed = type(scores)(np.tanh(3 * scores.genuine), np.tanh(3 * scores.impostor))
print("EER after a monotone transform unchanged:", compute_eer(squashed) == report["eer"])
