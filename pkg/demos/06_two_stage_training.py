#!/usr/bin/env python3
"""Two-stage training on synthetic event faces.

Stage 0 emulates an intensity-image pretrained backbone. Stage 1 trains conv
adapters on event frames and merges them. Stage 2 freezes that backbone and
trains the motion encoders and modulators. Held-out identities are
evaluated after each stage.

Pass ``--quick`` for a reduced run (about half a minute); the default desk
configuration takes a few minutes.
"""

import sys
import time

from eventface.config import load_config
from eventface.data import make_synthetic_dataset
from eventface.metrics import compute_eer, pair_scores
from eventface.model import EventFaceModel, extract_embedding
from eventface.train import pretrain_backbone, train_stage1, train_stage2

overrides = []
if "--quick" in sys.argv:
    overrides = ["num_ids=5", "test_ids=2", "sequences_per_id=6", "epochs_stage1=6", "epochs_stage2=2",
                 "pretrain_ids=16", "pretrain_epochs=3"]
cfg = load_config(None, overrides)

t0 = time.perf_counter()
data = make_synthetic_dataset(cfg.num_ids, cfg.sequences_per_id, cfg.seed, cfg.test_ids,
                              cfg.num_frames, cfg.delta_t_us, cfg.input_hw, cfg.synth_config())
train, test = data.subset("train"), data.subset("test")
print("data            : %d train / %d test sequences (%.0fs)" % (len(train), len(test), time.perf_counter() - t0))


def test_eer(model):
    emb = extract_embedding(test.frames, model)
    return compute_eer(pair_scores(emb, test.labels))


untrained = EventFaceModel(cfg.model_config(), cfg.num_ids - cfg.test_ids, cfg.seed)
print("untrained       : test EER %.3f" % test_eer(untrained))

t0 = time.perf_counter()
pre = pretrain_backbone(cfg.model_config(), cfg.train_config())
print("pretrained      : test EER %.3f (%.0fs)" % (test_eer(pre), time.perf_counter() - t0))

t0 = time.perf_counter()
s1 = train_stage1(train, cfg.train_config(), pre)
print("stage 1         : test EER %.3f, loss %.2f -> %.2f (%.0fs)"
      % (test_eer(s1.model), s1.log[0][2], s1.log[-1][2], time.perf_counter() - t0))

t0 = time.perf_counter()
s2 = train_stage2(s1.checkpoint(), train, cfg.train_config(), cfg.model_config())
print("stage 2         : test EER %.3f, loss %.2f -> %.2f (%.0fs)"
      % (test_eer(s2.model), s2.log[0][2], s2.log[-1][2], time.perf_counter() - t0))
