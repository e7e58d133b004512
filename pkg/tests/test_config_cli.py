import csv
import io

import numpy as np
import pytest

from eventface import checkpoint as ckpt
from eventface.cli import main
from eventface.config import KEY_DOCS, ConfigError, RunConfig, load_config, parse_override
from eventface.metrics import compute_eer, compute_roc_auc, compute_tar_at_far, parse_report, read_score_csv

TINY = """\
num_ids: 4
test_ids: 2
sequences_per_id: 3
sensor_hw: 32
duration_us: 100000
num_frames: 2
input_hw: 16
stage_channels: [8, 16]
blocks_per_stage: 1
embed_dim: 8
lora_rank: 2
epochs_stage1: 1
epochs_stage2: 1
pretrain_ids: 3
pretrain_images_per_id: 2
pretrain_epochs: 1
"""


def test_every_key_is_documented():
    assert set(KEY_DOCS) == set(RunConfig().to_dict())


def test_yaml_roundtrip(tmp_path):
    cfg = RunConfig(lr=0.02, stage_channels=[8, 16], input_hw=16)
    p = tmp_path / "c.yaml"
    p.write_text(cfg.to_yaml())
    assert load_config(p) == cfg


@pytest.mark.parametrize(
    "data",
    [{"bogus": 1}, {"lr": "fast"}, {"lr": -1.0}, {"shift": "hex"}, {"num_frames": 1},
     {"margin": 1.5}, {"epochs_stage1": True}, {"stage_channels": [8, 12]}],
)
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(data)


def test_overrides(tmp_path):
    assert parse_override("stage_channels=[8, 16]") == ("stage_channels", [8, 16])
    with pytest.raises(ConfigError):
        parse_override("lr")
    p = tmp_path / "c.yaml"
    p.write_text("lr: 0.5\n")
    assert load_config(p, ["lr=0.25"]).lr == 0.25


def test_shipped_example_config_loads():
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "configs" / "desk.yaml"
    assert load_config(path) == RunConfig()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    cfg = root / "tiny.yaml"
    cfg.write_text(TINY)
    c = ["--config", str(cfg)]
    assert main(["simulate", *c, "--out", str(root / "ev")]) == 0
    assert main(["encode", *c, "--events", str(root / "ev"), "--out", str(root / "fr")]) == 0
    assert main(["train", "--stage", "1", *c, "--data", str(root / "fr"), "--out", str(root / "s1")]) == 0
    assert main([
        "train", "--stage", "2", *c, "--data", str(root / "fr"), "--out", str(root / "s2"),
        "--stage1-checkpoint", str(root / "s1" / "checkpoint.efck"),
    ]) == 0
    assert main([
        "eval", *c, "--data", str(root / "fr"), "--checkpoint", str(root / "s2" / "checkpoint.efck"),
        "--out", str(root / "ev_out"),
    ]) == 0
    return root, c


def _manifest(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_simulate_outputs(pipeline):
    root, _ = pipeline
    rows = _manifest(root / "ev" / "manifest_train.csv") + _manifest(root / "ev" / "manifest_test.csv")
    assert len(rows) == 4 * 3
    assert (root / "ev" / "config.yaml").exists()


def test_encode_outputs(pipeline):
    root, _ = pipeline
    rows = _manifest(root / "fr" / "manifest_test.csv")
    frames = ckpt.load(root / "fr" / rows[0]["file"])["frames"]
    assert frames.shape == (2, 16, 16, 3) and frames.min() >= -1 and frames.max() <= 1


def test_train_outputs(pipeline):
    root, _ = pipeline
    log = (root / "s1" / "loss_log.csv").read_text().splitlines()
    assert log[0] == "epoch,step,loss" and len(log) > 1
    assert not any(k.startswith("lora.") for k in ckpt.load(root / "s1" / "checkpoint.efck"))


def test_eval_report_matches_recomputation(pipeline):
    root, _ = pipeline
    out = root / "ev_out"
    report = parse_report((out / "report.txt").read_text())
    assert {"eer", "auc", "tar_at_far_1e2", "tar_at_far_1e3", "rank1"} <= set(report)
    scores = read_score_csv((out / "scores.csv").read_text())
    assert abs(compute_eer(scores) - report["eer"]) <= 1e-12
    assert abs(compute_roc_auc(scores) - report["auc"]) <= 1e-12
    assert abs(compute_tar_at_far(scores, 1e-2) - report["tar_at_far_1e2"]) <= 1e-12
    emb = ckpt.load(out / "embeddings.efck")
    assert len(emb) == 2 * 3 and all(k.startswith("emb.id") for k in emb)
    assert (out / "det.csv").read_text().startswith("threshold,far,frr\n")


def test_self_gallery_rank1(pipeline):
    root, c = pipeline
    args = ["eval", *c, "--data", str(root / "fr"), "--checkpoint", str(root / "s1" / "checkpoint.efck")]
    assert main([*args, "--out", str(root / "selfg"), "--self-gallery"]) == 0
    assert parse_report((root / "selfg" / "report.txt").read_text())["rank1"] == 1.0


def test_refuses_to_overwrite(pipeline, capsys):
    root, c = pipeline
    args = ["simulate", *c, "--out", str(root / "ev")]
    assert main(args) == 1
    assert "overwrite" in capsys.readouterr().err
    assert main([*args, "--overwrite"]) == 0


def test_stage_order_enforced(pipeline):
    root, c = pipeline
    base = ["train", "--stage", "2", *c, "--data", str(root / "fr")]
    assert main([*base, "--out", str(root / "x1")]) == 2
    s2 = str(root / "s2" / "checkpoint.efck")
    assert main([*base, "--out", str(root / "x2"), "--stage1-checkpoint", s2]) == 2


def test_unmerged_checkpoint_rejected(pipeline):
    root, c = pipeline
    state = ckpt.load(root / "s1" / "checkpoint.efck")
    state["lora.stage0.conv0.A"] = np.zeros((2, 3, 3, 3))
    bad = root / "unmerged.efck"
    ckpt.save(bad, state)
    args = ["train", "--stage", "2", *c, "--data", str(root / "fr"), "--out", str(root / "x3"),
            "--stage1-checkpoint", str(bad)]
    assert main(args) == 2


def test_identity_overlap_is_protocol_error(pipeline):
    root, c = pipeline
    fr = root / "fr"
    overlap = root / "fr_overlap"
    overlap.mkdir()
    for name in ("manifest_test.csv",):
        (overlap / name).write_text((fr / name).read_text())
    (overlap / "manifest_train.csv").write_text((fr / "manifest_test.csv").read_text())
    (overlap / "frames").symlink_to(fr / "frames")
    args = ["eval", *c, "--data", str(overlap), "--checkpoint", str(root / "s1" / "checkpoint.efck"),
            "--out", str(root / "x4")]
    assert main(args) == 2


def test_usage_and_config_errors(tmp_path):
    assert main([]) == 1
    assert main(["nonsense"]) == 1
    assert main(["simulate", "--set", "lr=-1", "--out", str(tmp_path / "a")]) == 1
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path / "b")]) == 1


def test_data_errors(tmp_path):
    (tmp_path / "ev").mkdir()
    assert main(["encode", "--events", str(tmp_path / "ev"), "--out", str(tmp_path / "o")]) == 2
    (tmp_path / "ev" / "manifest_train.csv").write_text("sample_id,identity,file\na,0,events/a.csv\n")
    (tmp_path / "ev" / "manifest_test.csv").write_text("sample_id,identity,file\n")
    (tmp_path / "ev" / "events").mkdir()
    (tmp_path / "ev" / "events" / "a.csv").write_text("4,4\nt_us,x,y,p\n5,0,0,1\n1,0,0,1\n")
    assert main(["encode", "--events", str(tmp_path / "ev"), "--out", str(tmp_path / "o2")]) == 2


def test_simulate_is_byte_identical(tmp_path):
    cfg = tmp_path / "t.yaml"
    cfg.write_text(TINY)
    for d in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_verify_single_suite_and_fault(capsys):
    assert main(["verify", "--suite", "arrangement"]) == 0
    assert main(["verify", "--suite", "lora_merge", "--inject-fault", "merge"]) == 3
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" in out
