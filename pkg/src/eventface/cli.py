"""Command-line entry point: ``python -m eventface.cli <command> ...``.

Commands: ``simulate``, ``encode``, ``train``, ``eval``, ``verify``.
Exit codes: 0 success, 1 usage/config error, 2 data error,
3 property-suite failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .autodiff import ShapeError
from .config import ConfigError, RunConfig, load_config
from .data import SyntheticDataset, synthesize_streams
from .events import EventFormatError, build_sequence, parse_event_file, write_event_file
from .metrics import (
    ProtocolError,
    compute_cmc,
    compute_eer,
    compute_roc_auc,
    compute_tar_at_far,
    far_frr_curve,
    format_report,
    pair_scores,
    write_score_csv,
)
from .model import EventFaceModel, UnmergedCheckpointError, check_merged, extract_embedding
from .train import pretrain_backbone, train_stage1, train_stage2
from .verify import format_table, run_suites

__all__ = ["main", "cmd_simulate", "cmd_encode", "cmd_train", "cmd_eval", "cmd_verify", "DataError", "UsageError"]

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PROPERTY = 0, 1, 2, 3
MANIFEST_FIELDS = ("sample_id", "identity", "file")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class StageOrderError(DataError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# file helpers
# ---------------------------------------------------------------------------


def _prepare_outputs(out_dir: Path, names: list[str], overwrite: bool) -> None:
    clash = [n for n in names if (out_dir / n).exists()]
    if clash and not overwrite:
        raise UsageError(f"{out_dir} already contains {clash}; pass --overwrite to replace")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for n in names:
            (out_dir / n).parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out_dir}: {exc}") from exc


def _write(path: Path, data: str | bytes) -> None:
    try:
        if isinstance(data, bytes):
            path.write_bytes(data)
        else:
            path.write_text(data)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def write_manifest(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=MANIFEST_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in MANIFEST_FIELDS})
    return buf.getvalue()


def read_manifest(path: Path) -> list[dict]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != MANIFEST_FIELDS:
        raise DataError(f"{path}: header must be {','.join(MANIFEST_FIELDS)}")
    rows = []
    for n, r in enumerate(reader, start=2):
        try:
            rows.append({"sample_id": r["sample_id"], "identity": int(r["identity"]), "file": r["file"]})
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}:{n}: bad row {r}") from exc
    return rows


def _load_frames(data_dir: Path, split: str) -> tuple[SyntheticDataset, list[dict]]:
    rows = read_manifest(data_dir / f"manifest_{split}.csv")
    frames = []
    for r in rows:
        entries = ckpt.load(data_dir / r["file"])
        if "frames" not in entries:
            raise DataError(f"{r['file']} has no 'frames' entry")
        frames.append(entries["frames"])
    if not frames:
        raise DataError(f"manifest_{split}.csv lists no samples")
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise DataError(f"encoded sequences differ in shape: {sorted(shapes)}")
    ds = SyntheticDataset(
        np.stack(frames), np.array([r["identity"] for r in rows]), [r["sample_id"] for r in rows],
        np.array([split] * len(rows)),
    )
    return ds, rows


def _check_frame_shape(ds: SyntheticDataset, cfg: RunConfig) -> None:
    want = (cfg.num_frames, cfg.input_hw, cfg.input_hw, 3)
    if ds.frames.shape[1:] != want:
        raise DataError(f"encoded frames are {ds.frames.shape[1:]}, config expects {want}")


def _require(value, flag: str):
    if value is None:
        raise UsageError(f"{flag} is required")
    return Path(value)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, overwrite: bool = False) -> Path:
    """Synthetic event CSVs plus ``manifest_train.csv`` / ``manifest_test.csv``."""
    out = _require(cfg.output_dir, "--out")
    streams = list(
        synthesize_streams(cfg.num_ids, cfg.sequences_per_id, cfg.seed, cfg.test_ids, cfg.synth_config())
    )
    names = [f"events/{sid}.csv" for sid, *_ in streams]
    _prepare_outputs(out, names + ["manifest_train.csv", "manifest_test.csv", "config.yaml"], overwrite)
    rows = {"train": [], "test": []}
    for (sid, ident, split, stream), name in zip(streams, names):
        _write(out / name, write_event_file(stream))
        rows[split].append({"sample_id": sid, "identity": ident, "file": name})
    for split, r in rows.items():
        _write(out / f"manifest_{split}.csv", write_manifest(r))
    _write(out / "config.yaml", cfg.to_yaml())
    logger.info("wrote %d sequences to %s", len(streams), out)
    return out


def cmd_encode(cfg: RunConfig, overwrite: bool = False) -> Path:
    """One EFCK file per sequence holding ``frames`` [F, hw, hw, 3]."""
    src = _require(cfg.events_dir, "--events")
    out = _require(cfg.output_dir, "--out")
    manifests = {split: read_manifest(src / f"manifest_{split}.csv") for split in ("train", "test")}
    names = [f"frames/{r['sample_id']}.efck" for rows in manifests.values() for r in rows]
    _prepare_outputs(out, names + ["manifest_train.csv", "manifest_test.csv", "config.yaml"], overwrite)
    for split, rows in manifests.items():
        new_rows = []
        for r in rows:
            path = src / r["file"]
            try:
                stream = parse_event_file(path.read_bytes())
            except OSError as exc:
                raise DataError(f"missing event file {path}: {exc}") from exc
            seq = build_sequence(stream, 0, cfg.num_frames, cfg.delta_t_us, cfg.input_hw)
            name = f"frames/{r['sample_id']}.efck"
            _write(out / name, ckpt.dumps({"frames": seq.frames}))
            new_rows.append({**r, "file": name})
        _write(out / f"manifest_{split}.csv", write_manifest(new_rows))
    _write(out / "config.yaml", cfg.to_yaml())
    return out


def cmd_train(cfg: RunConfig, stage: int, overwrite: bool = False) -> Path:
    data = _require(cfg.data_dir, "--data")
    out = _require(cfg.output_dir, "--out")
    if stage not in (1, 2):
        raise UsageError("--stage must be 1 or 2")
    stage1_state = None
    if stage == 2:
        if cfg.stage1_checkpoint is None:
            raise StageOrderError("stage 2 needs --stage1-checkpoint (run stage 1 first)")
        stage1_state = ckpt.load(cfg.stage1_checkpoint)
        if any(k.startswith(("mpe.", "stm.")) for k in stage1_state):
            raise StageOrderError(f"{cfg.stage1_checkpoint} is a stage-2 checkpoint, not a stage-1 one")
        check_merged(stage1_state)
    ds, _ = _load_frames(data, "train")
    _check_frame_shape(ds, cfg)
    _prepare_outputs(out, ["checkpoint.efck", "loss_log.csv", "config.yaml"], overwrite)
    tcfg, mcfg = cfg.train_config(), cfg.model_config()
    if stage == 1:
        result = train_stage1(ds, tcfg, pretrain_backbone(mcfg, tcfg))
    else:
        result = train_stage2(stage1_state, ds, tcfg, mcfg)
    _write(out / "checkpoint.efck", ckpt.dumps(result.checkpoint()))
    _write(out / "loss_log.csv", result.log_csv())
    _write(out / "config.yaml", cfg.to_yaml())
    return out


def _identification_split(rows: list[dict], self_gallery: bool):
    if self_gallery:
        idx = list(range(len(rows)))
        return idx, idx
    gallery, probes, seen = [], [], set()
    for i, r in enumerate(rows):
        if r["identity"] in seen:
            probes.append(i)
        else:
            seen.add(r["identity"])
            gallery.append(i)
    if not probes:
        raise ProtocolError("every test identity has a single sample; no probes remain")
    return gallery, probes


def cmd_eval(cfg: RunConfig, self_gallery: bool = False, overwrite: bool = False) -> dict[str, float]:
    """Verification scores over all test pairs plus closed-set identification
    (first sample of each test identity in the gallery, the rest as probes)."""
    data = _require(cfg.data_dir, "--data")
    out = _require(cfg.output_dir, "--out")
    state = ckpt.load(_require(cfg.checkpoint, "--checkpoint"))
    train_manifest = data / "manifest_train.csv"
    if train_manifest.exists():
        train_ids = {r["identity"] for r in read_manifest(train_manifest)}
    else:
        train_ids = set()
    ds, rows = _load_frames(data, "test")
    overlap = sorted(train_ids & set(ds.labels.tolist()))
    if overlap:
        raise ProtocolError(f"identities {overlap} appear in both train and test manifests")
    _check_frame_shape(ds, cfg)
    _prepare_outputs(
        out, ["scores.csv", "report.txt", "embeddings.efck", "det.csv", "config.yaml"], overwrite
    )
    if "head.weight" not in state:
        raise DataError("checkpoint has no head.weight entry")
    model = EventFaceModel(cfg.model_config(), num_ids=state["head.weight"].shape[1], seed=cfg.seed)
    try:
        model.load_state(state)
    except KeyError as exc:
        raise DataError(f"checkpoint is missing entry {exc}") from exc
    emb = extract_embedding(ds.frames, model)
    scores = pair_scores(emb, ds.labels)
    gal, prb = _identification_split(rows, self_gallery)
    cmc = compute_cmc(emb[gal], ds.labels[gal], emb[prb], ds.labels[prb], max_rank=5)
    metrics = {
        "eer": compute_eer(scores),
        "auc": compute_roc_auc(scores),
        "tar_at_far_1e2": compute_tar_at_far(scores, 1e-2),
        "tar_at_far_1e3": compute_tar_at_far(scores, 1e-3),
        "rank1": float(cmc[0]),
        "rank5": float(cmc[min(4, len(cmc) - 1)]),
    }
    thr, far, frr = far_frr_curve(scores)
    det = "threshold,far,frr\n" + "".join(f"{float(t)!r},{float(a)!r},{float(b)!r}\n" for t, a, b in zip(thr, far, frr))
    _write(out / "scores.csv", write_score_csv(scores))
    _write(out / "report.txt", format_report(metrics))
    _write(out / "embeddings.efck", ckpt.dumps({f"emb.{sid}": e for sid, e in zip(ds.sample_ids, emb)}))
    _write(out / "det.csv", det)
    _write(out / "config.yaml", cfg.to_yaml())
    return metrics


def cmd_verify(cfg: RunConfig, suites=None, inject_fault: str | None = None) -> bool:
    results = run_suites(suites, seed=cfg.seed, inject_fault=inject_fault)
    sys.stdout.write(format_table(results))
    return all(r.passed for r in results)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML file with flat configuration keys")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--overwrite", action="store_true", help="replace existing outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="eventface", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="generate synthetic event streams")
    p.add_argument("--out", dest="output_dir")

    p = sub.add_parser("encode", parents=[common], help="turn event CSVs into frame sequences")
    p.add_argument("--events", dest="events_dir")
    p.add_argument("--out", dest="output_dir")

    p = sub.add_parser("train", parents=[common], help="run one training stage")
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--data", dest="data_dir")
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--stage1-checkpoint", dest="stage1_checkpoint")

    p = sub.add_parser("eval", parents=[common], help="score the test split")
    p.add_argument("--checkpoint", dest="checkpoint")
    p.add_argument("--data", dest="data_dir")
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--self-gallery", action="store_true",
                   help="sanity mode: every test sample is both gallery and probe")

    p = sub.add_parser("verify", parents=[common], help="run the oracle/property suites")
    p.add_argument("--suite", action="append", dest="suites", help="run only this suite (repeatable)")
    p.add_argument("--inject-fault", choices=("merge",), help="corrupt one merged weight (self-test)")
    return parser


_PATH_KEYS = ("output_dir", "events_dir", "data_dir", "stage1_checkpoint", "checkpoint")


def _run(args) -> int:
    cfg = load_config(args.config, args.set)
    paths = {k: getattr(args, k) for k in _PATH_KEYS if getattr(args, k, None) is not None}
    if paths:
        cfg = cfg.replace(**paths)
    if args.command == "simulate":
        cmd_simulate(cfg, args.overwrite)
    elif args.command == "encode":
        cmd_encode(cfg, args.overwrite)
    elif args.command == "train":
        cmd_train(cfg, args.stage, args.overwrite)
    elif args.command == "eval":
        metrics = cmd_eval(cfg, args.self_gallery, args.overwrite)
        sys.stdout.write(format_report(metrics))
    elif args.command == "verify":
        return EXIT_OK if cmd_verify(cfg, args.suites, args.inject_fault) else EXIT_PROPERTY
    return EXIT_OK


_DATA_ERRORS = (
    DataError, EventFormatError, ckpt.CheckpointError, ProtocolError, UnmergedCheckpointError,
    ShapeError, FileNotFoundError,
)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _run(args)
    except (UsageError, ConfigError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
