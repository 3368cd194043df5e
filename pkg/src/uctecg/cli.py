"""Command-line entry point: ``uctecg {train,evaluate,uq,spectrogram,table4-oracle}``.

Every command reads an optional JSON config (``--config``); flags override
file values. Artifacts are written under ``--out`` with fixed names:

    checkpoints/member_<i>.ckpt   train_manifest.json   loss_curves.csv
    evaluation.json               uq_report.json        predictions.csv
    entropy_density.csv           per_class_uacc.csv    spectrograms/record_<i>.csv

Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    EXPECTED_COUNTS,
    RecordSet,
    SplitSpec,
    concat,
    get_meta,
    inverse_frequency_weights,
    load_corpus,
    load_csv,
    minmax_normalize,
    split,
    stratified_subsample,
)
from .dsp import spectrogram
from .errors import CheckpointError, ConfigError, DataError, SplitError, TrainingError, UctecgError
from .metrics import (
    ThresholdPolicy,
    apply_threshold,
    check_published_row,
    classification_report,
    entropy_density_export,
    load_published_rows,
    per_class_uacc,
    uncertainty_metrics,
)
from .models import ArchitectureSpec, build_model
from .nn import load_checkpoint, save_checkpoint, train
from .nn.train import TrainConfig
from .uq import UqConfig, batch_uq, deterministic_probs, write_predictions

log = logging.getLogger("uctecg")

DEFAULT_SPLIT_MODE = {"mitbih": "pregiven-files", "ptb": "stratified-random"}


@dataclass
class RunConfig:
    dataset: str = "ptb"
    data_dir: str | None = None
    train_path: str | None = None
    test_path: str | None = None
    split: SplitSpec | None = None
    subsample: float | None = None
    normalize: bool = False
    balance_classes: bool = False
    arch: ArchitectureSpec | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    uq: UqConfig = field(default_factory=UqConfig)
    threshold: ThresholdPolicy = field(default_factory=ThresholdPolicy)
    out: str = "runs/default"
    num_repeats: int = 1
    density_bins: int = 20

    def __post_init__(self):
        meta = get_meta(self.dataset)
        if self.split is None:
            self.split = SplitSpec(DEFAULT_SPLIT_MODE[self.dataset])
        if self.arch is None:
            self.arch = ArchitectureSpec("uctecg", meta.num_classes)
        if self.arch.num_classes != meta.num_classes:
            raise ConfigError(f"{self.dataset} has {meta.num_classes} classes, arch declares {self.arch.num_classes}")
        if self.num_repeats < 1:
            raise ConfigError("num_repeats must be >= 1")
        if self.subsample is not None and not 0.0 < self.subsample < 1.0:
            raise ConfigError("subsample must lie in (0, 1)")

    @property
    def meta(self):
        return get_meta(self.dataset)

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        for key in ("split", "train", "uq", "threshold"):
            d[key] = dataclasses.asdict(d[key])
        d["arch"] = self.arch.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        dataset = d.get("dataset", "ptb")
        try:
            if d.get("split") is not None:
                d["split"] = SplitSpec(**d["split"])
            if d.get("arch") is not None:
                arch = dict(d["arch"])
                arch.setdefault("num_classes", get_meta(dataset).num_classes)
                d["arch"] = ArchitectureSpec(**arch)
            for key, typ in (("train", TrainConfig), ("uq", UqConfig), ("threshold", ThresholdPolicy)):
                if d.get(key) is not None:
                    d[key] = typ(**d[key])
        except TypeError as err:
            raise ConfigError(str(err)) from None
        return cls(**d)

    def digest(self):
        """Hash of everything that determines results; the output location is excluded."""
        d = self.to_dict()
        d.pop("out")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# --------------------------------------------------------------------------
# Helpers
# --------------------------------------------------------------------------


def _json_value(v):
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    if isinstance(v, np.ndarray):
        return _json_value(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if math.isnan(v) else v
    return v


def _write_json(path, obj):
    Path(path).write_text(json.dumps(_json_value(obj), indent=2, sort_keys=True) + "\n")


def load_records(cfg: RunConfig) -> tuple[RecordSet, RecordSet]:
    """Load the corpus named by the config and return (train, test)."""
    meta = cfg.meta
    if cfg.train_path and cfg.test_path:
        corpus = concat([load_csv(cfg.train_path, meta), load_csv(cfg.test_path, meta)])
    elif cfg.data_dir:
        corpus = load_corpus(cfg.data_dir, meta)
    else:
        raise ConfigError("no data source: set data_dir or train_path/test_path")
    if cfg.normalize:
        corpus = minmax_normalize(corpus)
    if cfg.split.mode == "pregiven-files":
        train_set, test_set = split(corpus, cfg.split)
        if cfg.subsample:
            train_set = stratified_subsample(train_set, cfg.subsample, cfg.split.seed)
            test_set = stratified_subsample(test_set, cfg.subsample, cfg.split.seed)
        return train_set, test_set
    if cfg.subsample:
        corpus = stratified_subsample(corpus, cfg.subsample, cfg.split.seed)
    return split(corpus, cfg.split)


def member_seeds(master_seed: int, count: int) -> list[tuple[int, int]]:
    """(init_seed, train_seed) per ensemble member, spawned from one master seed."""
    state = np.random.SeedSequence(master_seed).generate_state(2 * count, dtype=np.uint32)
    return [(int(state[2 * i]), int(state[2 * i + 1])) for i in range(count)]


def _checkpoint_dir(out):
    return Path(out) / "checkpoints"


def _find_checkpoints(cfg: RunConfig, paths=None):
    if paths:
        files = [Path(p) for p in paths]
    else:
        files = sorted(_checkpoint_dir(cfg.out).glob("member_*.ckpt"),
                       key=lambda p: int(p.stem.split("_")[1]))
    models = []
    for f in files:
        ckpt = load_checkpoint(f)
        arch = ckpt.arch or {}
        if arch.get("kind") != cfg.arch.kind or arch.get("num_classes") != cfg.arch.num_classes:
            raise ConfigError(
                f"{f}: checkpoint is {arch.get('kind')}/{arch.get('num_classes')} classes, "
                f"config asks for {cfg.arch.kind}/{cfg.arch.num_classes}"
            )
        models.append(ckpt.model)
    return models


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_train(cfg: RunConfig) -> dict:
    """Train every member the UQ method and repeat count need; write checkpoints and a manifest."""
    train_set, test_set = load_records(cfg)
    out = Path(cfg.out)
    _checkpoint_dir(out).mkdir(parents=True, exist_ok=True)
    count = max(cfg.uq.members_needed, cfg.num_repeats)
    weights = (inverse_frequency_weights(train_set.labels, cfg.meta.num_classes).tolist()
               if cfg.balance_classes else cfg.train.class_weights)
    members, curves = [], []
    for i, (init_seed, train_seed) in enumerate(member_seeds(cfg.train.seed, count)):
        log.info("training member %d/%d (%s)", i + 1, count, cfg.arch.kind)
        model = build_model(cfg.arch, init_seed)
        tcfg = dataclasses.replace(cfg.train, seed=train_seed, class_weights=weights)
        result = train(model, train_set, tcfg)
        path = _checkpoint_dir(out) / f"member_{i}.ckpt"
        save_checkpoint(model, path, arch=cfg.arch.to_dict(), train_config=tcfg.to_dict(), seed=init_seed,
                        extra={"member": i, "config_hash": cfg.digest()})
        members.append({"index": i, "init_seed": init_seed, "train_seed": train_seed,
                        "checkpoint": str(path.relative_to(out)), "final_loss": result.loss_curve[-1]})
        curves.append(result.loss_curve)
    with open(out / "loss_curves.csv", "w", newline="\n") as fh:
        fh.write("member,epoch,loss\n")
        for i, curve in enumerate(curves):
            for epoch, loss in enumerate(curve):
                fh.write(f"{i},{epoch},{loss!r}\n")
    manifest = {
        "command": "train",
        "software_version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "seeds": {"master": cfg.train.seed, "split": cfg.split.seed, "uq_base": cfg.uq.base_seed},
        "corpus": {"train": len(train_set), "test": len(test_set),
                   "train_class_counts": train_set.class_counts(), "test_class_counts": test_set.class_counts()},
        "members": members,
    }
    _write_json(out / "train_manifest.json", manifest)
    return manifest


def cmd_evaluate(cfg: RunConfig, checkpoints=None) -> dict:
    """Deterministic test-set metrics per checkpoint; mean and sample std over repeats."""
    _, test_set = load_records(cfg)
    models = _find_checkpoints(cfg, checkpoints)
    if len(models) < cfg.num_repeats:
        raise ConfigError(f"num_repeats={cfg.num_repeats} but only {len(models)} checkpoints found")
    runs = []
    for model in models[: cfg.num_repeats]:
        preds = deterministic_probs(model, test_set.signals).argmax(axis=1)
        runs.append(classification_report(preds, test_set.labels, cfg.meta.num_classes).to_dict())
    keys = ("accuracy", "precision", "recall", "f1")
    mean = {k: float(np.mean([r[k] for r in runs])) for k in keys}
    std = {k: (float(np.std([r[k] for r in runs], ddof=1)) if len(runs) > 1 else None) for k in keys}
    report = {"dataset": cfg.dataset, "arch": cfg.arch.kind, "num_repeats": cfg.num_repeats,
              "test_size": len(test_set), "runs": runs, "mean": mean, "std": std,
              "software_version": __version__, "config_hash": cfg.digest()}
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    _write_json(Path(cfg.out) / "evaluation.json", report)
    return report


def cmd_uq(cfg: RunConfig, checkpoints=None) -> dict:
    """Run the UQ method on the test split and write report, prediction dump and figure data."""
    _, test_set = load_records(cfg)
    models = _find_checkpoints(cfg, checkpoints)
    if len(models) < cfg.uq.members_needed:
        raise ConfigError(f"{cfg.uq.method} needs {cfg.uq.members_needed} checkpoints, found {len(models)}")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    batch = batch_uq(models, test_set, cfg.uq)
    write_predictions(out / "predictions.csv", batch)
    conf, threshold = apply_threshold(batch, test_set.labels, cfg.threshold)
    um = uncertainty_metrics(conf)
    per_class = per_class_uacc(batch, test_set.labels, threshold, cfg.meta.num_classes)
    density = entropy_density_export(batch, test_set.labels, cfg.density_bins)
    density.write_csv(out / "entropy_density.csv")
    with open(out / "per_class_uacc.csv", "w", newline="\n") as fh:
        fh.write("class_index,class_name,uacc\n")
        for c, (name, v) in enumerate(zip(cfg.meta.class_names, per_class)):
            fh.write(f"{c},{name},{'' if math.isnan(v) else repr(float(v))}\n")
    report = {
        "dataset": cfg.dataset,
        "arch": cfg.arch.kind,
        "uq_method": cfg.uq.method,
        "T": cfg.uq.T,
        "N": cfg.uq.members_needed,
        "threshold": threshold,
        "classification": classification_report(batch.predicted, test_set.labels, cfg.meta.num_classes).to_dict(),
        "uncertainty": {**conf.to_dict(), **um.to_dict()},
        "per_class_uacc": per_class,
        "density_flags": {"correct_empty": density.correct_empty, "incorrect_empty": density.incorrect_empty},
        "software_version": __version__,
        "config_hash": cfg.digest(),
    }
    _write_json(out / "uq_report.json", report)
    return report


def cmd_spectrogram(cfg: RunConfig, input_path=None, records=None, per_class=1) -> list[Path]:
    """Export STFT magnitudes, one CSV (frames x bins) per selected record."""
    if input_path:
        data = load_csv(input_path, cfg.meta)
    else:
        data = concat(list(load_records(cfg)))
    if records is None:
        records = [int(i) for c in range(cfg.meta.num_classes) for i in np.flatnonzero(data.labels == c)[:per_class]]
    out = Path(cfg.out) / "spectrograms"
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i in records:
        if not 0 <= i < len(data):
            raise ConfigError(f"record index {i} out of range (0..{len(data) - 1})")
        spec = spectrogram(data[i], cfg.arch.stft)
        path = out / f"record_{i}.csv"
        np.savetxt(path, spec.values, delimiter=",", fmt="%.17g")
        written.append(path)
    return written


_DATASET_ALIASES = {"mitbih": "mitbih", "mit-bih": "mitbih", "ptb": "ptb", "ptbdb": "ptb"}


def cmd_table4_oracle(counts_csv, stream=None) -> bool:
    """Recompute UAcc/USen/USpe/UPre for every row of a published-counts CSV."""
    stream = stream or sys.stdout
    all_ok = True
    for check in (check_published_row(row, EXPECTED_COUNTS.get(_DATASET_ALIASES.get(row.dataset.lower()), (None,) * 3)[2])
                  for row in load_published_rows(counts_csv)):
        r = check.row
        status = "PASS" if check.ok else "FAIL"
        line = f"{status} {r.dataset}/{r.model}/{r.method}"
        if not check.passed:
            diffs = [f"{k}: recomputed {check.recomputed[k]} vs reported {r.reported[k]}"
                     for k in check.recomputed if check.recomputed[k] != r.reported[k]]
            line += " [" + "; ".join(diffs) + "]"
        if not check.total_ok:
            line += f" [row total {r.cc + r.cu + r.ic + r.iu} != test size]"
        print(line, file=stream)
        all_ok &= check.ok
    return all_ok


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config; flags override its values")
    common.add_argument("--dataset", choices=["mitbih", "ptb"])
    common.add_argument("--data-dir", help="directory holding the corpus CSV files")
    common.add_argument("--arch", choices=["lstm", "cnn1d", "transformer", "uctecg"])
    common.add_argument("--method", choices=["mcd", "ensemble", "emcd"])
    common.add_argument("--passes", type=int, metavar="T")
    common.add_argument("--members", type=int, metavar="N")
    common.add_argument("--threshold", type=float, help="fixed normalized-entropy threshold")
    common.add_argument("--seed", type=int, help="master seed for splits, training and MC passes")
    common.add_argument("--epochs", type=int)
    common.add_argument("--subsample", type=float, help="stratified fraction of the corpus to use")
    common.add_argument("--repeats", type=int, help="independent runs for mean/std reporting")
    common.add_argument("--out", metavar="DIR")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="uctecg",
                                     description="Heartbeat classification with uncertainty estimates.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train model(s) and write checkpoints")
    for name in ("evaluate", "uq"):
        p = sub.add_parser(name, parents=[common], help=f"{name} on the test split")
        p.add_argument("--checkpoints", nargs="+", help="checkpoint files (default: OUT/checkpoints)")
    p = sub.add_parser("spectrogram", parents=[common], help="export spectrogram CSVs")
    p.add_argument("action", nargs="?", choices=["export"], default="export")
    p.add_argument("--input", help="heartbeat CSV to read instead of the configured corpus")
    p.add_argument("--records", type=int, nargs="+", help="record indices (default: first per class)")
    p = sub.add_parser("table4-oracle", help="recompute uncertainty metrics from published counts")
    p.add_argument("counts_csv")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def build_config(args) -> RunConfig:
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {args.config}: {err}") from None
    if args.dataset:
        raw["dataset"] = args.dataset
    dataset = raw.get("dataset", "ptb")
    num_classes = get_meta(dataset).num_classes
    if args.data_dir:
        raw["data_dir"] = args.data_dir
    if args.out:
        raw["out"] = args.out
    if args.subsample is not None:
        raw["subsample"] = args.subsample
    if args.repeats is not None:
        raw["num_repeats"] = args.repeats
    arch = dict(raw.get("arch") or {"kind": "uctecg"})
    if args.arch:
        arch["kind"] = args.arch
    arch["num_classes"] = num_classes
    raw["arch"] = arch
    tr = dict(raw.get("train") or {})
    uq = dict(raw.get("uq") or {})
    sp = raw.get("split")
    if args.epochs is not None:
        tr["epochs"] = args.epochs
    if args.method:
        uq["method"] = args.method
    if args.passes is not None:
        uq["T"] = args.passes
    if args.members is not None:
        uq["N"] = args.members
    if args.seed is not None:
        tr["seed"] = uq["base_seed"] = args.seed
        sp = dict(sp or {"mode": DEFAULT_SPLIT_MODE[dataset]})
        sp["seed"] = args.seed
    raw["train"], raw["uq"], raw["split"] = tr, uq, sp
    if args.threshold is not None:
        raw["threshold"] = {"mode": "fixed", "value": args.threshold}
    return RunConfig.from_dict(raw)


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "table4-oracle":
            if not Path(args.counts_csv).is_file():
                raise ConfigError(f"counts file not found: {args.counts_csv}")
            return 0 if cmd_table4_oracle(args.counts_csv) else 1
        cfg = build_config(args)
        if args.command == "train":
            cmd_train(cfg)
        elif args.command == "evaluate":
            print(json.dumps(_json_value(cmd_evaluate(cfg, args.checkpoints)["mean"]), indent=2))
        elif args.command == "uq":
            print(json.dumps(_json_value(cmd_uq(cfg, args.checkpoints)["uncertainty"]), indent=2))
        else:
            for path in cmd_spectrogram(cfg, args.input, args.records):
                print(path)
    except (ConfigError, DataError, SplitError) as err:
        print(f"uctecg: error: {err}", file=sys.stderr)
        return 2
    except (TrainingError, CheckpointError, UctecgError, OSError) as err:
        print(f"uctecg: failed: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
