"""Command-line pipeline: generate, train, eval, report.

Settings come from built-in defaults, then an optional JSON file
(``--config``), then command-line flags.  Failures print one line of the form
``error: <kind>: <message>`` on stderr and exit with status 1.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import dataset as D
from . import evaluation as E
from . import models as M
from .sim import CalibrationError, ScenarioError, SimParams, calibrate, calibration_report
from .spectrum import ValidationError, default_plan

log = logging.getLogger("osaas_probe")
LOG_ENV = "OSAAS_PROBE_LOG"


class CliError(RuntimeError):
    pass


@dataclass
class RunConfig:
    dataset: str = "data/dataset.jsonl"
    checkpoints: str = "runs"
    reports: str = "reports"
    seed: int = 0
    split_seed: int = 0
    counts: tuple = D.ClassCounts().as_tuple()
    sim: dict = field(default_factory=dict)
    cnn: dict = field(default_factory=dict)
    mlp: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: Optional[str]) -> "RunConfig":
        if path is None:
            return cls()
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {path}: {exc}") from exc
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise CliError(f"unknown config keys {sorted(unknown)}")
        if "counts" in d:
            d["counts"] = tuple(d["counts"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["counts"] = list(self.counts)
        return d


def _manifest_path(dataset: Path) -> Path:
    return dataset.with_name(dataset.stem + ".manifest.json")


def _normalizer_path(dataset: Path) -> Path:
    return dataset.with_name(dataset.stem + ".normalizer.json")


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_dataset(path: Path) -> list[D.Measurement]:
    if not path.exists():
        raise CliError(f"dataset {path} does not exist; run 'generate' first")
    return D.load_jsonl(path)


def _sim_params(overrides: dict) -> tuple[SimParams, dict]:
    """Simulator parameters with calibrated coefficients unless all three are given."""
    plan = default_plan()
    params = SimParams.from_dict(overrides)
    coeffs = ("nli_coeff", "agc_tilt_coeff", "xpm_coeff")
    if not all(k in overrides for k in coeffs):
        solved = calibrate(plan, params)
        params = params.replace(**{k: overrides.get(k, getattr(solved, k)) for k in coeffs})
    return params, calibration_report(plan, params)


# ---------------------------------------------------------------------------
# commands


def cmd_generate(cfg: RunConfig, args) -> int:
    dataset = Path(cfg.dataset)
    params, cal = _sim_params(cfg.sim)
    counts = D.ClassCounts(*cfg.counts)
    log.info("generating %d measurements", counts.total)
    data = D.generate(default_plan(), params, counts, seed=cfg.seed)
    D.save_jsonl(dataset, data)
    split = D.stratified_split(data, seed=cfg.split_seed)
    norm = D.fit_normalizer(split.train)
    _write_json(_normalizer_path(dataset), norm.to_dict())
    _write_json(
        _manifest_path(dataset),
        {
            "version": __version__,
            "measurements": len(data),
            "counts_requested": list(counts.as_tuple()),
            "label_counts": D.label_histogram(data),
            "kind_counts": D.histogram(data),
            "seed": cfg.seed,
            "split_seed": cfg.split_seed,
            "split_sizes": [len(split.train), len(split.test)],
            "split_hash": split.split_hash,
            "sim_params": params.to_dict(),
            "calibration": {k: getattr(params, k) for k in ("nli_coeff", "agc_tilt_coeff", "xpm_coeff")},
            "calibration_report": cal,
        },
    )
    if args.csv:
        D.save_csv(dataset.with_suffix(".csv"), data)
    print(f"wrote {len(data)} measurements to {dataset}")
    return 0


def _prepared_split(dataset: Path, split_seed: int, expected_hash: Optional[str]) -> D.DatasetSplit:
    split = D.stratified_split(_load_dataset(dataset), seed=split_seed)
    if expected_hash is not None and split.split_hash != expected_hash:
        raise CliError(
            f"split hash mismatch for {dataset}: expected {expected_hash[:12]}, got {split.split_hash[:12]}"
        )
    return split


def _manifest_hash(dataset: Path) -> Optional[str]:
    mp = _manifest_path(dataset)
    return json.loads(mp.read_text())["split_hash"] if mp.exists() else None


def cmd_train(cfg: RunConfig, args) -> int:
    dataset = Path(cfg.dataset)
    kind = args.model
    split = _prepared_split(dataset, cfg.split_seed, _manifest_hash(dataset) if dataset.exists() else None)
    split = D.normalize(split)
    overrides = dict(getattr(cfg, kind))
    overrides.setdefault("seed", cfg.seed)
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    model = M.build_model(kind, overrides)
    Xtr, ytr = split.arrays("train")
    Xte, yte = split.arrays("test")
    log.info("training %s for %d epochs on %d samples", kind, model.config.epochs, len(Xtr))
    result = M.train(model, Xtr, ytr, Xte, yte)
    out = Path(args.out) if args.out else Path(cfg.checkpoints) / kind
    out.mkdir(parents=True, exist_ok=True)
    M.save_checkpoint(
        out / "checkpoint.json",
        model,
        split_hash=split.split_hash,
        split_seed=cfg.split_seed,
        normalizer=split.normalizer.to_dict(),
    )
    with (out / "curves.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "test_loss"])
        for e, tr, te in result.curves_rows():
            w.writerow([e, repr(tr), repr(te)])
    _write_json(out / "config.json", {"run": cfg.to_dict(), "model": kind, "model_config": model.config.to_dict()})
    _write_json(out / "manifest.json", {"model": kind, "split_hash": split.split_hash, "steps": result.steps,
                                        "epochs": model.config.epochs, "dataset": str(dataset)})
    print(f"wrote {out / 'checkpoint.json'}")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    dataset = Path(cfg.dataset)
    if args.baseline == "constant":
        split = _prepared_split(dataset, cfg.split_seed, _manifest_hash(dataset))
        _, ytr = split.arrays("train")
        majority = int(np.bincount(ytr, minlength=E.N_CLASSES).argmax())
        _, yte = split.arrays("test")
        pred = np.full(len(yte), majority)
        out = Path(args.out) if args.out else Path(cfg.reports) / "baseline"
    else:
        if args.checkpoint is None:
            raise CliError("eval needs --checkpoint unless --baseline constant is given")
        model, meta = M.load_checkpoint(args.checkpoint)
        split = _prepared_split(dataset, int(meta.get("split_seed", cfg.split_seed)), meta.get("split_hash"))
        split = D.normalize(split, D.Normalizer.from_dict(meta["normalizer"]))
        Xte, yte = split.arrays("test")
        pred = M.classify(model.predict_proba(Xte), args.threshold)
        out = Path(args.out) if args.out else Path(args.checkpoint).parent / "eval"
    kinds = [m.interference_kind for m in split.test]
    rep = E.report(yte, pred, kinds)
    E.write_report(rep, out)
    print(f"accuracy {rep.accuracy:.4f}; wrote {out / 'report.csv'}")
    return 0


def _run_report(run_dir: Path) -> Path:
    for cand in (run_dir / "eval" / "report.csv", run_dir / "report.csv"):
        if cand.exists():
            return cand
    raise CliError(f"no report.csv under {run_dir}")


def cmd_report(cfg: RunConfig, args) -> int:
    runs = []
    for item in args.run:
        name, sep, path = item.partition("=")
        if not sep:
            raise CliError(f"--run expects NAME=DIR, got {item!r}")
        runs.append((name, Path(path)))
    out = Path(args.out) if args.out else Path(cfg.reports) / "summary"
    out.mkdir(parents=True, exist_ok=True)
    tables = {name: E.read_report(_run_report(d)) for name, d in runs}
    keys = list(dict.fromkeys(k for t in tables.values() for k in t))
    with (out / "comparison.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "class", *tables])
        for k in keys:
            w.writerow([*k, *(repr(t[k]) if k in t else "" for t in tables.values())])
    with (out / "curves_smoothed.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "epoch", "train_loss_ma", "test_loss_ma"])
        for name, d in runs:
            curves = d / "curves.csv"
            if not curves.exists():
                continue
            with curves.open() as cf:
                rows = list(csv.DictReader(cf))
            tr = E.moving_average([float(r["train_loss"]) for r in rows], args.window)
            te = E.moving_average([float(r["test_loss"]) for r in rows], args.window)
            for r, a, b in zip(rows, tr, te):
                w.writerow([name, r["epoch"], repr(float(a)), repr(float(b))])
    if "cnn" in tables and "mlp" in tables:
        for cls in E.CLASS_NAMES[1:]:
            c, m = tables["cnn"][("f1", cls)], tables["mlp"][("f1", cls)]
            if c < m:
                msg = f"CNN F1 below MLP for {cls}: {c:.4f} < {m:.4f}"
                warnings.warn(msg)
                print(f"warning: {msg}", file=sys.stderr)
    print(f"wrote {out / 'comparison.csv'}")
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="osaas-probe", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--dataset", help="dataset JSON-lines path")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--split-seed", type=int)

    g = sub.add_parser("generate", help="simulate and label a dataset")
    common(g)
    g.add_argument("--counts", help="per-class targets: none,power_increase,add_drop,ook")
    g.add_argument("--csv", action="store_true", help="also write a flat CSV export")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a classifier")
    common(t)
    t.add_argument("--model", choices=sorted(M.MODEL_TYPES), default="cnn")
    t.add_argument("--epochs", type=int)
    t.add_argument("--out", help="output directory (default <checkpoints>/<model>)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    common(e)
    e.add_argument("--checkpoint")
    e.add_argument("--baseline", choices=["constant"])
    e.add_argument("--threshold", type=float, default=0.5)
    e.add_argument("--out", help="report directory (default <checkpoint dir>/eval)")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="compare runs and smooth learning curves")
    common(r)
    r.add_argument("--run", action="append", required=True, metavar="NAME=DIR")
    r.add_argument("--window", type=int, default=25)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config)
    if args.dataset is not None:
        cfg.dataset = args.dataset
    if args.seed is not None:
        cfg.seed = args.seed
    if args.split_seed is not None:
        cfg.split_seed = args.split_seed
    if getattr(args, "counts", None):
        try:
            cfg.counts = D.ClassCounts.parse(args.counts).as_tuple()
        except ValueError as exc:
            raise CliError(str(exc)) from exc
    return cfg


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(resolve_config(args), args)
    except (CliError, CalibrationError, ScenarioError, ValidationError, M.CheckpointError, M.TrainingError,
            ValueError, KeyError, OSError) as exc:
        kind = type(exc).__name__
        msg = " ".join(str(exc).split())
        print(f"error: {kind}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
