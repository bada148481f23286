"""Command-line front end.

Commands::

    lrcalib gen         --out world.lrc [--per-class N]
    lrcalib base-train  --out ckpt/ [--features world.lrc]
    lrcalib finetune    --out metrics.json [--checkpoints ckpt/] [--features world.lrc]
    lrcalib ablate      --grid "g=linear,exp,sigmoid shots=1,2" --out ablation.json
    lrcalib report      metrics.json [--plot-dir DIR]

Every command accepts ``--config`` plus the override flags listed in
``_add_common``. Metrics files are JSON with sorted keys and embed the hash
of the manifest (effective config, seeds, version, input digests) that
produced them; wall-clock timestamps go to a ``.run.json`` sidecar so the
metrics themselves stay byte-identical across reruns.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, from_flat, load, to_flat
from .errors import InvalidConfig, IoError, LrcalibError, ParseError
from .fileio import CHECKPOINT_FILES, FeatureFile, load_base, read_features, save_base, write_features
from .harness import FAMILY_ALIASES, base_train, fine_tune, generate_world, parse_grid, run_ablation
from .report import MetricsReport
from .rng import stream
from .world import EmpiricalWorld

log = logging.getLogger("lrcalib")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


# -- configuration ----------------------------------------------------------

def parse_seeds(text: str) -> tuple[int, ...]:
    """``"0,1,5"`` or ``"0-9"`` (inclusive ranges), possibly mixed."""
    seeds = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        m = re.fullmatch(r"(\d+)(?:-(\d+))?", part)
        if not m:
            raise InvalidConfig(f"bad seed list {text!r}")
        lo = int(m.group(1))
        seeds.extend(range(lo, int(m.group(2) or lo) + 1))
    if not seeds:
        raise InvalidConfig("empty seed list")
    return tuple(seeds)


def effective_config(args) -> ExperimentConfig:
    """Config file (or defaults) with command-line overrides applied."""
    cfg = load(args.config) if args.config else ExperimentConfig()
    flat = to_flat(cfg)
    if args.seeds is not None:
        flat["run.seeds"] = parse_seeds(args.seeds)
    if args.seed is not None:
        flat["run.seeds"] = (args.seed,)
    if args.k_shot is not None:
        flat["train.k_shot"] = args.k_shot
    if args.no_ccva:
        flat["ccva.enabled"] = False
    if args.no_fdbo:
        flat["fdbo.enabled"] = False
    if args.g_family is not None:
        flat["fdbo.g_family"] = FAMILY_ALIASES.get(args.g_family, args.g_family)
    if args.lrsamples is not None:
        flat["ccva.lrsample_count"] = args.lrsamples
    if args.eta is not None:
        flat["density.eta"] = args.eta
    if args.d_in is not None:
        flat["density.d_in"] = args.d_in
    return from_flat(flat)


# -- manifests and output ---------------------------------------------------

def file_digest(path) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return h.hexdigest()


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False, default=_json_default) + "\n"


def build_manifest(command: str, cfg: ExperimentConfig, inputs: dict) -> dict:
    flat = to_flat(cfg)
    flat["run.seeds"] = list(cfg.run.seeds)
    return {
        "command": command,
        "config": flat,
        "seeds": list(cfg.run.seeds),
        "version": __version__,
        "inputs": {name: file_digest(path) for name, path in sorted(inputs.items())},
    }


def manifest_hash(manifest: dict) -> str:
    return hashlib.sha256(canonical_json(manifest).encode()).hexdigest()


def write_json(path, payload: dict) -> None:
    try:
        Path(path).write_text(canonical_json(payload))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_outputs(out, manifest: dict, body: dict) -> str:
    """Write the metrics file and its run sidecar; returns the manifest hash."""
    digest = manifest_hash(manifest)
    write_json(out, {"manifest_hash": digest, "manifest": manifest, **body})
    now = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    write_json(f"{out}.run.json", {"manifest_hash": digest, "finished": now, "output": str(out)})
    return digest


def read_metrics(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict) or "manifest_hash" not in doc:
        raise ParseError(f"{path}: not a metrics file")
    return doc


# -- worlds -----------------------------------------------------------------

def load_world(cfg: ExperimentConfig, seed: int, features: FeatureFile | None):
    if features is None:
        return generate_world(cfg, seed)
    return EmpiricalWorld(features.features, features.labels, features.partition(), seed)


def _checkpoint_dir(root, seed: int) -> Path:
    return Path(root) / f"seed-{seed}"


# -- commands ---------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = effective_config(args)
    seed = cfg.run.seeds[0]
    world = generate_world(cfg, seed)
    if args.per_class < 1:
        raise InvalidConfig("--per-class must be >= 1")
    labels = np.repeat(np.asarray(world.class_ids), args.per_class)
    x = world.draw(labels, stream(seed, "export"))
    ff = FeatureFile(x, labels, np.isin(labels, world.novel_ids), len(world.class_ids))
    write_features(args.out, ff)
    log.info("wrote %d features of dimension %d to %s", labels.size, world.dim, args.out)
    return 0


def cmd_base_train(args) -> int:
    cfg = effective_config(args)
    features = read_features(args.features) if args.features else None
    out = Path(args.out)
    for seed in cfg.run.seeds:
        world = load_world(cfg, seed, features)
        log.info("base training, seed %d", seed)
        save_base(_checkpoint_dir(out, seed), base_train(world, cfg, seed))
    inputs = {"features": args.features} if args.features else {}
    write_json(out / "manifest.json", build_manifest("base-train", cfg, inputs))
    return 0


def cmd_finetune(args) -> int:
    cfg = effective_config(args)
    features = read_features(args.features) if args.features else None
    results = []
    inputs = {"features": args.features} if args.features else {}
    for seed in cfg.run.seeds:
        world = load_world(cfg, seed, features)
        if args.checkpoints:
            ckpt = _checkpoint_dir(args.checkpoints, seed)
            base = load_base(ckpt, world)
            inputs.update({f"seed-{seed}/{name}": ckpt / fname for name, fname in CHECKPOINT_FILES.items()})
        else:
            log.info("base training, seed %d", seed)
            base = base_train(world, cfg, seed)
        log.info("fine-tuning, seed %d", seed)
        results.append(fine_tune(base, world, cfg, seed))
    report = MetricsReport(cfg, results)
    write_outputs(args.out, build_manifest("finetune", cfg, inputs), report.to_dict())
    return 0


def cmd_ablate(args) -> int:
    cfg = effective_config(args)
    axes = parse_grid(args.grid)
    features = read_features(args.features) if args.features else None
    if features is not None and len(cfg.run.seeds) > 1:
        log.info("feature file given: every seed resamples the same rows")
    world = load_world(cfg, cfg.run.seeds[0], features) if features is not None else None
    ablation = run_ablation(cfg, axes, world)
    manifest = build_manifest("ablate", cfg, {"features": args.features} if args.features else {})
    manifest["grid"] = args.grid
    write_outputs(args.out, manifest, {"ablation": ablation.to_dict()})
    return 0


def _fmt(stat) -> str:
    if not stat or stat.get("mean") is None:
        return "-"
    return f"{stat['mean']:.4f} +/- {stat['std']:.4f}"


def _print_table(headers, rows, file) -> None:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h))
              for i, h in enumerate(headers)]
    print("  ".join(str(h).ljust(w) for h, w in zip(headers, widths)), file=file)
    for r in rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)), file=file)


def _write_csv(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _num(v):
    return "" if v is None else repr(float(v))


def render_report(doc: dict, plot_dir: Path | None, file=None) -> list[Path]:
    """Print the summary tables of a metrics document; write plot data.

    Returns the plot-data paths written.
    """
    file = sys.stdout if file is None else file
    written = []
    print(f"manifest {doc['manifest_hash'][:16]}", file=file)
    if "ablation" in doc:
        ab = doc["ablation"]
        print("\nablation cells", file=file)
        _print_table(["shot", "cell", "novel acc", "base acc"],
                     [(r["shot"], r["cell"], _fmt(r["novel_acc"]), _fmt(r["base_acc"])) for r in ab["table"]],
                     file)
        for axis, rows in ab["axis_tables"].items():
            print(f"\n{axis}", file=file)
            _print_table([axis, "shot", "novel acc"], [(r["value"], r["shot"], _fmt(r["novel_acc"])) for r in rows],
                         file)
            if plot_dir is not None:
                path = plot_dir / f"{axis}.csv"
                _write_csv(path, ["shot", "x", "y", "std"],
                           [(r["shot"], r["value"], _num(r["novel_acc"]["mean"]), _num(r["novel_acc"]["std"]))
                            for r in rows])
                written.append(path)
        return written

    agg = doc["aggregate"]
    mods = doc["modules"]
    print(f"k_shot={doc['k_shot']} ccva={'on' if mods['ccva'] else 'off'} fdbo={'on' if mods['fdbo'] else 'off'} "
          f"seeds={len(doc['per_seed'])}", file=file)
    _print_table(["metric", "mean +/- std"], [(k, _fmt(v)) for k, v in sorted(agg.items())], file)
    table = doc.get("calibration_table", [])
    if table:
        print("\ncalibration (normalized Euclidean distance to the similar base center)", file=file)
        _print_table(["class", "dist w/o", "dist w/"],
                     [(r["class"], _fmt(r["dist_without_lrsamples"]), _fmt(r["dist_with_lrsamples"])) for r in table],
                     file)
    if plot_dir is not None:
        if table:
            path = plot_dir / "calibration.csv"
            _write_csv(path, ["x", "y", "std", "y_without", "std_without"],
                       [(r["class"], _num(r["dist_with_lrsamples"]["mean"]), _num(r["dist_with_lrsamples"]["std"]),
                         _num(r["dist_without_lrsamples"]["mean"]), _num(r["dist_without_lrsamples"]["std"]))
                        for r in table])
            written.append(path)
        curve = doc.get("loss_curve")
        if curve and curve["step"]:
            path = plot_dir / "loss_curve.csv"
            _write_csv(path, ["x", "y", "std"],
                       [(s, _num(m), _num(sd)) for s, m, sd in zip(curve["step"], curve["mean"], curve["std"])])
            written.append(path)
    return written


def cmd_report(args) -> int:
    doc = read_metrics(args.metrics)
    plot_dir = Path(args.plot_dir) if args.plot_dir else Path(f"{args.metrics}.plots")
    try:
        plot_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {plot_dir}: {exc}") from exc
    try:
        render_report(doc, plot_dir)
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{args.metrics}: malformed metrics file ({exc})") from exc
    return 0


# -- argument parsing -------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file (defaults if omitted)")
    p.add_argument("--seed", type=int, help="single root seed (overrides run.seeds)")
    p.add_argument("--seeds", help="seed list, e.g. 0,1,2 or 0-9")
    p.add_argument("--features", help="feature file replacing the synthetic world")
    p.add_argument("--k-shot", type=int)
    p.add_argument("--no-ccva", action="store_true", help="disable calibration and augmentation")
    p.add_argument("--no-fdbo", action="store_true", help="disable density-based reweighting")
    p.add_argument("--g-family", help="linear, exponential (exp) or sigmoid")
    p.add_argument("--lrsamples", type=int, help="LRSamples generated per shot")
    p.add_argument("--eta", type=float)
    p.add_argument("--d-in", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lrcalib", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic world draw as a feature file")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=200, help="rows per class (default 200)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("base-train", help="base training; writes checkpoints per seed")
    _add_common(p)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.set_defaults(func=cmd_base_train)

    p = sub.add_parser("finetune", help="fine-tune and evaluate; writes a metrics file")
    _add_common(p)
    p.add_argument("--checkpoints", help="directory written by base-train (trains inline if omitted)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("ablate", help="run a parameter grid over paired seeds")
    _add_common(p)
    p.add_argument("--grid", required=True, help='e.g. "lrsamples=0,1,2,3 shots=1,2"')
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="print tables and write plot data for a metrics file")
    p.add_argument("metrics")
    p.add_argument("--plot-dir", help="plot-data directory (default: <metrics>.plots)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("LRCALIB_LOG", "error").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")
    if level not in LOG_LEVELS:
        log.error("LRCALIB_LOG=%r not in %s; using error", level, sorted(LOG_LEVELS))
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LrcalibError as exc:
        print(f"lrcalib: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
