"""Desk-scale few-shot experiment engine.

A run is: draw (or load) a world, train a base classifier together with
the converter, fine-tune on a balanced k-shot set with the optional
calibration/augmentation and reweighting modules, then evaluate on fresh
draws. Every random consumer owns a named stream (see :mod:`lrcalib.rng`),
so arms that differ only in module switches share worlds and shot draws.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .ccva import (CalibrationReport, GaussianSpec, base_statistics, calibrate_center, loss_aug,
                   sample_augmented, variance_transfer)
from .classifier import ClassifierHead, cross_entropy, cross_entropy_grad
from .config import ExperimentConfig, to_flat
from .errors import InvalidConfig, InvalidGrid, ZeroVector
from .fdbo import CENTRAL, HIGH, LOW, ReweightFunction, assign_batch, loss_cls_weighted, loss_edge, loss_edge_grad
from .ifc import IfcModel, IfcTrainBatch, ifc_step
from .memory_bank import MemoryBank
from .rng import stream
from .selection import select_grouped
from .world import generate_world

log = logging.getLogger(__name__)


@dataclass
class BaseArtifacts:
    head: ClassifierHead
    ifc: IfcModel
    bank: MemoryBank
    base_stats: dict
    curves: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Accuracy:
    novel: float
    base: float
    overall: float
    novel_correct: int
    novel_total: int
    base_correct: int
    base_total: int


@dataclass
class SeedResult:
    seed: int
    accuracy: Accuracy
    calibration: list = field(default_factory=list)     # CalibrationReport per novel class
    augmentation: list = field(default_factory=list)    # GaussianSpec per novel class
    weight_stats: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    importance_rows: list = field(default_factory=list)
    base_curves: dict = field(default_factory=dict)
    head: ClassifierHead | None = None


def _curve_value(v):
    return None if v is None or not np.isfinite(v) else float(v)


# -- base stage -------------------------------------------------------------

def base_train(world, config: ExperimentConfig, seed: int) -> BaseArtifacts:
    """Base-class training of the classifier and the converter.

    Each step takes a cross-entropy step on the head, pushes the batch into
    the memory bank and, once warm-up is over, trains the converter towards
    the LRSample targets selected from the bank.
    """
    t, lam = config.train, config.loss
    head = ClassifierHead.init(world.base_ids, world.dim, stream(seed, "head-init"))
    hidden = max(1, int(round(config.ccva.hidden_ratio * world.dim)))
    ifc = IfcModel.init(world.dim, stream(seed, "ifc-init"), hidden)
    bank = MemoryBank(world.dim, config.bank_capacity)
    rng = stream(seed, "batches")
    base_ids = np.asarray(world.base_ids)
    curves = {"step": [], "ce": [], "ifc": [], "trans": [], "spec": []}

    for step in range(t.base_steps):
        labels = base_ids[rng.integers(base_ids.size, size=t.batch_size)]
        x = world.sample_train(labels, rng)
        cols = head.columns(labels)
        ce = float(cross_entropy(head.logits(x), cols).mean())
        head.weighted_ce_step(x, labels, np.full(labels.size, 1.0 / labels.size), t.lr_base)
        bank.insert_rows(labels, x, "base")

        value = parts = None
        if step >= t.warmup_steps:
            pools = {int(c): bank.class_pool(int(c)) for c in np.unique(labels)}
            try:
                idx = select_grouped(x, labels, pools, config.ccva.fusion)
            except ZeroVector:
                idx = np.full(labels.size, -1)
            keep = np.flatnonzero(idx >= 0)
            inputs = x[keep]
            targets = np.array([pools[int(labels[i])][idx[i]] for i in keep]).reshape(-1, x.shape[1])
            classes = labels[keep]
            if keep.size:
                batch = IfcTrainBatch(inputs, targets, classes)
                try:
                    ifc, value, parts = ifc_step(ifc, batch, head, lam.lambda1, lam.lambda2, t.lr_base,
                                                 config.ccva.joint_head)
                except ZeroVector:
                    log.debug("step %d: degenerate converter output, step skipped", step)
        if step % config.run.curve_every == 0 or step == t.base_steps - 1:
            curves["step"].append(step)
            curves["ce"].append(ce)
            curves["ifc"].append(_curve_value(value))
            curves["trans"].append(_curve_value(parts["trans"]) if parts else None)
            curves["spec"].append(_curve_value(parts["spec"]) if parts else None)

    base_stats = base_statistics(bank, world.base_ids) if t.base_steps else {}
    return BaseArtifacts(head, ifc, bank, base_stats, curves)


# -- fine-tuning stage ------------------------------------------------------

def draw_balanced_set(world, k_shot: int, seed: int):
    """``k_shot`` training draws for every base and novel class."""
    labels = np.repeat(np.asarray(world.class_ids), k_shot)
    return world.sample_train(labels, stream(seed, "shots")), labels


def fine_tune(base: BaseArtifacts, world, config: ExperimentConfig, seed: int) -> SeedResult:
    """Fine-tune the base head on the balanced k-shot set and evaluate it."""
    t, lam, cc, fd = config.train, config.loss, config.ccva, config.fdbo
    bank = base.bank.copy()
    head = base.head.extended(world.novel_ids, stream(seed, "novel-head-init"))

    bal_x, bal_y = draw_balanced_set(world, t.k_shot, seed)
    is_novel = np.isin(bal_y, world.novel_ids)
    # bulk inserts over runs of equal partition keep the row order
    cuts = np.flatnonzero(np.diff(is_novel)) + 1
    for run in np.split(np.arange(bal_y.size), cuts):
        bank.insert_rows(bal_y[run], bal_x[run], "novel" if is_novel[run[0]] else "base")

    calibration: list[CalibrationReport] = []
    specs: dict[int, GaussianSpec] = {}
    if cc.enabled:
        for c in world.novel_ids:
            shots = bal_x[bal_y == c]
            calibration.append(calibrate_center(bank, base.ifc, c, shots, cc.lrsample_count, world.base_ids))
            specs[c] = variance_transfer(c, base.base_stats, bank.prototype(c).mean, cc.k_similar)

    fn = ReweightFunction(fd.g_family, fd.alpha)
    rng_b = stream(seed, "finetune-batches")
    rng_a = stream(seed, "augmentation")
    bs = min(t.batch_size, bal_y.size)
    curves = {k: [] for k in ("step", "total", "ce", "cls_w", "edge", "aug")}
    counts = {HIGH: 0, LOW: 0, CENTRAL: 0}
    weight_sum = weight_n = 0.0
    region_weight = {HIGH: 0.0, LOW: 0.0}
    importance_rows = []
    novel_ids = list(world.novel_ids)

    for step in range(t.finetune_steps):
        idx = rng_b.choice(bal_y.size, size=bs, replace=False)
        x, y = bal_x[idx], bal_y[idx]
        n = y.size
        cols = head.columns(y)
        logits = head.logits(x)
        ce = cross_entropy(logits, cols)
        coef = np.full(n, 1.0 / n)
        total = float(ce.mean())
        cls_w = edge = aug = None
        active = step >= t.warmup_steps

        if fd.enabled and active:
            imp = assign_batch(x, logits, cols, y, bank, config.density, fn, head.class_ids)
            cls_w = loss_cls_weighted(ce, imp.weights)
            edge = loss_edge(imp.weights)
            total += cls_w + lam.lambda3 * edge
            coef = coef + imp.weights / n
            if fd.edge_grad:
                dv = loss_edge_grad(imp.weights)
                dw = np.array([float(fn.weight_derivative(ce[i], r)) for i, r in enumerate(imp.regions)])
                coef = coef + lam.lambda3 * dv * dw
            weight_sum += float(imp.weights.sum())
            weight_n += n
            for a in imp.assignments:
                counts[a.region] += 1
                if a.region in region_weight:
                    region_weight[a.region] += a.weight
                if config.run.dump_importance:
                    importance_rows.append({"step": step, "sample": int(idx[a.sample_index]), "region": a.region,
                                            "d_in": a.d_in_value, "d_sim": a.d_sim_value, "weight": a.weight})
            counts[CENTRAL] += n - len(imp.assignments)

        grad = cross_entropy_grad(logits, cols) * coef[:, None]
        inputs = x
        if cc.enabled and active and specs:
            xa = np.vstack([sample_augmented(specs[c], cc.aug_per_class, rng_a) for c in novel_ids])
            ya = np.repeat(novel_ids, cc.aug_per_class)
            logits_a = head.logits(xa)
            per_class = [loss_aug(logits_a[ya == c], head.columns([c])[0]) for c in novel_ids]
            aug = float(np.mean(per_class))
            total += lam.lambda4 * aug
            grad_a = cross_entropy_grad(logits_a, head.columns(ya)) * (lam.lambda4 / ya.size)
            grad = np.vstack([grad, grad_a])
            inputs = np.vstack([x, xa])
            bank.insert_rows(ya, xa, "novel")

        head.weights -= t.lr_finetune * (grad.T @ inputs)
        head.bias -= t.lr_finetune * grad.sum(axis=0)

        if step % config.run.curve_every == 0 or step == t.finetune_steps - 1:
            curves["step"].append(step)
            curves["total"].append(total)
            curves["ce"].append(float(ce.mean()))
            curves["cls_w"].append(_curve_value(cls_w))
            curves["edge"].append(_curve_value(edge))
            curves["aug"].append(_curve_value(aug))

    weight_stats = {
        "mean_weight": weight_sum / weight_n if weight_n else 1.0,
        "n_high": counts[HIGH], "n_low": counts[LOW], "n_central": counts[CENTRAL],
        "mean_high_weight": region_weight[HIGH] / counts[HIGH] if counts[HIGH] else None,
        "mean_low_weight": region_weight[LOW] / counts[LOW] if counts[LOW] else None,
    }
    acc = evaluate(head, world, config.run.n_test, seed)
    return SeedResult(seed, acc, calibration, list(specs.values()), weight_stats, curves,
                      importance_rows, base.curves, head)


def finetune_losses(base: BaseArtifacts, world, config: ExperimentConfig, seed: int) -> list[float]:
    """Per-step total fine-tuning loss at full resolution (for audits)."""
    cfg = config.replace(run__curve_every=1)
    return fine_tune(base, world, cfg, seed).curves["total"]


# -- evaluation -------------------------------------------------------------

def evaluate(head, world, n_test: int, seed: int) -> Accuracy:
    """Top-1 accuracy on ``n_test`` fresh draws per class.

    Classes the head does not score count as errors.
    """
    if n_test < 1:
        raise ValueError("n_test must be >= 1")
    labels = np.repeat(np.asarray(world.class_ids), n_test)
    x = world.sample_test(labels, stream(seed, "test"))
    correct = np.asarray(head.predict(x)) == labels
    is_novel = np.isin(labels, world.novel_ids)
    nc, nt = int(correct[is_novel].sum()), int(is_novel.sum())
    bc, bt = int(correct[~is_novel].sum()), int((~is_novel).sum())
    return Accuracy(nc / nt if nt else 0.0, bc / bt if bt else 0.0, (nc + bc) / (nt + bt), nc, nt, bc, bt)


# -- runs -------------------------------------------------------------------

_BASE_KEYS = ("world.", "train.lr_base", "train.base_steps", "train.batch_size", "train.warmup_steps",
              "loss.lambda1", "loss.lambda2", "ccva.fusion", "ccva.hidden_ratio", "ccva.joint_head",
              "bank_capacity", "run.curve_every")


def base_key(config: ExperimentConfig) -> tuple:
    """Config entries that influence base training (for artifact reuse)."""
    return tuple(sorted((k, v) for k, v in to_flat(config).items() if k.startswith(_BASE_KEYS)))


class ArtifactCache:
    """Reuses worlds and base-training results across arms sharing a seed."""

    def __init__(self, world=None):
        self._world = world
        self._store = {}

    def get(self, config: ExperimentConfig, seed: int):
        key = (seed, base_key(config))
        if key not in self._store:
            world = self._world if self._world is not None else generate_world(config, seed)
            log.info("base training, seed %d", seed)
            self._store[key] = (world, base_train(world, config, seed))
        return self._store[key]


def run_seed(config: ExperimentConfig, seed: int, cache: ArtifactCache | None = None) -> SeedResult:
    cache = cache or ArtifactCache()
    world, base = cache.get(config, seed)
    return fine_tune(base, world, config, seed)


def run_experiment(config: ExperimentConfig, world=None, cache: ArtifactCache | None = None):
    """Full pipeline for every seed in ``config.run.seeds``."""
    from .report import MetricsReport

    cache = cache or ArtifactCache(world)
    results = []
    for seed in config.run.seeds:
        log.info("fine-tuning, seed %d", seed)
        results.append(run_seed(config, seed, cache))
    return MetricsReport(config, results)


# -- ablations --------------------------------------------------------------

GRID_ALIASES = {
    "lrsamples": "ccva.lrsample_count",
    "shots": "train.k_shot",
    "g": "fdbo.g_family",
    "eta": "density.eta",
    "d_in": "density.d_in",
    "hidden": "ccva.hidden_ratio",
}
FAMILY_ALIASES = {"exp": "exponential", "lin": "linear", "sig": "sigmoid"}
COMPONENTS = {
    "none": {"ccva.enabled": False, "fdbo.enabled": False},
    "ccva": {"ccva.enabled": True, "fdbo.enabled": False},
    "fdbo": {"ccva.enabled": False, "fdbo.enabled": True},
    "both": {"ccva.enabled": True, "fdbo.enabled": True},
}


def parse_grid(spec: str) -> list[tuple[str, list[str]]]:
    """Parse ``"axis=v1,v2 axis2=..."`` into ordered ``(axis, values)`` pairs."""
    from .config import KEYS

    axes = []
    for token in spec.split():
        if "=" not in token:
            raise InvalidGrid(f"grid token {token!r} is not axis=values")
        axis, raw = token.split("=", 1)
        values = [v for v in raw.split(",") if v]
        if not values:
            raise InvalidGrid(f"axis {axis!r} has no values")
        if axis != "component" and GRID_ALIASES.get(axis, axis) not in KEYS:
            raise InvalidGrid(f"unknown grid axis {axis!r}")
        if axis == "component" and set(values) - set(COMPONENTS):
            raise InvalidGrid(f"component values must be among {sorted(COMPONENTS)}")
        if any(a == axis for a, _ in axes):
            raise InvalidGrid(f"axis {axis!r} given twice")
        axes.append((axis, values))
    if not axes:
        raise InvalidGrid("empty grid")
    return axes


def grid_cells(axes) -> list[dict]:
    """Cartesian product of grid axes as ``{axis: value}`` dicts."""
    names = [a for a, _ in axes]
    return [dict(zip(names, combo)) for combo in itertools.product(*(v for _, v in axes))]


def cell_overrides(cell: dict) -> dict:
    out = {}
    for axis, value in cell.items():
        if axis == "component":
            out.update(COMPONENTS[value])
            continue
        key = GRID_ALIASES.get(axis, axis)
        if key == "fdbo.g_family":
            value = FAMILY_ALIASES.get(value, value)
        out[key] = value
    return out


def apply_cell(config: ExperimentConfig, cell: dict) -> ExperimentConfig:
    from .config import from_flat

    flat = to_flat(config)
    flat.update(cell_overrides(cell))
    try:
        return from_flat(flat)
    except InvalidConfig as exc:
        raise InvalidGrid(f"grid cell {cell}: {exc}") from exc


def run_ablation(config: ExperimentConfig, grid, world=None):
    """Run every grid cell over the shared seed list.

    ``grid`` is a grid string, a parsed axis list, or a list of cell dicts.
    Returns an :class:`~lrcalib.report.AblationReport`.
    """
    from .report import AblationReport

    if isinstance(grid, str):
        axes = parse_grid(grid)
        cells = grid_cells(axes)
    elif grid and isinstance(grid[0], tuple):
        axes, cells = list(grid), grid_cells(grid)
    else:
        cells = [dict(c) for c in grid]
        axes = [(a, sorted({str(c[a]) for c in cells})) for a in (cells[0] if cells else {})]
    if not cells:
        raise InvalidGrid("empty grid")
    configs = [apply_cell(config, cell) for cell in cells]
    cache = ArtifactCache(world)
    reports = [run_experiment(cfg, cache=cache) for cfg in configs]
    return AblationReport(config, axes, cells, reports)
