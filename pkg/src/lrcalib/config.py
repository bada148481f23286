"""Experiment configuration in a flat ``section.key = value`` text format.

Loading is strict: every key must be present exactly once and unknown keys
are rejected, so an emitted config fully describes a run.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import get_type_hints

from .errors import InvalidConfig, IoError
from .fdbo import FAMILIES, DensityParams
from .selection import FUSION_MODES

K_SHOTS = (1, 2, 3, 5, 10)


def _doc(text: str, **kw):
    return field(metadata={"doc": text}, **kw)


@dataclass(frozen=True)
class WorldConfig:
    dim: int = _doc("feature dimension", default=16)
    base_classes: int = _doc("number of base classes", default=15)
    novel_classes: int = _doc("number of novel classes", default=5)
    delta: float = _doc("offset of each novel mean from its similar base mean", default=1.0)
    spread: float = _doc("per-component class standard deviation scale", default=1.0)
    base_scale: float = _doc("standard deviation of base-class mean components", default=3.0)
    variance_jitter: float = _doc("relative spread of per-component variances, in [0, 1)", default=0.5)


@dataclass(frozen=True)
class TrainConfig:
    k_shot: int = _doc("shots per class in the balanced fine-tuning set (1, 2, 3, 5, 10)", default=1)
    lr_base: float = _doc("SGD step size during base training (classifier and converter)", default=0.01)
    lr_finetune: float = _doc("SGD step size during fine-tuning", default=0.005)
    base_steps: int = _doc("base-training iterations", default=2000)
    finetune_steps: int = _doc("fine-tuning iterations", default=600)
    batch_size: int = _doc("samples per iteration", default=32)
    warmup_steps: int = _doc("iterations of bank filling before the modules switch on", default=200)


@dataclass(frozen=True)
class LossConfig:
    lambda1: float = _doc("weight of the converter alignment loss (base stage)", default=0.05)
    lambda2: float = _doc("weight of the converter class-specificity loss (base stage)", default=0.4)
    lambda3: float = _doc("weight of the weight-dispersion loss (fine-tuning)", default=0.3)
    lambda4: float = _doc("weight of the augmented-sample loss (fine-tuning)", default=0.1)


@dataclass(frozen=True)
class CcvaConfig:
    enabled: bool = _doc("center calibration and variance augmentation on/off", default=True)
    lrsample_count: int = _doc("cascaded LRSamples generated per novel shot", default=2)
    k_similar: int = _doc("similar base classes whose variances are averaged", default=2)
    aug_per_class: int = _doc("augmented features per novel class per iteration", default=8)
    fusion: str = _doc("LRSample score fusion: score (softmax of raw scores) or rank", default="score")
    hidden_ratio: float = _doc("converter hidden width as a multiple of dim (1.0 = equal channel)",
                               default=1.0)
    joint_head: bool = _doc("let the specificity loss also update the classifier", default=False)


@dataclass(frozen=True)
class FdboConfig:
    enabled: bool = _doc("density-based edge-sample reweighting on/off", default=True)
    g_family: str = _doc("reweighting family: linear, exponential or sigmoid", default="sigmoid")
    alpha: float = _doc("reweighting amplitude", default=0.5)
    edge_grad: bool = _doc("backpropagate the dispersion loss through the weights", default=False)


@dataclass(frozen=True)
class RunConfig:
    seeds: tuple = _doc("comma-separated root seeds", default=(0,))
    n_test: int = _doc("test draws per class at evaluation", default=1000)
    dump_importance: bool = _doc("record per-sample importance assignments", default=False)
    curve_every: int = _doc("record loss curves every this many iterations", default=10)


@dataclass(frozen=True)
class ExperimentConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    ccva: CcvaConfig = field(default_factory=CcvaConfig)
    fdbo: FdboConfig = field(default_factory=FdboConfig)
    density: DensityParams = field(default_factory=DensityParams)
    bank_capacity: int = 4096
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        validate(self)

    def replace(self, **dotted) -> "ExperimentConfig":
        """Copy with ``section__key`` or dotted-string overrides applied."""
        flat = to_flat(self)
        for k, v in dotted.items():
            key = k.replace("__", ".")
            if key not in flat:
                raise InvalidConfig(f"unknown config key {key!r}")
            flat[key] = v
        return from_flat(flat)


_SECTIONS = {
    "world": WorldConfig, "train": TrainConfig, "loss": LossConfig, "ccva": CcvaConfig,
    "fdbo": FdboConfig, "density": DensityParams, "run": RunConfig,
}
_DENSITY_DOCS = {"d_in": "own-class coverage fraction fixing the density radius",
                 "eta": "radius multiplier for the similar class"}


def _iter_keys():
    """Yield ``(dotted_key, section_or_None, field_name, type, doc)`` in file order."""
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in _SECTIONS:
            cls = _SECTIONS[f.name]
            hints = get_type_hints(cls)
            for sf in dataclasses.fields(cls):
                doc = sf.metadata.get("doc") or _DENSITY_DOCS.get(sf.name, "")
                yield f"{f.name}.{sf.name}", f.name, sf.name, hints[sf.name], doc
        else:
            yield f.name, None, f.name, int, "memory bank capacity (total stored features)"


KEYS = [k for k, *_ in _iter_keys()]


def validate(cfg: ExperimentConfig) -> None:
    w, t, c, fd, r = cfg.world, cfg.train, cfg.ccva, cfg.fdbo, cfg.run
    checks = [
        (w.dim >= 2, "world.dim must be >= 2"),
        (w.base_classes >= 2, "world.base_classes must be >= 2"),
        (w.novel_classes >= 1, "world.novel_classes must be >= 1"),
        (w.delta >= 0, "world.delta must be >= 0"),
        (w.spread > 0, "world.spread must be positive"),
        (w.base_scale > 0, "world.base_scale must be positive"),
        (0 <= w.variance_jitter < 1, "world.variance_jitter must lie in [0, 1)"),
        (t.k_shot in K_SHOTS, f"train.k_shot must be one of {K_SHOTS}"),
        (t.lr_base >= 0 and t.lr_finetune >= 0, "learning rates must be >= 0"),
        (t.base_steps >= 0 and t.finetune_steps >= 0, "step counts must be >= 0"),
        (t.batch_size >= 1, "train.batch_size must be >= 1"),
        (t.warmup_steps >= 0, "train.warmup_steps must be >= 0"),
        (all(v >= 0 for v in dataclasses.astuple(cfg.loss)), "loss weights must be >= 0"),
        (c.lrsample_count >= 0, "ccva.lrsample_count must be >= 0"),
        (c.k_similar >= 1, "ccva.k_similar must be >= 1"),
        (c.aug_per_class >= 1, "ccva.aug_per_class must be >= 1"),
        (c.fusion in FUSION_MODES, f"ccva.fusion must be one of {FUSION_MODES}"),
        (c.hidden_ratio > 0, "ccva.hidden_ratio must be positive"),
        (fd.g_family in FAMILIES, f"fdbo.g_family must be one of {FAMILIES}"),
        (fd.alpha > 0, "fdbo.alpha must be positive"),
        (cfg.bank_capacity >= 1, "bank_capacity must be positive"),
        (len(r.seeds) >= 1, "run.seeds must list at least one seed"),
        (r.n_test >= 1, "run.n_test must be >= 1"),
        (r.curve_every >= 1, "run.curve_every must be >= 1"),
    ]
    for ok, msg in checks:
        if not ok:
            raise InvalidConfig(msg)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(key: str, typ, raw: str):
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is tuple:
            vals = tuple(int(x) for x in raw.split(",") if x.strip())
            if not vals:
                raise ValueError(raw)
            return vals
        return raw
    except ValueError:
        raise InvalidConfig(f"bad value for {key}: {raw!r}") from None


def to_flat(cfg: ExperimentConfig) -> dict:
    out = {}
    for key, section, name, _, _ in _iter_keys():
        obj = getattr(cfg, section) if section else cfg
        out[key] = getattr(obj, name)
    return out


def from_flat(flat: dict, strict: bool = True) -> ExperimentConfig:
    """Build a config from a ``dotted key -> value`` mapping.

    Values may be strings (parsed) or already typed. With ``strict`` every
    key must be present.
    """
    unknown = sorted(set(flat) - set(KEYS))
    if unknown:
        raise InvalidConfig(f"unknown config key {unknown[0]!r}")
    defaults = to_flat(ExperimentConfig())
    sections: dict[str, dict] = {s: {} for s in _SECTIONS}
    top = {}
    for key, section, name, typ, _ in _iter_keys():
        if key not in flat:
            if strict:
                raise InvalidConfig(f"missing config key {key!r}")
            value = defaults[key]
        else:
            value = flat[key]
            value = _parse_value(key, typ, value) if isinstance(value, str) else _coerce(key, typ, value)
        (sections[section] if section else top)[name] = value
    parts = {s: cls(**sections[s]) for s, cls in _SECTIONS.items()}
    return ExperimentConfig(**parts, **top)


def _coerce(key, typ, value):
    if typ is tuple:
        return tuple(int(x) for x in (value if isinstance(value, (list, tuple)) else [value]))
    if typ is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if typ is int and isinstance(value, bool):
        raise InvalidConfig(f"bad value for {key}: {value!r}")
    if typ is int and isinstance(value, float) and value.is_integer():
        return int(value)
    if typ in (int, bool, str) and not isinstance(value, typ):
        raise InvalidConfig(f"bad value for {key}: {value!r}")
    return value


def parse_text(text: str, strict: bool = True) -> ExperimentConfig:
    flat = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in flat:
            raise InvalidConfig(f"line {lineno}: duplicate key {key!r}")
        flat[key] = value
    return from_flat(flat, strict=strict)


def format_text(cfg: ExperimentConfig, comments: bool = True) -> str:
    flat = to_flat(cfg)
    lines = []
    current = None
    for key, section, _, _, doc in _iter_keys():
        if comments and section != current:
            if lines:
                lines.append("")
            lines.append(f"# [{section or 'bank'}]")
            current = section
        line = f"{key} = {_format_value(flat[key])}"
        if comments and doc:
            line = f"{line:<32}# {doc}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def load(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    return parse_text(text)
