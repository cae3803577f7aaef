"""Config-driven experiments: data -> features -> patches -> train -> metrics.

A run writes everything under its output directory: one checkpoint and
one JSON record per trial, then ``report.json`` (resolved config, seeds,
per-trial and aggregated metrics) and ``report.txt``.
"""
from __future__ import annotations

import json
import logging
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import energy as en
from .data import SyntheticConfig, generate_synthetic, load_hdf5, patch, split
from .errors import ConfigError, SpikeflagError
from .metrics import METRIC_NAMES, aggregate, evaluate
from .preprocess import PreprocessConfig, features
from .snn import (
    ARCHITECTURES,
    HIDDEN,
    EncodingConfig,
    LifNetwork,
    LifParams,
    SurrogateConfig,
    TrainConfig,
    group_rows,
    load_checkpoint,
    measure_spike_rates,
    predict_counts,
    save_checkpoint,
    train,
    xylo_check,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class ExperimentError(SpikeflagError, RuntimeError):
    pass


@dataclass
class DataConfig:
    source: str = "synthetic"
    hdf5: str | None = None
    layout: dict = field(default_factory=dict)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    test_fraction: float = 0.2
    split_seed: int = 0

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        syn = SyntheticConfig.from_dict(d.pop("synthetic", {}))
        cfg = cls(synthetic=syn, **d)
        if cfg.source not in ("synthetic", "hdf5"):
            raise ConfigError(f"data.source must be 'synthetic' or 'hdf5', got {cfg.source!r}")
        if cfg.source == "hdf5" and not cfg.hdf5:
            raise ConfigError("data.hdf5 path required when source = 'hdf5'")
        return cfg

    def to_dict(self):
        d = asdict(self)
        d["synthetic"] = self.synthetic.to_dict()
        return d


@dataclass
class ModelConfig:
    model_type: str = "patched"
    hidden: int = HIDDEN
    beta: float = 0.9
    v_threshold: float = 1.0
    reset: str = "subtract"
    patch_time: int = 16
    architecture: list | None = None
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        sur = SurrogateConfig(**d.pop("surrogate", {}))
        return cls(surrogate=sur, **d)

    def to_dict(self):
        return asdict(self)

    @property
    def lif(self) -> LifParams:
        return LifParams(self.beta, self.v_threshold, self.reset)


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    metrics_scope: str = "pooled"
    output: str = "runs/default"
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version {version}")
        known = {"data", "preprocess", "model", "train", "encoding", "metrics", "output"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        out = d.get("output", {})
        try:
            cfg = cls(
                data=DataConfig.from_dict(d.get("data", {})),
                preprocess=PreprocessConfig.from_dict(d.get("preprocess", {})),
                model=ModelConfig.from_dict(d.get("model", {})),
                train=TrainConfig(**d.get("train", {})),
                encoding=EncodingConfig(**d.get("encoding", {})),
                metrics_scope=d.get("metrics", {}).get("scope", "pooled"),
                output=out.get("dir", "runs/default") if isinstance(out, dict) else str(out),
            )
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from exc
        if cfg.metrics_scope not in ("pooled", "per-spectrogram"):
            raise ConfigError(f"metrics.scope must be 'pooled' or 'per-spectrogram', got {cfg.metrics_scope!r}")
        cfg.geometry()
        return cfg

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "data": self.data.to_dict(),
            "preprocess": self.preprocess.to_dict(),
            "model": self.model.to_dict(),
            "train": asdict(self.train),
            "encoding": asdict(self.encoding),
            "metrics": {"scope": self.metrics_scope},
            "output": {"dir": self.output},
        }

    def architecture(self) -> tuple[int, int, int]:
        if self.model.architecture is not None:
            arch = tuple(int(a) for a in self.model.architecture)
            if len(arch) != 3:
                raise ConfigError("model.architecture must be [channels_in, hidden, channels_out]")
            return arch
        key = (self.model.model_type, self.preprocess.polarisation)
        if key not in ARCHITECTURES:
            raise ConfigError(f"unknown model configuration {key}")
        c_in, c_out = ARCHITECTURES[key]
        return c_in, self.model.hidden, c_out

    def geometry(self) -> tuple[int, int]:
        """``(patch_freq, patch_time)`` implied by the input width and feature planes."""
        c_in, _, c_out = self.architecture()
        planes = 4 if self.preprocess.polarisation == "full" else 1
        if c_in % planes:
            raise ConfigError(f"{c_in} input channels cannot hold {planes} feature planes")
        pf = c_in // planes
        if c_out % pf:
            raise ConfigError(f"{c_out} outputs cannot represent {pf} frequency rows")
        return pf, self.model.patch_time


def load_config(path) -> ExperimentConfig:
    """Read a TOML (or ``.json``) experiment config."""
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".json":
        d = json.loads(raw)
    else:
        d = tomllib.loads(raw.decode())
    return ExperimentConfig.from_dict(d)


# --------------------------------------------------------------------------
# data preparation
# --------------------------------------------------------------------------

def load_data(cfg: ExperimentConfig, base_dir: Path | None = None):
    if cfg.data.source == "synthetic":
        return generate_synthetic(cfg.data.synthetic)
    path = Path(cfg.data.hdf5)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    return load_hdf5(path, cfg.data.layout or None)


def make_patches(vis, mask, cfg: ExperimentConfig):
    pf, pt = cfg.geometry()
    out = []
    for b in range(vis.values.shape[0]):
        feats = features(vis.values[b], cfg.preprocess, patch_freq=pf)
        out.extend(patch(feats, pf, pt, mask=mask.flags[b], baseline=b))
    return out


def prepare(cfg: ExperimentConfig, base_dir: Path | None = None):
    vis, mask = load_data(cfg, base_dir)
    patches = make_patches(vis, mask, cfg)
    return split(patches, cfg.data.test_fraction, cfg.data.split_seed)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def predict(net: LifNetwork, patches, cfg: ExperimentConfig):
    """Per-patch soft scores and hard flags, each ``[patch_freq, patch_time]``."""
    pf, _ = cfg.geometry()
    e = cfg.encoding.exposure_steps
    counts, _ = predict_counts(net, patches, cfg.encoding)
    grouped = np.stack([group_rows(c, pf) for c in counts])
    scores = grouped / e
    flags = grouped >= cfg.encoding.decode_threshold * e
    return scores, flags


def evaluate_net(net: LifNetwork, patches, cfg: ExperimentConfig) -> dict:
    """Pixel metrics on ``patches``, cropping zero-padded edges."""
    scores, flags = predict(net, patches, cfg)
    groups: dict = {}
    for p, s, f in zip(patches, scores, flags):
        fe, te = p.extent
        key = p.origin[0] if cfg.metrics_scope == "per-spectrogram" else 0
        g = groups.setdefault(key, ([], [], []))
        g[0].append(s[:fe, :te].ravel())
        g[1].append(f[:fe, :te].ravel())
        g[2].append(p.mask[:fe, :te].ravel())
    per_group = [
        evaluate(np.concatenate(f), np.concatenate(s), np.concatenate(t))
        for s, f, t in (groups[k] for k in sorted(groups))
    ]
    return {m: float(np.mean([g[m] for g in per_group])) for m in METRIC_NAMES}


# --------------------------------------------------------------------------
# runs
# --------------------------------------------------------------------------

def trial_seed(cfg: ExperimentConfig, index: int) -> int:
    return cfg.train.seed + index


def run_trial(cfg: ExperimentConfig, ds, seed: int):
    """Initialise, train and evaluate one network; returns ``(net, metrics, history)``."""
    arch = cfg.architecture()
    net = LifNetwork.init(arch, seed=seed, params=cfg.model.lif)
    tcfg = TrainConfig(**{**asdict(cfg.train), "seed": seed})
    net, history = train(net, ds, tcfg, cfg.model.surrogate, cfg.encoding)
    return net, evaluate_net(net, ds.test, cfg), history


def _dump(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def label(cfg: ExperimentConfig) -> str:
    dn = " + DN" if cfg.preprocess.divisive_normalisation else ""
    return f"{cfg.model.model_type}{dn} / {cfg.preprocess.polarisation}"


def run_experiment(cfg: ExperimentConfig, out_dir=None, trials: int | None = None, base_dir=None) -> dict:
    """Run ``trials`` seeded trials and write the report files.

    Returns the report dictionary (also written to ``report.json``).
    """
    out = Path(out_dir or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    n_trials = trials or cfg.train.trials
    cfg.train.trials = n_trials
    ds = prepare(cfg, base_dir)
    arch = cfg.architecture()
    violations = xylo_check(LifNetwork.init(arch, seed=0))
    warnings = []
    if cfg.model.model_type == "xylo" and violations:
        warnings = [f"xylo constraint violated: {v}" for v in violations]
        for w in warnings:
            log.warning(w)
    per_trial = []
    for k in range(n_trials):
        seed = trial_seed(cfg, k)
        try:
            net, metrics, history = run_trial(cfg, ds, seed)
        except Exception as exc:
            raise ExperimentError(f"trial {k} (seed {seed}, output {out}): {exc}") from exc
        save_checkpoint(out / f"trial_{k:02d}.ckpt", net, {"seed": seed, "trial": k})
        record = {"trial": k, "seed": seed, "metrics": metrics, "loss_history": history}
        _dump(out / f"trial_{k:02d}.json", record)
        per_trial.append(record)
    agg = aggregate([r["metrics"] for r in per_trial])
    report = {
        "label": label(cfg),
        "config": cfg.to_dict(),
        "architecture": list(arch),
        "seeds": [r["seed"] for r in per_trial],
        "trials": per_trial,
        "metrics": agg.to_dict(),
        "xylo_check": {"violations": violations, "warnings": warnings},
        "split": {"n_train": len(ds.train), "n_test": len(ds.test), "test_indices": ds.test_indices},
    }
    _dump(out / "report.json", report)
    (out / "report.txt").write_text(emit_comparison_table([report])["text"] + "\n")
    return report


def run_energy(cfg: ExperimentConfig, checkpoint=None, rates=None, channels: int = 512, pols: int = 4,
               mode: str | None = None, cadence_hz: float = 1.0, balanced_mode: str = "per-chip",
               base_dir=None) -> dict:
    """Energy estimate from measured (checkpoint + test set) or supplied spike rates."""
    if mode and mode != cfg.preprocess.polarisation:
        # the mode selects the feature set, and with it the architecture
        cfg = replace(cfg, preprocess=replace(cfg.preprocess, polarisation=mode))
    mode = cfg.preprocess.polarisation
    if rates is None:
        if checkpoint is None:
            raise ConfigError("either a checkpoint or explicit rates are required")
        if not Path(checkpoint).exists():
            raise FileNotFoundError(f"checkpoint not found: {checkpoint}")
        net, _ = load_checkpoint(checkpoint)
        ds = prepare(cfg, base_dir)
        rates = measure_spike_rates(net, ds.test, cfg.encoding)
        arch = net.architecture
    else:
        arch = cfg.architecture()
    rates = [float(r) for r in rates]
    layers = en.flops_layers(arch, rates)
    steps = cfg.encoding.exposure_steps
    flops = en.flops_snn(layers, steps=steps)
    rep = en.spectrogram_report(flops, mode, cadence_hz=cadence_hz, channels=channels, pols=pols,
                                balanced_mode=balanced_mode)
    return {
        "architecture": list(arch),
        "rates": rates,
        "flops_per_step": en.flops_snn(layers),
        "steps_per_inference": steps,
        "report": rep.to_dict(),
        "table": en.format_table({label(cfg): rep}),
    }


def emit_comparison_table(reports) -> dict:
    """Table of mean (std) per metric; ``*`` marks the best, ``_`` the second best.

    Ties share the mark. Rows are sorted by label.
    """
    if not reports:
        raise ConfigError("no reports to tabulate")
    rows = sorted(reports, key=lambda r: r["label"])
    marks = {}
    for m in METRIC_NAMES:
        vals = sorted({round(r["metrics"]["mean"][m], 12) for r in rows}, reverse=True)
        marks[m] = {v: ("*" if i == 0 else "_" if i == 1 else "") for i, v in enumerate(vals)}
    width = max(len(r["label"]) for r in rows) + 2
    head = f"{'Model':<{width}}" + "".join(f"{m:>18}" for m in METRIC_NAMES)
    lines = [head, "-" * len(head)]
    json_rows = []
    for r in rows:
        mean, std = r["metrics"]["mean"], r["metrics"]["std"]
        cells, row_marks = [], {}
        for m in METRIC_NAMES:
            mk = marks[m][round(mean[m], 12)]
            row_marks[m] = {"*": "best", "_": "second", "": None}[mk]
            cells.append(f"{mk}{mean[m]:.3f} ({std[m]:.3f}){mk}".rjust(18))
        lines.append(f"{r['label']:<{width}}" + "".join(cells))
        json_rows.append({"label": r["label"], "mean": mean, "std": std, "marks": row_marks})
    lines.append("(* best, _ second best; mean (population std) over trials)")
    return {"text": "\n".join(lines), "rows": json_rows}
