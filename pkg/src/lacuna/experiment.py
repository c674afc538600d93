"""Experiment configuration, runner, and deterministic results files.

An experiment compares pooling methods on a synthetic texture dataset: for
each (method, seed) pair it builds a frozen backbone + fusion model, trains
the head, and scores test accuracy plus a class-separability (FDR) report on
the fused features.  Datasets and backbones are shared per seed across
methods so the comparison is paired.  Results serialize to a fixed-format
text file: rerunning the same config writes byte-identical bytes.

Configs are INI files (configparser) with an [experiment] section and an
optional [train] section; see configs/heterogeneity.ini.  The LACUNA_SEED
environment variable, when set, replaces the configured seed list.
"""

from __future__ import annotations

import configparser
import os
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .lacunarity import LacunarityConfig
from .metrics import fisher_discriminant_ratio, summarize_log_fdr
from .model import FrozenBackbone, FusionModel
from .tensor import elementwise_mul, gap
from .textures import heterogeneity_dataset, toy_dataset
from .train import TrainConfig, evaluate, train

METHODS = ("base", "dbc", "multiscale", "avg", "max", "l2")
DATASETS = ("heterogeneity", "toy")
SEED_ENV = "LACUNA_SEED"


class ExperimentConfigError(ValueError):
    """Unreadable, unparsable, or out-of-contract experiment config."""


@dataclass(frozen=True)
class ExperimentConfig:
    methods: tuple[str, ...]
    dataset: str = "heterogeneity"
    classes: int = 3
    samples_per_class: int = 100
    image_size: int = 56
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    backbone_channels: int = 16
    scales: int = 2
    dilations: tuple[int, ...] = (1, 2, 3)
    output: str = "results.txt"
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not self.methods:
            raise ExperimentConfigError("need at least one pooling method")
        for m in self.methods:
            if m not in METHODS:
                raise ExperimentConfigError(
                    f"unknown method {m!r}; choose from {METHODS}")
        if self.dataset not in DATASETS:
            raise ExperimentConfigError(
                f"unknown dataset {self.dataset!r}; choose from {DATASETS}")
        if self.dataset == "heterogeneity" and self.classes != 3:
            raise ExperimentConfigError(
                "the heterogeneity dataset has exactly its three arrangements")
        if self.classes < 2:
            raise ExperimentConfigError("need at least two classes")
        if self.samples_per_class < 10:
            raise ExperimentConfigError("need at least ten samples per class")
        if self.image_size < 16:
            raise ExperimentConfigError("image_size must be >= 16")
        if not self.seeds:
            raise ExperimentConfigError("need at least one seed")


def _int_tuple(raw: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in re.split(r"[,\s]+", raw.strip()) if tok)


def load_config(path: str) -> ExperimentConfig:
    """Parse an INI experiment config; all failures raise ExperimentConfigError."""
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ExperimentConfigError(f"cannot read config: {exc}") from exc
    except configparser.Error as exc:
        raise ExperimentConfigError(f"cannot parse config: {exc}") from exc
    if not parser.has_section("experiment"):
        raise ExperimentConfigError("config needs an [experiment] section")
    exp = parser["experiment"]
    try:
        kwargs = {
            "methods": tuple(
                tok for tok in re.split(r"[,\s]+", exp.get("methods", "")) if tok),
        }
        for key, cast in (("dataset", str), ("classes", int),
                          ("samples_per_class", int), ("image_size", int),
                          ("backbone_channels", int), ("scales", int),
                          ("output", str)):
            if key in exp:
                kwargs[key] = cast(exp[key])
        if "seeds" in exp:
            kwargs["seeds"] = _int_tuple(exp["seeds"])
        if "dilations" in exp:
            kwargs["dilations"] = _int_tuple(exp["dilations"])
        if parser.has_section("train"):
            tr = parser["train"]
            tkwargs = {}
            for key, cast in (("batch_size", int), ("learning_rate", float),
                              ("max_epochs", int), ("early_stop_patience", int)):
                if key in tr:
                    tkwargs[key] = cast(tr[key])
            kwargs["train"] = TrainConfig(**tkwargs)
        return ExperimentConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ExperimentConfigError):
            raise
        raise ExperimentConfigError(f"bad config value: {exc}") from exc


# --------------------------------------------------------------------- runner

@dataclass(frozen=True)
class MethodSummary:
    method: str
    accuracies: tuple[float, ...]
    mean_accuracy: float
    std_accuracy: float
    log_fdrs: tuple[float, ...]
    mean_log_fdr: float
    std_log_fdr: float
    epochs: tuple[int, ...]
    confusion: np.ndarray  # rows true, columns predicted, summed over seeds
    trainable_params: int
    mix_params: int


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    seeds: tuple[int, ...]
    summaries: tuple[MethodSummary, ...]


def pooling_for(cfg: ExperimentConfig, method: str) -> LacunarityConfig | str:
    if method in ("avg", "max", "l2"):
        return method
    if method == "base":
        return LacunarityConfig(method="base")
    if method == "dbc":
        return LacunarityConfig(method="dbc", dilation_set=cfg.dilations)
    return LacunarityConfig(method="multiscale", scales=cfg.scales)


def _dataset(cfg: ExperimentConfig, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if cfg.dataset == "toy":
        return toy_dataset(cfg.classes, cfg.samples_per_class,
                           cfg.image_size, seed)
    return heterogeneity_dataset(cfg.samples_per_class, cfg.image_size, seed)


def active_seeds(cfg: ExperimentConfig) -> tuple[int, ...]:
    """Config seeds, unless LACUNA_SEED pins a single run."""
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return cfg.seeds
    try:
        return (int(raw),)
    except ValueError as exc:
        raise ExperimentConfigError(f"{SEED_ENV}={raw!r} is not an integer") from exc


def _fused_features(model: FusionModel, feats: np.ndarray) -> np.ndarray:
    fused = elementwise_mul(model.pooling_branch(feats), gap(feats))
    return fused[:, :, 0, 0]


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    seeds = active_seeds(cfg)
    datasets = {seed: _dataset(cfg, seed) for seed in seeds}
    backbones = {
        seed: FrozenBackbone.make(seed=seed, channels=cfg.backbone_channels)
        for seed in seeds
    }
    summaries = []
    for method in cfg.methods:
        accs, fdrs, epochs = [], [], []
        confusion = np.zeros((cfg.classes, cfg.classes), dtype=np.int64)
        trainable = mix_params = 0
        for seed in seeds:
            images, labels = datasets[seed]
            model = FusionModel.build(backbones[seed], pooling_for(cfg, method),
                                      cfg.classes, seed=seed)
            result = train(model, images, labels, replace(cfg.train, seed=seed))
            report = evaluate(model, images, labels, result.test_idx)
            test_feats = model.backbone.features(images[result.test_idx])
            fdr = fisher_discriminant_ratio(_fused_features(model, test_feats),
                                            labels[result.test_idx])
            accs.append(report.accuracy)
            fdrs.append(fdr.log_fdr)
            epochs.append(result.history.epochs())
            confusion += report.confusion
            trainable = model.trainable_param_count()
            mix_params = model.mix.param_count() if model.mix is not None else 0
        acc_arr = np.array(accs)
        mean_acc, std_acc = float(acc_arr.mean()), float(acc_arr.std())
        mean_fdr, std_fdr = summarize_log_fdr(fdrs)
        summaries.append(MethodSummary(
            method=method, accuracies=tuple(accs), mean_accuracy=mean_acc,
            std_accuracy=std_acc, log_fdrs=tuple(fdrs), mean_log_fdr=mean_fdr,
            std_log_fdr=std_fdr, epochs=tuple(epochs), confusion=confusion,
            trainable_params=trainable, mix_params=mix_params,
        ))
    return ExperimentResult(config=cfg, seeds=seeds, summaries=tuple(summaries))


# -------------------------------------------------------------- results files

def format_results(result: ExperimentResult) -> str:
    """Fixed-format report text; identical runs produce identical bytes."""
    cfg = result.config
    lines = ["pooling method comparison", "", "[setup]"]
    lines.append(f"dataset = {cfg.dataset}")
    lines.append(f"classes = {cfg.classes}")
    lines.append(f"samples_per_class = {cfg.samples_per_class}")
    lines.append(f"image_size = {cfg.image_size}")
    lines.append(f"backbone_channels = {cfg.backbone_channels}")
    lines.append(f"seeds = {', '.join(str(s) for s in result.seeds)}")
    lines.append(f"batch_size = {cfg.train.batch_size}")
    lines.append(f"learning_rate = {cfg.train.learning_rate:g}")
    lines.append(f"max_epochs = {cfg.train.max_epochs}")
    lines.append(f"early_stop_patience = {cfg.train.early_stop_patience}")
    for s in result.summaries:
        lines.append("")
        lines.append(f"[method {s.method}]")
        lines.append(f"accuracy = {s.mean_accuracy:.6f} +/- {s.std_accuracy:.6f}")
        lines.append(f"log_fdr = {s.mean_log_fdr:.6f} +/- {s.std_log_fdr:.6f}")
        lines.append(f"trainable_params = {s.trainable_params}")
        lines.append(f"mix_params = {s.mix_params}")
        for seed, acc, fdr, ep in zip(result.seeds, s.accuracies, s.log_fdrs,
                                      s.epochs):
            lines.append(f"seed {seed}: accuracy = {acc:.6f}, "
                         f"log_fdr = {fdr:.6f}, epochs = {ep}")
        lines.append("confusion (rows true, columns predicted, all seeds):")
        for row in s.confusion:
            lines.append("  " + " ".join(f"{int(v):5d}" for v in row))
    return "\n".join(lines) + "\n"


def write_results(result: ExperimentResult, path: str | None = None) -> str:
    path = path if path is not None else result.config.output
    with open(path, "w", newline="\n") as fh:
        fh.write(format_results(result))
    return path
