import numpy as np
import pytest

from lacuna.experiment import (
    DATASETS,
    METHODS,
    SEED_ENV,
    ExperimentConfig,
    ExperimentConfigError,
    active_seeds,
    format_results,
    load_config,
    pooling_for,
    run_experiment,
    write_results,
)
from lacuna.lacunarity import LacunarityConfig
from lacuna.train import TrainConfig

TOY_INI = """\
[experiment]
methods = avg, multiscale
dataset = toy
classes = 3
samples_per_class = 10
image_size = 56
seeds = 0
backbone_channels = 4
scales = 2
output = {out}

[train]
batch_size = 8
learning_rate = 0.05
max_epochs = 3
early_stop_patience = 2
"""


def write_ini(tmp_path, text):
    path = tmp_path / "exp.ini"
    path.write_text(text)
    return str(path)


def toy_config(tmp_path, **overrides):
    out = str(tmp_path / "results.txt")
    base = dict(methods=("avg",), dataset="toy", classes=3,
                samples_per_class=10, image_size=56, seeds=(0,),
                backbone_channels=4, output=out,
                train=TrainConfig(max_epochs=3, early_stop_patience=2,
                                  learning_rate=0.05))
    base.update(overrides)
    return ExperimentConfig(**base)


# ------------------------------------------------------------------- parsing

def test_load_config_reads_all_fields(tmp_path):
    out = str(tmp_path / "r.txt")
    cfg = load_config(write_ini(tmp_path, TOY_INI.format(out=out)))
    assert cfg.methods == ("avg", "multiscale")
    assert cfg.dataset == "toy"
    assert cfg.classes == 3
    assert cfg.samples_per_class == 10
    assert cfg.image_size == 56
    assert cfg.seeds == (0,)
    assert cfg.backbone_channels == 4
    assert cfg.output == out
    assert cfg.train.batch_size == 8
    assert cfg.train.learning_rate == 0.05
    assert cfg.train.max_epochs == 3
    assert cfg.train.early_stop_patience == 2


def test_load_config_defaults(tmp_path):
    cfg = load_config(write_ini(tmp_path, "[experiment]\nmethods = avg\n"))
    assert cfg.dataset == "heterogeneity"
    assert cfg.seeds == (0, 1, 2, 3, 4)
    assert cfg.train == TrainConfig()


@pytest.mark.parametrize(
    "text",
    [
        "methods = avg\n",                                   # no section
        "[experiment]\nmethods = \n",                        # empty methods
        "[experiment]\nmethods = median\n",                  # unknown method
        "[experiment]\nmethods = avg\ndataset = cifar\n",    # unknown dataset
        "[experiment]\nmethods = avg\nsamples_per_class = 9\n",
        "[experiment]\nmethods = avg\nclasses = 1\n",
        "[experiment]\nmethods = avg\nseeds = x\n",
        "[experiment]\nmethods = avg\ndataset = heterogeneity\nclasses = 4\n",
        "[experiment]\nmethods = avg\n[train]\nlearning_rate = -1\n",
        "not an ini at all {{{",
    ],
)
def test_load_config_rejects_bad_configs(tmp_path, text):
    with pytest.raises(ExperimentConfigError):
        load_config(write_ini(tmp_path, text))


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ExperimentConfigError):
        load_config(str(tmp_path / "absent.ini"))


def test_seed_env_overrides(tmp_path, monkeypatch):
    cfg = toy_config(tmp_path, seeds=(3, 4))
    monkeypatch.delenv(SEED_ENV, raising=False)
    assert active_seeds(cfg) == (3, 4)
    monkeypatch.setenv(SEED_ENV, "11")
    assert active_seeds(cfg) == (11,)
    monkeypatch.setenv(SEED_ENV, "eleven")
    with pytest.raises(ExperimentConfigError):
        active_seeds(cfg)


def test_pooling_for_mapping(tmp_path):
    cfg = toy_config(tmp_path, dilations=(1, 2), scales=3)
    assert pooling_for(cfg, "avg") == "avg"
    assert pooling_for(cfg, "base") == LacunarityConfig(method="base")
    dbc = pooling_for(cfg, "dbc")
    assert dbc.method == "dbc" and dbc.dilation_set == (1, 2)
    ms = pooling_for(cfg, "multiscale")
    assert ms.method == "multiscale" and ms.scales == 3
    assert set(METHODS) >= {"base", "dbc", "multiscale", "avg", "max", "l2"}
    assert DATASETS == ("heterogeneity", "toy")


# -------------------------------------------------------------------- runner

def test_run_experiment_summaries(tmp_path, monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    cfg = toy_config(tmp_path, methods=("avg", "multiscale"), seeds=(0, 1))
    result = run_experiment(cfg)
    assert result.seeds == (0, 1)
    assert [s.method for s in result.summaries] == ["avg", "multiscale"]
    for s in result.summaries:
        assert len(s.accuracies) == 2
        assert 0.0 <= s.mean_accuracy <= 1.0
        # toy split: 10 per class -> 2 test samples per class, 2 seeds summed
        assert s.confusion.sum() == 2 * 3 * 2
        assert all(np.isfinite(v) for v in s.log_fdrs)
    avg, ms = result.summaries
    assert avg.mix_params == 0
    assert ms.mix_params == 4 * 2 + 4
    assert ms.trainable_params == avg.trainable_params + ms.mix_params


def test_run_experiment_respects_seed_env(tmp_path, monkeypatch):
    cfg = toy_config(tmp_path, seeds=(0, 1, 2))
    monkeypatch.setenv(SEED_ENV, "5")
    result = run_experiment(cfg)
    assert result.seeds == (5,)
    assert len(result.summaries[0].accuracies) == 1


# ------------------------------------------------------------------- results

def test_format_results_is_deterministic(tmp_path, monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    cfg = toy_config(tmp_path)
    a = format_results(run_experiment(cfg))
    b = format_results(run_experiment(cfg))
    assert a == b
    assert "[method avg]" in a
    assert "accuracy = " in a and "+/-" in a
    assert "log_fdr = " in a
    assert "confusion (rows true, columns predicted, all seeds):" in a


def test_write_results_uses_config_output(tmp_path, monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    cfg = toy_config(tmp_path)
    result = run_experiment(cfg)
    path = write_results(result)
    assert path == cfg.output
    with open(path) as fh:
        assert fh.read() == format_results(result)
