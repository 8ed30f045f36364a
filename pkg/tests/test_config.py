import pytest

from qdiff.config import DATASET_DEFAULTS, PRESETS, RunConfig, load_toml, resolve
from qdiff.errors import ConfigurationError


@pytest.mark.parametrize(
    "dataset,layers,lr", [("digits", 47, 0.00097), ("mnist", 60, 0.00211), ("fashion", 121, 0.00014)]
)
def test_dataset_defaults(dataset, layers, lr):
    cfg = RunConfig(dataset=dataset)
    assert (cfg.layers, cfg.learning_rate, cfg.train_steps) == (layers, lr, 10)
    assert DATASET_DEFAULTS[dataset] == (layers, lr)


def test_paper_preset_protocol():
    cfg = resolve("paper", "digits")
    assert cfg.iterations == 10000 and cfg.queries_per_class == 200
    assert cfg.seeds == (0, 1, 2, 3, 4) and cfg.infer_steps == 5
    assert cfg.qnn_learning_rate == 0.001 and cfg.qnn_epochs == 40


def test_desk_preset():
    cfg = resolve("desk", "digits")
    assert (cfg.layers, cfg.iterations, cfg.queries_per_class) == (15, 2000, 50)
    assert cfg.learning_rate == 0.00097


def test_digest_ignores_key_order_and_paths():
    a = RunConfig(ways=3, shots=1, seeds=(2, 3))
    b = RunConfig(**dict(reversed(list(a.to_dict().items()))))
    assert a.digest() == b.digest()
    assert a.digest() == a.replace(out_dir="elsewhere", workers=4).digest()
    assert a.digest() != a.replace(seed=1).digest()


def test_task_tag_and_classes():
    assert RunConfig(ways=2, shots=10).task_tag == "2w-10s"
    assert RunConfig(ways=3, shots=1).task_tag == "3w-01s"
    assert RunConfig(ways=3).class_filter == (0, 1, 2)
    assert RunConfig(ways=2, classes=(4, 9)).class_filter == (4, 9)


@pytest.mark.parametrize(
    "bad",
    [
        {"dataset": "cifar"},
        {"algorithm": "knn"},
        {"ways": 1},
        {"shots": 0},
        {"seeds": ()},
        {"seeds": (1, 1)},
        {"classes": (0,)},
        {"algorithm": "lgnai", "infer_steps": 0},
        {"beta_start": 0.1, "beta_end": 0.05},
        {"noise_mode": "cold"},
    ],
)
def test_validation(bad):
    with pytest.raises(ConfigurationError):
        RunConfig(**bad)


def test_lgdi_allows_zero_steps():
    assert RunConfig(algorithm="lgdi", infer_steps=0).infer_steps == 0


def test_toml_file_and_override_priority(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('preset = "desk"\ndataset = "mnist"\nshots = 3\nseeds = [7, 8]\nlayers = 4\n')
    values = load_toml(path)
    cfg = resolve(file_values=values, overrides={"shots": 5, "layers": None})
    assert cfg.preset == "desk" and cfg.dataset == "mnist"
    assert cfg.shots == 5 and cfg.layers == 4 and cfg.seeds == (7, 8)
    assert cfg.learning_rate == 0.00211
    # the dataset argument beats the file, explicit overrides beat both
    assert resolve(dataset="fashion", file_values=values).dataset == "fashion"


def test_toml_rejections(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("shotz = 3\n")
    with pytest.raises(ConfigurationError, match="shotz"):
        load_toml(p)
    p.write_text("[table]\nshots = 3\n")
    with pytest.raises(ConfigurationError, match="flat"):
        load_toml(p)
    p.write_text("shots = \n")
    with pytest.raises(ConfigurationError):
        load_toml(p)
    with pytest.raises(ConfigurationError):
        load_toml(tmp_path / "missing.toml")


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        resolve("huge")
    assert set(PRESETS) == {"paper", "desk"}
