import csv
import json
import logging

import numpy as np
import pytest

from qdiff import harness
from qdiff.config import resolve
from qdiff.errors import ConfigurationError, IncompatibleCheckpointError
from qdiff.fsl import evaluate_episode


def quick(tmp_path, **kw):
    base = dict(iterations=30, layers=2, queries_per_class=10, seeds=(0, 1, 2, 3, 4), out_dir=str(tmp_path))
    dataset = kw.pop("dataset", "digits")
    base.update(kw)
    return resolve("desk", dataset, overrides=base)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    cfg = quick(out)
    path, losses = harness.cmd_train_qddm(cfg)
    return cfg, path, losses


# --- training and checkpoints ------------------------------------------------


def test_train_writes_checkpoint_and_loss_curve(trained):
    cfg, path, losses = trained
    rows = read_csv(path.parent / "loss.csv")
    assert rows[0] == ["iteration", "loss"] and len(rows) == 31
    assert float(rows[-1][1]) == losses[-1]
    side = json.loads((path.parent / "train.json").read_text())
    assert side["config_digest"] == cfg.digest() and "numpy" in side["environment"]


def test_digits_defaults_in_checkpoint_metadata(tmp_path):
    cfg = resolve("paper", "digits", overrides=dict(iterations=0, queries_per_class=50, out_dir=str(tmp_path)))
    path, _ = harness.cmd_train_qddm(cfg)
    ckpt = harness.load_checkpoint(path)
    assert ckpt.metadata["layers"] == 47 and ckpt.ansatz.num_layers == 47
    assert ckpt.metadata["learning_rate"] == 0.00097
    assert ckpt.metadata["train_steps"] == 10 and ckpt.schedule.num_steps == 10


def test_mnist_defaults_from_idx(tmp_path, data_root):
    cfg = resolve("paper", "mnist", overrides=dict(iterations=0, data_dir=str(data_root), out_dir=str(tmp_path)))
    ckpt = harness.load_checkpoint(harness.cmd_train_qddm(cfg)[0])
    assert (ckpt.ansatz.num_layers, ckpt.metadata["learning_rate"]) == (60, 0.00211)


def test_checkpoint_round_trip_is_exact(trained):
    _, path, _ = trained
    ckpt = harness.load_checkpoint(path)
    again = harness.checkpoint_from_dict(json.loads(json.dumps(harness.checkpoint_to_dict(ckpt))))
    assert again.params.tobytes() == ckpt.params.tobytes()
    assert again.schedule == ckpt.schedule and again.ansatz == ckpt.ansatz
    assert again.noise_mode is ckpt.noise_mode and again.num_classes == 2


def test_checkpoint_incompatibilities(trained, tmp_path):
    _, path, _ = trained
    d = json.loads(path.read_text())
    for change in ({"version": "qdiff-checkpoint/0"}, {"params": d["params"][:-1]}, {"ansatz": {"family": "x"}}):
        with pytest.raises(IncompatibleCheckpointError):
            harness.checkpoint_from_dict({**d, **change})
    with pytest.raises(IncompatibleCheckpointError, match="2 classes"):
        harness.load_checkpoint(path, num_classes=3)
    junk = tmp_path / "junk.json"
    junk.write_text("not json")
    with pytest.raises(IncompatibleCheckpointError):
        harness.load_checkpoint(junk)


# --- infer -------------------------------------------------------------------


def test_five_seeds_give_six_rows(trained, tmp_path):
    cfg, path, _ = trained
    rows = harness.cmd_infer(cfg.replace(out_dir=str(tmp_path)), path)
    assert [r.seed for r in rows] == ["0", "1", "2", "3", "4", "mean"]
    table = read_csv(tmp_path / "results.csv")
    assert table[0] == list(harness.RESULT_COLUMNS) and len(table) == 7
    accs = [r.accuracy for r in rows[:-1]]
    assert rows[-1].accuracy == pytest.approx(np.mean(accs), abs=1e-15)
    assert rows[-1].stderr == pytest.approx(np.std(accs, ddof=1) / np.sqrt(5), abs=1e-15)
    assert all(0 <= r.accuracy <= 1 for r in rows)


def test_single_seed_stderr_zero(trained, tmp_path):
    cfg, path, _ = trained
    rows = harness.cmd_infer(cfg.replace(out_dir=str(tmp_path), seeds=(3,)), path)
    assert rows[-1].stderr == 0.0
    assert read_csv(tmp_path / "results.csv")[-1][-1] == "0.0"


def test_rerun_is_byte_identical(tmp_path):
    cfg = quick(tmp_path / "a", seeds=(0, 1))
    harness.cmd_infer(cfg)
    harness.cmd_infer(cfg.replace(out_dir=str(tmp_path / "b")))
    for name in ("results.csv", "loss.csv", "checkpoint.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_parallel_seeds_match_serial(trained, tmp_path):
    cfg, path, _ = trained
    serial = harness.cmd_infer(cfg.replace(out_dir=str(tmp_path / "s"), seeds=(0, 1)), path)
    parallel = harness.cmd_infer(cfg.replace(out_dir=str(tmp_path / "p"), seeds=(0, 1), workers=2), path)
    assert [r.accuracy for r in serial] == [r.accuracy for r in parallel]
    assert (tmp_path / "s" / "results.csv").read_bytes() == (tmp_path / "p" / "results.csv").read_bytes()


def test_episode_evaluation_reproduces_harness(trained, tmp_path):
    cfg, path, _ = trained
    rows = harness.cmd_infer(cfg.replace(out_dir=str(tmp_path)), path)
    ckpt = harness.load_checkpoint(path)
    mean, se, accs = evaluate_episode("lgnai", ckpt, harness.load_episode(cfg), cfg.infer_steps, cfg.seeds)
    assert accs == [r.accuracy for r in rows[:-1]]
    assert (mean, se) == (rows[-1].accuracy, rows[-1].stderr)


def test_config_is_logged(trained, tmp_path, caplog):
    cfg, path, _ = trained
    with caplog.at_level(logging.INFO, logger="qdiff"):
        harness.cmd_infer(cfg.replace(out_dir=str(tmp_path), seeds=(0,)), path)
    assert any("infer config" in m and '"layers": 2' in m for m in caplog.messages)
    side = json.loads((tmp_path / "results.json").read_text())
    assert side["config"]["layers"] == 2 and len(side["rows"]) == 2 and "seconds" in side["rows"][0]


def test_missing_data_lists_paths(tmp_path):
    cfg = quick(tmp_path, dataset="fashion", data_dir=str(tmp_path / "nowhere"))
    with pytest.raises(ConfigurationError) as err:
        harness.cmd_infer(cfg)
    assert "train-images-idx3-ubyte" in str(err.value) and "train-labels-idx1-ubyte" in str(err.value)
    assert not (tmp_path / "results.csv").exists()


# --- sweeps, zero-shot, baselines, generation --------------------------------


def test_sweep_cardinality(trained, tmp_path):
    cfg, path, _ = trained
    rows = harness.cmd_sweep_steps(
        cfg.replace(out_dir=str(tmp_path), seeds=(0,), gen_per_class=1, qnn_epochs=1), [1, 5, 10], checkpoint=path
    )
    cells = {(r["algorithm"], r["steps"]) for r in rows}
    assert cells == {(a, t) for a in ("lggi", "lgnai", "lgdi") for t in (1, 5, 10)}
    table = read_csv(tmp_path / "sweep.csv")
    assert table[0] == list(harness.SWEEP_COLUMNS) and len(table) == 10


def test_single_value_sweep_is_infer(trained, tmp_path):
    cfg, path, _ = trained
    sweep = harness.cmd_sweep_steps(cfg.replace(out_dir=str(tmp_path)), [5], ["lgnai"], checkpoint=path)
    infer = harness.cmd_infer(cfg.replace(out_dir=str(tmp_path)), path)
    assert sweep[0]["accuracy"] == infer[-1].accuracy and sweep[0]["stderr"] == infer[-1].stderr


def test_sweep_rejects_zero_step_lgnai(trained, tmp_path):
    cfg, path, _ = trained
    with pytest.raises(ConfigurationError):
        harness.cmd_sweep_steps(cfg.replace(out_dir=str(tmp_path)), [0], ["lgnai"], checkpoint=path)


def test_zero_shot_on_same_dataset_is_standard_inference(trained, tmp_path):
    cfg, path, _ = trained
    zs = harness.cmd_zero_shot(cfg.replace(out_dir=str(tmp_path)), path, ["lgnai"])
    infer = harness.cmd_infer(cfg.replace(out_dir=str(tmp_path)), path)
    assert [r.accuracy for r in zs] == [r.accuracy for r in infer]
    assert zs[0].dataset == "digits->digits"


def test_zero_shot_class_count_mismatch(trained, tmp_path):
    cfg, path, _ = trained
    with pytest.raises(IncompatibleCheckpointError):
        harness.cmd_zero_shot(cfg.replace(out_dir=str(tmp_path), ways=3), path)


def test_zero_shot_across_datasets(tmp_path, data_root):
    cfg = quick(tmp_path, dataset="mnist", eval_dataset="digits", data_dir=str(data_root),
                seeds=(0,), gen_per_class=1, qnn_epochs=1, queries_per_class=5)
    rows = harness.cmd_zero_shot(cfg)
    assert {r.algorithm for r in rows} == {"lggi", "lgnai", "lgdi"}
    assert all(r.dataset == "mnist->digits" for r in rows)
    assert read_csv(tmp_path / "zero_shot.csv")[0] == list(harness.RESULT_COLUMNS)


def test_baselines_four_groups(tmp_path):
    rows = harness.cmd_baselines(quick(tmp_path, seeds=(0,), qnn_epochs=1, shots=1))
    assert [r.algorithm for r in rows if r.seed == "mean"] == ["qmlp", "c14", "optic", "quantumnat"]
    assert len(read_csv(tmp_path / "baselines.csv")) == 1 + 4 * 2


def test_untrained_baselines_near_chance(tmp_path):
    # each family's seed-averaged accuracy stays within 3 standard errors of 1/n
    rows = harness.cmd_baselines(quick(tmp_path, qnn_epochs=0, queries_per_class=50))
    binomial = np.sqrt(0.25 / 100)
    for r in rows:
        if r.seed == "mean":
            assert abs(r.accuracy - 0.5) <= 3 * max(r.stderr, binomial), r


def test_generate_outputs(trained, tmp_path):
    cfg, path, _ = trained
    out = harness.cmd_generate(cfg.replace(out_dir=str(tmp_path)), path, count=3)
    table = read_csv(out)
    assert len(table) == 1 + 2 * 3 and len(table[0]) == 3 + 64
    pgms = sorted((tmp_path / "generated").glob("*.pgm"))
    assert [p.name for p in pgms][:2] == ["label0_000.pgm", "label0_001.pgm"] and len(pgms) == 6
    lines = pgms[0].read_text().splitlines()
    assert lines[:3] == ["P2", "8 8", "255"] and len(lines) == 11
    pixels = np.array([float(v) for v in table[1][3:]])
    assert pixels.min() == 0.0 and pixels.max() == 1.0
    with pytest.raises(ConfigurationError):
        harness.cmd_generate(cfg.replace(out_dir=str(tmp_path)), path, count=0)


def test_to_pgm_scaling():
    text = harness.to_pgm(np.linspace(0, 1, 64))
    rows = text.splitlines()[3:]
    assert rows[0].split()[0] == "0" and rows[-1].split()[-1] == "255"
