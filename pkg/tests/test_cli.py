import json

import numpy as np
import pytest

from swrl.cli import EXIT_ARTIFACT, EXIT_CONFIG, EXIT_OK, main, resolve_workers
from swrl.config import PRESETS, load_config, parse_config, preset, save_config
from swrl.dataset import read_dataset, write_dataset
from swrl.errors import ArtifactMismatch, ConfigurationError
from swrl.replay import Transition

SMALL = {"preset": "planar_valve", "mdp": {"episode_time": 0.5},
         "learner": {"d_feat": 32, "batch_size": 16, "warmup_steps": 30, "offline_episodes": 1, "episodes": 2},
         "eval": {"cases": 3}}


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL))
    return str(p)


def _read_header(path):
    out = {}
    for line in open(path):
        if not line.startswith("# "):
            break
        k, _, v = line[2:].partition(": ")
        out[k] = v.strip()
    return out


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_config_round_trip(name, tmp_path):
    cfg = preset(name)
    save_config(cfg, tmp_path / "a.json")
    again = load_config(tmp_path / "a.json")
    assert again == cfg and again.config_hash() == cfg.config_hash()
    save_config(again, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()


def test_invalid_config_reports_fields(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"preset": "planar_valve", "mdp": {"episode_time": -1.0},
                               "learner": {"batch_size": "many"}}))
    with pytest.raises(ConfigurationError) as err:
        load_config(bad)
    assert "mdp.episode_time" in str(err.value) and "learner.batch_size" in str(err.value)
    assert main(["eval", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "mdp.episode_time" in capsys.readouterr().err


def test_unknown_algo_and_bc_without_dataset(tmp_path, capsys):
    assert main(["train", "--algo", "ppo", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "algo" in capsys.readouterr().err
    assert main(["train", "--algo", "bc", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "dataset" in capsys.readouterr().err
    assert not any(tmp_path.iterdir())


def test_workers_resolution(monkeypatch):
    monkeypatch.delenv("SWRL_WORKERS", raising=False)
    assert resolve_workers(None) == 1 and resolve_workers(3) == 3
    monkeypatch.setenv("SWRL_WORKERS", "2")
    assert resolve_workers(5) == 2
    monkeypatch.setenv("SWRL_WORKERS", "x")
    with pytest.raises(ConfigurationError):
        resolve_workers(None)
    monkeypatch.setenv("SWRL_WORKERS", "0")
    with pytest.raises(ConfigurationError):
        resolve_workers(None)


def test_eval_manual_with_plots(small, tmp_path):
    out = tmp_path / "ev"
    assert main(["eval", "--config", small, "--out", str(out), "--plot"]) == EXIT_OK
    cfg = load_config(small)
    svgs = sorted((out / "traces_manual").glob("*.svg"))
    assert [p.name for p in svgs] == [f"case_{s}.svg" for s in (1000, 1001, 1002)]
    assert cfg.config_hash() in svgs[0].read_text()
    csvs = list(out.glob("*.csv"))
    assert len(csvs) == 1
    h = _read_header(csvs[0])
    assert h["config_hash"] == cfg.config_hash() and h["seed"] == str(cfg.seed)


def test_train_is_reproducible_and_headers(small, tmp_path, monkeypatch):
    monkeypatch.setenv("SWRL_WORKERS", "1")
    for d in ("a", "b"):
        assert main(["train", "--config", small, "--seed", "7", "--out", str(tmp_path / d)]) == EXIT_OK
    a, b = (tmp_path / d / "swrl_curves.csv" for d in "ab")
    assert a.read_bytes() == b.read_bytes()
    h = _read_header(a)
    assert h["seed"] == "7" and h["config_hash"] == load_config(small).model_copy(
        update={"seed": 7}).config_hash()
    # learned checkpoint evaluates through the same CLI
    assert main(["eval", "--config", small, "--seed", "7", "--checkpoint", str(tmp_path / "a" / "swrl"),
                 "--out", str(tmp_path / "ev")]) == EXIT_OK
    # plotting the curves file
    assert main(["plot", "--curves", str(a), "--out", str(tmp_path / "pl")]) == EXIT_OK
    assert (tmp_path / "pl" / "learning_curves.svg").exists()


def test_checkpoint_shape_mismatch_exit_code(small, tmp_path):
    assert main(["train", "--config", small, "--episodes", "1", "--out", str(tmp_path / "t")]) == EXIT_OK
    wide = tmp_path / "wide.json"
    wide.write_text(json.dumps({**SMALL, "learner": {**SMALL["learner"], "d_feat": 48}}))
    rc = main(["eval", "--config", str(wide), "--checkpoint", str(tmp_path / "t" / "swrl"),
               "--out", str(tmp_path / "e")])
    assert rc == EXIT_ARTIFACT
    assert main(["eval", "--config", small, "--checkpoint", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "e")]) == EXIT_ARTIFACT


def test_collect_offline_and_bc(small, tmp_path):
    empty = tmp_path / "empty.swrl"
    assert main(["collect-offline", "--config", small, "--episodes", "0", "--out", str(empty)]) == EXIT_OK
    header, data, _ = read_dataset(empty)
    assert data == [] and header["episodes"] == 0
    full = tmp_path / "d"
    assert main(["collect-offline", "--config", small, "--out", str(full)]) == EXIT_OK
    header, data, digest = read_dataset(full / "offline.swrl")
    assert len(data) == 50 and header["config_hash"] == load_config(small).config_hash()
    assert main(["train", "--config", small, "--algo", "bc", "--episodes", "3", "--dataset",
                 str(full / "offline.swrl"), "--out", str(tmp_path / "bc")]) == EXIT_OK
    rows = [l for l in (tmp_path / "bc" / "bc_curves.csv").read_text().splitlines() if not l.startswith("#")]
    assert rows[0] == "epoch,train_loss" and len(rows) == 4


def test_dataset_round_trip_and_corruption(tmp_path):
    rng = np.random.default_rng(0)
    ts = [Transition(rng.normal(size=6), int(rng.integers(4)), rng.normal(size=2), 1.0, 0.5, rng.normal(size=6),
                     i == 4, "timeout" if i == 4 else "") for i in range(5)]
    p = tmp_path / "x.swrl"
    digest = write_dataset(p, ts, 6, 2, meta={"seed": 1})
    header, back, d2 = read_dataset(p)
    assert d2 == digest and len(back) == 5 and header["seed"] == 1
    for a, b in zip(ts, back):
        assert np.array_equal(a.obs, b.obs) and a.a_K == b.a_K and np.array_equal(a.a_R, b.a_R)
        assert (a.r_K, a.r_R, a.done, a.cause) == (b.r_K, b.r_R, b.done, b.cause)
    raw = bytearray(p.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    p.write_bytes(bytes(raw))
    with pytest.raises(ArtifactMismatch):
        read_dataset(p)
    p.write_bytes(bytes(raw[:len(raw) // 2]))
    with pytest.raises(ArtifactMismatch):
        read_dataset(p)
    rc = main(["train", "--algo", "bc", "--dataset", str(p), "--out", str(tmp_path / "o")])
    assert rc == EXIT_ARTIFACT
