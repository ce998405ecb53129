import json
import time

import pytest

from morlbalance import balancing
from morlbalance.balancing import CurvePoint, Replicate, SweepResult
from morlbalance.cli import load_config, main, ConfigError
from morlbalance.io import read_csv

SMALL = ["--seeds", "0,1", "--n-train-mo", "10", "--n-eval", "5"]


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def write_hand_trace(path):
    tsrs = [0.50, 0.60, 0.70, 0.80, 0.85, 0.86, 0.86, 0.86, 0.86]
    pts = [CurvePoint(k / 10, [Replicate(0, round(t * 100), 300, 100)]) for k, t in zip(range(1, 10), tsrs)]
    balancing.write_sweep(SweepResult("toy", pts, [0], 3000), path)


def test_train_mo_smoke(tmp_path):
    start = time.perf_counter()
    assert run(tmp_path, "train-mo", *SMALL) == 0
    assert time.perf_counter() - start < 10
    assert sorted(p.name for p in (tmp_path / "toy" / "snapshots").iterdir()) == ["mo_seed0.json", "mo_seed1.json"]
    prov, rows = read_csv(tmp_path / "toy" / "reports" / "train_mo_seed1.csv")
    assert prov["seed"] == 1 and prov["n_train_mo"] == 10 and len(rows) == 10


def test_missing_ontology_path(tmp_path, capsys):
    assert run(tmp_path, "train-mo", "--ontology", str(tmp_path / "absent.json")) == 1
    assert "absent.json" in capsys.readouterr().err


def test_invalid_config_exits_1(tmp_path, capsys):
    assert run(tmp_path, "train-mo", "--ser", "1.5") == 1
    assert run(tmp_path, "train-mo", "--seeds", "a,b") == 1
    assert run(tmp_path, "bogus") == 1
    bad = tmp_path / "c.json"
    bad.write_text('{"n_train_mo": 10, "colour": "red"}')
    assert run(tmp_path, "train-mo", "--config", str(bad)) == 1
    assert "colour" in capsys.readouterr().err


def test_config_file_with_flag_override(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({"n_train_mo": 10, "seeds": [3], "ser": 0.3}))
    cfg = load_config(str(cfg_path), {"ser": 0.2, "seeds": None})
    assert (cfg.n_train_mo, cfg.seeds, cfg.ser) == (10, [3], 0.2)
    with pytest.raises(ConfigError):
        load_config(None, {"n_eval": 0})


def test_sweep_two_point_grid(tmp_path, capsys):
    assert run(tmp_path, "train-mo", *SMALL) == 0
    assert run(tmp_path, "sweep", *SMALL, "--grid", "0.2,0.8") == 0
    _, rows = read_csv(tmp_path / "toy" / "sweeps" / "mo_curve.csv")
    assert [float(r["w_s"]) for r in rows] == [0.2, 0.8]
    _, per_seed = read_csv(tmp_path / "toy" / "sweeps" / "mo_sweep.csv")
    assert len(per_seed) == 4


def test_sweep_missing_or_corrupt_snapshot(tmp_path, capsys):
    assert run(tmp_path, "sweep", *SMALL) == 2
    assert run(tmp_path, "train-mo", *SMALL) == 0
    snap = tmp_path / "toy" / "snapshots" / "mo_seed0.json"
    snap.write_bytes(snap.read_bytes()[:100])
    assert run(tmp_path, "sweep", *SMALL) == 2
    assert "corrupt" in capsys.readouterr().err


def test_sweep_rejects_snapshot_from_other_domain(tmp_path, capsys):
    assert run(tmp_path, "train-mo", *SMALL) == 0
    other = tmp_path / "CamHotels" / "snapshots"
    other.mkdir(parents=True)
    for p in (tmp_path / "toy" / "snapshots").iterdir():
        (other / p.name).write_bytes(p.read_bytes())
    assert run(tmp_path, "sweep", *SMALL, "--ontology", "CamHotels") == 2
    assert "belief dimension" in capsys.readouterr().err


@pytest.mark.parametrize("extra, w_s, r_s", [([], 0.6, 30), (["--override-w-s", "0.7"], 0.7, 47),
                                             (["--override-w-s", "0.5"], 0.5, 20)])
def test_select_and_scale(tmp_path, extra, w_s, r_s):
    sweep = tmp_path / "toy" / "sweeps" / "mo_sweep.csv"
    write_hand_trace(sweep)
    assert run(tmp_path, "select", *extra) == 0
    sel = json.loads((tmp_path / "toy" / "reports" / "selection.json").read_text())
    assert (sel["w_s"], sel["success_reward"], sel["length_penalty"]) == (w_s, r_s, -1.0)


def test_select_malformed_sweep(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("domain,w_s\ntoy,0.1\n")
    assert run(tmp_path, "select", "--sweep", str(bad)) == 1


def test_full_pipeline_report(tmp_path, capsys):
    small = [*SMALL, "--n-train-so", "10", "--n-train-final", "20", "--so-batches", "2", "--grid", "0.2,0.5,0.8"]
    for cmd in (["train-mo"], ["sweep"], ["select"], ["train-so", "--grid-sweep"], ["compare"]):
        assert run(tmp_path, *cmd, *small) == 0
    report = (tmp_path / "toy" / "reports" / "comparison.txt").read_text()
    assert "TSR base" in report and "turns opt" in report
    assert "training dialogues per seed: 10 (MO) vs 30 (SO grid)" in report
    _, curve = read_csv(tmp_path / "toy" / "reports" / "learning_opt.csv")
    assert [int(r["dialogues"]) for r in curve] == [10, 20]
    for path in (tmp_path / "toy").rglob("*.csv"):
        assert path.read_text().startswith("# config: ")


def test_gen_ontology_and_simulate(tmp_path, capsys):
    out = tmp_path / "laptops.json"
    assert main(["gen-ontology", "--ontology", "Laptops", "-o", str(out)]) == 0
    assert main(["gen-ontology", "--stats", "2", "3", "7", "--name", "tiny", "-o", str(tmp_path / "t.json")]) == 0
    capsys.readouterr()
    assert main(["simulate", "--ontology", str(tmp_path / "t.json"), "--dialogue", "3"]) == 0
    transcript = json.loads(capsys.readouterr().out)
    assert transcript["turns"] and "action_name" in transcript["turns"][0]
