import json

import numpy as np
import pytest

from gorp.cli import main
from gorp.config import config_from_dict, config_to_dict, load_config
from gorp.errors import SpecError, UsageError
from gorp.harness import compare, run_continual, train_sequence
from gorp.metrics import read_report
from gorp.tasks import load_dataset


def small(method="gorp", seed=0, **over):
    raw = {
        "method": method,
        "seed": seed,
        "model": {"layers": [
            {"name": "fc1", "out_dim": 12, "kind": "full"},
            {"name": "fc2", "out_dim": 12, "kind": "lora", "lora_rank": 3},
            {"name": "head", "kind": "full", "activation": "none"},
        ]},
        "optimizer": {"rank": 3, "lr_lora": 1e-3},
        "data": {"num_tasks": 3, "samples_per_task": 96, "test_samples": 48, "dim": 8, "seed": 1},
    }
    raw.update(over)
    return config_from_dict(raw)


def test_gorp_without_projection_or_memory_is_seq_adam():
    base = small("seq_adam")
    plain = train_sequence(base).report
    cfg = small("gorp")
    cfg.optimizer.identity_projection = True
    cfg.optimizer.subspace.capacity = 0
    gorp = train_sequence(cfg).report
    np.testing.assert_array_equal(plain.acc_matrix, gorp.acc_matrix)


def test_single_task_run():
    cfg = small(data={"num_tasks": 1, "samples_per_task": 40, "test_samples": 20, "dim": 8})
    rep = train_sequence(cfg).report
    assert rep.bwt == 0.0 and rep.mean_go == 0.0 and rep.acc_matrix.shape == (1, 1)


def test_accuracy_matrix_upper_triangle_filled():
    rep = train_sequence(small()).report
    t = rep.num_tasks
    assert np.all(np.isfinite(rep.acc_matrix[np.triu_indices(t)]))
    assert np.all(np.isnan(rep.acc_matrix[np.tril_indices(t, -1)]))


def test_seq_lora_adam_trains_only_lora():
    res = train_sequence(small("seq_lora_adam"))
    assert set(res.optimizer.keys) == {"fc2.A", "fc2.B"}


def test_gorp_spaces_grow_over_tasks():
    res = train_sequence(small())
    assert all(space.q >= 1 for space in res.optimizer.spaces.values())
    assert res.optimizer.worst_orthogonality <= 1e-8


def test_unknown_config_keys_rejected():
    with pytest.raises(SpecError, match="learning_rate"):
        config_from_dict({"optimizer": {"learning_rate": 0.1}})
    with pytest.raises(SpecError, match="bogus"):
        config_from_dict({"bogus": 1})
    with pytest.raises(SpecError):
        config_from_dict({"method": "sgd"})


def test_config_dict_round_trip():
    cfg = small()
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_compare_rejects_different_sequences():
    a = small()
    b = small("seq_adam")
    b.data.seed = 2
    with pytest.raises(UsageError):
        compare([a, b])
    with pytest.raises(UsageError):
        compare([a])


def test_compare_same_config_twice_identical_rows(tmp_path):
    rows = compare([small(), small()], out_dir=tmp_path, labels=["x", "y"])
    assert {k: v for k, v in rows[0].items() if k != "label"} == {k: v for k, v in rows[1].items() if k != "label"}
    lines = (tmp_path / "comparison.tsv").read_text().splitlines()
    assert lines[0].split("\t")[:3] == ["label", "method", "seed"] and len(lines) == 3
    assert (tmp_path / "go_x.txt").exists()


def test_run_writes_report_and_spaces(tmp_path):
    rep = run_continual(small(), out_dir=tmp_path)
    back = read_report(tmp_path / "report.txt")
    assert back.acc == rep.acc and back.bwt == rep.bwt
    assert (tmp_path / "spaces" / "fc1.W.txt").exists()


def write_cfg(tmp_path, cfg, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(config_to_dict(cfg)))
    return p


def test_cli_run_then_metrics(tmp_path, capsys):
    p = write_cfg(tmp_path, small())
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "out"), "--check-orthogonality"]) == 0
    assert main(["metrics", "--report", str(tmp_path / "out" / "report.txt")]) == 0
    out = capsys.readouterr().out
    assert "ACC = " in out and "ACC_MATRIX" in out


def test_cli_default_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("GORP_OUT_DIR", str(tmp_path / "runs"))
    p = write_cfg(tmp_path, small(seed=4))
    assert main(["run", "--config", str(p)]) == 0
    assert (tmp_path / "runs" / "gorp-seed4" / "report.txt").exists()


def test_cli_compare(tmp_path, capsys):
    a = write_cfg(tmp_path, small(), "gorp.json")
    b = write_cfg(tmp_path, small("seq_adam"), "adam.json")
    assert main(["compare", "--configs", str(a), str(b), "--out", str(tmp_path / "cmp")]) == 0
    assert capsys.readouterr().out.count("\n") == 3


def test_cli_missing_config_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code == 2
    assert "--config" in capsys.readouterr().err


def test_cli_nonexistent_config_exits_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--config", str(tmp_path / "nope.json")])
    assert exc.value.code == 2
    assert "--config" in capsys.readouterr().err


def test_cli_bad_config_exits_1(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"optimizer": {"lr": 1}}')
    assert main(["run", "--config", str(p)]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_cli_gen_data(tmp_path):
    assert main(["gen-data", "--kind", "rotated", "--out", str(tmp_path), "--num-tasks", "2",
                 "--samples", "20", "--dim", "5", "--holdout"]) == 0
    ds = load_dataset(tmp_path / "task_02.txt")
    assert ds.dim == 5 and len(ds.y_train) == 20 and (tmp_path / "holdout.txt").exists()
    assert main(["gen-data", "--kind", "permuted", "--out", str(tmp_path / "p"), "--base",
                 str(tmp_path / "task_01.txt"), "--num-tasks", "2"]) == 0
    assert load_dataset(tmp_path / "p" / "task_01.txt").equals(load_dataset(tmp_path / "task_01.txt"))


def test_shipped_configs_load():
    from pathlib import Path

    root = Path(__file__).resolve().parent.parent / "configs"
    for p in sorted(root.glob("*.json")):
        load_config(p)
