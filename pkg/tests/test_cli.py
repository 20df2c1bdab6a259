"""Command-line behavior: configs, overrides, outputs, exit codes."""

import json

import numpy as np
import pytest

from flashopt.channel import Condition, DEFAULT_PARAMS
from flashopt.cli import main
from flashopt.mlp import MlpModel, load_model, save_model
from flashopt.optimizer import cis_optimize
from flashopt.quantizer import ThresholdSet


def make_constant_model(d: ThresholdSet, n_inputs: int = 7) -> MlpModel:
    vals = np.asarray(d.as_array()) / 6.0
    bias = np.log(vals / (1.0 - vals))
    return MlpModel(dims=(n_inputs, 4, len(vals)),
                    weights=[np.zeros((n_inputs, 4)), np.zeros((4, len(vals)))],
                    biases=[np.zeros(4), bias], scale=6.0)


def test_optimize_stdout(capsys):
    rc = main(["optimize", "--n-pe", "8000", "--t-ret", "0"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 6
    vals = [float(v) for v in lines]
    assert vals == sorted(vals)


def test_optimize_matches_library_and_writes_files(tmp_path, capsys):
    out = tmp_path / "d.txt"
    hist = tmp_path / "hist.csv"
    rc = main(["optimize", "--n-pe", "10000", "--t-ret", "1000",
               "--out", str(out), "--history-out", str(hist)])
    assert rc == 0
    capsys.readouterr()
    d_lib, history = cis_optimize(Condition(10000.0, 1000.0), DEFAULT_PARAMS,
                                  2624, 0.9, seed=0)
    assert ThresholdSet.from_file(out) == d_lib
    lines = hist.read_text().strip().splitlines()
    assert lines[0] == "sweep,objective"
    assert len(lines) == len(history) + 1


def test_missing_config_exits_2(capsys):
    rc = main(["optimize", "--config", "/nonexistent.json"])
    assert rc == 2
    assert capsys.readouterr().err.startswith("error:")


def test_bad_method_in_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_pe": 8000.0, "method": "newton"}))
    rc = main(["optimize", "--config", str(cfg)])
    assert rc == 2
    assert "newton" in capsys.readouterr().err


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_pe": 8000.0, "wibble": 3}))
    rc = main(["optimize", "--config", str(cfg)])
    assert rc == 2
    assert "wibble" in capsys.readouterr().err


def test_fer_tiny_run_and_csv(tmp_path, capsys):
    out = tmp_path / "fer.csv"
    rc = main(["fer", "--source", "hard", "--pe-list", "15000",
               "--t-list", "10", "--frames", "6", "--seed", "3",
               "--out", str(out)])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "fer" in stdout.splitlines()[0]
    body = out.read_text().strip().splitlines()
    assert body[0] == "source,code,n_pe,t_ret,frames,errors,fer"
    assert len(body) == 2


def test_config_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"source": "hard", "pe_list": "15000",
                               "t_list": "0", "frames": 5, "j_levels": 6}))
    out1 = tmp_path / "a.csv"
    rc = main(["ccr", "--config", str(cfg), "--pe-list", "9000",
               "--out", str(out1)])
    assert rc == 0
    capsys.readouterr()
    assert ",9000," in out1.read_text().splitlines()[1]


def test_ccr_reruns_byte_identical(tmp_path, capsys):
    args = ["ccr", "--pe-list", "8000", "--t-list", "0", "--j-list", "6",
            "--code-list", "2k-qc"]
    out1, out2 = tmp_path / "1.csv", tmp_path / "2.csv"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    capsys.readouterr()
    assert out1.read_bytes() == out2.read_bytes()


def test_train_tiny_end_to_end(tmp_path, capsys):
    model_out = tmp_path / "m.bin"
    data_out = tmp_path / "d.csv"
    loss_out = tmp_path / "l.csv"
    rc = main(["train", "--count", "8", "--cells", "2000", "--pe-set", "6000",
               "--t-lo", "0", "--t-hi", "10000", "--epochs", "3",
               "--batch", "4", "--lr", "0.001", "--seed", "1",
               "--dataset-out", str(data_out), "--model-out", str(model_out),
               "--loss-out", str(loss_out)])
    assert rc == 0
    capsys.readouterr()
    model = load_model(model_out)
    assert model.n_inputs == 7
    assert model.n_outputs == 6
    assert len(data_out.read_text().strip().splitlines()) == 8
    assert len(loss_out.read_text().strip().splitlines()) == 4


def test_train_from_existing_dataset(tmp_path, capsys):
    data_out = tmp_path / "d.csv"
    rc = main(["train", "--count", "6", "--cells", "2000", "--pe-set", "6000",
               "--t-lo", "0", "--t-hi", "1000", "--epochs", "1",
               "--batch", "3", "--dataset-out", str(data_out),
               "--model-out", str(tmp_path / "m1.bin")])
    assert rc == 0
    rc = main(["train", "--dataset-in", str(data_out), "--epochs", "2",
               "--batch", "3", "--lr", "0.01",
               "--model-out", str(tmp_path / "m2.bin")])
    assert rc == 0
    capsys.readouterr()
    assert (tmp_path / "m2.bin").exists()


def test_train_lr_final_flag(tmp_path, capsys):
    data_out = tmp_path / "d.csv"
    rc = main(["train", "--count", "6", "--cells", "2000", "--pe-set", "6000",
               "--t-lo", "0", "--t-hi", "1000", "--epochs", "2",
               "--batch", "3", "--dataset-out", str(data_out),
               "--loss-out", str(tmp_path / "flat.csv")])
    assert rc == 0
    rc = main(["train", "--dataset-in", str(data_out), "--epochs", "2",
               "--batch", "3", "--lr", "0.01", "--lr-final", "1e-4",
               "--loss-out", str(tmp_path / "decay.csv")])
    assert rc == 0
    rc = main(["train", "--dataset-in", str(data_out), "--epochs", "2",
               "--batch", "3", "--lr", "0.01", "--lr-final", "0.02",
               "--loss-out", str(tmp_path / "bad.csv")])
    assert rc == 2
    capsys.readouterr()
    assert (tmp_path / "decay.csv").exists()
    assert not (tmp_path / "bad.csv").exists()


def test_train_hidden_flag(tmp_path, capsys):
    data_out = tmp_path / "d.csv"
    rc = main(["train", "--count", "6", "--cells", "2000", "--pe-set", "6000",
               "--t-lo", "0", "--t-hi", "1000", "--epochs", "1",
               "--batch", "3", "--hidden", "12,5",
               "--dataset-out", str(data_out),
               "--model-out", str(tmp_path / "m.bin")])
    assert rc == 0
    capsys.readouterr()
    assert load_model(tmp_path / "m.bin").dims == (7, 12, 5, 6)


def test_pipeline_cli_with_model_file(tmp_path, capsys):
    d, _ = cis_optimize(Condition(15000.0, 0.0), DEFAULT_PARAMS, 2624, 0.9, seed=0)
    model_path = tmp_path / "m.bin"
    save_model(make_constant_model(d), model_path)
    out = tmp_path / "p.csv"
    rc = main(["pipeline", "--source", "cis", "--pe-list", "15000",
               "--t-list", "0", "--frames", "5", "--model-file", str(model_path),
               "--out", str(out)])
    assert rc == 0
    capsys.readouterr()
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("n_pe,t_ret,frames,first_pass_failures")
    assert len(lines) == 2


def test_pipeline_without_model_exits_2(capsys):
    rc = main(["pipeline", "--source", "cis", "--pe-list", "15000",
               "--t-list", "0", "--frames", "3"])
    assert rc == 2
    assert "model" in capsys.readouterr().err
