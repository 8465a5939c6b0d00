import json

import pytest

from predformer import tensorfile
from predformer.cli import main
from predformer.metrics import parse_report
from predformer.model import VARIANTS

TINY = [
    "--set", "model.gtb_dim=16", "--set", "model.gtb_heads=2", "--set", "model.swiglu_hidden_dim=32",
    "--set", "model.frames_in=2", "--set", "model.frames_out=2",
    "--set", "model.height=16", "--set", "model.width=16", "--set", "model.patch_size=4",
    "--set", "data.size_min=3", "--set", "data.size_max=4",
]


def test_gen_data_writes_files_and_manifest(tmp_path):
    out = tmp_path / "d"
    assert main(["gen-data", "--out", str(out), "--count", "100", "--val-count", "3"]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["count"] == 100 and m["frames_total"] == 20
    assert tensorfile.load_tensor(out / "train.pfts").shape == (100, 20, 1, 32, 32)
    assert (out / "config.ini").exists()


def test_gen_data_is_deterministic_and_guards_output(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["gen-data", "--out", str(a), "--seed", "4"])
    main(["gen-data", "--out", str(b), "--seed", "4"])
    assert (a / "train.pfts").read_bytes() == (b / "train.pfts").read_bytes()
    assert main(["gen-data", "--out", str(a)]) == 1
    assert "--force" in capsys.readouterr().err
    assert main(["gen-data", "--out", str(a), "--force"]) == 0


def test_invalid_variant_exit_2_lists_names(capsys):
    with pytest.raises(SystemExit) as e:
        main(["train", "--variant", "tsts"])
    assert e.value.code == 2
    err = capsys.readouterr().err
    assert all(v in err for v in VARIANTS)


def test_invalid_variant_in_config_file_exit_2(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text("[model]\nvariant = tsts\n")
    assert main(["bench", "--config", str(p), "--no-fps", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert all(v in err for v in VARIANTS)


def test_unknown_config_key_exit_2(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[training]\nmomentum = 0.9\n")
    assert main(["bench", "--config", str(p), "--no-fps", "--out", str(tmp_path)]) == 2


def test_train_layers_flag_sets_gtb_count(tmp_path, capsys):
    out = tmp_path / "r"
    assert main(["train", "--out", str(out), "--variant", "quad_tsst", "--layers", "2", "--epochs", "1"] + TINY) == 0
    assert "= 8 GTBs" in capsys.readouterr().out


def test_train_resume_reproduces_uninterrupted_log(tmp_path):
    full, part = tmp_path / "full", tmp_path / "part"
    common = ["--epochs", "4", "--batch-size", "2", "--count", "4"] + TINY
    assert main(["train", "--out", str(full)] + common) == 0
    assert main(["train", "--out", str(part), "--stop-after", "2"] + common) == 0
    assert len((part / "train_log.csv").read_text().splitlines()) == 1 + 4
    assert main(["train", "--out", str(part), "--resume"] + common) == 0
    assert (part / "train_log.csv").read_text() == (full / "train_log.csv").read_text()
    assert (part / "checkpoint.pfck").read_bytes() == (full / "checkpoint.pfck").read_bytes()


def test_resume_without_checkpoint_fails(tmp_path):
    assert main(["train", "--out", str(tmp_path / "x"), "--resume", "--epochs", "1"] + TINY) == 1


def test_train_refuses_existing_output(tmp_path):
    out = tmp_path / "r"
    assert main(["train", "--out", str(out), "--epochs", "1"] + TINY) == 0
    assert main(["train", "--out", str(out), "--epochs", "1"] + TINY) == 1


def test_train_on_generated_files_and_eval(tmp_path):
    data, out = tmp_path / "d", tmp_path / "r"
    assert main(["gen-data", "--out", str(data), "--count", "4", "--val-count", "2"] + TINY) == 0
    assert main(["train", "--out", str(out), "--data", str(data), "--epochs", "2"] + TINY) == 0
    assert main(["eval", "--out", str(out), "--data", str(data), "--batch-size", "1",
                 "--dump-predictions", "--pgm"]) == 0
    assert len(list(out.glob("pred_*.pfts"))) == 2
    assert tensorfile.load_tensor(out / "pred_0000.pfts").shape == (1, 2, 1, 16, 16)
    (row,) = parse_report(out / "metrics.csv")
    assert row["rmse"] ** 2 == pytest.approx(row["mse"], rel=1e-9)
    assert (out / "predictions.pgm").read_bytes().startswith(b"P5\n")


def test_data_model_mismatch_is_preflight_error(tmp_path):
    data = tmp_path / "d"
    assert main(["gen-data", "--out", str(data), "--count", "2"]) == 0  # 32x32
    assert main(["train", "--out", str(tmp_path / "r"), "--data", str(data), "--epochs", "1"] + TINY) == 1


def test_eval_rejects_checkpoint_config_mismatch(tmp_path):
    out = tmp_path / "r"
    assert main(["train", "--out", str(out), "--epochs", "1"] + TINY) == 0
    assert main(["eval", "--out", str(out), "--variant", "quad_tsst"] + TINY) == 1


def test_bench_all_variants(tmp_path, capsys):
    assert main(["bench", "--preset", "moving_mnist", "--all-variants", "--no-fps", "--out", str(tmp_path)]) == 0
    rows = parse_report(tmp_path / "bench.csv")
    assert len(rows) == 9
    assert {r["variant"] for r in rows} == set(VARIANTS)
    for r in rows:
        assert r["params"] / 1e6 == pytest.approx(25.3, rel=0.02)
    flops = {r["variant"]: r["flops"] for r in rows}
    assert flops["full_attention"] > flops["fac_ts"]


def test_bench_measures_fps(tmp_path):
    assert main(["bench", "--out", str(tmp_path), "--layers", "1"] + TINY) == 0
    (row,) = parse_report(tmp_path / "bench.csv")
    assert row["fps"] > 0


def test_gradcheck_command(capsys):
    assert main(["gradcheck"]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith(("PASS", "FAIL"))]
    assert len(lines) == 11 and all(l.startswith("PASS") for l in lines)


def test_gradcheck_tiny_tolerance_fails(capsys):
    assert main(["gradcheck", "--tol", "1e-12"]) == 1
    assert "FAILED" in capsys.readouterr().err
