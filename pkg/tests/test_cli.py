import pytest

from monodream.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, MissingRun, UsageError, dispatch, report_tables
from monodream.evaluation import AblationRow, MetricsReport, write_ablation_csv


def test_gen_world_deterministic(tmp_path):
    a, b = tmp_path / "a" / "w.txt", tmp_path / "b" / "w.txt"
    assert dispatch(["gen-world", "--seed", "0", "--rooms", "2x2", "--out", str(a)]) == EXIT_OK
    assert dispatch(["gen-world", "--seed", "0", "--rooms", "2x2", "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a" / "w.txt.manifest").exists()


def test_env_seed(tmp_path, monkeypatch):
    monkeypatch.setenv("MONODREAM_SEED", "4")
    dispatch(["gen-world", "--out", str(tmp_path / "e.txt")])
    dispatch(["gen-world", "--seed", "4", "--out", str(tmp_path / "f.txt")])
    assert (tmp_path / "e.txt").read_bytes() == (tmp_path / "f.txt").read_bytes()


def test_usage_errors(tmp_path, capsys):
    assert dispatch([]) == EXIT_USAGE
    assert dispatch(["gen-world", "--bogus", "--out", str(tmp_path / "x")]) == EXIT_USAGE
    assert dispatch(["gen-world", "--rooms", "2by2", "--out", str(tmp_path / "x")]) == EXIT_USAGE
    assert dispatch(["build-data", "--set", "nonsense=1", "--out", str(tmp_path / "d")]) == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_runtime_error(tmp_path):
    assert dispatch(["gen-world", "--rooms", "5x5", "--out", str(tmp_path / "w.txt")]) == EXIT_RUNTIME


def test_render_pano_depth(tmp_path):
    w = tmp_path / "w.txt"
    dispatch(["gen-world", "--seed", "0", "--out", str(w)])
    out = tmp_path / "r"
    assert dispatch(["render", "--plan", str(w), "--pose", "1,1,0", "--pano", "--depth", "--out", str(out)]) == EXIT_OK
    assert len(list(out.glob("*.ppm"))) == 4 and (out / "render_manifest.txt").exists()
    assert all(p.read_bytes().startswith(b"P6") for p in out.glob("*.ppm"))


def test_grad_check(tmp_path, capsys):
    assert dispatch(["grad-check", "--shapes", "2", "--out", str(tmp_path)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "max_rel_err" in text and "FAIL" not in text
    assert dispatch(["grad-check", "--shapes", "1", "--tol", "1e-30"]) == EXIT_RUNTIME


def test_build_data_with_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("use_pi=0\nuse_pd=0\nuse_fpi=0\nuse_fpd=0\n")
    out = tmp_path / "d"
    code = dispatch(["build-data", "--config", str(cfg), "--set", "use_ir=false", "--plans", "0-1", "--episodes", "3",
                     "--out", str(out)])
    assert code == EXIT_OK
    assert '"pi": 0' in capsys.readouterr().out
    assert "command=build-data" in (out / "manifest.txt").read_text()
    assert (out / "samples.jsonl").read_text().count('"kind": "action"') > 0


def test_train_then_eval(tmp_path, capsys):
    run = tmp_path / "run"
    code = dispatch(["train", "--preset", "toy", "--set", "d=16", "--set", "heads=2", "--set", "max_steps=2",
                     "--set", "dagger=0", "--epochs", "1", "--plans", "0", "--episodes", "1", "--out", str(run)])
    assert code == EXIT_OK
    ckpt = next(run.glob("*/epoch1.ckpt"))
    ev = tmp_path / "ev"
    assert dispatch(["eval", "--checkpoint", str(ckpt), "--plans", "10000", "--episodes", "2", "--max-steps", "3",
                     "--out", str(ev)]) == EXIT_OK
    assert (ev / "metrics.csv").read_text().startswith("NE,OSR,SR,SPL")
    assert dispatch(["eval", "--checkpoint", str(ckpt), "--plans", "3", "--out", str(ev)]) == EXIT_USAGE


def test_report_tables(tmp_path):
    with pytest.raises(MissingRun):
        report_tables(tmp_path)
    write_ablation_csv(tmp_path / "ablation.csv", [])
    with pytest.raises(UsageError):
        report_tables(tmp_path)
    rows = [AblationRow("baseline", {}, [MetricsReport(2.0, 0.1, 0.2, 0.05, 3)]),
            AblationRow("+IR", {"IR": True}, [MetricsReport(1.5, 0.2, 0.3, 0.1, 3)])]
    write_ablation_csv(tmp_path / "ablation.csv", rows)
    lines = report_tables(tmp_path).splitlines()
    assert len(lines) == 4 and "NE↓" in lines[0] and "SPL↑" in lines[0]
    assert dispatch(["report", "--run-dir", str(tmp_path / "nope")]) == EXIT_USAGE
