import json
import subprocess
import sys
import threading

import pytest
from conftest import run_workflow

from lampp.fixtures import gen_fixtures
from lampp.lm import MockProvider, make_server


def test_workflow_is_deterministic(tmp_path, capsys):
    first = run_workflow(tmp_path / "one", capsys)
    second = run_workflow(tmp_path / "two", capsys)
    for name in first:
        assert first[name]["metrics"] == second[name]["metrics"], name
    assert (tmp_path / "one" / "ogr.json").read_bytes() == (tmp_path / "two" / "ogr.json").read_bytes()
    assert (tmp_path / "one" / "params.json").read_bytes() == (tmp_path / "two" / "params.json").read_bytes()


def test_reports_echo_config(tmp_path, capsys):
    reports = run_workflow(tmp_path, capsys)
    nav = reports["nav run lampp"]["config"]
    assert {"policy", "episodes", "tau", "k", "seed", "paths", "provider"} <= set(nav)
    assert nav["tau"] == 0.5 and nav["k"] == 5 and nav["seed"] == 9
    assert reports["nav run mc"]["metrics"]["lm_queries"] > 0
    assert reports["nav run lampp"]["metrics"]["lm_queries"] == 0
    seg = reports["segment relabel"]["metrics"]
    assert set(seg["miou"]) == {"base", "lampp", "mc"}
    assert "best" in reports["report delta"]["metrics"]
    fit = reports["video fit"]["metrics"]
    assert fit["train_videos_after_holdout"] < fit["train_videos"]
    assert reports["video eval"]["metrics"]["holdout_transition_recall"] is not None


def test_priors_build_counts_and_warm_cache(tmp_path, cli):
    (tmp_path / "rooms.txt").write_text("bathroom\nkitchen\n")
    (tmp_path / "objects.txt").write_text("sink\noven\n")
    (tmp_path / "mock.json").write_text(json.dumps({"default_logprob": -1.0}))
    argv = ["priors", "build", "--domain", "room_object", "--ctx", tmp_path / "rooms.txt",
            "--rows", tmp_path / "objects.txt", "--mock-lm", tmp_path / "mock.json",
            "--cache", tmp_path / "cache.jsonl", "--out", tmp_path / "t.json"]  # fmt: skip
    code, cold = cli(argv)
    assert code == 0 and cold["metrics"]["provider_requests"] == 4
    code, warm = cli(argv)
    assert code == 0 and warm["metrics"]["provider_requests"] == 0
    table = json.loads((tmp_path / "t.json").read_text())
    assert table["kind"] == "prior_table" and table["probs"] == [[0.5, 0.5], [0.5, 0.5]]


def test_priors_build_over_http(tmp_path, cli, monkeypatch):
    (tmp_path / "objects.txt").write_text("sink\noven\n")
    server = make_server(MockProvider({}, -2.0))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        host, port = server.server_address
        monkeypatch.setenv("LAMPP_LM_URL", f"http://{host}:{port}")
        code, doc = cli(["priors", "build", "--domain", "confusion", "--rows", tmp_path / "objects.txt",
                         "--out", tmp_path / "c.json"])  # fmt: skip
    finally:
        server.shutdown()
        server.server_close()
    assert code == 0 and doc["config"]["provider"] == "http"
    assert doc["metrics"]["provider_requests"] == 4


def test_exit_code_validation(tmp_path, cli):
    code, _ = cli(["video", "fit", "--data", tmp_path / "missing.json", "--params-out", tmp_path / "p.json"])
    assert code == 2
    gen_fixtures("nav", 0, tmp_path)
    code, _ = cli(["nav", "run", "--env", tmp_path / "env.json", "--policy", "lampp",
                   "--goals", tmp_path / "goals.txt"])  # fmt: skip
    assert code == 2
    code, _ = cli(["nav", "run", "--env", tmp_path / "env.json", "--policy", "uniform",
                   "--goals", tmp_path / "goals.txt", "--seed", 2**64])  # fmt: skip
    assert code == 2


def test_exit_code_provider(tmp_path, cli, monkeypatch):
    (tmp_path / "objects.txt").write_text("sink\n")
    monkeypatch.setenv("LAMPP_LM_URL", "http://127.0.0.1:9")
    monkeypatch.setattr("lampp.lm.HttpProvider.__init__.__defaults__", (30.0, 3, 0.0, None))
    code, _ = cli(["priors", "build", "--domain", "confusion", "--rows", tmp_path / "objects.txt",
                   "--out", tmp_path / "c.json", "--workers", 1])  # fmt: skip
    assert code == 3


def test_exit_code_internal(tmp_path, cli, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("unexpected")

    monkeypatch.setattr("lampp.cli.gen_fixtures", boom)
    code, _ = cli(["fixtures", "gen", "--kind", "scene", "--out-dir", tmp_path])
    assert code == 4


def test_argparse_errors_exit_2(cli):
    with pytest.raises(SystemExit) as info:
        cli(["nav", "run", "--policy", "greedy"])
    assert info.value.code == 2


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "lampp.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for verb in ("priors", "segment", "nav", "video", "fixtures", "report"):
        assert verb in out.stdout
