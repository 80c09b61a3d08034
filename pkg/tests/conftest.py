import json
import os
import sys
import warnings

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from lampp.cli import main  # noqa: E402
from lampp.video import BoundaryWarning  # noqa: E402


def run_cli(argv, capsys):
    """Run the CLI in-process; returns ``(exit_code, parsed stdout or None)``."""
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    try:
        doc = json.loads(out) if out.strip() else None
    except json.JSONDecodeError:
        doc = None
    return code, doc


def cli_commands(root):
    """One invocation per subcommand, wired to fixture files under ``root``.

    Each entry is ``(name, argv)``; later commands read files written by
    earlier ones, so they must run in order.
    """
    s, n, v = root / "scene", root / "nav", root / "video"
    truth = lambda: json.loads((v / "truth.json").read_text())  # noqa: E731
    return [
        ("fixtures gen scene", ["fixtures", "gen", "--kind", "scene", "--seed", 5, "--out-dir", s]),
        ("fixtures gen nav", ["fixtures", "gen", "--kind", "nav", "--seed", 5, "--out-dir", n]),
        ("fixtures gen video", ["fixtures", "gen", "--kind", "video", "--seed", 5, "--out-dir", v]),
        ("priors build room_object", ["priors", "build", "--domain", "room_object", "--ctx", s / "rooms.txt",
                                      "--rows", s / "objects.txt", "--mock-lm", s / "lm_mock.json",
                                      "--out", root / "ogr.json"]),
        ("priors build confusion", ["priors", "build", "--domain", "confusion", "--rows", s / "objects.txt",
                                    "--mock-lm", s / "lm_mock.json", "--out", root / "conf.json"]),
        ("priors build nav", ["priors", "build", "--domain", "nav", "--ctx", n / "rooms.txt",
                              "--rows", n / "goals.txt", "--mock-lm", n / "lm_mock.json", "--out", root / "goal.json"]),
        ("priors build action", lambda: ["priors", "build", "--domain", "action", "--task", truth()["task"],
                                         "--rows", v / "actions.txt", "--mock-lm", v / "lm_mock.json",
                                         "--out", root / "act.json"]),
        ("segment relabel", ["segment", "relabel", "--scene", s / "scene-0.json", "--priors", root / "ogr.json",
                             "--confusion", root / "conf.json", "--mc", "--oracle", "--mock-lm", s / "lm_mock.json"]),
        ("nav run lampp", ["nav", "run", "--env", n / "env.json", "--policy", "lampp", "--goals", n / "goals.txt",
                           "--episodes", 24, "--seed", 9, "--priors", root / "goal.json"]),
        ("nav run mc", ["nav", "run", "--env", n / "env.json", "--policy", "mc", "--goals", n / "goals.txt",
                        "--episodes", 24, "--seed", 9, "--mock-lm", n / "lm_mock.json"]),
        ("video fit", lambda: ["video", "fit", "--data", v / "train.json", "--prior", root / "act.json",
                               "--holdout", ">".join(truth()["holdout"]), "--params-out", root / "params.json"]),
        ("video decode", ["video", "decode", "--params", root / "params.json", "--data", v / "eval.json",
                          "--out", root / "pred.json"]),
        ("video eval", lambda: ["video", "eval", "--pred", root / "pred.json", "--data", v / "eval.json",
                                "--holdout", ">".join(truth()["holdout"])]),
        ("report delta", ["report", "delta", "--run", root / "nav-lampp.json", "--baseline", root / "nav-mc.json"]),
    ]  # fmt: skip


def run_workflow(root, capsys):
    """Run every subcommand once; returns ``{name: report}``."""
    reports = {}
    for name, argv in cli_commands(root):
        argv = argv() if callable(argv) else argv
        with warnings.catch_warnings():
            # the mock action prior has alpha < 1 cells, which the fit floors and reports
            warnings.simplefilter("ignore", BoundaryWarning)
            code, doc = run_cli(argv, capsys)
        assert code == 0, (name, argv)
        if doc is None and "--out" in argv:
            doc = json.loads(open(argv[argv.index("--out") + 1]).read())
        reports[name] = doc
        if name.startswith("nav run"):
            (root / f"nav-{name.split()[-1]}.json").write_text(json.dumps(doc))
    return reports


@pytest.fixture
def cli(capsys):
    return lambda argv: run_cli(argv, capsys)


# acceptance criteria: tests marked ``criterion(n, title)`` get one PASS/FAIL line
# in the terminal summary

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    n, title = mark.args
    if rep.failed or (rep.when == "call" and rep.passed):
        _CRITERIA[n] = (title, "PASS" if rep.passed else "FAIL", rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status, secs = _CRITERIA[n]
        terminalreporter.write_line(f"{status}  [{n:2d}] {title} ({secs:.2f}s)")
