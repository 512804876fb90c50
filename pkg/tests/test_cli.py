from __future__ import annotations

import io
import re
import subprocess
import sys

import pytest

from fpplab.cli import main
from fpplab.records import read_artifact, read_csv_body

DET = "schedule.specs=deterministic(1)"


def run(*argv: str) -> tuple[int, str]:
    buf = io.StringIO()
    code = main(list(argv), out=buf)
    return code, buf.getvalue()


def test_bounds_lines(tmp_path):
    code, text = run("bounds", "--out", str(tmp_path))
    assert code == 0
    lines = text.splitlines()
    assert "delta = 0.613706" in lines
    assert "K = 18.25" in lines
    assert "alpha = 0.165525" in lines
    assert (tmp_path / "bounds.txt").exists()


def test_bounds_point_mass(tmp_path):
    code, text = run("bounds", "--out", str(tmp_path), "--set", DET)
    assert code == 0
    beta1 = float(re.search(r"^beta1 = (\S+)$", text, re.M).group(1))
    assert 0 < beta1 < 1
    checks = [x for x in text.splitlines() if x.startswith("check[chernoff")]
    assert len(checks) == 4 and all(x.endswith("= satisfied") for x in checks)


def test_bounds_unusable_schedule(tmp_path):
    code, _ = run("bounds", "--out", str(tmp_path), "--set",
                  "specs=shifted-uniform(0, 1e-20)")
    assert code == 2


def test_run_digest_and_rerun(tmp_path):
    args = ("run", "--set", DET, "--set", "n_grid=4,8", "--set", "replications=3")
    code, text = run(*args, "--out", str(tmp_path / "a"))
    assert code == 0
    assert "mu_hat = 1.000000" in text
    assert "variance_slope = n/a" in text
    code2, text2 = run(*args, "--out", str(tmp_path / "b"))
    digest = re.compile(r"^records_sha256 = (\w+)$", re.M)
    assert digest.search(text).group(1) == digest.search(text2).group(1)
    assert (tmp_path / "a" / "records.jsonl").read_bytes() == (tmp_path / "b" / "records.jsonl").read_bytes()


def test_run_refusals(tmp_path):
    assert run("run", "--set", "replications=1", "--out", str(tmp_path))[0] == 2
    assert run("run", "--set", "bogus=1", "--out", str(tmp_path))[0] == 2
    code, _ = run("run", "--set", "box_factor=auto", "--out", str(tmp_path))
    assert code == 3
    assert not (tmp_path / "records.jsonl").exists()


def test_plot_outputs(tmp_path):
    out = str(tmp_path)
    assert run("run", "--set", "n_grid=4,8,16", "--set", "replications=10", "--out", out)[0] == 0
    code, _ = run("plot", "--out", out)
    assert code == 0
    for name in ("variance", "time_constant", "events"):
        svg = (tmp_path / f"{name}.svg").read_text()
        assert svg.startswith("<svg")
        _, body = read_artifact(tmp_path / f"{name}.csv")
        assert len(read_csv_body(body)) == 3
    svg = (tmp_path / "variance.svg").read_text()
    assert 'class="reference" data-slope="1.5"' in svg


def test_plot_degenerate_variance(tmp_path):
    out = str(tmp_path)
    run("run", "--set", DET, "--set", "n_grid=4,8", "--set", "replications=2", "--out", out)
    code, text = run("plot", "--out", out)
    assert code == 0
    assert "degenerate: zero variance" in text
    assert "degenerate: zero variance" in (tmp_path / "variance.svg").read_text()


def test_plot_missing_summary(tmp_path):
    assert run("plot", "--out", str(tmp_path / "empty"))[0] != 0


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("FPPLAB_OUT", str(tmp_path / "env"))
    assert run("bounds")[0] == 0
    assert (tmp_path / "env" / "bounds.txt").exists()


def test_verify_detects_tampered_records(tmp_path):
    out = str(tmp_path)
    run("run", "--set", "n_grid=4,8", "--set", "replications=3", "--out", out)
    p = tmp_path / "records.jsonl"
    p.write_text(p.read_text().replace('"rep": 1,', '"rep": 2,', 1))
    code, text = run("verify", "--out", out, "--records", str(p), "--set", "n_grid=4,8")
    assert code == 1
    assert "FAIL record file integrity" in text


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fpplab", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "fpplab" in proc.stdout


@pytest.mark.parametrize("argv", [["nosuch"], []])
def test_argparse_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
