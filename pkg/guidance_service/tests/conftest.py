"""Shared fixtures: a rendered dataset produced by the optimization CLI."""
import json
import subprocess
import sys

import pytest


@pytest.fixture(scope="session")
def render_root(tmp_path_factory):
    out = tmp_path_factory.mktemp("renders")
    proc = subprocess.run(
        [sys.executable, "-m", "headforge.cli", "render-dataset",
         "--out", str(out), "--identities", "6", "--expressions", "3",
         "--views", "4", "--size", "64", "--grid", "16"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    status = json.loads(proc.stdout.strip().splitlines()[-1])
    assert status["records"] == 144
    return out
