"""End-to-end command-line tests driven through subprocess."""
import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from headforge.pipeline import load_checkpoint
from headforge.render import read_pfm

TINY_CFG = """\
stage.grid_resolution = 16
stage.expressions = 3
stage.seed = 7
stage.template.iterations = 300
stage.template.lr = 0.01
stage.geometry.iterations = 4
stage.geometry.lr = 0.003
stage.texture.iterations = 6
stage.texture.refine_iterations = 2
stage.field.chunk = 128
stage.field.d_model = 16
stage.field.geometry_blocks = 1
stage.field.texture_blocks = 1
stage.field.levels = 4
stage.field.table_size = 1024
camera.height = 32
camera.width = 32
export.resolution = 64
"""


def run_cli(*argv, check=True):
    proc = subprocess.run([sys.executable, "-m", "headforge.cli", *argv],
                          capture_output=True, text=True)
    if check and proc.returncode != 0:
        raise AssertionError(f"exit {proc.returncode}\nstdout: {proc.stdout}\n"
                             f"stderr: {proc.stderr}")
    return proc


def status_line(proc) -> dict:
    lines = [l for l in proc.stdout.strip().splitlines() if l.strip()]
    assert lines, f"no stdout: {proc.stderr}"
    return json.loads(lines[-1])


@pytest.fixture(scope="module")
def cfg_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.cfg"
    path.write_text(TINY_CFG)
    return path


@pytest.fixture(scope="module")
def trained(cfg_path, tmp_path_factory):
    """One full fit-template -> fit-geometry -> fit-texture chain."""
    out = tmp_path_factory.mktemp("trained")
    g = run_cli("fit-geometry", "--config", str(cfg_path), "--out", str(out),
                "--target", "icosphere:2:0.4")
    t = run_cli("fit-texture", "--config", str(cfg_path), "--out", str(out),
                "--target", "constant:0.5")
    return out, status_line(g), status_line(t)


class TestInfo:
    def test_exit_zero_and_fields(self):
        proc = run_cli("info")
        status = status_line(proc)
        assert status["status"] == "ok"
        assert status["verb"] == "info"
        assert len(status["build"]) == 16
        assert status["version"]
        assert "defaults:" in proc.stdout


class TestErrors:
    def test_missing_config_names_path(self, tmp_path):
        proc = run_cli("fit-geometry", "--config", str(tmp_path / "no.cfg"),
                       "--out", str(tmp_path / "out"), check=False)
        assert proc.returncode == 2
        status = status_line(proc)
        assert status["status"] == "error"
        assert "no.cfg" in status["reason"]

    def test_bad_override_exits_two(self, cfg_path, tmp_path):
        proc = run_cli("fit-geometry", "--config", str(cfg_path),
                       "--set", "stage.wat=1", "--out", str(tmp_path / "out"),
                       check=False)
        assert proc.returncode == 2
        assert "stage.wat" in status_line(proc)["reason"]

    def test_config_file_error_reports_line(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("stage.seed = 1\nstage.nope = 2\n")
        proc = run_cli("fit-template", "--config", str(bad),
                       "--out", str(tmp_path / "out"), check=False)
        assert proc.returncode == 2
        reason = status_line(proc)["reason"]
        assert "line 2" in reason and "bad.cfg" in reason

    def test_numeric_halt_exits_four(self, cfg_path, tmp_path):
        proc = run_cli("fit-geometry", "--config", str(cfg_path),
                       "--set", "stage.geometry.lr=1e39",
                       "--out", str(tmp_path / "out"),
                       "--target", "constant:0.5", check=False)
        assert proc.returncode == 4
        status = status_line(proc)
        assert status["code"] == 4
        assert "non-finite" in status["reason"]

    def test_unreachable_endpoint_exits_three(self, cfg_path, tmp_path):
        proc = run_cli("fit-geometry", "--config", str(cfg_path),
                       "--out", str(tmp_path / "out"),
                       "--guidance", "http://127.0.0.1:1", check=False)
        assert proc.returncode == 3

    def test_bad_expression_count_exits_two(self, cfg_path, tmp_path):
        proc = run_cli("fit-geometry", "--config", str(cfg_path),
                       "--set", "stage.expressions=2",
                       "--out", str(tmp_path / "out"), check=False)
        assert proc.returncode == 2
        assert "stage.expressions" in status_line(proc)["reason"]


class TestArtifacts:
    def test_snapshot_written_with_overrides(self, cfg_path, tmp_path):
        out = tmp_path / "out"
        run_cli("fit-template", "--config", str(cfg_path),
                "--set", "stage.template.iterations=50", "--out", str(out))
        snapshot = (out / "config_snapshot.cfg").read_text()
        assert "stage.template.iterations = 50" in snapshot
        assert "stage.grid_resolution = 16" in snapshot

    def test_chain_produces_checkpoints_and_logs(self, trained):
        out, geo, tex = trained
        assert geo["status"] == "ok" and tex["status"] == "ok"
        assert (out / "template.ckpt").is_file()
        assert (out / "geometry_final.ckpt").is_file()
        assert (out / "texture_final.ckpt").is_file()
        assert (out / "geometry_log.csv").is_file()
        assert (out / "texture_log.csv").is_file()

    def test_export_writes_bundle(self, cfg_path, trained):
        out, _, _ = trained
        proc = run_cli("export", "--config", str(cfg_path), "--out", str(out))
        status = status_line(proc)
        assert status["meshes"] == 3
        manifest = json.loads((out / "assets" / "manifest.json").read_text())
        assert len(manifest["expressions"]) == 3
        for entry in manifest["expressions"]:
            assert (out / "assets" / entry["mesh"]).is_file()
            for name in entry["maps"].values():
                assert (out / "assets" / name).is_file()

    def test_eval_id_writes_reports(self, cfg_path, trained):
        out, _, _ = trained
        proc = run_cli("eval-id", "--config", str(cfg_path), "--out", str(out))
        status = status_line(proc)
        # 3 expressions x 15 cameras, front reference view excluded
        assert status["entries"] == 2 * 15 + 14
        assert (out / "report.csv").is_file()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["count"] == status["entries"]
        assert (out / "contact_sheet.png").is_file()


class TestDeterminism:
    def test_same_argv_same_hashes(self, cfg_path, trained, tmp_path):
        out1, geo1, tex1 = trained
        out2 = tmp_path / "again"
        geo2 = status_line(run_cli("fit-geometry", "--config", str(cfg_path),
                                   "--out", str(out2),
                                   "--target", "icosphere:2:0.4"))
        tex2 = status_line(run_cli("fit-texture", "--config", str(cfg_path),
                                   "--out", str(out2),
                                   "--target", "constant:0.5"))
        assert geo1["param_hash"] == geo2["param_hash"]
        assert tex1["param_hash"] == tex2["param_hash"]
        ck1 = (out1 / "geometry_final.ckpt").read_bytes()
        ck2 = (out2 / "geometry_final.ckpt").read_bytes()
        assert hashlib.sha256(ck1).hexdigest() == hashlib.sha256(ck2).hexdigest()

    def test_seed_flag_changes_result(self, cfg_path, trained, tmp_path):
        out1, geo1, _ = trained
        out2 = tmp_path / "seeded"
        geo2 = status_line(run_cli("fit-geometry", "--config", str(cfg_path),
                                   "--seed", "8", "--out", str(out2),
                                   "--target", "icosphere:2:0.4"))
        assert geo1["param_hash"] != geo2["param_hash"]

    def test_inline_template_matches_explicit_run(self, cfg_path, trained,
                                                  tmp_path):
        out1, _, _ = trained
        out2 = tmp_path / "explicit"
        run_cli("fit-template", "--config", str(cfg_path), "--out", str(out2))
        assert ((out1 / "template.ckpt").read_bytes()
                == (out2 / "template.ckpt").read_bytes())


class TestResume:
    def test_resume_matches_straight_run(self, cfg_path, tmp_path):
        straight = tmp_path / "straight"
        run_cli("fit-geometry", "--config", str(cfg_path),
                "--out", str(straight), "--target", "icosphere:2:0.4")
        resumed = tmp_path / "resumed"
        run_cli("fit-geometry", "--config", str(cfg_path),
                "--set", "stage.checkpoint_every=2",
                "--out", str(resumed), "--target", "icosphere:2:0.4")
        # restart from the midpoint checkpoint; final params must agree
        proc = run_cli("fit-geometry", "--config", str(cfg_path),
                       "--set", "stage.checkpoint_every=2",
                       "--out", str(resumed),
                       "--resume", str(resumed / "geometry_000002.ckpt"),
                       "--target", "icosphere:2:0.4")
        state_a = load_checkpoint(straight / "geometry_final.ckpt")
        state_b = load_checkpoint(resumed / "geometry_final.ckpt")
        for name in state_a.arrays:
            assert np.array_equal(state_a.arrays[name], state_b.arrays[name])


class TestRenderDataset:
    def test_writes_cardinality_and_valid_manifest(self, tmp_path):
        out = tmp_path / "ds"
        proc = run_cli("render-dataset", "--out", str(out),
                       "--identities", "2", "--expressions", "2",
                       "--views", "2", "--size", "16", "--grid", "16")
        status = status_line(proc)
        assert status["records"] == 2 * 2 * 2 * 2  # ids x exps x views x domains
        records = [json.loads(line)
                   for line in (out / "dataset.jsonl").read_text().splitlines()]
        assert len(records) == status["records"]
        for rec in records:
            image = out / rec["image"]
            assert image.is_file()
            data = read_pfm(image)
            assert data.shape == (16, 16, 3)
            assert np.isfinite(data).all()
            assert len(rec["y_id"]) == 512
            assert rec["domain"] in ("normal", "albedo")
        meta = json.loads((out / "meta.json").read_text())
        assert meta["records"] == status["records"]
        assert meta["identities"] == 2

    def test_same_seed_same_bytes(self, tmp_path):
        digests = []
        for name in ("d1", "d2"):
            out = tmp_path / name
            run_cli("render-dataset", "--out", str(out), "--identities", "1",
                    "--expressions", "1", "--views", "1", "--size", "16",
                    "--grid", "16")
            blob = (out / "dataset.jsonl").read_bytes()
            for img in sorted((out / "images").iterdir()):
                blob += img.read_bytes()
            digests.append(hashlib.sha256(blob).hexdigest())
        assert digests[0] == digests[1]
