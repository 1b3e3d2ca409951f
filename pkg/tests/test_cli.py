"""End-to-end CLI behavior through main(argv)."""

import json

import numpy as np
import pytest

from ptygrad.cli import load_preset, main

SMALL_FP = {
    "type": "fp",
    "n_high": 32,
    "stride": 2,
    "na": 0.125,
    "lambda_um": 1.0,
    "px_high": 1.0,
    "illumination": {"rows": 3, "cols": 3, "step": 0.0625},
    "mode": "crop",
    "object": {"seed": 5, "bandlimit": True},
}

SMALL_RECON = {
    "model": "exitwave",
    "norm": "l2",
    "optimizer": {"kind": "sgd", "lr": 0.5},
    "epochs": 3,
    "batch_size": 1,
}


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def fp_data(tmp_path):
    cfg = write_json(tmp_path / "sim.json", SMALL_FP)
    data = tmp_path / "data"
    assert main(["simulate", "--config", cfg, "--out", str(data)]) == 0
    return data


class TestSimulate:
    def test_writes_manifest(self, fp_data):
        manifest = json.loads((fp_data / "manifest.json").read_text())
        assert manifest["kind"] == "fp"
        assert len(manifest["wavevectors"]) == 9

    def test_unknown_key_is_config_error(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "bad.json", dict(SMALL_FP, exposure=2))
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "d")]) == 2
        assert "exposure" in capsys.readouterr().err

    def test_json_syntax_error_reports_location(self, tmp_path, capsys):
        bad = tmp_path / "broken.json"
        bad.write_text('{"type": "fp",\n  "n_high": }')
        assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "d")]) == 2
        err = capsys.readouterr().err
        assert "line 2" in err

    def test_spi_and_sim_types(self, tmp_path):
        spi = {"type": "spi", "side": 4, "patterns": {"kind": "orthogonal", "count": 16}}
        cfg = write_json(tmp_path / "spi.json", spi)
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "ds")]) == 0
        sim = {"type": "sim", "side": 16, "ctf_radius_bins": 3,
               "patterns": {"count": 4, "freq_factor": 0.9}}
        cfg = write_json(tmp_path / "sim2.json", sim)
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "dm")]) == 0


class TestReconstruct:
    def test_outputs(self, fp_data, tmp_path):
        cfg = write_json(tmp_path / "rec.json", SMALL_RECON)
        out = tmp_path / "run"
        assert main(["reconstruct", "--data", str(fp_data), "--config", cfg,
                     "--out", str(out)]) == 0
        for name in ("recon_complex.raw", "amplitude.png", "phase.png",
                     "loss.csv", "run_summary.json"):
            assert (out / name).exists(), name
        assert (out / "checkpoint" / "checkpoint.json").exists()
        summary = json.loads((out / "run_summary.json").read_text())
        assert summary["update_count"] == 3 * 9
        assert summary["final_rel_error"] < 1.0

    def test_loss_csv_layout(self, fp_data, tmp_path):
        cfg = write_json(tmp_path / "rec.json", SMALL_RECON)
        out = tmp_path / "run"
        main(["reconstruct", "--data", str(fp_data), "--config", cfg, "--out", str(out)])
        lines = (out / "loss.csv").read_text().strip().splitlines()
        assert lines[0] == "update_index,epoch,loss,rel_error"
        assert len(lines) == 1 + 27
        # rel_error filled only on the last update of each epoch
        row9 = lines[9].split(",")
        assert row9[1] == "0" and row9[3] != ""
        assert lines[1].split(",")[3] == ""

    def test_deterministic_runs_bit_identical(self, fp_data, tmp_path):
        cfg = write_json(tmp_path / "rec.json",
                         dict(SMALL_RECON, order="shuffled"))
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        for out in (out1, out2):
            assert main(["reconstruct", "--data", str(fp_data), "--config", cfg,
                         "--out", str(out), "--deterministic", "--seed", "7"]) == 0
        assert (out1 / "loss.csv").read_bytes() == (out2 / "loss.csv").read_bytes()

    def test_resume_matches_full_run(self, fp_data, tmp_path):
        full_cfg = write_json(tmp_path / "full.json",
                              dict(SMALL_RECON, epochs=6,
                                   optimizer={"kind": "adam", "lr": 0.01}))
        half_cfg = write_json(tmp_path / "half.json",
                              dict(SMALL_RECON, epochs=3,
                                   optimizer={"kind": "adam", "lr": 0.01}))
        main(["reconstruct", "--data", str(fp_data), "--config", full_cfg,
              "--out", str(tmp_path / "full")])
        main(["reconstruct", "--data", str(fp_data), "--config", half_cfg,
              "--out", str(tmp_path / "half")])
        main(["reconstruct", "--data", str(fp_data), "--config", half_cfg,
              "--out", str(tmp_path / "resumed"),
              "--resume", str(tmp_path / "half" / "checkpoint")])
        a = np.fromfile(tmp_path / "full" / "recon_complex.raw", dtype="<f4")
        b = np.fromfile(tmp_path / "resumed" / "recon_complex.raw", dtype="<f4")
        assert np.max(np.abs(a - b)) < 1e-6


class TestGradcheck:
    def test_passes(self, capsys):
        assert main(["gradcheck", "--model", "fp_exitwave", "--size", "8"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_corrupt_negative_control_fails(self, capsys):
        assert main(["gradcheck", "--model", "spi", "--corrupt"]) == 1
        assert "FAIL" in capsys.readouterr().out


class TestSweep:
    def test_writes_csv_and_plots(self, fp_data, tmp_path):
        cfg = write_json(tmp_path / "sweep.json",
                         dict(SMALL_RECON, epochs=2, sweep={"lr": [0.1, 0.5]}))
        out = tmp_path / "sweep_out"
        assert main(["sweep", "--data", str(fp_data), "--config", cfg,
                     "--out", str(out)]) == 0
        lines = (out / "sweep.csv").read_text().strip().splitlines()
        assert lines[0] == "cell,series,index,loss,error"
        assert any(line.startswith("lr=0.1,") for line in lines[1:])
        assert (out / "loss_vs_epoch.png").exists()
        assert (out / "loss_vs_update.png").exists()

    def test_empty_axes_rejected(self, fp_data, tmp_path, capsys):
        cfg = write_json(tmp_path / "sweep.json", dict(SMALL_RECON, sweep={}))
        assert main(["sweep", "--data", str(fp_data), "--config", cfg,
                     "--out", str(tmp_path / "o")]) == 2


class TestRenderInfo:
    def test_render_from_raw(self, fp_data, tmp_path):
        cfg = write_json(tmp_path / "rec.json", SMALL_RECON)
        run = tmp_path / "run"
        main(["reconstruct", "--data", str(fp_data), "--config", cfg, "--out", str(run)])
        out = tmp_path / "rendered"
        assert main(["render", "--data", str(run), "--out", str(out)]) == 0
        assert (out / "amplitude.png").exists()
        assert (out / "phase.png").exists()

    def test_info(self, fp_data, capsys):
        assert main(["info", "--data", str(fp_data)]) == 0
        out = capsys.readouterr().out
        assert "kind: fp" in out
        assert "9 measurement entries" in out


class TestPresets:
    def test_presets_load(self):
        for name in ("fp-dense-grid", "fp-sparse-grid", "sim-four-frame", "spi-hadamard"):
            cfg = load_preset(name)
            assert "type" in cfg

    def test_unknown_preset(self, tmp_path, capsys):
        assert main(["simulate", "--config", "preset:nope",
                     "--out", str(tmp_path / "d")]) == 2
