"""Command-line interface: verbs, exit codes, file outputs, determinism."""

import json
import shutil

import pytest

from hopmc.cli import main
from hopmc.integrator import load_trace


def _copy_traces(trace_dir, dest, names=("musfib", "muslin", "dcmot")):
    dest.mkdir(parents=True, exist_ok=True)
    for name in names:
        for suffix in (".csv", ".meta.json"):
            shutil.copy(trace_dir / f"trace_{name}{suffix}", dest)
    return [str(dest / f"trace_{n}.csv") for n in names]


class TestSimulate:
    def test_short_musfib_run(self, tmp_path, capsys):
        rc = main(["simulate", "--model", "musfib", "--duration", "2",
                   "--out", str(tmp_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "max height" in out
        csv = tmp_path / "trace_musfib.csv"
        lines = csv.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2002        # header + 2001 samples
        assert lines[0] == "t,y,yd,ydd,s1,a,contact"
        meta = json.loads((tmp_path / "trace_musfib.meta.json").read_text())
        assert meta["model"] == "musfib"
        assert meta["meta"]["abs_tol"] == 1e-12

    def test_config_override(self, tmp_path):
        cfg = tmp_path / "p.cfg"
        cfg.write_text("stim_base = 0.05\n", encoding="utf-8")
        rc = main(["simulate", "--model", "musfib", "--duration", "1",
                   "--out", str(tmp_path), "--config", str(cfg)])
        assert rc == 0
        meta = json.loads((tmp_path / "trace_musfib.meta.json").read_text())
        assert meta["meta"]["params"]["stim_base"] == 0.05

    def test_bad_config_key_is_usage_error(self, tmp_path, capsys):
        cfg = tmp_path / "p.cfg"
        cfg.write_text("warp_drive = 9\n", encoding="utf-8")
        rc = main(["simulate", "--model", "musfib", "--duration", "1",
                   "--out", str(tmp_path), "--config", str(cfg)])
        assert rc == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_model_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--model", "pogo", "--out", str(tmp_path)])
        assert exc.value.code == 1

    def test_dcmot_with_explicit_reference(self, trace_dir, tmp_path):
        rc = main(["simulate", "--model", "dcmot", "--duration", "2",
                   "--out", str(tmp_path),
                   "--reference", str(trace_dir / "reference_stance.csv")])
        assert rc == 0
        trace = load_trace(tmp_path / "trace_dcmot.csv")
        assert trace.sensor_names == ("y", "yd")
        assert len(trace) == 2001

    def test_dcmot_reuses_cached_musfib_trace(self, trace_dir, tmp_path, capsys):
        _copy_traces(trace_dir, tmp_path, names=("musfib",))
        rc = main(["simulate", "--model", "dcmot", "--duration", "1",
                   "--out", str(tmp_path)])
        assert rc == 0
        # reference extracted from the cached trace and cached with its hash
        assert (tmp_path / "reference_stance.csv").exists()
        meta = json.loads((tmp_path / "reference_stance.meta.json").read_text())
        assert meta["source_trace"] == "trace_musfib.csv"
        assert len(meta["source_trace_sha256"]) == 64
        assert "simulating musfib" not in capsys.readouterr().err

    def test_deterministic_outputs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            rc = main(["simulate", "--model", "musfib", "--duration", "1",
                       "--out", str(out)])
            assert rc == 0
        assert (a / "trace_musfib.csv").read_bytes() == (b / "trace_musfib.csv").read_bytes()
        assert (a / "trace_musfib.meta.json").read_bytes() == \
            (b / "trace_musfib.meta.json").read_bytes()


class TestMeasure:
    def test_table_and_state_series(self, trace_dir, tmp_path, capsys):
        paths = _copy_traces(trace_dir, tmp_path)
        rc = main(["measure", *paths, "--state-series", "--out", str(tmp_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "bins=300" in out
        assert "MC_W" in out and "MC_MI" in out
        for name in ("musfib", "muslin", "dcmot"):
            assert name in out
            state = tmp_path / f"mc_state_{name}.csv"
            lines = state.read_text(encoding="utf-8").splitlines()
            assert lines[0] == "t,mc_w,mc_mi,mc_w_smooth,mc_mi_smooth,y,contact"
            assert len(lines) == 8001    # header + T-1 rows

    def test_custom_bins_in_header(self, trace_dir, tmp_path, capsys):
        paths = _copy_traces(trace_dir, tmp_path, names=("musfib",))
        rc = main(["measure", *paths, "--bins", "150"])
        assert rc == 0
        assert "bins=150" in capsys.readouterr().out

    def test_duplicate_models_rejected(self, trace_dir, tmp_path, capsys):
        paths = _copy_traces(trace_dir, tmp_path, names=("musfib",))
        rc = main(["measure", paths[0], paths[0]])
        assert rc == 1
        assert "duplicate" in capsys.readouterr().err

    def test_even_smooth_block_rejected(self, trace_dir, tmp_path):
        paths = _copy_traces(trace_dir, tmp_path, names=("musfib",))
        rc = main(["measure", *paths, "--smooth-block", "4"])
        assert rc == 1

    def test_missing_file(self, tmp_path, capsys):
        rc = main(["measure", str(tmp_path / "nope.csv")])
        assert rc == 1


class TestSweepBins:
    def test_sweep(self, trace_dir, tmp_path, capsys):
        paths = _copy_traces(trace_dir, tmp_path, names=("musfib", "muslin"))
        rc = main(["sweep-bins", *paths, "--bins", "50,100", "--out", str(tmp_path)])
        assert rc == 0
        lines = (tmp_path / "measures_vs_bins.csv").read_text().splitlines()
        assert lines[0] == "model,bins,mc_w,mc_mi"
        assert len(lines) == 1 + 2 * 2   # header + 2 bins x 2 models

    def test_single_bin_count_rejected(self, trace_dir, tmp_path, capsys):
        paths = _copy_traces(trace_dir, tmp_path, names=("musfib",))
        rc = main(["sweep-bins", *paths, "--bins", "300", "--out", str(tmp_path)])
        assert rc == 1
        assert "two bin counts" in capsys.readouterr().err

    def test_empty_bin_list_rejected(self, trace_dir, tmp_path):
        paths = _copy_traces(trace_dir, tmp_path, names=("musfib",))
        assert main(["sweep-bins", *paths, "--bins", ",", "--out", str(tmp_path)]) == 1

    def test_garbage_bins_rejected(self, trace_dir, tmp_path):
        paths = _copy_traces(trace_dir, tmp_path, names=("musfib",))
        assert main(["sweep-bins", *paths, "--bins", "50,many", "--out", str(tmp_path)]) == 1


class TestReport:
    def test_report_with_cached_traces(self, trace_dir, tmp_path, capsys):
        _copy_traces(trace_dir, tmp_path)
        shutil.copy(trace_dir / "reference_stance.csv", tmp_path)
        rc = main(["report", "--out", str(tmp_path), "--state-series"])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.count("using cached") == 3
        summary = json.loads((tmp_path / "measures.json").read_text())
        assert summary["bins"] == 300
        assert set(summary["models"]) == {"musfib", "muslin", "dcmot"}
        for vals in summary["models"].values():
            assert vals["mc_w"] > 0
        assert (tmp_path / "binning_spec.txt").exists()
        assert (tmp_path / "mc_state_dcmot.csv").exists()
