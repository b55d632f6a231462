import json
import subprocess
import sys

import pytest

from conftest import FIXTURES, ROOT, TABLE1
from kitsim.cli import main


def small_sweep_config(tmp_path):
    text = TABLE1.read_text()
    text = text.replace("pump_grid: {start: 12.6 GHz, stop: 15 GHz, points: 50}",
                        "pump_grid: {start: 13.5 GHz, stop: 14.5 GHz, points: 3}")
    text = text.replace("signal_grid: {start: 1 GHz, stop: 14 GHz, step: 10 MHz}",
                        "signal_grid: {start: 3 GHz, stop: 11 GHz, step: 100 MHz}")
    text = text.replace("points: 1901}", "points: 401}")
    text = text.replace("smoothing_window: 51", "smoothing_window: 5")
    path = tmp_path / "small.yaml"
    path.write_text(text)
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    def parse(text):
        return json.loads(text) if text.startswith("{") else text
    return code, parse(out), parse(err)


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestDesign:
    def test_stub_lengths(self, tmp_path, capsys):
        code, out, _ = run(["design", "--config", TABLE1, "--out", tmp_path], capsys)
        assert code == 0 and out["status"] == "ok"
        rep = json.loads((tmp_path / "design" / "design.json").read_text())
        lengths = {round(r["target_impedance_ohm"]): r["stub_length_m"] for r in rep["solved_stub_lengths"]}
        assert lengths[48] == pytest.approx(12.1e-6, abs=0.15e-6)
        assert lengths[78] == pytest.approx(3.9e-6, abs=0.15e-6)
        assert rep["supercell"]["impedance_ohm"] == pytest.approx(49.9, rel=0.005)
        assert (tmp_path / "design" / "design_curve.csv").read_text().startswith(
            "stub_length_m,z0_ohm,l_per_cell_h,c_per_cell_f\n")

    def test_byte_identical_reruns(self, tmp_path, capsys):
        run(["design", "--config", TABLE1, "--out", tmp_path / "a"], capsys)
        run(["design", "--config", TABLE1, "--out", tmp_path / "b"], capsys)
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_json_format(self, tmp_path, capsys):
        run(["design", "--config", TABLE1, "--out", tmp_path, "--format", "json"], capsys)
        obj = json.loads((tmp_path / "design" / "design_curve.json").read_text())
        assert obj["columns"][0] == "stub_length_m"
        assert len(obj["data"]["z0_ohm"]) == len(obj["data"]["stub_length_m"])

    def test_manifest(self, tmp_path, capsys):
        run(["design", "--config", TABLE1, "--out", tmp_path], capsys)
        run(["fit", "tdr", FIXTURES / "tdr.csv", "--out", tmp_path], capsys)
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert set(man["runs"]) == {"design", "fit tdr"}
        assert "design/design.json" in man["runs"]["design"]["outputs"]
        assert man["runs"]["fit tdr"]["inputs"]["tdr.csv"]

    def test_dry_run_writes_nothing(self, tmp_path, capsys):
        code, out, _ = run(["design", "--config", TABLE1, "--out", tmp_path / "x", "--dry-run"], capsys)
        assert code == 0 and out["dry_run"]
        assert not (tmp_path / "x").exists()

    def test_missing_config(self, capsys):
        code, _, err = run(["design"], capsys)
        assert code == 2 and err["error"] == "UsageError"

    def test_bad_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text(TABLE1.read_text().replace("n_unloaded: 30", "n_unloaded: 31"))
        code, _, err = run(["design", "--config", bad], capsys)
        assert code == 2 and "even" in err["message"]


class TestFit:
    @pytest.mark.parametrize("kind", ["scaling", "ic", "tdr", "iip", "rt", "resonance"])
    def test_each_kind(self, kind, tmp_path, capsys):
        code, out, err = run(["fit", kind, FIXTURES / f"{kind}.csv", "--config", TABLE1, "--out", tmp_path],
                             capsys)
        assert code == 0, err
        res = json.loads((tmp_path / "fit" / f"{kind}.json").read_text())
        assert res["kind"] == kind and "residuals" in res and "residual_rms" in res
        assert res["conventions"] == {"photon_energy": "angular", "transmittivity_db": "amplitude"}
        assert (tmp_path / "fit" / f"{kind}_residuals.csv").exists()

    def test_values(self, tmp_path, capsys):
        for kind in ("scaling", "iip", "rt"):
            run(["fit", kind, FIXTURES / f"{kind}.csv", "--out", tmp_path], capsys)
        sc = json.loads((tmp_path / "fit" / "scaling.json").read_text())
        assert sc["scaling_current_2_a"] == pytest.approx(2.14e-3, rel=0.02)
        assert sc["tau_source"] == "tdr"
        iip = json.loads((tmp_path / "fit" / "iip.json").read_text())
        assert iip["iip1_dbm"] == pytest.approx(-68, abs=0.05)
        assert iip["iip3_dbm"] == pytest.approx(-55, abs=0.05)
        rt = json.loads((tmp_path / "fit" / "rt.json").read_text())
        assert rt["sheet_inductance_h_per_sq"] == pytest.approx(30e-12, rel=0.01)

    def test_malformed_csv_names_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("time_s,rho\n0,0\n1e-9,zero\n")
        code, _, err = run(["fit", "tdr", bad, "--out", tmp_path], capsys)
        assert code == 1 and err["error"] == "TraceFormatError"
        assert "bad.csv:3" in err["message"]

    def test_scaling_without_delay(self, tmp_path, capsys):
        trace = tmp_path / "s.csv"
        trace.write_text("\n".join(l for l in (FIXTURES / "scaling.csv").read_text().splitlines()
                                   if not l.startswith("# tau_s")) + "\n")
        code, _, err = run(["fit", "scaling", trace, "--out", tmp_path], capsys)
        assert code == 2 and "tau_s" in err["message"]
        code, _, _ = run(["fit", "scaling", trace, "--config", TABLE1, "--out", tmp_path], capsys)
        assert json.loads((tmp_path / "fit" / "scaling.json").read_text())["tau_source"] == "model"

    def test_unknown_kind(self, capsys):
        code, _, _ = run(["fit", "bogus", "x.csv"], capsys)
        assert code == 2


class TestNoise:
    def test_bundle(self, tmp_path, capsys):
        traces = sorted(FIXTURES.glob("sntj_*.csv"))
        code, out, err = run(["noise", *traces, "--config", TABLE1, "--out", tmp_path], capsys)
        assert code == 0, err
        rep = json.loads((tmp_path / "noise" / "noise.json").read_text())
        assert rep["eta0"] == pytest.approx(0.933, abs=1e-3)
        assert rep["eta1"] == pytest.approx(0.950, abs=1e-3)
        by_f = {r["frequency_hz"]: r for r in rep["per_frequency"]}
        assert by_f[6e9]["excess_noise_quanta"] == pytest.approx(1.1, rel=0.02)
        assert by_f[6e9]["transformed_excess_noise_quanta"] > by_f[6e9]["excess_noise_quanta"]
        assert (tmp_path / "noise" / "noise.csv").exists()

    def test_missing_eta_chain(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(TABLE1.read_text().split("\nnoise:")[0] + "\n")
        code, _, err = run(["noise", FIXTURES / "sntj_6ghz.csv", "--config", cfg], capsys)
        assert code == 2 and "eta" in err["message"]

    def test_no_traces(self, capsys):
        code, _, err = run(["noise", "--config", TABLE1], capsys)
        assert code == 2


class TestSweep:
    def test_small_sweep_and_threads(self, tmp_path, capsys):
        cfg = small_sweep_config(tmp_path)
        code, out, err = run(["sweep", "--config", cfg, "--out", tmp_path / "t1"], capsys)
        assert code == 0, err
        run(["sweep", "--config", cfg, "--out", tmp_path / "t3", "--threads", "3"], capsys)
        a, b = tree_bytes(tmp_path / "t1"), tree_bytes(tmp_path / "t3")
        assert a == b
        assert {"sweep/device.s2p", "sweep/dispersion.csv", "sweep/gain.csv", "sweep/metrics.json"} <= set(a)
        metrics = json.loads(a["sweep/metrics.json"])
        assert metrics["bandgap"]["center_hz"] == pytest.approx(12e9, abs=0.5e9)
        assert a["sweep/device.s2p"].startswith(b"! kitsim device S-parameters\n# HZ S RI R 50.0\n")

    def test_dry_run(self, capsys):
        code, out, _ = run(["sweep", "--config", TABLE1, "--dry-run"], capsys)
        assert code == 0 and out["n_pumps"] == 50 and out["n_frequencies"] == 1901

    def test_missing_sweep_section(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(TABLE1.read_text().replace("\nsweep:", "\nunused_sweep:"))
        code, _, err = run(["sweep", "--config", cfg], capsys)
        assert code == 2 and err["status"] == "error"

    def test_bad_threads(self, capsys):
        code, _, err = run(["sweep", "--config", TABLE1, "--threads", "0"], capsys)
        assert code == 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "kitsim.cli", "--version"], capture_output=True,
                          text=True, cwd=ROOT)
    assert proc.returncode == 0 and proc.stdout.startswith("kitsim ")
