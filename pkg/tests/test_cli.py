import json
import math
import shutil
import subprocess

import pytest

from swapsim.analysis import SelectionFilter, chsh
from swapsim.classical import ClassicalRecord
from swapsim.cli import iter_records_file, main
from swapsim.protocol import ExperimentConfig, TrialRecord, run_batch


def round12(value):
    if isinstance(value, float):
        return float(f"{value:.12g}")
    if isinstance(value, dict):
        return {k: round12(v) for k, v in value.items()}
    if isinstance(value, list):
        return [round12(v) for v in value]
    return value


def simulate(tmp_path, name="records.jsonl", trials=4000, seed=42, extra=()):
    out = tmp_path / name
    code = main(["simulate", "--trials", str(trials), "--seed", str(seed),
                 "--out", str(out), "--threads", "1", *extra])
    assert code == 0
    return out


class TestSimulate:
    def test_writes_records_and_manifest(self, tmp_path, capsys):
        out = simulate(tmp_path, trials=500)
        stdout = capsys.readouterr().out
        assert f"wrote 500 records to {out}" in stdout
        lines = out.read_text().splitlines()
        assert len(lines) == 500
        first = json.loads(lines[0])
        assert first["trial_id"] == 0
        assert first["ordering"] == "bsm-first"
        manifest = json.loads((tmp_path / "records.jsonl.manifest.json").read_text())
        assert manifest["artifact"] == "swapsim"
        assert manifest["command"] == "simulate"
        assert manifest["record_count"] == 500
        assert manifest["trial_start"] == 0 and manifest["trial_end"] == 500
        assert manifest["outputs"]["records"] == str(out)
        assert manifest["config"]["trials"] == 500
        assert manifest["config"]["seed"] == 42

    def test_reruns_are_byte_identical(self, tmp_path):
        out = simulate(tmp_path, trials=1500)
        first = out.read_bytes()
        simulate(tmp_path, trials=1500)
        assert out.read_bytes() == first

    def test_threads_do_not_change_bytes(self, tmp_path):
        # spans are rendered in parallel but written in order
        sequential = simulate(tmp_path, "seq.jsonl", trials=60_000, seed=7)
        threaded = tmp_path / "par.jsonl"
        code = main(["simulate", "--trials", "60000", "--seed", "7",
                     "--out", str(threaded), "--threads", "4"])
        assert code == 0
        assert threaded.read_bytes() == sequential.read_bytes()

    def test_records_round_trip_to_run_batch(self, tmp_path):
        out = simulate(tmp_path, trials=300, seed=9,
                       extra=("--ordering", "pol-first", "--bsm-mode", "partial"))
        cfg = ExperimentConfig(angles0=(0.0, 45.0), angles3=(22.5, 67.5), trials=300,
                               ordering="pol-first", bsm_mode="partial", seed=9)
        assert list(iter_records_file(str(out))) == list(run_batch(cfg))

    def test_manifest_is_a_complete_recipe(self, tmp_path):
        out = simulate(tmp_path, trials=400, seed=11,
                       extra=("--angles", "5,50,20,65", "--visibility", "0.9"))
        doc = json.loads((tmp_path / "records.jsonl.manifest.json").read_text())["config"]
        cfg = ExperimentConfig(
            angles0=tuple(doc["angles0"]), angles3=tuple(doc["angles3"]),
            trials=doc["trials"], ordering=doc["ordering"], bsm_mode=doc["bsm_mode"],
            seed=doc["seed"], setting_policy=doc["setting_policy"],
            visibility=doc["visibility"],
        )
        rebuilt = "".join(
            json.dumps(rec.to_json_dict(), separators=(",", ":")) + "\n"
            for rec in run_batch(cfg)
        )
        assert rebuilt == out.read_text()

    def test_zero_threads_is_a_usage_error(self, tmp_path, capsys):
        code = main(["simulate", "--trials", "10", "--out", str(tmp_path / "x.jsonl"),
                     "--threads", "0"])
        assert code == 2
        assert "error" in capsys.readouterr().err


class TestSeedResolution:
    def test_env_seed_is_picked_up(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SWAPSIM_SEED", "123")
        out = tmp_path / "records.jsonl"
        assert main(["simulate", "--trials", "50", "--out", str(out), "--threads", "1"]) == 0
        manifest = json.loads((tmp_path / "records.jsonl.manifest.json").read_text())
        assert manifest["seed"] == 123

    def test_flag_beats_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SWAPSIM_SEED", "123")
        simulate(tmp_path, trials=50, seed=7)
        manifest = json.loads((tmp_path / "records.jsonl.manifest.json").read_text())
        assert manifest["seed"] == 7

    def test_default_seed_is_zero(self, tmp_path, monkeypatch):
        monkeypatch.delenv("SWAPSIM_SEED", raising=False)
        out = tmp_path / "records.jsonl"
        assert main(["simulate", "--trials", "50", "--out", str(out), "--threads", "1"]) == 0
        manifest = json.loads((tmp_path / "records.jsonl.manifest.json").read_text())
        assert manifest["seed"] == 0

    def test_garbage_env_seed_is_a_usage_error(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("SWAPSIM_SEED", "not-a-number")
        code = main(["simulate", "--trials", "10", "--out", str(tmp_path / "x.jsonl")])
        assert code == 2
        assert "SWAPSIM_SEED" in capsys.readouterr().err


class TestAnalyze:
    def test_report_matches_in_process_estimate(self, tmp_path, capsys):
        out = simulate(tmp_path, trials=4000)
        capsys.readouterr()
        assert main(["analyze", "--in", str(out), "--select", "psi-minus"]) == 0
        doc = json.loads(capsys.readouterr().out)
        records = list(iter_records_file(str(out)))
        want = chsh(records, SelectionFilter.bsm_equals("psi-minus")).to_json_dict()
        assert doc == round12(want)
        assert doc["filter"] == "bsm=psi-minus"
        assert doc["total"] == 4000
        assert abs(doc["s"] - (-2.0 * math.sqrt(2.0))) <= 5.0 * doc["s_std_err"]

    def test_out_flag_writes_the_report_file(self, tmp_path, capsys):
        records = simulate(tmp_path, trials=2000)
        capsys.readouterr()
        report_path = tmp_path / "report.json"
        assert main(["analyze", "--in", str(records), "--out", str(report_path)]) == 0
        assert capsys.readouterr().out == ""
        doc = json.loads(report_path.read_text())
        assert doc["filter"] == "none"
        assert doc["kept"] == doc["total"] == 2000

    def test_empty_file_is_insufficient_data(self, tmp_path, capsys):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        assert main(["analyze", "--in", str(empty)]) == 4
        assert "insufficient data" in capsys.readouterr().err

    def test_starved_filter_is_insufficient_data(self, tmp_path):
        records = simulate(tmp_path, trials=2000)
        # full-mode records never carry the coarse partial-mode label
        assert main(["analyze", "--in", str(records), "--select", "other"]) == 4

    def test_garbled_line_reports_its_number(self, tmp_path, capsys):
        records = simulate(tmp_path, trials=5)
        bad = tmp_path / "bad.jsonl"
        lines = records.read_text().splitlines()
        bad.write_text(lines[0] + "\n" + "{not json\n" + lines[1] + "\n")
        assert main(["analyze", "--in", str(bad)]) == 3
        assert "line 2" in capsys.readouterr().err

    def test_semantically_broken_record_reports_its_number(self, tmp_path, capsys):
        records = simulate(tmp_path, trials=5)
        doc = json.loads(records.read_text().splitlines()[0])
        doc["outcome0"] = 3
        bad = tmp_path / "bad.jsonl"
        bad.write_text(json.dumps(doc) + "\n")
        assert main(["analyze", "--in", str(bad)]) == 3
        assert "line 1" in capsys.readouterr().err

    def test_missing_file_is_an_io_error(self, tmp_path, capsys):
        assert main(["analyze", "--in", str(tmp_path / "nope.jsonl")]) == 3
        assert "i/o error" in capsys.readouterr().err

    def test_blank_lines_are_skipped(self, tmp_path):
        records = simulate(tmp_path, trials=200)
        padded = tmp_path / "padded.jsonl"
        padded.write_text(records.read_text().replace("\n", "\n\n") + "\n\n")
        assert len(list(iter_records_file(str(padded)))) == 200


class TestUsageErrors:
    def test_unknown_command(self):
        assert main(["frobnicate"]) == 2

    def test_bad_trials_value(self, tmp_path):
        assert main(["simulate", "--trials", "abc", "--out", str(tmp_path / "x")]) == 2

    def test_malformed_angles(self, tmp_path):
        assert main(["simulate", "--angles", "1,2,3", "--out", str(tmp_path / "x")]) == 2

    def test_coinciding_angles_rejected(self, tmp_path, capsys):
        code = main(["simulate", "--angles", "0,0,22.5,67.5", "--trials", "10",
                     "--out", str(tmp_path / "x.jsonl")])
        assert code == 2
        assert "distinct" in capsys.readouterr().err

    def test_bad_visibility(self, tmp_path):
        assert main(["simulate", "--visibility", "1.5", "--trials", "10",
                     "--out", str(tmp_path / "x.jsonl")]) == 2

    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert capsys.readouterr().out.startswith("swapsim ")


class TestReport:
    def test_exact_summary_states_the_stage_story(self, capsys):
        assert main(["report", "--exact"]) == 0
        text = capsys.readouterr().out
        assert "stage entanglement of photons (0,3):" in text
        stage = {line.strip().split(": ", 1)[0]: line for line in text.splitlines()
                 if "concurrence=" in line}
        assert set(stage) == {"pre-bsm", "post-bsm:psi-minus", "post-bsm:psi-plus",
                              "post-bsm:phi-minus", "post-bsm:phi-plus"}
        assert "concurrence=0 " in stage["pre-bsm"]
        assert "concurrence=1 " in stage["post-bsm:psi-minus"]
        assert "P(bsm=psi-minus) = 0.25" in text

    def test_exact_chsh_by_selection(self, capsys):
        assert main(["report", "--exact"]) == 0
        text = capsys.readouterr().out
        values = {}
        for line in text.splitlines():
            stripped = line.strip()
            if stripped.startswith("filter ") and " S = " in stripped:
                name = stripped.split(":")[0].removeprefix("filter ")
                values[name] = float(stripped.split("S = ")[1].split()[0])
        root8 = 2.0 * math.sqrt(2.0)
        assert abs(values["bsm=psi-minus"] - (-root8)) <= 1e-9
        assert abs(values["bsm=phi-plus"] - root8) <= 1e-9
        assert abs(values["bsm=psi-plus"]) <= 1e-9
        assert abs(values["bsm=phi-minus"]) <= 1e-9
        assert abs(values["none"]) <= 1e-9

    def test_sampled_summary(self, capsys):
        assert main(["report", "--trials", "2000", "--seed", "5"]) == 0
        text = capsys.readouterr().out
        assert "sampled outcome frequencies (N=2000, seed=5):" in text
        assert "sampled CHSH by selection:" in text
        assert "kept = " in text

    def test_partial_mode_summary_has_three_outcomes(self, capsys):
        assert main(["report", "--exact", "--bsm-mode", "partial"]) == 0
        text = capsys.readouterr().out
        assert "P(bsm=other) = 0.5" in text
        assert "post-bsm:other" in text
        assert "phi-plus" not in text

    def test_exact_scan_traces_the_singlet_curve(self, tmp_path):
        out = tmp_path / "scan.csv"
        assert main(["report", "--scan", "--exact", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "delta_deg,e_psi_minus,e_unconditional"
        assert len(lines) == 1 + 13  # 0..90 in 7.5 degree steps
        for row in lines[1:]:
            delta, e_filtered, e_all = (float(x) for x in row.split(","))
            assert abs(e_filtered - (-math.cos(2.0 * math.radians(delta)))) <= 1e-12
            assert abs(e_all) <= 1e-12

    def test_sampled_scan_has_the_same_shape(self, tmp_path):
        out = tmp_path / "scan.csv"
        assert main(["report", "--scan", "--trials", "400", "--seed", "2",
                     "--scan-step", "22.5", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "delta_deg,e_psi_minus,e_unconditional"
        assert len(lines) == 1 + 5  # 0, 22.5, 45, 67.5, 90
        for row in lines[1:]:
            _, e_filtered, e_all = (float(x) for x in row.split(","))
            assert -1.0 <= e_filtered <= 1.0
            assert -1.0 <= e_all <= 1.0

    def test_bad_scan_step(self):
        assert main(["report", "--scan", "--exact", "--scan-step", "0"]) == 2


class TestClassicalCommands:
    def test_generate_writes_records_and_manifest(self, tmp_path, capsys):
        out = tmp_path / "lhv.jsonl"
        code = main(["classical", "generate", "--model", "uniform", "--trials", "1000",
                     "--seed", "3", "--out", str(out)])
        assert code == 0
        assert "wrote 1000 records" in capsys.readouterr().out
        lines = out.read_text().splitlines()
        assert len(lines) == 1000
        rec = json.loads(lines[0])
        assert rec["ordering"] == "classical"
        manifest = json.loads((tmp_path / "lhv.jsonl.manifest.json").read_text())
        assert manifest["command"] == "classical-generate"
        assert manifest["config"]["model"] == "uniform"

    def test_pr_box_discard_reaches_the_algebraic_maximum(self, tmp_path, capsys):
        lhv = tmp_path / "lhv.jsonl"
        main(["classical", "generate", "--model", "uniform", "--trials", "20000",
              "--seed", "3", "--out", str(lhv)])
        capsys.readouterr()
        kept_path = tmp_path / "kept.jsonl"
        code = main(["classical", "discard", "--rule", "pr-box",
                     "--in", str(lhv), "--out", str(kept_path)])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["rule"] == "pr-box"
        assert summary["kind"] == "deterministic"
        assert abs(summary["keep_fraction"] - 0.5) <= 5.0 * math.sqrt(0.25 / 20000)
        assert main(["analyze", "--in", str(kept_path)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["s"] == 4.0
        assert report["kept"] == summary["kept"]

    def test_mimic_discard_reproduces_the_quantum_value(self, tmp_path, capsys):
        lhv = tmp_path / "lhv.jsonl"
        main(["classical", "generate", "--model", "uniform", "--trials", "40000",
              "--seed", "4", "--out", str(lhv)])
        capsys.readouterr()
        kept_path = tmp_path / "kept.jsonl"
        code = main(["classical", "discard", "--rule", "quantum-mimic", "--seed", "6",
                     "--in", str(lhv), "--out", str(kept_path)])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["kind"] == "probabilistic"
        assert main(["analyze", "--in", str(kept_path)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert abs(report["s_abs"] - 2.0 * math.sqrt(2.0)) <= 5.0 * report["s_std_err"]

    def test_pr_box_also_guts_quantum_records(self, tmp_path, capsys):
        # the rule only compares recorded outcomes, so it inflates even
        # genuinely quantum data past the Tsirelson bound
        records = simulate(tmp_path, trials=20_000)
        capsys.readouterr()
        kept_path = tmp_path / "kept.jsonl"
        assert main(["classical", "discard", "--rule", "pr-box",
                     "--in", str(records), "--out", str(kept_path)]) == 0
        capsys.readouterr()
        assert main(["analyze", "--in", str(kept_path)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["s"] == 4.0
        kept_records = list(iter_records_file(str(kept_path)))
        assert all(isinstance(rec, TrialRecord) for rec in kept_records)

    def test_blind_check_passes_and_reports(self, tmp_path, capsys):
        out = tmp_path / "blind.json"
        code = main(["classical", "blind-check", "--models", "2", "--trials", "4000",
                     "--seed", "5", "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["all_within_bound"] is True
        assert [m["model"] for m in doc["models"]] == ["fourier-0", "fourier-1"]
        for model_doc in doc["models"]:
            for label_doc in model_doc["labels"]:
                assert label_doc["within_bound"] is True

    def test_discard_rejects_unknown_rule(self, tmp_path):
        assert main(["classical", "discard", "--rule", "magic",
                     "--in", "x", "--out", "y"]) == 2


class TestMixedRecordFiles:
    def test_dispatch_by_ordering_field(self, tmp_path):
        quantum = simulate(tmp_path, trials=3)
        lhv = tmp_path / "lhv.jsonl"
        main(["classical", "generate", "--model", "sign", "--trials", "3",
              "--seed", "1", "--out", str(lhv)])
        mixed = tmp_path / "mixed.jsonl"
        mixed.write_text(quantum.read_text() + lhv.read_text())
        records = list(iter_records_file(str(mixed)))
        assert [type(r) for r in records] == [TrialRecord] * 3 + [ClassicalRecord] * 3


@pytest.mark.skipif(shutil.which("swapsim") is None, reason="console script not installed")
class TestConsoleScript:
    def test_version_subprocess(self):
        proc = subprocess.run(["swapsim", "--version"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert proc.stdout.startswith("swapsim ")

    def test_simulate_subprocess_honors_env_seed(self, tmp_path):
        out = tmp_path / "records.jsonl"
        proc = subprocess.run(
            ["swapsim", "simulate", "--trials", "100", "--out", str(out), "--threads", "1"],
            capture_output=True, text=True, env={"PATH": "/usr/local/bin:/usr/bin:/bin",
                                                 "SWAPSIM_SEED": "31"},
        )
        assert proc.returncode == 0, proc.stderr
        manifest = json.loads((tmp_path / "records.jsonl.manifest.json").read_text())
        assert manifest["seed"] == 31
        cfg = ExperimentConfig(angles0=(0.0, 45.0), angles3=(22.5, 67.5),
                               trials=100, seed=31)
        assert list(iter_records_file(str(out))) == list(run_batch(cfg))
