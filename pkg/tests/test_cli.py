import csv
import importlib.resources
import json

import pytest
import yaml

from lbsim.cli import main
from lbsim.errors import ConfigError
from lbsim.scenarios import apply_overrides, load_spec, spec_from_dict


def run_cli(*args):
    return main(list(args))


@pytest.fixture()
def mini_run(tmp_path):
    out = tmp_path / "dyn"
    assert run_cli("run", "--scenario", "mini", "--steps", "120",
                   "--out", str(out)) == 0
    return out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestRun:
    def test_outputs_exist(self, mini_run):
        for name in ("metrics.csv", "cost_trace.csv", "mappings.csv",
                     "summary.json"):
            assert (mini_run / name).exists()
        summary = json.loads((mini_run / "summary.json").read_text())
        assert summary["completed_steps"] == 120
        assert 0 < summary["mean_efficiency"] <= 1

    def test_metrics_columns(self, mini_run):
        rows = read_rows(mini_run / "metrics.csv")
        assert list(rows[0]) == ["step", "eff_before", "eff_after", "adopted",
                                 "compute_max", "comm_max", "gather",
                                 "redistribute", "walltime",
                                 "max_rank_particles", "oom"]
        assert len(rows) == 120

    def test_none_policy_constant_mapping(self, tmp_path):
        out = tmp_path / "none"
        assert run_cli("run", "--scenario", "mini", "--steps", "60",
                       "--policy", "none", "--out", str(out)) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["policy"] == "none"
        assert summary["adoption_count"] == 0
        rows = read_rows(out / "mappings.csv")
        assert {r["step"] for r in rows} == {"-1"}

    def test_repeat_runs_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run_cli("run", "--scenario", "mini", "--steps", "80",
                           "--out", str(out)) == 0
        for name in ("metrics.csv", "cost_trace.csv", "mappings.csv",
                     "summary.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_oom_exit_code(self, tmp_path):
        out = tmp_path / "oom"
        code = run_cli("run", "--scenario", "tight-memory", "--policy", "none",
                       "--out", str(out))
        assert code == 3
        summary = json.loads((out / "summary.json").read_text())
        assert summary["oom"] and summary["completion_fraction"] < 1.0

    def test_compare_to_adds_speedup(self, mini_run, tmp_path):
        out = tmp_path / "none"
        assert run_cli("run", "--scenario", "mini", "--steps", "120",
                       "--policy", "none", "--compare-to", str(mini_run),
                       "--out", str(out)) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert 0 < summary["speedup_vs_baseline"] < 1  # none is slower

    def test_unknown_scenario_usage_error(self, tmp_path):
        assert run_cli("run", "--scenario", "nope",
                       "--out", str(tmp_path / "x")) == 1

    def test_bad_weights_usage_error(self, tmp_path):
        assert run_cli("run", "--scenario", "mini", "--weights", "1,2,3",
                       "--out", str(tmp_path / "x")) == 1

    def test_unwritable_output_io_error(self, tmp_path):
        blocker = tmp_path / "file.txt"
        blocker.write_text("x")
        assert run_cli("run", "--scenario", "mini", "--steps", "10",
                       "--out", str(blocker / "sub")) == 2

    def test_malformed_config_names_field(self, tmp_path, capsys):
        ref = importlib.resources.files("lbsim") / "scenarios" / "mini.yaml"
        doc = yaml.safe_load(ref.read_text())
        del doc["blob"]["core_radius"]
        bad = tmp_path / "bad.yaml"
        bad.write_text(yaml.safe_dump(doc))
        assert run_cli("run", "--scenario", str(bad),
                       "--out", str(tmp_path / "x")) == 1
        assert "core_radius" in capsys.readouterr().err


class TestReplay:
    def test_round_trip_reproduces_adoptions(self, mini_run, tmp_path):
        out = tmp_path / "replay"
        assert run_cli("replay", "--run-dir", str(mini_run),
                       "--out", str(out)) == 0
        run_rows = read_rows(mini_run / "metrics.csv")
        rep_rows = read_rows(out / "replay_metrics.csv")
        assert len(run_rows) == len(rep_rows)
        for a, b in zip(run_rows, rep_rows):
            assert a["adopted"] == b["adopted"]
            assert a["eff_before"] == b["eff_before"]
            assert a["eff_after"] == b["eff_after"]

    def test_constant_costs_adopt_at_most_once(self, tmp_path):
        trace = tmp_path / "trace.csv"
        with open(trace, "w") as fh:
            fh.write("step,box_id,cost\n")
            for step in range(40):
                for b in range(6):
                    fh.write(f"{step},{b},{float(b + 1)!r}\n")
        mapping = tmp_path / "map.csv"
        with open(mapping, "w") as fh:
            fh.write("step,box_id,rank\n")
            for b in range(6):
                fh.write(f"-1,{b},0\n")
        out = tmp_path / "rep"
        assert run_cli("replay", "--trace", str(trace), "--mapping",
                       str(mapping), "--ranks", "3", "--interval", "5",
                       "--out", str(out)) == 0
        rows = read_rows(out / "replay_metrics.csv")
        adoptions = sum(r["adopted"] == "1" for r in rows)
        assert adoptions <= 1

    def test_threshold_sweep_monotone(self, mini_run, tmp_path):
        counts = []
        for i, thr in enumerate(["0.05", "0.10", "0.15"]):
            out = tmp_path / f"rep{i}"
            assert run_cli("replay", "--trace",
                           str(mini_run / "cost_trace.csv"), "--mapping",
                           str(mini_run / "mappings.csv"), "--ranks", "8",
                           "--interval", "10", "--threshold", thr,
                           "--out", str(out)) == 0
            summary = json.loads((out / "replay_summary.json").read_text())
            counts.append(summary["adoption_count"])
        assert counts == sorted(counts, reverse=True)

    def test_gap_in_steps_named(self, tmp_path, capsys):
        trace = tmp_path / "trace.csv"
        with open(trace, "w") as fh:
            fh.write("step,box_id,cost\n")
            for step in (0, 1, 3):
                for b in range(2):
                    fh.write(f"{step},{b},1.0\n")
        mapping = tmp_path / "map.csv"
        mapping.write_text("step,box_id,rank\n-1,0,0\n-1,1,1\n")
        assert run_cli("replay", "--trace", str(trace),
                       "--mapping", str(mapping)) == 1
        assert "step 2" in capsys.readouterr().err

    def test_missing_box_named(self, tmp_path, capsys):
        trace = tmp_path / "trace.csv"
        with open(trace, "w") as fh:
            fh.write("step,box_id,cost\n0,0,1.0\n0,2,1.0\n1,0,1.0\n1,2,1.0\n")
        mapping = tmp_path / "map.csv"
        mapping.write_text("step,box_id,rank\n-1,0,0\n-1,1,1\n-1,2,0\n")
        assert run_cli("replay", "--trace", str(trace),
                       "--mapping", str(mapping)) == 1
        assert "box 1" in capsys.readouterr().err

    def test_sfc_replay_needs_grid(self, mini_run, capsys):
        assert run_cli("replay", "--trace", str(mini_run / "cost_trace.csv"),
                       "--mapping", str(mini_run / "mappings.csv"),
                       "--policy", "sfc") == 1
        assert "grid" in capsys.readouterr().err

    def test_sfc_replay_with_grid(self, mini_run, tmp_path):
        out = tmp_path / "sfc"
        assert run_cli("replay", "--trace", str(mini_run / "cost_trace.csv"),
                       "--mapping", str(mini_run / "mappings.csv"),
                       "--policy", "sfc", "--grid", "15,15",
                       "--out", str(out)) == 0


class TestFit:
    def test_ideal_data(self, tmp_path, capsys):
        pts = tmp_path / "pts.csv"
        pts.write_text("nodes,walltime\n1,100\n2,50\n4,25\n")
        assert run_cli("fit", "--points", str(pts)) == 0
        out = capsys.readouterr().out
        assert "exponent x = 1.000000" in out

    def test_reference_speedup_endpoint(self, tmp_path, capsys):
        pts = tmp_path / "pts.csv"
        rows = ["nodes,walltime"]
        for n in (6, 10, 18, 31, 72):
            rows.append(f"{n},{7.0 * n ** -0.91!r}")
        pts.write_text("\n".join(rows) + "\n")
        assert run_cli("fit", "--points", str(pts), "--e0",
                       repr(1 / 6.2)) == 0
        out = capsys.readouterr().out
        assert "5.261" in out

    def test_single_point_usage_error(self, tmp_path):
        pts = tmp_path / "pts.csv"
        pts.write_text("nodes,walltime\n4,25\n")
        assert run_cli("fit", "--points", str(pts)) == 1


class TestCompare:
    def test_self_comparison_speedup_one(self, mini_run, capsys):
        assert run_cli("compare", str(mini_run), str(mini_run)) == 0
        out = capsys.readouterr().out
        assert "1.00" in out

    def test_dynamic_vs_none(self, tmp_path, capsys):
        none_dir = tmp_path / "none"
        dyn_dir = tmp_path / "dyn"
        run_cli("run", "--scenario", "mini", "--steps", "120",
                "--policy", "none", "--out", str(none_dir))
        run_cli("run", "--scenario", "mini", "--steps", "120",
                "--out", str(dyn_dir))
        assert run_cli("compare", str(none_dir), str(dyn_dir)) == 0
        lines = capsys.readouterr().out.splitlines()
        dyn_line = next(l for l in lines if l.startswith("dyn"))
        speedup = float(dyn_line.split()[-2])
        assert speedup > 1.0

    def test_oom_truncates_window(self, tmp_path, capsys):
        a = tmp_path / "oomnone"
        b = tmp_path / "oomdyn"
        assert run_cli("run", "--scenario", "tight-memory", "--policy",
                       "none", "--out", str(a)) == 3
        assert run_cli("run", "--scenario", "tight-memory",
                       "--out", str(b)) == 0
        assert run_cli("compare", str(a), str(b)) == 0
        assert "truncated" in capsys.readouterr().out

    def test_mismatched_scenarios_rejected(self, mini_run, tmp_path, capsys):
        other = tmp_path / "other"
        run_cli("run", "--scenario", "tight-memory", "--policy", "none",
                "--out", str(other))
        assert run_cli("compare", str(mini_run), str(other)) == 1
        assert "different scenarios" in capsys.readouterr().err

    def test_single_run_rejected(self, mini_run):
        assert run_cli("compare", str(mini_run)) == 1


class TestScenarioSpecs:
    def test_presets_load(self):
        for name in ("default", "mini", "tight-memory"):
            spec = load_spec(name)
            assert spec.scenario.scenario_id == name

    def test_missing_field_named(self):
        with pytest.raises(ConfigError, match="domain"):
            spec_from_dict({"scenario_id": "x"})
        ref = importlib.resources.files("lbsim") / "scenarios" / "mini.yaml"
        doc = yaml.safe_load(ref.read_text())
        del doc["blob"]["particles_per_cell"]
        with pytest.raises(ConfigError, match="blob.particles_per_cell"):
            spec_from_dict(doc)

    def test_policy_override_semantics(self):
        spec = load_spec("mini")
        none = apply_overrides(spec, policy="none")
        assert none.policy.interval > none.scenario.total_steps
        assert none.policy.static_step is None
        static = apply_overrides(spec, policy="static")
        assert static.policy.static_step == 0
        assert static.policy.interval > static.scenario.total_steps
        sfc = apply_overrides(spec, policy="sfc")
        assert sfc.policy.strategy.value == "sfc"
        assert sfc.policy.interval <= sfc.scenario.total_steps

    def test_weight_preset_lookup(self):
        spec = load_spec("mini")
        assert spec.provider_weights == (0.75, 0.25)

    def test_cost_override(self):
        spec = apply_overrides(load_spec("mini"), cost="instrumented")
        assert spec.build_provider().overhead_factor == 2.0
