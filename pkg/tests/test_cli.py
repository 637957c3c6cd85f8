import json

import numpy as np
import pandas as pd
import pytest

from tariffmrio.cli import main
from tariffmrio.data_io import demo_world_path, generate_fixture, load_world, write_world
from tariffmrio.equilibrium import Economy, diff_states, solve_baseline, solve_scenario
from tariffmrio.reports import REPORT_FILES, format_table, read_csv
from tariffmrio.scenarios import parse_scenario

ZERO = "name: zero\nshocks: []\n"
ONE = "name: one\nshocks:\n  - {importer: R00, exporter: R01, rate: 0.25}\n"


@pytest.fixture
def world2x2(tmp_path):
    return write_world(generate_fixture(31, 2, 2), tmp_path / "world")


def scenario_file(tmp_path, text, name="s.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(*argv):
    return main([str(a) for a in argv])


class TestValidate:
    def test_demo_ok(self, capsys):
        assert run("validate", "--world", "demo") == 0
        out = json.loads(capsys.readouterr().out)
        assert out["valid"] and out["violations"] == []

    def test_perturbed_reports_coordinates(self, world2x2, capsys):
        z = pd.read_csv(world2x2 / "Z.csv", index_col=0)
        z.iloc[1, 2] *= 1.1
        z.to_csv(world2x2 / "Z.csv", float_format="%.17g")
        assert run("validate", "--world", world2x2) == 1
        out = json.loads(capsys.readouterr().out)
        locations = {v["location"] for v in out["violations"]}
        assert f"row {z.index[1]}" in locations
        assert f"column {z.columns[2]}" in locations

    def test_missing_file_is_io_error(self, world2x2):
        (world2x2 / "fd.csv").unlink()
        assert run("validate", "--world", world2x2) == 2

    def test_missing_world_flag(self):
        assert run("validate") == 2


class TestFixture:
    def test_writes_loadable_world(self, tmp_path, capsys):
        assert run("fixture", "--out", tmp_path / "w", "--seed", 3, "--countries", 4, "--sectors", 3) == 0
        ds = load_world(tmp_path / "w")
        assert ds.dims.n_countries == 4 and ds.dims.n_sectors == 3

    def test_infeasible(self, tmp_path):
        assert run("fixture", "--out", tmp_path / "w", "--countries", 1, "--openness", 0.5) == 2


class TestRun:
    def test_zero_tariff_tables_are_zero(self, tmp_path, world2x2):
        out = tmp_path / "out"
        assert run("run", "--world", world2x2, "--scenario", scenario_file(tmp_path, ZERO),
                   "--out", out, "--no-timestamp") == 0
        for fname in REPORT_FILES:
            df, header = read_csv(out / "zero" / fname)
            assert header["converged"] == "true" and header["iterations"] == "1"
            for col in df.columns:
                if col == "delta" or col.endswith("_delta") or col == "pct" or col.endswith("_pct"):
                    assert (df[col].fillna(0) == 0).all(), (fname, col)

    def test_tables_match_diff_states(self, tmp_path, world2x2):
        path = scenario_file(tmp_path, ONE)
        out = tmp_path / "out"
        assert run("run", "--world", world2x2, "--scenario", path, "--out", out, "--no-timestamp") == 0
        ds = load_world(world2x2)
        eco = Economy.from_world(ds)
        base = solve_baseline(eco)
        shocked = solve_scenario(eco, parse_scenario(path, ds.dims))
        expected = format_table(diff_states(base, shocked).cells.reset_index(drop=True))
        text = pd.read_csv(out / "one" / "country_sector_deltas.csv", comment="#", dtype=str,
                           keep_default_na=False)
        for col in ("x_base", "x_delta", "x_pct", "exports_delta", "exports_pct", "fd_delta", "fd_pct"):
            assert text[col].tolist() == expected[col].tolist(), col

    def test_report_contents(self, tmp_path, world2x2):
        out = tmp_path / "out"
        assert run("run", "--world", world2x2, "--scenario", scenario_file(tmp_path, ONE),
                   "--out", out, "--no-timestamp", "--sigma", 3, "--epsilon", -0.7) == 0
        labour, header = read_csv(out / "one" / "labour_groups.csv")
        assert header["sigma"] == "3" and header["epsilon"] == "-0.7"
        assert {"damping", "tolerance", "iterations", "converged"} <= set(header)
        sums = labour.groupby("partition")["pct_of_losses"].sum()
        assert np.allclose(sums, 100.0, atol=0.011)
        emp, _ = read_csv(out / "one" / "employment_by_income_group.csv")
        assert emp["income_group"].iloc[-1] == "Total"
        assert emp["delta"].iloc[:-1].sum() == pytest.approx(emp["delta"].iloc[-1], abs=0.002)
        manifest = json.loads((out / "one" / "run.json").read_text())
        assert manifest["converged"] and len(manifest["world_hash"]) == 64

    def test_percentages_recomputable(self, tmp_path):
        out = tmp_path / "out"
        assert run("run", "--world", "demo", "--scenario", "builtin:scenario2", "--out", out,
                   "--no-timestamp") == 0
        for fname in ("employment_by_income_group.csv", "exports_by_income_group.csv",
                      "top_countries.csv", "top_sectors.csv"):
            df, _ = read_csv(out / "scenario2" / fname)
            for b, d, p in zip(df["base"], df["delta"], df["pct"]):
                # rounding of base and delta to 0.0005 bounds the recomputation error
                bound = 0.005 + 100 * 0.0005 * (1 + abs(d / b)) / abs(b)
                assert abs(100 * d / b - p) <= bound

    def test_deterministic_output(self, tmp_path):
        args = ["run", "--world", "demo", "--scenario", "builtin:scenario1", "--no-timestamp"]
        assert run(*args, "--out", tmp_path / "a") == 0
        assert run(*args, "--out", tmp_path / "b", "--jobs", 2) == 0
        for fname in (*REPORT_FILES, "run.json"):
            a = (tmp_path / "a" / "scenario1" / fname).read_bytes()
            b = (tmp_path / "b" / "scenario1" / fname).read_bytes()
            assert a == b, fname

    def test_timestamp_line(self, tmp_path):
        assert run("run", "--world", "demo", "--scenario", "builtin:scenario3", "--out", tmp_path) == 0
        _, header = read_csv(tmp_path / "scenario3" / "top_countries.csv")
        assert "generated" in header

    def test_non_convergence_writes_files_and_fails(self, tmp_path, world2x2):
        out = tmp_path / "out"
        code = run("run", "--world", world2x2, "--scenario", scenario_file(tmp_path, ONE),
                   "--out", out, "--max-iter", 2, "--no-timestamp")
        assert code == 1
        _, header = read_csv(out / "one" / "top_sectors.csv")
        assert header["converged"] == "false" and header["status"] == "max_iterations"

    def test_config_overrides_flags(self, tmp_path, world2x2):
        cfg = tmp_path / "run.yaml"
        cfg.write_text(f"world: {world2x2}\nscenarios: [{scenario_file(tmp_path, ONE)}]\n"
                       f"out: {tmp_path / 'cfg'}\ndamping: 0.7\ntolerance: 1.0e-10\n")
        assert run("run", "--config", cfg, "--damping", 0.3, "--no-timestamp") == 0
        _, header = read_csv(tmp_path / "cfg" / "one" / "top_countries.csv")
        assert header["damping"] == "0.7" and header["tolerance"] == "1e-10"

    def test_usage_errors(self, tmp_path, world2x2):
        assert run("run", "--world", world2x2, "--out", tmp_path) == 2
        assert run("run", "--world", world2x2, "--scenario", tmp_path / "nope.yaml", "--out", tmp_path) == 2
        assert run("run", "--world", world2x2, "--scenario", scenario_file(tmp_path, ONE),
                   "--out", tmp_path, "--damping", 2.0) == 2
        assert run("run", "--bogus") == 2

    def test_bad_scenario_code_is_validation_failure(self, tmp_path, world2x2):
        bad = scenario_file(tmp_path, "name: bad\nshocks:\n  - {importer: R00, exporter: QQQ, rate: 0.1}\n")
        assert run("run", "--world", world2x2, "--scenario", bad, "--out", tmp_path / "o") == 1

    def test_baseline_command(self, tmp_path):
        assert run("baseline", "--world", "demo", "--out", tmp_path, "--no-timestamp") == 0
        df, header = read_csv(tmp_path / "baseline.csv")
        assert len(df) == 6 and header["converged"] == "true"
        ds = load_world(demo_world_path())
        assert df["jobs"].sum() == pytest.approx(
            float(np.sum(ds.satellite.coefficients * ds.gross_output)), abs=0.01)


class TestCompare:
    @pytest.fixture
    def runs(self, tmp_path):
        out = tmp_path / "runs"
        args = ["run", "--world", "demo", "--out", out, "--no-timestamp"]
        for name in ("scenario1", "scenario2", "scenario3"):
            args += ["--scenario", f"builtin:{name}"]
        assert run(*args) == 0
        return out

    def test_three_scenarios_merge(self, runs, tmp_path, capsys):
        target = tmp_path / "cmp.csv"
        assert run("compare", runs / "scenario1", runs / "scenario2", runs / "scenario3",
                   "--out", target) == 0
        df, _ = read_csv(target)
        assert df["income_group"].tolist() == ["China", "HIC-Rest", "USA", "Total"]
        assert list(df.columns) == ["income_group", "scenario1", "pct_scenario1", "scenario2",
                                    "pct_scenario2", "scenario3", "pct_scenario3"]
        emp, _ = read_csv(runs / "scenario2" / "employment_by_income_group.csv")
        assert df["scenario2"].tolist() == emp["delta"].tolist()

    def test_self_comparison(self, runs, capsys):
        assert run("compare", runs / "scenario1", runs / "scenario1") == 0
        df = pd.read_csv(pd.io.common.StringIO(capsys.readouterr().out))
        assert df["scenario1"].tolist() == df["scenario1#2"].tolist()
        assert df["pct_scenario1"].tolist() == df["pct_scenario1#2"].tolist()

    def test_mismatched_world_refused(self, runs, tmp_path, capsys):
        other = write_world(generate_fixture(1, 3, 2, country_codes=("USA", "CHN", "CAN"),
                                             sector_codes=("D01T02", "D24")), tmp_path / "other")
        assert run("run", "--world", other, "--scenario", "builtin:scenario1",
                   "--out", tmp_path / "o", "--no-timestamp") == 0
        capsys.readouterr()
        assert run("compare", runs / "scenario1", tmp_path / "o" / "scenario1") == 1
        assert "mismatched world hashes" in capsys.readouterr().err

    def test_not_a_run_dir(self, tmp_path):
        assert run("compare", tmp_path, tmp_path) == 2
