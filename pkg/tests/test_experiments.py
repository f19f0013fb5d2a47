import json
import subprocess
import sys
from pathlib import Path

import pytest

from teamsched import ValidationError
from teamsched.experiments import (
    FIG2_DEFAULT_ALPHAS,
    ScenarioError,
    figure_data,
    load_scenario,
    run_sweep,
    sweep_csv,
)

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def write_scenario(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def base_doc(**overrides):
    doc = {
        "name": "test",
        "servers": {"count": 2, "delays": [[0, 1], [0, 1]]},
        "attack": {"target": 1, "strength": 1.0},
        "machines": [{"mass": 1.0}],
    }
    doc.update(overrides)
    return doc


def parse_csv(text):
    lines = text.strip().split("\n")
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


class TestLoadScenario:
    def test_shipped_scenarios_load(self):
        for path in sorted(SCENARIOS.glob("*.json")):
            scenario = load_scenario(path)
            assert scenario.instance.n >= 2

    def test_unconstrained_fields(self):
        scenario = load_scenario(SCENARIOS / "unconstrained_two_servers.json")
        assert scenario.instance.n == 2
        assert scenario.instance.attack_strength == 1.0
        assert scenario.population.machine_mass_total == 1.0
        assert len(scenario.alpha_grid) == 9
        assert len(scenario.r_grid) == 9

    def test_mass_overflow_rejected(self, tmp_path):
        path = write_scenario(tmp_path, base_doc(machines=[{"mass": 2.1}]))
        with pytest.raises(ValidationError, match="mass-overflow"):
            load_scenario(path)

    def test_bad_server_index_rejected(self, tmp_path):
        path = write_scenario(tmp_path, base_doc(machines=[{"mass": 1.0, "access": [1, 3]}]))
        with pytest.raises(ValidationError, match="bad-server-index"):
            load_scenario(path)

    def test_parse_error_has_line_context(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{\n  "name": "x",\n  broken\n}')
        with pytest.raises(ScenarioError, match=r":3:"):
            load_scenario(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioError):
            load_scenario(tmp_path / "nope.json")

    def test_sweep_needs_two_points(self, tmp_path):
        doc = base_doc(sweep={"alpha": {"start": 0.0, "stop": 1.0, "points": 1}})
        with pytest.raises(ScenarioError, match="points"):
            load_scenario(write_scenario(tmp_path, doc))

    def test_r_sweep_needs_machines(self, tmp_path):
        doc = base_doc(machines=[], sweep={"r": {"start": 0, "stop": 1, "points": 3}})
        with pytest.raises(ScenarioError, match="machine"):
            load_scenario(write_scenario(tmp_path, doc))


@pytest.fixture(scope="module")
def rows(tmp_path_factory):
    doc = base_doc(sweep={
        "alpha": {"start": 0.0, "stop": 2.0, "points": 3},
        "r": {"start": 0.0, "stop": 2.0, "points": 5},
    })
    path = write_scenario(tmp_path_factory.mktemp("sweep"), doc)
    scenario = load_scenario(path)
    return scenario, run_sweep(scenario)


class TestRunSweep:
    def test_grid_shape_and_order(self, rows):
        scenario, result = rows
        assert len(result) == 15
        keys = [(r.alpha, r.r) for r in result]
        assert keys == sorted(keys)

    def test_high_penetration_point(self, rows):
        _, result = rows
        row = next(r for r in result if r.alpha == 1.0 and r.r == 1.0)
        assert row.team_cost == pytest.approx(1.4375, abs=1e-8)
        assert row.converged

    def test_zero_penetration_matches_baseline(self, rows):
        _, result = rows
        row = next(r for r in result if r.alpha == 1.0 and r.r == 0.0)
        assert row.team_cost == pytest.approx(1.5, abs=1e-8)
        assert row.baseline_cost == pytest.approx(1.5, abs=1e-10)
        assert row.team_cost == pytest.approx(row.selfish_cost, abs=1e-8)

    def test_no_attack_row_all_costs_one(self, rows):
        _, result = rows
        for row in result:
            if row.alpha == 0.0:
                for value in (row.team_cost, row.optimal_cost,
                              row.baseline_cost, row.selfish_cost):
                    assert value == pytest.approx(1.0, abs=1e-8)

    def test_team_never_beats_optimum(self, rows):
        _, result = rows
        for row in result:
            if row.converged:
                assert row.team_cost >= row.optimal_cost - 1e-8

    def test_csv_deterministic_across_jobs(self, rows):
        scenario, result = rows
        text1 = sweep_csv(scenario, result)
        text2 = sweep_csv(scenario, run_sweep(scenario))
        text4 = sweep_csv(scenario, run_sweep(scenario, jobs=4))
        assert text1 == text2 == text4

    def test_csv_columns(self, rows):
        scenario, result = rows
        header, body = parse_csv(sweep_csv(scenario, result))
        assert header == ["alpha", "r", "team_cost", "optimal_cost",
                          "baseline_cost", "selfish_cost", "converged", "x_1", "x_2"]
        assert len(body) == len(result)
        assert body[0][6] in ("true", "false")


class TestFigureData:
    def test_fig2_curves_nonincreasing(self):
        header, rows = parse_csv(figure_data("fig2"))
        assert header[0] == "r"
        assert len(header) == 1 + len(FIG2_DEFAULT_ALPHAS)
        for col in range(1, len(header)):
            values = [float(r[col]) for r in rows]
            assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))

    def test_fig4_reference_rows(self):
        header, rows = parse_csv(figure_data("fig4"))
        assert header == ["alpha", "uninfluenced_cost", "stackelberg_cost", "optimal_cost"]
        at = {float(r[0]): tuple(float(v) for v in r[1:]) for r in rows}
        assert at[0.0] == (1.0, 1.0, 1.0)
        assert at[1.0] == pytest.approx((4 / 3, 95 / 72, 23 / 18), abs=1e-9)

    def test_fig4_ordering(self):
        _, rows = parse_csv(figure_data("fig4"))
        for row in rows:
            _, uninfl, stack, opt = (float(v) for v in row)
            assert opt <= stack + 1e-9
            assert stack <= uninfl + 1e-9

    def test_fig5_reference_loads(self):
        header, rows = parse_csv(figure_data("fig5"))
        at = {float(r[0]): dict(zip(header[1:], map(float, r[1:]))) for r in rows}
        assert at[1.0]["stackelberg_x_2"] == pytest.approx(17 / 12, abs=1e-9)
        assert at[1.0]["optimal_x_1"] == pytest.approx(2 / 3, abs=1e-9)
        assert at[1.0]["uninfluenced_x_1"] == pytest.approx(1 / 3, abs=1e-9)

    def test_fig4_numeric_matches_closed_form(self):
        alphas = [0.0, 0.5, 1.0, 1.75, 2.5]
        closed = figure_data("fig4", alphas=alphas)
        numeric = figure_data("fig4", numeric=True, alphas=alphas)
        _, c_rows = parse_csv(closed)
        _, n_rows = parse_csv(numeric)
        for c_row, n_row in zip(c_rows, n_rows):
            for c_val, n_val in zip(c_row, n_row):
                assert float(n_val) == pytest.approx(float(c_val), abs=1e-6)

    def test_round_trip_formatting_stable(self):
        text = figure_data("fig4")
        header, rows = parse_csv(text)
        rebuilt = "\n".join(
            [",".join(header)] +
            [",".join(format(float(v), ".12g") for v in row) for row in rows]
        ) + "\n"
        assert rebuilt == text

    def test_deterministic_across_jobs(self):
        assert figure_data("fig5") == figure_data("fig5", jobs=3)

    def test_unknown_figure(self):
        with pytest.raises(ValueError):
            figure_data("fig9")


class TestCli:
    def run_cli(self, *args, env=None):
        return subprocess.run(
            [sys.executable, "-m", "teamsched.cli", *args],
            capture_output=True, text=True, env=env)

    def test_solve_exit_zero(self):
        proc = self.run_cli("solve", str(SCENARIOS / "unconstrained_two_servers.json"))
        assert proc.returncode == 0
        assert "team cost: 1.4375" in proc.stdout
        assert "converged: true" in proc.stdout

    def test_solve_stackelberg_block(self):
        proc = self.run_cli("solve", str(SCENARIOS / "stackelberg_three_servers.json"))
        assert proc.returncode == 0
        assert "stackelberg cost" in proc.stdout

    def test_sweep_writes_csv(self, tmp_path):
        out = tmp_path / "sweep.csv"
        proc = self.run_cli("sweep", str(SCENARIOS / "constrained_three_servers.json"),
                            "--out", str(out))
        assert proc.returncode == 0
        header, rows = parse_csv(out.read_text())
        assert header[:2] == ["alpha", "r"]
        assert len(rows) == 9

    def test_figure_to_stdout(self):
        proc = self.run_cli("figure", "fig4", "--alpha-list", "0,1")
        assert proc.returncode == 0
        assert proc.stdout.startswith("alpha,")

    def test_verify_reports_verdicts(self):
        proc = self.run_cli("verify", str(SCENARIOS / "constrained_three_servers.json"),
                            "--alpha-list", "0.5,1.0")
        assert proc.returncode == 0
        assert "strong security: false" in proc.stdout
        assert "weak security: true" in proc.stdout

    def test_usage_error_exit_three(self):
        proc = self.run_cli("figure", "fig9")
        assert proc.returncode == 3

    def test_validation_error_exit_one(self, tmp_path):
        path = write_scenario(tmp_path, base_doc(machines=[{"mass": 5.0}]))
        proc = self.run_cli("solve", str(path))
        assert proc.returncode == 1
        assert "mass-overflow" in proc.stderr

    def test_missing_scenario_exit_one(self):
        proc = self.run_cli("solve", "/nonexistent/path.json")
        assert proc.returncode == 1
