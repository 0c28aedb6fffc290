"""Scenario parsing, result bundles and the command-line contract."""

import json
import math

import numpy as np
import pytest

from platoon_risk.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_PARSE, EXIT_UNSTABLE, main
from platoon_risk.errors import InvalidParameterError, ScenarioParseError
from platoon_risk.graph import build_pcycle, write_edge_list
from platoon_risk.report import (
    ResultBundle,
    analyze,
    compare_with_simulation,
    emit_plot_data,
    read_dat,
)
from platoon_risk.risk import RiskTag
from platoon_risk.scenario import SCHEMA, case_study_scenarios, load_scenario

BASE = """
[graph]
family = path   # comment
n = 5

[platoon]
g = 0.5
tau = 0.05
beta = 1
collided = 2

[simulation]
step = 0.0025
horizon = 400
replicas = 4
seed = 3
sample_stride = 20

[output]
formats = csv, json
"""


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "s.ini"
    path.write_text(BASE)
    return path


class TestScenarioParsing:
    def test_basic(self, scenario_file):
        sc = load_scenario(scenario_file)
        assert sc.graph.n == 5 and sc.graph_label == "path"
        assert sc.config.c == 1.0 and sc.config.d == 2.0
        assert sc.collided == [2]
        assert sc.simulation.replicas == 4

    def test_json_equivalent(self, tmp_path, scenario_file):
        data = {
            "graph": {"family": "path", "n": 5},
            "platoon": {"g": 0.5, "tau": 0.05, "beta": 1, "collided": [2]},
            "simulation": {"step": 0.0025, "horizon": 400, "replicas": 4, "seed": 3, "sample_stride": 20},
        }
        path = tmp_path / "s.json"
        path.write_text(json.dumps(data))
        a, b = load_scenario(path), load_scenario(scenario_file)
        assert a.config == b.config and a.simulation == b.simulation and a.graph == b.graph

    def test_edge_file(self, tmp_path):
        write_edge_list(build_pcycle(6, 2), tmp_path / "g.txt")
        path = tmp_path / "s.ini"
        path.write_text("[graph]\nedges = g.txt\n[platoon]\ng=1\ntau=0.05\nbeta=1\n")
        assert load_scenario(path).graph == build_pcycle(6, 2)

    def test_two_graph_sources(self, tmp_path):
        path = tmp_path / "s.ini"
        path.write_text("[graph]\nfamily = path\nedges = g.txt\nn = 3\n[platoon]\ng=1\ntau=0.1\nbeta=1\n")
        with pytest.raises(ScenarioParseError, match="exactly one"):
            load_scenario(path)

    def test_bad_value_line_number(self, tmp_path):
        path = tmp_path / "s.ini"
        path.write_text("[graph]\nfamily = path\nn = five\n")
        with pytest.raises(ScenarioParseError, match="line 3"):
            load_scenario(path)

    def test_unknown_key_line_number(self, tmp_path):
        path = tmp_path / "s.ini"
        path.write_text("[graph]\nfamily = path\nn = 3\n\n[platoon]\nspeed = 3\n")
        with pytest.raises(ScenarioParseError, match="line 6"):
            load_scenario(path)

    def test_syntax_error_line_number(self, tmp_path):
        path = tmp_path / "s.ini"
        path.write_text("[graph]\nfamily = path\nthis line is junk\n")
        with pytest.raises(ScenarioParseError, match="line 3"):
            load_scenario(path)

    def test_invalid_parameter_reported_as_parse_error(self, tmp_path, scenario_file):
        with pytest.raises(ScenarioParseError):
            load_scenario(scenario_file, ["platoon.epsilon=1.5"])

    def test_collided_range(self, scenario_file):
        with pytest.raises(ScenarioParseError, match="collided"):
            load_scenario(scenario_file, ["collided=5"])


OVERRIDES = {
    ("graph", "n"): ("7", lambda sc: sc.graph.n == 7),
    ("graph", "w"): ("2.5", lambda sc: sc.graph.edges[0][2] == 2.5),
    ("graph", "family"): ("complete", lambda sc: sc.graph.num_edges == 10),
    ("platoon", "g"): ("0.25", lambda sc: sc.config.g == 0.25),
    ("platoon", "tau"): ("0.04", lambda sc: sc.config.tau == 0.04),
    ("platoon", "beta"): ("2", lambda sc: sc.config.beta == 2.0),
    ("platoon", "d"): ("3", lambda sc: sc.config.d == 3.0),
    ("platoon", "c"): ("1.5", lambda sc: sc.config.c == 1.5),
    ("platoon", "epsilon"): ("0.2", lambda sc: sc.config.epsilon == 0.2),
    ("platoon", "collided"): ("1,3", lambda sc: sc.collided == [1, 3]),
    ("platoon", "d_c"): ("0.5", lambda sc: sc.d_c == 0.5),
    ("simulation", "step"): ("0.00125", lambda sc: sc.simulation.step == 0.00125),
    ("simulation", "horizon"): ("10", lambda sc: sc.simulation.horizon == 10.0),
    ("simulation", "replicas"): ("9", lambda sc: sc.simulation.replicas == 9),
    ("simulation", "seed"): ("99", lambda sc: sc.simulation.seed == 99),
    ("simulation", "sample_stride"): ("4", lambda sc: sc.simulation.sample_stride == 4),
    ("simulation", "burn_in"): ("70", lambda sc: sc.simulation.burn_in == 70.0),
    ("simulation", "eta"): ("0.1", lambda sc: sc.simulation.eta == 0.1),
    ("output", "dir"): ("elsewhere", lambda sc: str(sc.out_dir) == "elsewhere"),
    ("output", "formats"): ("json", lambda sc: sc.formats == ("json",)),
    ("output", "plots"): ("yes", lambda sc: sc.plots is True),
}


class TestOverrides:
    def test_every_schema_key_covered(self):
        covered = set(OVERRIDES) | {("graph", "p"), ("graph", "edges")}
        assert covered == {(s, k) for s, keys in SCHEMA.items() for k in keys}

    @pytest.mark.parametrize("key", sorted(OVERRIDES), ids=lambda k: ".".join(k))
    def test_override_beats_file(self, scenario_file, key):
        value, check = OVERRIDES[key]
        assert check(load_scenario(scenario_file, [f"{key[0]}.{key[1]}={value}"]))

    def test_pcycle_order(self, scenario_file):
        sc = load_scenario(scenario_file, ["family=pcycle", "p=2", "n=6"])
        assert sc.graph == build_pcycle(6, 2)

    def test_bare_key(self, scenario_file):
        assert load_scenario(scenario_file, ["beta=3"]).config.beta == 3.0

    @pytest.mark.parametrize("item", ["nonsense=1", "graph.speed=1", "beta"])
    def test_bad_override(self, scenario_file, item):
        with pytest.raises(ScenarioParseError):
            load_scenario(scenario_file, [item])


class TestBundle:
    def test_json_round_trip(self, scenario_file):
        bundle = analyze(load_scenario(scenario_file))
        again = ResultBundle.from_json(bundle.to_json())
        assert again == bundle
        np.testing.assert_array_equal(again.sigma, bundle.sigma)

    def test_round_trip_with_comparison(self, scenario_file):
        sc = load_scenario(scenario_file)
        bundle = analyze(sc)
        bundle.comparison = compare_with_simulation(sc)[0]
        assert ResultBundle.from_json(bundle.to_json()) == bundle

    def test_default_collided_pair(self, scenario_file):
        sc = load_scenario(scenario_file)
        sc.collided = []
        assert list(analyze(sc).cascade) == [2]

    def test_plot_data(self, tmp_path, scenario_file):
        bundle = analyze(load_scenario(scenario_file))
        names = sorted(p.name for p in emit_plot_data(bundle, "variance", tmp_path))
        assert names == ["var_conditional_i2.dat", "var_unconditional.dat"]
        names = sorted(p.name for p in emit_plot_data(bundle, "risk", tmp_path))
        assert names == ["risk_cascade_i2.dat", "risk_single.dat"]
        rows = read_dat(tmp_path / "var_unconditional.dat")
        assert [j for j, _ in rows] == [1, 2, 3, 4]
        assert rows[0][1] == bundle.sigma[0, 0]
        with pytest.raises(InvalidParameterError):
            emit_plot_data(bundle, "histogram", tmp_path)

    def test_plot_tokens(self, tmp_path, scenario_file):
        sc = load_scenario(scenario_file, ["g=20"])
        bundle = analyze(sc)
        assert any(r.risk.tag is RiskTag.INFINITE for r in bundle.single)
        emit_plot_data(bundle, "risk", tmp_path)
        tokens = [line.split()[1] for line in (tmp_path / "risk_single.dat").read_text().splitlines()[1:]]
        assert "inf" in tokens
        sc = load_scenario(scenario_file, ["epsilon=0.6"])
        emit_plot_data(analyze(sc), "risk", tmp_path)
        tokens = [line.split()[1] for line in (tmp_path / "risk_single.dat").read_text().splitlines()[1:]]
        assert tokens == ["0"] * 4

    def test_missing_series(self, tmp_path, scenario_file):
        bundle = analyze(load_scenario(scenario_file, ["tau=0.5"]), allow_unstable=True)
        assert bundle.sigma is None
        with pytest.raises(InvalidParameterError):
            emit_plot_data(bundle, "variance", tmp_path)


class TestComparison:
    def test_desk_plan_passes(self, scenario_file):
        table, samples, _ = compare_with_simulation(load_scenario(scenario_file))
        assert table.passed, table.summary()
        assert len(table.rows) == 10

    def test_noiseless_trivially_passes(self, scenario_file):
        table = compare_with_simulation(load_scenario(scenario_file, ["g=0", "replicas=20", "horizon=20"]))[0]
        assert table.passed
        assert all(r.analytic == 0 and r.empirical == 0 and r.z == 0 for r in table.rows)

    def test_wrong_delay_detected(self, scenario_file):
        # at small delays the covariance barely depends on tau, so use tau = 0.2
        sc = load_scenario(scenario_file, ["tau=0.2", "step=0.01", "replicas=8", "sample_stride=10"])
        assert compare_with_simulation(sc)[0].passed
        wrong = sc.config.replace(tau=1.5 * sc.config.tau)
        table = compare_with_simulation(sc, analytic_config=wrong)[0]
        assert not table.passed
        assert table.max_abs_z > 5


class TestCli:
    def test_analyze_outputs(self, tmp_path, scenario_file):
        out = tmp_path / "out"
        assert main(["analyze", "--scenario", str(scenario_file), "--out", str(out)]) == EXIT_OK
        names = {p.name for p in out.iterdir()}
        assert {"sigma.csv", "rho.csv", "stability.csv", "bundle.json", "risk_single.csv",
                "risk_cascade_i2.csv", "conditional_i2.csv"} <= names
        header, first = (out / "sigma.csv").read_text().splitlines()[:2]
        assert header == "pair_1,pair_2,pair_3,pair_4"
        bundle = ResultBundle.from_json((out / "bundle.json").read_text())
        assert float(first.split(",")[0]) == bundle.sigma[0, 0]

    def test_format_and_plots(self, tmp_path, scenario_file):
        out = tmp_path / "out"
        assert main(["analyze", "--scenario", str(scenario_file), "--out", str(out), "--format", "json",
                     "--plots"]) == EXIT_OK
        names = {p.name for p in out.iterdir()}
        assert "sigma.csv" not in names
        assert {"bundle.json", "var_unconditional.dat", "risk_single.dat", "risk.png", "variance.png"} <= names

    def test_unstable_exit(self, tmp_path, scenario_file, capsys):
        args = ["analyze", "--scenario", str(scenario_file), "--out", str(tmp_path), "--set", "tau=0.5"]
        assert main(args) == EXIT_UNSTABLE
        assert "unstable" in capsys.readouterr().err
        assert main(args + ["--allow-unstable-report"]) == EXIT_OK
        assert {p.name for p in tmp_path.iterdir()} == {"s.ini", "stability.csv", "bundle.json"}

    def test_check_stability(self, tmp_path, scenario_file):
        base = ["check-stability", "--scenario", str(scenario_file), "--out", str(tmp_path)]
        assert main(base) == EXIT_OK
        assert main(base + ["--set", "beta=100"]) == EXIT_UNSTABLE

    def test_parse_error_exit(self, tmp_path, capsys):
        path = tmp_path / "bad.ini"
        path.write_text("[graph]\nn = x\n")
        assert main(["analyze", "--scenario", str(path)]) == EXIT_PARSE
        assert "line 2" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["analyze", "--scenario", str(tmp_path / "none.ini")]) == EXIT_PARSE

    def test_numerical_exit(self, tmp_path, scenario_file, capsys):
        args = ["simulate", "--scenario", str(scenario_file), "--out", str(tmp_path),
                "--set", "replicas=1", "--set", "horizon=1"]
        assert main(args) == EXIT_NUMERICAL
        assert "numerical failure in simulator" in capsys.readouterr().err

    def test_simulate_and_seed(self, tmp_path, scenario_file):
        a, b = tmp_path / "a", tmp_path / "b"
        common = ["simulate", "--scenario", str(scenario_file), "--set", "horizon=100"]
        assert main(common + ["--out", str(a), "--seed", "5"]) == EXIT_OK
        assert main(common + ["--out", str(b), "--seed", "5"]) == EXIT_OK
        assert (a / "samples.csv").read_text() == (b / "samples.csv").read_text()
        assert (a / "empirical_sigma.csv").exists()

    def test_compare(self, tmp_path, scenario_file, capsys):
        assert main(["compare", "--scenario", str(scenario_file), "--out", str(tmp_path)]) == EXIT_OK
        assert capsys.readouterr().out.strip().splitlines()[-1].startswith("PASS")
        assert (tmp_path / "comparison.csv").exists()

    def test_case_study_pcycle(self, tmp_path):
        assert main(["case-study", "pcycle", "--out", str(tmp_path)]) == EXIT_OK
        for p in (5, 10):
            assert (tmp_path / f"pcycle_p{p}" / "risk_cascade_i25.csv").exists()

    def test_case_study_complete_structure(self, tmp_path):
        assert main(["case-study", "complete", "--out", str(tmp_path), "--plots"]) == EXIT_OK
        single = dict(read_dat(tmp_path / "risk_single.dat"))
        cascade = dict(read_dat(tmp_path / "risk_cascade_i25.dat"))
        differ = sorted(j for j in cascade if abs(cascade[j] - single[j]) > 1e-9)
        assert differ == [24, 26]

    def test_case_study_path(self):
        scenarios = case_study_scenarios("path")
        assert scenarios[0].collided == [1, 25, 49]
        bundle = analyze(scenarios[0])
        assert sorted(bundle.cascade) == [1, 25, 49]
        assert all(math.isfinite(float(r.risk)) for r in bundle.cascade[25])
