import csv
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from levylab.cli import SUBCOMMANDS, main
from levylab.config import ExperimentConfig, parse_config, parse_value
from levylab.errors import ConfigError, UnknownExperiment
from levylab.experiments import EXPERIMENTS, run_experiment

BASE = """
[experiment]
name = simulate
seed = 4

[model]
family = KouTwoSidedExp

[params]
n_paths = 200
horizon = 0.5
"""


def write(tmp_path, text, name="exp.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestParsing:
    @pytest.mark.parametrize("text, value", [("3", 3), ("1e-3", 1e-3), ("true", True), ("a, b", ("a", "b")),
                                             ("(1.0, 2.0)", (1.0, 2.0)), ("Brownian", "Brownian"), ("inf", float("inf"))])
    def test_values(self, text, value):
        assert parse_value(text) == value

    def test_sections(self):
        cfg = parse_config(BASE)
        assert cfg.name == "simulate" and cfg.seed == 4
        assert cfg.model == {"family": "KouTwoSidedExp"}
        assert cfg.params["n_paths"] == 200

    def test_overrides(self):
        cfg = parse_config(BASE, ["horizon=2.0", "experiment.seed=9", "model.rate=0.5"])
        assert cfg.params["horizon"] == 2.0 and cfg.seed == 9 and cfg.model["rate"] == 0.5

    def test_round_trip(self):
        cfg = parse_config(BASE, ["x0=0.25", "output.formats=json,csv"])
        again = parse_config(cfg.to_text())
        assert again == cfg

    @given(st.integers(0, 2**31), st.floats(1e-6, 10.0))
    def test_round_trip_numbers(self, seed, dt):
        cfg = ExperimentConfig("simulate", {"family": "BrownianStandard"}, {"dt": dt}, seed)
        assert parse_config(cfg.to_text()) == cfg

    def test_bad_override(self):
        with pytest.raises(ConfigError):
            parse_config(BASE, ["horizon"])


class TestValidation:
    @pytest.mark.parametrize("override, field", [
        ("dt=0", "params.dt"), ("dt=-1e-3", "params.dt"), ("n_paths=50", "params.n_paths"),
        ("bogus=1", "params.bogus"), ("experiment.seed=-1", "experiment.seed"),
        ("output.formats=xml", "output.formats"), ("model.rate=-1", "model"),
    ])
    def test_field_paths(self, override, field):
        with pytest.raises(ConfigError) as err:
            run_experiment(parse_config(BASE, [override]))
        assert err.value.field == field

    def test_unknown_experiment(self):
        with pytest.raises(UnknownExperiment) as err:
            run_experiment(parse_config(BASE, ["experiment.name=nothing"]))
        assert err.value.field == "experiment.name"

    def test_missing_family(self):
        with pytest.raises(ConfigError) as err:
            run_experiment(parse_config(BASE.replace("family = KouTwoSidedExp", "")))
        assert err.value.field == "model.family"

    def test_every_subcommand_registered(self):
        assert set(SUBCOMMANDS) <= set(EXPERIMENTS)


@pytest.fixture(scope="module")
def report():
    return run_experiment(parse_config(BASE))


class TestReport:
    def test_schema(self, report):
        d = json.loads(report.to_json())
        assert d["schema"] == 1
        assert set(d) >= {"schema", "experiment", "config", "statistics", "provenance", "flags"}
        assert set(d["provenance"]) == {"seed", "n", "wall_ms"}
        for s in d["statistics"]:
            assert set(s) >= {"name", "value", "stderr", "threshold", "pass"}
            if s["pass"] is not None:
                assert s["threshold"] is not None

    def test_config_echo_reruns(self, report):
        echo = report.config
        cfg = ExperimentConfig(echo["experiment"]["name"], echo["model"], echo["params"], echo["experiment"]["seed"])
        again = run_experiment(cfg)
        assert [s.value for s in again.statistics] == [s.value for s in report.statistics]

    def test_deterministic(self, report):
        again = run_experiment(parse_config(BASE))
        a, b = report.to_dict(), again.to_dict()
        a["provenance"].pop("wall_ms"), b["provenance"].pop("wall_ms")
        assert a == b

    def test_seed_matters(self, report):
        other = run_experiment(parse_config(BASE, ["experiment.seed=5"]))
        assert other["final_mean"].value != report["final_mean"].value

    def test_text_aligned(self, report):
        lines = report.to_text().splitlines()
        assert lines[2].startswith("statistic")
        assert lines[-1] in ("overall: PASS", "overall: FAIL")


class TestOutputs:
    def test_files(self, tmp_path):
        out = tmp_path / "out"
        cfg = parse_config(BASE, [f"output.dir={out}", "output.formats=json,text,csv"])
        run_experiment(cfg)
        names = sorted(p.name for p in out.iterdir())
        assert names == ["final_values.csv", "path.csv", "report.json", "statistics.csv", "summary.txt"]
        with open(out / "path.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "value"]
        assert (out / "statistics.csv").read_bytes().count(b"\r\n") >= 2

    def test_figures_behind_flag(self, tmp_path):
        out = tmp_path / "fig"
        run_experiment(parse_config(BASE, [f"output.dir={out}", "output.figures=true", "output.formats=json"]))
        assert (out / "statistics.png").exists() and (out / "final_values.png").exists()


class TestCLI:
    def test_selftest(self, capsys):
        assert main(["selftest"]) == 0
        assert "overall: PASS" in capsys.readouterr().out

    def test_pass_exit(self, tmp_path):
        assert main(["simulate", str(write(tmp_path, BASE)), "--quiet"]) == 0

    def test_statistical_failure_exit(self, tmp_path):
        # a zero tolerance cannot be met by any finite sample
        text = BASE.replace("name = simulate", "name = williams").replace("family = KouTwoSidedExp",
                                                                          "family = BrownianStandard")
        text = text.replace("horizon = 0.5", "tol = 0.0")
        assert main(["williams", str(write(tmp_path, text)), "--quiet"]) == 1

    @pytest.mark.parametrize("argv", [["simulate"], ["simulate", "missing.ini"], ["frobnicate", "x.ini"]])
    def test_usage_errors(self, argv, capsys):
        assert main(argv) == 2

    def test_config_error_exit(self, tmp_path, capsys):
        assert main(["simulate", str(write(tmp_path, BASE)), "dt=0"]) == 2
        assert "params.dt" in capsys.readouterr().err

    def test_name_mismatch(self, tmp_path, capsys):
        assert main(["ladder", str(write(tmp_path, BASE))]) == 2


class TestShippedConfigs:
    @pytest.mark.parametrize("name", SUBCOMMANDS)
    def test_validates(self, name):
        from pathlib import Path

        from levylab.config import load_config, validate
        cfg = load_config(Path(__file__).parents[1] / "configs" / f"{name}.ini")
        assert cfg.name == name
        validate(cfg, EXPERIMENTS)


SMALL = {
    "simulate": ["n_paths=100"],
    "ladder": ["n_paths=2000"],
    "rho": [],
    "silverstein": ["n_paths=2000"],
    "duality": ["n_paths=20000"],
    "potential": ["n_paths=2000"],
    "overshoot": ["n_paths=2000"],
    "stationary": ["n_paths=2000"],
    "reversal": ["n_paths=2000"],
    "williams": ["n_paths=500"],
    "duquesne": ["n_paths=500"],
    "converge": ["n_paths=2000"],
    "coupling": ["n_paths=500", "n_runs=5000"],
    "lamperti": ["n_paths=500"],
    "entrance": ["n_paths=500"],
    "selftest": [],
}


class TestEverySubcommandRuns:
    @pytest.mark.parametrize("name", SUBCOMMANDS)
    def test_runs(self, name, tmp_path):
        from pathlib import Path
        path = Path(__file__).parents[1] / "configs" / f"{name}.ini"
        code = main([name, str(path), *SMALL[name], f"output.dir={tmp_path}", "--quiet"])
        # small samples may miss thresholds; they must not crash or reject the config
        assert code in (0, 1)
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["experiment"] == name and report["statistics"]
