"""Config loading, run dispatch, output formats, and exit codes."""

import json
import math
import os

import pytest

from laddernoise import ConfigError
from laddernoise.cli import (
    COMMON_DETUNING_PARAMETER,
    config_digest,
    load_config,
    main,
    run_experiment,
)

DOCS = os.path.join(os.path.dirname(__file__), "..", "docs", "examples")


def minimal_config(**overrides):
    cfg = {
        "system": {"energies": [0.0, 60.0, 174.0], "dipoles": [1.0, 1.0]},
        "field": {
            "envelope": {"kind": "gaussian", "tau": 1.0},
            "components": [
                {"amplitude": 1.0, "phase": 0.0, "frequency": 60.0},
                {"amplitude": 1.0, "phase": 0.0, "frequency": 114.0},
            ],
        },
        "evaluator": "closed-form",
        "run": {"type": "shot"},
        "output": {"path": "out.csv", "format": "csv"},
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


class TestLoadConfig:
    def test_minimal_round_trip(self, tmp_path):
        raw = minimal_config()
        path = write_config(tmp_path, raw)
        cfg = load_config(path)
        assert cfg.digest == config_digest(raw)
        assert cfg.system.n_transitions == 2
        assert cfg.tolerances["tdse_rel_tol"] == 1e-10  # defaults filled
        # digest is stable across loads
        assert load_config(path).digest == cfg.digest

    def test_parse_error_reports_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"system": }')
        with pytest.raises(ConfigError, match=r"line 1, column"):
            load_config(str(path))

    def test_all_violations_listed(self, tmp_path):
        cfg = minimal_config()
        cfg["system"]["energies"] = [0.0, 2.0, 1.0]  # non-increasing
        cfg["system"]["dipoles"] = [1.0, 0.0]  # zero dipole
        cfg["run"] = {"type": "warp"}  # unknown run type
        path = write_config(tmp_path, cfg)
        with pytest.raises(ConfigError) as info:
            load_config(path)
        text = str(info.value)
        assert "strictly increasing" in text
        assert "nonzero" in text
        assert "run.type" in text
        assert len(info.value.violations) >= 3

    def test_clamp_warning_recorded(self, tmp_path):
        cfg = minimal_config(
            noise={
                "components": [
                    {"amplitude": {"dist": "uniform", "half_width": 1.5}},
                    {},
                ]
            },
            run={"type": "ensemble", "samples": 10, "seed": 3},
        )
        path = write_config(tmp_path, cfg)
        loaded = load_config(path)
        assert any("clamped" in w for w in loaded.warnings)

    def test_seed_required_with_active_noise(self, tmp_path):
        cfg = minimal_config(
            noise={
                "components": [
                    {"amplitude": {"dist": "uniform", "half_width": 0.1}},
                    {},
                ]
            },
            run={"type": "ensemble", "samples": 10},
        )
        with pytest.raises(ConfigError, match="seed"):
            load_config(write_config(tmp_path, cfg))

    def test_closed_form_requires_one_component_per_transition(self, tmp_path):
        cfg = minimal_config()
        cfg["field"]["components"] = cfg["field"]["components"][:1]
        with pytest.raises(ConfigError, match="M = N"):
            load_config(write_config(tmp_path, cfg))
        # the exact propagator accepts the same field
        cfg["evaluator"] = "tdse"
        cfg["target"] = 1
        load_config(write_config(tmp_path, cfg, "ok.json"))

    def test_scan_path_must_exist(self, tmp_path):
        cfg = minimal_config(
            run={"type": "scan", "parameter": "field.nonsense", "grid": [0, 1]}
        )
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(write_config(tmp_path, cfg))

    def test_short_grid_rejected(self, tmp_path):
        cfg = minimal_config(
            run={
                "type": "scan",
                "parameter": "field.components[0].amplitude",
                "grid": [1.0],
            }
        )
        with pytest.raises(ConfigError, match="length >= 2"):
            load_config(write_config(tmp_path, cfg))

    def test_non_numeric_grid_and_init_rejected(self, tmp_path):
        cfg = minimal_config(
            run={
                "type": "scan",
                "parameter": "field.components[0].amplitude",
                "grid": [1.0, "two"],
            }
        )
        with pytest.raises(ConfigError, match="run.grid"):
            load_config(write_config(tmp_path, cfg))
        cfg = minimal_config(
            run={
                "type": "optimize",
                "target_yield": 0.1,
                "fluence_weight": 1e-3,
                "init": ["a", 0.5],
            }
        )
        with pytest.raises(ConfigError, match="run.init"):
            load_config(write_config(tmp_path, cfg, "o.json"))

    def test_docs_examples_validate(self):
        for name in (
            "resonant_shot.json",
            "antiresonance_scan.json",
            "noise_cooperation_optimize.json",
        ):
            cfg = load_config(os.path.join(DOCS, name))
            assert cfg.digest


class TestRunExperiment:
    def test_shot_row(self, tmp_path):
        cfg = load_config(write_config(tmp_path, minimal_config()))
        record = run_experiment(cfg)
        assert record.columns[0] == "yield"
        row = dict(zip(record.columns, record.rows[0]))
        assert row["yield"] == pytest.approx(0.25, rel=1e-12)
        assert row["method"] == "resonant-closed-form"

    def test_antiresonance_scan_row(self, tmp_path):
        cfg_raw = minimal_config(
            field={
                "envelope": {"kind": "rectangular", "duration": 1.0},
                "components": [
                    {"amplitude": 1.0, "phase": 0.0, "frequency": 60.0},
                    {"amplitude": 1.0, "phase": 0.0, "frequency": 114.0},
                ],
            },
            run={
                "type": "scan",
                "parameter": COMMON_DETUNING_PARAMETER,
                "grid": [k * math.pi / 2 for k in range(9)],
            },
        )
        cfg = load_config(write_config(tmp_path, cfg_raw))
        record = run_experiment(cfg)
        rows = [dict(zip(record.columns, r)) for r in record.rows]
        at_2pi = [r for r in rows if abs(r["value"] - 2 * math.pi) < 1e-12]
        assert len(at_2pi) == 1
        assert at_2pi[0]["yield"] < 1e-24
        assert rows[0]["yield"] == pytest.approx(0.25, rel=1e-9)

    def test_scan_plain_path_and_threads(self, tmp_path):
        cfg_raw = minimal_config(
            run={
                "type": "scan",
                "parameter": "field.components[0].amplitude",
                "grid": [0.5, 1.0, 2.0],
            }
        )
        cfg = load_config(write_config(tmp_path, cfg_raw))
        serial = run_experiment(cfg, threads=1)
        parallel = run_experiment(cfg, threads=4)
        assert serial.rows == parallel.rows
        ys = [r[1] for r in serial.rows]
        assert ys[1] / ys[0] == pytest.approx(4.0, rel=1e-12)

    def test_tdse_shot_with_intermediate_target(self, tmp_path):
        cfg_raw = minimal_config(
            system={"energies": [0.0, 25.0, 59.0], "dipoles": [1.0, 1.0]},
            field={
                "envelope": {"kind": "rectangular", "duration": 3.0},
                "components": [
                    {"amplitude": 0.05, "phase": 0.0, "frequency": 25.0},
                    {"amplitude": 0.05, "phase": 0.0, "frequency": 34.0},
                ],
            },
            evaluator="tdse",
            target=1,
        )
        cfg = load_config(write_config(tmp_path, cfg_raw))
        record = run_experiment(cfg)
        row = dict(zip(record.columns, record.rows[0]))
        assert 0.0 < row["yield"] < 1.0
        assert row["method"] == "tdse"
        # amplitude columns hold the level-1 coefficient
        assert row["amplitude_re"] ** 2 + row["amplitude_im"] ** 2 == pytest.approx(
            row["yield"], rel=1e-12
        )

    def test_scan_over_system_energy(self, tmp_path):
        # moving the top level changes the detuning of component 2, so the
        # yield must respond; the rebuilt system has to reach the evaluator
        cfg_raw = minimal_config(
            run={
                "type": "scan",
                "parameter": "system.energies[2]",
                "grid": [174.0, 175.0, 176.0],
            }
        )
        cfg = load_config(write_config(tmp_path, cfg_raw))
        record = run_experiment(cfg)
        ys = [r[1] for r in record.rows]
        assert ys[0] == pytest.approx(0.25, rel=1e-9)  # resonant reference
        assert ys[1] < ys[0] and ys[2] < ys[1]

    def test_phase_noise_ensemble_mean_equals_shot(self, tmp_path):
        shot = run_experiment(load_config(write_config(tmp_path, minimal_config())))
        shot_yield = shot.rows[0][0]
        cfg_raw = minimal_config(
            noise={
                "components": [
                    {"phase": {"dist": "uniform", "half_width": 1.0}},
                    {"phase": {"dist": "uniform", "half_width": 2.0}},
                ]
            },
            run={"type": "ensemble", "samples": 64, "seed": 5},
        )
        record = run_experiment(load_config(write_config(tmp_path, cfg_raw, "e.json")))
        row = dict(zip(record.columns, record.rows[0]))
        assert row["mean"] == shot_yield  # bit-identical
        assert row["std_error"] < 1e-12

    def test_optimize_rows_trace_and_final(self, tmp_path):
        cfg = load_config(os.path.join(DOCS, "noise_cooperation_optimize.json"))
        record = run_experiment(cfg)
        rows = [dict(zip(record.columns, r)) for r in record.rows]
        finals = [r for r in rows if r["final"] == 1]
        assert len(finals) == 1
        assert finals[0]["condition_residual"] < 1e-4
        assert finals[0]["converged"] == 1
        objectives = [r["objective"] for r in rows]
        # improvements only, up to the 1e-14 tie-break window at the end
        assert all(b <= a + 1e-13 for a, b in zip(objectives, objectives[1:]))


class TestMain:
    def run_main(self, args):
        return main(args)

    def test_validate_subcommand(self, tmp_path, capsys):
        path = write_config(tmp_path, minimal_config())
        assert self.run_main(["validate", "--config", path]) == 0
        out = capsys.readouterr().out
        assert "OK" in out

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = minimal_config()
        cfg["system"]["energies"] = [0.0, 2.0, 1.0]
        path = write_config(tmp_path, cfg)
        assert self.run_main(["validate", "--config", path]) == 2
        assert "strictly increasing" in capsys.readouterr().err

    def test_subcommand_run_type_mismatch(self, tmp_path, capsys):
        path = write_config(tmp_path, minimal_config())
        out = str(tmp_path / "o.csv")
        assert self.run_main(["ensemble", "--config", path, "--out", out]) == 2

    def test_numerical_failure_exit_code(self, tmp_path, capsys):
        cfg = minimal_config(
            noise={
                "components": [
                    {"frequency": {"dist": "gaussian", "std": 500.0}},
                    {},
                ]
            },
            run={"type": "ensemble", "samples": 200, "seed": 1},
        )
        path = write_config(tmp_path, cfg)
        out = str(tmp_path / "o.csv")
        assert self.run_main(["ensemble", "--config", path, "--out", out]) == 3
        assert "sample" in capsys.readouterr().err

    def test_optimizer_non_convergence_exit_code(self, tmp_path):
        cfg = minimal_config(
            run={
                "type": "optimize",
                "target_yield": 0.1,
                "fluence_weight": 1e-3,
                "observable": "analytic",
                "init": [0.5, 0.5],
                "max_evals": 12,  # far too few to shrink the simplex
            }
        )
        path = write_config(tmp_path, cfg)
        out = str(tmp_path / "o.csv")
        assert self.run_main(["optimize", "--config", path, "--out", out]) == 4
        # the best point found is still written
        body = [ln for ln in open(out).read().splitlines() if not ln.startswith("#")]
        assert body[0].startswith("eval_index")
        assert body[-1].split(",")[-2] == "0"  # converged column

    def test_same_seed_reproduces_output_bit_exactly(self, tmp_path):
        cfg = minimal_config(
            noise={
                "components": [
                    {"amplitude": {"dist": "uniform", "half_width": 0.2}},
                    {"amplitude": {"dist": "uniform", "half_width": 0.2}},
                ]
            },
            run={"type": "ensemble", "samples": 500, "seed": 12},
        )
        path = write_config(tmp_path, cfg)
        out1, out2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        assert self.run_main(["ensemble", "--config", path, "--out", out1]) == 0
        assert self.run_main(["ensemble", "--config", path, "--out", out2]) == 0
        a = open(out1).read().replace("a.csv", "X")
        b = open(out2).read().replace("b.csv", "X")
        assert a == b
        assert "# config_digest=" in a and "# seed=12" in a

    def test_seed_override_changes_rows(self, tmp_path):
        cfg = minimal_config(
            noise={
                "components": [
                    {"amplitude": {"dist": "uniform", "half_width": 0.2}},
                    {},
                ]
            },
            run={"type": "ensemble", "samples": 200, "seed": 12},
        )
        path = write_config(tmp_path, cfg)
        out1, out2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        self.run_main(["ensemble", "--config", path, "--out", out1])
        self.run_main(["ensemble", "--config", path, "--out", out2, "--seed", "13"])
        mean1 = open(out1).read().splitlines()[-1].split(",")[0]
        mean2 = open(out2).read().splitlines()[-1].split(",")[0]
        assert mean1 != mean2

    def test_csv_floats_use_17_significant_digits(self, tmp_path):
        path = write_config(tmp_path, minimal_config())
        out = str(tmp_path / "o.csv")
        assert self.run_main(["shot", "--config", path, "--out", out]) == 0
        lines = open(out).read().splitlines()
        header = [ln for ln in lines if ln.startswith("yield")][0]
        row = lines[lines.index(header) + 1].split(",")
        assert row[0] == format(0.25, ".17g")
        assert any(ln.startswith("# version=") for ln in lines)
        assert any(ln.startswith("# reproduce=laddernoise shot") for ln in lines)

    def test_json_output_mirrors_rows(self, tmp_path):
        path = write_config(tmp_path, minimal_config())
        out = str(tmp_path / "o.json")
        code = self.run_main(
            ["shot", "--config", path, "--out", out, "--format", "json"]
        )
        assert code == 0
        doc = json.loads(open(out).read())
        assert doc["metadata"]["config_digest"]
        assert doc["metadata"]["tolerances"]["tdse_rel_tol"] == 1e-10
        assert doc["rows"][0]["yield"] == pytest.approx(0.25, rel=1e-12)

    def test_docs_scan_example_end_to_end(self, tmp_path):
        out = str(tmp_path / "scan.csv")
        code = self.run_main(
            [
                "scan",
                "--config",
                os.path.join(DOCS, "antiresonance_scan.json"),
                "--out",
                out,
            ]
        )
        assert code == 0
        body = [
            ln for ln in open(out).read().splitlines() if not ln.startswith("#")
        ]
        assert body[0].split(",")[0] == "value"
        assert len(body) == 10  # header + 9 grid points
