import asyncio
import json
import math
import time
from pathlib import Path

import pytest
from jsonschema import Draft202012Validator
from referencing import Registry
from referencing.jsonschema import DRAFT202012

from l0s import __version__
from l0s.core import ConfigError, KernelKind
from l0s.experiments.config import ExperimentConfig, ExperimentName, validate
from l0s.experiments.report import ExperimentReport, Table, dumps, write_csv
from l0s.experiments.runner import REGISTRY, Arm, Outcome, describe, run, run_arms


def config_text(tmp_path, **fields) -> str:
    return json.dumps({"output": str(tmp_path / "out"), **fields})


def test_empty_object_gives_defaults():
    config = validate("{}")
    assert config == ExperimentConfig()
    assert config.n_coarse == 64 and config.n_fine == 128 and config.n_trials == 1000
    assert config.maxblur and not config.jitter
    assert config.name is ExperimentName.BiasCurves


def test_two_kernel_list():
    config = validate('{"kernels": ["exponential", "inverse"]}')
    assert config.kinds == [KernelKind.Exponential, KernelKind.Inverse]


def test_field_errors_are_named():
    with pytest.raises(ConfigError) as err:
        validate('{"n_fine": 0}')
    assert err.value.fields == ["n_fine"]
    assert "n_fine" in str(err.value)


def test_all_issues_are_reported():
    text = json.dumps({
        "n_trials": -1,
        "maxblur": "yes",
        "sample_mode": "sobol",
        "kernels": ["exponential", "cubic"],
        "scenes": ["sharp-bump", {"profile": "gaussian", "center": 2.0, "width": -0.1, "peak": 1.0}],
    })
    with pytest.raises(ConfigError) as err:
        validate(text)
    assert set(err.value.fields) == {"n_trials", "maxblur", "sample_mode", "kernels[1]", "scenes[1].width"}


@pytest.mark.parametrize("text, field", [
    ("{not json", "$"),
    ("[1, 2]", "$"),
    ('{"n_trails": 10}', "n_trails"),
    ('{"experiment": "psnr"}', "experiment"),
    ('{"seed": true}', "seed"),
    ('{"kernels": []}', "kernels"),
    ('{"kernels": ["linear", "linear"]}', "kernels"),
    ('{"scenes": ["teapot"]}', "scenes[0]"),
    ('{"scenes": [{"profile": "cone"}]}', "scenes[0].profile"),
    ('{"scenes": [{"profile": "box", "entry": 1, "exit": 2}]}', "scenes[0].level"),
    ('{"scenes": [{"profile": "box", "entry": 1, "exit": 2, "level": 1, "color": 2}]}', "scenes[0].color"),
    ('{"scenes": [{"profile": "box", "entry": 1, "exit": 5, "level": 1}]}', "scenes[0]"),
    ('{"scenes": [{"profile": "multi", "bumps": [{"center": 1, "width": 0.1}]}]}', "scenes[0].bumps[0].peak"),
    ('{"scenes": ["box", "box"]}', "scenes"),
    ('{"grid_min": 0}', "grid_min"),
    ('{"experiment": "ablation", "n_fine": 1}', "n_fine"),
    ('{"kernels": [["linear"]]}', "kernels[0]"),
])
def test_invalid_configs(text, field):
    with pytest.raises(ConfigError) as err:
        validate(text)
    assert field in err.value.fields


def test_single_fine_sample_is_only_rejected_for_rendering():
    assert validate('{"experiment": "concentration", "n_fine": 1}').n_fine == 1
    with pytest.raises(ConfigError) as err:
        validate('{"experiment": "ablation", "n_fine": 1}')
    assert err.value.fields == ["n_fine"]


def test_curves_reject_argmax():
    with pytest.raises(ConfigError) as err:
        validate('{"experiment": "integral-curves", "kernels": ["linear", "argmax"]}')
    assert err.value.fields == ["kernels[1]"]

    config = validate('{"experiment": "ablation", "kernels": ["argmax"]}')
    assert config.kinds == [KernelKind.ArgmaxDelta]


def test_scene_objects():
    config = validate(json.dumps({"scenes": [
        {"profile": "box", "entry": 1, "exit": 2, "level": 5, "name": "slab", "color": [0.2, 0.9]},
        {"profile": "gaussian", "center": 1.0, "width": 0.05, "peak": 40, "extent": [0, 2]},
        {"profile": "multi", "bumps": [{"center": 1, "width": 0.1, "peak": 3}, {"center": 3, "width": 0.1, "peak": 9}]},
        "wide-bump",
    ]}))
    scenes = config.resolved_scenes()
    assert [name for name, _ in scenes] == ["slab", "scenes[1]", "scenes[2]", "wide-bump"]
    assert scenes[0][1].color_far == 0.9
    assert scenes[1][1].t_far == 2.0
    assert scenes[2][1].surfaces == (1.0, 3.0)


def test_registry_lists_every_experiment():
    assert set(REGISTRY) == set(ExperimentName)
    assert set(describe()) == {name.value for name in ExperimentName}


def read_report(tmp_path, experiment):
    return json.loads((tmp_path / "out" / f"{experiment}.report.json").read_text())


def test_bias_curves_run(tmp_path):
    report = run(validate(config_text(tmp_path)))
    out = tmp_path / "out"

    lines = (out / "bias-curves.bias.csv").read_text().split("\n")
    assert lines[0] == "a,constant,linear,exponential,inverse"
    assert len(lines) == 202 and lines[-1] == ""
    assert report.files == ["bias-curves.bias.csv"]
    assert [row["kernel"] for row in report.arms] == ["constant", "linear", "exponential", "inverse"]
    assert all(row["monotone"] for row in report.arms)
    assert report.summary["max_exponential_inverse_gap"] < 1e-9
    expected = 1.0 / (1.0 - 1e-3) - 1.0 / math.log(1e3)
    assert report.arm("exponential")["at_grid_min"] == pytest.approx(expected, abs=1e-12)

    saved = read_report(tmp_path, "bias-curves")
    assert set(saved) == {"experiment", "version", "config", "arms", "summary", "files"}
    assert saved["version"] == __version__
    assert saved["config"] == validate(config_text(tmp_path)).to_dict()


def test_integral_curves_run(tmp_path):
    report = run(validate(config_text(tmp_path, experiment="integral-curves", grid_points=50)))
    assert report.summary["ordered_inverse_exponential_linear"]
    assert (tmp_path / "out" / "integral-curves.integral.csv").exists()


def test_outputs_are_byte_identical(tmp_path):
    text = config_text(tmp_path, experiment="concentration", scenes=["sharp-bump", "two-surface"],
                       kernels=["constant", "exponential"], n_trials=5, jitter=True, seed=9)
    out = tmp_path / "out"

    run(validate(text))
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    run(validate(text))
    second = {p.name: p.read_bytes() for p in out.iterdir()}

    assert set(first) == {"concentration.report.json", "concentration.frequencies.csv"}
    assert first == second


def test_config_echo_reruns_identically(tmp_path):
    report = run(validate(config_text(tmp_path, experiment="ablation", scenes=["wide-bump"],
                                      kernels=["argmax", "exponential", "constant"], n_fine=32, n_trials=8)))
    echoed = run(validate(json.dumps(report.to_dict()["config"])))
    assert echoed.arms == report.arms
    assert echoed.summary == report.summary
    assert report.summary["ranking"]["wide-bump"][-1] == "argmax"
    assert set(report.summary["sign_tests_vs_constant"]["wide-bump"]) == {"argmax", "exponential"}


def test_sharp_bump_ablation_favours_constant(tmp_path):
    report = run(validate(config_text(tmp_path, experiment="ablation", scenes=["sharp-bump"],
                                      kernels=["exponential", "linear", "constant"], n_fine=32, n_trials=300)))
    assert report.summary["ranking"]["sharp-bump"] == ["constant", "linear", "exponential"]

    p_values = report.summary["sign_tests_vs_constant"]["sharp-bump"]
    assert p_values["exponential"] > 0.5 and p_values["linear"] > 0.5
    assert report.arm("sharp-bump/exponential")["mean_error"] > report.arm("sharp-bump/linear")["mean_error"]


def test_concentration_run(tmp_path):
    report = run(validate(config_text(tmp_path, experiment="concentration", scenes=["sharp-bump", "empty"],
                                      kernels=["constant", "exponential", "argmax"], n_trials=4)))
    assert [row["arm"] for row in report.arms] == [
        "sharp-bump/constant", "sharp-bump/exponential", "sharp-bump/argmax",
        "empty/constant", "empty/exponential", "empty/argmax",
    ]
    assert report.arm("empty/exponential")["fallback"]
    assert not report.arm("sharp-bump/exponential")["fallback"]

    header = (tmp_path / "out" / "concentration.frequencies.csv").read_text().split("\n")[0]
    assert header.split(",")[0] == "interval" and len(header.split(",")) == 7


def test_distribution_audit_run(tmp_path):
    report = run(validate(config_text(tmp_path, experiment="distribution-audit", audit_samples=20_000,
                                      kernels=["linear", "inverse", "argmax"])))
    assert [row["kernel"] for row in report.arms] == ["linear", "inverse", "argmax"]
    for row in report.arms:
        assert 0.0 <= row["ks_statistic"] < 0.02
        assert row["n_samples"] == 20_000
    assert report.summary["ks_threshold"] == 0.002


def test_hvs_regression_run(tmp_path):
    report = run(validate(config_text(tmp_path, experiment="hvs-regression", kernels=["constant", "exponential"],
                                      n_trials=20)))
    assert report.summary["constant_matches_classical"]
    assert report.files == []
    assert all(row["max_abs_diff"] <= 1e-12 for row in report.arms if row["kernel"] == "constant")
    assert any(not row["matches_classical"] for row in report.arms if row["kernel"] == "exponential")


def test_timing_is_opt_in(tmp_path):
    report = run(validate(config_text(tmp_path, kernels=["linear", "exponential"], record_timing=True)))
    assert set(report.timing) == {"linear", "exponential"}
    assert "timing" in read_report(tmp_path, "bias-curves")


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    config = validate(json.dumps({"output": str(blocker / "sub")}))
    with pytest.raises(ConfigError) as err:
        run(config)
    assert err.value.fields == ["output"]


def test_csv_formatting(tmp_path):
    path = tmp_path / "table.csv"
    write_csv(Table(["x", "flag", "name"], [[0.1, True, "a"], [1 / 3, False, "b"]]), path)
    assert path.read_bytes() == b"x,flag,name\n0.10000000000000001,true,a\n0.33333333333333331,false,b\n"


def test_report_json_rejects_nan():
    report = ExperimentReport("bias-curves", __version__, {}, [{"arm": "x", "value": float("nan")}], {})
    with pytest.raises(ValueError):
        dumps(report)


@pytest.mark.asyncio
async def test_arms_keep_configured_order():
    def slow():
        time.sleep(0.2)
        return Outcome({"arm": "slow"})

    def fast():
        return Outcome({"arm": "fast"})

    results = await run_arms([Arm("slow", slow), Arm("fast", fast)])
    assert [r.name for r in results] == ["slow", "fast"]
    assert results[0].seconds >= 0.2
    assert results[1].outcome.row == {"arm": "fast"}


@pytest.mark.asyncio
async def test_arms_run_concurrently():
    def nap():
        time.sleep(0.3)
        return Outcome({})

    start = asyncio.get_running_loop().time()
    await run_arms([Arm(str(i), nap) for i in range(3)])
    assert asyncio.get_running_loop().time() - start < 0.8


DOCS = Path(__file__).resolve().parent.parent / "docs"


def schema_validators():
    config_schema = json.loads((DOCS / "config.schema.json").read_text())
    report_schema = json.loads((DOCS / "report.schema.json").read_text())
    registry = Registry().with_resource("config.schema.json", DRAFT202012.create_resource(config_schema))
    return Draft202012Validator(config_schema), Draft202012Validator(report_schema, registry=registry)


SMALL_RUNS = {
    "bias-curves": {"grid_points": 20},
    "integral-curves": {"grid_points": 20, "record_timing": True},
    "concentration": {"scenes": ["sharp-bump", "empty"], "kernels": ["constant", "argmax"], "n_trials": 3},
    "ablation": {"scenes": ["box", {"profile": "gaussian", "center": 2.0, "width": 0.2, "peak": 5.0, "color": [0.1, 0.8]}],
                 "kernels": ["exponential", "constant"], "n_fine": 16, "n_trials": 3},
    "distribution-audit": {"kernels": ["inverse", "argmax"], "audit_samples": 2_000},
    "hvs-regression": {"scenes": ["two-surface"], "kernels": ["constant"], "n_trials": 3},
}


@pytest.mark.parametrize("experiment", list(SMALL_RUNS))
def test_reports_match_documented_schemas(tmp_path, experiment):
    config_validator, report_validator = schema_validators()
    run(validate(config_text(tmp_path, experiment=experiment, **SMALL_RUNS[experiment])))

    saved = read_report(tmp_path, experiment)
    report_validator.validate(saved)
    config_validator.validate(saved["config"])
    assert saved["experiment"] == experiment


def test_config_schema_agrees_with_validate():
    config_validator, _ = schema_validators()
    config_validator.validate(ExperimentConfig().to_dict())
    assert not config_validator.is_valid({"n_fine": 0})
    assert not config_validator.is_valid({"kernels": ["cubic"]})
    assert not config_validator.is_valid({"scenes": [{"profile": "cone"}]})
