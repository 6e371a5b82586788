import json

import numpy as np
import pandas as pd
import pydantic
import pytest
import yaml

from washboard.__main__ import EXIT_USAGE, main
from washboard.cli.sweep import (
    COLUMNS,
    Engine,
    OutputFormat,
    SweepSpec,
    evaluate_sweep,
    load_sweep_spec,
    parse_bracket,
    parse_forces,
    run_sweep,
)
from washboard.exception import UsageError

FREE = {"kind": "cosine", "A": 0.0}
COSINE = {"kind": "cosine", "A": 1.0}
FAST_QUAD = {"n_grid": 64}


@pytest.mark.parametrize(
    "text,expected",
    [
        ("1,2,4", [1.0, 2.0, 4.0]),
        ("0.5", [0.5]),
        ("-1, 1,", [-1.0, 1.0]),
        ("0:1:5", [0.0, 0.25, 0.5, 0.75, 1.0]),
        ("log1:100:3", [1.0, 10.0, 100.0]),
    ],
)
def test_parse_forces(text, expected):
    assert parse_forces(text) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("text", ["1:2", "0:1:0", "log0:1:3", "log-1:1:3"])
def test_parse_forces_rejects(text):
    with pytest.raises(ValueError):
        parse_forces(text)


def test_parse_bracket():
    assert parse_bracket("-1:2.5") == (-1.0, 2.5)
    with pytest.raises(ValueError):
        parse_bracket("1")


def test_spec_accepts_text():
    spec = SweepSpec(
        potential=json.dumps(COSINE),
        forces="0:1:3",
        engines="formula, fpe, formula",
        min_scan="-1:1",
    )
    assert spec.forces == [0.0, 0.5, 1.0]
    assert spec.engines == [Engine.FORMULA, Engine.FPE]
    assert spec.min_scan == (-1.0, 1.0)
    assert spec.build_potential().A == 1.0
    assert spec.selects(Engine.FPE) and not spec.selects(Engine.SDE)


@pytest.mark.parametrize(
    "overrides",
    [
        {"forces": "inf"},
        {"forces": []},
        {"engines": "formula,bogus"},
        {"min_scan": "1:-1"},
        {"workers": 0},
        {"potential": {"kind": "square", "A": 1.0}},
        {"unknown": 1},
    ],
)
def test_spec_validation(overrides):
    arguments = {"potential": FREE, "forces": [1.0], **overrides}
    with pytest.raises(pydantic.ValidationError):
        SweepSpec(**arguments)


def test_load_sweep_spec_precedence(tmp_path):
    """Flags over the file over the package defaults"""
    path = tmp_path / "sweep.yaml"
    path.write_text(
        yaml.safe_dump(
            {"potential": COSINE, "forces": "1,2", "quad": {"n_grid": 32}}
        )
    )
    spec = load_sweep_spec(str(path), {"forces": "3", "seed": 7})
    assert spec.forces == [3.0]
    assert spec.seed == 7
    assert spec.quad.n_grid == 32
    assert spec.quad.rel_tol == 1e-10
    assert spec.sde.n_paths == 2000


def test_load_sweep_spec_errors(tmp_path):
    with pytest.raises(UsageError):
        load_sweep_spec(str(tmp_path / "missing.yaml"))
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(UsageError):
        load_sweep_spec(str(path))


def test_free_particle_sweep(tmp_path):
    """V = f and D_eff = 1 in every row, one line per force"""
    out = tmp_path / "free.csv"
    spec = SweepSpec(
        potential=FREE, forces="0.1,1,10", out=str(out), quad=FAST_QUAD
    )
    result = run_sweep(spec)
    assert result.summary.exit_code == 0
    assert result.summary.out == str(out)

    lines = out.read_text().strip().splitlines()
    assert lines[0].split(",") == COLUMNS
    assert len(lines) == 4
    assert {line.count(",") for line in lines} == {len(COLUMNS) - 1}

    table = pd.read_csv(out)
    np.testing.assert_allclose(table["V_formula"], table["f"], rtol=1e-12)
    np.testing.assert_allclose(table["Deff_formula"], 1.0, rtol=1e-12)
    assert table["V_sde"].isna().all()


def test_sweep_is_deterministic(tmp_path):
    spec = {
        "potential": COSINE,
        "forces": "0.5,2",
        "engines": "formula,sde",
        "quad": FAST_QUAD,
        "sde": {
            "dt": 1e-2,
            "t_final": 10.0,
            "n_paths": 100,
            "n_batches": 10,
            "n_records": 20,
        },
    }
    first = evaluate_sweep(SweepSpec(**spec))
    second = evaluate_sweep(SweepSpec(**spec, workers=2))
    pd.testing.assert_frame_equal(first.table, second.table)
    assert not first.table["V_sde"].isna().any()


def test_jsonl_output(tmp_path):
    out = tmp_path / "rows.jsonl"
    run_sweep(
        SweepSpec(
            potential=COSINE,
            forces=[0.5, 1.0],
            out=str(out),
            format=OutputFormat.JSONL,
            quad=FAST_QUAD,
        )
    )
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(rows) == 2
    assert list(rows[0]) == COLUMNS
    assert rows[1]["f"] == 1.0
    assert rows[0]["V_sde"] is None


def test_inapplicable_engines_are_skipped():
    """A piecewise potential has no large-force expansion and no SDE drift"""
    result = evaluate_sweep(
        SweepSpec(
            potential={"kind": "piecewise_const", "A": 1.0},
            forces=[50.0],
            engines="formula,large_f",
            quad=FAST_QUAD,
        )
    )
    assert result.summary.exit_code == 0
    assert [skip.engine for skip in result.summary.skipped] == ["large_f"]
    assert result.table["V_largef"].isna().all()
    assert not result.table["V_formula"].isna().any()


def test_failed_engine_keeps_its_row():
    result = evaluate_sweep(
        SweepSpec(
            potential={"kind": "cosine", "A": 800.0},
            forces=[0.0, 1.0],
        )
    )
    assert result.summary.exit_code == 1
    assert len(result.table) == 2
    assert {failure.error_type for failure in result.summary.failures} == {
        "DynamicRangeError"
    }
    assert result.table["V_formula"].isna().all()


def test_sweep_needs_output_path():
    with pytest.raises(UsageError):
        run_sweep(SweepSpec(potential=FREE, forces=[1.0]))


def test_min_scan_in_summary():
    result = evaluate_sweep(
        SweepSpec(
            potential=COSINE,
            forces=[0.0],
            min_scan="-0.5:0.5",
            quad=FAST_QUAD,
        )
    )
    assert result.summary.min_scan is not None
    assert abs(result.summary.min_scan.f_star) < 1e-3
    assert "min_scan" in result.summary.timings


def test_main_sweep(tmp_path):
    out = tmp_path / "table.csv"
    summary = tmp_path / "summary.json"
    code = main(
        [
            "sweep",
            "--potential",
            json.dumps(FREE),
            "--forces",
            "0.5,1",
            "--quad-n",
            "64",
            "--out",
            str(out),
            "--summary",
            str(summary),
        ]
    )
    assert code == 0
    dumped = json.loads(summary.read_text())
    assert dumped["rows"] == 2
    assert dumped["failures"] == []
    assert len(pd.read_csv(out)) == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["sweep", "--potential", json.dumps(FREE), "--forces", "1"],
        ["sweep", "--potential", json.dumps(FREE), "--forces", "1:2"],
        ["sweep", "--potential", "{not json", "--forces", "1", "--out", "x"],
        [
            "validate",
            "--potential",
            json.dumps(FREE),
            "--forces",
            "1",
            "--engines",
            "formula",
        ],
    ],
    ids=["no-output", "bad-range", "bad-potential", "single-engine"],
)
def test_main_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error_type"] == "UsageError"
