import json
import math

import pytest

from washboard.exception import DynamicRangeError
from washboard.result import (
    CheckStatus,
    CrossCheck,
    EngineFailure,
    SweepSummary,
    ValidationSummary,
    relative_delta,
)


@pytest.mark.parametrize(
    "value,reference,expected",
    [(1.1, 1.0, 0.1), (-2.0, -1.0, 1.0), (0.5, 0.0, 0.5), (0.0, 0.0, 0.0)],
)
def test_relative_delta(value, reference, expected):
    assert relative_delta(value, reference) == pytest.approx(expected)


def test_relative_delta_of_non_finite_reference():
    assert math.isnan(relative_delta(1.0, math.nan))


def test_engine_failure_from_exception():
    failure = EngineFailure.from_exception(
        "formula", 2.0, DynamicRangeError("exponent spread 1600")
    )
    assert failure.error_type == "DynamicRangeError"
    assert str(failure) == (
        "formula at f=2: DynamicRangeError: exponent spread 1600"
    )
    assert "sweep" in str(
        EngineFailure.from_exception("small_f", None, ValueError("x"))
    )


def test_sweep_exit_code():
    summary = SweepSummary(rows=1, engines=["formula"])
    assert summary.exit_code == 0
    summary.failures.append(
        EngineFailure.from_exception("formula", 1.0, RuntimeError("boom"))
    )
    assert summary.exit_code == 1


def test_validation_summary_json():
    check = CrossCheck(
        f=1.0,
        reference="formula",
        engine="fpe",
        quantity="V",
        value=1.001,
        reference_value=1.0,
        delta=1e-3,
        tolerance=0.01,
        status=CheckStatus.PASS,
    )
    summary = ValidationSummary(checks=[check])
    assert summary.passed and summary.exit_code == 0
    assert summary.count(CheckStatus.PASS) == 1
    dumped = json.loads(summary.to_json())
    assert dumped["passed"] is True
    assert dumped["checks"][0]["status"] == "pass"
    assert str(check) == "f=1 V fpe vs formula: pass"

    failed = ValidationSummary(
        checks=[check.model_copy(update={"status": CheckStatus.FAIL})]
    )
    assert not failed.passed and failed.exit_code == 1
