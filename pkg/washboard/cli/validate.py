"""Cross-engine validation of a sweep

Every selected engine is compared with a reference engine (formula when
selected) on V and D_eff at every force. Asymptotic expansions are only
judged inside their regime; elsewhere the check is reported as
out-of-regime. Stochastic estimates pass when their 95% interval covers the
reference.
"""

from typing import Optional

import pandas as pd

from washboard.cli.sweep import Engine, SweepSpec, evaluate_sweep, write_table
from washboard.exception import UsageError
from washboard.result import (
    CheckStatus,
    CrossCheck,
    ValidationSummary,
    relative_delta,
)
from washboard.utils.thread_logger import get_thread_logger
from washboard.washboard_config import WASHBOARD_CONFIG, WashboardConfig

# engine -> (V column, D_eff column)
VALUE_COLUMNS = {
    Engine.FORMULA: ("V_formula", "Deff_formula"),
    Engine.SMALL_F: ("V_smallf", "Deff_smallf"),
    Engine.LARGE_F: ("V_largef", "Deff_largef"),
    Engine.SDE: ("V_sde", "Deff_sde"),
    Engine.FPE: ("V_fpe", "Deff_fpe"),
}
CI_COLUMNS = ("V_sde_ci", "Deff_sde_ci")
QUANTITIES = ("V", "D_eff")
REFERENCE_PREFERENCE = (
    Engine.FORMULA,
    Engine.FPE,
    Engine.SDE,
    Engine.SMALL_F,
    Engine.LARGE_F,
)


def reference_engine(engines: list[Engine]) -> Engine:
    """The engine every other engine is compared against"""
    for engine in REFERENCE_PREFERENCE:
        if engine in engines:
            return engine
    raise UsageError("no engine selected")


def in_regime(engine: Engine, f: float, config: WashboardConfig) -> bool:
    """Whether engine is expected to be accurate at force f"""
    if engine is Engine.SMALL_F:
        return abs(f) <= config.regimes.small_f_max
    if engine is Engine.LARGE_F:
        return f >= config.regimes.large_f_min
    return True


def relative_tolerance(
    engine: Engine, quantity: str, config: WashboardConfig
) -> Optional[float]:
    """Tolerance of engine against the reference, None for CI checks"""
    tolerances = config.tolerances
    if engine is Engine.SMALL_F:
        return tolerances.small_f
    if engine is Engine.LARGE_F:
        return tolerances.large_f
    if engine is Engine.FPE:
        return (
            tolerances.fpe_velocity
            if quantity == "V"
            else tolerances.fpe_diffusion
        )
    return None


def _cell(row: pd.Series, column: str) -> Optional[float]:
    value = row[column]
    if pd.isna(value):
        return None
    return float(value)


def _judge(
    row: pd.Series,
    reference: Engine,
    engine: Engine,
    index: int,
    config: WashboardConfig,
) -> CrossCheck:
    f = float(row["f"])
    quantity = QUANTITIES[index]
    expected = _cell(row, VALUE_COLUMNS[reference][index])
    value = _cell(row, VALUE_COLUMNS[engine][index])
    check = CrossCheck(
        f=f,
        reference=reference.value,
        engine=engine.value,
        quantity=quantity,
        reference_value=expected,
        value=value,
        status=CheckStatus.OUT_OF_REGIME,
    )
    if not (in_regime(engine, f, config) and in_regime(reference, f, config)):
        return check
    if value is None or expected is None:
        # engine inapplicable to this row, or failed; failures are recorded
        # separately and fail the summary
        return check

    delta = relative_delta(value, expected)
    stochastic = Engine.SDE in (engine, reference)
    if stochastic:
        ci = _cell(row, CI_COLUMNS[index])
        passed = ci is not None and abs(value - expected) <= ci
        update = {"delta": delta, "ci": ci}
    else:
        tolerance = relative_tolerance(engine, quantity, config)
        assert tolerance is not None
        passed = delta <= tolerance
        update = {"delta": delta, "tolerance": tolerance}
    update["status"] = CheckStatus.PASS if passed else CheckStatus.FAIL
    return check.model_copy(update=update)


def cross_checks(
    table: pd.DataFrame,
    engines: list[Engine],
    config: WashboardConfig = WASHBOARD_CONFIG,
) -> list[CrossCheck]:
    """Checks of every non-reference engine, row by row"""
    reference = reference_engine(engines)
    checks = []
    for _, row in table.iterrows():
        for engine in engines:
            if engine is reference:
                continue
            for index in range(len(QUANTITIES)):
                checks.append(_judge(row, reference, engine, index, config))
    return checks


def report_validation(
    spec: SweepSpec, config: WashboardConfig = WASHBOARD_CONFIG
) -> ValidationSummary:
    """Run the sweep and judge every engine against the reference"""
    if len(spec.engines) < 2:
        raise UsageError(
            "validation compares engines; select at least two, got "
            + ", ".join(engine.value for engine in spec.engines)
        )
    logger = get_thread_logger(with_prefix=True)
    result = evaluate_sweep(spec)
    if spec.out is not None:
        write_table(result.table, spec.out, spec.format)

    summary = ValidationSummary(
        checks=cross_checks(result.table, spec.engines, config),
        failures=result.summary.failures,
        skipped=result.summary.skipped,
        timings=result.summary.timings,
        min_scan=result.summary.min_scan,
    )
    for check in summary.checks:
        if check.status is CheckStatus.FAIL:
            logger.warning(
                "%s (delta %s)",
                check,
                "n/a" if check.delta is None else f"{check.delta:.3e}",
            )
    logger.info(
        "validation: %d pass, %d fail, %d out-of-regime, %d engine failures",
        summary.count(CheckStatus.PASS),
        summary.count(CheckStatus.FAIL),
        summary.count(CheckStatus.OUT_OF_REGIME),
        len(summary.failures),
    )
    return summary


def describe(summary: ValidationSummary) -> str:
    """One line per check, for the terminal"""
    lines = []
    for check in summary.checks:
        delta = "" if check.delta is None else f" delta={check.delta:.3e}"
        lines.append(f"{check}{delta}")
    if summary.min_scan is not None:
        search = summary.min_scan
        lines.append(
            f"min D_eff={search.D_min:.9g} at f={search.f_star:.6g}"
            + (" (flagged)" if search.flagged else "")
        )
    lines.append("PASS" if summary.passed else "FAIL")
    return "\n".join(lines)
