"""Force sweeps: every selected engine at every force, one table row each"""

import dataclasses
import enum
import os
import time
from typing import Any, Callable, Optional

import numpy as np
import pandas as pd
import pydantic
import yaml

from washboard.asymptotics import (
    SmallForceCoefficients,
    find_min_diffusion,
    large_f_expansion,
    small_f_coefficients,
    small_f_expansion,
)
from washboard.exception import DomainError, UsageError
from washboard.nondim import DimensionlessSystem
from washboard.oracle.fpe import FpeConfig, run_oracle
from washboard.oracle.sde import SdeConfig, simulate_ensemble
from washboard.potential import (
    PeriodicPotential,
    PotentialSpec,
    parse_potential_spec,
)
from washboard.quad import QuadratureConfig
from washboard.result import EngineFailure, SweepSummary
from washboard.transport import compute_diffusion
from washboard.utils.thread_logger import get_thread_logger
from washboard.utils.work_queue import run_ordered
from washboard.washboard_config import WASHBOARD_CONFIG

COLUMNS = [
    "f",
    "V_formula",
    "Deff_formula",
    "zeta_formula",
    "einstein_formula",
    "V_smallf",
    "Deff_smallf",
    "V_largef",
    "Deff_largef",
    "V_sde",
    "V_sde_ci",
    "Deff_sde",
    "Deff_sde_ci",
    "V_fpe",
    "Deff_fpe",
    "quad_n",
    "quad_relerr",
]
# JSON keeps 15 significant digits, the most pandas writes
JSONL_PRECISION = 15


class Engine(enum.Enum):
    """Ways of obtaining V and D_eff"""

    FORMULA = "formula"
    SMALL_F = "small_f"
    LARGE_F = "large_f"
    SDE = "sde"
    FPE = "fpe"


class OutputFormat(enum.Enum):
    """Table format"""

    CSV = "csv"
    JSONL = "jsonl"


def parse_forces(text: str) -> list[float]:
    """Forces from "1,2,4", "a:b:n" (linear) or "loga:b:n" (logarithmic)"""
    text = text.strip()
    if ":" not in text:
        return [float(item) for item in text.split(",") if item.strip()]

    logarithmic = text.startswith("log")
    parts = text[3:].split(":") if logarithmic else text.split(":")
    if len(parts) != 3:
        raise ValueError(f"force range must be a:b:n, got {text!r}")
    low, high, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 1:
        raise ValueError(f"force range needs at least one point, got {count}")
    if not logarithmic:
        return np.linspace(low, high, count).tolist()
    if low <= 0 or high <= 0:
        raise ValueError(f"logarithmic range needs positive ends, got {text!r}")
    return np.geomspace(low, high, count).tolist()


def parse_bracket(text: str) -> tuple[float, float]:
    """"a:b" as a pair of floats"""
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"bracket must be a:b, got {text!r}")
    return float(parts[0]), float(parts[1])


def _default_quad() -> QuadratureConfig:
    defaults = WASHBOARD_CONFIG.quad
    return QuadratureConfig(
        n_grid=defaults.n_grid,
        rel_tol=defaults.rel_tol,
        max_refinements=defaults.max_refinements,
    )


def _default_sde() -> SdeConfig:
    defaults = WASHBOARD_CONFIG.sde
    return SdeConfig(
        dt=defaults.dt,
        t_final=defaults.t_final,
        n_paths=defaults.n_paths,
        burn_in_fraction=defaults.burn_in_fraction,
        n_batches=defaults.n_batches,
        seed=WASHBOARD_CONFIG.seed,
    )


def _default_fpe() -> FpeConfig:
    defaults = WASHBOARD_CONFIG.fpe
    return FpeConfig(
        n=defaults.n,
        t_final=defaults.t_final,
        slope_window=defaults.slope_window,
    )


class SweepSpec(pydantic.BaseModel, extra="forbid"):
    """A potential, the forces to visit and the engines to run"""

    potential: PotentialSpec = pydantic.Field(
        description="Potential spec, or a JSON string or file holding one"
    )
    forces: list[float] = pydantic.Field(
        description="Forces, or a list/range string for parse_forces",
        min_length=1,
    )
    engines: list[Engine] = pydantic.Field(
        default_factory=lambda: [Engine.FORMULA],
        description="Engines to run, or a comma separated string",
        min_length=1,
    )
    out: Optional[str] = pydantic.Field(
        default=None, description="Path of the result table"
    )
    format: OutputFormat = pydantic.Field(
        default=OutputFormat.CSV, description="Format of the result table"
    )
    seed: int = pydantic.Field(
        default=WASHBOARD_CONFIG.seed,
        ge=0,
        description="Seed of the stochastic oracle",
    )
    quad: QuadratureConfig = pydantic.Field(default_factory=_default_quad)
    sde: SdeConfig = pydantic.Field(default_factory=_default_sde)
    fpe: FpeConfig = pydantic.Field(default_factory=_default_fpe)
    min_scan: Optional[tuple[float, float]] = pydantic.Field(
        default=None, description="Bracket of the D_eff minimum search"
    )
    workers: int = pydantic.Field(
        default=1, ge=1, description="Rows evaluated concurrently"
    )

    @pydantic.field_validator("potential", mode="before")
    @classmethod
    def potential_from_text(cls, value: Any) -> Any:
        """Accept a JSON string or a path"""
        if isinstance(value, (str, os.PathLike)):
            return parse_potential_spec(value)
        return value

    @pydantic.field_validator("forces", mode="before")
    @classmethod
    def forces_from_text(cls, value: Any) -> Any:
        """Accept the list/range syntax of --forces"""
        if isinstance(value, str):
            return parse_forces(value)
        if isinstance(value, (int, float)):
            return [value]
        return value

    @pydantic.field_validator("forces")
    @classmethod
    def forces_are_finite(cls, value: list[float]) -> list[float]:
        """Each row needs a finite force"""
        if not all(np.isfinite(value)):
            raise ValueError(f"forces must be finite, got {value}")
        return value

    @pydantic.field_validator("engines", mode="before")
    @classmethod
    def engines_from_text(cls, value: Any) -> Any:
        """Accept "formula,fpe" and drop repeated engines"""
        if isinstance(value, str):
            value = [item.strip() for item in value.split(",") if item.strip()]
        return list(dict.fromkeys(value))

    @pydantic.field_validator("min_scan", mode="before")
    @classmethod
    def bracket_from_text(cls, value: Any) -> Any:
        """Accept "a:b" """
        if isinstance(value, str):
            return parse_bracket(value)
        return value

    @pydantic.field_validator("min_scan")
    @classmethod
    def bracket_is_ordered(
        cls, value: Optional[tuple[float, float]]
    ) -> Optional[tuple[float, float]]:
        """low < high"""
        if value is not None and not value[0] < value[1]:
            raise ValueError(f"empty bracket {value}")
        return value

    def build_potential(self) -> PeriodicPotential:
        """The potential the sweep runs on"""
        return self.potential.build()

    def selects(self, engine: Engine) -> bool:
        """Whether engine is part of the sweep"""
        return engine in self.engines


def _merge(base: dict, update: dict) -> dict:
    """Recursively overlay update onto base"""
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


def load_sweep_spec(
    path: Optional[str] = None, overrides: Optional[dict] = None
) -> SweepSpec:
    """Sweep spec from a YAML/JSON file with overrides on top

    Precedence is overrides, then the file, then WASHBOARD_CONFIG.
    """
    data: dict = {
        "quad": _default_quad().model_dump(),
        "sde": _default_sde().model_dump(),
        "fpe": _default_fpe().model_dump(),
    }
    if path is not None:
        if not os.path.isfile(path):
            raise UsageError(f"sweep file {path} does not exist")
        with open(path, "r", encoding="utf-8") as sweep_file:
            content = yaml.safe_load(sweep_file) or {}
        if not isinstance(content, dict):
            raise UsageError(f"sweep file {path} does not hold a mapping")
        _merge(data, content)
    _merge(data, overrides or {})
    return SweepSpec.model_validate(data)


@dataclasses.dataclass
class RowResult:
    """Columns, timings and failures of one force"""

    f: float
    values: dict[str, Any] = dataclasses.field(default_factory=dict)
    timings: dict[str, float] = dataclasses.field(default_factory=dict)
    failures: list[EngineFailure] = dataclasses.field(default_factory=list)
    skipped: list[EngineFailure] = dataclasses.field(default_factory=list)

    def as_row(self) -> dict[str, Any]:
        """Values keyed by column"""
        return {"f": self.f, **self.values}


@dataclasses.dataclass
class SweepResult:
    """The table and its summary"""

    table: pd.DataFrame
    summary: SweepSummary


class _Sweep:
    """Engines bound to one potential and one set of configurations"""

    def __init__(self, spec: SweepSpec):
        self.spec = spec
        self.phi = spec.build_potential()
        self.sde_cfg = spec.sde.model_copy(update={"seed": spec.seed})
        self.coefficients: Optional[SmallForceCoefficients] = None

    def prepare(self, summary: SweepSummary) -> None:
        """Work shared by all rows"""
        if not self.spec.selects(Engine.SMALL_F):
            return
        logger = get_thread_logger(with_prefix=True)
        start = time.perf_counter()
        try:
            self.coefficients = small_f_coefficients(self.phi, self.spec.quad)
        except Exception as exc:  # pylint: disable=broad-except
            logger.error("small-force coefficients failed: %s", exc)
            summary.failures.append(
                EngineFailure.from_exception(Engine.SMALL_F.value, None, exc)
            )
        summary.timings[Engine.SMALL_F.value] = time.perf_counter() - start

    def _formula(self, sys: DimensionlessSystem) -> dict[str, Any]:
        coefficients = compute_diffusion(sys, self.spec.quad)
        return {
            "V_formula": coefficients.V,
            "Deff_formula": coefficients.D_eff,
            "zeta_formula": coefficients.zeta_eff,
            "einstein_formula": coefficients.einstein_product,
            "quad_n": coefficients.quadrature_n,
            "quad_relerr": coefficients.achieved_rel_err,
        }

    def _small_f(self, sys: DimensionlessSystem) -> dict[str, Any]:
        if self.coefficients is None:
            return {}
        estimate = small_f_expansion(self.coefficients, sys.f)
        return {"V_smallf": estimate.V, "Deff_smallf": estimate.D_eff}

    def _large_f(self, sys: DimensionlessSystem) -> dict[str, Any]:
        estimate = large_f_expansion(sys.phi, sys.f, self.spec.quad)
        return {"V_largef": estimate.V, "Deff_largef": estimate.D_eff}

    def _sde(self, sys: DimensionlessSystem) -> dict[str, Any]:
        estimate = simulate_ensemble(sys, self.sde_cfg, self.spec.quad)
        return {
            "V_sde": estimate.V_hat,
            "V_sde_ci": estimate.V_ci,
            "Deff_sde": estimate.Deff_hat,
            "Deff_sde_ci": estimate.Deff_ci,
        }

    def _fpe(self, sys: DimensionlessSystem) -> dict[str, Any]:
        estimate = run_oracle(sys, self.spec.fpe)
        return {"V_fpe": estimate.V_fpe, "Deff_fpe": estimate.Deff_fpe}

    def _engines(
        self,
    ) -> dict[Engine, Callable[[DimensionlessSystem], dict[str, Any]]]:
        return {
            Engine.FORMULA: self._formula,
            Engine.SMALL_F: self._small_f,
            Engine.LARGE_F: self._large_f,
            Engine.SDE: self._sde,
            Engine.FPE: self._fpe,
        }

    def evaluate(self, f: float) -> RowResult:
        """Run the selected engines at force f"""
        logger = get_thread_logger(with_prefix=True)
        sys = DimensionlessSystem(phi=self.phi, f=f)
        row = RowResult(f=f)
        for engine, compute in self._engines().items():
            if not self.spec.selects(engine):
                continue
            start = time.perf_counter()
            try:
                row.values.update(compute(sys))
            except DomainError as exc:
                logger.info("%s does not apply: %s", engine.value, exc)
                row.skipped.append(
                    EngineFailure.from_exception(engine.value, f, exc)
                )
            except Exception as exc:  # pylint: disable=broad-except
                logger.error("%s failed: %s", engine.value, exc)
                row.failures.append(
                    EngineFailure.from_exception(engine.value, f, exc)
                )
            finally:
                row.timings[engine.value] = time.perf_counter() - start
        return row

    def min_scan(self, summary: SweepSummary) -> None:
        """Minimum search over spec.min_scan, recorded in the summary"""
        if self.spec.min_scan is None:
            return
        logger = get_thread_logger(with_prefix=True)
        start = time.perf_counter()
        try:
            summary.min_scan = find_min_diffusion(
                self.phi,
                self.spec.min_scan,
                self.spec.quad,
                num_workers=self.spec.workers,
            )
        except Exception as exc:  # pylint: disable=broad-except
            logger.error("minimum search failed: %s", exc)
            summary.failures.append(
                EngineFailure.from_exception("min_scan", None, exc)
            )
        summary.timings["min_scan"] = time.perf_counter() - start


def build_table(rows: list[RowResult]) -> pd.DataFrame:
    """Rows in the fixed column layout; absent engines stay empty"""
    table = pd.DataFrame([row.as_row() for row in rows], columns=COLUMNS)
    table["quad_n"] = table["quad_n"].astype("Int64")
    return table


def write_table(table: pd.DataFrame, path: str, fmt: OutputFormat) -> None:
    """Write the table as CSV or JSON lines"""
    if fmt is OutputFormat.CSV:
        table.to_csv(path, index=False)
    else:
        table.to_json(
            path,
            orient="records",
            lines=True,
            double_precision=JSONL_PRECISION,
        )


def evaluate_sweep(spec: SweepSpec) -> SweepResult:
    """Evaluate every row and the optional minimum search"""
    logger = get_thread_logger(with_prefix=True)
    sweep = _Sweep(spec)
    summary = SweepSummary(
        rows=len(spec.forces),
        engines=[engine.value for engine in spec.engines],
    )
    logger.info(
        "sweep over %d forces with engines %s",
        len(spec.forces),
        ", ".join(summary.engines),
    )
    sweep.prepare(summary)

    outcomes = run_ordered(
        sweep.evaluate,
        spec.forces,
        num_workers=spec.workers,
        prefix=lambda f: f"f={f:g}",
    )
    rows = []
    for f, outcome in zip(spec.forces, outcomes):
        if outcome.ok and outcome.result is not None:
            rows.append(outcome.result)
        else:
            assert outcome.error is not None
            rows.append(RowResult(f=f))
            summary.failures.append(
                EngineFailure.from_exception("row", f, outcome.error)
            )
    for row in rows:
        summary.failures.extend(row.failures)
        summary.skipped.extend(row.skipped)
        for engine, seconds in row.timings.items():
            summary.timings[engine] = summary.timings.get(engine, 0.0) + seconds

    sweep.min_scan(summary)
    return SweepResult(table=build_table(rows), summary=summary)


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Evaluate the sweep and write its table to spec.out

    Rows of engines that failed are still written, with empty fields; the
    failures are listed in the summary and make its exit code 1.
    """
    if spec.out is None:
        raise UsageError("a sweep needs an output path")
    logger = get_thread_logger(with_prefix=True)
    result = evaluate_sweep(spec)
    write_table(result.table, spec.out, spec.format)
    result.summary.out = spec.out
    logger.info(
        "wrote %d rows to %s (%d engine failures)",
        len(result.table),
        spec.out,
        len(result.summary.failures),
    )
    return result
