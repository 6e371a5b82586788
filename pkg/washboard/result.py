"""Models for the outcome of a sweep or a validation run"""

import enum
import json
import math
from typing import Optional

import pydantic

from washboard.asymptotics import MinimumSearch
from washboard.serialization import WashboardEncoder


class CheckStatus(enum.Enum):
    """Verdict of one cross-engine comparison"""

    PASS = "pass"
    FAIL = "fail"
    OUT_OF_REGIME = "out-of-regime"


class EngineFailure(pydantic.BaseModel):
    """Machine-readable record of an engine that raised"""

    engine: str = pydantic.Field(description="Engine that raised")
    f: Optional[float] = pydantic.Field(
        default=None, description="Force of the row, None for sweep-wide work"
    )
    error_type: str = pydantic.Field(description="Exception class name")
    message: str

    @classmethod
    def from_exception(
        cls, engine: str, f: Optional[float], exc: BaseException
    ) -> "EngineFailure":
        """Record exc raised by engine at force f"""
        return cls(
            engine=engine,
            f=f,
            error_type=type(exc).__name__,
            message=str(exc),
        )

    def __str__(self) -> str:
        where = "sweep" if self.f is None else f"f={self.f:g}"
        return f"{self.engine} at {where}: {self.error_type}: {self.message}"


class CrossCheck(pydantic.BaseModel):
    """One engine against the reference engine at one force"""

    f: float
    reference: str = pydantic.Field(description="Engine compared against")
    engine: str
    quantity: str = pydantic.Field(description="V or D_eff")
    reference_value: Optional[float] = None
    value: Optional[float] = None
    delta: Optional[float] = pydantic.Field(
        default=None,
        description="|value - reference| / |reference|, absolute when the "
        "reference is 0",
    )
    tolerance: Optional[float] = pydantic.Field(
        default=None, description="Relative tolerance, None for CI checks"
    )
    ci: Optional[float] = pydantic.Field(
        default=None, description="Half-width of the stochastic interval"
    )
    status: CheckStatus

    @pydantic.field_serializer("status", return_type=str)
    def serialize_status(self, value: CheckStatus):
        """Serialize the status"""
        return value.value

    def __str__(self) -> str:
        return (
            f"f={self.f:g} {self.quantity} {self.engine} vs "
            f"{self.reference}: {self.status.value}"
        )


def relative_delta(value: float, reference: float) -> float:
    """|value - reference| relative to |reference|, absolute at 0"""
    if reference == 0.0 or not math.isfinite(reference):
        return abs(value - reference)
    return abs(value - reference) / abs(reference)


class _Summary(pydantic.BaseModel):
    failures: list[EngineFailure] = pydantic.Field(
        default_factory=list, description="Engines that raised"
    )
    skipped: list[EngineFailure] = pydantic.Field(
        default_factory=list,
        description="Engines whose hypotheses the row violates",
    )
    timings: dict[str, float] = pydantic.Field(
        default_factory=dict, description="Wall seconds spent per engine"
    )
    min_scan: Optional[MinimumSearch] = pydantic.Field(
        default=None, description="Minimum of D_eff when requested"
    )

    def dump(self, filename: str):
        """Dump the summary to a file"""
        with open(filename, "w", encoding="utf-8") as file:
            file.write(self.to_json())

    def to_json(self) -> str:
        """The summary as indented JSON"""
        return json.dumps(
            self.model_dump(mode="json"), indent=4, cls=WashboardEncoder
        )


class SweepSummary(_Summary):
    """Everything about a sweep that is not a table row"""

    rows: int = pydantic.Field(description="Forces evaluated")
    engines: list[str]
    out: Optional[str] = pydantic.Field(
        default=None, description="Where the table was written"
    )

    @property
    def exit_code(self) -> int:
        """0 when every engine succeeded, 1 otherwise"""
        return 1 if self.failures else 0


class ValidationSummary(_Summary):
    """Cross-engine checks of one sweep"""

    checks: list[CrossCheck] = pydantic.Field(default_factory=list)

    @pydantic.computed_field  # type: ignore[misc]
    @property
    def passed(self) -> bool:
        """No failed check and no engine failure"""
        return not self.failures and all(
            check.status is not CheckStatus.FAIL for check in self.checks
        )

    @property
    def exit_code(self) -> int:
        """0 when the validation passed, 1 otherwise"""
        return 0 if self.passed else 1

    def count(self, status: CheckStatus) -> int:
        """Number of checks with the given status"""
        return sum(1 for check in self.checks if check.status is status)
