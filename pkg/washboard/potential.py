"""Period-1 potentials in units of kBT.

Every family wraps positions into [0, 1) itself, exposes its derivatives where
they exist and declares its discontinuity points, so that quadrature and the
oracles can treat breakpoints exactly.
"""

import abc
import enum
import json
import os
from typing import Callable, Literal, Optional, Sequence, Union

import numpy as np
import pydantic
from typing_extensions import Annotated

from washboard.exception import (
    AsymptoteInapplicableError,
    DomainError,
    NonDifferentiableError,
)
from washboard.quad import (
    CellGrid,
    QuadratureConfig,
    periodic_integral,
    refine_until_converged,
)

ArrayLike = Union[float, Sequence[float], np.ndarray]

# distance on the circle below which a point counts as a breakpoint hit
BREAKPOINT_HIT_TOLERANCE = 1e-14


class PotentialKind(enum.Enum):
    """Families of built-in potentials"""

    COSINE = "cosine"
    PIECEWISE_CONST = "piecewise_const"
    SAWTOOTH = "sawtooth"
    TABULATED = "tabulated"
    CUSTOM = "custom"


def wrap(x: ArrayLike) -> np.ndarray:
    """Reduce positions into [0, 1)"""
    reduced = np.mod(np.asarray(x, dtype=float), 1.0)
    # np.mod rounds tiny negative inputs up to exactly 1.0
    return np.where(reduced >= 1.0, 0.0, reduced)


def _like_input(x: ArrayLike, values: np.ndarray) -> Union[float, np.ndarray]:
    if np.ndim(x) == 0:
        return float(values)
    return values


class PeriodicPotential(abc.ABC):
    """A potential of period 1, in units of kBT"""

    kind: PotentialKind

    def __init__(self, breakpoints: Sequence[float] = ()):
        wrapped = wrap(np.asarray(breakpoints, dtype=float).ravel())
        self._breakpoints = tuple(sorted({float(b) for b in wrapped}))

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Sorted discontinuity locations in [0, 1)"""
        return self._breakpoints

    @property
    def is_smooth(self) -> bool:
        """True when the potential declares no breakpoints"""
        return not self._breakpoints

    @property
    def has_derivative(self) -> bool:
        """Whether derivative() can be evaluated away from breakpoints"""
        return True

    def value(self, x: ArrayLike) -> Union[float, np.ndarray]:
        """phi(x mod 1)"""
        return _like_input(x, self._value(wrap(x)))

    __call__ = value

    def unwrapped_value(self, x: ArrayLike) -> Union[float, np.ndarray]:
        """phi(x) without reduction mod 1

        Built-in families are periodic by construction; custom potentials
        override this to expose the callable they were given.
        """
        return self.value(x)

    def derivative(
        self, x: ArrayLike, strict: bool = True
    ) -> Union[float, np.ndarray]:
        """phi'(x mod 1)

        With strict=False a breakpoint gets the right-sided slope, which is
        the convention the Langevin drift uses.
        """
        if not self.has_derivative:
            raise NonDifferentiableError(
                f"{self.kind.value} potential is non-differentiable"
            )
        wrapped = wrap(x)
        if strict and self.hits_breakpoint(wrapped):
            raise NonDifferentiableError(
                f"{self.kind.value} potential is non-differentiable "
                f"at breakpoints {self.breakpoints}"
            )
        return _like_input(x, self._derivative(wrapped))

    def second_derivative(
        self, x: ArrayLike, strict: bool = True
    ) -> Union[float, np.ndarray]:
        """phi''(x mod 1), with the same breakpoint convention as derivative"""
        if not self.has_derivative:
            raise NonDifferentiableError(
                f"{self.kind.value} potential is non-differentiable"
            )
        wrapped = wrap(x)
        if strict and self.hits_breakpoint(wrapped):
            raise NonDifferentiableError(
                f"{self.kind.value} potential is non-differentiable "
                f"at breakpoints {self.breakpoints}"
            )
        return _like_input(x, self._second_derivative(wrapped))

    def hits_breakpoint(self, wrapped: np.ndarray) -> bool:
        """Whether any of the wrapped positions sits on a breakpoint"""
        if not self._breakpoints:
            return False
        distance = np.abs(
            np.asarray(wrapped)[..., None] - np.asarray(self._breakpoints)
        )
        distance = np.minimum(distance, 1.0 - distance)
        return bool(np.any(distance < BREAKPOINT_HIT_TOLERANCE))

    @abc.abstractmethod
    def _value(self, x: np.ndarray) -> np.ndarray:
        """Values at wrapped positions"""

    def _derivative(self, x: np.ndarray) -> np.ndarray:
        raise NonDifferentiableError(
            f"{self.kind.value} potential is non-differentiable"
        )

    def _second_derivative(self, x: np.ndarray) -> np.ndarray:
        raise NonDifferentiableError(
            f"{self.kind.value} potential is non-differentiable"
        )

    @abc.abstractmethod
    def to_spec(self) -> dict:
        """The JSON potential spec describing this potential"""

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_spec()})"


class CosinePotential(PeriodicPotential):
    """A cos(2 pi x)"""

    kind = PotentialKind.COSINE

    def __init__(self, A: float):
        super().__init__()
        self.A = float(A)

    def _value(self, x: np.ndarray) -> np.ndarray:
        return self.A * np.cos(2 * np.pi * x)

    def _derivative(self, x: np.ndarray) -> np.ndarray:
        return -2 * np.pi * self.A * np.sin(2 * np.pi * x)

    def _second_derivative(self, x: np.ndarray) -> np.ndarray:
        return -4 * np.pi**2 * self.A * np.cos(2 * np.pi * x)

    def to_spec(self) -> dict:
        return {"kind": self.kind.value, "A": self.A}


class PiecewiseConstantPotential(PeriodicPotential):
    """-A on [0, 0.5), +A on [0.5, 1)"""

    kind = PotentialKind.PIECEWISE_CONST

    def __init__(self, A: float):
        super().__init__(breakpoints=(0.0, 0.5))
        self.A = float(A)

    @property
    def has_derivative(self) -> bool:
        return False

    def _value(self, x: np.ndarray) -> np.ndarray:
        return np.where(x < 0.5, -self.A, self.A)

    def to_spec(self) -> dict:
        return {"kind": self.kind.value, "A": self.A}


class SawtoothPotential(PeriodicPotential):
    """Continuous piecewise-linear potential

    Minimum 0 at x = 0, peak A at x = alpha. alpha = 0.5 gives an even
    potential; any other alpha breaks the symmetry.
    """

    kind = PotentialKind.SAWTOOTH

    def __init__(self, A: float, alpha: float):
        if not 0.0 < alpha < 1.0:
            raise DomainError(f"sawtooth alpha must lie in (0, 1), got {alpha}")
        super().__init__(breakpoints=(0.0, alpha))
        self.A = float(A)
        self.alpha = float(alpha)

    def _value(self, x: np.ndarray) -> np.ndarray:
        rising = self.A * x / self.alpha
        falling = self.A * (1.0 - x) / (1.0 - self.alpha)
        return np.where(x < self.alpha, rising, falling)

    def _derivative(self, x: np.ndarray) -> np.ndarray:
        return np.where(
            x < self.alpha, self.A / self.alpha, -self.A / (1.0 - self.alpha)
        )

    def _second_derivative(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(x)

    def to_spec(self) -> dict:
        return {"kind": self.kind.value, "A": self.A, "alpha": self.alpha}


class TabulatedPotential(PeriodicPotential):
    """Samples on the uniform grid i/N

    Smooth tables are evaluated off-grid by their trigonometric interpolant
    and differentiated spectrally. Tables with declared breakpoints use
    periodic linear interpolation instead.
    """

    kind = PotentialKind.TABULATED

    def __init__(
        self, samples: Sequence[float], breakpoints: Sequence[float] = ()
    ):
        super().__init__(breakpoints=breakpoints)
        self.samples = np.asarray(samples, dtype=float).copy()
        self.samples.setflags(write=False)
        if self.samples.ndim != 1 or self.samples.size < 4:
            raise DomainError("a tabulated potential needs at least 4 samples")
        if not np.all(np.isfinite(self.samples)):
            raise DomainError("tabulated samples must be finite")

        size = self.samples.size
        coefficients = np.fft.rfft(self.samples) / size
        multiplicity = np.full(coefficients.size, 2.0)
        multiplicity[0] = 1.0
        if size % 2 == 0:
            multiplicity[-1] = 1.0
        self._coefficients = coefficients * multiplicity
        self._wavenumbers = 2j * np.pi * np.arange(coefficients.size)

    def _series(self, x: np.ndarray, order: int) -> np.ndarray:
        phases = np.exp(np.multiply.outer(x, self._wavenumbers))
        terms = self._coefficients * self._wavenumbers**order
        return np.real(phases @ terms)

    def _linear_table(self) -> tuple[np.ndarray, np.ndarray]:
        size = self.samples.size
        nodes = np.arange(size + 1) / size
        values = np.append(self.samples, self.samples[0])
        return nodes, values

    def _value(self, x: np.ndarray) -> np.ndarray:
        if self.is_smooth:
            return self._series(x, 0)
        nodes, values = self._linear_table()
        return np.interp(x, nodes, values)

    def _derivative(self, x: np.ndarray) -> np.ndarray:
        if self.is_smooth:
            return self._series(x, 1)
        nodes, values = self._linear_table()
        slopes = np.diff(values) / np.diff(nodes)
        cell = np.minimum(
            np.floor(x * self.samples.size).astype(int), self.samples.size - 1
        )
        return slopes[cell]

    def _second_derivative(self, x: np.ndarray) -> np.ndarray:
        if self.is_smooth:
            return self._series(x, 2)
        return np.zeros_like(x)

    def to_spec(self) -> dict:
        spec: dict = {"kind": self.kind.value, "samples": self.samples.tolist()}
        if self.breakpoints:
            spec["breakpoints"] = list(self.breakpoints)
        return spec


class CustomPotential(PeriodicPotential):
    """User supplied callables, assumed to have period 1"""

    kind = PotentialKind.CUSTOM

    def __init__(
        self,
        value: Callable[[np.ndarray], np.ndarray],
        derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        second_derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        breakpoints: Sequence[float] = (),
        label: str = "custom",
    ):
        super().__init__(breakpoints=breakpoints)
        self._value_fn = value
        self._derivative_fn = derivative
        self._second_derivative_fn = second_derivative
        self.label = label

    @property
    def has_derivative(self) -> bool:
        return self._derivative_fn is not None

    def unwrapped_value(self, x: ArrayLike) -> Union[float, np.ndarray]:
        points = np.asarray(x, dtype=float)
        values = np.asarray(self._value_fn(points), dtype=float)
        return _like_input(x, values * np.ones_like(points))

    def _value(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self._value_fn(x), dtype=float) * np.ones_like(x)

    def _derivative(self, x: np.ndarray) -> np.ndarray:
        assert self._derivative_fn is not None
        return np.asarray(self._derivative_fn(x), dtype=float) * np.ones_like(x)

    def _second_derivative(self, x: np.ndarray) -> np.ndarray:
        if self._second_derivative_fn is None:
            raise NonDifferentiableError(
                f"{self.label}: no second derivative supplied"
            )
        return np.asarray(
            self._second_derivative_fn(x), dtype=float
        ) * np.ones_like(x)

    def to_spec(self) -> dict:
        return {
            "kind": self.kind.value,
            "label": self.label,
            "breakpoints": list(self.breakpoints),
        }


def evaluate(phi: PeriodicPotential, x: ArrayLike) -> Union[float, np.ndarray]:
    """Wrapped evaluation of phi"""
    return phi.value(x)


def eval_derivative(
    phi: PeriodicPotential, x: ArrayLike
) -> Union[float, np.ndarray]:
    """Wrapped evaluation of phi', raising at breakpoints"""
    return phi.derivative(x, strict=True)


def amplitude(phi: PeriodicPotential, probes: int = 1024) -> float:
    """max |phi| over a probe grid"""
    return float(np.max(np.abs(phi.value(np.arange(probes) / probes))))


def grad_squared_integral(
    phi: PeriodicPotential, cfg: Optional[QuadratureConfig] = None
) -> float:
    """Integral of phi'(x)^2 over one period

    Periodic trapezoidal rule, doubled until the relative change drops below
    cfg.rel_tol. Only smooth potentials qualify.
    """
    cfg = cfg or QuadratureConfig()
    if not phi.is_smooth or not phi.has_derivative:
        raise AsymptoteInapplicableError(
            f"{phi.kind.value} potential is not smooth; "
            "the integral of phi'^2 does not exist"
        )

    def computation(n: int) -> float:
        slope = np.asarray(phi.derivative(np.arange(n) / n))
        return periodic_integral(CellGrid(slope * slope))

    return float(refine_until_converged(computation, cfg).value)


class CosineSpec(pydantic.BaseModel, extra="forbid"):
    """{"kind": "cosine", "A": ...}"""

    kind: Literal["cosine"]
    A: float = pydantic.Field(description="Amplitude in units of kBT")

    def build(self) -> PeriodicPotential:
        """Construct the potential"""
        return CosinePotential(self.A)


class PiecewiseConstSpec(pydantic.BaseModel, extra="forbid"):
    """{"kind": "piecewise_const", "A": ...}"""

    kind: Literal["piecewise_const"]
    A: float = pydantic.Field(description="Half height of the step")

    def build(self) -> PeriodicPotential:
        """Construct the potential"""
        return PiecewiseConstantPotential(self.A)


class SawtoothSpec(pydantic.BaseModel, extra="forbid"):
    """{"kind": "sawtooth", "A": ..., "alpha": ...}"""

    kind: Literal["sawtooth"]
    A: float = pydantic.Field(description="Peak height in units of kBT")
    alpha: float = pydantic.Field(
        description="Position of the peak", gt=0.0, lt=1.0
    )

    def build(self) -> PeriodicPotential:
        """Construct the potential"""
        return SawtoothPotential(self.A, self.alpha)


class TabulatedSpec(pydantic.BaseModel, extra="forbid"):
    """{"kind": "tabulated", "samples": [...]}"""

    kind: Literal["tabulated"]
    samples: list[float] = pydantic.Field(
        description="Values at x_i = i/N", min_length=4
    )
    breakpoints: list[float] = pydantic.Field(
        default_factory=list,
        description="Discontinuity locations; switches to linear interpolation",
    )

    def build(self) -> PeriodicPotential:
        """Construct the potential"""
        return TabulatedPotential(self.samples, self.breakpoints)


PotentialSpec = Annotated[
    Union[CosineSpec, PiecewiseConstSpec, SawtoothSpec, TabulatedSpec],
    pydantic.Field(discriminator="kind"),
]

_SPEC_ADAPTER: pydantic.TypeAdapter = pydantic.TypeAdapter(PotentialSpec)


def parse_potential_spec(
    spec: Union[str, dict, os.PathLike]
) -> Union[CosineSpec, PiecewiseConstSpec, SawtoothSpec, TabulatedSpec]:
    """Validate a potential spec given as a dict, a JSON string or a file"""
    if isinstance(spec, dict):
        return _SPEC_ADAPTER.validate_python(spec)
    text = os.fspath(spec)
    if os.path.isfile(text):
        with open(text, "r", encoding="utf-8") as spec_file:
            text = spec_file.read()
    return _SPEC_ADAPTER.validate_python(json.loads(text))


def potential_from_spec(
    spec: Union[str, dict, os.PathLike]
) -> PeriodicPotential:
    """Build a potential from its JSON spec"""
    return parse_potential_spec(spec).build()
