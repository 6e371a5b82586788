"""Dimensional parameters and their reduction to the dimensionless system

Lengths are measured in periods L, energies in kBT and times in L^2/D, so
the force becomes f L/kBT and the bare diffusion constant becomes 1.
"""

import math
from typing import Callable, Optional, Union

import numpy as np
import pydantic

from washboard.exception import DomainError
from washboard.potential import (
    CustomPotential,
    PeriodicPotential,
    amplitude,
)

PERIOD_PROBES = 64
PERIOD_TOLERANCE = 1e-12


class Scales(pydantic.BaseModel, frozen=True):
    """Units the dimensionless system is measured in"""

    length: float = pydantic.Field(description="Period L")
    time: float = pydantic.Field(description="L^2 / D")
    energy: float = pydantic.Field(description="kBT")
    diffusion: float = pydantic.Field(description="Bare diffusion constant D")

    @property
    def velocity(self) -> float:
        """D / L"""
        return self.length / self.time


def _check_positive(name: str, value: float) -> float:
    if not value > 0 or not math.isfinite(value):
        raise DomainError(f"{name} must be positive and finite, got {value}")
    return value


def _probe_points(period: float) -> np.ndarray:
    # irrational offset keeps probes off dyadic breakpoints
    offset = (math.sqrt(2.0) - 1.0) / 7.0
    steps = np.arange(-PERIOD_PROBES // 2, PERIOD_PROBES // 2) / 16.0
    return period * (steps + offset)


def period_defect(
    value: Callable[[np.ndarray], np.ndarray], period: float
) -> tuple[float, float]:
    """max |value(x + period) - value(x)| on the probes, and max |value|"""
    probes = _probe_points(period)
    here = np.asarray(value(probes), dtype=float) * np.ones_like(probes)
    there = np.asarray(value(probes + period), dtype=float) * np.ones_like(
        probes
    )
    return float(np.max(np.abs(there - here))), float(np.max(np.abs(here)))


class PhysicalParams(pydantic.BaseModel):
    """Dimensional description of the driven particle"""

    model_config = pydantic.ConfigDict(arbitrary_types_allowed=True)

    L: float = pydantic.Field(description="Period of the potential")
    D: float = pydantic.Field(description="Bare diffusion constant")
    kBT: float = pydantic.Field(description="Thermal energy")
    f_dim: float = pydantic.Field(description="Constant driving force")
    phi_dim: Callable[[np.ndarray], np.ndarray] = pydantic.Field(
        description="Potential energy as a function of dimensional position"
    )
    dphi_dim: Optional[Callable[[np.ndarray], np.ndarray]] = pydantic.Field(
        default=None, description="Derivative of phi_dim, if known"
    )
    d2phi_dim: Optional[Callable[[np.ndarray], np.ndarray]] = pydantic.Field(
        default=None, description="Second derivative of phi_dim, if known"
    )
    breakpoints_dim: tuple[float, ...] = pydantic.Field(
        default=(), description="Discontinuities of phi_dim within one period"
    )

    @pydantic.field_validator("L", "D", "kBT")
    @classmethod
    def positive(cls, value: float, info: pydantic.ValidationInfo) -> float:
        """Scales must be positive"""
        return _check_positive(str(info.field_name), value)

    @pydantic.field_validator("f_dim")
    @classmethod
    def finite_force(cls, value: float) -> float:
        """The force must be a finite number"""
        if not math.isfinite(value):
            raise DomainError(f"f_dim must be finite, got {value}")
        return value

    @pydantic.model_validator(mode="after")
    def potential_has_period_L(self) -> "PhysicalParams":
        """phi_dim(x + L) = phi_dim(x) on the probe points"""
        defect, size = period_defect(self.phi_dim, self.L)
        if defect > PERIOD_TOLERANCE * size:
            raise DomainError(
                f"phi_dim does not have period L={self.L}: "
                f"max |phi(x+L) - phi(x)| = {defect:.3e}"
            )
        return self

    @property
    def scales(self) -> Scales:
        """Units of the dimensionless system"""
        return Scales(
            length=self.L,
            time=self.L**2 / self.D,
            energy=self.kBT,
            diffusion=self.D,
        )


class DimensionlessSystem(pydantic.BaseModel):
    """The pair (phi, f) every transport computation consumes"""

    model_config = pydantic.ConfigDict(arbitrary_types_allowed=True)

    phi: PeriodicPotential = pydantic.Field(
        description="Period-1 potential in units of kBT"
    )
    f: float = pydantic.Field(description="Dimensionless force f L / kBT")
    scales: Optional[Scales] = pydantic.Field(
        default=None,
        description="Units the system was reduced with, if it was",
    )

    @pydantic.field_validator("f")
    @classmethod
    def finite_force(cls, value: float) -> float:
        """The force must be a finite number"""
        if not math.isfinite(value):
            raise DomainError(f"f must be finite, got {value}")
        return value

    @pydantic.model_validator(mode="after")
    def potential_has_period_one(self) -> "DimensionlessSystem":
        """phi(x + 1) = phi(x) on the probe points"""
        defect, _ = period_defect(self.phi.unwrapped_value, 1.0)
        if defect > PERIOD_TOLERANCE * amplitude(self.phi):
            raise DomainError(
                f"potential does not have period 1: "
                f"max |phi(x+1) - phi(x)| = {defect:.3e}"
            )
        return self

    def with_force(self, f: float) -> "DimensionlessSystem":
        """The same potential under another force"""
        return DimensionlessSystem(phi=self.phi, f=f, scales=self.scales)

    def __str__(self) -> str:
        return f"{self.phi!r} at f={self.f:g}"


def nondimensionalize(p: PhysicalParams) -> DimensionlessSystem:
    """Rescale x = L x~, energies by kBT and t = L^2 t~ / D"""
    length, energy = p.L, p.kBT
    phi_dim, dphi_dim, d2phi_dim = p.phi_dim, p.dphi_dim, p.d2phi_dim

    def value(x: np.ndarray) -> np.ndarray:
        return np.asarray(phi_dim(length * x), dtype=float) / energy

    derivative = None
    if dphi_dim is not None:

        def derivative(x: np.ndarray) -> np.ndarray:
            return np.asarray(dphi_dim(length * x), dtype=float) * (
                length / energy
            )

    second_derivative = None
    if d2phi_dim is not None:

        def second_derivative(x: np.ndarray) -> np.ndarray:
            return np.asarray(d2phi_dim(length * x), dtype=float) * (
                length**2 / energy
            )

    phi = CustomPotential(
        value,
        derivative=derivative,
        second_derivative=second_derivative,
        breakpoints=[b / length for b in p.breakpoints_dim],
        label="nondimensionalized",
    )
    return DimensionlessSystem(
        phi=phi, f=p.f_dim * length / energy, scales=p.scales
    )


def redimensionalize(
    v_tilde: float, d_tilde: float, p: Union[PhysicalParams, Scales]
) -> tuple[float, float]:
    """(V, D_eff) in the units of p: V = v~ D/L, D_eff = d~ D"""
    scales = p.scales if isinstance(p, PhysicalParams) else p
    return v_tilde * scales.velocity, d_tilde * scales.diffusion
