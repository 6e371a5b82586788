"""Closed-form transport coefficients of the tilted periodic potential.

With w0(x) = int_0^1 exp(phi(x+s) - phi(x) - f s) ds and
w1(x) = int_0^1 w0(x+s)^2 exp(phi(x+s) - phi(x) - f s) ds,

    V = J0 = (1 - e^{-f}) / M0,   zeta_eff = f M0 / (1 - e^{-f}),
    D_eff = M1 / M0^3,

where M0 and M1 are the integrals of w0 and w1 over one period. Every
nested integral is assembled in the log domain so that large barriers do
not overflow.
"""

import dataclasses
import math
from typing import Optional

import numpy as np
import pydantic
from scipy.special import exprel, logsumexp

from washboard.exception import (
    DomainError,
    InternalConsistencyError,
    UndefinedAtZeroForceError,
)
from washboard.nondim import DimensionlessSystem
from washboard.quad import (
    CellGrid,
    QuadratureConfig,
    Scheme,
    circular_log_sum,
    cumulative_integral,
    exponential_weights,
    log_boltzmann_samples,
    periodic_integral,
    refine_until_converged,
    scheme_for,
    twisted_integral,
)
from washboard.utils.thread_logger import get_thread_logger

# Dual-form agreement is demanded within this multiple of rel_tol
DUAL_FORM_SLACK = 10.0
U1_MEAN_TOLERANCE = 1e-8


class TransportCoefficients(pydantic.BaseModel, frozen=True):
    """Velocity, diffusion and drag of one system"""

    f: float = pydantic.Field(description="Dimensionless force")
    V: float = pydantic.Field(description="Average velocity")
    D_eff: float = pydantic.Field(description="Effective diffusion")
    zeta_eff: float = pydantic.Field(description="Effective drag f / V")
    J0: float = pydantic.Field(description="Steady flux of u0")
    M0: float = pydantic.Field(description="Integral of w0")
    M1: float = pydantic.Field(description="Integral of w1")
    log_M0: float = pydantic.Field(description="log M0")
    log_M1: float = pydantic.Field(description="log M1")
    quadrature_n: int = pydantic.Field(description="Finest grid evaluated")
    achieved_rel_err: float = pydantic.Field(
        description="Relative change at the last refinement"
    )

    @pydantic.computed_field  # type: ignore[misc]
    @property
    def einstein_product(self) -> float:
        """zeta_eff * D_eff, exactly 1 for a free particle"""
        return self.zeta_eff * self.D_eff


class CellProfiles(pydantic.BaseModel):
    """Grid functions of one system at one resolution"""

    model_config = pydantic.ConfigDict(arbitrary_types_allowed=True)

    n: int
    f: float
    M0: float
    M1: float
    J0: float
    w0: CellGrid
    u0: CellGrid
    w1: CellGrid
    U0_cum: CellGrid = pydantic.Field(
        description="Cumulative integral of u0 from 0"
    )
    u1: Optional[CellGrid] = pydantic.Field(
        default=None, description="Steady state of p1; undefined at f = 0"
    )
    flux: Optional[CellGrid] = pydantic.Field(
        default=None, description="Steady flux profile of u1"
    )


@dataclasses.dataclass(frozen=True)
class _LogFields:
    """log-domain building blocks at one resolution"""

    scheme: Scheme
    log_plus: np.ndarray
    log_minus: np.ndarray
    weights: np.ndarray
    log_w0: np.ndarray

    @property
    def n(self) -> int:
        return self.log_w0.size

    @property
    def log_M0(self) -> float:
        return float(logsumexp(self.log_w0) - math.log(self.n))


def _log_fields(
    sys: DimensionlessSystem, n: int, cfg: QuadratureConfig
) -> _LogFields:
    scheme = scheme_for(sys.phi)
    log_plus = log_boltzmann_samples(sys.phi, n, +1, cfg).values
    log_minus = log_boltzmann_samples(sys.phi, n, -1, cfg).values
    weights = exponential_weights(n, sys.f, scheme)
    log_w0 = log_minus + circular_log_sum(log_plus, weights, +1, cfg)
    return _LogFields(scheme, log_plus, log_minus, weights, log_w0)


def _log_w1(
    fields: _LogFields, log_w0: np.ndarray, cfg: QuadratureConfig
) -> np.ndarray:
    log_g = 2.0 * log_w0 + fields.log_plus
    return fields.log_minus + circular_log_sum(log_g, fields.weights, +1, cfg)


def _log_M1_dual(fields: _LogFields, cfg: QuadratureConfig) -> float:
    """log of int w0(x)^2 int_0^1 exp(phi(x) - phi(x-s) - f s) ds dx"""
    log_g = 2.0 * fields.log_w0 + fields.log_plus
    inner = circular_log_sum(fields.log_minus, fields.weights, -1, cfg)
    return float(logsumexp(log_g + inner) - math.log(fields.n))


def _richardson_order(sys: DimensionlessSystem) -> Optional[int]:
    return 2 if scheme_for(sys.phi) is Scheme.CELL else None


def _steady_flux(f: float, log_M0: float) -> float:
    """(1 - e^{-f}) / M0, exactly 0 at f = 0"""
    if f == 0.0:
        return 0.0
    return float(-np.expm1(-f) * math.exp(-log_M0))


def compute_w0(
    sys: DimensionlessSystem, cfg: Optional[QuadratureConfig] = None
) -> CellGrid:
    """w0 on the cfg.n_grid grid of the potential's scheme"""
    cfg = cfg or QuadratureConfig()
    fields = _log_fields(sys, cfg.n_grid, cfg)
    return CellGrid(np.exp(fields.log_w0), fields.scheme.offset)


def compute_velocity(
    sys: DimensionlessSystem, cfg: Optional[QuadratureConfig] = None
) -> tuple[float, float, float]:
    """(V, J0, M0), refined until M0 settles"""
    cfg = cfg or QuadratureConfig()
    refinement = refine_until_converged(
        lambda n: _log_fields(sys, n, cfg).log_M0,
        cfg,
        richardson_order=_richardson_order(sys),
        log_scale=True,
    )
    log_M0 = float(refinement.value)
    J0 = _steady_flux(sys.f, log_M0)
    return J0, J0, math.exp(log_M0)


def compute_u0(
    sys: DimensionlessSystem, cfg: Optional[QuadratureConfig] = None
) -> CellGrid:
    """w0 / M0 on the cfg.n_grid grid"""
    w0 = compute_w0(sys, cfg)
    return w0.like(w0.values / periodic_integral(w0))


def compute_w1(
    sys: DimensionlessSystem,
    w0: CellGrid,
    cfg: Optional[QuadratureConfig] = None,
) -> CellGrid:
    """w1 on the grid w0 was computed on"""
    cfg = cfg or QuadratureConfig()
    fields = _log_fields(sys, w0.n, cfg)
    if w0.scheme is not fields.scheme:
        raise DomainError(
            f"w0 lives on a {w0.scheme.value} grid, "
            f"the potential needs {fields.scheme.value}"
        )
    if np.any(w0.values <= 0):
        raise DomainError("w0 must be strictly positive")
    return w0.like(np.exp(_log_w1(fields, np.log(w0.values), cfg)))


def _log_moments(
    sys: DimensionlessSystem, n: int, cfg: QuadratureConfig
) -> np.ndarray:
    fields = _log_fields(sys, n, cfg)
    log_M1 = float(
        logsumexp(_log_w1(fields, fields.log_w0, cfg)) - math.log(n)
    )
    log_M1_dual = _log_M1_dual(fields, cfg)
    if abs(log_M1 - log_M1_dual) > DUAL_FORM_SLACK * cfg.rel_tol:
        raise InternalConsistencyError(
            f"M1 dual forms disagree at n={n}: "
            f"log M1 = {log_M1!r}, dual {log_M1_dual!r}"
        )
    return np.array([fields.log_M0, log_M1])


def compute_diffusion(
    sys: DimensionlessSystem, cfg: Optional[QuadratureConfig] = None
) -> TransportCoefficients:
    """V, D_eff, zeta_eff with M0 and M1 converged jointly"""
    cfg = cfg or QuadratureConfig()
    logger = get_thread_logger(with_prefix=True)

    refinement = refine_until_converged(
        lambda n: _log_moments(sys, n, cfg),
        cfg,
        richardson_order=_richardson_order(sys),
        log_scale=True,
    )
    log_M0, log_M1 = (float(v) for v in refinement.value)
    J0 = _steady_flux(sys.f, log_M0)
    coefficients = TransportCoefficients(
        f=sys.f,
        V=J0,
        D_eff=math.exp(log_M1 - 3.0 * log_M0),
        zeta_eff=math.exp(log_M0 - math.log(exprel(-sys.f))),
        J0=J0,
        M0=_safe_exp(log_M0),
        M1=_safe_exp(log_M1),
        log_M0=log_M0,
        log_M1=log_M1,
        quadrature_n=refinement.resolution,
        achieved_rel_err=refinement.achieved_rel_err,
    )
    logger.debug(
        "transport at f=%g: V=%.12g D_eff=%.12g (n=%d, rel err %.2e)",
        sys.f,
        coefficients.V,
        coefficients.D_eff,
        coefficients.quadrature_n,
        coefficients.achieved_rel_err,
    )
    return coefficients


def _safe_exp(value: float) -> float:
    try:
        return math.exp(value)
    except OverflowError:
        return math.inf


def compute_profiles(
    sys: DimensionlessSystem, cfg: Optional[QuadratureConfig] = None
) -> CellProfiles:
    """w0, u0, w1, int_0^x u0 and, for f != 0, u1 and its flux

    Everything lives on one cfg.n_grid grid, so M0 and M1 here are the grid
    integrals of w0 and w1 rather than refined values.
    """
    cfg = cfg or QuadratureConfig()
    fields = _log_fields(sys, cfg.n_grid, cfg)
    offset = fields.scheme.offset
    log_w1 = _log_w1(fields, fields.log_w0, cfg)
    log_M0 = fields.log_M0
    log_M1 = float(logsumexp(log_w1) - math.log(fields.n))

    w0 = CellGrid(np.exp(fields.log_w0), offset)
    u0 = CellGrid(np.exp(fields.log_w0 - log_M0), offset)
    w1 = CellGrid(np.exp(log_w1), offset)
    U0_cum = cumulative_integral(u0)
    J0 = _steady_flux(sys.f, log_M0)

    u1, flux = None, None
    if sys.f != 0.0:
        u1, flux = _u1_and_flux(u0, U0_cum, log_w1, log_M0, log_M1, J0)

    return CellProfiles(
        n=fields.n,
        f=sys.f,
        M0=_safe_exp(log_M0),
        M1=_safe_exp(log_M1),
        J0=J0,
        w0=w0,
        u0=u0,
        w1=w1,
        U0_cum=U0_cum,
        u1=u1,
        flux=flux,
    )


def _u1_and_flux(
    u0: CellGrid,
    U0_cum: CellGrid,
    log_w1: np.ndarray,
    log_M0: float,
    log_M1: float,
    J0: float,
) -> tuple[CellGrid, CellGrid]:
    diffusion = math.exp(log_M1 - 3.0 * log_M0)
    scaled_w1 = np.exp(log_w1 - 3.0 * log_M0) / J0

    def closed_form(cumulative: np.ndarray) -> np.ndarray:
        return (
            (diffusion / J0 + 0.5) * u0.values
            - u0.values * cumulative
            - scaled_w1
        )

    u1 = u0.like(closed_form(U0_cum.values))

    scale = max(1.0, float(np.max(np.abs(u1.values))))
    mean = twisted_integral(u1, u0)
    if abs(mean) > U1_MEAN_TOLERANCE * scale:
        raise InternalConsistencyError(
            f"integral of u1 is {mean:.3e}, expected 0"
        )

    flux = u0.like(diffusion + 0.5 * J0 - J0 * U0_cum.values)
    return u1, flux


def compute_u1(
    sys: DimensionlessSystem, cfg: Optional[QuadratureConfig] = None
) -> tuple[CellGrid, CellGrid]:
    """(u1, steady flux profile of u1); u1 divides by J0 so f must not be 0"""
    if sys.f == 0.0:
        raise UndefinedAtZeroForceError(
            "u1 undefined at zero force; D_eff itself is still defined"
        )
    profiles = compute_profiles(sys, cfg)
    assert profiles.u1 is not None and profiles.flux is not None
    return profiles.u1, profiles.flux
