"""Small-force and large-force expansions of the transport coefficients

Small f:   V = (f/a0)(1 + f(a1/a0 - 1/2)),  zeta_eff = a0(1 + f(1/2 - a1/a0)),
           D_eff = (1/a0)(1 + f(a1/a0 - 1/2)),  zeta_eff D_eff = 1 + O(f^2),

with a0 = (int e^{-phi})(int e^{phi}) and
a1 = int int exp(-phi(x) + phi(x+s)) s ds dx. For an even potential
a1 = a0 - a1, so the linear terms vanish.

Large f, with G = int (phi')^2:
           V = f(1 - G/f^2),  zeta_eff = 1 + G/f^2,  D_eff = 1 + 3G/f^2.
"""

import enum
import math
from typing import Callable, Optional

import numpy as np
import pydantic
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from washboard.exception import (
    AsymptoteInapplicableError,
    DomainError,
    InternalConsistencyError,
)
from washboard.nondim import DimensionlessSystem
from washboard.potential import PeriodicPotential, grad_squared_integral
from washboard.quad import (
    QuadratureConfig,
    Scheme,
    circular_log_sum,
    linear_weights,
    log_boltzmann_samples,
    refine_until_converged,
    scheme_for,
)
from washboard.transport import compute_diffusion
from washboard.utils.thread_logger import get_thread_logger
from washboard.utils.work_queue import run_ordered

SYMMETRY_TOLERANCE = 1e-9
MIN_SCAN_POINTS = 33
# relative spread of D_eff over the scan below which the profile is flat
FLAT_TOLERANCE = 1e-12


class Regime(enum.Enum):
    """Regime an asymptotic estimate belongs to"""

    SMALL_F = "small_f"
    LARGE_F = "large_f"


class SmallForceCoefficients(pydantic.BaseModel, frozen=True):
    """a0 and a1 of the small-force expansion"""

    a0: float = pydantic.Field(description="(int e^{-phi}) (int e^{phi})")
    a1: float = pydantic.Field(
        description="int int exp(-phi(x) + phi(x+s)) s ds dx"
    )
    quadrature_n: int = pydantic.Field(description="Finest grid evaluated")
    achieved_rel_err: float = pydantic.Field(
        description="Relative change at the last refinement"
    )

    @pydantic.computed_field  # type: ignore[misc]
    @property
    def ratio(self) -> float:
        """a1 / a0, 1/2 for even potentials"""
        return self.a1 / self.a0

    @property
    def is_symmetric(self) -> bool:
        """Whether the linear terms of the expansion vanish"""
        return abs(self.ratio - 0.5) < SYMMETRY_TOLERANCE


class AsymptoticEstimate(pydantic.BaseModel, frozen=True):
    """Truncated expansion of the transport coefficients at one force"""

    regime: Regime
    f: float
    V: float
    zeta_eff: float
    D_eff: float
    einstein_product: float


class MinimumSearch(pydantic.BaseModel):
    """Outcome of find_min_diffusion"""

    f_star: float = pydantic.Field(description="Minimizing force")
    D_min: float = pydantic.Field(description="D_eff at f_star")
    bracket: tuple[float, float]
    forces: list[float] = pydantic.Field(description="Scan grid")
    D_values: list[float] = pydantic.Field(description="D_eff on the scan")
    non_unimodal: bool = False
    flat: bool = False
    at_boundary: bool = False
    coefficients: SmallForceCoefficients
    below_inverse_a0: bool = pydantic.Field(
        description="Whether D_min < 1/a0 held"
    )

    @property
    def flagged(self) -> bool:
        """Whether the golden-section refinement was skipped"""
        return self.non_unimodal or self.flat or self.at_boundary


def _log_small_force_coefficients(
    phi: PeriodicPotential, n: int, cfg: QuadratureConfig
) -> np.ndarray:
    log_plus = log_boltzmann_samples(phi, n, +1, cfg).values
    log_minus = log_boltzmann_samples(phi, n, -1, cfg).values
    log_n = math.log(n)
    log_a0 = (logsumexp(log_minus) - log_n) + (logsumexp(log_plus) - log_n)
    inner = circular_log_sum(
        log_plus, linear_weights(n, scheme_for(phi)), +1, cfg
    )
    log_a1 = logsumexp(log_minus + inner) - log_n
    return np.array([log_a0, log_a1])


def small_f_coefficients(
    phi: PeriodicPotential, cfg: Optional[QuadratureConfig] = None
) -> SmallForceCoefficients:
    """a0 by two periodic integrals, a1 by the circular double sum"""
    cfg = cfg or QuadratureConfig()
    refinement = refine_until_converged(
        lambda n: _log_small_force_coefficients(phi, n, cfg),
        cfg,
        richardson_order=2 if scheme_for(phi) is Scheme.CELL else None,
        log_scale=True,
    )
    log_a0, log_a1 = (float(v) for v in refinement.value)
    return SmallForceCoefficients(
        a0=math.exp(log_a0),
        a1=math.exp(log_a1),
        quadrature_n=refinement.resolution,
        achieved_rel_err=refinement.achieved_rel_err,
    )


def small_f_expansion(
    coeffs: SmallForceCoefficients, f: float
) -> AsymptoticEstimate:
    """First-order expansion in f; the caller judges whether f is small"""
    linear = f * (coeffs.ratio - 0.5)
    return AsymptoticEstimate(
        regime=Regime.SMALL_F,
        f=f,
        V=f / coeffs.a0 * (1.0 + linear),
        zeta_eff=coeffs.a0 * (1.0 - linear),
        D_eff=(1.0 + linear) / coeffs.a0,
        einstein_product=1.0,
    )


def large_f_expansion(
    phi: PeriodicPotential, f: float, cfg: Optional[QuadratureConfig] = None
) -> AsymptoticEstimate:
    """Expansion in 1/f^2 for smooth potentials and f > 0"""
    if f <= 0:
        raise AsymptoteInapplicableError(
            f"the large-force expansion needs f > 0, got {f}"
        )
    G = grad_squared_integral(phi, cfg)
    correction = G / f**2
    return AsymptoticEstimate(
        regime=Regime.LARGE_F,
        f=f,
        V=f * (1.0 - correction),
        zeta_eff=1.0 + correction,
        D_eff=1.0 + 3.0 * correction,
        einstein_product=1.0 + 4.0 * correction,
    )


def _is_unimodal(values: np.ndarray, tolerance: float) -> bool:
    """Non-increasing then non-decreasing, ignoring steps below tolerance"""
    steps = np.diff(values)
    steps = steps[np.abs(steps) > tolerance]
    # a rise followed by a fall means a second local minimum or a maximum
    return not np.any(np.diff(np.sign(steps)) < 0)


def _refine_minimum(
    objective: Callable[[float], float],
    left: float,
    centre: float,
    right: float,
) -> tuple[float, float]:
    """Golden-section search from a scan triple, bounded search on ties"""
    try:
        result = minimize_scalar(
            objective, bracket=(left, centre, right), method="golden"
        )
    except ValueError:
        # scipy wants objective(centre) strictly below both ends
        result = minimize_scalar(
            objective, bounds=(left, right), method="bounded"
        )
    return float(result.x), float(result.fun)


def find_min_diffusion(
    phi: PeriodicPotential,
    bracket: tuple[float, float],
    cfg: Optional[QuadratureConfig] = None,
    scan_points: int = MIN_SCAN_POINTS,
    num_workers: int = 1,
) -> MinimumSearch:
    """Minimum of D_eff(f) over the bracket

    A uniform scan locates the minimum; golden-section search then refines
    it inside the neighbouring scan points. Non-unimodal, flat and boundary
    minima are flagged and reported at the scan minimum instead. An
    unflagged search around f = 0 on an asymmetric potential must land below
    1/a0 at a non-zero force, otherwise InternalConsistencyError is raised.
    """
    cfg = cfg or QuadratureConfig()
    logger = get_thread_logger(with_prefix=True)
    low, high = float(bracket[0]), float(bracket[1])
    if not low < high:
        raise DomainError(f"empty force bracket [{low}, {high}]")
    if scan_points < 3:
        raise DomainError("the scan needs at least 3 points")

    def diffusion(f: float) -> float:
        return compute_diffusion(DimensionlessSystem(phi=phi, f=f), cfg).D_eff

    forces = np.linspace(low, high, scan_points)
    outcomes = run_ordered(
        diffusion,
        list(forces),
        num_workers=num_workers,
        prefix=lambda f: f"f={f:g}",
    )
    for outcome in outcomes:
        if not outcome.ok:
            assert outcome.error is not None
            raise outcome.error
    values = np.array([outcome.result for outcome in outcomes], dtype=float)

    coefficients = small_f_coefficients(phi, cfg)
    best = int(np.argmin(values))
    spread_tolerance = FLAT_TOLERANCE * float(np.max(np.abs(values)))
    flat = float(np.ptp(values)) <= spread_tolerance
    non_unimodal = flat or not _is_unimodal(values, spread_tolerance)
    at_boundary = not flat and best in (0, scan_points - 1)

    f_star, D_min = float(forces[best]), float(values[best])
    if flat:
        logger.warning("D_eff is flat over [%g, %g]", low, high)
    elif non_unimodal:
        logger.warning(
            "D_eff is not unimodal over [%g, %g]; reporting the scan minimum",
            low,
            high,
        )
    elif at_boundary:
        logger.warning(
            "minimum of D_eff sits on the bracket edge f=%g", f_star
        )
    else:
        x, fun = _refine_minimum(
            diffusion, forces[best - 1], forces[best], forces[best + 1]
        )
        if fun <= D_min:
            f_star, D_min = x, fun

    search = MinimumSearch(
        f_star=f_star,
        D_min=D_min,
        bracket=(low, high),
        forces=forces.tolist(),
        D_values=values.tolist(),
        non_unimodal=non_unimodal,
        flat=flat,
        at_boundary=at_boundary,
        coefficients=coefficients,
        below_inverse_a0=D_min < 1.0 / coefficients.a0,
    )
    straddles_rest = low < 0.0 < high
    if (
        straddles_rest
        and not search.flagged
        and not coefficients.is_symmetric
        and not (search.below_inverse_a0 and f_star != 0.0)
    ):
        raise InternalConsistencyError(
            f"asymmetric potential (a1/a0 = {coefficients.ratio:.6f}) but "
            f"D_min={D_min:.9g} at f={f_star:g} is not below "
            f"1/a0={1.0 / coefficients.a0:.9g}"
        )
    logger.info("minimum of D_eff: %.12g at f=%.6g", D_min, f_star)
    return search
