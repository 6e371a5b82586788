"""Periodic quadrature on the unit cell.

Two grids are used. Smooth integrands live on the nodes x_i = i/n and are
integrated spectrally: a periodic factor is replaced by its trigonometric
interpolant and integrated exactly against the kernel. Integrands with
breakpoints live on the cell centres x_i = (i + 1/2)/n, so that dyadic
breakpoints fall on cell edges, and the kernel is integrated exactly cell by
cell.

Nested integrals of the form sum_m weight_m * exp(L[i +- m]) are carried in
the log domain by circular_log_sum.
"""

import dataclasses
import enum
import math
from typing import TYPE_CHECKING, Callable, NamedTuple, Optional, Union

import numpy as np
import pydantic
from scipy.special import exprel, logsumexp

from washboard.exception import (
    DomainError,
    DynamicRangeError,
    QuadratureNotConvergedError,
)
from washboard.utils.thread_logger import get_thread_logger

if TYPE_CHECKING:
    from washboard.potential import PeriodicPotential

# exponent spread above which no rescaling can keep a sum representable
MAX_EXPONENT_SPREAD = 1400.0
# e^{-f s} overflows beyond this on s in [0, 1]
MIN_FORCE = -700.0
# rows of the direct circular sum evaluated at once
DIRECT_CHUNK_ELEMENTS = 1 << 22
# a breakpoint closer than this to a cell edge (in cell units) is on the edge
EDGE_TOLERANCE = 1e-9


class Scheme(enum.Enum):
    """Discretization of the unit cell"""

    SPECTRAL = "spectral"
    CELL = "cell"

    @property
    def offset(self) -> float:
        """Position of the sample inside each cell, in cell units"""
        return 0.0 if self is Scheme.SPECTRAL else 0.5


class QuadratureConfig(pydantic.BaseModel, frozen=True):
    """Resolution and stopping rule of the periodic quadrature"""

    n_grid: int = pydantic.Field(
        default=256, description="Points per unit period, a power of two"
    )
    rel_tol: float = pydantic.Field(
        default=1e-10,
        gt=0.0,
        description="Relative change between doublings that stops refinement",
    )
    max_refinements: int = pydantic.Field(
        default=6, ge=0, description="Maximum number of grid doublings"
    )
    split_breakpoints: bool = pydantic.Field(
        default=True,
        description="Average exp(+-phi) over the smooth pieces of a cell "
        "that contains a breakpoint",
    )
    fft_max_spread: float = pydantic.Field(
        default=7.0,
        gt=0.0,
        description="Largest exponent spread evaluated by FFT; wider spreads "
        "use row-stabilized direct sums",
    )

    @pydantic.field_validator("n_grid")
    @classmethod
    def n_grid_is_power_of_two(cls, value: int) -> int:
        """Grid doubling and circular indexing need 2^k points"""
        if value < 16 or value & (value - 1):
            raise ValueError(
                f"n_grid must be a power of two and at least 16, got {value}"
            )
        return value

    @property
    def max_resolution(self) -> int:
        """Finest grid refine_until_converged may visit"""
        return self.n_grid << self.max_refinements


@dataclasses.dataclass(frozen=True)
class CellGrid:
    """A period-1 function sampled at x_i = (i + offset)/n"""

    values: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise DomainError("a CellGrid holds a non-empty 1-D array")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def n(self) -> int:
        """Number of samples"""
        return self.values.size

    @property
    def x(self) -> np.ndarray:
        """Sample positions"""
        return grid_points(self.n, self.scheme)

    @property
    def scheme(self) -> Scheme:
        """Scheme the grid belongs to"""
        return Scheme.SPECTRAL if self.offset == 0.0 else Scheme.CELL

    def like(self, values: np.ndarray) -> "CellGrid":
        """A grid on the same points with new values"""
        return CellGrid(values, self.offset)

    def __len__(self) -> int:
        return self.n


class Refinement(NamedTuple):
    """Outcome of refine_until_converged"""

    value: Union[float, np.ndarray]
    achieved_rel_err: float
    resolution: int


def grid_points(n: int, scheme: Scheme) -> np.ndarray:
    """Sample positions of an n-point grid"""
    return (np.arange(n) + scheme.offset) / n


def scheme_for(phi: "PeriodicPotential") -> Scheme:
    """Spectral nodes for smooth potentials, cell centres otherwise"""
    return Scheme.SPECTRAL if phi.is_smooth else Scheme.CELL


def periodic_integral(g: CellGrid) -> float:
    """(1/n) sum g_i, the periodic trapezoid (or midpoint) rule"""
    return math.fsum(g.values) / g.n


def exponential_weights(n: int, f: float, scheme: Scheme) -> np.ndarray:
    """Product weights for the kernel e^{-f s} on [0, 1]

    sum_m w_m P(s_m) approximates the integral of P(s) e^{-f s} for a
    period-1 P sampled at s_m = m/n.
    """
    if f < MIN_FORCE:
        raise DynamicRangeError(
            f"e^(-f s) with f={f} exceeds double precision on [0, 1]"
        )
    if scheme is Scheme.SPECTRAL:
        wavenumbers = 2j * np.pi * np.arange(n // 2 + 1)
        moments = np.empty(n // 2 + 1, dtype=complex)
        moments[0] = exprel(-f)
        moments[1:] = -np.expm1(-f) / (f - wavenumbers[1:])
        return np.fft.irfft(np.conj(moments), n)

    h = 1.0 / n
    lower = (np.arange(n) - 0.5) * h
    lower[0] = 0.0
    width = np.full(n, h)
    width[0] = h / 2
    weights = np.exp(-f * lower) * width * exprel(-f * width)
    tail = h / 2
    weights[0] += np.exp(-f * (1.0 - tail)) * tail * exprel(-f * tail)
    return weights


def linear_weights(n: int, scheme: Scheme) -> np.ndarray:
    """Product weights for the kernel s on [0, 1]"""
    if scheme is Scheme.SPECTRAL:
        moments = np.empty(n // 2 + 1, dtype=complex)
        moments[0] = 0.5
        moments[1:] = 1.0 / (2j * np.pi * np.arange(1, n // 2 + 1))
        return np.fft.irfft(np.conj(moments), n)

    h = 1.0 / n
    weights = np.arange(n) * h * h
    weights[0] = h / 2
    return weights


def _cells_with_cuts(
    cuts: np.ndarray, n: int
) -> dict[int, list[float]]:
    """Group interior cut positions by the cell [i/n, (i+1)/n] holding them"""
    grouped: dict[int, list[float]] = {}
    for cut in np.sort(cuts):
        scaled = cut * n
        if abs(scaled - round(scaled)) < EDGE_TOLERANCE:
            continue
        grouped.setdefault(int(math.floor(scaled)) % n, []).append(cut)
    return grouped


def cell_log_average(
    log_integrand: Callable[[np.ndarray], np.ndarray],
    n: int,
    cuts: np.ndarray,
) -> np.ndarray:
    """log of the mean of exp(log_integrand) over each cell [i/n, (i+1)/n]

    Cells cut by a discontinuity average their smooth pieces, each sampled at
    its own midpoint and weighted by its length.
    """
    centres = grid_points(n, Scheme.CELL)
    result = np.array(log_integrand(centres), dtype=float)
    for cell, cell_cuts in _cells_with_cuts(np.asarray(cuts), n).items():
        edges = np.array([cell / n, *cell_cuts, (cell + 1) / n])
        midpoints = 0.5 * (edges[:-1] + edges[1:])
        lengths = np.diff(edges) * n
        result[cell] = logsumexp(log_integrand(midpoints), b=lengths)
    return result


def log_boltzmann_samples(
    phi: "PeriodicPotential",
    n: int,
    sign: int,
    cfg: Optional[QuadratureConfig] = None,
) -> CellGrid:
    """log of e^{sign * phi} sampled on the grid of phi's scheme

    On the cell grid each sample is the cell mean of e^{sign * phi}.
    """
    cfg = cfg or QuadratureConfig()
    scheme = scheme_for(phi)
    if scheme is Scheme.SPECTRAL:
        points = grid_points(n, scheme)
        return CellGrid(sign * np.asarray(phi.value(points)), scheme.offset)

    def log_integrand(points: np.ndarray) -> np.ndarray:
        return sign * np.asarray(phi.value(points))

    cuts = np.asarray(phi.breakpoints) if cfg.split_breakpoints else []
    return CellGrid(
        cell_log_average(log_integrand, n, np.asarray(cuts)), scheme.offset
    )


def exponent_spread(log_values: np.ndarray) -> float:
    """max - min of the finite entries"""
    finite = log_values[np.isfinite(log_values)]
    if finite.size == 0:
        return 0.0
    return float(finite.max() - finite.min())


def _fft_circular_sum(
    values: np.ndarray, weights: np.ndarray, direction: int
) -> np.ndarray:
    n = values.size
    spectrum = np.fft.rfft(weights)
    if direction > 0:
        spectrum = np.conj(spectrum)
    return np.fft.irfft(np.fft.rfft(values) * spectrum, n)


def _direct_circular_log_sum(
    log_values: np.ndarray, weights: np.ndarray, direction: int
) -> np.ndarray:
    n = log_values.size
    offsets = np.arange(n)
    rows_per_chunk = max(1, DIRECT_CHUNK_ELEMENTS // n)
    result = np.empty(n)
    for start in range(0, n, rows_per_chunk):
        rows = np.arange(start, min(n, start + rows_per_chunk))
        index = (rows[:, None] + direction * offsets[None, :]) % n
        logs, signs = logsumexp(
            log_values[index],
            b=np.broadcast_to(weights, index.shape),
            axis=1,
            return_sign=True,
        )
        if np.any(signs <= 0):
            raise DynamicRangeError(
                "circular sum lost its sign to cancellation"
            )
        result[rows] = logs
    return result


def circular_log_sum(
    log_values: np.ndarray,
    weights: np.ndarray,
    direction: int,
    cfg: Optional[QuadratureConfig] = None,
) -> np.ndarray:
    """log sum_m weights[m] * exp(log_values[(i + direction*m) mod n])

    Narrow exponent ranges go through the FFT; wide ones through direct sums
    with the row maximum factored out. Rows are independent.
    """
    cfg = cfg or QuadratureConfig()
    log_values = np.asarray(log_values, dtype=float)
    if direction not in (1, -1):
        raise DomainError(f"direction must be +1 or -1, got {direction}")
    if log_values.shape != np.shape(weights):
        raise DomainError("log_values and weights must have the same length")

    spread = exponent_spread(log_values)
    if spread > MAX_EXPONENT_SPREAD:
        raise DynamicRangeError(
            f"exponent spread {spread:.1f} exceeds {MAX_EXPONENT_SPREAD}"
        )
    if spread <= cfg.fft_max_spread:
        shift = float(np.max(log_values))
        sums = _fft_circular_sum(
            np.exp(log_values - shift), np.asarray(weights), direction
        )
        if np.all(sums > 0) and np.all(np.isfinite(sums)):
            return np.log(sums) + shift
    return _direct_circular_log_sum(log_values, np.asarray(weights), direction)


def exp_integral_shifted(
    phi: "PeriodicPotential",
    f: float,
    x: float,
    sign: int,
    cfg: Optional[QuadratureConfig] = None,
) -> float:
    """Integral over s in [0, 1] of exp(sign*(phi(x + sign*s) - phi(x)) - f s)

    sign = +1 is the inner integral of w0; sign = -1 is the inner integral of
    the dual form exp(phi(x) - phi(x - s) - f s). Evaluated at cfg.n_grid
    points with the maximum exponent factored out.
    """
    cfg = cfg or QuadratureConfig()
    if sign not in (1, -1):
        raise DomainError(f"sign must be +1 or -1, got {sign}")
    n = cfg.n_grid
    origin = float(phi.value(x))

    def log_integrand(s: np.ndarray) -> np.ndarray:
        return sign * (np.asarray(phi.value(x + sign * s)) - origin)

    if phi.is_smooth:
        log_values = log_integrand(grid_points(n, Scheme.SPECTRAL))
        weights = exponential_weights(n, f, Scheme.SPECTRAL)
    else:
        cuts = (
            np.mod(sign * (np.asarray(phi.breakpoints) - x), 1.0)
            if cfg.split_breakpoints
            else np.array([])
        )
        log_values = cell_log_average(log_integrand, n, cuts)
        # cells [m/n, (m+1)/n] in s, each carrying its exact kernel integral
        if f < MIN_FORCE:
            raise DynamicRangeError(
                f"e^(-f s) with f={f} exceeds double precision on [0, 1]"
            )
        h = 1.0 / n
        weights = np.exp(-f * np.arange(n) * h) * h * exprel(-f * h)

    spread = exponent_spread(log_values)
    if spread > MAX_EXPONENT_SPREAD:
        raise DynamicRangeError(
            f"exponent spread {spread:.1f} exceeds {MAX_EXPONENT_SPREAD}"
        )
    log_sum, sum_sign = logsumexp(log_values, b=weights, return_sign=True)
    if sum_sign <= 0:
        raise DynamicRangeError("shifted integral lost its sign to cancellation")
    return float(sum_sign * np.exp(log_sum))


def _relative_change(
    previous: Union[float, np.ndarray],
    last: Union[float, np.ndarray],
    log_scale: bool,
) -> float:
    previous_arr = np.atleast_1d(np.asarray(previous, dtype=float))
    last_arr = np.atleast_1d(np.asarray(last, dtype=float))
    if log_scale:
        return float(np.max(np.abs(last_arr - previous_arr)))
    scale = np.maximum(np.abs(last_arr), np.finfo(float).tiny)
    return float(np.max(np.abs(last_arr - previous_arr) / scale))


def refine_until_converged(
    computation: Callable[[int], Union[float, np.ndarray]],
    cfg: Optional[QuadratureConfig] = None,
    richardson_order: Optional[int] = None,
    log_scale: bool = False,
) -> Refinement:
    """Evaluate computation(n) at n, 2n, 4n, ... until it settles

    computation may return a scalar or an array; an array converges when
    all of its components do. With log_scale the values are logarithms and
    their absolute change is the relative change of the underlying
    quantities. richardson_order=p extrapolates each pair of resolutions
    assuming an error expansion in h^p before comparing.
    """
    cfg = cfg or QuadratureConfig()
    logger = get_thread_logger(with_prefix=True)

    resolution = cfg.n_grid
    raw = computation(resolution)
    logger.debug("quadrature n=%d value=%r", resolution, raw)
    estimates = [] if richardson_order else [raw]

    rel_change = math.inf
    for _ in range(cfg.max_refinements):
        resolution *= 2
        finer = computation(resolution)
        logger.debug("quadrature n=%d value=%r", resolution, finer)
        if richardson_order:
            factor = 2.0**richardson_order
            extrapolated = (factor * np.asarray(finer) - np.asarray(raw)) / (
                factor - 1.0
            )
            estimates.append(
                float(extrapolated)
                if np.ndim(extrapolated) == 0
                else extrapolated
            )
        else:
            estimates.append(finer)
        raw = finer
        if len(estimates) < 2:
            continue
        rel_change = _relative_change(estimates[-2], estimates[-1], log_scale)
        if rel_change < cfg.rel_tol:
            return Refinement(estimates[-1], rel_change, resolution)

    last = estimates[-1] if estimates else raw
    previous = estimates[-2] if len(estimates) >= 2 else last
    raise QuadratureNotConvergedError(
        previous=previous,
        last=last,
        resolution=resolution,
        rel_change=rel_change,
    )


def cumulative_integral(g: CellGrid) -> CellGrid:
    """Integral of g from 0 to each sample position

    Spectral grids integrate the trigonometric interpolant exactly; cell
    grids add whole cells and half of the current one.
    """
    n = g.n
    if g.scheme is Scheme.CELL:
        cells = g.values / n
        return g.like(np.cumsum(cells) - 0.5 * cells)

    coefficients = np.fft.rfft(g.values) / n
    antiderivative = np.zeros_like(coefficients)
    # the Nyquist term integrates to sin(pi n x), which vanishes on the nodes
    top = (n - 1) // 2
    k = np.arange(1, top + 1)
    antiderivative[1 : top + 1] = coefficients[1 : top + 1] / (2j * np.pi * k)
    oscillating = n * np.fft.irfft(antiderivative, n)
    at_origin = 2.0 * np.sum(antiderivative.real)
    return g.like(coefficients[0].real * g.x + oscillating - at_origin)


def first_moment(g: CellGrid) -> float:
    """Integral of x g(x) over [0, 1)"""
    if g.scheme is Scheme.SPECTRAL:
        return math.fsum(linear_weights(g.n, Scheme.SPECTRAL) * g.values)
    return math.fsum(g.x * g.values) / g.n


def twisted_integral(g: CellGrid, jump: CellGrid) -> float:
    """Integral over [0, 1) of a field with g(x + 1) = g(x) - jump(x)

    g + x*jump is periodic, so the integral splits into a periodic part and
    the first moment of the jump.
    """
    periodic = g.like(g.values + g.x * jump.values)
    return periodic_integral(periodic) - first_moment(jump)


def spectral_derivative(g: CellGrid) -> CellGrid:
    """g' of a periodic grid function

    Spectral grids differentiate the interpolant with the Nyquist mode
    dropped; cell grids use central differences.
    """
    n = g.n
    if g.scheme is Scheme.CELL:
        return g.like((np.roll(g.values, -1) - np.roll(g.values, 1)) * n / 2)
    coefficients = np.fft.rfft(g.values)
    wavenumbers = 2j * np.pi * np.arange(coefficients.size)
    if n % 2 == 0:
        wavenumbers[-1] = 0.0
    return g.like(np.fft.irfft(coefficients * wavenumbers, n))


def twisted_derivative(g: CellGrid, jump: CellGrid) -> CellGrid:
    """g' for a field with g(x + 1) = g(x) - jump(x)"""
    periodic = g.like(g.values + g.x * jump.values)
    return g.like(
        spectral_derivative(periodic).values
        - jump.values
        - g.x * spectral_derivative(jump).values
    )
