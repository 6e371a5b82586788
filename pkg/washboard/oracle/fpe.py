"""Deterministic oracle: the moment hierarchy on the unit cell.

rho_k(x, t) = sum_j j^k rho(j + x, t) for k = 0, 1, 2 all obey the
Fokker-Planck equation d rho_k/dt = d/dx((phi' - f) rho_k + d rho_k/dx) on
[0, 1), closed by the twisted boundary conditions

    rho1(x + 1) = rho1(x) - rho0(x)
    rho2(x + 1) = rho2(x) - 2 rho1(x) + rho0(x).

The long-time slopes of int rho1 and of int rho2 - (int rho1)^2 give V and
2 D_eff. The scheme is conservative finite volumes on the grid the transport
quadrature uses, with explicit Euler time steps.
"""

import enum
import math
from typing import Callable, Optional, Union

import numpy as np
import pandas as pd
import pydantic
from scipy.linalg import null_space
from scipy.special import exprel

from washboard.exception import (
    BlowUpError,
    DomainError,
    InsufficientHistoryError,
    InternalConsistencyError,
)
from washboard.nondim import DimensionlessSystem
from washboard.quad import (
    CellGrid,
    QuadratureConfig,
    Scheme,
    grid_points,
    scheme_for,
)
from washboard.transport import compute_u0
from washboard.utils.thread_logger import get_thread_logger

STABILITY_FACTOR = 0.4
# largest fraction of a cell's content one explicit step may move out
POSITIVITY_FACTOR = 0.9
MIN_SLOPE_SAMPLES = 10
LYAPUNOV_STEP_TOLERANCE = 1e-12
LYAPUNOV_DECAY = 1e-3
LYAPUNOV_MIN_HORIZON = 2.0
ZERO_MEAN_TOLERANCE = 1e-10
HISTORY_COLUMNS = ["t", "int_rho1", "centered_second_moment", "E_lyapunov"]


class FluxScheme(enum.Enum):
    """Interface flux of the finite-volume scheme"""

    EXPONENTIAL_FITTING = "exponential_fitting"
    UPWIND = "upwind"


class InitialDensity(enum.Enum):
    """Where rho0 starts"""

    TRANSPORT = "transport"
    DISCRETE = "discrete"


class FpeConfig(pydantic.BaseModel):
    """Grid, time step and horizon of the moment hierarchy"""

    n: int = pydantic.Field(
        default=256, description="Cells per period, a power of two"
    )
    dt: Optional[float] = pydantic.Field(
        default=None,
        gt=0.0,
        description="Time step; defaults to the largest stable one",
    )
    t_final: float = pydantic.Field(default=20.0, gt=0.0, description="Horizon")
    slope_window: float = pydantic.Field(
        default=0.5,
        gt=0.0,
        le=1.0,
        description="Trailing fraction of the horizon used for slope fits",
    )
    n_records: int = pydantic.Field(
        default=200, ge=1, description="Recorded time points"
    )
    flux: FluxScheme = pydantic.Field(
        default=FluxScheme.EXPONENTIAL_FITTING,
        description="Interface flux",
    )
    initial_density: InitialDensity = pydantic.Field(
        default=InitialDensity.TRANSPORT,
        description="rho0 at t = 0: u0 from transport or the discrete "
        "steady state",
    )

    @pydantic.field_validator("n")
    @classmethod
    def n_is_power_of_two(cls, value: int) -> int:
        """Shares its grid with the transport quadrature"""
        if value < 16 or value & (value - 1):
            raise ValueError(
                f"n must be a power of two and at least 16, got {value}"
            )
        return value

    @pydantic.model_validator(mode="after")
    def dt_is_stable(self) -> "FpeConfig":
        """dt <= 0.4 h^2 for the explicit diffusion step"""
        if self.dt is not None and self.dt > STABILITY_FACTOR / self.n**2:
            raise ValueError(
                f"dt={self.dt} exceeds the stability bound "
                f"{STABILITY_FACTOR / self.n**2:.3e} at n={self.n}"
            )
        return self

    @property
    def quad(self) -> QuadratureConfig:
        """Quadrature on the same grid"""
        return QuadratureConfig(n_grid=self.n)


class MomentState(pydantic.BaseModel):
    """rho0, rho1 and rho2 on the unit cell at time t"""

    model_config = pydantic.ConfigDict(arbitrary_types_allowed=True)

    rho0: CellGrid
    rho1: CellGrid
    rho2: CellGrid
    t: float = 0.0
    steps: int = pydantic.Field(default=0, description="Steps taken so far")

    @property
    def n(self) -> int:
        """Cells per period"""
        return self.rho0.n

    @property
    def mass(self) -> float:
        """int rho0, conserved"""
        return float(np.sum(self.rho0.values)) / self.n

    @property
    def int_rho1(self) -> float:
        """int rho1, the mean displacement"""
        return float(np.sum(self.rho1.values)) / self.n

    @property
    def centered_second_moment(self) -> float:
        """int rho2 - (int rho1)^2, the variance of the displacement"""
        return float(np.sum(self.rho2.values)) / self.n - self.int_rho1**2

    def as_vector(self) -> np.ndarray:
        """[rho0; rho1; rho2]"""
        return np.concatenate(
            [self.rho0.values, self.rho1.values, self.rho2.values]
        )

    def advanced(
        self, vector: np.ndarray, steps: int, dt: float
    ) -> "MomentState":
        """The state after `steps` more steps, holding `vector`"""
        n, offset = self.n, self.rho0.offset
        return MomentState(
            rho0=CellGrid(vector[:n], offset),
            rho1=CellGrid(vector[n : 2 * n], offset),
            rho2=CellGrid(vector[2 * n :], offset),
            t=self.t + steps * dt,
            steps=self.steps + steps,
        )


class FpeEstimate(pydantic.BaseModel):
    """V and D_eff read off the moment hierarchy"""

    V_fpe: float
    Deff_fpe: float
    n: Optional[int] = None
    dt: Optional[float] = None
    t_final: Optional[float] = None


class LyapunovTrace(pydantic.BaseModel):
    """E(t) = int u0 r0^2 along a relaxing density"""

    times: list[float]
    energies: list[float]
    monotone: bool
    decay_ratio: float = pydantic.Field(
        description="E(t_final) / E(0), 0 when E(0) = 0"
    )


class FpeRun(pydantic.BaseModel):
    """Result of evolve"""

    model_config = pydantic.ConfigDict(arbitrary_types_allowed=True)

    final: MomentState
    history: pd.DataFrame = pydantic.Field(
        description="Columns t, int_rho1, centered_second_moment, E_lyapunov"
    )
    dt: float
    steady: CellGrid = pydantic.Field(
        description="Discrete steady state the Lyapunov energy refers to"
    )

    def write_trace(self, path: str) -> None:
        """Write the history as CSV"""
        self.history.to_csv(path, index=False, columns=HISTORY_COLUMNS)


class _Interfaces:
    """F_{i+1/2} = forward_i rho_i - backward_i rho_{i+1}"""

    def __init__(self, sys: DimensionlessSystem, cfg: FpeConfig):
        n = cfg.n
        self.n = n
        self.h = 1.0 / n
        self.scheme = scheme_for(sys.phi)
        centres = grid_points(n, self.scheme)

        if cfg.flux is FluxScheme.EXPONENTIAL_FITTING:
            values = np.asarray(sys.phi.value(centres), dtype=float)
            jumps = np.roll(values, -1) - values - sys.f * self.h
            self.forward = 1.0 / (self.h * exprel(jumps))
            self.backward = 1.0 / (self.h * exprel(-jumps))
        else:
            if not sys.phi.is_smooth or not sys.phi.has_derivative:
                raise DomainError(
                    "the upwind flux needs a smooth potential; "
                    "use exponential fitting"
                )
            velocity = sys.f - np.asarray(
                sys.phi.derivative(centres + 0.5 * self.h)
            )
            self.forward = np.maximum(velocity, 0.0) + 1.0 / self.h
            self.backward = 1.0 / self.h - np.minimum(velocity, 0.0)

    def largest_outflow(self) -> float:
        """Largest rate at which a cell loses its content"""
        return float(
            np.max((self.forward + np.roll(self.backward, 1)) / self.h)
        )

    def _expand(
        self, coefficients: np.ndarray, like: np.ndarray
    ) -> np.ndarray:
        return coefficients.reshape((-1,) + (1,) * (like.ndim - 1))

    def rhs(
        self, rho0: np.ndarray, rho1: np.ndarray, rho2: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Time derivatives; extra trailing axes are treated as columns"""
        forward = self._expand(self.forward, rho0)
        backward = self._expand(self.backward, rho0)

        # neighbours across x = 1 and x = 0, from the twisted identities
        right_ghosts = (
            rho0[0],
            rho1[0] - rho0[0],
            rho2[0] - 2.0 * rho1[0] + rho0[0],
        )
        left_ghosts = (
            rho0[-1],
            rho1[-1] + rho0[-1],
            rho2[-1] + 2.0 * rho1[-1] + rho0[-1],
        )

        derivatives = []
        for rho, right_ghost, left_ghost in zip(
            (rho0, rho1, rho2), right_ghosts, left_ghosts
        ):
            right = np.roll(rho, -1, axis=0)
            right[-1] = right_ghost
            outgoing = forward * rho - backward * right
            incoming = np.roll(outgoing, 1, axis=0)
            incoming[0] = (
                self.forward[-1] * left_ghost - self.backward[-1] * rho[0]
            )
            derivatives.append(-(outgoing - incoming) / self.h)
        return derivatives[0], derivatives[1], derivatives[2]

    def generator(self) -> np.ndarray:
        """The (3n x 3n) matrix of rhs acting on [rho0; rho1; rho2]"""
        n = self.n
        identity = np.eye(3 * n)
        blocks = self.rhs(
            identity[:n], identity[n : 2 * n], identity[2 * n :]
        )
        return np.vstack(blocks)


def _resolve_dt(cfg: FpeConfig, interfaces: _Interfaces) -> float:
    if cfg.dt is not None:
        return cfg.dt
    return min(
        STABILITY_FACTOR / cfg.n**2,
        POSITIVITY_FACTOR / interfaces.largest_outflow(),
    )


def _schedule(cfg: FpeConfig, dt: float) -> tuple[float, int]:
    """(dt, steps per record) with an integral number of steps per record"""
    per_record = max(1, math.ceil(cfg.t_final / (dt * cfg.n_records)))
    return cfg.t_final / (per_record * cfg.n_records), per_record


def discrete_steady_state(
    sys: DimensionlessSystem, cfg: Optional[FpeConfig] = None
) -> tuple[CellGrid, float]:
    """Normalized null vector of the rho0 operator and its constant flux"""
    cfg = cfg or FpeConfig()
    interfaces = _Interfaces(sys, cfg)
    n = cfg.n
    operator = interfaces.generator()[:n, :n]
    kernel = null_space(operator)
    if kernel.shape[1] != 1:
        raise InternalConsistencyError(
            f"the rho0 operator has a {kernel.shape[1]}-dimensional kernel"
        )
    density = kernel[:, 0] / (np.sum(kernel[:, 0]) / n)
    flux = interfaces.forward * density - interfaces.backward * np.roll(
        density, -1
    )
    return CellGrid(density, interfaces.scheme.offset), float(np.mean(flux))


def init_state(
    sys: DimensionlessSystem, cfg: Optional[FpeConfig] = None
) -> MomentState:
    """rho0 = u0, rho1 = rho2 = 0 at t = 0"""
    cfg = cfg or FpeConfig()
    if cfg.initial_density is InitialDensity.DISCRETE:
        u0, _ = discrete_steady_state(sys, cfg)
    else:
        u0 = compute_u0(sys, cfg.quad)
    zeros = np.zeros(u0.n)
    return MomentState(
        rho0=u0, rho1=u0.like(zeros), rho2=u0.like(zeros), t=0.0
    )


def step(
    state: MomentState,
    sys: DimensionlessSystem,
    cfg: Optional[FpeConfig] = None,
    dt: Optional[float] = None,
) -> MomentState:
    """One explicit conservative step of every moment"""
    cfg = cfg or FpeConfig(n=state.n)
    interfaces = _Interfaces(sys, cfg.model_copy(update={"n": state.n}))
    if dt is None:
        dt = _resolve_dt(cfg, interfaces)
    derivatives = interfaces.rhs(
        state.rho0.values, state.rho1.values, state.rho2.values
    )
    vector = state.as_vector() + dt * np.concatenate(derivatives)
    if not np.all(np.isfinite(vector)):
        raise BlowUpError(state.steps + 1)
    return state.advanced(vector, 1, dt)


def _lyapunov_energy(rho0: np.ndarray, steady: np.ndarray) -> float:
    return float(np.sum((rho0 - steady) ** 2 / steady)) / rho0.size


def evolve(
    sys: DimensionlessSystem,
    cfg: Optional[FpeConfig] = None,
    state: Optional[MomentState] = None,
) -> FpeRun:
    """Run the hierarchy to cfg.t_final, recording cfg.n_records samples

    Between samples the one-step matrix is applied as a matrix power, which
    is the same linear map as stepping one by one.
    """
    cfg = cfg or FpeConfig()
    logger = get_thread_logger(with_prefix=True)
    interfaces = _Interfaces(sys, cfg)
    generator = interfaces.generator()
    dt, per_record = _schedule(cfg, _resolve_dt(cfg, interfaces))
    propagator = np.linalg.matrix_power(
        np.eye(generator.shape[0]) + dt * generator, per_record
    )
    steady, _ = discrete_steady_state(sys, cfg)
    state = state or init_state(sys, cfg)
    logger.info(
        "fpe: n=%d dt=%.3e steps=%d flux=%s",
        cfg.n,
        dt,
        per_record * cfg.n_records,
        cfg.flux.value,
    )

    rows = []

    def record(current: MomentState) -> None:
        rows.append(
            (
                current.t,
                current.int_rho1,
                current.centered_second_moment,
                _lyapunov_energy(current.rho0.values, steady.values),
            )
        )

    record(state)
    for _ in range(cfg.n_records):
        vector = propagator @ state.as_vector()
        if not np.all(np.isfinite(vector)):
            raise BlowUpError(state.steps + per_record)
        state = state.advanced(vector, per_record, dt)
        record(state)

    history = pd.DataFrame(rows, columns=HISTORY_COLUMNS)
    return FpeRun(final=state, history=history, dt=dt, steady=steady)


def extract_transport(
    history: pd.DataFrame, slope_window: float = 0.5
) -> FpeEstimate:
    """Slopes of int rho1 and of half the centered second moment"""
    times = history["t"].to_numpy()
    window = history[times >= times[-1] * (1.0 - slope_window)]
    if len(window) < MIN_SLOPE_SAMPLES:
        raise InsufficientHistoryError(
            f"{len(window)} samples in the slope window, "
            f"need {MIN_SLOPE_SAMPLES}"
        )
    t = window["t"].to_numpy()
    V = np.polyfit(t, window["int_rho1"].to_numpy(), 1)[0]
    spread = np.polyfit(t, window["centered_second_moment"].to_numpy(), 1)[0]
    return FpeEstimate(V_fpe=float(V), Deff_fpe=0.5 * float(spread))


def run_oracle(
    sys: DimensionlessSystem, cfg: Optional[FpeConfig] = None
) -> FpeEstimate:
    """evolve followed by extract_transport"""
    cfg = cfg or FpeConfig()
    run = evolve(sys, cfg)
    estimate = extract_transport(run.history, cfg.slope_window)
    return estimate.model_copy(
        update={"n": cfg.n, "dt": run.dt, "t_final": cfg.t_final}
    )


def evolve_p1(
    sys: DimensionlessSystem, cfg: Optional[FpeConfig] = None
) -> tuple[CellGrid, CellGrid, float]:
    """Evolve p1 = rho1 - u0 J0 t from p1 = 0 with rho0 at steady state

    p1 obeys the same equation as rho1 plus the source -J0 u0, with the
    twist p1(x + 1) = p1(x) - u0(x). u0 and J0 are the discrete steady state
    and flux. Returns (p1 at cfg.t_final, u0, J0).
    """
    cfg = cfg or FpeConfig()
    interfaces = _Interfaces(sys, cfg)
    generator = interfaces.generator()
    dt, per_record = _schedule(cfg, _resolve_dt(cfg, interfaces))
    steady, flux = discrete_steady_state(sys, cfg)

    n = cfg.n
    u0 = steady.values
    augmented = np.zeros((n + 1, n + 1))
    augmented[:n, :n] = np.eye(n) + dt * generator[n : 2 * n, n : 2 * n]
    augmented[:n, n] = dt * (generator[n : 2 * n, :n] @ u0 - flux * u0)
    augmented[n, n] = 1.0
    propagator = np.linalg.matrix_power(
        augmented, per_record * cfg.n_records
    )
    p1 = propagator[:n, n]
    if not np.all(np.isfinite(p1)):
        raise BlowUpError(per_record * cfg.n_records)
    return steady.like(p1), steady, flux


def center_perturbation(
    perturbation: np.ndarray, steady: CellGrid
) -> np.ndarray:
    """Shift r0 so that int u0 r0 = 0"""
    return perturbation - float(np.sum(steady.values * perturbation)) / (
        steady.n
    )


def lyapunov_decay_check(
    sys: DimensionlessSystem,
    perturbation: Union[np.ndarray, CellGrid, Callable[[np.ndarray], np.ndarray]],
    cfg: Optional[FpeConfig] = None,
) -> LyapunovTrace:
    """Relax rho0 = u0 (1 + r0) and record E(t) = int u0 r0^2

    u0 is the discrete steady state, for which E is non-increasing step by
    step. Raises when it is not, or when a horizon of at least 2 does not
    bring E below 1e-3 E(0).
    """
    cfg = cfg or FpeConfig()
    steady, _ = discrete_steady_state(sys, cfg)
    if callable(perturbation):
        r0 = np.asarray(perturbation(steady.x), dtype=float)
    elif isinstance(perturbation, CellGrid):
        r0 = perturbation.values
    else:
        r0 = np.asarray(perturbation, dtype=float)
    if r0.shape != steady.values.shape:
        raise DomainError(
            f"perturbation has {r0.size} samples, the grid has {steady.n}"
        )
    mean = float(np.sum(steady.values * r0)) / steady.n
    if abs(mean) > ZERO_MEAN_TOLERANCE * max(1.0, float(np.max(np.abs(r0)))):
        raise DomainError(
            f"perturbation must satisfy int u0 r0 = 0, got {mean:.3e}"
        )

    interfaces = _Interfaces(sys, cfg)
    operator = interfaces.generator()[: cfg.n, : cfg.n]
    dt, per_record = _schedule(cfg, _resolve_dt(cfg, interfaces))
    propagator = np.linalg.matrix_power(
        np.eye(cfg.n) + dt * operator, per_record
    )

    rho0 = steady.values * (1.0 + r0)
    times = [0.0]
    energies = [_lyapunov_energy(rho0, steady.values)]
    for index in range(1, cfg.n_records + 1):
        rho0 = propagator @ rho0
        if not np.all(np.isfinite(rho0)):
            raise BlowUpError(index * per_record)
        times.append(index * per_record * dt)
        energies.append(_lyapunov_energy(rho0, steady.values))

    increments = np.diff(energies)
    monotone = bool(np.all(increments <= LYAPUNOV_STEP_TOLERANCE))
    decay_ratio = energies[-1] / energies[0] if energies[0] > 0 else 0.0
    if not monotone:
        raise InternalConsistencyError(
            f"Lyapunov energy increased by {float(np.max(increments)):.3e}"
        )
    if times[-1] >= LYAPUNOV_MIN_HORIZON and decay_ratio >= LYAPUNOV_DECAY:
        raise InternalConsistencyError(
            f"Lyapunov energy only decayed to {decay_ratio:.3e} of E(0) "
            f"by t={times[-1]:g}"
        )
    return LyapunovTrace(
        times=times,
        energies=energies,
        monotone=monotone,
        decay_ratio=decay_ratio,
    )
