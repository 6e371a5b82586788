"""Euler-Maruyama ensembles of dX = (f - phi'(X)) dt + sqrt(2) dW

V and D_eff are the long-time slopes of the ensemble mean and of half the
ensemble variance. Every path owns a PCG64 stream spawned from
SeedSequence(seed), path p getting child p, so estimates are bit-identical
for any number of workers.
"""

import math
from typing import Optional

import numpy as np
import pydantic
from scipy import stats

from washboard.exception import (
    BlowUpError,
    DriftUndefinedError,
    InsufficientHistoryError,
    NonDifferentiableError,
)
from washboard.nondim import DimensionlessSystem
from washboard.potential import PeriodicPotential
from washboard.quad import CellGrid, QuadratureConfig, Scheme
from washboard.transport import compute_u0
from washboard.utils.thread_logger import get_thread_logger
from washboard.utils.work_queue import run_ordered

# dt * max |phi''| above which explicit stepping is flagged
STABILITY_LIMIT = 0.5
STABILITY_PROBES = 1024
CONFIDENCE = 0.95
MIN_WINDOW_RECORDS = 3


class SdeConfig(pydantic.BaseModel):
    """Ensemble, horizon and estimator settings"""

    dt: float = pydantic.Field(default=1e-3, gt=0.0, description="Time step")
    t_final: float = pydantic.Field(default=50.0, description="Horizon")
    n_paths: int = pydantic.Field(
        default=2000, ge=100, description="Ensemble size"
    )
    seed: int = pydantic.Field(
        default=42, ge=0, description="Root of the per-path seed sequence"
    )
    burn_in_fraction: float = pydantic.Field(
        default=0.5,
        ge=0.0,
        le=0.5,
        description="Leading fraction of the horizon left out of slope fits",
    )
    n_batches: int = pydantic.Field(
        default=20, ge=10, description="Path batches for confidence intervals"
    )
    n_records: int = pydantic.Field(
        default=200, ge=10, description="Recorded time points"
    )
    chunk_steps: int = pydantic.Field(
        default=1000, ge=1, description="Steps of noise drawn per path at once"
    )
    workers: int = pydantic.Field(
        default=1, ge=1, description="Threads simulating path blocks"
    )

    @pydantic.model_validator(mode="after")
    def horizon_covers_steps(self) -> "SdeConfig":
        """t_final >= 100 dt and every batch holds at least two paths"""
        if self.t_final < 100 * self.dt:
            raise ValueError(
                f"t_final={self.t_final} is shorter than 100 steps of "
                f"dt={self.dt}"
            )
        if self.n_batches * 2 > self.n_paths:
            raise ValueError(
                f"{self.n_paths} paths cannot fill {self.n_batches} batches"
            )
        return self

    @property
    def steps_per_record(self) -> int:
        """Euler steps between two recorded time points"""
        return max(1, round(self.t_final / self.dt / self.n_records))

    @property
    def record_times(self) -> np.ndarray:
        """Times at which positions are recorded, starting at 0"""
        return np.arange(self.n_records + 1) * self.steps_per_record * self.dt


class SdeEstimate(pydantic.BaseModel):
    """Slopes of the ensemble mean and variance with 95% half-widths"""

    V_hat: float
    V_ci: float = pydantic.Field(description="95% half-width of V_hat")
    Deff_hat: float
    Deff_ci: float = pydantic.Field(description="95% half-width of Deff_hat")
    n_paths: int
    t_final: float
    dt: float
    seed: int
    stability_warning: bool = pydantic.Field(
        default=False, description="dt * max |phi''| exceeded 0.5"
    )

    def V_covers(self, value: float) -> bool:
        """Whether the velocity interval contains value"""
        return abs(value - self.V_hat) <= self.V_ci

    def Deff_covers(self, value: float) -> bool:
        """Whether the diffusion interval contains value"""
        return abs(value - self.Deff_hat) <= self.Deff_ci


def _inverse_cdf(u0: CellGrid, uniforms: np.ndarray) -> np.ndarray:
    """Positions in [0, 1) whose piecewise-linear CDF matches u0"""
    density = u0.values
    if u0.scheme is Scheme.SPECTRAL:
        knots = np.append(u0.x, 1.0)
        knot_density = np.append(density, density[0])
    else:
        edge = 0.5 * (density[0] + density[-1])
        knots = np.concatenate(([0.0], u0.x, [1.0]))
        knot_density = np.concatenate(([edge], density, [edge]))
    segments = 0.5 * (knot_density[1:] + knot_density[:-1]) * np.diff(knots)
    cdf = np.concatenate(([0.0], np.cumsum(segments)))
    cdf /= cdf[-1]
    positions = np.interp(uniforms, cdf, knots)
    return np.where(positions >= 1.0, 0.0, positions)


def sample_from_u0(
    u0: CellGrid, count: int, seed: Optional[int] = None
) -> np.ndarray:
    """count inverse-CDF samples of the density u0 on [0, 1)"""
    if count == 0:
        return np.empty(0)
    rng = np.random.Generator(np.random.PCG64(seed))
    return _inverse_cdf(u0, rng.random(count))


def _path_generators(seed: int, count: int) -> list[np.random.Generator]:
    return [
        np.random.Generator(np.random.PCG64(child))
        for child in np.random.SeedSequence(seed).spawn(count)
    ]


def check_drift(phi: PeriodicPotential) -> None:
    """Raise unless -phi' exists almost everywhere"""
    if not phi.has_derivative:
        raise DriftUndefinedError(
            f"{phi.kind.value} potential has no derivative; "
            "the Langevin drift is undefined"
        )


def stability_number(phi: PeriodicPotential, dt: float) -> float:
    """dt * max |phi''| on a probe grid, 0 when phi'' is unavailable"""
    probes = np.arange(STABILITY_PROBES) / STABILITY_PROBES
    try:
        curvature = np.asarray(phi.second_derivative(probes, strict=False))
    except NonDifferentiableError:
        return 0.0
    return dt * float(np.max(np.abs(curvature)))


class _Block:
    """A contiguous range of paths simulated together"""

    def __init__(
        self,
        sys: DimensionlessSystem,
        cfg: SdeConfig,
        generators: list[np.random.Generator],
        u0: CellGrid,
    ):
        self.sys = sys
        self.cfg = cfg
        self.generators = generators
        self.u0 = u0

    def _noise(self, steps: int) -> np.ndarray:
        return np.stack(
            [rng.standard_normal(steps) for rng in self.generators]
        )

    def run(self) -> np.ndarray:
        """Unwrapped positions, shape (paths, n_records + 1)"""
        cfg = self.cfg
        phi, f, dt = self.sys.phi, self.sys.f, cfg.dt
        amplitude = math.sqrt(2.0 * dt)

        starts = np.array([rng.random() for rng in self.generators])
        positions = _inverse_cdf(self.u0, starts)
        records = np.empty((positions.size, cfg.n_records + 1))
        records[:, 0] = positions

        total = cfg.steps_per_record * cfg.n_records
        noise = np.empty((positions.size, 0))
        cursor = 0
        for step in range(total):
            if cursor == noise.shape[1]:
                noise = self._noise(min(cfg.chunk_steps, total - step))
                cursor = 0
            drift = f - np.asarray(phi.derivative(positions, strict=False))
            positions = positions + drift * dt + amplitude * noise[:, cursor]
            cursor += 1
            if (step + 1) % cfg.steps_per_record == 0:
                if not np.all(np.isfinite(positions)):
                    raise BlowUpError(step + 1)
                records[:, (step + 1) // cfg.steps_per_record] = positions
        return records


def simulate_paths(
    sys: DimensionlessSystem,
    cfg: SdeConfig,
    quad_cfg: Optional[QuadratureConfig] = None,
) -> np.ndarray:
    """Recorded positions of every path, shape (n_paths, n_records + 1)"""
    check_drift(sys.phi)
    u0 = compute_u0(sys, quad_cfg)
    generators = _path_generators(cfg.seed, cfg.n_paths)
    block_size = math.ceil(cfg.n_paths / cfg.workers)
    blocks = [
        _Block(sys, cfg, generators[start : start + block_size], u0)
        for start in range(0, cfg.n_paths, block_size)
    ]
    outcomes = run_ordered(
        _Block.run,
        blocks,
        num_workers=cfg.workers,
        prefix=lambda block: f"f={block.sys.f:g} sde",
    )
    for outcome in outcomes:
        if not outcome.ok:
            assert outcome.error is not None
            raise outcome.error
    return np.concatenate([outcome.result for outcome in outcomes], axis=0)


def _slope(times: np.ndarray, values: np.ndarray) -> float:
    return float(np.polyfit(times, values, 1)[0])


def _ensemble_slopes(
    times: np.ndarray, positions: np.ndarray
) -> tuple[float, float]:
    mean = np.mean(positions, axis=0)
    variance = np.var(positions, axis=0, ddof=1)
    return _slope(times, mean), 0.5 * _slope(times, variance)


def estimate_transport(
    positions: np.ndarray, cfg: SdeConfig
) -> tuple[float, float, float, float]:
    """(V_hat, V_ci, Deff_hat, Deff_ci) from recorded positions"""
    times = cfg.record_times
    window = times >= cfg.burn_in_fraction * times[-1]
    if np.count_nonzero(window) < MIN_WINDOW_RECORDS:
        raise InsufficientHistoryError(
            f"only {np.count_nonzero(window)} records in the slope window"
        )
    times, positions = times[window], positions[:, window]

    V_hat, Deff_hat = _ensemble_slopes(times, positions)
    batch_slopes = np.array(
        [
            _ensemble_slopes(times, batch)
            for batch in np.array_split(positions, cfg.n_batches, axis=0)
        ]
    )
    quantile = stats.t.ppf(0.5 * (1.0 + CONFIDENCE), cfg.n_batches - 1)
    spread = np.std(batch_slopes, axis=0, ddof=1) / math.sqrt(cfg.n_batches)
    V_ci, Deff_ci = (float(quantile * s) for s in spread)
    return V_hat, V_ci, Deff_hat, Deff_ci


def simulate_ensemble(
    sys: DimensionlessSystem,
    cfg: Optional[SdeConfig] = None,
    quad_cfg: Optional[QuadratureConfig] = None,
) -> SdeEstimate:
    """Estimate V and D_eff with batch-means confidence intervals"""
    cfg = cfg or SdeConfig()
    logger = get_thread_logger(with_prefix=True)
    check_drift(sys.phi)

    stability = stability_number(sys.phi, cfg.dt)
    if stability > STABILITY_LIMIT:
        logger.warning(
            "dt * max|phi''| = %.3f exceeds %.1f; Euler-Maruyama may be "
            "inaccurate",
            stability,
            STABILITY_LIMIT,
        )

    positions = simulate_paths(sys, cfg, quad_cfg)
    V_hat, V_ci, Deff_hat, Deff_ci = estimate_transport(positions, cfg)
    logger.info(
        "sde: V=%.6g +- %.2g, D_eff=%.6g +- %.2g",
        V_hat,
        V_ci,
        Deff_hat,
        Deff_ci,
    )
    return SdeEstimate(
        V_hat=V_hat,
        V_ci=V_ci,
        Deff_hat=Deff_hat,
        Deff_ci=Deff_ci,
        n_paths=cfg.n_paths,
        t_final=float(cfg.record_times[-1]),
        dt=cfg.dt,
        seed=cfg.seed,
        stability_warning=stability > STABILITY_LIMIT,
    )
