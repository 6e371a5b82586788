import math

import numpy as np
import pydantic
import pytest
from scipy import stats

from test.utils import free_particle, system
from washboard.exception import DriftUndefinedError
from washboard.oracle.sde import (
    SdeConfig,
    check_drift,
    estimate_transport,
    sample_from_u0,
    simulate_ensemble,
    simulate_paths,
    stability_number,
)
from washboard.potential import (
    CosinePotential,
    PiecewiseConstantPotential,
    SawtoothPotential,
)
from washboard.quad import CellGrid, periodic_integral
from washboard.transport import compute_u0

SMALL = {
    "dt": 1e-2,
    "t_final": 20.0,
    "n_paths": 200,
    "n_batches": 10,
    "n_records": 40,
}


@pytest.mark.parametrize(
    "overrides",
    [
        {"n_paths": 99},
        {"dt": 0.0},
        {"dt": 0.1, "t_final": 5.0},
        {"n_batches": 9},
        {"burn_in_fraction": 0.6},
        {"n_paths": 100, "n_batches": 60},
    ],
)
def test_config_validation(overrides):
    with pytest.raises(pydantic.ValidationError):
        SdeConfig(**overrides)


def test_record_times():
    cfg = SdeConfig(dt=0.01, t_final=10.0, n_records=50)
    assert cfg.steps_per_record == 20
    assert cfg.record_times[0] == 0.0
    assert cfg.record_times[-1] == pytest.approx(10.0)
    assert cfg.record_times.size == 51


def test_sample_count_zero():
    assert sample_from_u0(CellGrid(np.ones(16)), 0, seed=1).size == 0


def test_uniform_samples():
    samples = sample_from_u0(CellGrid(np.ones(64)), 2000, seed=3)
    assert np.all((samples >= 0.0) & (samples < 1.0))
    assert stats.kstest(samples, "uniform").pvalue > 1e-3


def test_boltzmann_samples():
    """Sample mean of cos(2 pi X) matches its quadrature value"""
    u0 = compute_u0(system(CosinePotential(1.0), 0.0))
    expected = periodic_integral(u0.like(u0.values * np.cos(2 * np.pi * u0.x)))
    samples = np.cos(2 * np.pi * sample_from_u0(u0, 20000, seed=11))
    standard_error = np.std(samples, ddof=1) / math.sqrt(samples.size)
    assert abs(np.mean(samples) - expected) < 3 * standard_error


def test_samples_are_seeded():
    u0 = compute_u0(system(CosinePotential(1.0), 1.0))
    np.testing.assert_array_equal(
        sample_from_u0(u0, 100, seed=5), sample_from_u0(u0, 100, seed=5)
    )


def test_drift_checks():
    with pytest.raises(DriftUndefinedError):
        check_drift(PiecewiseConstantPotential(1.0))
    with pytest.raises(DriftUndefinedError):
        simulate_ensemble(
            system(PiecewiseConstantPotential(1.0), 1.0), SdeConfig(**SMALL)
        )
    check_drift(SawtoothPotential(1.0, 0.25))


def test_stability_number():
    assert stability_number(CosinePotential(1.0), 0.01) == pytest.approx(
        0.04 * math.pi**2, rel=1e-6
    )
    assert stability_number(SawtoothPotential(1.0, 0.25), 0.01) == 0.0


def test_stability_warning_is_reported():
    cfg = SdeConfig(
        dt=0.02, t_final=4.0, n_paths=100, n_batches=10, n_records=10
    )
    estimate = simulate_ensemble(system(CosinePotential(1.0), 1.0), cfg)
    assert estimate.stability_warning


def test_paths_do_not_depend_on_workers():
    sys = system(CosinePotential(1.0), 1.0)
    serial = simulate_paths(sys, SdeConfig(**SMALL))
    threaded = simulate_paths(sys, SdeConfig(**SMALL, workers=3))
    np.testing.assert_array_equal(serial, threaded)
    assert serial.shape == (200, 41)


def test_estimates_are_seeded():
    sys = system(SawtoothPotential(1.0, 0.25), 0.5)
    first = simulate_ensemble(sys, SdeConfig(**SMALL, seed=9))
    second = simulate_ensemble(sys, SdeConfig(**SMALL, seed=9))
    other = simulate_ensemble(sys, SdeConfig(**SMALL, seed=10))
    assert first == second
    assert first.V_hat != other.V_hat


def test_estimate_transport_on_exact_lines():
    """Mean 3t and variance 1.4t give V = 3 and D_eff = 0.7"""
    cfg = SdeConfig(**SMALL)
    z = np.random.default_rng(0).standard_normal(cfg.n_paths)
    z = (z - z.mean()) / z.std(ddof=1)
    t = cfg.record_times
    positions = 3.0 * t[None, :] + z[:, None] * np.sqrt(1.4 * t)[None, :]
    V_hat, V_ci, Deff_hat, Deff_ci = estimate_transport(positions, cfg)
    assert V_hat == pytest.approx(3.0, rel=1e-10)
    assert Deff_hat == pytest.approx(0.7, rel=1e-10)
    assert V_ci > 0 and Deff_ci > 0


def test_free_particle_estimates():
    """Exact drift and diffusion lie well inside the intervals"""
    cfg = SdeConfig(
        dt=1e-2, t_final=20.0, n_paths=400, n_batches=20, n_records=40, seed=42
    )
    estimate = simulate_ensemble(free_particle(2.0), cfg)
    assert estimate.V_ci > 0 and estimate.Deff_ci > 0
    assert abs(estimate.V_hat - 2.0) <= 2 * estimate.V_ci
    assert abs(estimate.Deff_hat - 1.0) <= 2 * estimate.Deff_ci
    assert not estimate.stability_warning
    assert estimate.t_final == pytest.approx(20.0)


@pytest.mark.parametrize(
    "sys",
    [free_particle(1.0), system(CosinePotential(1.0), 1.0)],
    ids=["free", "cosine"],
)
def test_halving_dt_stays_inside_interval(sys):
    """Same seed and ensemble; the step bias is below the sampling error"""
    coarse = simulate_ensemble(sys, SdeConfig(**{**SMALL, "dt": 2e-2}))
    fine = simulate_ensemble(sys, SdeConfig(**SMALL))
    assert abs(fine.V_hat - coarse.V_hat) < max(coarse.V_ci, fine.V_ci)
