import math

import pytest

from test.utils import bessel_i0, free_particle, loglog_slope, system
from washboard import asymptotics
from washboard.asymptotics import (
    Regime,
    SmallForceCoefficients,
    _refine_minimum,
    find_min_diffusion,
    large_f_expansion,
    small_f_coefficients,
    small_f_expansion,
)
from washboard.exception import (
    AsymptoteInapplicableError,
    DomainError,
    InternalConsistencyError,
)
from washboard.potential import (
    CosinePotential,
    PiecewiseConstantPotential,
    SawtoothPotential,
)
from washboard.transport import compute_diffusion

G_COSINE = 2 * math.pi**2


def test_free_coefficients():
    coefficients = small_f_coefficients(CosinePotential(0.0))
    assert coefficients.a0 == pytest.approx(1.0, rel=1e-14)
    assert coefficients.a1 == pytest.approx(0.5, rel=1e-14)
    assert coefficients.is_symmetric


def test_cosine_coefficients():
    """a0 = I0(A)^2 and a1 = a0/2 for an even potential"""
    coefficients = small_f_coefficients(CosinePotential(1.0))
    assert coefficients.a0 == pytest.approx(bessel_i0(1.0) ** 2, rel=1e-12)
    assert coefficients.ratio == pytest.approx(0.5, abs=1e-9)
    assert coefficients.is_symmetric


@pytest.mark.parametrize(
    "phi",
    [CosinePotential(2.5), SawtoothPotential(2.0, 0.5)],
    ids=["cosine", "symmetric-sawtooth"],
)
def test_even_potentials_have_half_ratio(phi):
    coefficients = small_f_coefficients(phi)
    assert coefficients.a1 == pytest.approx(
        coefficients.a0 - coefficients.a1, abs=1e-9 * coefficients.a0
    )


def test_asymmetric_sawtooth_ratio():
    coefficients = small_f_coefficients(SawtoothPotential(2.0, 0.25))
    assert abs(coefficients.ratio - 0.5) > 1e-3
    assert 0.0 < coefficients.ratio < 1.0
    assert not coefficients.is_symmetric


@pytest.mark.parametrize("f", [-0.3, 0.01, 2.0])
def test_free_small_f_expansion(f):
    estimate = small_f_expansion(small_f_coefficients(CosinePotential(0.0)), f)
    assert estimate.regime is Regime.SMALL_F
    assert estimate.V == pytest.approx(f, rel=1e-12)
    assert estimate.D_eff == pytest.approx(1.0, rel=1e-12)
    assert estimate.zeta_eff == pytest.approx(1.0, rel=1e-12)
    assert estimate.einstein_product == 1.0


def test_even_small_f_expansion_has_no_linear_term():
    coefficients = small_f_coefficients(CosinePotential(1.0))
    estimate = small_f_expansion(coefficients, 0.1)
    assert estimate.D_eff == pytest.approx(1.0 / coefficients.a0, rel=1e-9)
    assert estimate.zeta_eff == pytest.approx(coefficients.a0, rel=1e-9)


def test_asymmetric_linear_term_direction():
    """The sign of D_eff - 1/a0 follows the linear term on both sides"""
    phi = SawtoothPotential(2.0, 0.25)
    coefficients = small_f_coefficients(phi)
    inverse_a0 = 1.0 / coefficients.a0
    for f in (-0.02, 0.02):
        expected = small_f_expansion(coefficients, f).D_eff - inverse_a0
        full = compute_diffusion(system(phi, f)).D_eff - inverse_a0
        assert math.copysign(1.0, full) == math.copysign(1.0, expected)


def test_small_f_order_of_accuracy():
    """D_eff_full - D_eff_smallf = O(f^2)"""
    phi = CosinePotential(1.0)
    coefficients = small_f_coefficients(phi)
    forces = [0.02, 0.04, 0.08]
    errors = [
        compute_diffusion(system(phi, f)).D_eff
        - small_f_expansion(coefficients, f).D_eff
        for f in forces
    ]
    assert loglog_slope(forces, errors) == pytest.approx(2.0, abs=0.15)


def test_large_f_examples():
    estimate = large_f_expansion(CosinePotential(1.0), 20.0)
    assert estimate.regime is Regime.LARGE_F
    assert estimate.D_eff == pytest.approx(1 + 3 * G_COSINE / 400, rel=1e-12)
    assert estimate.zeta_eff == pytest.approx(1 + G_COSINE / 400, rel=1e-12)
    assert estimate.D_eff == pytest.approx(1.14804, abs=1e-5)
    assert estimate.zeta_eff == pytest.approx(1.04935, abs=1e-5)
    assert estimate.V == pytest.approx(20.0 * (1 - G_COSINE / 400), rel=1e-12)
    assert estimate.einstein_product == pytest.approx(
        1 + 4 * G_COSINE / 400, rel=1e-12
    )

    free = large_f_expansion(CosinePotential(0.0), 10.0)
    assert (free.V, free.D_eff, free.zeta_eff) == (10.0, 1.0, 1.0)


@pytest.mark.parametrize("f", [0.0, -5.0])
def test_large_f_needs_positive_force(f):
    with pytest.raises(AsymptoteInapplicableError):
        large_f_expansion(CosinePotential(1.0), f)


def test_large_f_needs_smooth_potential():
    with pytest.raises(AsymptoteInapplicableError):
        large_f_expansion(PiecewiseConstantPotential(1.0), 50.0)


def test_large_f_order_of_accuracy():
    """For an even potential the remainder after 3G/f^2 is O(1/f^4)"""
    phi = CosinePotential(1.0)
    forces = [40.0, 80.0, 160.0]
    errors = [
        compute_diffusion(system(phi, f)).D_eff
        - large_f_expansion(phi, f).D_eff
        for f in forces
    ]
    assert loglog_slope(forces, errors) == pytest.approx(-4.0, abs=0.3)
    # next coefficient of the expansion for A cos(2 pi x) with A = 1
    assert errors[-1] * forces[-1] ** 4 == pytest.approx(
        -32 * math.pi**4, rel=0.05
    )


@pytest.mark.parametrize("f", [20.0, 50.0])
def test_strong_drive_enhances_drag_and_diffusion(f):
    coefficients = compute_diffusion(system(CosinePotential(1.0), f))
    assert coefficients.zeta_eff > 1.0
    assert coefficients.D_eff > 1.0


def test_min_diffusion_of_even_potential():
    search = find_min_diffusion(
        CosinePotential(1.0), (-0.5, 0.5), num_workers=4
    )
    assert abs(search.f_star) < 1e-3
    assert not search.flagged
    assert search.D_min == pytest.approx(1.0 / bessel_i0(1.0) ** 2, rel=1e-8)
    assert len(search.forces) == 33
    assert search.coefficients.is_symmetric


def test_min_diffusion_of_free_particle_is_flat():
    search = find_min_diffusion(CosinePotential(0.0), (-1.0, 1.0), scan_points=9)
    assert search.flat
    assert search.flagged
    assert search.D_min == pytest.approx(1.0, rel=1e-12)


def test_min_diffusion_at_bracket_edge():
    """D_eff of cosine(A=1) grows away from f = 0"""
    search = find_min_diffusion(CosinePotential(1.0), (0.5, 1.5), scan_points=5)
    assert search.at_boundary
    assert search.f_star == 0.5


def test_min_diffusion_bracket_validation():
    with pytest.raises(DomainError):
        find_min_diffusion(CosinePotential(1.0), (1.0, -1.0))
    with pytest.raises(DomainError):
        find_min_diffusion(CosinePotential(1.0), (-1.0, 1.0), scan_points=2)


def test_minimum_search_is_json_serializable():
    search = find_min_diffusion(
        free_particle(0.0).phi, (-1.0, 1.0), scan_points=5
    )
    dumped = search.model_dump(mode="json")
    assert dumped["flat"] is True
    assert dumped["coefficients"]["ratio"] == pytest.approx(0.5)


def test_refinement_falls_back_on_tied_scan_values():
    """(0.1, 0.5, 0.9) is no golden bracket for (f - 0.3)^2"""
    x, fun = _refine_minimum(lambda f: (f - 0.3) ** 2, 0.1, 0.5, 0.9)
    assert x == pytest.approx(0.3, abs=1e-4)
    assert fun == pytest.approx(0.0, abs=1e-8)


def test_asymmetric_minimum_above_inverse_a0_is_rejected(monkeypatch):
    phi = SawtoothPotential(2.0, 0.25)
    actual = small_f_coefficients(phi)
    inflated = SmallForceCoefficients(
        a0=1e3 * actual.a0,
        a1=1e3 * actual.a1,
        quadrature_n=actual.quadrature_n,
        achieved_rel_err=actual.achieved_rel_err,
    )
    monkeypatch.setattr(
        asymptotics, "small_f_coefficients", lambda *_: inflated
    )
    with pytest.raises(InternalConsistencyError):
        find_min_diffusion(phi, (-2.0, 2.0), num_workers=4)

    search = find_min_diffusion(phi, (0.5, 2.0), scan_points=5)
    assert not search.below_inverse_a0
