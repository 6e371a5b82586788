import json
import math

import numpy as np
import pydantic
import pytest

from washboard.exception import (
    AsymptoteInapplicableError,
    DomainError,
    NonDifferentiableError,
)
from washboard.potential import (
    CosinePotential,
    CustomPotential,
    PiecewiseConstantPotential,
    SawtoothPotential,
    TabulatedPotential,
    amplitude,
    eval_derivative,
    evaluate,
    grad_squared_integral,
    parse_potential_spec,
    potential_from_spec,
    wrap,
)

FAMILIES = [
    CosinePotential(1.0),
    PiecewiseConstantPotential(2.0),
    SawtoothPotential(1.0, 0.25),
    TabulatedPotential(np.cos(2 * np.pi * np.arange(32) / 32)),
    TabulatedPotential([0.0, 1.0, 3.0, 1.0], breakpoints=[0.5]),
]


@pytest.mark.parametrize(
    "phi,x,expected",
    [
        (CosinePotential(1.0), 0.0, 1.0),
        (PiecewiseConstantPotential(2.0), 0.75, 2.0),
        (PiecewiseConstantPotential(2.0), 0.25, -2.0),
        (CosinePotential(1.0), 3.25, 0.0),
        (SawtoothPotential(1.0, 0.25), 0.25, 1.0),
        (SawtoothPotential(1.0, 0.25), -0.5, 2.0 / 3.0),
    ],
)
def test_evaluate(phi, x, expected):
    """Wrapped evaluation of the built-in families"""
    assert evaluate(phi, x) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("phi", FAMILIES, ids=lambda phi: phi.kind.value)
def test_wrapping_is_exact(phi):
    """Shifted points evaluate like their wrapped images"""
    rng = np.random.default_rng(7)
    x = rng.uniform(-10.0, 10.0, 1000)
    shifted = phi.value(x + 1.0)
    assert np.array_equal(shifted, phi.value(wrap(x + 1.0)))
    np.testing.assert_allclose(shifted, phi.value(x), atol=1e-12)


def test_wrap_large_arguments():
    """Wrapping stays in [0, 1) far from the origin"""
    wrapped = wrap([1e12 + 0.25, -1e-20, -3.75])
    assert np.all((wrapped >= 0.0) & (wrapped < 1.0))
    assert wrapped[1] == 0.0
    assert wrapped[2] == 0.25


@pytest.mark.parametrize(
    "phi", [CosinePotential(1.3), SawtoothPotential(2.0, 0.5)]
)
def test_even_potentials(phi):
    """Symmetric families satisfy phi(x) = phi(-x)"""
    x = np.linspace(0.0, 1.0, 257)
    np.testing.assert_allclose(phi.value(x), phi.value(-x), atol=1e-14)


def test_eval_derivative():
    """Analytic derivatives and breakpoint errors"""
    assert eval_derivative(CosinePotential(1.0), 0.25) == pytest.approx(
        -2 * math.pi
    )
    assert eval_derivative(SawtoothPotential(1.0, 0.25), 0.1) == pytest.approx(
        4.0
    )
    assert eval_derivative(SawtoothPotential(1.0, 0.25), 0.6) == pytest.approx(
        -4.0 / 3.0
    )
    with pytest.raises(NonDifferentiableError):
        eval_derivative(PiecewiseConstantPotential(1.0), 0.1)
    with pytest.raises(NonDifferentiableError):
        eval_derivative(SawtoothPotential(1.0, 0.25), 1.25)


def test_right_sided_slope_at_breakpoint():
    """strict=False gives the slope of the piece starting at the breakpoint"""
    phi = SawtoothPotential(1.0, 0.25)
    assert phi.derivative(0.25, strict=False) == pytest.approx(-4.0 / 3.0)
    assert phi.derivative(0.0, strict=False) == pytest.approx(4.0)


def test_tabulated_spectral_derivative():
    """Smooth tables differentiate like the function they sample"""
    size = 128
    x = np.arange(size) / size
    phi = TabulatedPotential(0.5 * np.cos(2 * np.pi * x) + 0.2 * np.sin(6 * np.pi * x))
    expected = -np.pi * np.sin(2 * np.pi * x) + 1.2 * np.pi * np.cos(
        6 * np.pi * x
    )
    np.testing.assert_allclose(phi.derivative(x), expected, atol=1e-8)
    off_grid = np.array([0.123, 0.777])
    np.testing.assert_allclose(
        phi.value(off_grid),
        0.5 * np.cos(2 * np.pi * off_grid) + 0.2 * np.sin(6 * np.pi * off_grid),
        atol=1e-12,
    )


def test_tabulated_with_breakpoints_interpolates_linearly():
    """Declared breakpoints switch to piecewise-linear tables"""
    phi = TabulatedPotential([0.0, 1.0, 3.0, 1.0], breakpoints=[0.5])
    assert phi.value(0.125) == pytest.approx(0.5)
    assert phi.value(0.875) == pytest.approx(0.5)
    assert phi.derivative(0.3) == pytest.approx(8.0)
    assert phi.breakpoints == (0.5,)


@pytest.mark.parametrize(
    "phi,expected",
    [
        (CosinePotential(1.0), 2 * math.pi**2),
        (CosinePotential(0.0), 0.0),
        (
            TabulatedPotential(0.5 * np.cos(2 * np.pi * np.arange(256) / 256)),
            2 * math.pi**2 * 0.25,
        ),
    ],
)
def test_grad_squared_integral(phi, expected):
    """int (phi')^2 of smooth potentials"""
    assert grad_squared_integral(phi) == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize(
    "phi", [PiecewiseConstantPotential(1.0), SawtoothPotential(1.0, 0.3)]
)
def test_grad_squared_integral_needs_smooth(phi):
    """Breakpoints make the large-force expansion inapplicable"""
    with pytest.raises(AsymptoteInapplicableError):
        grad_squared_integral(phi)


def test_sawtooth_alpha_range():
    """alpha must lie strictly inside (0, 1)"""
    with pytest.raises(DomainError):
        SawtoothPotential(1.0, 1.0)


def test_custom_second_derivative_missing():
    """Custom potentials without phi'' report it"""
    phi = CustomPotential(
        lambda x: np.sin(2 * np.pi * x),
        derivative=lambda x: 2 * np.pi * np.cos(2 * np.pi * x),
    )
    assert phi.has_derivative
    with pytest.raises(NonDifferentiableError):
        phi.second_derivative(0.3)


def test_amplitude():
    """max |phi| on the probe grid"""
    assert amplitude(CosinePotential(-2.5)) == pytest.approx(2.5)
    assert amplitude(SawtoothPotential(3.0, 0.5)) == pytest.approx(3.0)


@pytest.mark.parametrize(
    "spec,kind",
    [
        ({"kind": "cosine", "A": 1.0}, "cosine"),
        ({"kind": "piecewise_const", "A": 2.0}, "piecewise_const"),
        ({"kind": "sawtooth", "A": 1.0, "alpha": 0.25}, "sawtooth"),
        ({"kind": "tabulated", "samples": [0, 1, 0, -1]}, "tabulated"),
    ],
)
def test_potential_from_spec(spec, kind):
    """Every family is reachable from its JSON spec and back"""
    phi = potential_from_spec(json.dumps(spec))
    assert phi.kind.value == kind
    assert potential_from_spec(phi.to_spec()).to_spec() == phi.to_spec()


def test_potential_spec_from_file(tmp_path):
    """Specs may be stored in a file"""
    path = tmp_path / "potential.json"
    path.write_text('{"kind": "cosine", "A": 2.0}', encoding="utf-8")
    assert potential_from_spec(str(path)).value(0.0) == pytest.approx(2.0)


@pytest.mark.parametrize(
    "spec",
    [
        {"kind": "cosine", "A": 1.0, "B": 2.0},
        {"kind": "sawtooth", "A": 1.0, "alpha": 1.5},
        {"kind": "tabulated", "samples": [1.0, 2.0]},
        {"kind": "quartic", "A": 1.0},
    ],
)
def test_invalid_specs(spec):
    """Unknown keys, kinds and out-of-range values are rejected"""
    with pytest.raises(pydantic.ValidationError):
        parse_potential_spec(spec)
