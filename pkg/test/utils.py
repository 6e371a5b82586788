"""Reference values shared by the unit and integration tests"""

from typing import Sequence

import numpy as np

from washboard.nondim import DimensionlessSystem
from washboard.potential import CosinePotential, PeriodicPotential


def bessel_i0(x: float, terms: int = 60) -> float:
    """Modified Bessel function I0 by its power series sum (x/2)^2k / k!^2"""
    quarter = (x / 2.0) ** 2
    term, total = 1.0, 1.0
    for k in range(1, terms):
        term *= quarter / (k * k)
        total += term
    return total


def free_particle(f: float) -> DimensionlessSystem:
    """phi = 0 at force f"""
    return DimensionlessSystem(phi=CosinePotential(0.0), f=f)


def system(phi: PeriodicPotential, f: float) -> DimensionlessSystem:
    """Shorthand for DimensionlessSystem(phi=phi, f=f)"""
    return DimensionlessSystem(phi=phi, f=f)


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log|y| against log x"""
    return float(np.polyfit(np.log(x), np.log(np.abs(y)), 1)[0])
