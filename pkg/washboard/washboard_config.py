"""This module contains the package-wide configuration schema for washboard.
"""

import os

import pydantic
import yaml

WASHBOARD_CONFIG_PATH = (
    os.environ.get("WASHBOARD_CONFIG_PATH") or "washboard.yaml"
)


class QuadratureDefaults(pydantic.BaseModel):
    """Default resolution of the transport quadrature"""

    n_grid: int = pydantic.Field(
        default=256, description="Points per unit period"
    )
    rel_tol: float = pydantic.Field(
        default=1e-10, description="Relative change that stops refinement"
    )
    max_refinements: int = pydantic.Field(
        default=6, description="Maximum number of grid doublings"
    )


class SdeDefaults(pydantic.BaseModel):
    """Default Euler-Maruyama ensemble"""

    dt: float = pydantic.Field(default=1e-3, description="Time step")
    t_final: float = pydantic.Field(default=50.0, description="Horizon")
    n_paths: int = pydantic.Field(default=2000, description="Ensemble size")
    burn_in_fraction: float = pydantic.Field(
        default=0.5,
        description="Leading fraction of the horizon left out of slope fits",
    )
    n_batches: int = pydantic.Field(
        default=20, description="Path batches for the confidence intervals"
    )


class FpeDefaults(pydantic.BaseModel):
    """Default moment-hierarchy oracle"""

    n: int = pydantic.Field(default=256, description="Cells per period")
    t_final: float = pydantic.Field(default=20.0, description="Horizon")
    slope_window: float = pydantic.Field(
        default=0.5, description="Trailing fraction of the horizon fitted"
    )


class RegimeConfig(pydantic.BaseModel):
    """Force thresholds inside which the asymptotic expansions are compared"""

    small_f_max: float = pydantic.Field(
        default=0.1, description="|f| at or below which small_f applies"
    )
    large_f_min: float = pydantic.Field(
        default=40.0, description="f at or above which large_f applies"
    )


class ToleranceConfig(pydantic.BaseModel):
    """Relative tolerances of the cross-engine checks"""

    small_f: float = pydantic.Field(
        default=0.01, description="small_f against formula"
    )
    large_f: float = pydantic.Field(
        default=0.01, description="large_f against formula"
    )
    fpe_velocity: float = pydantic.Field(
        default=0.01, description="FPE velocity against formula"
    )
    fpe_diffusion: float = pydantic.Field(
        default=0.02, description="FPE diffusion against formula"
    )


class WashboardConfig(pydantic.BaseModel):
    """Configuration for washboard"""

    quad: QuadratureDefaults = pydantic.Field(
        default_factory=QuadratureDefaults,
        description="Defaults of the transport quadrature",
    )
    sde: SdeDefaults = pydantic.Field(
        default_factory=SdeDefaults,
        description="Defaults of the stochastic oracle",
    )
    fpe: FpeDefaults = pydantic.Field(
        default_factory=FpeDefaults,
        description="Defaults of the Fokker-Planck oracle",
    )
    regimes: RegimeConfig = pydantic.Field(
        default_factory=RegimeConfig,
        description="Validity regimes of the asymptotic expansions",
    )
    tolerances: ToleranceConfig = pydantic.Field(
        default_factory=ToleranceConfig,
        description="Tolerances used by the validation report",
    )
    seed: int = pydantic.Field(
        default=42, description="Default seed of the stochastic oracle"
    )


def load_config(path: str = WASHBOARD_CONFIG_PATH) -> WashboardConfig:
    """Load configuration from a yaml file"""

    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as f:
            config = yaml.safe_load(f) or {}
            return WashboardConfig.model_validate(config)
    return WashboardConfig()


WASHBOARD_CONFIG: WashboardConfig = load_config()
