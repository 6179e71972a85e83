"""Digital twin of a temperature-balancing thermopile flow sensor.

Subsystems:

- ``thermal``   axisymmetric finite-volume model of the suspended microchannel
- ``balancing`` heater power split that nulls the thermopile, calibration curves
- ``plant``     emulated electro-thermal hardware with drift and noise
- ``control``   closed-loop PI power-feedback simulation
- ``analysis``  Welch spectra, spectral slopes/flatness, moment statistics
- ``cli``       batch experiment front-end emitting CSV artifacts
"""

from .analysis import (
    Spectrum,
    StatSummary,
    loglog_slope,
    spectral_flatness,
    stat_summary,
    welch_psd,
)
from .balancing import (
    BalanceResult,
    CalibrationCurve,
    SensitivityFit,
    balance_power,
    balance_power_bisection,
    calibration_curve,
    fit_sensitivity,
    invert_flow,
)
from .config import RunConfig, load_config
from .control import (
    FlowSchedule,
    PIController,
    TimeSeries,
    auto_gains,
    available_kernels,
    open_loop_run,
    pi_update,
    run_closed_loop,
)
from .errors import (
    ConfigError,
    MeshError,
    ModelError,
    RatioRangeError,
    SolverError,
    UnbalanceableError,
)
from .plant import (
    FlickerProcess,
    HeaterState,
    InfluenceTable,
    Plant,
    ThermopileModel,
    influence_table,
    smu_apply_power,
    step_processes,
    thermopile_emf,
)
from .thermal import (
    GridSpec,
    MaterialSet,
    Mesh,
    SensorGeometry,
    SensorModel,
    TemperatureField,
    axial_profile,
    build_mesh,
    delta_t_thermopile,
    mean_velocity,
    solve_steady,
)

__version__ = "0.1.0"

__all__ = [
    "Spectrum",
    "StatSummary",
    "loglog_slope",
    "spectral_flatness",
    "stat_summary",
    "welch_psd",
    "BalanceResult",
    "CalibrationCurve",
    "SensitivityFit",
    "balance_power",
    "balance_power_bisection",
    "calibration_curve",
    "fit_sensitivity",
    "invert_flow",
    "RunConfig",
    "load_config",
    "FlowSchedule",
    "PIController",
    "TimeSeries",
    "auto_gains",
    "available_kernels",
    "open_loop_run",
    "pi_update",
    "run_closed_loop",
    "ConfigError",
    "MeshError",
    "ModelError",
    "RatioRangeError",
    "SolverError",
    "UnbalanceableError",
    "FlickerProcess",
    "HeaterState",
    "InfluenceTable",
    "Plant",
    "ThermopileModel",
    "influence_table",
    "smu_apply_power",
    "step_processes",
    "thermopile_emf",
    "GridSpec",
    "MaterialSet",
    "Mesh",
    "SensorGeometry",
    "SensorModel",
    "TemperatureField",
    "axial_profile",
    "build_mesh",
    "delta_t_thermopile",
    "mean_velocity",
    "solve_steady",
    "__version__",
]
