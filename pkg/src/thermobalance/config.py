"""Key = value configuration handling.

One flat namespace of typed keys covers geometry, materials, grid, plant,
noise, controller and experiment parameters.  `#` starts a comment, unknown
keys are an error, and every run emits a fully resolved snapshot that
reproduces the run byte for byte.

Physics keys are SI.  Experiment-level keys carry bench units in their
names (mW, ul_min), matching the CLI boundary.
"""

import math
from pathlib import Path

import numpy as np

from .control import PIController, auto_gains
from .errors import ConfigError
from .plant import FlickerProcess, HeaterState, InfluenceTable, Plant, ThermopileModel, influence_table
from .thermal import GridSpec, MaterialSet, SensorGeometry, SensorModel
from .units import mw_to_w


def _parse_float(text):
    return float(text)


def _parse_int(text):
    value = int(text)
    return value


def _parse_bool(text):
    low = text.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_str(text):
    return text


def _parse_float_list(text):
    if not text:
        return ()
    return tuple(float(part) for part in text.split(","))


def _parse_float_or_auto(text):
    if text.lower() == "auto":
        return None
    return float(text)


def _dump(value):
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    return str(value)


# key -> (parser, default)
SCHEMA = {
    # geometry (m unless noted)
    "channel_inner_radius": (_parse_float, 10e-6),
    "wall_thickness": (_parse_float, 1.7e-6),
    "channel_count": (_parse_int, 5),
    "cavity_length": (_parse_float, 1.6e-3),
    "ambient_radius": (_parse_float, 450e-6),
    "heater_up_center": (_parse_float, 0.5e-3),
    "heater_down_center": (_parse_float, 1.1e-3),
    "heater_width": (_parse_float, 100e-6),
    "tc_junction_up": (_parse_float, 0.6e-3),
    "tc_junction_down": (_parse_float, 1.0e-3),
    "tc_band_width": (_parse_float, 20e-6),
    "junction_count": (_parse_int, 26),
    "symmetric": (_parse_bool, True),
    # materials (SI)
    "k_fluid": (_parse_float, 0.60),
    "k_wall": (_parse_float, 3.0),
    "k_air": (_parse_float, 0.026),
    "rho_cp_fluid": (_parse_float, 4.18e6),
    "wall_axial_conductance_boost": (_parse_float, 2.0),
    # grid
    "n_axial": (_parse_int, 320),
    "radial_cells_fluid": (_parse_int, 4),
    "radial_cells_wall": (_parse_int, 2),
    "radial_cells_air": (_parse_int, 12),
    "radial_grading": (_parse_float, 1.35),
    "velocity_profile": (_parse_str, "plug"),
    # plant
    "r_up_ohm": (_parse_float, 1000.0),
    "r_down_ohm": (_parse_float, 996.0),
    "tcr_per_k": (_parse_float, 3.9e-3),
    "thermal_tau_s": (_parse_float, 0.05),
    "epsilon_asym": (_parse_float, 0.0),
    "ambient_coupling_k_per_k": (_parse_float, 1.5e-3),
    "seebeck_per_junction_v_per_k": (_parse_float, 1e-4),
    "emf_cubic_per_k": (_parse_float, 0.0),
    # noise
    "voltmeter_noise_v": (_parse_float, 3e-8),
    "smu_meas_noise": (_parse_float, 1e-5),
    "flicker_amplitude": (_parse_float, 5e-5),
    "flicker_octaves": (_parse_int, 16),
    "ambient_amplitude_k": (_parse_float, 0.02),
    # plant influence tabulation
    "influence_q_max_ul_min": (_parse_float, 2.0),
    "influence_q_step_ul_min": (_parse_float, 0.1),
    # controller
    "kp_w_per_v": (_parse_float_or_auto, None),
    "ki_w_per_v_s": (_parse_float_or_auto, None),
    "dp_max_frac": (_parse_float, 1.0),
    "anti_windup": (_parse_bool, True),
    # experiment
    "p_total_mw": (_parse_float, 0.1),
    "f_s_hz": (_parse_float, 2.0),
    "duration_s": (_parse_float, 300.0),
    "seed": (_parse_int, 12345),
    "q_list_ul_min": (
        _parse_float_list,
        tuple(round(0.1 * i, 10) for i in range(16)),  # 0 .. 1.5
    ),
    "q_ul_min": (_parse_float, 0.3),
    "schedule_file": (_parse_str, ""),
    "linear_fit_qmax_ul_min": (_parse_float, 0.5),
    "psd_segment_length": (_parse_int, 2048),
    "psd_overlap": (_parse_float, 0.5),
    "drift_discard_samples": (_parse_int, 64),
}

_POSITIVE_KEYS = (
    "channel_inner_radius",
    "wall_thickness",
    "cavity_length",
    "ambient_radius",
    "heater_width",
    "tc_band_width",
    "k_fluid",
    "k_wall",
    "k_air",
    "rho_cp_fluid",
    "radial_grading",
    "r_up_ohm",
    "r_down_ohm",
    "thermal_tau_s",
    "influence_q_step_ul_min",
    "p_total_mw",
    "f_s_hz",
    "duration_s",
)

_NONNEGATIVE_KEYS = (
    "voltmeter_noise_v",
    "smu_meas_noise",
    "flicker_amplitude",
    "ambient_amplitude_k",
    "seed",
)


def parse_kv_text(text: str, source: str = "<config>") -> dict:
    """Parse `key = value` lines with `#` comments into raw strings."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = (value, lineno)
    return raw


class RunConfig:
    """Typed, fully resolved configuration; attributes mirror the key names."""

    def __init__(self, values: dict):
        unknown = set(values) - set(SCHEMA)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        self._values = {}
        for key, (_, default) in SCHEMA.items():
            self._values[key] = values.get(key, default)
        self._validate()

    def __getattr__(self, key):
        if key == "_values":
            raise AttributeError(key)
        try:
            return self._values[key]
        except KeyError:
            raise AttributeError(key) from None

    def _validate(self):
        v = self._values
        for key in _POSITIVE_KEYS:
            if not (v[key] > 0):
                raise ConfigError(f"{key} must be positive, got {v[key]!r}")
        for key in _NONNEGATIVE_KEYS:
            if v[key] < 0:
                raise ConfigError(f"{key} must be >= 0, got {v[key]!r}")
        if v["velocity_profile"] not in ("plug", "parabolic"):
            raise ConfigError("velocity_profile must be 'plug' or 'parabolic'")
        if not (0.0 < v["dp_max_frac"] <= 1.0):
            raise ConfigError("dp_max_frac must be in (0, 1]")
        if not (0.0 <= v["psd_overlap"] < 1.0):
            raise ConfigError("psd_overlap must be in [0, 1)")
        if v["psd_segment_length"] < 8:
            raise ConfigError("psd_segment_length must be >= 8")
        if v["drift_discard_samples"] < 0:
            raise ConfigError("drift_discard_samples must be >= 0")
        if v["flicker_octaves"] < 1:
            raise ConfigError("flicker_octaves must be >= 1")
        if v["seed"] > 2**64 - 1:
            raise ConfigError("seed must fit in 64 bits")

    def replace(self, **overrides) -> "RunConfig":
        merged = dict(self._values)
        unknown = set(overrides) - set(SCHEMA)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged.update(overrides)
        return RunConfig(merged)

    # ------------------------------------------------------------------
    # object factories

    def geometry(self) -> SensorGeometry:
        v = self._values
        try:
            return SensorGeometry(
                channel_inner_radius=v["channel_inner_radius"],
                wall_thickness=v["wall_thickness"],
                channel_count=v["channel_count"],
                cavity_length=v["cavity_length"],
                ambient_radius=v["ambient_radius"],
                heater_up_center=v["heater_up_center"],
                heater_down_center=v["heater_down_center"],
                heater_width=v["heater_width"],
                tc_junction_up=v["tc_junction_up"],
                tc_junction_down=v["tc_junction_down"],
                tc_band_width=v["tc_band_width"],
                junction_count=v["junction_count"],
                symmetric=v["symmetric"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def materials(self) -> MaterialSet:
        v = self._values
        try:
            return MaterialSet(
                k_fluid=v["k_fluid"],
                k_wall=v["k_wall"],
                k_air=v["k_air"],
                rho_cp_fluid=v["rho_cp_fluid"],
                wall_axial_conductance_boost=v["wall_axial_conductance_boost"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def grid(self) -> GridSpec:
        v = self._values
        try:
            return GridSpec(
                n_axial=v["n_axial"],
                radial_cells_fluid=v["radial_cells_fluid"],
                radial_cells_wall=v["radial_cells_wall"],
                radial_cells_air=v["radial_cells_air"],
                radial_grading=v["radial_grading"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def build_model(self) -> SensorModel:
        return SensorModel(
            geom=self.geometry(),
            mats=self.materials(),
            grid=self.grid(),
            profile=self.velocity_profile,
        )

    def influence_grid(self) -> np.ndarray:
        step = self.influence_q_step_ul_min
        n = int(math.floor(self.influence_q_max_ul_min / step + 0.5))
        return np.round(np.arange(n + 1) * step, 12)

    def build_influence(self, model: SensorModel) -> InfluenceTable:
        return influence_table(model, self.influence_grid())

    def build_plant(self, influence: InfluenceTable) -> Plant:
        v = self._values
        heaters = (
            HeaterState(
                r0=v["r_up_ohm"],
                tcr=v["tcr_per_k"],
                flicker=FlickerProcess(v["flicker_amplitude"], v["flicker_octaves"]),
            ),
            HeaterState(
                r0=v["r_down_ohm"],
                tcr=v["tcr_per_k"],
                flicker=FlickerProcess(v["flicker_amplitude"], v["flicker_octaves"]),
            ),
        )
        thermopile = ThermopileModel(
            junction_count=v["junction_count"],
            seebeck_per_junction=v["seebeck_per_junction_v_per_k"],
            cubic_coeff=v["emf_cubic_per_k"],
            voltmeter_noise=v["voltmeter_noise_v"],
        )
        return Plant(
            influence=influence,
            heaters=heaters,
            thermopile=thermopile,
            ambient=FlickerProcess(v["ambient_amplitude_k"], v["flicker_octaves"]),
            tau=v["thermal_tau_s"],
            eps_asym=v["epsilon_asym"],
            ambient_coupling=v["ambient_coupling_k_per_k"],
            smu_meas_noise=v["smu_meas_noise"],
        )

    def build_controller(self, plant: Plant, q0_ul_min: float) -> PIController:
        p_total = mw_to_w(self.p_total_mw)
        dt = 1.0 / self.f_s_hz
        kp, ki = self.kp_w_per_v, self.ki_w_per_v_s
        if kp is None or ki is None:
            kp_auto, ki_auto = auto_gains(plant, q0_ul_min, dt)
            kp = kp_auto if kp is None else kp
            ki = ki_auto if ki is None else ki
        return PIController(
            kp=kp,
            ki=ki,
            dp_max=self.dp_max_frac * p_total,
            anti_windup=self.anti_windup,
        )

    # ------------------------------------------------------------------

    def resolved_text(self) -> str:
        lines = ["# resolved configuration (rerunning this file reproduces the outputs)"]
        lines.extend(f"{key} = {_dump(self._values[key])}" for key in SCHEMA)
        return "\n".join(lines) + "\n"


def load_values(path) -> dict:
    """Parse and type-check the keys a config file explicitly provides."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = parse_kv_text(path.read_text(), source=str(path))
    values = {}
    for key, (text, lineno) in raw.items():
        if key not in SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(text)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Load a config file (or pure defaults) and apply typed overrides."""
    values = load_values(path) if path is not None else {}
    if overrides:
        values.update(overrides)
    return RunConfig(values)
