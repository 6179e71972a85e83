"""Closed-loop PI power feedback around the emulated plant.

Each sample: read the thermopile voltage, update the PI controller to get a
commanded power difference dP at fixed total power, split P1 = (P_T - dP)/2
and P2 = (P_T + dP)/2, actuate both heaters in power mode, then advance the
plant by one sample period.  A stable loop needs positive thermopile voltage
to command a smaller dP (the plant's dT rises with dP); a polarity probe at
startup aborts on configurations where that convention is unstable.

The per-sample loop runs in a compiled kernel when the extension built from
``_stepper_cy.pyx`` is importable, otherwise in the pure-Python twin
``_stepper_py``; both produce bit-identical trajectories.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from . import _stepper_py
from .errors import ModelError
from .plant import Plant

try:
    from . import _stepper_cy
except ImportError:
    _stepper_cy = None

# Auto-tuned gains use kp = ki*dt = c / loop_gain.  That choice makes the
# controller transfer c / (1 - z^-1): commanded-dP noise comes out flat
# (one real closed-loop pole at 1 - c) instead of rolling off toward
# Nyquist, and the loop settles in ~10 samples.
AUTO_LOOP_CONSTANT = 0.6


def available_kernels():
    names = ["python"]
    if _stepper_cy is not None:
        names.insert(0, "compiled")
    return names


def select_kernel(name: str = "auto"):
    """Resolve a kernel choice ("auto", "compiled", "python") to a module.

    The THERMOBALANCE_KERNEL environment variable overrides "auto".
    """
    if name == "auto":
        name = os.environ.get("THERMOBALANCE_KERNEL", "auto")
    if name == "auto":
        return _stepper_cy if _stepper_cy is not None else _stepper_py
    if name == "compiled":
        if _stepper_cy is None:
            raise ModelError("compiled kernel not available (extension not built)")
        return _stepper_cy
    if name == "python":
        return _stepper_py
    raise ValueError(f"unknown kernel {name!r}")


class PIController:
    """Discrete PI controller with output clamp and integrator anti-windup.

    kp in W/V, ki in W/(V*s); the output (commanded power difference) is
    clamped to |dP| <= dp_max and the integrator freezes while the clamp is
    active against the error sign.
    """

    def __init__(self, kp: float, ki: float, dp_max: float, anti_windup: bool = True):
        if dp_max <= 0.0:
            raise ValueError("dp_max must be positive")
        self.kp = kp
        self.ki = ki
        self.dp_max = dp_max
        self.anti_windup = anti_windup
        self.integrator = 0.0

    def update(self, error: float, dt: float) -> float:
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        raw = self.kp * error + self.integrator
        if raw > self.dp_max:
            out = self.dp_max
        elif raw < -self.dp_max:
            out = -self.dp_max
        else:
            out = raw
        if self.anti_windup:
            if not ((raw > self.dp_max and error > 0.0) or (raw < -self.dp_max and error < 0.0)):
                self.integrator = self.integrator + self.ki * error * dt
        else:
            self.integrator = self.integrator + self.ki * error * dt
        return out


def pi_update(ctrl: PIController, error: float, dt: float) -> float:
    return ctrl.update(error, dt)


@dataclass(frozen=True)
class FlowSchedule:
    """Stepwise flow-rate profile: ordered (time_s, q_ul_min) knots from t=0."""

    steps: tuple

    def __post_init__(self):
        if not self.steps:
            raise ValueError("schedule needs at least one step")
        times = [t for t, _ in self.steps]
        if times[0] != 0.0:
            raise ValueError("schedule must start at t = 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("schedule times must be strictly increasing")

    @classmethod
    def constant(cls, q_ul_min: float) -> "FlowSchedule":
        return cls(steps=((0.0, q_ul_min),))

    def q_at(self, t: float) -> float:
        q = self.steps[0][1]
        for t_step, q_step in self.steps:
            if t_step <= t:
                q = q_step
            else:
                break
        return q

    def per_sample(self, n: int, dt: float) -> np.ndarray:
        times = np.array([t for t, _ in self.steps])
        values = np.array([q for _, q in self.steps])
        idx = np.searchsorted(times, np.arange(n) * dt, side="right") - 1
        return values[idx]


TIMESERIES_COLUMNS = (
    "t_s",
    "Q_ul_per_min",
    "P1_W",
    "P2_W",
    "R1_ohm",
    "R2_ohm",
    "Vtc_V",
    "dP_W",
    "ratio",
)


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled closed/open-loop log, one row per sample."""

    data: np.ndarray  # (n, 9), columns as in TIMESERIES_COLUMNS
    fs_hz: float

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[1] != len(TIMESERIES_COLUMNS):
            raise ValueError("timeseries matrix must have one column per field")

    def __len__(self):
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, TIMESERIES_COLUMNS.index(name)]

    @property
    def t(self):
        return self.column("t_s")

    @property
    def v_tc(self):
        return self.column("Vtc_V")

    @property
    def dp(self):
        return self.column("dP_W")

    @property
    def ratio(self):
        return self.column("ratio")

    @property
    def r_mean(self):
        return 0.5 * (self.column("R1_ohm") + self.column("R2_ohm"))

    @property
    def r_diff(self):
        return self.column("R1_ohm") - self.column("R2_ohm")


def loop_gain(plant: Plant, q_ul_min: float, dt: float) -> float:
    """Static V-per-W loop gain from commanded dP to thermopile voltage.

    Includes the one-sample relaxation factor; positive gain means the
    stable convention (positive voltage lowers dP) applies.
    """
    d_up, d_down, _, _ = plant.influence.lookup(q_ul_min)
    d1e = float(d_up) * (1.0 + plant.eps_asym)
    d2e = float(d_down) * (1.0 - plant.eps_asym)
    static = plant.thermopile.net_seebeck * 0.5 * (d2e - d1e)
    return static * (1.0 - math.exp(-dt / plant.tau))


def auto_gains(plant: Plant, q_ul_min: float, dt: float):
    """PI gains tuned for roughly ten-sample settling at this sample rate."""
    g = loop_gain(plant, q_ul_min, dt)
    if g <= 0.0:
        raise ModelError("cannot auto-tune gains: loop polarity unstable or degenerate")
    return AUTO_LOOP_CONSTANT / g, AUTO_LOOP_CONSTANT / (g * dt)


def _check_polarity(plant: Plant, q_ul_min: float, dt: float) -> None:
    g = loop_gain(plant, q_ul_min, dt)
    if not (g > 1e-18):
        raise ModelError(
            "loop polarity probe failed: thermopile/plant sign convention is "
            "unstable or has no control authority (gain "
            f"{g:g} V/W <= 0)"
        )


def _prepare_run(plant, schedule, p_total, f_s, duration, seed):
    if f_s <= 0.0 or duration <= 0.0:
        raise ValueError("f_s and duration must be positive")
    if p_total <= 0.0:
        raise ValueError("p_total must be positive")
    n = int(round(duration * f_s))
    if n < 1:
        raise ValueError("duration shorter than one sample period")
    dt = 1.0 / f_s

    q_ul = schedule.per_sample(n, dt)
    d_up, d_down, self_up, self_down = plant.influence.lookup(q_ul)
    d1_eff = d_up * (1.0 + plant.eps_asym)
    d2_eff = d_down * (1.0 - plant.eps_asym)

    up, down = plant.heaters
    n_oct = up.flicker.n_octaves
    if down.flicker.n_octaves != n_oct:
        raise ValueError("both heater flicker processes must share an octave count")
    n_amb = plant.ambient.n_octaves

    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((n + 1, 3 + 2 * n_oct + n_amb))
    out = np.empty((n, len(TIMESERIES_COLUMNS)))

    kernel_args = dict(
        noise=noise,
        q_ul=np.ascontiguousarray(q_ul, dtype=float),
        d1_eff=np.ascontiguousarray(d1_eff, dtype=float),
        d2_eff=np.ascontiguousarray(d2_eff, dtype=float),
        e11=np.ascontiguousarray(self_up, dtype=float),
        e22=np.ascontiguousarray(self_down, dtype=float),
        fl_coeff=up.flicker.ar_coeff,
        fl_gain=up.flicker.gain,
        amb_coeff=plant.ambient.ar_coeff,
        amb_gain=plant.ambient.gain,
        out=out,
        dt=dt,
        p_total=p_total,
        relax=math.exp(-dt / plant.tau),
        r0_up=up.r0,
        r0_down=down.r0,
        tcr=up.tcr,
        smu_noise=plant.smu_meas_noise,
        ns_alpha=plant.thermopile.net_seebeck,
        beta_tp=plant.thermopile.cubic_coeff,
        sigma_v=plant.thermopile.voltmeter_noise,
        amb_coupling=plant.ambient_coupling,
        fl_sigma=up.flicker.octave_sigma,
        amb_sigma=plant.ambient.octave_sigma,
        dt0=plant.delta_t,
    )
    if up.tcr != down.tcr:
        raise ValueError("heaters must share a TCR in loop runs")
    if down.flicker.amplitude != up.flicker.amplitude:
        raise ValueError("heaters must share a flicker amplitude in loop runs")
    return n, dt, out, kernel_args


def run_closed_loop(
    plant: Plant,
    ctrl: PIController,
    schedule: FlowSchedule,
    p_total: float,
    f_s: float,
    duration: float,
    seed: int,
    kernel: str = "auto",
) -> TimeSeries:
    """Simulate the temperature-balancing feedback loop.

    The run is a pure function of the plant parameters, controller, schedule
    and seed: drift states are (re)drawn from their stationary distributions
    under the given seed and the passed-in plant object is not mutated.
    """
    if ctrl.dp_max > p_total:
        raise ValueError("controller clamp dp_max must not exceed p_total")
    n, dt, out, args = _prepare_run(plant, schedule, p_total, f_s, duration, seed)
    _check_polarity(plant, float(args["q_ul"][0]), dt)
    mod = select_kernel(kernel)
    mod.run_loop(
        closed=1,
        anti_windup=1 if ctrl.anti_windup else 0,
        dp_fixed=0.0,
        kp=ctrl.kp,
        ki=ctrl.ki,
        dp_max=ctrl.dp_max,
        **args,
    )
    return TimeSeries(data=out, fs_hz=f_s)


def open_loop_run(
    plant: Plant,
    dp_fixed: float,
    schedule: FlowSchedule,
    p_total: float,
    f_s: float,
    duration: float,
    seed: int,
    kernel: str = "auto",
) -> TimeSeries:
    """Run with a constant commanded power difference; the voltage free-runs.

    Baseline for quantifying the feedback loop's low-frequency suppression.
    Matched seeds give a noise realization identical to the closed-loop run.
    """
    if abs(dp_fixed) >= p_total:
        raise ValueError("powers out of range: |dP| must stay below P_T")
    n, dt, out, args = _prepare_run(plant, schedule, p_total, f_s, duration, seed)
    mod = select_kernel(kernel)
    mod.run_loop(
        closed=0,
        anti_windup=0,
        dp_fixed=dp_fixed,
        kp=0.0,
        ki=0.0,
        dp_max=p_total,
        **args,
    )
    return TimeSeries(data=out, fs_hz=f_s)
