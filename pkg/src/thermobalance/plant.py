"""Emulated electro-thermal hardware.

Heater resistors with temperature coefficient and 1/f fractional drift,
power-mode source-measure actuation (dissipated power is held regardless of
resistance drift), thermopile EMF generation, a shared 1/f ambient
temperature process, and a lumped first-order response of the thermopile
temperature difference whose gains are tabulated from the steady thermal
model.

All stochastic updates draw from an explicit numpy Generator in a fixed,
documented order, so a seed fully determines a trajectory.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ModelError
from .thermal import SensorModel, delta_t_thermopile
from .units import ul_min_to_m3s


class FlickerProcess:
    """Sum of octave-spaced first-order autoregressive states.

    Octave k relaxes with corner frequency f_s / 2^(k+1); with one variance
    share per octave the summed output has a log-log PSD slope of -1 across
    the octave band.  ``amplitude`` is the stationary rms of the sum.
    """

    def __init__(self, amplitude: float, n_octaves: int = 16):
        if amplitude < 0.0:
            raise ValueError("amplitude must be >= 0")
        if n_octaves < 1:
            raise ValueError("n_octaves must be >= 1")
        self.amplitude = amplitude
        self.n_octaves = n_octaves
        k = np.arange(n_octaves)
        self.ar_coeff = np.exp(-math.pi / 2.0**k)
        self.octave_sigma = amplitude / math.sqrt(n_octaves)
        self.gain = self.octave_sigma * np.sqrt(1.0 - self.ar_coeff**2)
        self.states = np.zeros(n_octaves)

    def init_stationary(self, rng) -> None:
        """Draw the octave states from their stationary distribution."""
        self.states = self.octave_sigma * rng.standard_normal(self.n_octaves)

    def step(self, rng) -> float:
        self.states = self.ar_coeff * self.states + self.gain * rng.standard_normal(
            self.n_octaves
        )
        return self.value

    @property
    def value(self) -> float:
        return float(self.states.sum())


class HeaterState:
    """Thin-film heater resistor with TCR and fractional 1/f drift.

    rise is the element temperature offset from the reference (self-heating
    plus ambient fluctuation); drift is the fractional resistance drift.
    """

    def __init__(self, r0: float, tcr: float, flicker: FlickerProcess):
        if r0 <= 0.0:
            raise ValueError("r0 must be positive")
        self.r0 = r0
        self.tcr = tcr
        self.flicker = flicker
        self.drift = 0.0
        self.rise = 0.0

    @property
    def resistance(self) -> float:
        r = self.r0 * (1.0 + self.tcr * self.rise) * (1.0 + self.drift)
        if r <= 0.0:
            raise ModelError("heater resistance driven nonpositive")
        return r


@dataclass(frozen=True)
class ThermopileModel:
    """EMF = N * alpha * dT * (1 + beta * dT) plus white voltmeter noise.

    The zero-offset property is structural: at dT = 0 the EMF is exactly
    zero for any alpha and beta.
    """

    junction_count: int = 26
    seebeck_per_junction: float = 1e-4  # V/K
    cubic_coeff: float = 0.0  # 1/K
    voltmeter_noise: float = 0.0  # V rms

    @property
    def net_seebeck(self) -> float:
        return self.junction_count * self.seebeck_per_junction


def thermopile_emf(tp: ThermopileModel, delta_t: float, rng) -> float:
    """Measured thermopile voltage for a temperature difference delta_t.

    Always consumes one normal draw so the noise stream layout does not
    depend on the noise amplitude.
    """
    noise = tp.voltmeter_noise * rng.standard_normal()
    return tp.net_seebeck * delta_t * (1.0 + tp.cubic_coeff * delta_t) + noise


def smu_apply_power(heater: HeaterState, p_target: float, meas_noise: float, rng):
    """Source-measure actuation: hold dissipated power via I = sqrt(P/R_meas).

    Returns (current, voltage, actual power).  The current is set from the
    measured resistance R_meas = R_true * (1 + meas_noise * N(0,1)); the
    dissipated power is therefore P_target / (1 + error).  With zero
    measurement error the dissipated power equals the target exactly, no
    matter how far the resistance has drifted.
    """
    if p_target < 0.0:
        raise ValueError("p_target must be >= 0")
    r_true = heater.resistance
    err = meas_noise * rng.standard_normal()
    if err == 0.0:
        current = math.sqrt(p_target / r_true)
        return current, current * r_true, p_target
    r_meas = r_true * (1.0 + err)
    if r_meas <= 0.0:
        raise ModelError("nonpositive measured resistance")
    current = math.sqrt(p_target / r_meas)
    voltage = current * r_true
    return current, voltage, current * current * r_true


@dataclass(frozen=True)
class InfluenceTable:
    """Tabulated thermopile/self-heating gains of the steady model over Q.

    ``d_up``/``d_down`` are dT per watt of total power on each heater;
    ``self_up``/``self_down`` are the heater elements' own mean rise per
    watt (the diagonal self-heating terms).  Lookups interpolate linearly
    and are exact at the grid knots; flow rates outside the grid are
    rejected.
    """

    q_ul_min: np.ndarray
    d_up: np.ndarray
    d_down: np.ndarray
    self_up: np.ndarray
    self_down: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.q_ul_min) <= 0.0):
            raise ValueError("influence grid must be strictly increasing in Q")

    def _check_range(self, q):
        q = np.asarray(q, dtype=float)
        if np.any(q < self.q_ul_min[0]) or np.any(q > self.q_ul_min[-1]):
            raise ModelError(
                f"flow rate outside influence table range "
                f"[{self.q_ul_min[0]:g}, {self.q_ul_min[-1]:g}] ul/min"
            )
        return q

    def lookup(self, q):
        """(d_up, d_down, self_up, self_down) at flow rate(s) q (ul/min)."""
        q = self._check_range(q)
        return (
            np.interp(q, self.q_ul_min, self.d_up),
            np.interp(q, self.q_ul_min, self.d_down),
            np.interp(q, self.q_ul_min, self.self_up),
            np.interp(q, self.q_ul_min, self.self_down),
        )


def influence_table(model: SensorModel, q_grid_ul_min) -> InfluenceTable:
    """Tabulate unit-power thermopile and self-heating gains over a Q grid."""
    qs = np.asarray(list(q_grid_ul_min), dtype=float)
    mesh = model.mesh
    d_up, d_down, e_up, e_down = [], [], [], []
    for q_ul in qs:
        phi_up, phi_down = model.unit_fields(ul_min_to_m3s(q_ul))
        d_up.append(delta_t_thermopile(phi_up))
        d_down.append(delta_t_thermopile(phi_down))
        e_up.append(float(phi_up.rise[np.ix_(mesh.wall_rings, mesh.heater_up_z)].mean()))
        e_down.append(float(phi_down.rise[np.ix_(mesh.wall_rings, mesh.heater_down_z)].mean()))
    return InfluenceTable(
        q_ul_min=qs,
        d_up=np.array(d_up),
        d_down=np.array(d_down),
        self_up=np.array(e_up),
        self_down=np.array(e_down),
    )


class Plant:
    """Full emulated rig: influence gains, heaters, thermopile, noise processes.

    The thermopile temperature difference relaxes first-order (time constant
    tau) toward the steady value

        dT_ss = P1 * d1(Q) * (1 + eps_asym) + P2 * d2(Q) * (1 - eps_asym)
                + ambient_coupling * T_ambient

    The last term leaks the shared ambient fluctuation into dT through
    conduction asymmetries; with ambient amplitude zero the stated power
    form holds exactly.
    """

    def __init__(
        self,
        influence: InfluenceTable,
        heaters,
        thermopile: ThermopileModel,
        ambient: FlickerProcess,
        tau: float = 0.05,
        eps_asym: float = 0.0,
        ambient_coupling: float = 0.0,
        smu_meas_noise: float = 0.0,
    ):
        if tau <= 0.0:
            raise ValueError("tau must be positive")
        if len(heaters) != 2:
            raise ValueError("exactly two heaters (upstream, downstream)")
        self.influence = influence
        self.heaters = tuple(heaters)
        self.thermopile = thermopile
        self.ambient = ambient
        self.tau = tau
        self.eps_asym = eps_asym
        self.ambient_coupling = ambient_coupling
        self.smu_meas_noise = smu_meas_noise
        self.delta_t = 0.0
        # current drive point
        self.q_ul_min = 0.0
        self.p_up = 0.0
        self.p_down = 0.0

    def set_drive(self, q_ul_min: float, p_up: float, p_down: float) -> None:
        """Set the currently applied flow rate and dissipated powers."""
        self.influence._check_range(q_ul_min)
        self.q_ul_min = q_ul_min
        self.p_up = p_up
        self.p_down = p_down

    def steady_delta_t(self) -> float:
        d_up, d_down, _, _ = self.influence.lookup(self.q_ul_min)
        return (
            self.p_up * float(d_up) * (1.0 + self.eps_asym)
            + self.p_down * float(d_down) * (1.0 - self.eps_asym)
            + self.ambient_coupling * self.ambient.value
        )

    def init_stationary(self, rng) -> None:
        """Seed all drift processes from their stationary distributions.

        Draw order: upstream flicker, downstream flicker, ambient.
        """
        for heater in self.heaters:
            heater.flicker.init_stationary(rng)
            heater.drift = heater.flicker.value
        self.ambient.init_stationary(rng)
        amb = self.ambient.value
        for heater in self.heaters:
            heater.rise = amb


def step_processes(plant: Plant, heaters, dt: float, rng) -> None:
    """Advance all stochastic processes and relax dT by one step of dt.

    Draw order per step: upstream flicker octaves, downstream flicker
    octaves, ambient octaves.  Heater rises combine self-heating (diagonal
    influence terms at the applied power) with the shared ambient
    fluctuation.  Deterministic under a fixed seed.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    up, down = heaters
    up.drift = up.flicker.step(rng)
    down.drift = down.flicker.step(rng)
    amb = plant.ambient.step(rng)

    _, _, self_up, self_down = plant.influence.lookup(plant.q_ul_min)
    up.rise = float(self_up) * plant.p_up + amb
    down.rise = float(self_down) * plant.p_down + amb

    dt_ss = plant.steady_delta_t()
    plant.delta_t = dt_ss + (plant.delta_t - dt_ss) * math.exp(-dt / plant.tau)
