import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermobalance.balancing import balance_power
from thermobalance.control import (
    FlowSchedule,
    PIController,
    auto_gains,
    available_kernels,
    loop_gain,
    open_loop_run,
    pi_update,
    run_closed_loop,
    select_kernel,
)
from thermobalance.errors import ModelError
from thermobalance.plant import (
    FlickerProcess,
    HeaterState,
    Plant,
    ThermopileModel,
    smu_apply_power,
    step_processes,
    thermopile_emf,
)
from thermobalance.units import ul_min_to_m3s

PT = 1e-4


def make_plant(influence, noise=False, **kw):
    amp = 5e-5 if noise else 0.0
    amb = 0.02 if noise else 0.0
    defaults = dict(
        heaters=(
            HeaterState(1000.0, 3.9e-3, FlickerProcess(amp, 8)),
            HeaterState(996.0, 3.9e-3, FlickerProcess(amp, 8)),
        ),
        thermopile=ThermopileModel(voltmeter_noise=3e-8 if noise else 0.0),
        ambient=FlickerProcess(amb, 8),
        tau=0.05,
        ambient_coupling=1.5e-3 if noise else 0.0,
        smu_meas_noise=1e-5 if noise else 0.0,
    )
    defaults.update(kw)
    return Plant(influence=influence, **defaults)


def make_ctrl(plant, q0, dt, dp_max=PT):
    kp, ki = auto_gains(plant, q0, dt)
    return PIController(kp=kp, ki=ki, dp_max=dp_max)


class TestPIController:
    def test_zero_error_zero_output(self):
        ctrl = PIController(kp=1.0, ki=1.0, dp_max=1.0)
        assert ctrl.update(0.0, 1.0) == 0.0

    def test_proportional_arithmetic(self):
        ctrl = PIController(kp=1.0, ki=0.0, dp_max=1.0)
        assert ctrl.update(2e-3, 1.0) == pytest.approx(2e-3, rel=1e-15)

    def test_constant_error_ramps_then_freezes(self):
        # independent discrete-integration oracle for the ramp phase
        kp, ki, dt, err, clamp = 0.5, 2.0, 0.25, 1.0, 3.0
        ctrl = PIController(kp=kp, ki=ki, dp_max=clamp)
        outputs = [ctrl.update(err, dt) for _ in range(12)]
        integ = 0.0
        expected = []
        for _ in range(12):
            expected.append(min(kp * err + integ, clamp))
            if kp * err + integ <= clamp:
                integ += ki * err * dt
        assert outputs == pytest.approx(expected)
        assert outputs[-1] == clamp
        frozen = ctrl.integrator
        ctrl.update(err, dt)
        assert ctrl.integrator == frozen  # anti-windup holds it

    def test_windup_without_antiwindup(self):
        ctrl = PIController(kp=0.0, ki=1.0, dp_max=0.5, anti_windup=False)
        for _ in range(10):
            ctrl.update(1.0, 1.0)
        assert ctrl.integrator == pytest.approx(10.0)

    def test_integrator_unfreezes_on_sign_change(self):
        ctrl = PIController(kp=0.0, ki=1.0, dp_max=0.5)
        for _ in range(5):
            ctrl.update(1.0, 1.0)
        before = ctrl.integrator
        ctrl.update(-1.0, 1.0)
        assert ctrl.integrator < before

    @given(
        err=st.floats(min_value=-10, max_value=10, allow_nan=False),
        n=st.integers(min_value=1, max_value=30),
    )
    @settings(deadline=None, max_examples=60)
    def test_output_always_clamped(self, err, n):
        ctrl = PIController(kp=2.0, ki=3.0, dp_max=1.5)
        for _ in range(n):
            assert abs(pi_update(ctrl, err, 0.7)) <= 1.5

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            PIController(kp=1.0, ki=1.0, dp_max=1.0).update(1.0, 0.0)


class TestFlowSchedule:
    def test_constant(self):
        sched = FlowSchedule.constant(0.4)
        assert sched.q_at(0.0) == 0.4
        assert sched.q_at(1e6) == 0.4

    def test_step_lookup(self):
        sched = FlowSchedule(steps=((0.0, 0.0), (10.0, 0.3), (20.0, 0.1)))
        assert sched.q_at(9.999) == 0.0
        assert sched.q_at(10.0) == 0.3
        assert sched.q_at(25.0) == 0.1

    def test_per_sample(self):
        sched = FlowSchedule(steps=((0.0, 0.0), (2.0, 1.0)))
        assert sched.per_sample(4, 1.0).tolist() == [0.0, 0.0, 1.0, 1.0]

    def test_must_start_at_zero(self):
        with pytest.raises(ValueError):
            FlowSchedule(steps=((1.0, 0.0),))

    def test_strictly_increasing_times(self):
        with pytest.raises(ValueError):
            FlowSchedule(steps=((0.0, 0.0), (5.0, 0.1), (5.0, 0.2)))


class TestClosedLoop:
    def test_symmetric_fixed_point(self, influence):
        plant = make_plant(influence)
        ctrl = make_ctrl(plant, 0.0, 0.5)
        ts = run_closed_loop(plant, ctrl, FlowSchedule.constant(0.0), PT, 2.0, 60.0, seed=1)
        assert abs(ts.ratio[-1]) < 1e-9
        assert ts.column("P1_W")[-1] == pytest.approx(ts.column("P2_W")[-1], rel=1e-9)

    def test_settles_to_direct_balance(self, model, influence):
        plant = make_plant(influence)
        ctrl = make_ctrl(plant, 0.0, 0.5)
        sched = FlowSchedule(steps=((0.0, 0.0), (20.0, 0.3)))
        ts = run_closed_loop(plant, ctrl, sched, PT, 2.0, 120.0, seed=3)
        direct = balance_power(model, ul_min_to_m3s(0.3), PT)
        settled = ts.ratio[-24:].mean()
        assert settled == pytest.approx(direct.ratio, rel=5e-3)

    def test_zero_steady_state_error_noiseless(self, influence):
        plant = make_plant(influence)
        ctrl = make_ctrl(plant, 0.3, 0.5)
        # loop time constant is a few samples; 200 samples > 20 of them
        ts = run_closed_loop(plant, ctrl, FlowSchedule.constant(0.3), PT, 2.0, 100.0, seed=2)
        assert abs(ts.v_tc[-1]) < 1e-12

    def test_power_budget_every_sample(self, influence):
        plant = make_plant(influence, noise=True)
        ctrl = make_ctrl(plant, 0.0, 1 / 0.24)
        ts = run_closed_loop(plant, ctrl, FlowSchedule.constant(0.0), PT, 0.24, 2000.0, seed=4)
        p1 = ts.column("P1_W")
        p2 = ts.column("P2_W")
        assert np.abs(p1 + p2 - PT).max() <= 1e-12 * PT
        assert p1.min() >= 0.0 and p2.min() >= 0.0

    def test_mean_vtc_consistent_with_zero(self, influence):
        sigma_v = 3e-8
        plant = make_plant(influence, thermopile=ThermopileModel(voltmeter_noise=sigma_v))
        ctrl = make_ctrl(plant, 0.3, 0.5)
        ts = run_closed_loop(plant, ctrl, FlowSchedule.constant(0.3), PT, 2.0, 300.0, seed=5)
        tail = ts.v_tc[-len(ts) // 10 :]
        assert abs(tail.mean()) < 3.0 * sigma_v / np.sqrt(tail.size)

    def test_deterministic_bit_identical(self, influence):
        runs = []
        for _ in range(2):
            plant = make_plant(influence, noise=True)
            ctrl = make_ctrl(plant, 0.0, 1 / 0.24)
            runs.append(
                run_closed_loop(plant, ctrl, FlowSchedule.constant(0.0), PT, 0.24, 1000.0, seed=11)
            )
        assert np.array_equal(runs[0].data, runs[1].data)

    def test_does_not_mutate_plant(self, influence):
        plant = make_plant(influence, noise=True)
        before = (plant.delta_t, plant.heaters[0].drift, plant.ambient.value)
        ctrl = make_ctrl(plant, 0.0, 0.5)
        run_closed_loop(plant, ctrl, FlowSchedule.constant(0.0), PT, 2.0, 30.0, seed=6)
        assert (plant.delta_t, plant.heaters[0].drift, plant.ambient.value) == before

    def test_polarity_abort_on_flipped_thermopile(self, influence):
        plant = make_plant(influence, thermopile=ThermopileModel(seebeck_per_junction=-1e-4))
        ctrl = PIController(kp=1e-2, ki=1e-2, dp_max=PT)
        with pytest.raises(ModelError, match="polarity"):
            run_closed_loop(plant, ctrl, FlowSchedule.constant(0.0), PT, 2.0, 10.0, seed=1)

    def test_clamp_must_fit_budget(self, influence):
        plant = make_plant(influence)
        ctrl = PIController(kp=1e-2, ki=1e-2, dp_max=2 * PT)
        with pytest.raises(ValueError):
            run_closed_loop(plant, ctrl, FlowSchedule.constant(0.0), PT, 2.0, 10.0, seed=1)

    def test_schedule_outside_influence_grid_rejected(self, influence):
        plant = make_plant(influence)
        ctrl = make_ctrl(plant, 0.0, 0.5)
        sched = FlowSchedule(steps=((0.0, 0.0), (5.0, influence.q_ul_min[-1] + 1.0)))
        with pytest.raises(ModelError):
            run_closed_loop(plant, ctrl, sched, PT, 2.0, 30.0, seed=1)

    def test_plant_failure_carries_sample_index(self, influence):
        # absurd measurement noise drives a negative measured resistance
        plant = make_plant(influence, noise=True, smu_meas_noise=10.0)
        ctrl = make_ctrl(plant, 0.0, 0.5)
        with pytest.raises(ModelError, match="sample \\d+"):
            run_closed_loop(plant, ctrl, FlowSchedule.constant(0.0), PT, 2.0, 60.0, seed=1)


class TestOpenLoop:
    def test_balanced_dp_keeps_vtc_zero(self, model, influence):
        direct = balance_power(model, ul_min_to_m3s(0.3), PT)
        plant = make_plant(influence)
        ts = open_loop_run(plant, direct.dp, FlowSchedule.constant(0.3), PT, 2.0, 60.0, seed=1)
        assert np.abs(ts.v_tc[-10:]).max() < 1e-12

    def test_full_dp_rejected(self, influence):
        plant = make_plant(influence)
        with pytest.raises(ValueError, match="powers out of range"):
            open_loop_run(plant, PT, FlowSchedule.constant(0.0), PT, 2.0, 10.0, seed=1)

    def test_drift_shows_low_frequency_rise(self, influence):
        from thermobalance.analysis import loglog_slope, welch_psd

        plant = make_plant(influence, noise=True)
        ts = open_loop_run(plant, 0.0, FlowSchedule.constant(0.0), 1e-3, 0.24, 46800.0, seed=2)
        spec = welch_psd(ts.v_tc, 0.24, 2048, 0.5)
        f0 = spec.f_hz[0]
        assert loglog_slope(spec, f0, 10 * f0) < -0.3


class TestKernels:
    def test_python_kernel_always_available(self):
        assert "python" in available_kernels()
        assert select_kernel("python").__name__.endswith("_stepper_py")

    def test_env_var_pins_kernel(self, monkeypatch):
        monkeypatch.setenv("THERMOBALANCE_KERNEL", "python")
        assert select_kernel("auto").__name__.endswith("_stepper_py")

    def test_unknown_kernel_rejected(self):
        with pytest.raises(ValueError):
            select_kernel("fortran")

    @pytest.mark.skipif("compiled" not in available_kernels(), reason="extension not built")
    def test_compiled_matches_python_bitwise(self, influence):
        results = {}
        for kernel in ("compiled", "python"):
            plant = make_plant(influence, noise=True)
            ctrl = make_ctrl(plant, 0.0, 1 / 0.24)
            results[kernel] = run_closed_loop(
                plant, ctrl, FlowSchedule.constant(0.0), PT, 0.24, 4000.0, seed=21, kernel=kernel
            )
        assert np.array_equal(results["compiled"].data, results["python"].data)

    @pytest.mark.skipif("compiled" not in available_kernels(), reason="extension not built")
    def test_compiled_matches_python_open_loop(self, influence):
        results = {}
        for kernel in ("compiled", "python"):
            plant = make_plant(influence, noise=True)
            results[kernel] = open_loop_run(
                plant, 0.2 * PT, FlowSchedule.constant(0.2), PT, 0.24, 4000.0, seed=22, kernel=kernel
            )
        assert np.array_equal(results["compiled"].data, results["python"].data)

    @pytest.mark.skipif("compiled" not in available_kernels(), reason="extension not built")
    @pytest.mark.parametrize("anti_windup", [True, False])
    def test_kernels_agree_through_clamping(self, influence, anti_windup):
        # absurd gains drive the output into the clamp every few samples
        results = {}
        for kernel in ("compiled", "python"):
            plant = make_plant(influence, noise=True)
            ctrl = PIController(kp=5e3, ki=8e3, dp_max=0.3 * PT, anti_windup=anti_windup)
            results[kernel] = run_closed_loop(
                plant, ctrl, FlowSchedule.constant(0.3), PT, 0.24, 2000.0, seed=3, kernel=kernel
            )
        assert np.array_equal(results["compiled"].data, results["python"].data)
        dp = results["python"].dp
        assert np.abs(dp).max() == 0.3 * PT  # the clamp actually engaged


class _StubRng:
    """Replays a fixed normal stream for op-composition tests."""

    def __init__(self, values):
        self.values = list(values)

    def standard_normal(self, size=None):
        if size is None:
            return self.values.pop(0)
        out = np.array([self.values.pop(0) for _ in range(int(size))])
        return out


class TestKernelMatchesOps:
    def test_one_kernel_step_equals_op_composition(self):
        """The loop kernel implements exactly the documented op sequence."""
        from thermobalance.control import _prepare_run, select_kernel

        influence = _toy_table()
        n_oct = 4
        plant = make_plant(
            influence,
            heaters=(
                HeaterState(1000.0, 3.9e-3, FlickerProcess(1e-4, n_oct)),
                HeaterState(996.0, 3.9e-3, FlickerProcess(1e-4, n_oct)),
            ),
            thermopile=ThermopileModel(voltmeter_noise=1e-7),
            ambient=FlickerProcess(0.05, n_oct),
            ambient_coupling=2e-3,
            smu_meas_noise=1e-4,
        )
        n_steps, dt = 3, 0.5
        kp, ki = auto_gains(plant, 0.2, dt)

        _, _, out, args = _prepare_run(
            plant, FlowSchedule.constant(0.2), PT, 1.0 / dt, n_steps * dt, seed=77
        )
        select_kernel("python").run_loop(
            closed=1, anti_windup=1, dp_fixed=0.0, kp=kp, ki=ki, dp_max=PT, **args
        )

        # replay the same normals through the public ops
        noise = args["noise"]
        stream = []
        stream += list(noise[0, 3 : 3 + n_oct])
        stream += list(noise[0, 3 + n_oct : 3 + 2 * n_oct])
        stream += list(noise[0, 3 + 2 * n_oct : 3 + 3 * n_oct])
        for k in range(n_steps):
            stream += list(noise[k + 1, 0:3])
            stream += list(noise[k + 1, 3 : 3 + n_oct])
            stream += list(noise[k + 1, 3 + n_oct : 3 + 2 * n_oct])
            stream += list(noise[k + 1, 3 + 2 * n_oct : 3 + 3 * n_oct])
        rng = _StubRng(stream)

        plant.init_stationary(rng)
        ctrl = PIController(kp=kp, ki=ki, dp_max=PT)
        rows = []
        for k in range(n_steps):
            v = thermopile_emf(plant.thermopile, plant.delta_t, rng)
            u = ctrl.update(-v, dt)
            p1 = 0.5 * (PT - u)
            p2 = 0.5 * (PT + u)
            r1 = plant.heaters[0].resistance
            r2 = plant.heaters[1].resistance
            _, _, p1a = smu_apply_power(plant.heaters[0], p1, plant.smu_meas_noise, rng)
            _, _, p2a = smu_apply_power(plant.heaters[1], p2, plant.smu_meas_noise, rng)
            rows.append([k * dt, 0.2, p1, p2, r1, r2, v, u, u / PT])
            plant.set_drive(0.2, p1a, p2a)
            step_processes(plant, plant.heaters, dt, rng)
        manual = np.array(rows)
        assert manual == pytest.approx(out, rel=1e-12, abs=1e-300)


def _toy_table():
    from thermobalance.plant import InfluenceTable

    return InfluenceTable(
        q_ul_min=np.array([0.0, 0.5, 1.0, 2.0]),
        d_up=np.array([-6000.0, -6600.0, -7000.0, -7400.0]),
        d_down=np.array([6000.0, 4800.0, 4000.0, 3000.0]),
        self_up=np.array([11000.0, 10800.0, 10600.0, 10200.0]),
        self_down=np.array([11000.0, 10900.0, 10800.0, 10600.0]),
    )


class TestGainTuning:
    def test_loop_gain_positive_for_default_plant(self, influence):
        plant = make_plant(influence)
        assert loop_gain(plant, 0.0, 1 / 0.24) > 0.0

    def test_auto_gains_settle_in_about_ten_samples(self, influence):
        plant = make_plant(influence)
        ctrl = make_ctrl(plant, 0.0, 1 / 0.24)
        sched = FlowSchedule(steps=((0.0, 0.0), (50.0, 0.3)))
        ts = run_closed_loop(plant, ctrl, sched, PT, 0.24, 300.0, seed=1)
        step_at = int(50 * 0.24)
        target = ts.ratio[-5:].mean()
        settled = np.nonzero(np.abs(ts.ratio[step_at:] - target) < 0.02 * abs(target))[0][0]
        assert settled <= 12

    def test_auto_gains_abort_on_degenerate_plant(self, toy_influence):
        plant = make_plant(toy_influence, thermopile=ThermopileModel(seebeck_per_junction=0.0))
        with pytest.raises(ModelError):
            auto_gains(plant, 0.0, 1.0)
