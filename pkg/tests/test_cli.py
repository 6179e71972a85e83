import numpy as np
import pytest

from thermobalance.cli import main

FAST_KEYS = """
n_axial = 80
radial_cells_air = 8
influence_q_max_ul_min = 0.6
influence_q_step_ul_min = 0.3
psd_segment_length = 64
"""


def write_cfg(tmp_path, extra="", name="run.cfg"):
    path = tmp_path / name
    path.write_text(FAST_KEYS + extra)
    return path


def read(path):
    return path.read_bytes()


class TestHelp:
    @pytest.mark.parametrize("cmd", ["calibrate", "field", "profile", "step", "drift"])
    def test_help_exits_zero(self, cmd, capsys):
        with pytest.raises(SystemExit) as info:
            main([cmd, "--help"])
        assert info.value.code == 0
        assert "--config" in capsys.readouterr().out

    def test_missing_command_is_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main([])
        assert info.value.code == 2


class TestCalibrate:
    def test_writes_curve_and_report(self, tmp_path):
        cfg = write_cfg(tmp_path, "q_list_ul_min = 0,0.15,0.3,0.45\nlinear_fit_qmax_ul_min = 0.5\n")
        out = tmp_path / "out"
        assert main(["calibrate", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "calibration.csv").read_text().splitlines()
        assert lines[0] == "Q_ul_per_min,P1_W,P2_W,dP_W,ratio,dT_residual_K,flag"
        assert len(lines) == 5
        report = (out / "sensitivity.txt").read_text()
        assert "S_per_ul_min = " in report
        assert (out / "resolved-config.txt").exists()

    def test_single_point_flags_undefined(self, tmp_path):
        cfg = write_cfg(tmp_path, "q_list_ul_min = 0\n")
        out = tmp_path / "out"
        assert main(["calibrate", "--config", str(cfg), "--out", str(out)]) == 0
        row = (out / "calibration.csv").read_text().splitlines()[1]
        assert abs(float(row.split(",")[4])) < 1e-9
        assert "S_per_ul_min = undefined" in (out / "sensitivity.txt").read_text()

    def test_reruns_byte_identical(self, tmp_path):
        cfg = write_cfg(tmp_path, "q_list_ul_min = 0,0.3\n")
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["calibrate", "--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["calibrate", "--config", str(cfg), "--out", str(out2)]) == 0
        for name in ("calibration.csv", "sensitivity.txt", "resolved-config.txt"):
            assert read(out1 / name) == read(out2 / name)

    def test_qt_flag_overrides(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "out"
        assert main(["calibrate", "--config", str(cfg), "--out", str(out), "--qt", "0,0.3"]) == 0
        assert len((out / "calibration.csv").read_text().splitlines()) == 3

    def test_default_flow_list_gives_sixteen_rows(self, tmp_path):
        # built-in sweep covers 0 .. 1.5 ul/min in 0.1 steps
        cfg = write_cfg(tmp_path)
        out = tmp_path / "out"
        assert main(["calibrate", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "calibration.csv").read_text().splitlines()
        assert len(lines) == 17
        assert lines[-1].startswith("1.5,")


class TestField:
    def test_exports_field(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "out"
        assert main(["field", "--config", str(cfg), "--out", str(out), "--qt", "0.3"]) == 0
        lines = (out / "field.csv").read_text().splitlines()
        assert lines[0] == "r_m,z_m,region,temp_rise_K"
        rises = [float(line.split(",")[3]) for line in lines[1:]]
        assert 0.5 < max(rises) < 20.0
        regions = {line.split(",")[2] for line in lines[1:]}
        assert regions == {"fluid", "wall", "air"}

    def test_unresolvable_grid_leaves_no_partial_file(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "heater_width = 1e-6\n")
        out = tmp_path / "out"
        assert main(["field", "--config", str(cfg), "--out", str(out)]) == 1
        assert "element unresolved" in capsys.readouterr().err
        assert not out.exists() or list(out.iterdir()) == []


class TestProfile:
    def test_zero_flow_profile_symmetric(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "out"
        assert main(["profile", "--config", str(cfg), "--out", str(out), "--qt", "0"]) == 0
        lines = (out / "profiles.csv").read_text().splitlines()
        assert lines[0] == "Q,z_m,temp_rise_K"
        rise = np.array([float(line.split(",")[2]) for line in lines[1:]])
        assert np.abs(rise - rise[::-1]).max() / rise.max() < 1e-8

    def test_empty_q_list_is_usage_error(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "q_list_ul_min =\n")
        assert main(["profile", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "nonempty flow-rate list" in capsys.readouterr().err

    def test_stacks_one_profile_per_q(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "out"
        assert main(["profile", "--config", str(cfg), "--out", str(out), "--qt", "0,0.3"]) == 0
        lines = (out / "profiles.csv").read_text().splitlines()[1:]
        qs = {line.split(",")[0] for line in lines}
        assert qs == {"0.0", "0.3"}


class TestStep:
    def test_settles_to_calibrate_ratio(self, tmp_path):
        cfg = write_cfg(tmp_path, "f_s_hz = 2.0\nduration_s = 90\n")
        sched = tmp_path / "sched.csv"
        sched.write_text("t_s,Q_ul_per_min\n0,0\n30,0.3\n")
        out = tmp_path / "out"
        assert main(
            ["step", "--config", str(cfg), "--out", str(out), "--schedule", str(sched)]
        ) == 0
        lines = (out / "timeseries.csv").read_text().splitlines()
        assert lines[0] == "t_s,Q_ul_per_min,P1_W,P2_W,R1_ohm,R2_ohm,Vtc_V,dP_W,ratio"
        ratio = np.array([float(line.split(",")[8]) for line in lines[1:]])
        out2 = tmp_path / "cal"
        assert main(["calibrate", "--config", str(cfg), "--out", str(out2), "--qt", "0,0.3"]) == 0
        cal_ratio = float((out2 / "calibration.csv").read_text().splitlines()[2].split(",")[4])
        assert ratio[-18:].mean() == pytest.approx(cal_ratio, rel=5e-3)

    def test_requires_schedule(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path)
        assert main(["step", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "schedule" in capsys.readouterr().err

    def test_malformed_schedule_names_line(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path)
        sched = tmp_path / "sched.csv"
        sched.write_text("0,0\nbroken line\n")
        assert main(
            ["step", "--config", str(cfg), "--out", str(tmp_path / "o"), "--schedule", str(sched)]
        ) == 1
        assert ":2" in capsys.readouterr().err


class TestDrift:
    def drift_args(self, tmp_path, extra="", out="out"):
        cfg = write_cfg(tmp_path, "duration_s = 2000\n" + extra)
        return cfg, tmp_path / out

    def test_writes_all_artifacts(self, tmp_path):
        cfg, out = self.drift_args(tmp_path)
        assert main(["drift", "--config", str(cfg), "--out", str(out)]) == 0
        for name in (
            "timeseries.csv",
            "spectrum_r_mu.csv",
            "spectrum_r_delta.csv",
            "spectrum_vtc.csv",
            "spectrum_dp.csv",
            "stats.txt",
            "resolved-config.txt",
        ):
            assert (out / name).exists(), name
        spec = (out / "spectrum_r_mu.csv").read_text().splitlines()
        assert spec[0] == "f_hz,S_norm_per_hz"
        stats = (out / "stats.txt").read_text()
        assert "dp_mean = " in stats and "vtc_excess_kurtosis = " in stats
        # drift command defaults: 0.24 Hz sampling, 1 mW
        resolved = (out / "resolved-config.txt").read_text()
        assert "f_s_hz = 0.24" in resolved
        assert "p_total_mw = 1.0" in resolved

    def test_zero_noise_rejected_with_message(self, tmp_path, capsys):
        cfg, out = self.drift_args(
            tmp_path,
            "voltmeter_noise_v = 0\nsmu_meas_noise = 0\nflicker_amplitude = 0\nambient_amplitude_k = 0\n",
        )
        assert main(["drift", "--config", str(cfg), "--out", str(out)]) == 1
        err = capsys.readouterr().err
        assert "constant series" in err
        assert list(out.iterdir()) if out.exists() else [] == []

    def test_seed_changes_path_but_rerun_identical(self, tmp_path):
        cfg, out1 = self.drift_args(tmp_path, out="a")
        out2, out3 = tmp_path / "b", tmp_path / "c"
        assert main(["drift", "--config", str(cfg), "--out", str(out1), "--seed", "1"]) == 0
        assert main(["drift", "--config", str(cfg), "--out", str(out2), "--seed", "1"]) == 0
        assert main(["drift", "--config", str(cfg), "--out", str(out3), "--seed", "2"]) == 0
        assert read(out1 / "timeseries.csv") == read(out2 / "timeseries.csv")
        assert read(out1 / "timeseries.csv") != read(out3 / "timeseries.csv")

    def test_resolved_config_round_trip(self, tmp_path):
        cfg, out1 = self.drift_args(tmp_path, out="a")
        assert main(["drift", "--config", str(cfg), "--out", str(out1), "--seed", "5"]) == 0
        out2 = tmp_path / "b"
        assert main(
            ["drift", "--config", str(out1 / "resolved-config.txt"), "--out", str(out2)]
        ) == 0
        for name in ("timeseries.csv", "spectrum_dp.csv", "stats.txt", "resolved-config.txt"):
            assert read(out1 / name) == read(out2 / name)
