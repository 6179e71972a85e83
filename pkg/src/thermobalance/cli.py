"""Batch experiment front-end.

Subcommands map to the five standard experiments:

  calibrate   balance a list of flow rates into a calibration curve + fit
  field       export the balanced steady temperature field at one flow rate
  profile     stacked axial wall-temperature profiles over a flow list
  step        closed-loop run against a stepwise flow schedule
  drift       long closed-loop run at constant flow + spectra and statistics

Flow rates are ul/min and powers mW at this boundary; outputs are CSV plus
key = value reports, written atomically into --out.  Every command also
emits resolved-config.txt, which reruns to byte-identical outputs.
"""

import argparse
import sys
from pathlib import Path

from . import io
from .analysis import stat_summary, welch_psd
from .balancing import balance_power, calibration_curve, fit_sensitivity
from .config import RunConfig, load_values
from .control import FlowSchedule, run_closed_loop
from .errors import ConfigError, ModelError
from .units import mw_to_w, ul_min_to_m3s


def _parse_q_list(text):
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"bad flow-rate list: {text!r}") from None


def _flag_overrides(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "pt", None) is not None:
        overrides["p_total_mw"] = args.pt
    if getattr(args, "fs", None) is not None:
        overrides["f_s_hz"] = args.fs
    if getattr(args, "duration", None) is not None:
        overrides["duration_s"] = args.duration
    if getattr(args, "schedule", None) is not None:
        overrides["schedule_file"] = args.schedule
    if getattr(args, "qt", None) is not None:
        if args.command in ("calibrate", "profile"):
            overrides["q_list_ul_min"] = _parse_q_list(args.qt)
        else:
            overrides["q_ul_min"] = float(args.qt)
    return overrides

COMMAND_DEFAULTS = {
    "calibrate": {},
    "field": {},
    "profile": {},
    "step": {},
    # the long drift experiment: 13 h at 0.24 Hz, 1 mW, no flow
    "drift": {"p_total_mw": 1.0, "f_s_hz": 0.24, "duration_s": 46800.0, "q_ul_min": 0.0},
}


def _build_config(args) -> RunConfig:
    file_values = load_values(args.config) if args.config else {}
    values = {
        key: value
        for key, value in COMMAND_DEFAULTS[args.command].items()
        if key not in file_values
    }
    values.update(file_values)
    values.update(_flag_overrides(args))
    return RunConfig(values)


def _balanced_field(model, cfg, q_ul_min):
    result = balance_power(model, ul_min_to_m3s(q_ul_min), mw_to_w(cfg.p_total_mw))
    return result, model.solve(result.q_flow, result.p_up, result.p_down)


def cmd_calibrate(cfg: RunConfig, out_dir: Path) -> None:
    model = cfg.build_model()
    curve = calibration_curve(model, cfg.q_list_ul_min, mw_to_w(cfg.p_total_mw))
    report = {
        "p_total_mw": cfg.p_total_mw,
        "q_max_fit_ul_min": cfg.linear_fit_qmax_ul_min,
        "n_points": len(curve.results),
    }
    try:
        fit = fit_sensitivity(curve, cfg.linear_fit_qmax_ul_min)
        report["S_per_ul_min"] = fit.slope_per_ul_min
        report["fit_residual_norm"] = fit.residual_norm
        report["fit_points"] = fit.n_points
    except ModelError as exc:
        report["S_per_ul_min"] = "undefined"
        report["fit_note"] = str(exc)
    io.write_curve_csv(curve, out_dir / "calibration.csv")
    io.write_report(out_dir / "sensitivity.txt", report)
    io.atomic_write_text(out_dir / "resolved-config.txt", cfg.resolved_text())


def cmd_field(cfg: RunConfig, out_dir: Path) -> None:
    model = cfg.build_model()
    _, field = _balanced_field(model, cfg, cfg.q_ul_min)
    io.write_field_csv(field, out_dir / "field.csv")
    io.atomic_write_text(out_dir / "resolved-config.txt", cfg.resolved_text())


def cmd_profile(cfg: RunConfig, out_dir: Path) -> None:
    if not cfg.q_list_ul_min:
        raise ConfigError("profile needs a nonempty flow-rate list (--qt or q_list_ul_min)")
    model = cfg.build_model()
    profiles = []
    for q_ul in cfg.q_list_ul_min:
        _, field = _balanced_field(model, cfg, q_ul)
        profiles.append((q_ul, field))
    io.write_profile_csv(out_dir / "profiles.csv", profiles)
    io.atomic_write_text(out_dir / "resolved-config.txt", cfg.resolved_text())


def _make_loop(cfg: RunConfig, schedule: FlowSchedule):
    model = cfg.build_model()
    influence = cfg.build_influence(model)
    plant = cfg.build_plant(influence)
    ctrl = cfg.build_controller(plant, schedule.q_at(0.0))
    return plant, ctrl


def cmd_step(cfg: RunConfig, out_dir: Path) -> None:
    if not cfg.schedule_file:
        raise ConfigError("step needs a schedule file (--schedule or schedule_file)")
    schedule = io.read_schedule_csv(cfg.schedule_file)
    plant, ctrl = _make_loop(cfg, schedule)
    ts = run_closed_loop(
        plant,
        ctrl,
        schedule,
        p_total=mw_to_w(cfg.p_total_mw),
        f_s=cfg.f_s_hz,
        duration=cfg.duration_s,
        seed=cfg.seed,
    )
    io.write_timeseries_csv(ts, out_dir / "timeseries.csv")
    io.atomic_write_text(out_dir / "resolved-config.txt", cfg.resolved_text())


def cmd_drift(cfg: RunConfig, out_dir: Path) -> None:
    schedule = FlowSchedule.constant(cfg.q_ul_min)
    plant, ctrl = _make_loop(cfg, schedule)
    ts = run_closed_loop(
        plant,
        ctrl,
        schedule,
        p_total=mw_to_w(cfg.p_total_mw),
        f_s=cfg.f_s_hz,
        duration=cfg.duration_s,
        seed=cfg.seed,
    )
    # analyze the settled record: the loop's startup transient is not drift
    skip = cfg.drift_discard_samples
    if skip >= len(ts):
        raise ModelError(
            f"drift run too short: {len(ts)} samples <= drift_discard_samples = {skip}"
        )
    spectra = {}
    for name, series in (
        ("r_mu", ts.r_mean),
        ("r_delta", ts.r_diff),
        ("vtc", ts.v_tc),
        ("dp", ts.dp),
    ):
        try:
            spectra[name] = welch_psd(
                series[skip:], cfg.f_s_hz, cfg.psd_segment_length, cfg.psd_overlap
            )
        except ModelError as exc:
            raise ModelError(f"spectrum of {name}: {exc}") from None
    report = {}
    for name, series in (("dp", ts.dp), ("vtc", ts.v_tc)):
        summary = stat_summary(series[skip:])
        report[f"{name}_mean"] = summary.mean
        report[f"{name}_variance"] = summary.variance
        report[f"{name}_skewness"] = summary.skewness
        report[f"{name}_excess_kurtosis"] = summary.excess_kurtosis
        report[f"{name}_count"] = summary.count

    io.write_timeseries_csv(ts, out_dir / "timeseries.csv")
    for name, spec in spectra.items():
        io.write_spectrum_csv(spec, out_dir / f"spectrum_{name}.csv")
    io.write_report(out_dir / "stats.txt", report)
    io.atomic_write_text(out_dir / "resolved-config.txt", cfg.resolved_text())


COMMANDS = {
    "calibrate": cmd_calibrate,
    "field": cmd_field,
    "profile": cmd_profile,
    "step": cmd_step,
    "drift": cmd_drift,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermobalance",
        description="Temperature-balancing thermopile flow sensor experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, qt_help):
        p.add_argument("--config", type=str, default=None, help="key = value configuration file")
        p.add_argument("--out", type=str, default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="64-bit seed override")
        p.add_argument("--pt", type=float, default=None, help="total power override (mW)")
        if qt_help:
            p.add_argument("--qt", type=str, default=None, help=qt_help)

    p = sub.add_parser("calibrate", help="balance a list of flow rates into a calibration curve")
    add_common(p, "comma-separated flow rates (ul/min)")

    p = sub.add_parser("field", help="export the balanced steady temperature field")
    add_common(p, "flow rate (ul/min)")

    p = sub.add_parser("profile", help="stacked axial wall-temperature profiles")
    add_common(p, "comma-separated flow rates (ul/min)")

    p = sub.add_parser("step", help="closed-loop run against a stepwise flow schedule")
    add_common(p, None)
    p.add_argument("--schedule", type=str, default=None, help="schedule CSV (t_s,Q_ul_per_min)")
    p.add_argument("--fs", type=float, default=None, help="sampling frequency override (Hz)")
    p.add_argument("--duration", type=float, default=None, help="run duration override (s)")

    p = sub.add_parser("drift", help="long closed-loop drift run with spectra and statistics")
    add_common(p, "constant flow rate (ul/min)")
    p.add_argument("--fs", type=float, default=None, help="sampling frequency override (Hz)")
    p.add_argument("--duration", type=float, default=None, help="run duration override (s)")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _build_config(args)
        out_dir = Path(args.out)
        COMMANDS[args.command](cfg, out_dir)
    except (ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
