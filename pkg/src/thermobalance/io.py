"""CSV and report writers (atomic), and the schedule file reader.

Every writer goes through a temp-file-plus-rename so a failing run never
leaves a partial artifact.  Floats are serialized with repr (shortest
round-trip form), which makes reruns byte-identical.
"""

import os
import tempfile
from pathlib import Path

import numpy as np

from .control import TIMESERIES_COLUMNS, FlowSchedule, TimeSeries
from .errors import ConfigError
from .thermal import REGION_NAMES, TemperatureField, axial_profile

FIELD_HEADER = "r_m,z_m,region,temp_rise_K"
SINGLE_PROFILE_HEADER = "z_m,temp_rise_K"
PROFILE_HEADER = "Q,z_m,temp_rise_K"
CURVE_HEADER = "Q_ul_per_min,P1_W,P2_W,dP_W,ratio,dT_residual_K,flag"
SCHEDULE_HEADER = "t_s,Q_ul_per_min"
SPECTRUM_HEADER = "f_hz,S_norm_per_hz"


def fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header: str, rows) -> None:
    lines = [header]
    lines.extend(",".join(fmt(cell) for cell in row) for row in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_report(path, mapping) -> None:
    """key = value text report."""
    lines = [f"{key} = {fmt(value)}" for key, value in mapping.items()]
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_field_csv(field: TemperatureField, path) -> None:
    mesh = field.mesh
    rows = []
    for ir in range(mesh.n_r):
        region = REGION_NAMES[mesh.ring_region[ir]]
        r = mesh.r_centers[ir]
        for iz in range(mesh.n_z):
            rows.append((r, mesh.z_centers[iz], region, field.rise[ir, iz]))
    write_csv(path, FIELD_HEADER, rows)


def write_axial_profile_csv(field: TemperatureField, path) -> None:
    z, rise = axial_profile(field)
    write_csv(path, SINGLE_PROFILE_HEADER, zip(z, rise))


def write_profile_csv(path, profiles) -> None:
    """Stacked axial profiles: iterable of (q_ul_min, field)."""
    rows = []
    for q_ul, field in profiles:
        z, rise = axial_profile(field)
        rows.extend((q_ul, zz, rr) for zz, rr in zip(z, rise))
    write_csv(path, PROFILE_HEADER, rows)


def write_curve_csv(curve, path) -> None:
    rows = [
        (r.q_ul_min, r.p_up, r.p_down, r.dp, r.ratio, r.dt_residual, r.flag)
        for r in curve.results
    ]
    write_csv(path, CURVE_HEADER, rows)


def write_timeseries_csv(ts: TimeSeries, path) -> None:
    write_csv(path, ",".join(TIMESERIES_COLUMNS), ts.data)


def write_spectrum_csv(spec, path) -> None:
    write_csv(path, SPECTRUM_HEADER, zip(spec.f_hz, spec.s_norm))


def read_schedule_csv(path) -> FlowSchedule:
    """Parse a `t_s,Q_ul_per_min` step schedule; errors name the line."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"schedule file not found: {path}")
    steps = []
    seen_data = False
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if not seen_data and text.replace(" ", "") == SCHEDULE_HEADER:
                seen_data = True
                continue
            seen_data = True
            parts = text.split(",")
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 't_s,Q_ul_per_min', got {text!r}")
            try:
                t = float(parts[0])
                q = float(parts[1])
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: non-numeric schedule entry {text!r}") from None
            steps.append((t, q))
    if not steps:
        raise ConfigError(f"{path}: schedule has no steps")
    try:
        return FlowSchedule(steps=tuple(steps))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
