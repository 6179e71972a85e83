"""Unit conversions between bench-style units and SI.

Flow rates are handled in ul/min at user-facing boundaries (CLI, CSV,
calibration curves) and in m^3/s inside the thermal model.
"""

UL_PER_MIN = 1e-9 / 60.0  # m^3/s per (ul/min)
MILLIWATT = 1e-3


def ul_min_to_m3s(q_ul_min: float) -> float:
    return q_ul_min * UL_PER_MIN


def m3s_to_ul_min(q_m3s: float) -> float:
    return q_m3s / UL_PER_MIN


def mw_to_w(p_mw: float) -> float:
    return p_mw * MILLIWATT
