"""Heater power splits that null the thermopile, and calibration curves.

The steady model is exactly linear in the heater powers, so the null split
follows from two unit-power solves (superposition).  A bisection search on
the commanded power difference, re-solving the full model at every probe,
is kept as an independent cross-check of the same root.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ModelError, RatioRangeError, SolverError, UnbalanceableError
from .thermal import SensorModel, delta_t_thermopile
from .units import m3s_to_ul_min, ul_min_to_m3s

# |dT| tolerance of a verified balance, in kelvin per milliwatt of total power
BALANCE_TOL_K_PER_MW = 1e-9


@dataclass(frozen=True)
class BalanceResult:
    """Power split at one operating point.

    ``p_down = p_total - p_up`` holds by construction; ``flag`` is ``"ok"``
    or ``"unbalanceable"`` (a negative power would be required -- reported,
    never clamped).
    """

    q_ul_min: float
    q_flow: float
    p_total: float
    p_up: float
    p_down: float
    dt_residual: float
    flag: str = "ok"

    @property
    def dp(self) -> float:
        return self.p_down - self.p_up

    @property
    def ratio(self) -> float:
        return self.dp / self.p_total


def split_powers(d_up: float, d_down: float, p_total: float) -> float:
    """Upstream power nulling d_up*P1 + d_down*P2 at fixed total power.

    d_up/d_down are the thermopile responses (K/W) to unit power on each
    heater; the single linear root is P1 = P_T * d_down / (d_down - d_up).
    """
    denom = d_down - d_up
    if denom == 0.0:
        raise ModelError("thermopile has no differential response; cannot balance")
    return p_total * d_down / denom


def balance_power(
    model: SensorModel,
    q_flow: float,
    p_total: float,
    on_unbalanceable: str = "raise",
) -> BalanceResult:
    """Null the thermopile at flow q_flow (m^3/s) with total power p_total (W).

    Uses superposition of the two unit-power fields, then re-solves at the
    split to verify |dT| below the balance tolerance.  Raises
    UnbalanceableError when the root needs a negative heater power, unless
    ``on_unbalanceable="flag"``.
    """
    if p_total <= 0.0:
        raise ValueError("p_total must be positive")
    phi_up, phi_down = model.unit_fields(q_flow)
    d_up = delta_t_thermopile(phi_up)
    d_down = delta_t_thermopile(phi_down)

    p_up = split_powers(d_up, d_down, p_total)
    p_down = p_total - p_up

    verify = model.solve(q_flow, p_up, p_down, allow_negative_power=True)
    residual = delta_t_thermopile(verify)
    tol = BALANCE_TOL_K_PER_MW * (p_total / 1e-3)
    if abs(residual) > tol:
        raise SolverError(
            f"balance verification failed: |dT| = {abs(residual):g} K exceeds {tol:g} K"
        )

    result = BalanceResult(
        q_ul_min=m3s_to_ul_min(q_flow),
        q_flow=q_flow,
        p_total=p_total,
        p_up=p_up,
        p_down=p_down,
        dt_residual=residual,
    )
    if p_up < 0.0 or p_down < 0.0:
        if on_unbalanceable == "raise":
            raise UnbalanceableError(
                f"flow too high for the power budget: P1 = {p_up:g} W, P2 = {p_down:g} W",
                q=q_flow,
                p1=p_up,
                p2=p_down,
            )
        result = BalanceResult(
            q_ul_min=result.q_ul_min,
            q_flow=q_flow,
            p_total=p_total,
            p_up=p_up,
            p_down=p_down,
            dt_residual=residual,
            flag="unbalanceable",
        )
    return result


def balance_power_bisection(
    model: SensorModel,
    q_flow: float,
    p_total: float,
    rel_tol: float = 1e-9,
    max_iter: int = 80,
) -> BalanceResult:
    """Balance by bisection on the power difference, one full solve per probe.

    Independent of the superposition path; used as a cross-check.  The
    bracket is dp in [-p_total, p_total].
    """
    if p_total <= 0.0:
        raise ValueError("p_total must be positive")

    def residual(dp):
        field = model.solve(
            q_flow, 0.5 * (p_total - dp), 0.5 * (p_total + dp), allow_negative_power=True
        )
        return delta_t_thermopile(field)

    lo, hi = -p_total, p_total
    f_lo, f_hi = residual(lo), residual(hi)
    if f_lo == 0.0:
        dp = lo
    elif f_hi == 0.0:
        dp = hi
    elif f_lo * f_hi > 0.0:
        raise UnbalanceableError(
            "no sign change of dT over dp in [-P_T, P_T]; flow too high for the power budget",
            q=q_flow,
        )
    else:
        for _ in range(max_iter):
            dp = 0.5 * (lo + hi)
            if hi - lo < rel_tol * p_total:
                break
            f_mid = residual(dp)
            if f_mid == 0.0:
                break
            if f_lo * f_mid < 0.0:
                hi = dp
            else:
                lo, f_lo = dp, f_mid
        else:
            raise SolverError("bisection did not converge")

    p_up = 0.5 * (p_total - dp)
    p_down = p_total - p_up
    return BalanceResult(
        q_ul_min=m3s_to_ul_min(q_flow),
        q_flow=q_flow,
        p_total=p_total,
        p_up=p_up,
        p_down=p_down,
        dt_residual=residual(dp),
    )


@dataclass(frozen=True)
class CalibrationCurve:
    """Balance results ordered by strictly increasing flow rate."""

    results: tuple
    p_total: float

    def __post_init__(self):
        qs = [r.q_ul_min for r in self.results]
        if any(b <= a for a, b in zip(qs, qs[1:])):
            raise ValueError("calibration flow rates must be strictly increasing")

    @property
    def q_ul_min(self) -> np.ndarray:
        return np.array([r.q_ul_min for r in self.results])

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.results])

    def ok_points(self):
        return [r for r in self.results if r.flag == "ok"]


def calibration_curve(model: SensorModel, q_list_ul_min, p_total: float) -> CalibrationCurve:
    """Balance every flow rate in q_list_ul_min (sorted, ul/min).

    Unbalanceable points are flagged in place, never dropped; solver errors
    propagate with the offending flow rate attached.
    """
    q_list = list(q_list_ul_min)
    if any(b <= a for a, b in zip(q_list, q_list[1:])):
        raise ValueError("q_list must be strictly increasing")
    results = []
    for q_ul in q_list:
        try:
            results.append(
                balance_power(model, ul_min_to_m3s(q_ul), p_total, on_unbalanceable="flag")
            )
        except SolverError as exc:
            raise SolverError(f"solve failed at Q = {q_ul:g} ul/min: {exc}", exc.residuals)
    return CalibrationCurve(results=tuple(results), p_total=p_total)


@dataclass(frozen=True)
class SensitivityFit:
    """Origin-constrained least-squares slope of ratio vs Q (per ul/min)."""

    slope_per_ul_min: float
    residual_norm: float
    q_max_ul_min: float
    n_points: int


def fit_sensitivity(curve: CalibrationCurve, q_max_ul_min: float) -> SensitivityFit:
    """Least-squares slope of ratio vs Q through the origin, Q <= q_max.

    The fit is constrained through the origin because the symmetric layout
    enforces ratio(0) = 0.
    """
    pts = [r for r in curve.ok_points() if r.q_ul_min <= q_max_ul_min]
    if len(pts) < 3:
        raise ModelError(f"need >= 3 points with Q <= {q_max_ul_min:g} ul/min, got {len(pts)}")
    q = np.array([r.q_ul_min for r in pts])
    ratio = np.array([r.ratio for r in pts])
    qq = float(np.dot(q, q))
    if qq == 0.0:
        raise ModelError("cannot fit a slope on all-zero flow rates")
    slope = float(np.dot(ratio, q)) / qq
    residual = float(np.linalg.norm(ratio - slope * q))
    return SensitivityFit(
        slope_per_ul_min=slope,
        residual_norm=residual,
        q_max_ul_min=q_max_ul_min,
        n_points=len(pts),
    )


def invert_flow(ratio: float, curve: CalibrationCurve) -> float:
    """Flow estimate (ul/min) from an output ratio by monotone interpolation.

    Exact at curve knots.  Ratios outside the curve raise RatioRangeError
    carrying the saturation bounds.
    """
    pts = curve.ok_points()
    if len(pts) < 2:
        raise ModelError("need at least two balanced points to invert")
    q = np.array([r.q_ul_min for r in pts])
    ratios = np.array([r.ratio for r in pts])
    if np.any(np.diff(ratios) <= 0.0):
        raise ModelError("calibration curve is not strictly monotone in ratio")
    if ratio < ratios[0] or ratio > ratios[-1]:
        raise RatioRangeError(
            f"ratio {ratio:g} outside calibrated range [{ratios[0]:g}, {ratios[-1]:g}]",
            ratio_min=float(ratios[0]),
            ratio_max=float(ratios[-1]),
        )
    return float(np.interp(ratio, ratios, q))
