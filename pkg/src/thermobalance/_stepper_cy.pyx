# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled closed/open-loop stepping kernel.

Direct transliteration of ``_stepper_py.run_loop``; see that module for the
noise-block layout and output-column contract.  Arithmetic follows the same
expression order so results are bit-identical to the pure-Python kernel.
"""

from libc.math cimport sqrt

import numpy as np

from .errors import ModelError


def run_loop(
    double[:, ::1] noise,
    double[::1] q_ul,
    double[::1] d1_eff,
    double[::1] d2_eff,
    double[::1] e11,
    double[::1] e22,
    double[::1] fl_coeff,
    double[::1] fl_gain,
    double[::1] amb_coeff,
    double[::1] amb_gain,
    double[:, ::1] out,
    int closed,
    int anti_windup,
    double dp_fixed,
    double kp,
    double ki,
    double dp_max,
    double dt,
    double p_total,
    double relax,
    double r0_up,
    double r0_down,
    double tcr,
    double smu_noise,
    double ns_alpha,
    double beta_tp,
    double sigma_v,
    double amb_coupling,
    double fl_sigma,
    double amb_sigma,
    double dt0,
):
    cdef Py_ssize_t n = out.shape[0]
    cdef Py_ssize_t n_oct = fl_coeff.shape[0]
    cdef Py_ssize_t n_amb = amb_coeff.shape[0]
    cdef Py_ssize_t k, j

    cdef double[::1] x_up = np.zeros(n_oct)
    cdef double[::1] x_down = np.zeros(n_oct)
    cdef double[::1] x_amb = np.zeros(n_amb)

    cdef double drift_up = 0.0
    cdef double drift_down = 0.0
    cdef double amb = 0.0
    for j in range(n_oct):
        x_up[j] = fl_sigma * noise[0, 3 + j]
        drift_up += x_up[j]
    for j in range(n_oct):
        x_down[j] = fl_sigma * noise[0, 3 + n_oct + j]
        drift_down += x_down[j]
    for j in range(n_amb):
        x_amb[j] = amb_sigma * noise[0, 3 + 2 * n_oct + j]
        amb += x_amb[j]

    cdef double r_up = r0_up * (1.0 + tcr * amb) * (1.0 + drift_up)
    cdef double r_down = r0_down * (1.0 + tcr * amb) * (1.0 + drift_down)
    cdef double delta_t = dt0
    cdef double integ = 0.0

    cdef double z_vm, z_s1, z_s2, v, err, u_raw, u, p1, p2
    cdef double e1, e2, rm, i1, i2, p1a, p2a, rise_up, rise_down, dt_ss

    for k in range(n):
        z_vm = noise[k + 1, 0]
        z_s1 = noise[k + 1, 1]
        z_s2 = noise[k + 1, 2]

        v = ns_alpha * delta_t * (1.0 + beta_tp * delta_t) + sigma_v * z_vm

        if closed:
            err = -v
            u_raw = kp * err + integ
            if u_raw > dp_max:
                u = dp_max
            elif u_raw < -dp_max:
                u = -dp_max
            else:
                u = u_raw
            if anti_windup:
                if not ((u_raw > dp_max and err > 0.0) or (u_raw < -dp_max and err < 0.0)):
                    integ = integ + ki * err * dt
            else:
                integ = integ + ki * err * dt
        else:
            u = dp_fixed

        p1 = 0.5 * (p_total - u)
        p2 = 0.5 * (p_total + u)

        e1 = smu_noise * z_s1
        if e1 == 0.0:
            p1a = p1
        else:
            rm = r_up * (1.0 + e1)
            if rm <= 0.0:
                raise ModelError(f"plant failure at sample {k}: nonpositive measured resistance")
            i1 = sqrt(p1 / rm)
            p1a = i1 * i1 * r_up
        e2 = smu_noise * z_s2
        if e2 == 0.0:
            p2a = p2
        else:
            rm = r_down * (1.0 + e2)
            if rm <= 0.0:
                raise ModelError(f"plant failure at sample {k}: nonpositive measured resistance")
            i2 = sqrt(p2 / rm)
            p2a = i2 * i2 * r_down

        out[k, 0] = k * dt
        out[k, 1] = q_ul[k]
        out[k, 2] = p1
        out[k, 3] = p2
        out[k, 4] = r_up
        out[k, 5] = r_down
        out[k, 6] = v
        out[k, 7] = u
        out[k, 8] = u / p_total

        drift_up = 0.0
        for j in range(n_oct):
            x_up[j] = fl_coeff[j] * x_up[j] + fl_gain[j] * noise[k + 1, 3 + j]
            drift_up += x_up[j]
        drift_down = 0.0
        for j in range(n_oct):
            x_down[j] = fl_coeff[j] * x_down[j] + fl_gain[j] * noise[k + 1, 3 + n_oct + j]
            drift_down += x_down[j]
        amb = 0.0
        for j in range(n_amb):
            x_amb[j] = amb_coeff[j] * x_amb[j] + amb_gain[j] * noise[k + 1, 3 + 2 * n_oct + j]
            amb += x_amb[j]

        rise_up = e11[k] * p1a + amb
        rise_down = e22[k] * p2a + amb
        r_up = r0_up * (1.0 + tcr * rise_up) * (1.0 + drift_up)
        r_down = r0_down * (1.0 + tcr * rise_down) * (1.0 + drift_down)
        if r_up <= 0.0 or r_down <= 0.0:
            raise ModelError(f"plant failure at sample {k}: nonpositive heater resistance")

        dt_ss = p1a * d1_eff[k] + p2a * d2_eff[k] + amb_coupling * amb
        delta_t = dt_ss + (delta_t - dt_ss) * relax
