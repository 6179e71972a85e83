"""Pure-Python closed/open-loop stepping kernel.

Reference implementation of the per-sample simulation loop; the compiled
kernel in ``_stepper_cy`` transliterates this file expression for
expression so both produce bit-identical trajectories from the same
pre-drawn noise block.

Noise block layout (shape (n+1, 3 + 3*n_oct) of standard normals):
  row 0:      octave-state initial draws (columns 3.. as below; 0..2 unused)
  row k+1:    sample k: [0] voltmeter, [1] SMU up, [2] SMU down,
              [3:3+n_oct] flicker up, [3+n_oct:3+2n] flicker down,
              [3+2n:3+3n] ambient

Output matrix columns: t_s, Q_ul_min, P1_W, P2_W, R1_ohm, R2_ohm,
Vtc_V, dP_W, ratio.  Logged powers are the commanded ones (their sum is
P_T by construction); logged resistances are the true values during
actuation, before the end-of-sample process update.
"""

from math import exp, sqrt

from .errors import ModelError


def run_loop(
    noise,
    q_ul,
    d1_eff,
    d2_eff,
    e11,
    e22,
    fl_coeff,
    fl_gain,
    amb_coeff,
    amb_gain,
    out,
    closed,
    anti_windup,
    dp_fixed,
    kp,
    ki,
    dp_max,
    dt,
    p_total,
    relax,
    r0_up,
    r0_down,
    tcr,
    smu_noise,
    ns_alpha,
    beta_tp,
    sigma_v,
    amb_coupling,
    fl_sigma,
    amb_sigma,
    dt0,
):
    n = out.shape[0]
    n_oct = fl_coeff.shape[0]
    n_amb = amb_coeff.shape[0]

    x_up = [0.0] * n_oct
    x_down = [0.0] * n_oct
    x_amb = [0.0] * n_amb

    drift_up = 0.0
    drift_down = 0.0
    amb = 0.0
    for j in range(n_oct):
        x_up[j] = fl_sigma * noise[0, 3 + j]
        drift_up += x_up[j]
    for j in range(n_oct):
        x_down[j] = fl_sigma * noise[0, 3 + n_oct + j]
        drift_down += x_down[j]
    for j in range(n_amb):
        x_amb[j] = amb_sigma * noise[0, 3 + 2 * n_oct + j]
        amb += x_amb[j]

    r_up = r0_up * (1.0 + tcr * amb) * (1.0 + drift_up)
    r_down = r0_down * (1.0 + tcr * amb) * (1.0 + drift_down)
    delta_t = dt0
    integ = 0.0

    for k in range(n):
        z_vm = noise[k + 1, 0]
        z_s1 = noise[k + 1, 1]
        z_s2 = noise[k + 1, 2]

        # measure thermopile
        v = ns_alpha * delta_t * (1.0 + beta_tp * delta_t) + sigma_v * z_vm

        # command the power difference
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

        # power-mode actuation (dissipated power independent of drift)
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

        # advance drift processes and relax the plant
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
