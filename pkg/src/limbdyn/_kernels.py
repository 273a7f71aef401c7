"""Hot numeric kernels, written once in numba-compatible NumPy.

Every kernel here comes in two flavours: ``*_py`` is the plain function
(the pure-NumPy path) and the unsuffixed name is the numba compilation of
the same source when numba is importable.  The loop-style ``cost_batch``
additionally has a vectorised NumPy twin next to its call site in
``optimizer``.

Conventions:

* generalized coordinates ``q = (theta, phi, alpha, psi)`` in radians,
  rates ``qd`` in rad/s;
* ``locs`` rows: body-fixed COM of 'us-s', COM of 'ls', the ankle point,
  COM offsets of 'ff' and 'fp-f' from the ankle point (metres, knee
  origin, zero configuration);
* ``inertias``: per-body 3x3 tensors about the COM in body axes;
* ``scalars = (g, knee_spring, knee_damping)``;
* ``kq`` rows hold quartic stiffness coefficients ``(c4, c3, c2, c1, c0)``
  for the alpha, phi and psi joints;
* ``elastic_mode``: 0 = restoring torque K(q)*q, 1 = integral of K.
"""

import numpy as np

from .backend import USING_NUMBA, jit


def dyn_core_py(q, qd, masses, inertias, locs, scalars, kq, elastic_mode):
    """Mass matrix M(q) and bias b(q, qd) such that M qdd + b = Q.

    Q carries the applied torques and the knee damper; b carries
    centrifugal/Coriolis, gravity and elastic terms.
    """
    g = scalars[0]
    k_knee = scalars[1]

    th = q[0]
    ph = q[1]
    al = q[2]
    ps = q[3]

    ct, st = np.cos(th), np.sin(th)
    cp, sp = np.cos(ph), np.sin(ph)
    ca, sa = np.cos(al), np.sin(al)
    cs, ss = np.cos(ps), np.sin(ps)

    Ra = np.empty((3, 3))
    Ra[0, 0] = 1.0; Ra[0, 1] = 0.0; Ra[0, 2] = 0.0
    Ra[1, 0] = 0.0; Ra[1, 1] = ct;  Ra[1, 2] = -st
    Ra[2, 0] = 0.0; Ra[2, 1] = st;  Ra[2, 2] = ct

    Rz = np.empty((3, 3))
    Rz[0, 0] = cp;  Rz[0, 1] = -sp; Rz[0, 2] = 0.0
    Rz[1, 0] = sp;  Rz[1, 1] = cp;  Rz[1, 2] = 0.0
    Rz[2, 0] = 0.0; Rz[2, 1] = 0.0; Rz[2, 2] = 1.0

    Rx = np.empty((3, 3))
    Rx[0, 0] = 1.0; Rx[0, 1] = 0.0; Rx[0, 2] = 0.0
    Rx[1, 0] = 0.0; Rx[1, 1] = ca;  Rx[1, 2] = -sa
    Rx[2, 0] = 0.0; Rx[2, 1] = sa;  Rx[2, 2] = ca

    Ry = np.empty((3, 3))
    Ry[0, 0] = cs;  Ry[0, 1] = 0.0; Ry[0, 2] = ss
    Ry[1, 0] = 0.0; Ry[1, 1] = 1.0; Ry[1, 2] = 0.0
    Ry[2, 0] = -ss; Ry[2, 1] = 0.0; Ry[2, 2] = cs

    Rb = Ra @ Rz
    Rc = Rb @ Rx
    Rd = Rc @ Ry

    ia = Ra[:, 0].copy()
    kb = Rb[:, 2].copy()
    ic = Rc[:, 0].copy()
    jd = Rd[:, 1].copy()

    c1 = Ra @ locs[0]
    c2 = Rb @ locs[1]
    bp = Ra @ locs[2]
    r3 = Rc @ locs[3]
    r4 = Rd @ locs[4]
    c3 = bp + r3
    c4 = bp + r4

    w1 = qd[0] * ia
    w2 = w1 + qd[1] * kb
    w3 = w2 + qd[2] * ic
    w4 = w3 + qd[3] * jd

    I1 = Ra @ inertias[0] @ Ra.T
    I2 = Rb @ inertias[1] @ Rb.T
    I3 = Rc @ inertias[2] @ Rc.T
    I4 = Rd @ inertias[3] @ Rd.T

    # geometric Jacobians (columns ordered theta, phi, alpha, psi)
    Jw1 = np.zeros((3, 4))
    Jv1 = np.zeros((3, 4))
    Jw1[:, 0] = ia
    Jv1[:, 0] = np.cross(ia, c1)

    Jw2 = np.zeros((3, 4))
    Jv2 = np.zeros((3, 4))
    Jw2[:, 0] = ia
    Jw2[:, 1] = kb
    Jv2[:, 0] = np.cross(ia, c2)
    Jv2[:, 1] = np.cross(kb, c2)

    Jw3 = np.zeros((3, 4))
    Jv3 = np.zeros((3, 4))
    Jw3[:, 0] = ia
    Jw3[:, 1] = kb
    Jw3[:, 2] = ic
    Jv3[:, 0] = np.cross(ia, c3)
    Jv3[:, 1] = np.cross(kb, c3)
    Jv3[:, 2] = np.cross(ic, r3)

    Jw4 = np.zeros((3, 4))
    Jv4 = np.zeros((3, 4))
    Jw4[:, 0] = ia
    Jw4[:, 1] = kb
    Jw4[:, 2] = ic
    Jw4[:, 3] = jd
    Jv4[:, 0] = np.cross(ia, c4)
    Jv4[:, 1] = np.cross(kb, c4)
    Jv4[:, 2] = np.cross(ic, r4)
    Jv4[:, 3] = np.cross(jd, r4)

    M = np.zeros((4, 4))
    M += masses[0] * (Jv1.T @ Jv1) + Jw1.T @ (I1 @ Jw1)
    M += masses[1] * (Jv2.T @ Jv2) + Jw2.T @ (I2 @ Jw2)
    M += masses[2] * (Jv3.T @ Jv3) + Jw3.T @ (I3 @ Jw3)
    M += masses[3] * (Jv4.T @ Jv4) + Jw4.T @ (I4 @ Jw4)

    # Newton-Euler sweep at qdd = 0 for the bias vector
    wd2 = qd[1] * np.cross(w2, kb)
    wd3 = wd2 + qd[2] * np.cross(w3, ic)
    wd4 = wd3 + qd[3] * np.cross(w4, jd)

    a1 = np.cross(w1, np.cross(w1, c1))
    a2 = np.cross(wd2, c2) + np.cross(w2, np.cross(w2, c2))
    ab = np.cross(wd2, bp) + np.cross(w2, np.cross(w2, bp))
    a3 = ab + np.cross(wd3, r3) + np.cross(w3, np.cross(w3, r3))
    a4 = ab + np.cross(wd4, r4) + np.cross(w4, np.cross(w4, r4))

    gvec = np.zeros(3)
    gvec[2] = -g

    F1 = masses[0] * (a1 - gvec)
    F2 = masses[1] * (a2 - gvec)
    F3 = masses[2] * (a3 - gvec)
    F4 = masses[3] * (a4 - gvec)

    N1 = np.cross(w1, I1 @ w1)
    N2 = I2 @ wd2 + np.cross(w2, I2 @ w2)
    N3 = I3 @ wd3 + np.cross(w3, I3 @ w3)
    N4 = I4 @ wd4 + np.cross(w4, I4 @ w4)

    m_all = (N1 + np.cross(c1, F1) + N2 + np.cross(c2, F2)
             + N3 + np.cross(c3, F3) + N4 + np.cross(c4, F4))
    m_distal = (N2 + np.cross(c2, F2) + N3 + np.cross(c3, F3)
                + N4 + np.cross(c4, F4))
    m_foot = N3 + np.cross(r3, F3) + N4 + np.cross(r4, F4)
    m_plate = N4 + np.cross(r4, F4)

    b = np.empty(4)
    b[0] = ia[0] * m_all[0] + ia[1] * m_all[1] + ia[2] * m_all[2]
    b[1] = kb[0] * m_distal[0] + kb[1] * m_distal[1] + kb[2] * m_distal[2]
    b[2] = ic[0] * m_foot[0] + ic[1] * m_foot[1] + ic[2] * m_foot[2]
    b[3] = jd[0] * m_plate[0] + jd[1] * m_plate[1] + jd[2] * m_plate[2]

    b[0] += k_knee * th
    # elastic restoring torques from the quartic stiffness fits
    for jj in range(3):
        x = q[1 + jj]
        if jj == 0:
            c = kq[1]
        elif jj == 1:
            c = kq[0]
        else:
            c = kq[2]
        if elastic_mode == 0:
            k = (((c[0] * x + c[1]) * x + c[2]) * x + c[3]) * x + c[4]
            b[1 + jj] += k * x
        else:
            b[1 + jj] += ((((c[0] / 5.0 * x + c[1] / 4.0) * x + c[2] / 3.0)
                           * x + c[3] / 2.0) * x + c[4]) * x

    return M, b


dyn_core = jit(dyn_core_py)


def inverse_sweep_py(core, qs, qds, qdds, masses, inertias, locs, scalars,
                     kq, elastic_mode):
    """Applied torques (T_theta, T_phi, T_alpha, T_psi) along a trajectory."""
    n = qs.shape[0]
    out = np.empty((n, 4))
    knee_c = scalars[2]
    for i in range(n):
        M, b = core(qs[i], qds[i], masses, inertias, locs, scalars, kq,
                    elastic_mode)
        tau = M @ qdds[i] + b
        out[i, 0] = tau[0] + knee_c * qds[i, 0]
        out[i, 1] = tau[1]
        out[i, 2] = tau[2]
        out[i, 3] = tau[3]
    return out


inverse_sweep = jit(inverse_sweep_py)


def constrained_rhs_py(core, y, u, coupling, masses, inertias, locs, scalars,
                       kq, elastic_mode):
    """Reduced accelerations under the psi = coupling*phi constraint.

    ``y = (theta, phi, alpha, theta_dot, phi_dot, alpha_dot)``; ``u`` is the
    applied (T_theta, T_phi, T_alpha).  Returns the three accelerations and
    the constraint torque T_psi the foot must supply.
    """
    q = np.empty(4)
    qd = np.empty(4)
    q[0] = y[0]; q[1] = y[1]; q[2] = y[2]; q[3] = coupling * y[1]
    qd[0] = y[3]; qd[1] = y[4]; qd[2] = y[5]; qd[3] = coupling * y[4]
    M, b = core(q, qd, masses, inertias, locs, scalars, kq, elastic_mode)
    knee_c = scalars[2]

    A = np.empty((3, 3))
    for r in range(3):
        A[r, 0] = M[r, 0]
        A[r, 1] = M[r, 1] + coupling * M[r, 3]
        A[r, 2] = M[r, 2]
    rhs = np.empty(3)
    rhs[0] = u[0] - knee_c * y[3] - b[0]
    rhs[1] = u[1] - b[1]
    rhs[2] = u[2] - b[2]
    acc = np.linalg.solve(A, rhs)
    t_psi = (M[3, 0] * acc[0] + (M[3, 1] + coupling * M[3, 3]) * acc[1]
             + M[3, 2] * acc[2] + b[3])
    return acc, t_psi


constrained_rhs = jit(constrained_rhs_py)


def simulate_loop_py(core, rhs, y0, refs, dt, kp, ki, stall, vmax, gear,
                     coupling, masses, inertias, locs, scalars, kq,
                     elastic_mode):
    """Fixed-step RK4 closed loop: three PI controllers with torque-speed
    limited motors, commands held constant over each step.

    ``refs`` has one (theta, phi, alpha) row per sample.  Returns the state
    history, applied torque history (incl. the constraint torque) and the
    index of the first non-finite sample (-1 when the run stays finite).
    """
    n = refs.shape[0]
    states = np.empty((n, 6))
    torques = np.empty((n, 4))
    integ = np.zeros(3)
    e_prev = np.zeros(3)
    y = y0.copy()
    u = np.zeros(3)
    fail = -1

    for i in range(n):
        ok = True
        for j in range(6):
            if not np.isfinite(y[j]):
                ok = False
        if not ok:
            fail = i
            states[i:] = np.nan
            torques[i:] = np.nan
            break
        states[i] = y

        for k in range(3):
            e = refs[i, k] - y[k]
            if i == 0:
                e_prev[k] = e
            cand = integ[k] + 0.5 * dt * (e + e_prev[k])
            raw = kp[k] * e + ki[k] * cand
            motor_speed = np.abs(y[3 + k]) * gear[k]
            derate = 1.0 - motor_speed / vmax[k]
            if derate < 0.0:
                derate = 0.0
            limit = stall[k] * derate
            if raw > limit:
                u[k] = limit
            elif raw < -limit:
                u[k] = -limit
            else:
                u[k] = raw
                integ[k] = cand
            e_prev[k] = e

        k1, t_psi = rhs(core, y, u, coupling, masses, inertias, locs, scalars,
                        kq, elastic_mode)
        torques[i, 0] = u[0]
        torques[i, 1] = u[1]
        torques[i, 2] = u[2]
        torques[i, 3] = t_psi

        if i == n - 1:
            break

        d1 = np.empty(6)
        d1[0] = y[3]; d1[1] = y[4]; d1[2] = y[5]
        d1[3] = k1[0]; d1[4] = k1[1]; d1[5] = k1[2]

        ya = y + 0.5 * dt * d1
        k2, _ = rhs(core, ya, u, coupling, masses, inertias, locs, scalars,
                    kq, elastic_mode)
        d2 = np.empty(6)
        d2[0] = ya[3]; d2[1] = ya[4]; d2[2] = ya[5]
        d2[3] = k2[0]; d2[4] = k2[1]; d2[5] = k2[2]

        yb = y + 0.5 * dt * d2
        k3, _ = rhs(core, yb, u, coupling, masses, inertias, locs, scalars,
                    kq, elastic_mode)
        d3 = np.empty(6)
        d3[0] = yb[3]; d3[1] = yb[4]; d3[2] = yb[5]
        d3[3] = k3[0]; d3[4] = k3[1]; d3[5] = k3[2]

        yc = y + dt * d3
        k4, _ = rhs(core, yc, u, coupling, masses, inertias, locs, scalars,
                    kq, elastic_mode)
        d4 = np.empty(6)
        d4[0] = yc[3]; d4[1] = yc[4]; d4[2] = yc[5]
        d4[3] = k4[0]; d4[4] = k4[1]; d4[5] = k4[2]

        y = y + (dt / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)

    return states, torques, fail


simulate_loop = jit(simulate_loop_py)


def cost_batch_py(pop, x0, targets):
    """Axis-placement cost for a population of design vectors.

    ``pop`` rows are (L, phi_1..11, alpha_1..11, psi_1..11); ``x0`` rows the
    neutral P'/M'/N' points; ``targets[sample, point]`` the swept triples.
    Cost is the mean over samples of summed point distances.
    """
    n_pop = pop.shape[0]
    n_s = targets.shape[0]
    costs = np.zeros(n_pop)
    for t in range(n_pop):
        L = pop[t, 0]
        acc = 0.0
        for i in range(n_s):
            cp = np.cos(pop[t, 1 + i]); sp = np.sin(pop[t, 1 + i])
            ca = np.cos(pop[t, 12 + i]); sa = np.sin(pop[t, 12 + i])
            cs = np.cos(pop[t, 23 + i]); ss = np.sin(pop[t, 23 + i])
            for p in range(3):
                ux = x0[p, 0]
                uy = x0[p, 1]
                uz = x0[p, 2] + L
                vx = cs * ux + ss * uz
                vy = uy
                vz = -ss * ux + cs * uz - L
                wy = ca * vy - sa * vz
                wz = sa * vy + ca * vz
                xx = cp * vx - sp * wy
                xy = sp * vx + cp * wy
                dx = targets[i, p, 0] - xx
                dy = targets[i, p, 1] - xy
                dz = targets[i, p, 2] - wz
                acc += np.sqrt(dx * dx + dy * dy + dz * dz)
        costs[t] = acc / n_s
    return costs


cost_batch = jit(cost_batch_py)


def dyn_core_active():
    return dyn_core if USING_NUMBA else dyn_core_py


def inverse_sweep_active():
    return inverse_sweep if USING_NUMBA else inverse_sweep_py


def constrained_rhs_active():
    return constrained_rhs if USING_NUMBA else constrained_rhs_py


def simulate_loop_active():
    return simulate_loop if USING_NUMBA else simulate_loop_py
