"""Numba kernels for the rigid-body plant.

Everything here operates on raw float64 arrays so the hot loops (settling
integration, torque-profile playback) compile to machine code. The model
is a serial chain of revolute joints with point-mass links: link i extends
along its local x axis, joint i rotates the chain about ``axes[i]`` given
in the parent frame. A small per-joint rotor inertia keeps the mass matrix
positive definite even when all downstream point masses fall on a joint
axis (e.g. a roll joint of a straight arm).

The integrator loops preallocate one workspace and never allocate inside
the stepping loop; settling a 2R arm costs around a microsecond per step.
"""

import numpy as np
from numba import njit

# settle() status codes
SETTLED = 0
LIMIT_VIOLATION = 1
TIMEOUT = 2


@njit(cache=True, inline="always")
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit(cache=True)
def _rot_axis(axis, angle, out):
    """Rodrigues rotation matrix about a unit axis."""
    c = np.cos(angle)
    s = np.sin(angle)
    x, y, z = axis[0], axis[1], axis[2]
    out[0, 0] = c + x * x * (1.0 - c)
    out[0, 1] = x * y * (1.0 - c) - z * s
    out[0, 2] = x * z * (1.0 - c) + y * s
    out[1, 0] = y * x * (1.0 - c) + z * s
    out[1, 1] = c + y * y * (1.0 - c)
    out[1, 2] = y * z * (1.0 - c) - x * s
    out[2, 0] = z * x * (1.0 - c) - y * s
    out[2, 1] = z * y * (1.0 - c) + x * s
    out[2, 2] = c + z * z * (1.0 - c)


def _alloc_ws(n):
    """Workspace arrays shared by the fused dynamics routines."""
    return (
        np.empty((n, 3)),  # joint_pos
        np.empty((n, 3)),  # axis_world
        np.empty((n, 3)),  # link_dir
        np.empty((n, 3)),  # com_pos
        np.empty((n, n, 3)),  # jac: column i of the COM-k Jacobian
        np.empty((3, 3)),  # Rj
        np.empty((3, 3)),  # R
        np.empty((3, 3)),  # Rtmp
        np.empty(3),  # t0
        np.empty(3),  # t1
        np.empty(3),  # t2
        np.empty((n, n)),  # M
        np.empty(n),  # rhs
        np.empty(n),  # grav
    )


_WS_CACHE: dict = {}


def workspace(n: int):
    ws = _WS_CACHE.get(n)
    if ws is None:
        ws = _alloc_ws(n)
        _WS_CACHE[n] = ws
    return ws


@njit(cache=True)
def _frames(axes, lengths, coms, q, joint_pos, axis_world, link_dir, com_pos, Rj, R, Rtmp):
    """Forward pass: joint origins, world joint axes, link directions, COMs."""
    n = q.shape[0]
    for r in range(3):
        for c in range(3):
            R[r, c] = 1.0 if r == c else 0.0
    px = 0.0
    py = 0.0
    pz = 0.0
    for i in range(n):
        axis_world[i, 0] = R[0, 0] * axes[i, 0] + R[0, 1] * axes[i, 1] + R[0, 2] * axes[i, 2]
        axis_world[i, 1] = R[1, 0] * axes[i, 0] + R[1, 1] * axes[i, 1] + R[1, 2] * axes[i, 2]
        axis_world[i, 2] = R[2, 0] * axes[i, 0] + R[2, 1] * axes[i, 1] + R[2, 2] * axes[i, 2]
        _rot_axis(axes[i], q[i], Rj)
        for r in range(3):
            for c in range(3):
                s = 0.0
                for k in range(3):
                    s += R[r, k] * Rj[k, c]
                Rtmp[r, c] = s
        for r in range(3):
            for c in range(3):
                R[r, c] = Rtmp[r, c]
        joint_pos[i, 0] = px
        joint_pos[i, 1] = py
        joint_pos[i, 2] = pz
        link_dir[i, 0] = R[0, 0]
        link_dir[i, 1] = R[1, 0]
        link_dir[i, 2] = R[2, 0]
        com_pos[i, 0] = px + coms[i] * R[0, 0]
        com_pos[i, 1] = py + coms[i] * R[1, 0]
        com_pos[i, 2] = pz + coms[i] * R[2, 0]
        px += lengths[i] * R[0, 0]
        py += lengths[i] * R[1, 0]
        pz += lengths[i] * R[2, 0]


@njit(cache=True)
def _gravity_from_frames(masses, gravity, joint_pos, axis_world, com_pos, out, t0, t1):
    """G(q) given precomputed frames: sum of gravity moments about each axis."""
    n = out.shape[0]
    for i in range(n):
        out[i] = 0.0
    for k in range(n):
        t0[0] = -masses[k] * gravity[0]
        t0[1] = -masses[k] * gravity[1]
        t0[2] = -masses[k] * gravity[2]
        for i in range(k + 1):
            t1[0] = com_pos[k, 0] - joint_pos[i, 0]
            t1[1] = com_pos[k, 1] - joint_pos[i, 1]
            t1[2] = com_pos[k, 2] - joint_pos[i, 2]
            mx = t1[1] * t0[2] - t1[2] * t0[1]
            my = t1[2] * t0[0] - t1[0] * t0[2]
            mz = t1[0] * t0[1] - t1[1] * t0[0]
            out[i] += axis_world[i, 0] * mx + axis_world[i, 1] * my + axis_world[i, 2] * mz


@njit(cache=True)
def _coriolis_accum(
    masses, qd, joint_pos, axis_world, link_dir, com_pos, coms, lengths, out, t0, t1, t2
):
    """Adds the velocity bias C(q, qd) qd to out (RNEA pass with qdd = 0,
    gravity off): out_i += axis_i . ((com_k - p_i) x m_k a_com_k)."""
    n = qd.shape[0]
    wx = 0.0
    wy = 0.0
    wz = 0.0
    ax = 0.0
    ay = 0.0
    az = 0.0  # angular acceleration (qdd = 0 part)
    jx = 0.0
    jy = 0.0
    jz = 0.0  # linear acceleration of joint origin
    for i in range(n):
        # alpha += qd_i * (w x axis_i)
        cx = wy * axis_world[i, 2] - wz * axis_world[i, 1]
        cy = wz * axis_world[i, 0] - wx * axis_world[i, 2]
        cz = wx * axis_world[i, 1] - wy * axis_world[i, 0]
        ax += qd[i] * cx
        ay += qd[i] * cy
        az += qd[i] * cz
        wx += qd[i] * axis_world[i, 0]
        wy += qd[i] * axis_world[i, 1]
        wz += qd[i] * axis_world[i, 2]
        # COM acceleration of link i
        rx = coms[i] * link_dir[i, 0]
        ry = coms[i] * link_dir[i, 1]
        rz = coms[i] * link_dir[i, 2]
        # a_com = j + alpha x r + w x (w x r)
        c1x = ay * rz - az * ry
        c1y = az * rx - ax * rz
        c1z = ax * ry - ay * rx
        wxr_x = wy * rz - wz * ry
        wxr_y = wz * rx - wx * rz
        wxr_z = wx * ry - wy * rx
        c2x = wy * wxr_z - wz * wxr_y
        c2y = wz * wxr_x - wx * wxr_z
        c2z = wx * wxr_y - wy * wxr_x
        t2[0] = jx + c1x + c2x
        t2[1] = jy + c1y + c2y
        t2[2] = jz + c1z + c2z
        # force on link i: m_i * a_com, torque about each upstream axis
        fx = masses[i] * t2[0]
        fy = masses[i] * t2[1]
        fz = masses[i] * t2[2]
        for ii in range(i + 1):
            dx = com_pos[i, 0] - joint_pos[ii, 0]
            dy = com_pos[i, 1] - joint_pos[ii, 1]
            dz = com_pos[i, 2] - joint_pos[ii, 2]
            mx = dy * fz - dz * fy
            my = dz * fx - dx * fz
            mz = dx * fy - dy * fx
            out[ii] += (
                axis_world[ii, 0] * mx + axis_world[ii, 1] * my + axis_world[ii, 2] * mz
            )
        # advance joint-origin acceleration across link i
        rx = lengths[i] * link_dir[i, 0]
        ry = lengths[i] * link_dir[i, 1]
        rz = lengths[i] * link_dir[i, 2]
        c1x = ay * rz - az * ry
        c1y = az * rx - ax * rz
        c1z = ax * ry - ay * rx
        wxr_x = wy * rz - wz * ry
        wxr_y = wz * rx - wx * rz
        wxr_z = wx * ry - wy * rx
        c2x = wy * wxr_z - wz * wxr_y
        c2y = wz * wxr_x - wx * wxr_z
        c2z = wx * wxr_y - wy * wxr_x
        jx += c1x + c2x
        jy += c1y + c2y
        jz += c1z + c2z


@njit(cache=True)
def _mass_from_frames(masses, rotor, joint_pos, axis_world, com_pos, jac, M):
    """M(q) = sum_k m_k J_k^T J_k + diag(rotor) from precomputed frames."""
    n = M.shape[0]
    for i in range(n):
        for j in range(n):
            M[i, j] = 0.0
        M[i, i] = rotor[i]
    for k in range(n):
        for i in range(k + 1):
            dx = com_pos[k, 0] - joint_pos[i, 0]
            dy = com_pos[k, 1] - joint_pos[i, 1]
            dz = com_pos[k, 2] - joint_pos[i, 2]
            jac[k, i, 0] = axis_world[i, 1] * dz - axis_world[i, 2] * dy
            jac[k, i, 1] = axis_world[i, 2] * dx - axis_world[i, 0] * dz
            jac[k, i, 2] = axis_world[i, 0] * dy - axis_world[i, 1] * dx
        for i in range(k + 1):
            for j in range(i + 1):
                v = masses[k] * (
                    jac[k, i, 0] * jac[k, j, 0]
                    + jac[k, i, 1] * jac[k, j, 1]
                    + jac[k, i, 2] * jac[k, j, 2]
                )
                M[i, j] += v
                if i != j:
                    M[j, i] += v


@njit(cache=True, inline="always")
def _solve_inplace(A, b):
    """Gaussian elimination with partial pivoting; overwrites A and b."""
    n = b.shape[0]
    for k in range(n):
        piv = k
        best = abs(A[k, k])
        for i in range(k + 1, n):
            if abs(A[i, k]) > best:
                best = abs(A[i, k])
                piv = i
        if piv != k:
            for j in range(n):
                tmp = A[k, j]
                A[k, j] = A[piv, j]
                A[piv, j] = tmp
            tmp = b[k]
            b[k] = b[piv]
            b[piv] = tmp
        akk = A[k, k]
        for i in range(k + 1, n):
            f = A[i, k] / akk
            for j in range(k, n):
                A[i, j] -= f * A[k, j]
            b[i] -= f * b[k]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for j in range(i + 1, n):
            s -= A[i, j] * b[j]
        b[i] = s / A[i, i]


@njit(cache=True)
def _step(
    axes, lengths, coms, masses, rotor, gravity, damping, q, qd, tau, dt,
    joint_pos, axis_world, link_dir, com_pos, jac, Rj, R, Rtmp,
    t0, t1, t2, M, rhs, grav,
):
    """One semi-implicit Euler step; q, qd updated in place."""
    n = q.shape[0]
    _frames(axes, lengths, coms, q, joint_pos, axis_world, link_dir, com_pos, Rj, R, Rtmp)
    _gravity_from_frames(masses, gravity, joint_pos, axis_world, com_pos, grav, t0, t1)
    for i in range(n):
        rhs[i] = tau[i] - grav[i] - damping[i] * qd[i]
    # subtract velocity bias (reuse grav as scratch)
    for i in range(n):
        grav[i] = 0.0
    _coriolis_accum(
        masses, qd, joint_pos, axis_world, link_dir, com_pos, coms, lengths, grav, t0, t1, t2
    )
    for i in range(n):
        rhs[i] -= grav[i]
    _mass_from_frames(masses, rotor, joint_pos, axis_world, com_pos, jac, M)
    _solve_inplace(M, rhs)
    for i in range(n):
        qd[i] += dt * rhs[i]
        q[i] += dt * qd[i]


@njit(cache=True)
def settle(
    axes, lengths, coms, masses, rotor, gravity, damping, q_lo, q_hi,
    q0, qd0, tau, dt, vel_tol, eq_tol, window_steps, max_steps,
    joint_pos, axis_world, link_dir, com_pos, jac, Rj, R, Rtmp,
    t0, t1, t2, M, rhs, grav,
):
    """Integrate under constant torque until the arm rests at an equilibrium
    of the gravity term, a joint limit is crossed, or the step budget runs
    out.

    Settled means |qd|_inf < vel_tol for window_steps consecutive steps and
    |G(q) - tau|_inf <= eq_tol. Returns (status, q, qd, steps).
    """
    n = q0.shape[0]
    q = q0.copy()
    qd = qd0.copy()
    calm = 0
    for step in range(1, max_steps + 1):
        _step(
            axes, lengths, coms, masses, rotor, gravity, damping, q, qd, tau, dt,
            joint_pos, axis_world, link_dir, com_pos, jac, Rj, R, Rtmp,
            t0, t1, t2, M, rhs, grav,
        )
        vmax = 0.0
        for i in range(n):
            if q[i] < q_lo[i] or q[i] > q_hi[i]:
                return LIMIT_VIOLATION, q, qd, step
            a = abs(qd[i])
            if a > vmax:
                vmax = a
        if vmax < vel_tol:
            calm += 1
        else:
            calm = 0
        if calm >= window_steps:
            _frames(axes, lengths, coms, q, joint_pos, axis_world, link_dir, com_pos, Rj, R, Rtmp)
            _gravity_from_frames(masses, gravity, joint_pos, axis_world, com_pos, grav, t0, t1)
            emax = 0.0
            for i in range(n):
                e = abs(grav[i] - tau[i])
                if e > emax:
                    emax = e
            if emax <= eq_tol:
                return SETTLED, q, qd, step
    return TIMEOUT, q, qd, max_steps


@njit(cache=True)
def run_torque_sequence(
    axes, lengths, coms, masses, rotor, gravity, damping, q_lo, q_hi,
    q0, qd0, torques, steps_per_sample, dt,
    joint_pos, axis_world, link_dir, com_pos, jac, Rj, R, Rtmp,
    t0, t1, t2, M, rhs, grav,
):
    """Play back a torque profile (one row per sample, each held for
    steps_per_sample integrator steps). Stops early on a joint-limit
    crossing. Returns (status, q, qd)."""
    n = q0.shape[0]
    q = q0.copy()
    qd = qd0.copy()
    for s in range(torques.shape[0]):
        tau = torques[s]
        for _ in range(steps_per_sample):
            _step(
                axes, lengths, coms, masses, rotor, gravity, damping, q, qd, tau, dt,
                joint_pos, axis_world, link_dir, com_pos, jac, Rj, R, Rtmp,
                t0, t1, t2, M, rhs, grav,
            )
            for i in range(n):
                if q[i] < q_lo[i] or q[i] > q_hi[i]:
                    return LIMIT_VIOLATION, q, qd
    return SETTLED, q, qd


@njit(cache=True)
def simulate_trajectory(
    axes, lengths, coms, masses, rotor, gravity, damping,
    q0, qd0, tau, dt, n_steps, stride,
    joint_pos, axis_world, link_dir, com_pos, jac, Rj, R, Rtmp,
    t0, t1, t2, M, rhs, grav,
):
    """Integrate under constant torque, recording every `stride` steps.
    No limit handling; used for energy/diagnostic checks."""
    n = q0.shape[0]
    n_rec = n_steps // stride + 1
    qs = np.empty((n_rec, n))
    qds = np.empty((n_rec, n))
    q = q0.copy()
    qd = qd0.copy()
    qs[0] = q
    qds[0] = qd
    r = 1
    for step in range(1, n_steps + 1):
        _step(
            axes, lengths, coms, masses, rotor, gravity, damping, q, qd, tau, dt,
            joint_pos, axis_world, link_dir, com_pos, jac, Rj, R, Rtmp,
            t0, t1, t2, M, rhs, grav,
        )
        if step % stride == 0 and r < n_rec:
            qs[r] = q
            qds[r] = qd
            r += 1
    return qs[:r], qds[:r]


# -- single-shot helpers (not perf critical) --------------------------------


@njit(cache=True)
def gravity_term(axes, lengths, coms, masses, rotor, gravity, q, out):
    n = q.shape[0]
    joint_pos = np.empty((n, 3))
    axis_world = np.empty((n, 3))
    link_dir = np.empty((n, 3))
    com_pos = np.empty((n, 3))
    Rj = np.empty((3, 3))
    R = np.empty((3, 3))
    Rtmp = np.empty((3, 3))
    t0 = np.empty(3)
    t1 = np.empty(3)
    _frames(axes, lengths, coms, q, joint_pos, axis_world, link_dir, com_pos, Rj, R, Rtmp)
    _gravity_from_frames(masses, gravity, joint_pos, axis_world, com_pos, out, t0, t1)


@njit(cache=True)
def gravity_batch(axes, lengths, coms, masses, rotor, gravity, Q, out):
    n = Q.shape[1]
    joint_pos = np.empty((n, 3))
    axis_world = np.empty((n, 3))
    link_dir = np.empty((n, 3))
    com_pos = np.empty((n, 3))
    Rj = np.empty((3, 3))
    R = np.empty((3, 3))
    Rtmp = np.empty((3, 3))
    t0 = np.empty(3)
    t1 = np.empty(3)
    tau = np.empty(n)
    for r in range(Q.shape[0]):
        _frames(axes, lengths, coms, Q[r], joint_pos, axis_world, link_dir, com_pos, Rj, R, Rtmp)
        _gravity_from_frames(masses, gravity, joint_pos, axis_world, com_pos, tau, t0, t1)
        for k in range(n):
            out[r, k] = tau[k]


@njit(cache=True)
def mass_matrix(axes, lengths, coms, masses, rotor, q, out):
    n = q.shape[0]
    joint_pos = np.empty((n, 3))
    axis_world = np.empty((n, 3))
    link_dir = np.empty((n, 3))
    com_pos = np.empty((n, 3))
    jac = np.empty((n, n, 3))
    Rj = np.empty((3, 3))
    R = np.empty((3, 3))
    Rtmp = np.empty((3, 3))
    _frames(axes, lengths, coms, q, joint_pos, axis_world, link_dir, com_pos, Rj, R, Rtmp)
    _mass_from_frames(masses, rotor, joint_pos, axis_world, com_pos, jac, out)


@njit(cache=True)
def inverse_dynamics(axes, lengths, coms, masses, rotor, gravity, q, qd, qdd, out):
    """Torque for the motion (q, qd, qdd) under gravity: M qdd + C qd + G."""
    n = q.shape[0]
    joint_pos = np.empty((n, 3))
    axis_world = np.empty((n, 3))
    link_dir = np.empty((n, 3))
    com_pos = np.empty((n, 3))
    jac = np.empty((n, n, 3))
    Rj = np.empty((3, 3))
    R = np.empty((3, 3))
    Rtmp = np.empty((3, 3))
    t0 = np.empty(3)
    t1 = np.empty(3)
    t2 = np.empty(3)
    M = np.empty((n, n))
    cor = np.zeros(n)
    _frames(axes, lengths, coms, q, joint_pos, axis_world, link_dir, com_pos, Rj, R, Rtmp)
    _gravity_from_frames(masses, gravity, joint_pos, axis_world, com_pos, out, t0, t1)
    _coriolis_accum(
        masses, qd, joint_pos, axis_world, link_dir, com_pos, coms, lengths, cor, t0, t1, t2
    )
    _mass_from_frames(masses, rotor, joint_pos, axis_world, com_pos, jac, M)
    for i in range(n):
        out[i] += cor[i]
        for j in range(n):
            out[i] += M[i, j] * qdd[j]
