"""Compiled inner loop of the strapdown mechanization.

Scalarized single-sample update, jitted with numba: the simulator runs this
for tens of thousands of steps per scenario, and the pure-numpy version costs
~80 us/step against ~0.5 us here. The state layout is a flat float64[12]:
(lat, lon, h, ve, vn, vu, c00, c01, c02, c10, c11, c12, c20, c21, c22) minus
nothing - the attitude occupies indices 6..14 row-major.

Earth parameters arrive as a float64[7]:
(a, e2, omega_ie, gamma_e, somigliana_k, m_ratio, flattening).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = ["mech_steps", "pack_state", "unpack_state", "pack_earth"]


def pack_state(lat, lon, h, vel, c_bn) -> np.ndarray:
    state = np.empty(15)
    state[0:3] = (lat, lon, h)
    state[3:6] = vel
    state[6:15] = np.asarray(c_bn, dtype=float).ravel()
    return state


def unpack_state(state):
    return (float(state[0]), float(state[1]), float(state[2]),
            state[3:6].copy(), state[6:15].reshape(3, 3).copy())


def pack_earth(earth) -> np.ndarray:
    return np.array([earth.a, earth.e2, earth.omega_ie, earth.gamma_e,
                     earth.somigliana_k, earth.m_ratio, earth.flattening])


@njit(cache=True)
def _rotvec_dcm(px, py, pz, out):
    """out <- exp(skew(p)), closed form with series fallback."""
    angle2 = px * px + py * py + pz * pz
    if angle2 < 1e-24:
        s = 1.0
        c2 = 0.5
    else:
        angle = math.sqrt(angle2)
        s = math.sin(angle) / angle
        c2 = (1.0 - math.cos(angle)) / angle2
    # I + s*K + c2*K^2 with K = skew(p)
    out[0, 0] = 1.0 + c2 * (-(py * py + pz * pz))
    out[0, 1] = -s * pz + c2 * (px * py)
    out[0, 2] = s * py + c2 * (px * pz)
    out[1, 0] = s * pz + c2 * (px * py)
    out[1, 1] = 1.0 + c2 * (-(px * px + pz * pz))
    out[1, 2] = -s * px + c2 * (py * pz)
    out[2, 0] = -s * py + c2 * (px * pz)
    out[2, 1] = s * px + c2 * (py * pz)
    out[2, 2] = 1.0 + c2 * (-(px * px + py * py))


@njit(cache=True)
def _matmul3(a, b, out):
    for i in range(3):
        for j in range(3):
            out[i, j] = a[i, 0] * b[0, j] + a[i, 1] * b[1, j] + a[i, 2] * b[2, j]


@njit(cache=True)
def _orthonormalize(c, tmp, out):
    # two Newton steps: c <- c (3I - c^T c) / 2
    for _ in range(2):
        for i in range(3):
            for j in range(3):
                g = c[0, i] * c[0, j] + c[1, i] * c[1, j] + c[2, i] * c[2, j]
                tmp[i, j] = -0.5 * g
            tmp[i, i] += 1.5
        _matmul3(c, tmp, out)
        for i in range(3):
            for j in range(3):
                c[i, j] = out[i, j]


@njit(cache=True)
def mech_steps(state, gyro, accel, dt, earth):
    """Advance ``state`` in place through all rows of gyro/accel."""
    a_e = earth[0]
    e2 = earth[1]
    omega_e = earth[2]
    gamma_e = earth[3]
    som_k = earth[4]
    m_ratio = earth[5]
    flat = earth[6]

    c = state[6:15].reshape(3, 3)
    rn_mat = np.empty((3, 3))
    rb_mat = np.empty((3, 3))
    tmp = np.empty((3, 3))
    tmp2 = np.empty((3, 3))
    c_new = np.empty((3, 3))

    for k in range(gyro.shape[0]):
        lat = state[0]
        lon = state[1]
        h = state[2]
        ve = state[3]
        vn = state[4]
        vu = state[5]

        sl = math.sin(lat)
        cl = math.cos(lat)
        s2 = sl * sl
        w = math.sqrt(1.0 - e2 * s2)
        r_m = a_e * (1.0 - e2) / (w * w * w) + h
        r_n = a_e / w + h

        wie_e = 0.0
        wie_n = omega_e * cl
        wie_u = omega_e * sl
        wen_e = -vn / r_m
        wen_n = ve / r_n
        wen_u = ve * sl / (cl * r_n)

        win_e = wie_e + wen_e
        win_n = wie_n + wen_n
        win_u = wie_u + wen_u

        _rotvec_dcm(-win_e * dt, -win_n * dt, -win_u * dt, rn_mat)
        _rotvec_dcm(gyro[k, 0] * dt, gyro[k, 1] * dt, gyro[k, 2] * dt, rb_mat)
        _matmul3(rn_mat, c, tmp)
        _matmul3(tmp, rb_mat, c_new)

        fx, fy, fz = accel[k, 0], accel[k, 1], accel[k, 2]
        fn_e = 0.5 * ((c[0, 0] + c_new[0, 0]) * fx + (c[0, 1] + c_new[0, 1]) * fy
                      + (c[0, 2] + c_new[0, 2]) * fz)
        fn_n = 0.5 * ((c[1, 0] + c_new[1, 0]) * fx + (c[1, 1] + c_new[1, 1]) * fy
                      + (c[1, 2] + c_new[1, 2]) * fz)
        fn_u = 0.5 * ((c[2, 0] + c_new[2, 0]) * fx + (c[2, 1] + c_new[2, 1]) * fy
                      + (c[2, 2] + c_new[2, 2]) * fz)

        g0 = gamma_e * (1.0 + som_k * s2) / w
        g = g0 * (1.0 - 2.0 * h / a_e * (1.0 + flat + m_ratio - 2.0 * flat * s2)
                  + 3.0 * h * h / (a_e * a_e))

        cx = 2.0 * wie_e + wen_e
        cy = 2.0 * wie_n + wen_n
        cz = 2.0 * wie_u + wen_u
        # v_dot = f_n - (2 wie + wen) x v + g_n
        vd_e = fn_e - (cy * vu - cz * vn)
        vd_n = fn_n - (cz * ve - cx * vu)
        vd_u = fn_u - (cx * vn - cy * ve) - g

        ve_new = ve + dt * vd_e
        vn_new = vn + dt * vd_n
        vu_new = vu + dt * vd_u

        state[0] = lat + dt * 0.5 * (vn + vn_new) / r_m
        lon = lon + dt * 0.5 * (ve + ve_new) / (r_n * cl)
        if lon > math.pi:
            lon -= 2.0 * math.pi
        elif lon <= -math.pi:
            lon += 2.0 * math.pi
        state[1] = lon
        state[2] = h + dt * 0.5 * (vu + vu_new)
        state[3] = ve_new
        state[4] = vn_new
        state[5] = vu_new

        _orthonormalize(c_new, tmp, tmp2)
        for i in range(3):
            for j in range(3):
                c[i, j] = c_new[i, j]
    return state
