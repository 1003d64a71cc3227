# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels. Semantics match ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, floor, INFINITY, M_PI

cnp.import_array()

cdef double TWO_PI = 2.0 * M_PI


cpdef double wrap_angle(double theta):
    cdef double w = theta - TWO_PI * floor((theta + M_PI) / TWO_PI)
    if w <= -M_PI:
        w += TWO_PI
    elif w > M_PI:
        w -= TWO_PI
    return w


def rocket_dynamics(double x, double y, double theta, double vx, double vy,
                    double omega, double thrust, double torque, double fx,
                    double fy, double gravity, double drag, double mass,
                    double inertia, double dt):
    cdef double ax = (-thrust * sin(theta) - drag * vx + fx) / mass
    cdef double ay = (thrust * cos(theta) + mass * gravity - drag * vy + fy) / mass
    vx = vx + ax * dt
    vy = vy + ay * dt
    x = x + vx * dt
    y = y + vy * dt
    omega = omega + (torque / inertia) * dt
    theta = wrap_angle(theta + omega * dt)
    return x, y, theta, vx, vy, omega


def nearest_in_window(double[::1] px, double[::1] py, double x, double y,
                      Py_ssize_t lo, Py_ssize_t hi):
    cdef Py_ssize_t i, best = lo
    cdef double dx, dy, d2, best_d2 = INFINITY
    for i in range(lo, hi + 1):
        dx = px[i] - x
        dy = py[i] - y
        d2 = dx * dx + dy * dy
        if d2 <= best_d2:
            best_d2 = d2
            best = i
    return best, sqrt(best_d2)


def gae(rewards, values, terminated, truncated, bootstrap, last_values,
        double gamma, double lam):
    cdef double[:, ::1] r = np.ascontiguousarray(rewards, dtype=np.float64)
    cdef double[:, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef cnp.uint8_t[:, ::1] term = np.ascontiguousarray(terminated, dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] trunc = np.ascontiguousarray(truncated, dtype=np.uint8)
    cdef double[:, ::1] boot = np.ascontiguousarray(bootstrap, dtype=np.float64)
    cdef double[::1] last = np.ascontiguousarray(last_values, dtype=np.float64)
    cdef Py_ssize_t n_workers = r.shape[0], horizon = r.shape[1], w, t
    out = np.zeros((n_workers, horizon), dtype=np.float64)
    cdef double[:, ::1] adv = out
    cdef double next_adv, next_value, carry, delta
    for w in range(n_workers):
        next_adv = 0.0
        for t in range(horizon - 1, -1, -1):
            if term[w, t]:
                next_value = 0.0
                carry = 0.0
            elif trunc[w, t]:
                next_value = boot[w, t]
                carry = 0.0
            else:
                if t + 1 < horizon:
                    next_value = v[w, t + 1]
                else:
                    next_value = last[w]
                carry = 1.0
            delta = r[w, t] + gamma * next_value - v[w, t]
            next_adv = delta + gamma * lam * carry * next_adv
            adv[w, t] = next_adv
    return out
