"""Pure-Python implementations of the hot kernels.

These mirror ``_kernels.pyx`` one to one and are used whenever the compiled
extension is unavailable (or ``TWOSTAGE_PURE_PYTHON=1`` is set).
"""

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Wrap an angle to the half-open interval (-pi, pi]."""
    w = theta - TWO_PI * math.floor((theta + math.pi) / TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    elif w > math.pi:
        w -= TWO_PI
    return w


def rocket_dynamics(x, y, theta, vx, vy, omega, thrust, torque, fx, fy,
                    gravity, drag, mass, inertia, dt):
    """One semi-implicit Euler step of the planar rocket."""
    ax = (-thrust * math.sin(theta) - drag * vx + fx) / mass
    ay = (thrust * math.cos(theta) + mass * gravity - drag * vy + fy) / mass
    vx = vx + ax * dt
    vy = vy + ay * dt
    x = x + vx * dt
    y = y + vy * dt
    omega = omega + (torque / inertia) * dt
    theta = wrap_angle(theta + omega * dt)
    return x, y, theta, vx, vy, omega


def nearest_in_window(px, py, x, y, lo, hi):
    """Index and distance of the point in ``[lo, hi]`` closest to ``(x, y)``.

    Ties resolve toward the larger index.
    """
    best = lo
    best_d2 = math.inf
    for i in range(lo, hi + 1):
        dx = px[i] - x
        dy = py[i] - y
        d2 = dx * dx + dy * dy
        if d2 <= best_d2:
            best_d2 = d2
            best = i
    return best, math.sqrt(best_d2)


def gae(rewards, values, terminated, truncated, bootstrap, last_values, gamma, lam):
    """Generalized advantage estimates over a ``(num_workers, T)`` batch."""
    rewards = np.asarray(rewards, dtype=np.float64)
    n_workers, horizon = rewards.shape
    adv = np.zeros_like(rewards)
    for w in range(n_workers):
        next_adv = 0.0
        for t in range(horizon - 1, -1, -1):
            if terminated[w, t]:
                next_value = 0.0
                carry = 0.0
            elif truncated[w, t]:
                next_value = bootstrap[w, t]
                carry = 0.0
            else:
                next_value = values[w, t + 1] if t + 1 < horizon else last_values[w]
                carry = 1.0
            delta = rewards[w, t] + gamma * next_value - values[w, t]
            next_adv = delta + gamma * lam * carry * next_adv
            adv[w, t] = next_adv
    return adv
