"""Reference oracle for the geodesic-distance tests.

Integrates the geodesic ODEs on the WGS-84 ellipsoid (latitude, longitude,
azimuth as functions of arc length) with a high-order adaptive solver and
solves the inverse problem by shooting on the initial azimuth. Entirely
independent of the Vincenty iteration implemented in src/geo.cpp; the values
frozen into tests/test_geo.cpp come from this script.

Usage: python3 geodesic_oracle.py
"""
import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

A = 6378137.0
F = 1 / 298.257223563
E2 = F * (2 - F)
MILE = 1609.344


def rhs(_s, y):
    phi, _lam, alpha = y
    sp = np.sin(phi)
    w2 = 1 - E2 * sp * sp
    meridional = A * (1 - E2) / w2 ** 1.5
    prime_vertical = A / np.sqrt(w2)
    return [np.cos(alpha) / meridional,
            np.sin(alpha) / (prime_vertical * np.cos(phi)),
            np.sin(alpha) * np.tan(phi) / prime_vertical]


def inverse(p1, p2, smax=2.0e7):
    """Distance in meters; shoots on azimuth, events on the larger coordinate."""
    lam2 = np.radians(p2[1])
    phi2 = np.radians(p2[0])
    use_lon = abs(p2[1] - p1[1]) >= abs(p2[0] - p1[0])
    target_idx = 1 if use_lon else 0
    target = lam2 if use_lon else phi2
    direction = np.sign(target - np.radians(p1[target_idx]))

    def run(alpha0):
        y0 = [np.radians(p1[0]), np.radians(p1[1]), alpha0]

        def hit(_s, y):
            return y[target_idx] - target

        hit.terminal = True
        hit.direction = direction
        sol = solve_ivp(rhs, [0, smax], y0, events=hit, rtol=1e-13, atol=1e-13,
                        method="DOP853")
        if len(sol.t_events[0]) == 0:
            return None, None
        miss_idx = 0 if use_lon else 1
        miss_target = phi2 if use_lon else lam2
        return sol.t_events[0][0], sol.y_events[0][0][miss_idx] - miss_target

    if use_lon:
        base = np.pi / 2 if direction > 0 else -np.pi / 2
    else:
        base = 0.0 if direction > 0 else np.pi

    def err(alpha0):
        _, e = run(alpha0)
        return e if e is not None else np.nan

    alpha = brentq(err, base - 1.3, base + 1.3, xtol=1e-14)
    return run(alpha)[0]


PAIRS = [
    ((0.0, 0.0), (0.0, 1.0)),
    ((43.16, -77.61), (37.34, -121.89)),
    ((43.0, -77.7), (43.0072464, -77.7)),
    ((37.0, -122.0), (37.03, -122.04)),
    ((51.5, -0.12), (48.85, 2.35)),
]

if __name__ == "__main__":
    for a, b in PAIRS:
        m = inverse(a, b)
        print(f"{a} -> {b}: {m:.6f} m = {m / MILE:.9f} miles")
    print("equatorial 1 deg analytic:", A * np.pi / 180 / MILE, "miles")
