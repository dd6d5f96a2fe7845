"""Closed-form free-particle and harmonic-oscillator solutions (hbar = 1).

These are used as independent references for the numerical propagators and
for the Bohmian trajectories they guide.
"""
from __future__ import annotations

import numpy as np


def gaussian_width(t, sigma0: float, mass: float = 1.0):
    """Standard deviation of |psi_t|^2 for a free Gaussian of initial width ``sigma0``."""
    return sigma0 * np.sqrt(1.0 + (np.asarray(t) / (2.0 * mass * sigma0**2)) ** 2)


def gaussian_width_rate(t, sigma0: float, mass: float = 1.0):
    t = np.asarray(t, dtype=float)
    tau = 2.0 * mass * sigma0**2
    return sigma0 * (t / tau**2) / np.sqrt(1.0 + (t / tau) ** 2)


def free_gaussian(x, t: float, sigma0: float, x0: float = 0.0, k0: float = 0.0, mass: float = 1.0):
    """psi(x, t) for a free packet that starts as a normalized Gaussian with
    momentum ``k0`` centred at ``x0``."""
    x = np.asarray(x, dtype=float)
    s = 1.0 + 1j * t / (2.0 * mass * sigma0**2)
    u = x - x0 - k0 * t / mass
    return ((2.0 * np.pi) ** -0.25 / np.sqrt(sigma0 * s)
            * np.exp(-u**2 / (4.0 * sigma0**2 * s) + 1j * k0 * (x - x0) - 1j * k0**2 * t / (2.0 * mass)))


def free_gaussian_gradient(x, t: float, sigma0: float, x0: float = 0.0, k0: float = 0.0, mass: float = 1.0):
    x = np.asarray(x, dtype=float)
    s = 1.0 + 1j * t / (2.0 * mass * sigma0**2)
    u = x - x0 - k0 * t / mass
    return free_gaussian(x, t, sigma0, x0, k0, mass) * (-u / (2.0 * sigma0**2 * s) + 1j * k0)


def free_gaussian_velocity(x, t: float, sigma0: float, x0: float = 0.0, k0: float = 0.0, mass: float = 1.0):
    """Guiding velocity of the free Gaussian: drift plus linear spreading."""
    x = np.asarray(x, dtype=float)
    sig = gaussian_width(t, sigma0, mass)
    rate = gaussian_width_rate(t, sigma0, mass)
    return k0 / mass + (x - x0 - k0 * t / mass) * rate / sig


def free_gaussian_trajectory(xi, t, sigma0: float, x0: float = 0.0, k0: float = 0.0, mass: float = 1.0):
    """Bohmian path from ``xi``: relative offset scales with the packet width."""
    t = np.asarray(t, dtype=float)
    return x0 + k0 * t / mass + (xi - x0) * gaussian_width(t, sigma0, mass) / sigma0


def coherent_state(x, t: float, omega: float, x0: float, p0: float = 0.0, mass: float = 1.0):
    """Displaced ground state of V = m omega^2 x^2 / 2, including the global phase."""
    x = np.asarray(x, dtype=float)
    xc = x0 * np.cos(omega * t) + p0 / (mass * omega) * np.sin(omega * t)
    pc = p0 * np.cos(omega * t) - mass * omega * x0 * np.sin(omega * t)
    # Classical action along the centre path plus the zero-point phase.
    phase = -omega * t / 2.0 + (pc * xc - p0 * x0) / 2.0
    return ((mass * omega / np.pi) ** 0.25
            * np.exp(-mass * omega * (x - xc) ** 2 / 2.0 + 1j * pc * (x - xc) + 1j * phase))


def coherent_center(t, omega: float, x0: float, p0: float = 0.0, mass: float = 1.0):
    t = np.asarray(t, dtype=float)
    return x0 * np.cos(omega * t) + p0 / (mass * omega) * np.sin(omega * t)
