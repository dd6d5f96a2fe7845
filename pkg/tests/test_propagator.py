from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pilotwave.errors import ConfigurationError, StepSizeError
from pilotwave.grid import (Axis, GridField, GridSpec, RegionSpec, field_1d, gaussian, inner_product,
                            norm_squared, region_probability, tensor_product)
from pilotwave.propagator import (CouplingSchedule, CrankNicolson, HamiltonianSpec, SplitOperator,
                                  apply_measurement_coupling, energy, evolve, max_stable_dt, step_crank_nicolson,
                                  step_split_operator)

AX = Axis(-40.96, 40.96, 1024, "x")
FREE = HamiltonianSpec()


def _width(f: GridField) -> float:
    x, d = f.spec.axes[0].coords, f.density
    m = np.sum(x * d) / np.sum(d)
    return math.sqrt(np.sum((x - m) ** 2 * d) / np.sum(d))


def _sigma_t(t, s0):
    return s0 * math.sqrt(1 + (t / (2 * s0**2)) ** 2)


def _free_packet(x, t, s0):
    # independent closed form of a free Gaussian (hbar = m = 1), density std s0 at t = 0
    s = 1 + 1j * t / (2 * s0**2)
    return (2 * np.pi * s0**2) ** -0.25 / np.sqrt(s) * np.exp(-x**2 / (4 * s0**2 * s))


# -- split operator ------------------------------------------------------------------

def test_plane_wave_picks_up_exact_phase():
    k = 2 * np.pi * 5 / AX.length
    f = field_1d(AX, np.exp(1j * k * AX.coords))
    dt = 0.5 * max_stable_dt(f.spec, FREE)
    g = step_split_operator(f, FREE, dt)
    assert np.max(np.abs(g.amplitudes - f.amplitudes * np.exp(-1j * k**2 * dt / 2))) < 1e-9


@pytest.mark.parametrize("s0,t", [(1.0, 2.0), (0.7, 3.0)])
def test_gaussian_width_law(s0, t):
    f = field_1d(AX, gaussian(AX, 0.0, s0)).normalized()
    g = evolve(f, FREE, t).final
    assert abs(_width(g) / _sigma_t(t, s0) - 1) < 1e-3
    ref = _free_packet(AX.coords, t, s0)
    assert math.sqrt(np.sum(np.abs(g.amplitudes - ref) ** 2) * AX.spacing) < 1e-6


def test_harmonic_ground_state_is_stationary():
    ax = Axis(-10.24, 10.24, 128)
    h = HamiltonianSpec(potential="harmonic", omega=(1.0,))
    f = field_1d(ax, np.exp(-ax.coords**2 / 2)).normalized()
    g = evolve(f, h, 2 * np.pi).final
    assert abs(inner_product(f, g)) ** 2 >= 1 - 1e-6


def test_stability_guard():
    dt_max = max_stable_dt(GridSpec((AX,)), FREE)
    with pytest.raises(StepSizeError):
        SplitOperator(GridSpec((AX,)), FREE, 1.01 * dt_max)
    with pytest.raises(StepSizeError):
        evolve(field_1d(AX, gaussian(AX)), FREE, 1.0, dt=2 * dt_max)
    SplitOperator(GridSpec((AX,)), FREE, 0.99 * dt_max)


# -- Crank-Nicolson --------------------------------------------------------------

def test_split_and_crank_nicolson_agree():
    ax = Axis(-20.48, 20.48, 512)
    f = field_1d(ax, gaussian(ax, 0.0, 1.0, 1.0)).normalized()
    dt = 1e-3
    a = SplitOperator(f.spec, FREE, dt).run(np.array(f.amplitudes), 1000)
    b = CrankNicolson(f.spec, FREE, dt, order=8).run(np.array(f.amplitudes), 1000)
    assert math.sqrt(np.sum(np.abs(a - b) ** 2) * ax.spacing) < 1e-4


@pytest.mark.parametrize("method", ["split", "crank_nicolson"])
def test_second_order_in_dt(method):
    # a harmonic oscillator makes the splitting error visible; the reference is a coherent state
    ax = Axis(-10.24, 10.24, 128)
    h = HamiltonianSpec(potential="harmonic", omega=(1.0,))
    x0, t = 1.0, 1.0
    ref = (1 / np.pi) ** 0.25 * np.exp(-(ax.coords - x0 * np.cos(t)) ** 2 / 2)
    f = field_1d(ax, (1 / np.pi) ** 0.25 * np.exp(-(ax.coords - x0) ** 2 / 2))
    errs = []
    for dt in ((2e-3, 1e-3) if method == "split" else (2e-2, 1e-2)):
        kw = {"order": 8} if method == "crank_nicolson" else {}
        stepper = (CrankNicolson(f.spec, h, dt, **kw) if method == "crank_nicolson"
                   else SplitOperator(f.spec, h, dt))
        a = stepper.run(np.array(f.amplitudes), round(t / dt))
        errs.append(np.sqrt(np.sum((np.abs(a) - ref) ** 2) * ax.spacing))
    assert 3.2 <= errs[0] / errs[1] <= 4.8


def test_constant_field_unchanged():
    ax = Axis(0.0, 6.4, 64)
    f = field_1d(ax, np.ones(64, complex))
    assert np.allclose(step_crank_nicolson(f, FREE, 0.01).amplitudes, 1.0, atol=1e-12)
    assert np.allclose(step_split_operator(f, FREE, 0.001).amplitudes, 1.0, atol=1e-12)


def test_crank_nicolson_dimension_limit():
    ax = Axis(0.0, 1.6, 16)
    spec = GridSpec((ax, Axis(0, 1.6, 16, "y"), Axis(0, 1.6, 16, "z")))
    with pytest.raises(ConfigurationError):
        CrankNicolson(spec, FREE, 0.01)


# -- impulsive measurement coupling --------------------------------------------

SX = Axis(-12.8, 12.8, 128, "x")
SY = Axis(-12.8, 12.8, 256, "y")


def _pointer_coupling(g=3.0):
    return CouplingSchedule(0, 1, g, (0.0, 1.0), regions=(((-1e9, 0.0), -1.0), ((0.0, 1e9), 1.0)))


def _joint(c1, c2, w=0.5):
    phi = c1 * gaussian(SX, -4.0, 0.5) + c2 * gaussian(SX, 4.0, 0.5)
    ready = np.exp(-SY.coords**2 / (2 * w**2))
    return tensor_product(field_1d(SX, phi).normalized(), field_1d(SY, ready).normalized())


def test_no_superposition_gives_one_packet():
    f = apply_measurement_coupling(_joint(1.0, 0.0), _pointer_coupling())
    L = RegionSpec((None, (SY.lo, 0.0)))
    assert region_probability(f, L) >= 1 - 1e-6


def test_zero_coupling_is_identity():
    f = _joint(0.6, 0.8)
    g = apply_measurement_coupling(f, _pointer_coupling(0.0))
    assert np.array_equal(g.amplitudes, f.amplitudes)


def test_branch_masses_and_overlap():
    c1, c2 = math.sqrt(0.3), math.sqrt(0.7)
    w = 0.5
    f = apply_measurement_coupling(_joint(c1, c2, w), _pointer_coupling(6 * w))
    L = RegionSpec((None, (SY.lo, 0.0)))
    R = RegionSpec((None, (0.0, SY.hi)))
    assert region_probability(f, L) == pytest.approx(0.3, abs=1e-6)
    assert region_probability(f, R) == pytest.approx(0.7, abs=1e-6)
    # pointer states attached to the two system branches
    rows = [np.argmin(np.abs(SX.coords - c)) for c in (-4.0, 4.0)]
    p1, p2 = (field_1d(SY, f.amplitudes[r]).normalized() for r in rows)
    assert abs(inner_product(p1, p2)) <= 1e-8


def test_projection_regions_must_partition():
    bad = CouplingSchedule(0, 1, 1.0, (0.0, 1.0), regions=(((-1e9, -1.0), -1.0), ((0.0, 1e9), 1.0)))
    with pytest.raises(ConfigurationError):
        apply_measurement_coupling(_joint(1.0, 0.0), bad)


def test_position_conjugate_coupling_is_a_momentum_kick():
    c = CouplingSchedule(0, 1, 2.0, (0.0, 1.0), conjugate="position",
                         regions=(((-1e9, 0.0), -1.0), ((0.0, 1e9), 1.0)))
    f = apply_measurement_coupling(_joint(1.0, 0.0), c)
    # left system branch: pointer acquires momentum -2, so the y-gradient phase is -2
    a = f.amplitudes[np.argmin(np.abs(SX.coords + 4.0))]
    mid = np.argmin(np.abs(SY.coords))
    k = np.angle(a[mid + 1] / a[mid]) / SY.spacing
    assert k == pytest.approx(-2.0, rel=1e-9)


def test_evolve_brackets_coupling_window():
    c = CouplingSchedule(0, 1, 1.0, (0.5, 1.0), regions=(((-1e9, 0.0), -1.0), ((0.0, 1e9), 1.0)))
    h = HamiltonianSpec(masses=(1.0, 1.0), couplings=(c,))
    hist = evolve(_joint(0.6, 0.8), h, 1.5, snapshot_interval=0.25)
    assert np.allclose(hist.times, [0, 0.25, 0.5, 1.0, 1.25, 1.5])
    assert hist.couplings[2] is c
    assert sum(x is not None for x in hist.couplings) == 1


def test_overlapping_coupling_windows_rejected():
    c1 = CouplingSchedule(0, 1, 1.0, (0.0, 1.0), form="linear")
    c2 = CouplingSchedule(0, 1, 1.0, (0.5, 1.5), form="linear")
    with pytest.raises(ConfigurationError):
        HamiltonianSpec(masses=(1, 1), couplings=(c1, c2))


def test_absorbing_layer_reflection():
    ax = Axis(-51.2, 51.2, 1024)
    for k in (2.0, 4.0, np.pi / ax.spacing / 4):
        f = field_1d(ax, gaussian(ax, 0.0, 2.0, k), boundary="absorbing").normalized()
        t = 2 * ax.hi / k + 10
        g = evolve(f, FREE, t, snapshot_interval=t).final
        interior = np.abs(ax.coords) < 0.8 * ax.hi
        assert np.sum(g.density[interior]) * ax.spacing < 1e-4


# -- invariants -------------------------------------------------------------------

small = Axis(-12.8, 12.8, 128)
states = st.builds(lambda c, w, k: field_1d(small, gaussian(small, c, w, k)).normalized(),
                   st.floats(-4, 4), st.floats(0.5, 2.0), st.floats(-2, 2))


@settings(max_examples=30, deadline=None)
@given(states, st.floats(1e-4, 6e-3))
def test_unitarity_per_step(f, dt):
    assert abs(norm_squared(step_split_operator(f, FREE, dt)) - 1) < 1e-10
    assert abs(norm_squared(step_crank_nicolson(f, FREE, dt)) - 1) < 1e-10


@settings(max_examples=30, deadline=None)
@given(states, states, st.complex_numbers(max_magnitude=2), st.complex_numbers(max_magnitude=2))
def test_linearity(f, g, a, b):
    h = HamiltonianSpec(potential="harmonic", omega=(0.5,))
    lhs = step_split_operator(a * f + b * g, h, 0.005).amplitudes
    rhs = (a * step_split_operator(f, h, 0.005) + b * step_split_operator(g, h, 0.005)).amplitudes
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_energy_conservation_over_many_steps():
    h = HamiltonianSpec(potential="harmonic", omega=(1.0,))
    f = field_1d(small, gaussian(small, 1.5, 0.8, 0.5)).normalized()
    e0 = energy(f, h)
    dt = 0.5 * max_stable_dt(f.spec, h)
    a = SplitOperator(f.spec, h, dt).run(np.array(f.amplitudes), 10_000)
    assert abs(energy(f.replace(a), h) - e0) / abs(e0) < 1e-6
