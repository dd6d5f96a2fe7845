"""Guiding-equation velocities and trajectory integration.

Velocities are v_a = (1/m_a) Im(d_a psi / psi).  Trajectories are integrated
with fixed-step RK4 whose step is the snapshot interval of a
:class:`~pilotwave.propagator.FieldHistory`; psi and its gradient are
interpolated cubically in space and linearly in time.  Impulsive pointer
couplings move the pointer coordinate rigidly by the coupling shift, which is
the guiding flow of the interaction Hamiltonian g A p_b.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
from scipy import ndimage

from .errors import ConfigurationError, NodeError
from .grid import GridField, GridSpec, SeparableField
from .propagator import FieldHistory

log = logging.getLogger(__name__)

# Relative |psi| below which a point counts as a node.
NODE_THRESHOLD = 1e-7


def spectral_gradient(a: np.ndarray, spec: GridSpec, workers: int | None = None) -> list[np.ndarray]:
    """Per-axis spectral derivatives of a periodic field (Nyquist mode dropped)."""
    ah = scipy.fft.fftn(a, workers=workers)
    grads = []
    for i, ax in enumerate(spec.axes):
        k = ax.wavenumbers.copy()
        k[ax.points // 2] = 0.0
        grads.append(scipy.fft.ifftn(ah * spec.broadcast(1j * k, i), workers=workers))
    return grads


def fd4_gradient(a: np.ndarray, spec: GridSpec) -> list[np.ndarray]:
    """Fourth-order periodic central differences."""
    grads = []
    for i, ax in enumerate(spec.axes):
        g = (-np.roll(a, -2, axis=i) + 8 * np.roll(a, -1, axis=i)
             - 8 * np.roll(a, 1, axis=i) + np.roll(a, 2, axis=i)) / (12 * ax.spacing)
        grads.append(g)
    return grads


def _prefilter(a: np.ndarray, axes) -> np.ndarray:
    """Cubic B-spline coefficients of a complex array along ``axes`` (periodic)."""
    re, im = np.ascontiguousarray(a.real), np.ascontiguousarray(a.imag)
    for ax in axes:
        re = ndimage.spline_filter1d(re, order=3, axis=ax, mode="grid-wrap")
        im = ndimage.spline_filter1d(im, order=3, axis=ax, mode="grid-wrap")
    return re + 1j * im


_OFFSETS = np.arange(-1, 3)[None, :]


def _axis_weights(axis, x: np.ndarray):
    """Neighbour indices (N, 4) and cubic B-spline weights (N, 4) at positions ``x``."""
    t = axis.index_coordinate(x)
    fl = np.floor(t)
    u = t - fl
    u2, u3 = u * u, u * u * u
    w = np.empty((len(u), 4))
    w[:, 0] = (1 - u) ** 3 / 6.0
    w[:, 1] = (3 * u3 - 6 * u2 + 4) / 6.0
    w[:, 2] = (-3 * u3 + 3 * u2 + 3 * u + 1) / 6.0
    w[:, 3] = u3 / 6.0
    idx = (fl.astype(np.int64)[:, None] + _OFFSETS) % axis.points
    return idx, w


class DenseSampler:
    """Cubic-spline evaluation of psi and grad psi for one dense snapshot.

    Coefficients for psi and each gradient component are stored as channels
    of one array so a single gather serves all of them.
    """

    def __init__(self, f: GridField, gradient: str = "spectral", workers: int | None = None):
        self.spec = f.spec
        a = np.asarray(f.amplitudes)
        grads = spectral_gradient(a, f.spec, workers) if gradient == "spectral" else fd4_gradient(a, f.spec)
        self.peak = float(np.max(np.abs(a)))
        self._coef = _prefilter(np.stack([a] + list(grads), axis=-1), range(f.spec.dims))

    def weights(self, points: np.ndarray):
        return [_axis_weights(ax, points[:, i]) for i, ax in enumerate(self.spec.axes)]

    def apply(self, weights):
        d = len(weights)
        c = self._coef
        if d == 1:
            (i0, w0), = weights
            vals = (c[i0[:, 0]] * w0[:, 0:1] + c[i0[:, 1]] * w0[:, 1:2]
                    + c[i0[:, 2]] * w0[:, 2:3] + c[i0[:, 3]] * w0[:, 3:4])
        elif d == 2:
            (i0, w0), (i1, w1) = weights
            vals = 0.0
            for a in range(4):
                inner = 0.0
                for b in range(4):
                    inner = inner + c[i0[:, a], i1[:, b]] * w1[:, b:b + 1]
                vals = vals + inner * w0[:, a:a + 1]
        else:
            (i0, w0), (i1, w1), (i2, w2) = weights
            vals = 0.0
            for a in range(4):
                mid = 0.0
                for b in range(4):
                    inner = 0.0
                    for k in range(4):
                        inner = inner + c[i0[:, a], i1[:, b], i2[:, k]] * w2[:, k:k + 1]
                    mid = mid + inner * w1[:, b:b + 1]
                vals = vals + mid * w0[:, a:a + 1]
        return vals[:, 0], vals[:, 1:]

    def evaluate(self, points: np.ndarray):
        return self.apply(self.weights(points))


class SeparableSampler:
    """Evaluation of a sum of products from spline-interpolated 1D factors."""

    def __init__(self, f: SeparableField, workers: int | None = None):
        self.spec = f.spec
        self.peak = f.max_abs_bound()
        self._coef = f.coefficients()
        self._fac = []  # per axis: (points, 2 * terms) channels [values..., derivatives...]
        for i, ax in enumerate(f.spec.axes):
            sub = GridSpec((ax,), f.spec.boundary)
            vals = [fs[i] for _, fs in f.terms]
            ders = [spectral_gradient(v, sub, workers)[0] for v in vals]
            self._fac.append(_prefilter(np.stack(vals + ders, axis=-1), [0]))

    def weights(self, points: np.ndarray):
        return [_axis_weights(ax, points[:, i]) for i, ax in enumerate(self.spec.axes)]

    def apply(self, weights):
        nt = len(self._coef)
        d = len(weights)
        vals, ders = [], []
        for (idx, w), c in zip(weights, self._fac):
            e = np.sum(c[idx] * w[:, :, None], axis=1)
            vals.append(e[:, :nt])
            ders.append(e[:, nt:])
        psi = np.sum(self._coef * np.prod(vals, axis=0), axis=1)
        grad = np.empty((len(psi), d), dtype=complex)
        for a in range(d):
            term = ders[a]
            for b in range(d):
                if b != a:
                    term = term * vals[b]
            grad[:, a] = np.sum(self._coef * term, axis=1)
        return psi, grad

    def evaluate(self, points: np.ndarray):
        return self.apply(self.weights(points))


def sampler_for(f, workers: int | None = None):
    return SeparableSampler(f, workers) if isinstance(f, SeparableField) else DenseSampler(f, workers=workers)


def guiding_velocity(psi: np.ndarray, grad: np.ndarray, masses: np.ndarray) -> np.ndarray:
    dens = np.abs(psi) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        return (np.conj(psi)[:, None] * grad).imag / dens[:, None] / masses[None, :]


def velocity_field(f, x, masses=None, method: str = "spectral", threshold: float = NODE_THRESHOLD) -> np.ndarray:
    """Guiding velocity at configuration ``x``.

    ``method`` selects spectral or fourth-order finite-difference gradients.
    Raises :class:`NodeError` when |psi(x)| < threshold * max |psi|.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != f.spec.dims:
        raise ConfigurationError(f"configuration has {x.shape[1]} coordinates, grid has {f.spec.dims} axes")
    masses = np.ones(f.spec.dims) if masses is None else np.broadcast_to(np.asarray(masses, float), (f.spec.dims,))
    if isinstance(f, SeparableField):
        s = SeparableSampler(f)
    else:
        s = DenseSampler(f, gradient="spectral" if method == "spectral" else "fd4")
    psi, grad = s.evaluate(x)
    if np.any(np.abs(psi) < threshold * s.peak):
        raise NodeError(f"|psi| at {x.tolist()} is below {threshold:g} of its maximum")
    v = guiding_velocity(psi, grad, masses)
    return v[0] if len(v) == 1 else v


@dataclass
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    status: str = "active"
    node_times: list = field(default_factory=list)


@dataclass
class TrajectoryEnsemble:
    times: np.ndarray
    positions: np.ndarray  # (N, T, d)
    status: np.ndarray  # (N,) "active" | "absorbed"
    seeds: np.ndarray | None = None
    node_events: list = field(default_factory=list)  # (trajectory index, time)
    axis_names: tuple[str, ...] = ()
    absorbed_at: np.ndarray | None = None  # sample index of absorption, -1 if never

    def status_at(self, k: int) -> np.ndarray:
        """Status of every trajectory at sample ``k``."""
        if self.absorbed_at is None:
            return np.asarray(self.status, dtype=str)
        return np.where((self.absorbed_at >= 0) & (self.absorbed_at <= k), "absorbed", "active")

    def __len__(self):
        return self.positions.shape[0]

    def __getitem__(self, i: int) -> Trajectory:
        return Trajectory(self.times, self.positions[i], str(self.status[i]),
                          [t for j, t in self.node_events if j == i])

    @property
    def initial(self) -> np.ndarray:
        return self.positions[:, 0, :]

    @property
    def final(self) -> np.ndarray:
        return self.positions[:, -1, :]

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigurationError(f"no trajectory sample at t={t}")
        return self.positions[:, i, :]


class _Stepper:
    """RK4 over one snapshot interval for a block of trajectories.

    With ``tolerance`` set, each step is checked against two half steps and
    trajectories whose results differ by more than ``tolerance`` are
    subdivided again, down to ``max_depth`` halvings.
    """

    def __init__(self, s0, s1, h: float, t0: float, masses: np.ndarray, threshold: float,
                 tolerance: float | None = None, max_depth: int = 10):
        self.s0, self.s1, self.h, self.t0 = s0, s1, h, t0
        self.masses, self.threshold = masses, threshold
        self.tolerance, self.max_depth = tolerance, max_depth

    def _vel(self, p, w, last_v, nodes):
        if w == 0.0:
            psi, grad = self.s0.evaluate(p)
            peak = self.s0.peak
        elif w == 1.0:
            psi, grad = self.s1.evaluate(p)
            peak = self.s1.peak
        else:
            wts = self.s0.weights(p)
            a0, g0 = self.s0.apply(wts)
            a1, g1 = self.s1.apply(wts)
            psi, grad = (1 - w) * a0 + w * a1, (1 - w) * g0 + w * g1
            peak = (1 - w) * self.s0.peak + w * self.s1.peak
        v = guiding_velocity(psi, grad, self.masses)
        bad = (np.abs(psi) < self.threshold * peak) | ~np.all(np.isfinite(v), axis=1)
        if np.any(bad):
            v[bad] = last_v[bad]
            nodes |= bad
        return v

    def _rk4(self, p, w0, w1, last_v, nodes):
        h = (w1 - w0) * self.h
        wm = 0.5 * (w0 + w1)
        k1 = self._vel(p, w0, last_v, nodes)
        k2 = self._vel(p + 0.5 * h * k1, wm, k1, nodes)
        k3 = self._vel(p + 0.5 * h * k2, wm, k2, nodes)
        k4 = self._vel(p + h * k3, w1, k3, nodes)
        return p + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), k4

    def _adaptive(self, p, w0, w1, last_v, nodes, depth):
        full, _ = self._rk4(p, w0, w1, last_v, nodes)
        wm = 0.5 * (w0 + w1)
        half, vh = self._rk4(p, w0, wm, last_v, nodes)
        two, v = self._rk4(half, wm, w1, vh, nodes)
        if depth < self.max_depth:
            redo = np.flatnonzero(np.max(np.abs(two - full), axis=1) > self.tolerance)
            if len(redo):
                sub_nodes = nodes[redo]
                a, va = self._adaptive(p[redo], w0, wm, last_v[redo], sub_nodes, depth + 1)
                b, vb = self._adaptive(a, wm, w1, va, sub_nodes, depth + 1)
                two[redo], v[redo] = b, vb
                nodes[redo] |= sub_nodes
        return two, v

    def __call__(self, block):
        p, last_v = block
        nodes = np.zeros(len(p), dtype=bool)
        if self.tolerance is None:
            new, v = self._rk4(p, 0.0, 1.0, last_v, nodes)
        else:
            new, v = self._adaptive(p, 0.0, 1.0, last_v, nodes, 0)
        return new, v, nodes


def integrate_ensemble(history: FieldHistory, x0, *, seeds=None, threads: int = 1,
                       threshold: float = NODE_THRESHOLD, tolerance: float | None = None,
                       workers: int | None = None) -> TrajectoryEnsemble:
    """Integrate the guiding equation for every row of ``x0`` through ``history``.

    Output samples coincide with the snapshot times.  ``tolerance`` switches
    on step-doubling error control within each snapshot interval (needed
    where trajectories pass close to nodes).  Work is split into
    contiguous blocks for ``threads > 1``; each trajectory's arithmetic is
    independent of the blocking, so results do not depend on ``threads``.
    """
    spec = history.spec
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    if x0.shape[1] != spec.dims:
        raise ConfigurationError(f"initial configurations have {x0.shape[1]} coordinates, grid has {spec.dims}")
    n, nt = len(x0), len(history.times)
    masses = history.hamiltonian.masses_for(spec.dims)
    out = np.empty((n, nt, spec.dims))
    out[:, 0] = x0
    status = np.where(spec.inside(x0), "active", "absorbed").astype(object)
    absorbed_at = np.where(status == "absorbed", 0, -1)
    pos = x0.copy()
    last_v = np.zeros_like(pos)
    events: list[tuple[int, float]] = []
    samplers: dict[int, object] = {}

    def sampler(i):
        if i not in samplers:
            for k in [k for k in samplers if k < i - 1]:
                del samplers[k]
            samplers[i] = sampler_for(history.fields[i], workers)
        return samplers[i]

    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for i in range(nt - 1):
            active = np.flatnonzero(status == "active")
            coupling = history.couplings[i]
            if coupling is not None:
                new = pos[active].copy()
                if coupling.conjugate == "momentum":
                    new[:, coupling.apparatus_axis] += coupling.shift(new[:, coupling.system_axis])
                nodes = np.zeros(len(active), dtype=bool)
            else:
                st = _Stepper(sampler(i), sampler(i + 1), history.times[i + 1] - history.times[i],
                              history.times[i], masses, threshold, tolerance)
                blocks = np.array_split(active, threads) if pool else [active]
                jobs = [(pos[b], last_v[b]) for b in blocks]
                results = list(pool.map(st, jobs)) if pool else [st(j) for j in jobs]
                new = np.concatenate([r[0] for r in results]) if results else pos[active]
                vel = np.concatenate([r[1] for r in results]) if results else last_v[active]
                nodes = np.concatenate([r[2] for r in results]) if results else np.zeros(0, bool)
                last_v[active] = vel
            for j in active[nodes]:
                events.append((int(j), float(history.times[i])))
            gone = ~spec.inside(new)
            ok = active[~gone]
            pos[ok] = new[~gone]
            status[active[gone]] = "absorbed"
            absorbed_at[active[gone]] = i + 1
            out[:, i + 1] = pos
    finally:
        if pool:
            pool.shutdown()
    if events:
        log.info("node regularization applied %d times", len(events))
    return TrajectoryEnsemble(np.asarray(history.times, dtype=float), out, status.astype(str),
                              None if seeds is None else np.asarray(seeds), events, spec.names,
                              absorbed_at)


def integrate_trajectory(history: FieldHistory, x0) -> Trajectory:
    ens = integrate_ensemble(history, np.atleast_2d(np.asarray(x0, dtype=float)))
    return ens[0]


@dataclass
class CrossingReport:
    violations: int
    trajectories: int
    tolerance: float
    events: list  # (time, lower index, upper index, overlap)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def check_no_crossing(ens: TrajectoryEnsemble, axis: int = 0, tol: float = 0.0, max_events: int = 20) -> CrossingReport:
    """Check that the initial ordering along ``axis`` holds at every sample time.

    A pair of neighbours (in initial order) counts as a violation when the
    lower one ends up more than ``tol`` above the upper one.
    """
    x = ens.positions[:, :, axis]
    order = np.argsort(x[:, 0], kind="stable")
    xs = x[order]
    gaps = np.diff(xs, axis=0)  # (N-1, T)
    bad = gaps < -tol
    events = []
    for k, t in zip(*np.nonzero(bad)):
        if len(events) >= max_events:
            break
        events.append((float(ens.times[t]), int(order[k]), int(order[k + 1]), float(-gaps[k, t])))
    return CrossingReport(int(np.sum(bad)), len(ens), tol, events)


def axis_crossings(ens: TrajectoryEnsemble, axis: int = 0, plane: float = 0.0) -> np.ndarray:
    """Mask of trajectories that are ever on the other side of ``plane`` than at t=0."""
    side = ens.positions[:, :, axis] >= plane
    return np.any(side != side[:, :1], axis=1)
