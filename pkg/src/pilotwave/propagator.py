"""Time evolution under i d/dt psi = H psi with H = kinetic + potential + couplings.

Two integrators are provided: Strang split-operator with a spectral kinetic
step (any dimension) and Crank-Nicolson with a periodic finite-difference
Laplacian (1D, or axis by axis for separable 2D problems).  Pointer
couplings are impulsive von Neumann interactions applied with the kinetic
term frozen for the duration of their window.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft
import scipy.sparse
import scipy.sparse.linalg

from .errors import ConfigurationError, StepSizeError
from .grid import Axis, GridField, GridSpec, SeparableField

# Largest phase (rad) any grid mode may acquire in one split-operator step.
STABILITY_PHASE = math.pi / 4
ABSORBER_PEAK = 5.0
POTENTIALS = ("free", "harmonic", "double_slit", "tabulated")
# Relative tolerance under which a pointer shift counts as a whole number of cells.
_INTEGER_SHIFT_TOL = 1e-9


@dataclass(frozen=True)
class CouplingSchedule:
    """Impulsive von Neumann coupling between a system axis and an apparatus axis.

    ``form="projection"`` uses ``regions``: a partition of the system axis into
    half-open intervals, each with a sign (+1 or -1).  ``form="linear"`` couples
    to the system coordinate itself.  With ``conjugate="momentum"`` the
    apparatus wave function is translated by ``sign * strength * duration``
    (H = g A p_b); with ``conjugate="position"`` it receives that much
    momentum instead (H = -g A x_b).
    """

    system_axis: int
    apparatus_axis: int
    strength: float
    window: tuple[float, float]
    form: str = "projection"
    regions: tuple[tuple[tuple[float, float], float], ...] = ()
    conjugate: str = "momentum"
    label: str = ""

    def __post_init__(self):
        t0, t1 = self.window
        if not t1 > t0:
            raise ConfigurationError(f"coupling {self.label!r}: window must satisfy t0 < t1, got {self.window}")
        if not math.isfinite(self.strength * (t1 - t0)):
            raise ConfigurationError(f"coupling {self.label!r}: g*(t1-t0) must be finite")
        if self.system_axis == self.apparatus_axis:
            raise ConfigurationError("system and apparatus axes must differ")
        if self.form not in ("projection", "linear"):
            raise ConfigurationError(f"unknown coupling form {self.form!r}")
        if self.conjugate not in ("momentum", "position"):
            raise ConfigurationError(f"unknown coupling conjugate {self.conjugate!r}")
        if self.form == "projection" and not self.regions:
            raise ConfigurationError("projection coupling needs at least one region")
        regions = tuple(((float(iv[0]), float(iv[1])), float(sign)) for iv, sign in self.regions)
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "window", (float(t0), float(t1)))

    @property
    def duration(self) -> float:
        return self.window[1] - self.window[0]

    @property
    def displacement(self) -> float:
        return self.strength * self.duration

    def observable(self, x) -> np.ndarray:
        """Eigenvalue of the coupled system observable at coordinate ``x``."""
        x = np.asarray(x, dtype=float)
        if self.form == "linear":
            return x.copy()
        out = np.zeros_like(x)
        for (lo, hi), sign in self.regions:
            out = np.where((x >= lo) & (x < hi), sign, out)
        return out

    def shift(self, x) -> np.ndarray:
        return self.displacement * self.observable(x)

    def check_partition(self, axis: Axis) -> None:
        if self.form != "projection":
            return
        x = axis.coords
        hits = np.zeros(axis.points, dtype=int)
        for (lo, hi), _ in self.regions:
            hits += (x >= lo) & (x < hi)
        if np.any(hits != 1):
            raise ConfigurationError(
                f"coupling {self.label!r}: projection regions do not partition axis {axis.name!r} "
                f"({int(np.sum(hits == 0))} cells uncovered, {int(np.sum(hits > 1))} covered twice)")

    def to_dict(self) -> dict:
        return {"system_axis": self.system_axis, "apparatus_axis": self.apparatus_axis,
                "strength": self.strength, "window": list(self.window), "form": self.form,
                "regions": [{"interval": list(iv), "sign": s} for iv, s in self.regions],
                "conjugate": self.conjugate, "label": self.label}


@dataclass(frozen=True)
class HamiltonianSpec:
    masses: tuple[float, ...] = (1.0,)
    potential: str = "free"
    omega: tuple[float, ...] = ()
    center: tuple[float, ...] = ()
    # double_slit: wall across axis 0 at ``barrier_position`` with openings on axis 1.
    barrier_position: float = 0.0
    barrier_thickness: float = 0.5
    barrier_height: float = 50.0
    slit_centers: tuple[float, ...] = (-2.0, 2.0)
    slit_width: float = 1.0
    table: np.ndarray | None = field(default=None, compare=False)
    couplings: tuple[CouplingSchedule, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        if any(m <= 0 for m in self.masses):
            raise ConfigurationError("masses must be positive")
        if self.potential not in POTENTIALS:
            raise ConfigurationError(f"potential must be one of {POTENTIALS}, got {self.potential!r}")
        cs = sorted(self.couplings, key=lambda c: c.window[0])
        for a, b in zip(cs, cs[1:]):
            if b.window[0] < a.window[1]:
                raise ConfigurationError(f"coupling windows overlap: {a.window} and {b.window}")
        object.__setattr__(self, "couplings", tuple(cs))

    def mass(self, axis: int) -> float:
        return self.masses[axis] if len(self.masses) > 1 else self.masses[0]

    def masses_for(self, dims: int) -> np.ndarray:
        return np.array([self.mass(i) for i in range(dims)])

    @property
    def separable(self) -> bool:
        return self.potential in ("free", "harmonic")

    def restrict(self, axis: int) -> "HamiltonianSpec":
        """The 1D Hamiltonian acting on one axis of a separable problem."""
        if not self.separable:
            raise ConfigurationError(f"potential {self.potential!r} is not separable")
        return HamiltonianSpec(
            masses=(self.mass(axis),), potential=self.potential,
            omega=(self.omega[axis] if len(self.omega) > 1 else self.omega[0],) if self.omega else (),
            center=(self.center[axis],) if self.center else ())

    def real_potential(self, spec: GridSpec) -> np.ndarray:
        if self.potential == "free":
            return np.zeros(spec.shape)
        if self.potential == "harmonic":
            if not self.omega:
                raise ConfigurationError("harmonic potential needs omega")
            v = np.zeros(spec.shape)
            for i, a in enumerate(spec.axes):
                w = self.omega[i] if len(self.omega) > 1 else self.omega[0]
                c = self.center[i] if self.center else 0.0
                v = v + spec.broadcast(0.5 * self.mass(i) * w**2 * (a.coords - c) ** 2, i)
            return v
        if self.potential == "double_slit":
            if spec.dims < 2:
                raise ConfigurationError("double-slit barrier needs a 2D grid (propagation, transverse)")
            x, y = spec.mesh()[:2]
            wall = np.abs(x - self.barrier_position) < self.barrier_thickness / 2
            opening = np.zeros_like(wall)
            for yc in self.slit_centers:
                opening |= np.abs(y - yc) < self.slit_width / 2
            return np.where(wall & ~opening, self.barrier_height, 0.0)
        if self.table is None:
            raise ConfigurationError("tabulated potential needs a table")
        table = np.asarray(self.table, dtype=float)
        if table.size != int(np.prod(spec.shape)):
            raise ConfigurationError(f"potential table has {table.size} values, grid has {int(np.prod(spec.shape))}")
        return table.reshape(spec.shape)

    def potential_values(self, spec: GridSpec) -> np.ndarray:
        """Potential on the grid, with the absorbing layer as a negative imaginary part."""
        v = self.real_potential(spec)
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("potential is not finite on the grid")
        if spec.boundary == "absorbing":
            w = np.zeros(spec.shape)
            for i, a in enumerate(spec.axes):
                w = np.maximum(w, spec.broadcast(a.absorber_profile(), i))
            return v - 1j * ABSORBER_PEAK * w
        return v.astype(float)


def kinetic_symbol(spec: GridSpec, h: HamiltonianSpec) -> np.ndarray:
    """k^2 / 2m summed over axes, laid out in FFT order."""
    t = np.zeros(spec.shape)
    for i, a in enumerate(spec.axes):
        t = t + spec.broadcast(a.wavenumbers**2 / (2.0 * h.mass(i)), i)
    return t


def max_phase_rate(spec: GridSpec, h: HamiltonianSpec) -> float:
    """Largest |eigenvalue| scale per unit time: max |V| plus the top kinetic mode."""
    vmax = float(np.max(np.abs(h.potential_values(spec))))
    tmax = sum((np.pi / a.spacing) ** 2 / (2.0 * h.mass(i)) for i, a in enumerate(spec.axes))
    return vmax + tmax


def max_stable_dt(spec: GridSpec, h: HamiltonianSpec) -> float:
    return STABILITY_PHASE / max_phase_rate(spec, h)


class SplitOperator:
    """Strang splitting: half potential, full spectral kinetic, half potential."""

    def __init__(self, spec: GridSpec, h: HamiltonianSpec, dt: float, workers: int | None = None):
        if not dt > 0:
            raise StepSizeError(f"time step must be positive, got {dt}")
        rate = max_phase_rate(spec, h)
        if dt * rate >= STABILITY_PHASE:
            raise StepSizeError(
                f"dt={dt:g} gives phase {dt * rate:.4g} rad per step; the guard requires < pi/4 "
                f"(use dt < {STABILITY_PHASE / rate:.4g})")
        self.spec, self.dt, self.workers = spec, dt, workers
        v = h.potential_values(spec)
        self.half_potential = np.exp(-0.5j * dt * v)
        self.kinetic = np.exp(-1j * dt * kinetic_symbol(spec, h))

    def step(self, a: np.ndarray) -> np.ndarray:
        a = a * self.half_potential
        a = scipy.fft.ifftn(scipy.fft.fftn(a, workers=self.workers) * self.kinetic, workers=self.workers)
        return a * self.half_potential

    def run(self, a: np.ndarray, steps: int) -> np.ndarray:
        for _ in range(steps):
            a = self.step(a)
        return a


def step_split_operator(f: GridField, h: HamiltonianSpec, dt: float, workers: int | None = None) -> GridField:
    return f.replace(SplitOperator(f.spec, h, dt, workers).step(f.amplitudes), f.time + dt)


# Central-difference second-derivative stencils (offsets 0, 1, 2, ...), periodic.
_LAPLACIAN_STENCILS = {
    2: (-2.0, 1.0),
    4: (-5.0 / 2, 4.0 / 3, -1.0 / 12),
    6: (-49.0 / 18, 3.0 / 2, -3.0 / 20, 1.0 / 90),
    8: (-205.0 / 72, 8.0 / 5, -1.0 / 5, 8.0 / 315, -1.0 / 560),
}


def fd_laplacian(axis: Axis, order: int = 4) -> scipy.sparse.csc_matrix:
    try:
        stencil = _LAPLACIAN_STENCILS[order]
    except KeyError:
        raise ConfigurationError(f"finite-difference order must be one of {sorted(_LAPLACIAN_STENCILS)}") from None
    n = axis.points
    diags, offsets = [], []
    for k, c in enumerate(stencil):
        if k == 0:
            diags.append(np.full(n, c)); offsets.append(0)
            continue
        for off in (k, -k, n - k, -(n - k)):
            diags.append(np.full(n, c)); offsets.append(off)
    lap = scipy.sparse.diags(diags, offsets, shape=(n, n), format="csc")
    return lap / axis.spacing**2


class CrankNicolson:
    """(1 + i dt H/2) psi' = (1 - i dt H/2) psi, one factorized solve per axis.

    Only 1D problems and separable 2D problems (free or harmonic potential) are
    supported; the per-axis Hamiltonians commute so the axis sweep keeps
    second order in dt.
    """

    def __init__(self, spec: GridSpec, h: HamiltonianSpec, dt: float, order: int = 4):
        if not dt > 0:
            raise StepSizeError(f"time step must be positive, got {dt}")
        if spec.dims > 2 or (spec.dims == 2 and not h.separable):
            raise ConfigurationError("Crank-Nicolson supports 1D grids or separable 2D problems only")
        self.spec, self.dt = spec, dt
        self._ops = []
        if spec.dims == 1:
            v = h.potential_values(spec)
            self._ops.append(self._build(spec.axes[0], h.mass(0), v, dt, order))
        else:
            for i, a in enumerate(spec.axes):
                sub = GridSpec((a,), spec.boundary)
                v = h.restrict(i).potential_values(sub)
                self._ops.append(self._build(a, h.mass(i), v, dt, order))

    @staticmethod
    def _build(axis, mass, v, dt, order):
        n = axis.points
        ham = -fd_laplacian(axis, order) / (2.0 * mass) + scipy.sparse.diags(np.asarray(v, dtype=complex), 0)
        eye = scipy.sparse.identity(n, dtype=complex, format="csc")
        lhs = (eye + 0.5j * dt * ham).tocsc()
        rhs = (eye - 0.5j * dt * ham).tocsr()
        return scipy.sparse.linalg.splu(lhs), rhs

    def step(self, a: np.ndarray) -> np.ndarray:
        if self.spec.dims == 1:
            lu, rhs = self._ops[0]
            return lu.solve(rhs @ a)
        (lu0, r0), (lu1, r1) = self._ops
        a = lu0.solve(r0 @ a)
        return lu1.solve(r1 @ a.T).T

    def run(self, a: np.ndarray, steps: int) -> np.ndarray:
        for _ in range(steps):
            a = self.step(a)
        return a


def step_crank_nicolson(f: GridField, h: HamiltonianSpec, dt: float, order: int = 4) -> GridField:
    return f.replace(CrankNicolson(f.spec, h, dt, order).step(f.amplitudes), f.time + dt)


# -- impulsive couplings --------------------------------------------------------

def translate(a: np.ndarray, axis: Axis, shifts: np.ndarray, along: int, workers: int | None = None) -> np.ndarray:
    """Translate ``a`` along array axis ``along`` by ``shifts`` (broadcastable).

    Whole-cell shifts are applied exactly with ``np.roll``; anything else is a
    spectral (band-limited) translation on the periodic axis.
    """
    shifts = np.asarray(shifts, dtype=float)
    cells = shifts / axis.spacing
    if np.all(np.abs(cells - np.round(cells)) < _INTEGER_SHIFT_TOL):
        cells = np.round(cells).astype(int)
        values = np.unique(cells)
        if len(values) == 1:
            return np.roll(a, int(values[0]), axis=along)
        out = np.zeros_like(a)
        for v in values:
            out = np.where(cells == v, np.roll(a, int(v), axis=along), out)
        return out
    k = axis.wavenumbers.reshape([-1 if i == along else 1 for i in range(a.ndim)])
    spec = scipy.fft.fft(a, axis=along, workers=workers)
    return scipy.fft.ifft(spec * np.exp(-1j * k * shifts), axis=along, workers=workers)


def apply_measurement_coupling(f: GridField, c: CouplingSchedule, workers: int | None = None) -> GridField:
    """Apply the coupling over its whole window (kinetic term frozen)."""
    spec = f.spec
    if max(c.system_axis, c.apparatus_axis) >= spec.dims:
        raise ConfigurationError(f"coupling axes ({c.system_axis}, {c.apparatus_axis}) not on a {spec.dims}-axis grid")
    c.check_partition(spec.axes[c.system_axis])
    before = float(np.sum(np.abs(f.amplitudes) ** 2))
    if c.displacement == 0.0 or before == 0.0:
        return f.replace(time=f.time + c.duration)
    sys_ax, app_ax = spec.axes[c.system_axis], spec.axes[c.apparatus_axis]
    shift = spec.broadcast(c.shift(sys_ax.coords), c.system_axis)
    if c.conjugate == "momentum":
        a = translate(f.amplitudes, app_ax, shift, c.apparatus_axis, workers)
    else:
        y = spec.broadcast(app_ax.coords, c.apparatus_axis)
        a = f.amplitudes * np.exp(1j * shift * y)
    a = a * np.sqrt(before / np.sum(np.abs(a) ** 2))
    return f.replace(a, f.time + c.duration)


def apply_coupling_separable(f: SeparableField, c: CouplingSchedule) -> SeparableField:
    """Projection coupling on a sum of products: each term splits by region."""
    if c.form != "projection":
        raise ConfigurationError("separable fields support projection couplings only")
    spec = f.spec
    sys_ax, app_ax = spec.axes[c.system_axis], spec.axes[c.apparatus_axis]
    c.check_partition(sys_ax)
    x = sys_ax.coords
    terms, labels = [], []
    for (coef, factors), label in zip(f.terms, f.labels):
        for k, ((lo, hi), sign) in enumerate(c.regions):
            mask = (x >= lo) & (x < hi)
            part = np.where(mask, factors[c.system_axis], 0.0)
            if not np.any(part):
                continue
            new = list(factors)
            new[c.system_axis] = part
            d = sign * c.displacement
            if c.conjugate == "momentum":
                new[c.apparatus_axis] = translate(factors[c.apparatus_axis], app_ax, d, 0)
            else:
                new[c.apparatus_axis] = factors[c.apparatus_axis] * np.exp(1j * d * app_ax.coords)
            terms.append((coef, tuple(new)))
            labels.append(f"{label}{k}")
    return SeparableField(spec, terms, labels, f.time + c.duration)


# -- histories -------------------------------------------------------------------

@dataclass
class FieldHistory:
    """Snapshots of an evolving field.

    ``couplings[i]`` is the impulsive coupling acting between snapshot ``i``
    and ``i + 1`` (``None`` for ordinary Schrodinger steps).
    """

    times: np.ndarray
    fields: list
    couplings: list
    hamiltonian: HamiltonianSpec

    @property
    def spec(self) -> GridSpec:
        return self.fields[0].spec

    @property
    def final(self):
        return self.fields[-1]

    def index_at(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigurationError(f"no snapshot at t={t}; nearest is {self.times[i]}")
        return i

    def at(self, t: float):
        return self.fields[self.index_at(t)]

    def __len__(self):
        return len(self.times)


def _segments(t_start: float, t_end: float, couplings: Sequence[CouplingSchedule]):
    t = t_start
    for c in couplings:
        if c.window[1] <= t_start or c.window[0] >= t_end:
            continue
        if c.window[0] < t_start - 1e-12 or c.window[1] > t_end + 1e-12:
            raise ConfigurationError(f"coupling window {c.window} straddles the run interval [{t_start}, {t_end}]")
        if c.window[0] > t + 1e-12:
            yield ("free", t, c.window[0])
        yield ("coupling", c)
        t = c.window[1]
    if t_end > t + 1e-12:
        yield ("free", t, t_end)


def evolve(f, h: HamiltonianSpec, duration: float, *, dt: float | None = None,
           snapshot_interval: float | None = None, method: str = "split",
           workers: int | None = None) -> FieldHistory:
    """Evolve ``f`` for ``duration``, applying any coupling windows on the way.

    Snapshots are evenly spaced within each free segment (at most
    ``snapshot_interval`` apart) and bracket every coupling window.
    ``f`` may be a :class:`GridField` or a :class:`SeparableField`.
    """
    separable = isinstance(f, SeparableField)
    spec = f.spec
    if separable:
        if not h.separable:
            raise ConfigurationError("separable evolution needs a free or harmonic potential")
        dt_max = min(max_stable_dt(GridSpec((a,), spec.boundary), h.restrict(i)) for i, a in enumerate(spec.axes))
    elif method == "split":
        dt_max = max_stable_dt(spec, h)
    elif method == "crank_nicolson":
        dt_max = math.inf
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    if dt is not None:
        if not dt > 0:
            raise StepSizeError(f"time step must be positive, got {dt}")
        if dt >= dt_max:
            raise StepSizeError(f"dt={dt:g} violates the stability guard (need dt < {dt_max:.4g})")
        dt_max = dt * (1 + 1e-12)
    else:
        dt_max = 0.9 * dt_max
    if not math.isfinite(dt_max):
        raise ConfigurationError("Crank-Nicolson evolution needs an explicit dt")

    times, fields, couplings = [f.time], [f], []
    t_end = f.time + duration
    steppers: dict[float, object] = {}

    def stepper(step):
        key = round(step, 15)
        if key not in steppers:
            if separable:
                steppers[key] = [SplitOperator(GridSpec((a,), spec.boundary), h.restrict(i), step, workers)
                                 for i, a in enumerate(spec.axes)]
            elif method == "split":
                steppers[key] = SplitOperator(spec, h, step, workers)
            else:
                steppers[key] = CrankNicolson(spec, h, step)
        return steppers[key]

    cur = f
    for seg in _segments(f.time, t_end, h.couplings):
        if seg[0] == "coupling":
            c = seg[1]
            cur = apply_coupling_separable(cur, c) if separable else apply_measurement_coupling(cur, c, workers)
            couplings.append(c)
            times.append(cur.time)
            fields.append(cur)
            continue
        _, ta, tb = seg
        length = tb - ta
        n_snap = 1 if snapshot_interval is None else max(1, math.ceil(length / snapshot_interval - 1e-9))
        sub = length / n_snap
        n_steps = max(1, math.ceil(sub / dt_max - 1e-9))
        step = sub / n_steps
        st = stepper(step)
        for k in range(n_snap):
            t_next = ta + (k + 1) * sub
            if separable:
                terms = [(coef, tuple(s.run(fa, n_steps) for s, fa in zip(st, factors)))
                         for coef, factors in cur.terms]
                cur = cur.replace(terms, time=t_next)
            else:
                cur = cur.replace(st.run(np.array(cur.amplitudes), n_steps), t_next)
            couplings.append(None)
            times.append(t_next)
            fields.append(cur)
    return FieldHistory(np.array(times), fields, couplings, h)


def energy(f: GridField, h: HamiltonianSpec) -> float:
    """<H> / <psi|psi> with the spectral kinetic operator."""
    a = f.amplitudes
    ka = scipy.fft.ifftn(scipy.fft.fftn(a) * kinetic_symbol(f.spec, h))
    v = h.real_potential(f.spec)
    num = np.sum(np.conj(a) * ka).real + np.sum(v * np.abs(a) ** 2)
    return float(num / np.sum(np.abs(a) ** 2))
