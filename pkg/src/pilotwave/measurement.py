"""Pointer measurements, conditional wave functions and the camera stage.

A system coordinate x is measured by a pointer y through an impulsive
projection coupling: the half-line x < b displaces the pointer by -D and the
rest by +D.  Outcome regions are L = {y < b_y} and R = {y >= b_y}.  An
optional camera coordinate z then reads the pointer region the same way,
with outcome regions {z < b_z} and {z >= b_z}.

Pointer widths ``w`` refer to the Gaussian amplitude exp(-y^2 / 2w^2), so the
|Phi|^2 standard deviation is w / sqrt(2).  For truncated-Cauchy ready states
``w`` is the half-width of |Phi|^2.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .equilibrium import (STREAM_INITIAL, STREAM_POINTER, EnsembleSpec, binomial_sigma, compare_samples,
                          inverse_cdf_sample, sample_initial, uniforms)
from .errors import ConfigurationError, MeasurementDeviceNoGood, SemanticError, UndefinedConditionalError
from .grid import (Axis, GridField, GridSpec, RegionSpec, SeparableField, cross_term_bound,
                   field_1d, gaussian, inner_product, marginal_density, norm_squared, region_probability,
                   truncated_cauchy)
from .guidance import NODE_THRESHOLD, TrajectoryEnsemble, integrate_ensemble, velocity_field
from .propagator import CouplingSchedule, FieldHistory, HamiltonianSpec, evolve
from .report import Histogram, RunReport
from . import analytic

NORMALIZATION_TOL = 1e-10
ORTHOGONALITY_TOL = 1e-8


@dataclass(frozen=True)
class ReadyState:
    shape: str = "gaussian"  # gaussian | cauchy
    width: float = 0.5
    cutoff: float = 20.0  # cauchy only, in half-widths

    def __post_init__(self):
        if self.shape not in ("gaussian", "cauchy"):
            raise ConfigurationError(f"ready state shape must be 'gaussian' or 'cauchy', got {self.shape!r}")
        if not self.width > 0:
            raise ConfigurationError(f"ready state width must be positive, got {self.width}")
        if not self.cutoff > 0:
            raise ConfigurationError(f"cauchy cutoff must be positive, got {self.cutoff}")

    @property
    def density_std(self) -> float:
        return self.width / math.sqrt(2.0) if self.shape == "gaussian" else math.inf

    def amplitudes(self, axis: Axis, center: float = 0.0) -> np.ndarray:
        if self.shape == "gaussian":
            return gaussian(axis, center, self.density_std)
        return truncated_cauchy(axis, center, self.width, self.cutoff)

    def to_dict(self) -> dict:
        d = {"shape": self.shape, "width": self.width}
        if self.shape == "cauchy":
            d["cutoff"] = self.cutoff
        return d


@dataclass(frozen=True)
class MeasurementScenario:
    c1: complex = 1 / math.sqrt(2)
    c2: complex = 1 / math.sqrt(2)
    system_axis: Axis = Axis(-25.6, 25.6, 512, "x")
    pointer_axis: Axis = Axis(-12.8, 12.8, 512, "y")
    camera_axis: Axis | None = None
    system_centers: tuple[float, float] = (-4.0, 4.0)
    system_width: float = 0.5  # std of |phi_i|^2
    system_boundary: float = 0.0
    pointer: ReadyState = ReadyState()
    camera: ReadyState = ReadyState()
    pointer_displacement: float | None = None  # default: the separation guard
    camera_displacement: float | None = None
    pointer_boundary: float = 0.0
    camera_boundary: float = 0.0
    coupling_duration: float = 1.0
    settle_time: float = 0.1
    camera_settle_time: float = 0.0
    separation_guard: float = 6.0
    localization_tolerance: float = 1e-6
    enforce_localization: bool = True
    snapshot_interval: float = 0.01
    masses: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "c1", complex(self.c1))
        object.__setattr__(self, "c2", complex(self.c2))
        norm = abs(self.c1) ** 2 + abs(self.c2) ** 2
        if abs(norm - 1.0) > NORMALIZATION_TOL:
            raise SemanticError(f"normalization invariant violated: |c1|^2 + |c2|^2 = {norm:.12g}, must be 1")
        lo, hi = self.system_centers
        if not lo < self.system_boundary <= hi:
            raise SemanticError("system states must lie on opposite sides of the system boundary")
        for name, ax, b in (("system", self.system_axis, self.system_boundary),
                            ("pointer", self.pointer_axis, self.pointer_boundary),
                            ("camera", self.camera_axis, self.camera_boundary)):
            if ax is not None and not ax.lo < b < ax.hi:
                raise SemanticError(f"{name} boundary {b} lies outside the {name} axis")
        if self.camera_axis is not None and len({self.system_axis.name, self.pointer_axis.name,
                                                 self.camera_axis.name}) < 3:
            raise SemanticError("system, pointer and camera axes need distinct names")
        if self.pointer_shift <= 0 or (self.camera_axis is not None and self.camera_shift <= 0):
            raise SemanticError("pointer displacements must be positive")
        if self.coupling_duration <= 0 or self.settle_time < 0 or self.camera_settle_time < 0:
            raise SemanticError("coupling duration must be positive and settle times non-negative")
        overlap = abs(np.sum(np.conj(self.phi(0)) * self.phi(1)) * self.system_axis.spacing)
        if overlap > ORTHOGONALITY_TOL:
            raise SemanticError(f"orthogonality invariant violated: |<phi1, phi2>| = {overlap:.3g}")

    # -- derived quantities -------------------------------------------------

    @property
    def pointer_shift(self) -> float:
        return self.guard_distance if self.pointer_displacement is None else float(self.pointer_displacement)

    @property
    def camera_shift(self) -> float:
        if self.camera_displacement is None:
            return self.separation_guard * self.camera.width
        return float(self.camera_displacement)

    @property
    def guard_distance(self) -> float:
        """Smallest pointer displacement that counts as well separated."""
        return self.separation_guard * self.pointer.width

    @property
    def stage1_end(self) -> float:
        return self.coupling_duration + self.settle_time

    @property
    def stage2_end(self) -> float:
        return self.stage1_end + self.coupling_duration + self.camera_settle_time

    def phi(self, i: int) -> np.ndarray:
        return gaussian(self.system_axis, self.system_centers[i], self.system_width)

    def grid(self, dims: int = 2) -> GridSpec:
        if dims == 3 and self.camera_axis is None:
            raise ConfigurationError("scenario has no camera axis")
        return GridSpec((self.system_axis, self.pointer_axis, self.camera_axis)[:dims])

    def pointer_regions(self, dims: int = 2) -> tuple[RegionSpec, RegionSpec]:
        y = self.pointer_axis
        b = self.pointer_boundary
        return (RegionSpec.on_axis(dims, 1, y.lo, b, "L"), RegionSpec.on_axis(dims, 1, b, y.hi, "R"))

    def camera_regions(self) -> tuple[RegionSpec, RegionSpec]:
        z = self.camera_axis
        b = self.camera_boundary
        return (RegionSpec.on_axis(3, 2, z.lo, b, "cL"), RegionSpec.on_axis(3, 2, b, z.hi, "cR"))

    def stage1_coupling(self) -> CouplingSchedule:
        x, b, tau = self.system_axis, self.system_boundary, self.coupling_duration
        return CouplingSchedule(0, 1, self.pointer_shift / tau, (0.0, tau),
                                regions=(((x.lo, b), -1.0), ((b, x.hi), 1.0)), label="stage1")

    def stage2_coupling(self) -> CouplingSchedule:
        y, b, tau = self.pointer_axis, self.pointer_boundary, self.coupling_duration
        t0 = self.stage1_end
        return CouplingSchedule(1, 2, self.camera_shift / tau, (t0, t0 + tau),
                                regions=(((y.lo, b), -1.0), ((b, y.hi), 1.0)), label="stage2")

    def hamiltonian(self, dims: int = 2) -> HamiltonianSpec:
        couplings = (self.stage1_coupling(),) if dims == 2 else (self.stage1_coupling(), self.stage2_coupling())
        return HamiltonianSpec(masses=self.masses[:dims], couplings=couplings)

    def to_dict(self) -> dict:
        d = {
            "c1": [self.c1.real, self.c1.imag], "c2": [self.c2.real, self.c2.imag],
            "grid": {"axes": [a.to_dict() for a in (self.system_axis, self.pointer_axis, self.camera_axis)
                              if a is not None]},
            "system_centers": list(self.system_centers), "system_width": self.system_width,
            "pointer": self.pointer.to_dict(), "pointer_displacement": self.pointer_shift,
            "pointer_boundary": self.pointer_boundary, "system_boundary": self.system_boundary,
            "coupling_duration": self.coupling_duration, "settle_time": self.settle_time,
            "separation_guard": self.separation_guard, "guard_distance": self.guard_distance,
            "localization_tolerance": self.localization_tolerance,
            "enforce_localization": self.enforce_localization,
            "snapshot_interval": self.snapshot_interval, "masses": list(self.masses),
        }
        if self.camera_axis is not None:
            d.update({"camera": self.camera.to_dict(), "camera_displacement": self.camera_shift,
                      "camera_boundary": self.camera_boundary, "camera_settle_time": self.camera_settle_time})
        return d


@dataclass
class MeasurementRun:
    report: RunReport
    history: FieldHistory
    ensemble: TrajectoryEnsemble
    branches: tuple = ()  # final branch fields c_i phi_i Phi_i (None when c_i = 0)
    scenario: MeasurementScenario | None = None
    seeds: np.ndarray | None = field(default=None, repr=False)


def _check_guard(s: MeasurementScenario, report: RunReport):
    report.diagnostics["pointer_displacement"] = s.pointer_shift
    report.diagnostics["guard_distance"] = s.guard_distance
    if s.enforce_localization and s.pointer_shift < s.guard_distance * (1 - 1e-12):
        raise MeasurementDeviceNoGood(
            f"pointer displacement {s.pointer_shift:g} is below the separation guard "
            f"{s.separation_guard:g} w = {s.guard_distance:g}")


def _localization(s: MeasurementScenario, masses: dict, report: RunReport):
    worst = max(masses.values()) if masses else 0.0
    report.diagnostics["localization_leak"] = masses
    if s.enforce_localization and worst > s.localization_tolerance:
        name = max(masses, key=masses.get)
        raise MeasurementDeviceNoGood(
            f"pointer packet {name} leaks {worst:.3g} of its weight into the wrong outcome region "
            f"(tolerance {s.localization_tolerance:g})")


def stage1_fields(s: MeasurementScenario, workers: int | None = None):
    """Evolve each branch c_i phi_i Phi_0 separately; the full history is their sum."""
    grid = s.grid(2)
    h = s.hamiltonian(2)
    phi0 = s.pointer.amplitudes(s.pointer_axis)
    hists = []
    for i, c in enumerate((s.c1, s.c2)):
        if c == 0:
            hists.append(None)
            continue
        f0 = GridField(grid, c * np.multiply.outer(s.phi(i), phi0))
        hists.append(evolve(f0, h, s.stage1_end, snapshot_interval=s.snapshot_interval, workers=workers))
    live = [hh for hh in hists if hh is not None]
    fields = [sum(fs[1:], fs[0]) for fs in zip(*(hh.fields for hh in live))]
    full = FieldHistory(live[0].times, fields, live[0].couplings, h)
    return full, hists


def run_stage1(s: MeasurementScenario, ens: EnsembleSpec, threads: int = 1,
               workers: int | None = None) -> MeasurementRun:
    """Pointer readout: (c1 phi1 + c2 phi2) Phi0 -> c1 phi1 Phi1 + c2 phi2 Phi2."""
    report = RunReport(scenario={"kind": "measurement", "stage": 1, **s.to_dict()})
    _check_guard(s, report)
    t0 = time.perf_counter()
    full, hists = stage1_fields(s, workers)
    report.timing["evolve_s"] = time.perf_counter() - t0
    L, R = s.pointer_regions(2)
    branches = tuple(None if hh is None else hh.final for hh in hists)
    leak = {}
    for i, (b, right) in enumerate(zip(branches, (R, L))):
        if b is not None:
            leak[f"Phi{i + 1}"] = region_probability(b, right) / norm_squared(b)
    _localization(s, leak, report)

    fT = full.final
    q = {"P(Y in L)": region_probability(fT, L), "P(Y in R)": region_probability(fT, R),
         "norm": norm_squared(fT)}
    for reg in (L, R):
        parts = [0.0 if b is None else region_probability(b, reg) for b in branches]
        q[f"branch1_{reg.label}"], q[f"branch2_{reg.label}"] = parts
        if all(b is not None for b in branches):
            cross = 2.0 * inner_product(branches[0], branches[1], reg).real
            bound = 2.0 * cross_term_bound(branches[0], branches[1], reg)
        else:
            cross = bound = 0.0
        q[f"cross_{reg.label}"] = cross
        q[f"cs_bound_{reg.label}"] = bound
    report.quadrature.update(q)
    report.diagnostics["norm_drift"] = abs(q["norm"] - 1.0)
    report.diagnostics["grid"] = s.grid(2).to_dict()

    t0 = time.perf_counter()
    x0 = sample_initial(full.fields[0], ens, STREAM_INITIAL)
    seeds = ens.seeds()
    e = integrate_ensemble(full, x0, seeds=seeds, threads=threads, workers=workers)
    report.timing["trajectories_s"] = time.perf_counter() - t0
    report.ensemble = e

    p1 = abs(s.c1) ** 2
    rL = report.add_rate("P(Y in L)", e.final, L)
    report.add_rate("P(Y in R)", e.final, R)
    sig = binomial_sigma(p1, ens.n)
    report.add_check("born_empirical", abs(rL.rate - p1) <= 3 * sig + 1e-12, rL.rate, [p1, 3 * sig],
                     "empirical P(Y in L) within 3 binomial sigma of |c1|^2")
    tol = 1e-5 + q["cs_bound_L"]
    report.add_check("born_quadrature", abs(q["P(Y in L)"] - p1) <= tol, q["P(Y in L)"], [p1, tol],
                     "quadrature P(Y in L) within 1e-5 plus the Cauchy-Schwarz bound of |c1|^2")
    report.add_check("cross_term_bounded", abs(q["cross_L"]) <= q["cs_bound_L"] + 1e-15,
                     q["cross_L"], q["cs_bound_L"], "|cross term| <= Cauchy-Schwarz bound")
    report.diagnostics["absorbed"] = int(np.sum(e.status != "active"))
    report.diagnostics["node_events"] = len(e.node_events)
    h = compare_samples(e.final[:, 1], marginal_density(fT, 1), s.pointer_axis, fT.time,
                        symmetric_about=s.pointer_boundary)
    report.histograms["pointer"] = Histogram(h.edges, h.counts, h.expected, axis=1)
    report.fields["final"] = fT
    return MeasurementRun(report, full, e, branches, s, seeds)


# -- conditional wave functions ------------------------------------------------

def _spline_weights(t: np.ndarray):
    """Cubic B-spline weights for offsets -1, 0, 1, 2 around floor(t)."""
    i = np.floor(t).astype(np.int64)
    u = t - i
    w = np.stack([(1 - u) ** 3, 3 * u**3 - 6 * u**2 + 4, -3 * u**3 + 3 * u**2 + 3 * u + 1, u**3], axis=-1) / 6.0
    return i, w


def slice_along(a: np.ndarray, axis: Axis, along: int, values) -> np.ndarray:
    """Cubic-spline values of ``a`` at positions ``values`` on one array axis.

    The result has that array axis replaced by one entry per value.  Other
    axes are not interpolated, so this is exact in the remaining coordinates.
    """
    values = np.atleast_1d(np.asarray(values, dtype=float))
    t = axis.index_coordinate(values)
    i, w = _spline_weights(t)
    idx = (i[:, None] + np.arange(-1, 3)[None, :]) % axis.points  # (M, 4)
    out = 0
    for part, unit in ((a.real, 1.0), (a.imag, 1j)):
        c = ndimage.spline_filter1d(part, order=3, axis=along, mode="grid-wrap")
        c = np.moveaxis(c, along, -1)
        vals = np.einsum("...mk,mk->...m", c[..., idx], w)
        out = out + unit * vals
    return np.moveaxis(out, -1, along)


@dataclass
class ConditionalWaveFunction:
    field: GridField
    fixed: dict
    normalized: bool
    weight: float  # squared norm of the raw slice


def conditional_wavefunction(f, fixed: dict, normalize: bool = True,
                             threshold: float = NODE_THRESHOLD) -> ConditionalWaveFunction:
    """psi(., Y) on the remaining axes with the ``fixed`` coordinates inserted.

    ``fixed`` maps axis names or indices to values.  Dense fields are
    interpolated with cubic splines along the fixed axes; separable fields are
    evaluated factor by factor.
    """
    spec = f.spec
    fix = {spec.axis_index(k): float(v) for k, v in fixed.items()}
    if not fix or len(fix) >= spec.dims:
        raise ConfigurationError("fix at least one axis and leave at least one free")
    for i, v in fix.items():
        if not spec.axes[i].contains(v):
            raise ConfigurationError(f"fixed value {v} outside axis {spec.axes[i].name!r}")
    keep = [i for i in range(spec.dims) if i not in fix]
    sub = spec.sub(keep)
    if isinstance(f, SeparableField):
        peak = f.max_abs_bound()
        out = np.zeros(sub.shape, dtype=complex)
        for coef, factors in f.terms:
            w = coef
            for i, v in fix.items():
                w = w * slice_along(factors[i], spec.axes[i], 0, v)[0]
            t = factors[keep[0]]
            for k in keep[1:]:
                t = np.multiply.outer(t, factors[k])
            out += w * t
    else:
        a = np.asarray(f.amplitudes)
        peak = float(np.max(np.abs(a)))
        for i in sorted(fix, reverse=True):
            a = np.take(slice_along(a, spec.axes[i], i, fix[i]), 0, axis=i)
        out = a
    if not np.max(np.abs(out)) >= threshold * peak:
        raise UndefinedConditionalError(
            f"|psi| on the slice {fixed} is below {threshold:g} of its maximum everywhere")
    g = GridField(sub, out, f.time)
    weight = norm_squared(g)
    if normalize:
        g = g.normalized()
    return ConditionalWaveFunction(g, {spec.axes[i].name: v for i, v in fix.items()}, normalize, weight)


def conditional_slices(f: GridField, axis: int, values) -> np.ndarray:
    """Unnormalized slices of a dense 2D field at many values of one axis;
    returns shape (len(values), points on the other axis)."""
    if f.spec.dims != 2:
        raise ConfigurationError("conditional_slices expects a 2-axis field")
    out = slice_along(np.asarray(f.amplitudes), f.spec.axes[axis], axis, values)
    return out if axis == 0 else out.T


# -- camera stage -----------------------------------------------------------------

def run_stage2_camera(s: MeasurementScenario, ens: EnsembleSpec, threads: int = 1,
                      workers: int | None = None) -> MeasurementRun:
    """Camera records the pointer: -> c1 phi1 Phi1 Psi1 + c2 phi2 Phi2 Psi2.

    The three-axis field is carried as a sum of products, which both
    couplings and free motion preserve.
    """
    if s.camera_axis is None:
        raise ConfigurationError("camera stage needs a camera axis")
    report = RunReport(scenario={"kind": "measurement", "stage": 2, **s.to_dict()})
    _check_guard(s, report)
    grid = s.grid(3)
    h = s.hamiltonian(3)
    system = s.c1 * s.phi(0) + s.c2 * s.phi(1)
    f0 = SeparableField.product(grid, (system, s.pointer.amplitudes(s.pointer_axis),
                                       s.camera.amplitudes(s.camera_axis)))
    t0 = time.perf_counter()
    hist = evolve(f0, h, s.stage2_end, snapshot_interval=s.snapshot_interval, workers=workers)
    report.timing["evolve_s"] = time.perf_counter() - t0
    L, R = s.pointer_regions(3)
    cL, cR = s.camera_regions()
    f1 = hist.at(s.stage1_end)
    fT = hist.final

    # Terms are labelled "0" + x-region index + y-region index.
    leak = {}
    for k, wrong in enumerate((R, L)):
        b1 = f1.branch(f"0{k}")
        if b1.terms and norm_squared(b1) > 0:
            leak[f"Phi{k + 1}"] = region_probability(b1, wrong) / norm_squared(b1)
    for k, wrong in enumerate((cR, cL)):
        keep = [j for j, lab in enumerate(fT.labels) if lab.endswith(str(k))]
        if keep:
            sub = fT.replace([fT.terms[j] for j in keep], [fT.labels[j] for j in keep])
            leak[f"Psi{k + 1}"] = region_probability(sub, wrong) / norm_squared(sub)
    _localization(s, leak, report)

    stage1 = {"P(Y in L)": region_probability(f1, L), "P(Y in R)": region_probability(f1, R)}
    cells = {}
    for yr in (L, R):
        for zr in (cL, cR):
            box = RegionSpec((None, yr.intervals[1], zr.intervals[2]), f"{yr.label}&{zr.label}")
            cells[box.label] = (box, region_probability(fT, box))
    q = {f"stage1 {k}": v for k, v in stage1.items()}
    q.update({f"P({k})": v for k, (_, v) in cells.items()})
    q["norm"] = norm_squared(fT)
    report.quadrature.update(q)
    marg = max(abs(cells["L&cL"][1] + cells["L&cR"][1] - stage1["P(Y in L)"]),
               abs(cells["R&cL"][1] + cells["R&cR"][1] - stage1["P(Y in R)"]))
    report.add_check("marginal_consistency", marg <= 1e-6, marg, 1e-6,
                     "joint cells marginalize to the stage-1 pointer probabilities")

    t0 = time.perf_counter()
    x0 = sample_initial(f0, ens, STREAM_INITIAL)
    seeds = ens.seeds()
    e = integrate_ensemble(hist, x0, seeds=seeds, threads=threads, workers=workers)
    report.timing["trajectories_s"] = time.perf_counter() - t0
    report.ensemble = e
    rates = {k: report.add_rate(f"P({k})", e.final, box) for k, (box, _) in cells.items()}

    off_q = cells["L&cR"][1] + cells["R&cL"][1]
    off_count = rates["L&cR"].count + rates["R&cL"].count
    report.quadrature["P(off-diagonal)"] = off_q
    off_rate = report.add_rate("P(off-diagonal)", e.final, _OffDiagonal(s))
    if s.enforce_localization:
        report.add_check("offdiag_quadrature", cells["L&cR"][1] < 1e-6 and cells["R&cL"][1] < 1e-6,
                         [cells["L&cR"][1], cells["R&cL"][1]], 1e-6,
                         "quadrature P(Y in L, Z in cR) and P(Y in R, Z in cL) below 1e-6")
        report.add_check("offdiag_empirical_zero", off_count == 0, off_count, 0,
                         "no trajectory lands in an off-diagonal cell")
        agree = 1.0 - off_rate.rate
        report.add_check("idle_wheel", agree >= 1 - 1e-3, agree, 1 - 1e-3,
                         "camera region equals the pointer region of the same trajectory")
    else:
        report.add_check("offdiag_tail_consistent", off_rate.contains(off_q), off_rate.rate,
                         [off_rate.lo, off_rate.hi, off_q],
                         "empirical off-diagonal rate's Wilson interval contains the quadrature tail")
    if s.c2 == 0:
        v = cells["L&cL"][1]
        report.add_check("c1_one", abs(v - 1.0) <= 1e-5, v, 1e-5, "P(Y in L, Z in cL) = 1 when c1 = 1")
    report.diagnostics["terms"] = list(fT.labels)
    return MeasurementRun(report, hist, e, (), s, seeds)


class _OffDiagonal:
    """Event: pointer and camera disagree about the outcome."""

    label = "pointer/camera disagreement"

    def __init__(self, s: MeasurementScenario):
        self.yb, self.zb = s.pointer_boundary, s.camera_boundary

    def __call__(self, pts):
        return (pts[:, 1] < self.yb) != (pts[:, 2] < self.zb)


# -- conditional guidance ----------------------------------------------------------

def conditional_z_velocity(f, y: float, z: float, x: float | None = None, masses=None) -> float:
    """z-component of the guiding velocity at (x, y, z) or (y, z)."""
    point = [y, z] if x is None else [x, y, z]
    if len(point) != f.spec.dims:
        raise ConfigurationError(f"field has {f.spec.dims} axes, got a {len(point)}-coordinate point")
    return float(np.atleast_1d(velocity_field(f, np.array(point), masses))[-1])


def mid_stage2_field(s: MeasurementScenario, kick: float = 2.0, t_mid: float = 0.25,
                     weights: tuple[complex, complex] | None = None,
                     separated: bool = True, workers: int | None = None) -> GridField:
    """Pointer-camera field a short time into the camera stage.

    The pointer holds c1 Phi_L + c2 Phi_R; the camera coupling gives each
    pointer packet a momentum -kick or +kick on z, after which the camera
    packets Psi_< and Psi_> drift apart for ``t_mid``.  With
    ``separated=False`` both pointer packets sit at the same place.
    """
    if s.camera_axis is None:
        raise ConfigurationError("scenario has no camera axis")
    c1, c2 = (s.c1, s.c2) if weights is None else weights
    yax, zax = s.pointer_axis, s.camera_axis
    d = s.pointer_shift if separated else 0.0
    phi_l = s.pointer.amplitudes(yax, s.pointer_boundary - d)
    phi_r = s.pointer.amplitudes(yax, s.pointer_boundary + d)
    spec = GridSpec((yax, zax))
    psi0 = s.camera.amplitudes(zax, s.camera_boundary)
    tau = s.coupling_duration
    if separated:
        f0 = GridField(spec, np.multiply.outer(c1 * phi_l + c2 * phi_r, psi0))
        c = CouplingSchedule(0, 1, kick / tau, (0.0, tau), regions=(((yax.lo, s.pointer_boundary), -1.0),
                                                                  ((s.pointer_boundary, yax.hi), 1.0)),
                             conjugate="position", label="camera-kick")
        h = HamiltonianSpec(masses=s.masses[1:3], couplings=(c,))
        return evolve(f0, h, tau + t_mid, workers=workers).final
    # Same pointer packet, camera packets kicked both ways.
    z = zax.coords
    cam = c1 * psi0 * np.exp(-1j * kick * z) + c2 * psi0 * np.exp(1j * kick * z)
    f0 = GridField(spec, np.multiply.outer(phi_l, cam))
    h = HamiltonianSpec(masses=s.masses[1:3])
    return evolve(f0, h, t_mid, workers=workers).final.replace(time=tau + t_mid)


def conditional_guidance_probe(s: MeasurementScenario, kick: float = 2.0, t_mid: float = 0.25,
                               probes: int = 10, workers: int | None = None) -> RunReport:
    """Compare the full-field z-velocity with the single-packet velocity.

    Probes use Y within one width of a pointer packet centre (at least three
    widths from the boundary) and Z within 1.5 camera widths of the matching
    camera packet; the reference is the closed-form velocity of the kicked
    free Gaussian.
    """
    report = RunReport(scenario={"kind": "conditional-guidance", "kick": kick, "t_mid": t_mid, **s.to_dict()})
    f = mid_stage2_field(s, kick, t_mid, workers=workers)
    w, d, yb = s.pointer.width, s.pointer_shift, s.pointer_boundary
    if d - w < 3 * w:
        raise MeasurementDeviceNoGood("pointer packets are not deep inside their regions")
    sig0 = s.camera.density_std
    mz = s.masses[2]
    sig_t = analytic.gaussian_width(t_mid, sig0, mz)
    for side, sign in (("L", -1.0), ("R", 1.0)):
        ys = yb + sign * d + np.linspace(-w, w, probes)
        zc = s.camera_boundary + sign * kick * t_mid / mz
        zs = zc + np.linspace(-1.5, 1.5, probes) * sig_t
        pts = np.array([[yy, zz] for yy in ys for zz in zs])
        v = np.atleast_2d(velocity_field(f, pts, s.masses[1:3]))[:, 1]
        ref = analytic.free_gaussian_velocity(pts[:, 1], t_mid, sig0, s.camera_boundary, sign * kick, mz)
        rel = np.abs(v - ref) / np.abs(ref)
        report.diagnostics[f"probes_{side}"] = len(pts)
        report.add_check(f"conditional_velocity_{side}", float(rel.max()) < 1e-4, float(rel.max()), 1e-4,
                         f"z-velocity with Y deep in {side} matches the single camera packet")
    return report


# -- repeated measurement -------------------------------------------------------------

def _pointer_cdf(s: MeasurementScenario):
    ax = s.pointer_axis
    mass = np.abs(s.pointer.amplitudes(ax, 0.0)) ** 2 * ax.spacing
    cdf = np.concatenate([[0.0], np.cumsum(mass)])
    cdf /= cdf[-1]
    edges = ax.lo + np.arange(ax.points + 1) * ax.spacing
    return lambda v: np.interp(v, edges, cdf)


def repeat_measurement(s: MeasurementScenario, first: MeasurementRun, ens: EnsembleSpec | None = None) -> RunReport:
    """Apply the stage-1 coupling again with a fresh pointer and compare outcomes.

    The fresh pointer starts from |Phi0|^2 using the pointer random stream of
    each trajectory's seed; the impulsive coupling moves it by the shift of
    the trajectory's own x.  The quadrature disagreement is
    int |psi_T(x, y)|^2 P(Y'0 + s(x) lands on the other side from y).
    """
    e = first.ensemble
    fT = first.history.final
    seeds = first.seeds if ens is None else ens.seeds()
    if seeds is None or len(seeds) != len(e):
        raise ConfigurationError("repeated measurement needs one seed per trajectory")
    report = RunReport(scenario={"kind": "repeat-measurement", **s.to_dict()})
    c = s.stage1_coupling()
    yb = s.pointer_boundary
    final = e.final
    first_left = final[:, 1] < yb
    ax = s.pointer_axis
    y0 = inverse_cdf_sample(np.abs(s.pointer.amplitudes(ax, 0.0)) ** 2, ax, uniforms(seeds, 0, STREAM_POINTER))
    second = y0 + c.shift(final[:, 0])
    second_left = second < yb
    agree = first_left == second_left
    report.add_rate("agreement", agree[:, None].astype(float), lambda p: p[:, 0] > 0.5)

    F = _pointer_cdf(s)
    sx = c.shift(s.system_axis.coords)
    p_left = F(yb - sx)  # P(second outcome L | x)
    dens = fT.density * fT.spec.cell_volume
    left_rows = s.pointer_axis.coords < yb
    dis = np.sum(dens[:, left_rows] * (1 - p_left)[:, None]) + np.sum(dens[:, ~left_rows] * p_left[:, None])
    dis /= np.sum(dens)
    report.quadrature["P(disagree)"] = float(dis)
    rate = float(np.mean(agree))
    pred = 1.0 - dis
    sig = binomial_sigma(pred, len(agree))
    report.add_check("agreement_matches_quadrature", abs(rate - pred) <= 3 * sig + 1e-12, rate, [pred, 3 * sig],
                     "agreement fraction within 3 sigma of 1 - quadrature disagreement")
    if s.enforce_localization:
        report.add_check("agreement_one", rate == 1.0, rate, 1.0, "every trajectory repeats its outcome")
        report.add_check("disagreement_quadrature", dis < 1e-6, float(dis), 1e-6,
                         "quadrature disagreement probability")

    # Collapse: conditional x wave function at each trajectory's Y.
    refs = []
    for i in range(2):
        phi = field_1d(s.system_axis, s.phi(i))
        hx = HamiltonianSpec(masses=(s.masses[0],))
        refs.append(evolve(phi, hx, s.settle_time).final.amplitudes if s.settle_time > 0 else phi.amplitudes)
    slices = conditional_slices(fT, 1, final[:, 1])
    norms = np.sqrt(np.sum(np.abs(slices) ** 2, axis=1) * s.system_axis.spacing)
    ok = norms > 0
    fids = np.zeros(len(final))
    for i, ref in enumerate(refs):
        rows = ok & (first_left if i == 0 else ~first_left)
        ov = np.abs(slices[rows] @ np.conj(ref)) * s.system_axis.spacing
        fids[rows] = ov / norms[rows]
    min_fid = float(fids.min()) if len(fids) else 1.0
    report.diagnostics["fidelity_min"] = min_fid
    if s.enforce_localization:
        report.add_check("collapse_fidelity", min_fid >= 1 - 1e-4, min_fid, 1 - 1e-4,
                         "conditional x wave function matches phi1 (Y in L) or phi2 (Y in R)")
    report.diagnostics["trajectories"] = len(final)
    return report


def scenario_variant(s: MeasurementScenario, **changes) -> MeasurementScenario:
    return replace(s, **changes)
