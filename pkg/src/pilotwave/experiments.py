"""Preset experiments.

Each preset has default parameters, a claim, the names of the checks that
decide it, and a runner that turns (params, ensemble) into a RunReport.
"""
from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from . import analytic
from .equilibrium import EnsembleSpec, check_equivariance, compare_samples, sample_initial
from .errors import PresetViolation
from .grid import Axis, GridField, GridSpec, SeparableField, field_1d, gaussian, marginal_density
from .guidance import axis_crossings, check_no_crossing, integrate_ensemble, velocity_field
from .measurement import (MeasurementScenario, ReadyState, conditional_guidance_probe, conditional_wavefunction,
                          repeat_measurement, run_stage1, run_stage2_camera)
from .propagator import (CouplingSchedule, CrankNicolson, HamiltonianSpec, SplitOperator, evolve)
from .report import Histogram, RunReport


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    claim: str
    predicates: tuple[str, ...]
    defaults: dict = field(compare=False)
    runner: Callable = field(compare=False, repr=False)
    trajectories: int = 10_000

    def run(self, params: dict, ens: EnsembleSpec, threads: int = 1, workers: int | None = None) -> RunReport:
        t0 = time.perf_counter()
        report = self.runner(params, ens, threads, workers)
        report.timing["total_s"] = time.perf_counter() - t0
        report.scenario = {"preset": self.name, "params": params, "ensemble": {"n": ens.n, "seed": ens.seed},
                           "resolved": report.scenario}
        names = [c.name for c in report.checks]
        for p in self.predicates:
            if names.count(p) != 1:
                report.add_check(f"missing:{p}", False, names.count(p), 1,
                                 "acceptance predicate must have exactly one verdict")
        return report


# -- shared helpers -------------------------------------------------------------

def _axis(d: dict, name: str) -> Axis:
    return Axis(float(d["min"]), float(d["max"]), int(d["points"]), name)


def _coef(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


def measurement_scenario(p: dict) -> MeasurementScenario:
    c1 = _coef(p["c1"])
    c2 = _coef(p["c2"]) if p.get("c2") is not None else complex(math.sqrt(max(0.0, 1.0 - abs(c1) ** 2)))
    return MeasurementScenario(
        c1=c1, c2=c2,
        system_axis=_axis(p["system_grid"], "x"), pointer_axis=_axis(p["pointer_grid"], "y"),
        camera_axis=None if p.get("camera_grid") is None else _axis(p["camera_grid"], "z"),
        system_centers=tuple(p["system_centers"]), system_width=p["system_width"],
        pointer=ReadyState(p["pointer_shape"], p["pointer_width"], p["pointer_cutoff"]),
        camera=ReadyState(p["camera_shape"], p["camera_width"], p["camera_cutoff"]),
        pointer_displacement=p.get("pointer_displacement"), camera_displacement=p.get("camera_displacement"),
        coupling_duration=p["coupling_duration"], settle_time=p["settle_time"],
        camera_settle_time=p["camera_settle_time"], separation_guard=p["separation_guard"],
        localization_tolerance=p["localization_tolerance"], enforce_localization=p["enforce_localization"],
        snapshot_interval=p["snapshot_interval"])


def _equivariance(report: RunReport, ens, hist, times, symmetric_about=None, name: str = "equivariance"):
    reps = [check_equivariance(ens, hist, t, symmetric_about=symmetric_about) for t in times]
    base = max(reps[0].tv, reps[0].sampling_tv)
    tvs = [r.tv for r in reps]
    report.diagnostics[name] = {"times": list(times), "tv": tvs, "baseline": base,
                                "chi2_p": [r.pvalue for r in reps], "bins": len(reps[0].counts)}
    report.add_check(name, max(tvs) < 3 * base, max(tvs), 3 * base,
                     "TV(empirical, |psi_t|^2) below three times the t=0 sampling baseline")
    return reps


def _ensemble_1d(f0: GridField, h: HamiltonianSpec, duration: float, interval: float, ens: EnsembleSpec,
                 threads: int, workers, tolerance: float | None = None):
    t0 = time.perf_counter()
    hist = evolve(f0, h, duration, snapshot_interval=interval, workers=workers)
    t1 = time.perf_counter()
    x0 = sample_initial(f0, ens)
    e = integrate_ensemble(hist, x0, seeds=ens.seeds(), threads=threads, tolerance=tolerance, workers=workers)
    return hist, e, {"evolve_s": t1 - t0, "trajectories_s": time.perf_counter() - t1}


def _sample_times(hist, count: int = 5) -> list[float]:
    """``count`` snapshot times spread evenly over the history, ends included."""
    idx = np.round(np.linspace(0, len(hist.times) - 1, count)).astype(int)
    return [float(hist.times[i]) for i in idx]


def _histogram(rep) -> Histogram:
    return Histogram(rep.edges, rep.counts, rep.expected)


# -- measurement presets ----------------------------------------------------------

MEASUREMENT_DEFAULTS = {
    "c1": 1 / math.sqrt(2), "c2": None,
    "system_grid": {"min": -25.6, "max": 25.6, "points": 512},
    "pointer_grid": {"min": -12.8, "max": 12.8, "points": 512},
    "camera_grid": None,
    "system_centers": [-4.0, 4.0], "system_width": 0.5,
    "pointer_shape": "gaussian", "pointer_width": 0.5, "pointer_cutoff": 20.0, "pointer_displacement": None,
    "camera_shape": "gaussian", "camera_width": 0.5, "camera_cutoff": 20.0, "camera_displacement": None,
    "coupling_duration": 1.0, "settle_time": 0.1, "camera_settle_time": 0.0,
    "separation_guard": 6.0, "localization_tolerance": 1e-6, "enforce_localization": True,
    "snapshot_interval": 0.01,
}


def _run_pointer_readout(p, ens, threads, workers):
    s = measurement_scenario(p)
    run = run_stage1(s, ens, threads, workers)
    if p.get("repeat"):
        rep = repeat_measurement(s, run)
        for c in rep.checks:
            run.report.add_check(f"repeat:{c.name}", c.passed, c.value, c.threshold, c.detail)
        run.report.quadrature.update({f"repeat {k}": v for k, v in rep.quadrature.items()})
        run.report.empirical.update({f"repeat {k}": v for k, v in rep.empirical.items()})
    return run.report


def _run_camera(p, ens, threads, workers):
    return run_stage2_camera(measurement_scenario(p), ens, threads, workers).report


def _run_conditional_guidance(p, ens, threads, workers):
    return conditional_guidance_probe(measurement_scenario(p), p["kick"], p["t_mid"], p["probes"], workers)


def _run_repeat(p, ens, threads, workers):
    s = measurement_scenario(p)
    first = run_stage1(s, ens, threads, workers)
    rep = repeat_measurement(s, first)
    rep.ensemble = first.ensemble
    rep.histograms.update(first.report.histograms)
    rep.quadrature.update({f"stage1 {k}": v for k, v in first.report.quadrature.items()})
    rep.timing.update(first.report.timing)
    return rep


# -- free Gaussian ------------------------------------------------------------------

FREE_GAUSSIAN_DEFAULTS = {
    "grid": {"min": -40.96, "max": 40.96, "points": 2048},
    "sigma0": 1.0, "x0": 0.0, "k0": 0.0, "mass": 1.0,
    "duration": 4.0, "snapshot_interval": 0.02,
}


def _run_free_gaussian(p, ens, threads, workers):
    ax = _axis(p["grid"], "x")
    s0, x0, k0, m = p["sigma0"], p["x0"], p["k0"], p["mass"]
    f0 = field_1d(ax, gaussian(ax, x0, s0, k0))
    h = HamiltonianSpec(masses=(m,))
    hist, e, timing = _ensemble_1d(f0, h, p["duration"], p["snapshot_interval"], ens, threads, workers)
    report = RunReport(scenario={"kind": "free-gaussian"}, ensemble=e, timing=timing)
    x = ax.coords
    width_err = 0.0
    for t, f in zip(hist.times, hist.fields):
        d = f.density
        mu = np.sum(x * d) / np.sum(d)
        sd = math.sqrt(np.sum((x - mu) ** 2 * d) / np.sum(d))
        width_err = max(width_err, abs(sd / analytic.gaussian_width(t, s0, m) - 1))
    report.add_check("width_law", width_err < 1e-3, width_err, 1e-3, "numerical |psi_t|^2 width vs analytic")
    xi = e.initial[:, 0]
    ref = analytic.free_gaussian_trajectory(xi[:, None], hist.times[None, :], s0, x0, k0, m)
    keep = np.abs(xi - x0) > 0.05 * s0
    rel = np.abs(e.positions[keep, :, 0] - ref[keep]) / np.abs(ref[keep] - x0 - k0 * hist.times / m)
    report.add_check("trajectory_scaling", float(rel.max()) < 5e-3, float(rel.max()), 5e-3,
                     "x(t) - drift = (x0 - drift) sigma(t)/sigma0")
    reps = _equivariance(report, e, hist, _sample_times(hist))
    cr = check_no_crossing(e, 0)
    report.add_check("no_crossing", cr.passed, cr.violations, 0, "initial ordering preserved at every sample")
    report.histograms["final"] = _histogram(reps[-1])
    report.fields["final"] = hist.final
    return report


# -- double slit ----------------------------------------------------------------------

DOUBLE_SLIT_DEFAULTS = {
    "grid": {"min": -102.4, "max": 102.4, "points": 2048},
    "slit_centers": [-4.0, 4.0], "slit_widths": [0.5, 0.5], "weights": [1.0, 1.0],
    "phases": [0.0, 0.0], "momenta": [0.0, 0.0], "mass": 1.0,
    "screen_time": 8.0, "snapshot_interval": 0.02,
}


def _check_symmetric(p):
    (a, b), (wa, wb) = p["slit_centers"], p["slit_widths"]
    (ca, cb), (pa, pb), (ka, kb) = p["weights"], p["phases"], p["momenta"]
    problems = []
    if not math.isclose(a, -b, abs_tol=1e-12) or a >= b:
        problems.append(f"slit centres {a}, {b} are not mirror images about 0")
    if not math.isclose(wa, wb, rel_tol=1e-12):
        problems.append(f"slit widths differ ({wa} vs {wb})")
    if not math.isclose(abs(ca), abs(cb), rel_tol=1e-12) or not math.isclose(pa, pb, abs_tol=1e-12):
        problems.append("slit amplitudes differ in weight or phase")
    if not math.isclose(ka, -kb, abs_tol=1e-12):
        problems.append(f"transverse momenta {ka}, {kb} are not opposite")
    if problems:
        raise PresetViolation("double-slit preset needs a mirror-symmetric setup: " + "; ".join(problems))


def _dips(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Depth of each bin below the lower of the highest bins on either side."""
    c = np.asarray(counts, float)
    left = np.maximum.accumulate(c)
    right = np.maximum.accumulate(c[::-1])[::-1]
    shoulders = np.minimum(np.concatenate([[0], left[:-1]]), np.concatenate([right[1:], [0]]))
    return np.maximum(shoulders - c, 0.0), np.sqrt(np.maximum(shoulders, 1.0))


def _run_slits(p, ens, threads, workers, single: bool):
    ax = _axis(p["grid"], "x")
    if single:
        amps = gaussian(ax, 0.0, p["slit_widths"][0])
    else:
        _check_symmetric(p)
        amps = sum(w * np.exp(1j * ph) * gaussian(ax, c, s, k) for c, s, w, ph, k in
                   zip(p["slit_centers"], p["slit_widths"], p["weights"], p["phases"], p["momenta"]))
    f0 = field_1d(ax, amps).normalized()
    T = p["screen_time"]
    hist, e, timing = _ensemble_1d(f0, HamiltonianSpec(masses=(p["mass"],)), T, p["snapshot_interval"],
                                   ens, threads, workers)
    report = RunReport(scenario={"kind": "single-slit" if single else "double-slit"}, ensemble=e, timing=timing)
    reps = _equivariance(report, e, hist, _sample_times(hist), symmetric_about=0.0)
    screen = reps[-1]
    report.histograms["screen"] = _histogram(screen)
    report.fields["final"] = hist.final
    report.add_check("screen_chi2", screen.pvalue > 0.01, screen.pvalue, 0.01,
                     "screen histogram vs |psi_T|^2 chi-square p-value")
    dips, noise = _dips(screen.counts)
    edips, _ = _dips(screen.expected * screen.n)
    report.diagnostics["deepest_dip_sigma"] = float(np.max(dips / noise))
    if single:
        report.add_check("unimodal", bool(np.all(dips <= 5 * noise)), float(np.max(dips / noise)), 5.0,
                         "no histogram dip deeper than 5 sigma of bin noise")
        return report
    x0, xT = e.initial[:, 0], e.final[:, 0]
    crossed = axis_crossings(e, 0, 0.0)
    pairs = {f"{a}->{b}": int(np.sum(((x0 < 0) == (a == "L")) & ((xT < 0) == (b == "L"))))
             for a in "LR" for b in "LR"}
    report.diagnostics["side_pairs"] = pairs
    report.add_check("no_axis_crossing", int(crossed.sum()) == 0, int(crossed.sum()), 0,
                     "trajectories never change side of the symmetry axis")
    # Central interference minima, located on the quadrature histogram.
    centre = len(screen.counts) // 2
    mins = [i for i in range(1, len(edips) - 1) if edips[i] > 0 and edips[i] >= edips[i - 1]
            and edips[i] >= edips[i + 1]]
    nearest = sorted(mins, key=lambda i: abs(i + 0.5 - centre))[:2]
    depth = min(float(dips[i] / noise[i]) for i in nearest) if nearest else 0.0
    report.add_check("minima_depth", depth >= 10.0, depth, 10.0,
                     "central interference minima at least 10 bin-noise sigma deep")
    c = screen.counts.astype(float)
    half = len(c) // 2
    a_, b_ = c[:half], c[::-1][:half]
    m = (a_ + b_) > 0
    stat = float(np.sum((a_[m] - b_[m]) ** 2 / (a_[m] + b_[m])))
    pval = float(stats.chi2.sf(stat, int(m.sum())))
    report.add_check("mirror_symmetry", pval > 0.01, pval, 0.01,
                     "screen histogram counts vs their mirror image (chi-square)")
    return report


def _run_double_slit(p, ens, threads, workers):
    return _run_slits(p, ens, threads, workers, single=False)


def _run_single_slit(p, ens, threads, workers):
    return _run_slits(p, ens, threads, workers, single=True)


# -- packet exchange ---------------------------------------------------------------------

PACKET_EXCHANGE_DEFAULTS = {
    "grid": {"min": -51.2, "max": 51.2, "points": 2048},
    "separation": 8.0, "sigma": 1.0, "momentum": 4.0, "mass": 1.0,
    "duration": 4.5, "snapshot_interval": 0.01, "step_tolerance": 1e-6, "overlap_limit": 1e-6,
}

PACKET_OFFSET_DEFAULTS = {
    "grid": {"min": -32.0, "max": 32.0, "points": 256},
    "transverse_grid": {"min": -25.6, "max": 25.6, "points": 256},
    "separation": 8.0, "sigma": 1.0, "momentum": 4.0, "mass": 1.0,
    "offset": 16.0, "transverse_sigma": 2.0,
    "duration": 4.5, "snapshot_interval": 0.02, "overlap_limit": 1e-6,
}


def _envelope_overlap(a: np.ndarray, b: np.ndarray, cell: float) -> float:
    return float(np.sum(np.abs(a) * np.abs(b)) * cell)


def _exchange_stats(report: RunReport, e, p):
    """Attribution: a particle starting left is naively carried by the right-moving packet."""
    x0, xT = e.initial[:, 0], e.final[:, 0]
    left = x0 < 0
    naive_right = left  # left packet moves right
    mismatch = float(np.mean((xT >= 0) != naive_right))
    dt = e.times[-1] - e.times[-2]
    v = (e.positions[:, -1, 0] - e.positions[:, -2, 0]) / dt
    packet_k = np.where(left, 1.0, -1.0)
    reversed_ = float(np.mean(np.sign(v) != packet_k))
    report.diagnostics["velocity_reversal_fraction"] = reversed_
    return mismatch, reversed_


def _run_packet_exchange(p, ens, threads, workers):
    ax = _axis(p["grid"], "x")
    a, s, k = p["separation"], p["sigma"], p["momentum"]
    left, right = gaussian(ax, -a, s, k), gaussian(ax, a, s, -k)
    ov = _envelope_overlap(left, right, ax.spacing)
    if ov > p["overlap_limit"]:
        raise PresetViolation(f"packets overlap by {ov:.3g} at t=0 (limit {p['overlap_limit']:g})")
    f0 = field_1d(ax, left + right).normalized()
    hist, e, timing = _ensemble_1d(f0, HamiltonianSpec(masses=(p["mass"],)), p["duration"],
                                   p["snapshot_interval"], ens, threads, workers, p["step_tolerance"])
    report = RunReport(scenario={"kind": "packet-exchange"}, ensemble=e, timing=timing)
    report.diagnostics["initial_overlap"] = ov
    crossed = int(axis_crossings(e, 0, 0.0).sum())
    report.add_check("no_plane_crossing", crossed == 0, crossed, 0, "no trajectory crosses the symmetry plane")
    cr = check_no_crossing(e, 0)
    report.add_check("no_crossing", cr.passed, cr.violations, 0, "initial ordering preserved at every sample")
    mismatch, rev = _exchange_stats(report, e, p)
    report.add_check("attribution_mismatch", mismatch == 1.0, mismatch, 1.0,
                     "every trajectory ends on the opposite side from its packet's naive destination")
    report.add_check("velocity_reversal", rev == 1.0, rev, 1.0,
                     "final velocity opposes the initial momentum of the trajectory's packet")
    reps = _equivariance(report, e, hist, _sample_times(hist), symmetric_about=0.0)
    report.histograms["final"] = _histogram(reps[-1])
    report.fields["final"] = hist.final
    return report


def _run_packet_offset(p, ens, threads, workers):
    ax, ay = _axis(p["grid"], "x"), _axis(p["transverse_grid"], "y")
    a, s, k, off, sy = p["separation"], p["sigma"], p["momentum"], p["offset"], p["transverse_sigma"]
    spec = GridSpec((ax, ay))
    lx, rx = gaussian(ax, -a, s, k), gaussian(ax, a, s, -k)
    ly, ry = gaussian(ay, -off / 2, sy), gaussian(ay, off / 2, sy)
    ov = _envelope_overlap(lx, rx, ax.spacing) * _envelope_overlap(ly, ry, ay.spacing)
    if ov > p["overlap_limit"]:
        raise PresetViolation(f"packets overlap by {ov:.3g} at t=0 (limit {p['overlap_limit']:g})")
    f0 = SeparableField(spec, [(1.0, (lx, ly)), (1.0, (rx, ry))])
    f0 = f0.to_dense().normalized()
    hist = evolve(f0, HamiltonianSpec(masses=(p["mass"], p["mass"])), p["duration"],
                  snapshot_interval=p["snapshot_interval"], workers=workers)
    x0 = sample_initial(f0, ens)
    e = integrate_ensemble(hist, x0, seeds=ens.seeds(), threads=threads, workers=workers)
    report = RunReport(scenario={"kind": "packet-exchange-offset"}, ensemble=e)
    report.diagnostics["initial_overlap"] = ov
    # Naive attribution: the lower (y < 0) packet starts left and moves right.  A trajectory
    # follows its packet if it stays on its packet's transverse side and moves the packet's way;
    # the final side of x = 0 is not used since trailing-tail trajectories of a spreading packet
    # can finish short of the plane.
    from_left = e.initial[:, 1] < 0
    same_packet = (e.final[:, 1] < 0) == from_left
    with_packet = (e.final[:, 0] > e.initial[:, 0]) == from_left
    mismatch = float(np.mean(~(same_packet & with_packet)))
    report.diagnostics["ended_past_plane"] = float(np.mean((e.final[:, 0] >= 0) == from_left))
    report.add_check("attribution_mismatch_zero", mismatch == 0.0, mismatch, 0.0,
                     "with a transverse offset every trajectory follows its packet")
    report.fields["final"] = hist.final
    return report


# -- absolute uncertainty ------------------------------------------------------------------

ABSOLUTE_DEFAULTS = {
    "grid": {"min": -10.24, "max": 10.24, "points": 512},
    "record_grid": {"min": -10.24, "max": 10.24, "points": 512},
    "prior_sigma": 1.5, "pointer_width": 0.4, "coupling": 1.0,
    "x_bins": 8, "samples_per_record_bin": 4000, "min_samples": 300, "tv_limit": 0.05,
    "control": True, "width_halving": True,
}


def _measure_position(ax, ay, sigma, w, g):
    spec = GridSpec((ax, ay))
    prior, pointer = gaussian(ax, 0.0, sigma), gaussian(ay, 0.0, w / math.sqrt(2))
    c = CouplingSchedule(0, 1, g, (0.0, 1.0), form="linear", label="record")
    h = HamiltonianSpec(masses=(1.0, 1.0), couplings=(c,))
    hist = evolve(GridField(spec, np.multiply.outer(prior, pointer)), h, 1.0)
    return hist, SeparableField.product(spec, (prior, pointer))


def _record_edges(marg: np.ndarray, ay: Axis, n_bins: int) -> np.ndarray:
    """Equiprobable record bins under ``marg``, snapped to cell edges."""
    cdf = np.concatenate([[0.0], np.cumsum(marg)])
    cdf /= cdf[-1]
    cuts = np.searchsorted(cdf, np.linspace(0, 1, n_bins + 1)[1:-1])
    cuts = np.unique(np.clip(cuts, 1, ay.points - 1))
    return np.concatenate([[ay.lo], ay.lo + cuts * ay.spacing, [ay.hi]])


def _conditional_checks(report, e, fT, ax, ay, p, prefix: str, prior: np.ndarray | None = None):
    n_rec = max(1, len(e) // p["samples_per_record_bin"])
    redges = _record_edges(marginal_density(fT, 1), ay, n_rec)
    X, Y = e.final[:, 0], e.final[:, 1]
    dens = fT.density
    ycells = np.searchsorted(redges, ay.coords, side="right") - 1
    tvs, ratios, chis, dofs, sizes = [], [], 0.0, 0, []
    for b in range(len(redges) - 1):
        sel = (Y >= redges[b]) & (Y < redges[b + 1])
        n = int(sel.sum())
        if n < p["min_samples"]:
            continue
        cond = dens[:, ycells == b].sum(axis=1) if prior is None else prior
        cdf = np.concatenate([[0.0], np.cumsum(cond)])
        cdf /= cdf[-1]
        cell_edges = ax.lo + np.arange(ax.points + 1) * ax.spacing
        xedges = np.interp(np.linspace(0, 1, p["x_bins"] + 1), cdf, cell_edges)
        xedges[0], xedges[-1] = ax.lo, ax.hi
        rep = compare_samples(X[sel], cond, ax, edges=xedges)
        tvs.append(rep.tv)
        chis += rep.chi2
        dofs += rep.dof
        sizes.append(n)
        mu = np.sum(ax.coords * cond) / np.sum(cond)
        sd = math.sqrt(np.sum((ax.coords - mu) ** 2 * cond) / np.sum(cond))
        ratios.append(float(np.std(X[sel]) / sd))
    report.diagnostics[f"{prefix}record_bins"] = {"used": len(tvs), "samples": sizes, "tv": tvs,
                                                  "std_ratio": ratios}
    worst = max(tvs) if tvs else math.inf
    report.add_check(f"{prefix}conditional_tv", worst < p["tv_limit"] and len(tvs) > 0, worst, p["tv_limit"],
                     "per record bin TV(X | record, |phi_cond|^2)")
    return worst, ratios, chis, dofs


def _run_absolute_uncertainty(p, ens, threads, workers):
    ax, ay = _axis(p["grid"], "x"), _axis(p["record_grid"], "y")
    sigma, w, g = p["prior_sigma"], p["pointer_width"], p["coupling"]
    hist, f0 = _measure_position(ax, ay, sigma, w, g)
    x0 = sample_initial(f0, ens)
    e = integrate_ensemble(hist, x0, seeds=ens.seeds(), threads=threads, workers=workers)
    report = RunReport(scenario={"kind": "absolute-uncertainty"}, ensemble=e)
    fT = hist.final
    _, ratios, chis, dofs = _conditional_checks(report, e, fT, ax, ay, p, "")
    spread = max(abs(r - 1) for r in ratios) if ratios else math.inf
    report.add_check("std_ratio", spread < 0.1, spread, 0.1,
                     "empirical std of X per record bin matches the |phi_cond|^2 std within 10%")
    pglob = float(stats.chi2.sf(chis, dofs)) if dofs else 0.0
    report.add_check("no_sub_conditional_information", pglob > 1e-3, pglob, 1e-3,
                     "pooled chi-square of X given the record against |phi_cond|^2")
    report.fields["final"] = fT
    if p["control"]:
        hist0, f00 = _measure_position(ax, ay, sigma, w, 0.0)
        e0 = integrate_ensemble(hist0, sample_initial(f00, ens), seeds=ens.seeds(), threads=threads,
                                workers=workers)
        prior = np.abs(gaussian(ax, 0.0, sigma)) ** 2
        _conditional_checks(report, e0, hist0.final, ax, ay, p, "control_", prior=prior)
    if p["width_halving"]:
        widths = []
        for ww in (w, w / 2):
            fh = _measure_position(ax, ay, sigma, ww, g)[0].final
            cw = conditional_wavefunction(fh, {"y": 0.0}).field
            d = cw.density
            x = ax.coords
            widths.append(math.sqrt(np.sum(x**2 * d) / np.sum(d) - (np.sum(x * d) / np.sum(d)) ** 2))
        ratio = widths[1] / widths[0]
        exact = [1 / math.sqrt(1 / sigma**2 + 2 * g**2 / v**2) for v in (w, w / 2)] if g else [sigma, sigma]
        report.diagnostics["conditional_widths"] = widths
        report.diagnostics["conditional_widths_exact"] = exact
        report.add_check("width_halving", abs(ratio - 0.5) <= 0.05, ratio, [0.45, 0.55],
                         "halving the pointer width halves the post-measurement |phi_cond|^2 width (+-10%)")
    return report


# -- numerics oracles -----------------------------------------------------------------------

NUMERICS_DEFAULTS = {
    "grid": {"min": -40.96, "max": 40.96, "points": 2048},
    "sigma0": 1.0, "duration": 4.0, "snapshot_interval": 0.02,
    "steps": 1000, "oscillator_grid": {"min": -10.24, "max": 10.24, "points": 128}, "omega": 1.0,
}


def _run_numerics(p, ens, threads, workers):
    report = RunReport(scenario={"kind": "numerics"})
    # Free Gaussian: width law and trajectory scaling.
    fg = _run_free_gaussian({**FREE_GAUSSIAN_DEFAULTS, "grid": p["grid"], "sigma0": p["sigma0"],
                             "duration": p["duration"], "snapshot_interval": p["snapshot_interval"]},
                            ens, threads, workers)
    for name in ("width_law", "trajectory_scaling"):
        c = fg.check(name)
        report.add_check(name, c.passed, c.value, c.threshold, c.detail)
    # Plane wave: v = k / m exactly.
    ax = _axis(p["grid"], "x")
    k = 2 * math.pi * 37 / ax.length
    pw = field_1d(ax, np.exp(1j * k * ax.coords) / math.sqrt(ax.length))
    pts = ax.lo + ax.length * (np.arange(1, 50) / 50.0)
    v = velocity_field(pw, pts[:, None], masses=1.0)
    err = float(np.max(np.abs(np.atleast_1d(v).ravel() - k)))
    report.add_check("plane_wave_velocity", err < 1e-8, err, 1e-8, "guiding velocity of exp(ikx) equals k/m")
    # Harmonic oscillator: unitarity, split vs Crank-Nicolson, dt halving.
    ox = _axis(p["oscillator_grid"], "x")
    om = p["omega"]
    h = HamiltonianSpec(potential="harmonic", omega=(om,), center=(0.0,))
    spec = GridSpec((ox,))
    psi0 = analytic.coherent_state(ox.coords, 0.0, om, 1.0, 0.5)
    dt = 1e-3
    steps = int(p["steps"])
    so = SplitOperator(spec, h, dt)
    a = psi0.copy()
    n0 = np.sum(np.abs(a) ** 2)
    drift = 0.0
    for _ in range(steps):
        a = so.step(a)
        drift = max(drift, abs(np.sum(np.abs(a) ** 2) / n0 - 1))
    report.add_check("unitarity", drift / steps < 1e-10, drift / steps, 1e-10, "norm drift per step")
    cn = CrankNicolson(spec, h, dt, order=8).run(psi0.copy(), steps)
    div = float(np.sqrt(np.sum(np.abs(a - cn) ** 2) * ox.spacing))
    report.add_check("split_vs_cn", div < 1e-4, div, 1e-4,
                     f"L2 distance between split-operator and Crank-Nicolson after {steps} steps")
    T = 2.0
    exact = analytic.coherent_state(ox.coords, T, om, 1.0, 0.5)
    errs = []
    for d in (2e-3, 1e-3):
        b = SplitOperator(spec, h, d).run(psi0.copy(), int(round(T / d)))
        errs.append(float(np.sqrt(np.sum(np.abs(b - exact) ** 2) * ox.spacing)))
    ratio = errs[0] / errs[1]
    report.diagnostics["dt_halving_errors"] = errs
    report.add_check("dt_halving", abs(ratio - 4) <= 0.8, ratio, [3.2, 4.8],
                     "split-operator error ratio when dt is halved")
    return report


# -- registry -----------------------------------------------------------------------------

def _measurement(**over) -> dict:
    d = copy.deepcopy(MEASUREMENT_DEFAULTS)
    d.update(over)
    return d


PRESETS: dict[str, ExperimentPreset] = {}


def _register(name, claim, predicates, defaults, runner, trajectories=10_000):
    PRESETS[name] = ExperimentPreset(name, claim, tuple(predicates), defaults, runner, trajectories)


_register("pointer-readout",
          "The pointer lands in L with probability |c1|^2; the cross term is bounded by Cauchy-Schwarz.",
          ("born_empirical", "born_quadrature", "cross_term_bounded"),
          _measurement(repeat=False), _run_pointer_readout)
_register("camera",
          "A camera reading the pointer agrees with it; joint off-diagonal probabilities vanish.",
          ("marginal_consistency", "offdiag_quadrature", "offdiag_empirical_zero", "idle_wheel"),
          _measurement(camera_grid={"min": -12.8, "max": 12.8, "points": 512}), _run_camera)
_register("camera-tails",
          "With long-tailed pointer and camera states, disagreements occur at the quadrature tail rate.",
          ("marginal_consistency", "offdiag_tail_consistent"),
          _measurement(camera_grid={"min": -12.8, "max": 12.8, "points": 512}, pointer_shape="cauchy",
                       pointer_width=0.25, camera_shape="cauchy", camera_width=0.25,
                       enforce_localization=False, settle_time=0.0),
          _run_camera)
_register("conditional-guidance",
          "With Y deep in one pointer region, Z moves with the matching camera packet alone.",
          ("conditional_velocity_L", "conditional_velocity_R"),
          _measurement(pointer_grid={"min": -12.8, "max": 12.8, "points": 256},
                       camera_grid={"min": -12.8, "max": 12.8, "points": 512}, kick=2.0, t_mid=0.25, probes=10),
          _run_conditional_guidance, trajectories=1)
_register("repeat-measurement",
          "A repeated pointer measurement reproduces the first outcome; the conditional state is collapsed.",
          ("agreement_matches_quadrature", "agreement_one", "disagreement_quadrature", "collapse_fidelity"),
          _measurement(), _run_repeat, trajectories=1000)
_register("free-gaussian",
          "A free Gaussian spreads by the width law and its trajectories scale with the width.",
          ("width_law", "trajectory_scaling", "equivariance", "no_crossing"),
          copy.deepcopy(FREE_GAUSSIAN_DEFAULTS), _run_free_gaussian)
_register("double-slit",
          "Trajectories never cross the symmetry axis, so the screen side reveals the slit.",
          ("equivariance", "screen_chi2", "no_axis_crossing", "minima_depth", "mirror_symmetry"),
          copy.deepcopy(DOUBLE_SLIT_DEFAULTS), _run_double_slit)
_register("single-slit",
          "Without a second slit the screen pattern has no interference minima.",
          ("equivariance", "screen_chi2", "unimodal"),
          copy.deepcopy(DOUBLE_SLIT_DEFAULTS), _run_single_slit)
_register("packet-exchange",
          "Counter-propagating packets: trajectories reflect at the symmetry plane while packets pass through.",
          ("no_plane_crossing", "no_crossing", "attribution_mismatch", "velocity_reversal", "equivariance"),
          copy.deepcopy(PACKET_EXCHANGE_DEFAULTS), _run_packet_exchange, trajectories=1000)
_register("packet-exchange-offset",
          "Packets passing with a transverse offset carry their trajectories along.",
          ("attribution_mismatch_zero",),
          copy.deepcopy(PACKET_OFFSET_DEFAULTS), _run_packet_offset, trajectories=1000)
_register("absolute-uncertainty",
          "Given the record, X is distributed as |phi_cond|^2; nothing finer can be inferred.",
          ("conditional_tv", "std_ratio", "no_sub_conditional_information", "control_conditional_tv",
           "width_halving"),
          copy.deepcopy(ABSOLUTE_DEFAULTS), _run_absolute_uncertainty, trajectories=100_000)
_register("numerics",
          "Propagator and guidance reproduce closed-form solutions.",
          ("width_law", "trajectory_scaling", "plane_wave_velocity", "unitarity", "split_vs_cn", "dt_halving"),
          copy.deepcopy(NUMERICS_DEFAULTS), _run_numerics, trajectories=2000)


def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise PresetViolation(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None


def run_double_slit(params: dict | None = None, ens: EnsembleSpec | None = None, threads: int = 1) -> RunReport:
    return _run("double-slit", params, ens, threads)


def run_packet_exchange(params: dict | None = None, ens: EnsembleSpec | None = None, threads: int = 1) -> RunReport:
    return _run("packet-exchange", params, ens, threads)


def run_absolute_uncertainty(params: dict | None = None, ens: EnsembleSpec | None = None,
                             threads: int = 1) -> RunReport:
    return _run("absolute-uncertainty", params, ens, threads)


def _run(name, params, ens, threads):
    pre = get_preset(name)
    p = copy.deepcopy(pre.defaults)
    p.update(params or {})
    return pre.run(p, ens or EnsembleSpec(pre.trajectories, 0), threads)
