"""On-disk formats for trajectories, histograms, field snapshots and reports.

Numbers in text tables are written with 17 significant digits so they read
back bit-exactly.  Field snapshots are raw little-endian float64 (re, im)
pairs in C order with a ``key = value`` text sidecar describing the grid.
"""
from __future__ import annotations

import csv
import json
import os

import numpy as np

from .errors import ConfigurationError
from .grid import Axis, GridField, GridSpec, SeparableField
from .guidance import TrajectoryEnsemble
from .report import Histogram, RunReport, _plain

FLOAT_FMT = "%.17g"


def _f(x: float) -> str:
    return FLOAT_FMT % x


def sample_indices(n_samples: int, stride: int) -> np.ndarray:
    """Every ``stride``-th sample index, always including the last one."""
    if stride < 1:
        raise ConfigurationError(f"snapshot stride must be >= 1, got {stride}")
    idx = np.arange(0, n_samples, stride)
    if idx[-1] != n_samples - 1:
        idx = np.append(idx, n_samples - 1)
    return idx


def write_trajectories(path, ens: TrajectoryEnsemble, stride: int = 1) -> None:
    names = list(ens.axis_names) or [f"x{i}" for i in range(ens.positions.shape[2])]
    idx = sample_indices(len(ens.times), stride)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["trajectory", "time", *names, "status"]) + "\n")
        for k in idx:
            t = _f(ens.times[k])
            st = ens.status_at(int(k))
            pos = ens.positions[:, k, :]
            fh.writelines(f"{j},{t},{','.join(_f(v) for v in pos[j])},{st[j]}\n" for j in range(len(ens)))


def read_trajectories(path) -> TrajectoryEnsemble:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[:2] != ["trajectory", "time"] or header[-1] != "status":
        raise ConfigurationError(f"{path}: unexpected trajectory header {header}")
    names = tuple(header[2:-1])
    traj = np.array([int(r[0]) for r in body])
    n = int(traj.max()) + 1 if len(traj) else 0
    times = np.array(sorted({float(r[1]) for r in body}))
    tindex = {t: i for i, t in enumerate(times)}
    pos = np.full((n, len(times), len(names)), np.nan)
    absorbed_at = np.full(n, -1)
    for r, j in zip(body, traj):
        k = tindex[float(r[1])]
        pos[j, k] = [float(v) for v in r[2:-1]]
        if r[-1] == "absorbed" and (absorbed_at[j] < 0 or k < absorbed_at[j]):
            absorbed_at[j] = k
    status = np.where(absorbed_at >= 0, "absorbed", "active")
    return TrajectoryEnsemble(times, pos, status, None, [], names, absorbed_at)


def write_histograms(path, histograms: dict) -> None:
    with open(path, "w") as fh:
        fh.write("histogram,axis,bin,lo,hi,count,expected\n")
        for name in sorted(histograms):
            h: Histogram = histograms[name]
            for b in range(len(h.counts)):
                fh.write(f"{name},{h.axis},{b},{_f(h.edges[b])},{_f(h.edges[b + 1])},{int(h.counts[b])},"
                         f"{_f(h.expected[b])}\n")


def read_histograms(path) -> dict:
    out: dict[str, list] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out.setdefault(r["histogram"], []).append(r)
    hists = {}
    for name, rows in out.items():
        edges = [float(rows[0]["lo"])] + [float(r["hi"]) for r in rows]
        hists[name] = Histogram(np.array(edges), np.array([int(r["count"]) for r in rows]),
                                np.array([float(r["expected"]) for r in rows]), int(rows[0]["axis"]))
    return hists


def _header_lines(spec: GridSpec, time: float) -> list[str]:
    lines = ["format = complex128-le-pairs", "order = C", f"dims = {spec.dims}",
             f"boundary = {spec.boundary}", f"time = {_f(time)}"]
    for i, a in enumerate(spec.axes):
        lines.append(f"axis{i} = {a.name} {_f(a.lo)} {_f(a.hi)} {a.points}")
    return lines


def write_field(stem, f) -> tuple[str, str]:
    """Write ``stem.bin`` and ``stem.hdr``; separable fields store their 1D factors."""
    stem = os.fspath(stem)
    lines = _header_lines(f.spec, f.time)
    if isinstance(f, SeparableField):
        lines.insert(0, "kind = separable")
        lines.append(f"terms = {len(f.terms)}")
        chunks = []
        for k, ((c, factors), label) in enumerate(zip(f.terms, f.labels)):
            lines.append(f"term{k} = {label} {_f(c.real)} {_f(c.imag)}")
            chunks.extend(factors)
        data = np.concatenate(chunks)
    else:
        lines.insert(0, "kind = dense")
        data = f.amplitudes.ravel()
    with open(stem + ".bin", "wb") as fh:
        fh.write(np.ascontiguousarray(data, dtype="<c16").tobytes())
    with open(stem + ".hdr", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return stem + ".bin", stem + ".hdr"


def read_field(stem):
    stem = os.fspath(stem)
    with open(stem + ".hdr") as fh:
        hdr = dict(line.split(" = ", 1) for line in fh.read().splitlines() if line)
    axes = []
    for i in range(int(hdr["dims"])):
        name, lo, hi, pts = hdr[f"axis{i}"].split()
        axes.append(Axis(float(lo), float(hi), int(pts), name))
    spec = GridSpec(tuple(axes), hdr["boundary"])
    data = np.fromfile(stem + ".bin", dtype="<c16")
    t = float(hdr["time"])
    if hdr["kind"] == "dense":
        return GridField(spec, data, t)
    terms, labels, pos = [], [], 0
    for k in range(int(hdr["terms"])):
        label, re, im = hdr[f"term{k}"].split()
        factors = []
        for a in spec.axes:
            factors.append(data[pos:pos + a.points])
            pos += a.points
        terms.append((complex(float(re), float(im)), tuple(factors)))
        labels.append(label)
    return SeparableField(spec, terms, labels, t)


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def write_report(out_dir, report: RunReport, timing: bool = True) -> None:
    """``report.json`` holds everything deterministic; wall-clock timings go to ``timing.json``."""
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(dumps({**report.to_dict(include_timing=False), "passed": report.passed}))
    if timing:
        with open(os.path.join(out_dir, "timing.json"), "w") as fh:
            fh.write(dumps(report.timing))
