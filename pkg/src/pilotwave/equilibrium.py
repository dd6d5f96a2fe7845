"""|psi|^2 sampling, binned distribution checks and rate estimates.

Randomness is counter based: trajectory ``i`` of a run with master seed ``s``
gets ``seed_i = splitmix64(s + (i + 1) * G)`` (G = 0x9E3779B97F4A7C15, all
arithmetic mod 2^64), and its ``j``-th uniform draw in stream ``k`` is
``splitmix64(seed_i ^ splitmix64(k * 2^32 + j + 1))`` mapped to (0, 1).  Draws
therefore depend only on (master seed, trajectory index, stream, counter), not on
batch sizes or the order in which trajectories are processed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np
from scipy import stats

from .errors import ConfigurationError, SamplerEfficiencyError
from .grid import Axis, RegionSpec, SeparableField, marginal_density

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
MAX_PROPOSALS_PER_SAMPLE = 10_000
# Wilson z for a two-sided 95% interval; upper bound for zero counts (-ln 0.025).
WILSON_Z = 1.959963984540054
ZERO_COUNT_UPPER = 3.69
# Support cut for the rejection proposal box, relative to the peak cell density.
SUPPORT_CUT = 1e-16

STREAM_INITIAL = 0
STREAM_POINTER = 1


def splitmix64(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def trajectory_seeds(master_seed: int, n: int, offset: int = 0) -> np.ndarray:
    if not 0 <= int(master_seed) < 2**64:
        raise ConfigurationError(f"master seed must be a 64-bit unsigned integer, got {master_seed}")
    idx = np.arange(offset + 1, offset + n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return splitmix64(np.uint64(int(master_seed)) + idx * _GOLDEN)


def uniforms(seeds: np.ndarray, counters, stream: int = 0) -> np.ndarray:
    """Uniform (0, 1) draws; ``counters`` broadcasts against ``seeds``."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        key = splitmix64(np.uint64(stream) * np.uint64(2**32) + counters + np.uint64(1))
    z = splitmix64(seeds ^ key)
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


@dataclass(frozen=True)
class EnsembleSpec:
    n: int
    seed: int = 0
    sampler: str = "auto"  # auto | inverse_cdf | rejection
    bins: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError(f"ensemble size must be >= 1, got {self.n}")
        if self.sampler not in ("auto", "inverse_cdf", "rejection"):
            raise ConfigurationError(f"unknown sampler {self.sampler!r}")
        trajectory_seeds(self.seed, 0)

    def seeds(self) -> np.ndarray:
        return trajectory_seeds(self.seed, self.n)


def _cell_edges(axis: Axis) -> np.ndarray:
    return axis.lo + np.arange(axis.points + 1) * axis.spacing


def inverse_cdf_sample(density: np.ndarray, axis: Axis, u: np.ndarray) -> np.ndarray:
    """Invert the piecewise-linear CDF of cell masses (uniform within a cell)."""
    mass = np.asarray(density, dtype=float) * axis.spacing
    cdf = np.concatenate([[0.0], np.cumsum(mass)])
    cdf /= cdf[-1]
    edges = _cell_edges(axis)
    j = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, axis.points - 1)
    width = cdf[j + 1] - cdf[j]
    frac = np.divide(u - cdf[j], width, out=np.full_like(u, 0.5), where=width > 0)
    return edges[j] + np.clip(frac, 0.0, 1.0) * axis.spacing


def rejection_sample(density: np.ndarray, axes, seeds: np.ndarray, stream: int = STREAM_INITIAL,
                     max_per_sample: int = MAX_PROPOSALS_PER_SAMPLE) -> tuple[np.ndarray, int]:
    """Rejection sampling from cell densities with a uniform proposal box.

    Proposal ``j`` of trajectory ``i`` uses counters ``(d+1) j .. (d+1) j + d``,
    so the accepted point is the first accepted proposal in counter order.
    Returns the samples and the number of proposals drawn.
    """
    d = len(axes)
    dens = np.asarray(density, dtype=float)
    peak = dens.max()
    if not peak > 0:
        raise ConfigurationError("cannot sample from a zero density")
    support = np.nonzero(dens > SUPPORT_CUT * peak)
    lo = np.array([ax.lo + support[i].min() * ax.spacing for i, ax in enumerate(axes)])
    hi = np.array([ax.lo + (support[i].max() + 1) * ax.spacing for i, ax in enumerate(axes)])
    box = tuple(slice(support[i].min(), support[i].max() + 1) for i in range(d))
    accept_rate = dens[box].mean() / peak
    n = len(seeds)
    out = np.empty((n, d))
    attempts = np.zeros(n, dtype=np.int64)
    pending = np.arange(n)
    budget = max_per_sample * n
    total = 0
    batch = int(min(4096, max(8, np.ceil(2.0 / max(accept_rate, 1e-9)))))
    while len(pending):
        chunk = max(1, 2_000_000 // batch)
        still = []
        for start in range(0, len(pending), chunk):
            idx = pending[start:start + chunk]
            j = attempts[idx][:, None] + np.arange(batch)[None, :]
            s = seeds[idx][:, None]
            pts = np.empty((len(idx), batch, d))
            cell = []
            for a, ax in enumerate(axes):
                u = uniforms(s, (d + 1) * j + a, stream)
                pts[:, :, a] = lo[a] + u * (hi[a] - lo[a])
                cell.append(np.clip(((pts[:, :, a] - ax.lo) / ax.spacing).astype(np.int64), 0, ax.points - 1))
            ua = uniforms(s, (d + 1) * j + d, stream)
            ok = ua * peak < dens[tuple(cell)]
            hit = ok.any(axis=1)
            first = np.argmax(ok, axis=1)
            out[idx[hit]] = pts[np.flatnonzero(hit), first[hit]]
            used = np.where(hit, first + 1, batch)
            attempts[idx] += used
            total += int(used.sum())
            still.append(idx[~hit])
        pending = np.concatenate(still) if still else pending[:0]
        if total > budget:
            raise SamplerEfficiencyError(
                f"rejection sampler used {total} proposals for {n} samples (limit {max_per_sample} per sample)")
    return out, total


def sample_initial(f, spec: EnsembleSpec, stream: int = STREAM_INITIAL) -> np.ndarray:
    """Draw ``spec.n`` configurations from |f|^2; returns an (n, dims) array.

    1D fields use inverse-CDF sampling; higher-dimensional dense fields use
    rejection.  A single-term separable field is a product measure and is
    sampled axis by axis.
    """
    seeds = spec.seeds()
    axes = f.spec.axes
    if isinstance(f, SeparableField):
        if len(f.terms) == 1 and spec.sampler != "rejection":
            cols = []
            for a, (ax, fa) in enumerate(zip(axes, f.terms[0][1])):
                cols.append(inverse_cdf_sample(np.abs(fa) ** 2, ax, uniforms(seeds, a, stream)))
            return np.stack(cols, axis=1)
        f = f.to_dense()
    method = spec.sampler
    if method == "auto":
        method = "inverse_cdf" if f.spec.dims == 1 else "rejection"
    if method == "inverse_cdf":
        if f.spec.dims != 1:
            raise ConfigurationError("inverse-CDF sampling is 1D only")
        return inverse_cdf_sample(f.density, axes[0], uniforms(seeds, 0, stream))[:, None]
    pts, _ = rejection_sample(f.density, axes, seeds, stream)
    return pts


# -- binned comparisons --------------------------------------------------------

def default_bin_count(n: int, cells: int) -> int:
    """Square-root rule capped at the grid resolution."""
    return int(max(1, min(round(np.sqrt(n)), cells)))


def histogram_edges(density: np.ndarray, axis: Axis, bins: int, mass_cut: float = 1e-8,
                    symmetric_about: float | None = None) -> np.ndarray:
    """Equal-width bins over the support window of ``density``.

    The window is the smallest run of cells holding all but ``mass_cut`` of
    the mass; the outermost edges are then stretched to the grid extent so the
    bins cover the whole axis.
    """
    mass = np.asarray(density, float) * axis.spacing
    cdf = np.cumsum(mass) / mass.sum()
    i0 = int(np.searchsorted(cdf, mass_cut / 2))
    i1 = int(np.searchsorted(cdf, 1 - mass_cut / 2))
    edges_all = _cell_edges(axis)
    lo, hi = edges_all[i0], edges_all[min(i1 + 1, axis.points)]
    if symmetric_about is not None:
        r = max(hi - symmetric_about, symmetric_about - lo)
        lo, hi = max(axis.lo, symmetric_about - r), min(axis.hi, symmetric_about + r)
    cells = max(1, int(round((hi - lo) / axis.spacing)))
    bins = max(1, min(bins, cells))
    edges = np.linspace(lo, hi, bins + 1)
    edges[0], edges[-1] = axis.lo, axis.hi
    return edges


def binned_probabilities(density: np.ndarray, axis: Axis, edges: np.ndarray) -> np.ndarray:
    mass = np.asarray(density, float) * axis.spacing
    cdf = np.concatenate([[0.0], np.cumsum(mass)])
    cdf /= cdf[-1]
    return np.diff(np.interp(edges, _cell_edges(axis), cdf))


def tv_distance(p, q) -> float:
    p, q = np.asarray(p, float), np.asarray(q, float)
    return 0.5 * float(np.sum(np.abs(p / p.sum() - q / q.sum())))


def chi_square(counts: np.ndarray, probs: np.ndarray, min_expected: float = 5.0) -> tuple[float, int, float]:
    """Pearson chi-square with adjacent bins merged until each expects >= ``min_expected``."""
    counts = np.asarray(counts, float)
    n = counts.sum()
    expected = np.asarray(probs, float) / np.sum(probs) * n
    obs_m, exp_m = [], []
    o = e = 0.0
    for oc, ec in zip(counts, expected):
        o += oc
        e += ec
        if e >= min_expected:
            obs_m.append(o); exp_m.append(e)
            o = e = 0.0
    if e > 0 or o > 0:
        if exp_m:
            obs_m[-1] += o; exp_m[-1] += e
        else:
            obs_m.append(o); exp_m.append(e)
    obs_m, exp_m = np.array(obs_m), np.array(exp_m)
    stat = float(np.sum((obs_m - exp_m) ** 2 / exp_m))
    dof = max(1, len(exp_m) - 1)
    return stat, dof, float(stats.chi2.sf(stat, dof))


@dataclass
class EquivarianceReport:
    time: float
    tv: float
    chi2: float
    dof: int
    pvalue: float
    n: int
    edges: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    expected: np.ndarray = field(repr=False)

    @property
    def noise_scale(self) -> float:
        """2 sqrt(B / N): the sampling-noise envelope for TV at B bins."""
        return 2.0 * np.sqrt(len(self.counts) / self.n)

    @property
    def sampling_tv(self) -> float:
        """Expected TV of an exact sample of size n on these bins (normal approximation)."""
        p = self.expected / self.expected.sum()
        return float(0.5 * np.sum(np.sqrt(2.0 * p * (1 - p) / (np.pi * self.n))))


def compare_samples(x: np.ndarray, density: np.ndarray, axis: Axis, t: float = 0.0,
                    bins: int | None = None, edges: np.ndarray | None = None,
                    symmetric_about: float | None = None) -> EquivarianceReport:
    x = np.asarray(x, float)
    if edges is None:
        bins = default_bin_count(len(x), axis.points) if bins is None else bins
        edges = histogram_edges(density, axis, bins, symmetric_about=symmetric_about)
    counts = np.histogram(x, bins=edges)[0]
    probs = binned_probabilities(density, axis, edges)
    stat, dof, p = chi_square(counts, probs)
    return EquivarianceReport(t, tv_distance(counts, probs), stat, dof, p, len(x), edges, counts, probs)


def check_equivariance(ens, history, t: float, axis: int = 0, bins: int | None = None,
                       symmetric_about: float | None = None) -> EquivarianceReport:
    """Compare the ensemble's ``axis`` marginal at ``t`` with that of |psi_t|^2."""
    f = history.at(t)
    x = ens.at(t)[:, axis]
    alive = ens.status == "active"
    return compare_samples(x[alive], marginal_density(f, axis), f.spec.axes[axis], t, bins,
                           symmetric_about=symmetric_about)


# -- rates -------------------------------------------------------------------

@dataclass(frozen=True)
class RateEstimate:
    count: int
    n: int
    rate: float
    lo: float
    hi: float

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def to_dict(self) -> dict:
        return {"count": self.count, "n": self.n, "rate": self.rate, "wilson95": [self.lo, self.hi]}


def wilson_interval(count: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    if n <= 0:
        raise ConfigurationError("need at least one trial")
    if count == 0:
        return 0.0, min(1.0, ZERO_COUNT_UPPER / n)
    if count == n:
        return max(0.0, 1.0 - ZERO_COUNT_UPPER / n), 1.0
    p = count / n
    denom = 1 + z**2 / n
    centre = (p + z**2 / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    return float(centre - half), float(centre + half)


def estimate_atypical_rate(configs, event) -> RateEstimate:
    """Frequency of ``event`` among final configurations, with a Wilson interval.

    ``configs`` is an (N, d) array or a trajectory ensemble (final samples);
    ``event`` is a :class:`RegionSpec` or a predicate on the (N, d) array.
    """
    if hasattr(configs, "final"):
        configs = configs.final
    configs = np.atleast_2d(np.asarray(configs, float))
    hits = event.contains(configs) if isinstance(event, RegionSpec) else np.asarray(event(configs), bool)
    k, n = int(hits.sum()), len(configs)
    lo, hi = wilson_interval(k, n)
    return RateEstimate(k, n, k / n, lo, hi)


def binomial_sigma(p: float, n: int) -> float:
    return float(np.sqrt(max(p * (1 - p), 0.0) / n))
