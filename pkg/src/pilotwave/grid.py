"""Uniform configuration-space grids and complex fields sampled on them.

Grid points are cell centres: ``x_j = lo + (j + 1/2) dx`` with
``dx = (hi - lo) / points``.  A symmetric extent therefore gives a grid that
is mirror symmetric about the origin, with the origin on a cell boundary.
All quadratures are midpoint sums over cells.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, ShapeError

MAX_AXES = 3
MIN_POINTS = 16
BOUNDARIES = ("periodic", "absorbing")
# Outer fraction of each axis occupied by the absorbing layer.
ABSORBER_FRACTION = 0.1


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    points: int
    name: str = "x"

    def __post_init__(self):
        if not np.isfinite(self.lo) or not np.isfinite(self.hi) or not self.hi > self.lo:
            raise ConfigurationError(
                f"axis {self.name!r}: extent must be a positive interval, got [{self.lo}, {self.hi}]")
        if int(self.points) != self.points or self.points < MIN_POINTS:
            raise ConfigurationError(
                f"axis {self.name!r}: need at least {MIN_POINTS} points, got {self.points}")
        if self.points & (self.points - 1):
            raise ConfigurationError(
                f"axis {self.name!r}: point count must be a power of two, got {self.points}")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / self.points

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def coords(self) -> np.ndarray:
        return self.lo + (np.arange(self.points) + 0.5) * self.spacing

    @property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.points, d=self.spacing)

    def index_coordinate(self, x):
        """Fractional array index of position ``x`` (cell centres are integers)."""
        return (np.asarray(x, dtype=float) - self.lo) / self.spacing - 0.5

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.lo) & (x < self.hi)

    def absorber_profile(self) -> np.ndarray:
        """Quartic ramp in [0, 1] over the outer layer of the axis, 0 inside."""
        width = ABSORBER_FRACTION * self.length
        x = self.coords
        depth = np.maximum(self.lo + width - x, x - (self.hi - width))
        return np.clip(depth / width, 0.0, 1.0) ** 4

    def to_dict(self) -> dict:
        return {"name": self.name, "min": self.lo, "max": self.hi, "points": self.points}


@dataclass(frozen=True)
class GridSpec:
    axes: tuple[Axis, ...]
    boundary: str = "periodic"

    def __post_init__(self):
        axes = tuple(self.axes)
        object.__setattr__(self, "axes", axes)
        if not 1 <= len(axes) <= MAX_AXES:
            raise ConfigurationError(f"grid must have 1 to {MAX_AXES} axes, got {len(axes)}")
        names = [a.name for a in axes]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"axis names must be unique, got {names}")
        if self.boundary not in BOUNDARIES:
            raise ConfigurationError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")

    @property
    def dims(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.points for a in self.axes)

    @property
    def spacings(self) -> np.ndarray:
        return np.array([a.spacing for a in self.axes])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    def axis_index(self, name_or_index) -> int:
        if isinstance(name_or_index, (int, np.integer)):
            if not 0 <= name_or_index < self.dims:
                raise ConfigurationError(f"axis index {name_or_index} out of range for {self.dims} axes")
            return int(name_or_index)
        try:
            return self.names.index(name_or_index)
        except ValueError:
            raise ConfigurationError(f"no axis named {name_or_index!r}; axes are {self.names}") from None

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*[a.coords for a in self.axes], indexing="ij")

    def broadcast(self, values: np.ndarray, axis: int) -> np.ndarray:
        """Reshape a per-axis 1D array so it broadcasts along ``axis``."""
        shape = [1] * self.dims
        shape[axis] = -1
        return np.asarray(values).reshape(shape)

    def sub(self, axes: Iterable[int]) -> "GridSpec":
        return GridSpec(tuple(self.axes[i] for i in axes), self.boundary)

    def inside(self, points: np.ndarray) -> np.ndarray:
        """Mask of points strictly inside the usable domain (outside any absorber)."""
        points = np.atleast_2d(points)
        ok = np.ones(len(points), dtype=bool)
        for i, a in enumerate(self.axes):
            lo, hi = a.lo, a.hi
            if self.boundary == "absorbing":
                w = ABSORBER_FRACTION * a.length
                lo, hi = lo + w, hi - w
            ok &= (points[:, i] >= lo) & (points[:, i] < hi)
        return ok

    def to_dict(self) -> dict:
        return {"axes": [a.to_dict() for a in self.axes], "boundary": self.boundary}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        axes = tuple(Axis(float(a["min"]), float(a["max"]), int(a["points"]), a.get("name", "xyz"[i]))
                     for i, a in enumerate(d["axes"]))
        return cls(axes, d.get("boundary", "periodic"))


def line(lo: float, hi: float, points: int, name: str = "x", boundary: str = "periodic") -> GridSpec:
    return GridSpec((Axis(lo, hi, points, name),), boundary)


class GridField:
    """Complex amplitudes on a :class:`GridSpec`, immutable after construction."""

    __slots__ = ("spec", "amplitudes", "time")

    def __init__(self, spec: GridSpec, amplitudes, time: float = 0.0):
        a = np.array(amplitudes, dtype=np.complex128)
        if a.size != int(np.prod(spec.shape)):
            raise ShapeError(f"amplitude array has {a.size} entries, grid needs {int(np.prod(spec.shape))}")
        a = a.reshape(spec.shape)
        a.flags.writeable = False
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "time", float(time))

    def __setattr__(self, name, value):
        raise AttributeError("GridField is immutable")

    def __repr__(self):
        return f"GridField(shape={self.spec.shape}, time={self.time:g})"

    def replace(self, amplitudes=None, time=None) -> "GridField":
        return GridField(self.spec,
                         self.amplitudes if amplitudes is None else amplitudes,
                         self.time if time is None else time)

    def _check(self, other: "GridField"):
        if other.spec != self.spec:
            raise ShapeError("fields live on different grids")

    def __add__(self, other: "GridField") -> "GridField":
        self._check(other)
        return self.replace(self.amplitudes + other.amplitudes)

    def __sub__(self, other: "GridField") -> "GridField":
        self._check(other)
        return self.replace(self.amplitudes - other.amplitudes)

    def __mul__(self, scalar) -> "GridField":
        return self.replace(self.amplitudes * complex(scalar))

    __rmul__ = __mul__

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def normalized(self) -> "GridField":
        n = norm_squared(self)
        if n == 0.0:
            raise DomainError("cannot normalize the zero field")
        return self.replace(self.amplitudes / np.sqrt(n))


@dataclass(frozen=True)
class RegionSpec:
    """Axis-aligned box; ``None`` is a wildcard for the whole axis.

    Intervals are half-open ``[lo, hi)``.  Grid cells belong to the region when
    their centre does.
    """

    intervals: tuple[tuple[float, float] | None, ...]
    label: str = ""

    def __post_init__(self):
        ivs = []
        for iv in self.intervals:
            if iv is None:
                ivs.append(None)
                continue
            lo, hi = float(iv[0]), float(iv[1])
            if not hi > lo:
                raise DomainError(f"region {self.label!r}: empty interval [{lo}, {hi})")
            ivs.append((lo, hi))
        object.__setattr__(self, "intervals", tuple(ivs))

    @classmethod
    def whole(cls, dims: int, label: str = "all") -> "RegionSpec":
        return cls((None,) * dims, label)

    @classmethod
    def on_axis(cls, dims: int, axis: int, lo: float, hi: float, label: str = "") -> "RegionSpec":
        ivs = [None] * dims
        ivs[axis] = (lo, hi)
        return cls(tuple(ivs), label)

    def validate(self, spec: GridSpec) -> None:
        if len(self.intervals) != spec.dims:
            raise DomainError(f"region {self.label!r} has {len(self.intervals)} axes, grid has {spec.dims}")
        for iv, a in zip(self.intervals, spec.axes):
            if iv is None:
                continue
            tol = 1e-12 * a.length
            if iv[0] < a.lo - tol or iv[1] > a.hi + tol:
                raise DomainError(
                    f"region {self.label!r}: interval {iv} on axis {a.name!r} exceeds grid extent [{a.lo}, {a.hi}]")

    def axis_mask(self, spec: GridSpec, i: int) -> np.ndarray:
        iv = self.intervals[i]
        if iv is None:
            return np.ones(spec.axes[i].points, dtype=bool)
        x = spec.axes[i].coords
        return (x >= iv[0]) & (x < iv[1])

    def mask(self, spec: GridSpec) -> np.ndarray:
        self.validate(spec)
        m = np.ones(spec.shape, dtype=bool)
        for i in range(spec.dims):
            m &= spec.broadcast(self.axis_mask(spec, i), i)
        return m

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.ones(len(points), dtype=bool)
        for i, iv in enumerate(self.intervals):
            if iv is not None:
                ok &= (points[:, i] >= iv[0]) & (points[:, i] < iv[1])
        return ok

    def disjoint(self, other: "RegionSpec") -> bool:
        for a, b in zip(self.intervals, other.intervals):
            if a is None or b is None:
                continue
            if a[1] <= b[0] or b[1] <= a[0]:
                return True
        return False

    def restrict(self, axes: Sequence[int]) -> "RegionSpec":
        return RegionSpec(tuple(self.intervals[i] for i in axes), self.label)

    def to_dict(self) -> dict:
        return {"label": self.label, "intervals": [None if iv is None else list(iv) for iv in self.intervals]}

    @classmethod
    def from_dict(cls, d: dict) -> "RegionSpec":
        return cls(tuple(None if iv is None else tuple(iv) for iv in d["intervals"]), d.get("label", ""))


# -- integrals ---------------------------------------------------------------

def norm_squared(f) -> float:
    if isinstance(f, SeparableField):
        return f.norm_squared()
    return float(np.sum(f.density) * f.spec.cell_volume)


def inner_product(f: GridField, g: GridField, region: RegionSpec | None = None) -> complex:
    """<f, g> over ``region`` (conjugate-linear in ``f``)."""
    if f.spec != g.spec:
        raise ShapeError("fields live on different grids")
    prod = np.conj(f.amplitudes) * g.amplitudes
    if region is not None:
        prod = prod[region.mask(f.spec)]
    return complex(np.sum(prod) * f.spec.cell_volume)


def region_probability(f, region: RegionSpec) -> float:
    """Integral of |f|^2 over ``region``; also accepts a :class:`SeparableField`."""
    if isinstance(f, SeparableField):
        return f.region_probability(region)
    return float(np.sum(f.density[region.mask(f.spec)]) * f.spec.cell_volume)


def cross_term_bound(f: GridField, g: GridField, region: RegionSpec) -> float:
    """Cauchy-Schwarz bound sqrt(int_r |f|^2) sqrt(int_r |g|^2) on |int_r f* g|."""
    if f.spec != g.spec:
        raise ShapeError("fields live on different grids")
    return float(np.sqrt(region_probability(f, region)) * np.sqrt(region_probability(g, region)))


def fidelity(f: GridField, g: GridField) -> float:
    """|<f, g>| / (||f|| ||g||)."""
    nf, ng = norm_squared(f), norm_squared(g)
    if nf == 0.0 or ng == 0.0:
        return 0.0
    return abs(inner_product(f, g)) / np.sqrt(nf * ng)


def tensor_product(f: GridField, g: GridField) -> GridField:
    dims = f.spec.dims + g.spec.dims
    if dims > MAX_AXES:
        raise ConfigurationError(f"tensor product would have {dims} axes; at most {MAX_AXES} supported")
    boundary = f.spec.boundary if f.spec.boundary == g.spec.boundary else "absorbing"
    spec = GridSpec(f.spec.axes + g.spec.axes, boundary)
    amps = np.multiply.outer(f.amplitudes, g.amplitudes)
    return GridField(spec, amps, f.time)


def marginal_density(f, axis: int) -> np.ndarray:
    """Density of the ``axis`` coordinate with all other axes integrated out."""
    if isinstance(f, SeparableField):
        return f.marginal_density(axis)
    others = tuple(i for i in range(f.spec.dims) if i != axis)
    d = f.density
    if others:
        d = d.sum(axis=others) * np.prod([f.spec.axes[i].spacing for i in others])
    return d


# -- standard 1D states --------------------------------------------------------

def gaussian(axis: Axis, center: float = 0.0, width: float = 1.0, momentum: float = 0.0) -> np.ndarray:
    """Normalized Gaussian amplitudes; ``width`` is the standard deviation of |psi|^2."""
    x = axis.coords
    a = np.exp(-((x - center) ** 2) / (4.0 * width**2) + 1j * momentum * x)
    return a / np.sqrt(np.sum(np.abs(a) ** 2) * axis.spacing)


def truncated_cauchy(axis: Axis, center: float = 0.0, width: float = 1.0, cutoff: float = 20.0) -> np.ndarray:
    """Amplitudes whose |psi|^2 is a Cauchy profile of half-width ``width``,
    cut to zero beyond ``cutoff`` half-widths from the centre."""
    x = axis.coords
    u = (x - center) / width
    a = np.where(np.abs(u) <= cutoff, 1.0 / np.sqrt(1.0 + u**2), 0.0).astype(np.complex128)
    return a / np.sqrt(np.sum(np.abs(a) ** 2) * axis.spacing)


def field_1d(axis: Axis, amplitudes, time: float = 0.0, boundary: str = "periodic") -> GridField:
    return GridField(GridSpec((axis,), boundary), amplitudes, time)


# -- sums of products ----------------------------------------------------------

class SeparableField:
    """A field stored as a sum of tensor products of 1D factors.

    ``terms`` is a sequence of ``(coefficient, (f_0, ..., f_{d-1}))`` with one
    1D complex array per axis.  Products that stay separable under the
    dynamics (free kinetics, impulsive pointer couplings) can be carried on
    3-axis grids without ever forming the dense array.
    """

    __slots__ = ("spec", "terms", "labels", "time")

    def __init__(self, spec: GridSpec, terms, labels: Sequence[str] | None = None, time: float = 0.0):
        clean = []
        for coef, factors in terms:
            factors = tuple(np.array(fa, dtype=np.complex128) for fa in factors)
            if len(factors) != spec.dims:
                raise ShapeError(f"term has {len(factors)} factors, grid has {spec.dims} axes")
            for fa, a in zip(factors, spec.axes):
                if fa.shape != (a.points,):
                    raise ShapeError(f"factor on axis {a.name!r} has shape {fa.shape}, expected ({a.points},)")
                fa.flags.writeable = False
            clean.append((complex(coef), factors))
        labels = tuple(labels) if labels is not None else tuple(str(i) for i in range(len(clean)))
        if len(labels) != len(clean):
            raise ShapeError("one label per term required")
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "terms", tuple(clean))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "time", float(time))

    def __setattr__(self, name, value):
        raise AttributeError("SeparableField is immutable")

    def __repr__(self):
        return f"SeparableField(shape={self.spec.shape}, terms={len(self.terms)}, time={self.time:g})"

    @classmethod
    def product(cls, spec: GridSpec, factors, label: str = "0", time: float = 0.0) -> "SeparableField":
        return cls(spec, [(1.0, tuple(factors))], [label], time)

    def replace(self, terms=None, labels=None, time=None) -> "SeparableField":
        return SeparableField(self.spec,
                              self.terms if terms is None else terms,
                              self.labels if labels is None else labels,
                              self.time if time is None else time)

    def to_dense(self) -> GridField:
        out = np.zeros(self.spec.shape, dtype=np.complex128)
        for coef, factors in self.terms:
            t = factors[0]
            for fa in factors[1:]:
                t = np.multiply.outer(t, fa)
            out += coef * t
        return GridField(self.spec, out, self.time)

    def branch(self, label: str) -> "SeparableField":
        keep = [(t, l) for t, l in zip(self.terms, self.labels) if l.startswith(label)]
        return self.replace([t for t, _ in keep], [l for _, l in keep])

    def gram(self, region: RegionSpec | None = None, other: "SeparableField | None" = None) -> np.ndarray:
        """G[k, l] = prod_a int_{r_a} conj(self_k,a) other_l,a."""
        other = self if other is None else other
        if region is not None:
            region.validate(self.spec)
        g = np.ones((len(self.terms), len(other.terms)), dtype=np.complex128)
        for i, a in enumerate(self.spec.axes):
            m = np.ones(a.points, dtype=bool) if region is None else region.axis_mask(self.spec, i)
            fk = np.array([f[i][m] for _, f in self.terms]).reshape(len(self.terms), -1)
            fl = np.array([f[i][m] for _, f in other.terms]).reshape(len(other.terms), -1)
            g *= (np.conj(fk) @ fl.T) * a.spacing
        return g

    def coefficients(self) -> np.ndarray:
        return np.array([c for c, _ in self.terms], dtype=np.complex128)

    def inner(self, other: "SeparableField", region: RegionSpec | None = None) -> complex:
        return complex(np.conj(self.coefficients()) @ self.gram(region, other) @ other.coefficients())

    def region_probability(self, region: RegionSpec) -> float:
        return float(self.inner(self, region).real)

    def norm_squared(self) -> float:
        return float(self.inner(self).real)

    def max_abs_bound(self) -> float:
        """Upper bound on max |psi| over the grid."""
        return float(sum(abs(c) * np.prod([np.max(np.abs(f)) for f in fs]) for c, fs in self.terms))

    def marginal_density(self, axis: int) -> np.ndarray:
        coef = self.coefficients()
        w = np.outer(np.conj(coef), coef)
        for i, a in enumerate(self.spec.axes):
            if i == axis:
                continue
            fi = np.array([f[i] for _, f in self.terms])
            w = w * (np.conj(fi) @ fi.T) * a.spacing
        fa = np.array([f[axis] for _, f in self.terms])
        return np.einsum("kl,kx,lx->x", w, np.conj(fa), fa).real
