from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pilotwave.errors import ConfigurationError, DomainError, ShapeError
from pilotwave.grid import (Axis, GridField, GridSpec, RegionSpec, SeparableField, cross_term_bound, field_1d,
                            gaussian, inner_product, marginal_density, norm_squared, region_probability,
                            tensor_product, truncated_cauchy)

AX = Axis(-12.8, 12.8, 256, "x")
AY = Axis(-6.4, 6.4, 64, "y")


def _gauss(center=0.0, width=1.0, k=0.0, ax=AX):
    return field_1d(ax, gaussian(ax, center, width, k)).normalized()


# -- GridSpec / Axis ----------------------------------------------------------

def test_cell_centred_uniform_spacing():
    ax = Axis(0.0, 1.0, 16)
    assert ax.spacing == pytest.approx(1 / 16)
    assert np.allclose(np.diff(ax.coords), ax.spacing)
    assert ax.coords[0] == pytest.approx(0.5 / 16)


@pytest.mark.parametrize("lo,hi,points", [(0, 1, 8), (0, 1, 24), (1, 1, 16), (2, 1, 16)])
def test_axis_rejects_bad_extent_or_points(lo, hi, points):
    with pytest.raises(ConfigurationError):
        Axis(lo, hi, points)


def test_gridspec_limits_axes_and_names():
    with pytest.raises(ConfigurationError):
        GridSpec((AX, AY, Axis(0, 1, 16, "z"), Axis(0, 1, 16, "w")))
    with pytest.raises(ConfigurationError):
        GridSpec((AX, AX))
    spec = GridSpec((AX, AY))
    assert GridSpec.from_dict(spec.to_dict()) == spec


def test_field_shape_must_match():
    with pytest.raises(ShapeError):
        GridField(GridSpec((AX,)), np.ones(10))


def test_field_is_immutable():
    f = _gauss()
    with pytest.raises(AttributeError):
        f.time = 3.0
    with pytest.raises(ValueError):
        f.amplitudes[0] = 1.0


# -- norm_squared ----------------------------------------------------------------

def test_norm_of_normalized_gaussian():
    assert norm_squared(_gauss(1.0, 0.7)) == pytest.approx(1.0, abs=1e-9)


def test_norm_of_zero_field():
    assert norm_squared(GridField(GridSpec((AX,)), np.zeros(AX.points))) == 0.0


def test_norm_scales_quadratically():
    assert norm_squared(_gauss() * 2) == pytest.approx(4.0, abs=1e-8)


def test_norm_matches_direct_sum():
    f = _gauss(0.3, 0.9, 2.0)
    assert norm_squared(f) == pytest.approx(np.sum(np.abs(f.amplitudes) ** 2) * AX.spacing, rel=1e-14)


# -- region_probability ---------------------------------------------------------

def test_localized_gaussian_is_in_its_region():
    f = _gauss(-4.0, 0.5)
    L = RegionSpec(((AX.lo, 0.0),), "L")
    R = RegionSpec(((0.0, AX.hi),), "R")
    assert region_probability(f, L) >= 1 - 1e-6
    assert region_probability(f, R) <= 1e-6


def test_symmetric_field_half_space():
    f = _gauss(0.0, 1.3)
    assert region_probability(f, RegionSpec(((0.0, AX.hi),))) == pytest.approx(0.5, abs=1e-8)


def test_region_outside_grid_is_domain_error():
    with pytest.raises(DomainError):
        region_probability(_gauss(), RegionSpec(((-20.0, 0.0),)))


def test_region_membership_by_cell_centre():
    ax = Axis(0.0, 1.6, 16)
    r = RegionSpec(((0.0, 0.15),))
    # centres at 0.05 and 0.15: only the first is inside [0, 0.15)
    assert r.axis_mask(GridSpec((ax,)), 0).sum() == 1


def test_disjointness():
    L = RegionSpec(((-5.0, 0.0), None), "L")
    R = RegionSpec(((0.0, 5.0), None), "R")
    assert L.disjoint(R)
    assert not L.disjoint(RegionSpec(((-1.0, 1.0), None)))


# -- cross_term_bound ------------------------------------------------------------

def test_cauchy_schwarz_equality_case():
    f = _gauss(0.5, 1.1)
    assert cross_term_bound(f, f, RegionSpec.whole(1)) == pytest.approx(1.0, abs=1e-12)


def test_disjoint_supports_give_zero_bound():
    f, g = _gauss(-8.0, 0.3), _gauss(8.0, 0.3)
    assert cross_term_bound(f, g, RegionSpec(((AX.lo, 0.0),))) < 1e-12


def test_overlapping_gaussians_bound_dominates_quadrature():
    f, g = _gauss(-0.5, 1.0, 1.0), _gauss(0.7, 1.4, -0.5)
    r = RegionSpec(((0.0, AX.hi),))
    direct = abs(np.sum(np.conj(f.amplitudes) * g.amplitudes * (AX.coords >= 0)) * AX.spacing)
    assert abs(inner_product(f, g, r)) == pytest.approx(direct, rel=1e-12)
    assert cross_term_bound(f, g, r) >= direct


def test_cross_term_grid_mismatch():
    with pytest.raises(ShapeError):
        cross_term_bound(_gauss(), _gauss(ax=Axis(-12.8, 12.8, 128)), RegionSpec.whole(1))


# -- tensor_product --------------------------------------------------------------

def test_tensor_product_of_normalized_is_normalized():
    p = tensor_product(_gauss(), _gauss(ax=AY))
    assert norm_squared(p) == pytest.approx(1.0, abs=1e-8)


def test_tensor_product_with_zero():
    p = tensor_product(_gauss(), GridField(GridSpec((AY,)), np.zeros(AY.points)))
    assert np.all(p.amplitudes == 0)


def test_tensor_product_marginal():
    f, g = _gauss(1.0, 0.8, 0.5), _gauss(0.0, 0.6, ax=AY)
    p = tensor_product(f, g)
    assert np.allclose(marginal_density(p, 0), f.density, atol=1e-8)


def test_tensor_product_overflow():
    two = tensor_product(_gauss(), _gauss(ax=AY))
    with pytest.raises(ConfigurationError):
        tensor_product(two, tensor_product(_gauss(ax=Axis(0, 1, 16, "z")), _gauss(ax=Axis(0, 1, 16, "w"))))


def test_separable_matches_dense():
    spec = GridSpec((AX, AY))
    s = SeparableField(spec, [(0.6, (gaussian(AX, -3, 0.5), gaussian(AY, 1, 0.4))),
                              (0.8j, (gaussian(AX, 3, 0.5), gaussian(AY, -1, 0.4)))])
    d = s.to_dense()
    r = RegionSpec(((0.0, AX.hi), (-2.0, 6.4)))
    assert s.norm_squared() == pytest.approx(norm_squared(d), rel=1e-12)
    assert s.region_probability(r) == pytest.approx(region_probability(d, r), rel=1e-12)
    assert np.allclose(s.marginal_density(1), marginal_density(d, 1), atol=1e-14)


def test_truncated_cauchy_is_zero_beyond_cutoff():
    a = truncated_cauchy(AX, 0.0, 0.5, cutoff=4.0)
    assert np.all(a[np.abs(AX.coords) > 4.0 * 0.5 + 1e-12] == 0)


# -- properties -------------------------------------------------------------------

fields_1d = st.builds(
    lambda c, w, k, c2, w2, phase: field_1d(
        AX, gaussian(AX, c, w, k) + np.exp(1j * phase) * gaussian(AX, c2, w2)).normalized(),
    st.floats(-5, 5), st.floats(0.3, 2.0), st.floats(-3, 3), st.floats(-5, 5), st.floats(0.3, 2.0),
    st.floats(0, 6.28))


@settings(max_examples=40, deadline=None)
@given(fields_1d, st.lists(st.floats(-12.0, 12.0), min_size=1, max_size=6, unique=True))
def test_disjoint_cover_additivity(f, cuts):
    edges = [AX.lo] + sorted(cuts) + [AX.hi]
    total = sum(region_probability(f, RegionSpec(((a, b),))) for a, b in zip(edges, edges[1:]) if b > a)
    assert total == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(fields_1d, fields_1d, st.floats(-12.0, 11.0), st.floats(0.5, 20.0))
def test_cauchy_schwarz_always_holds(f, g, lo, width):
    r = RegionSpec(((lo, min(lo + width, AX.hi)),))
    assert abs(inner_product(f, g, r)) <= cross_term_bound(f, g, r) + 1e-10


@settings(max_examples=25, deadline=None)
@given(fields_1d, st.floats(-3, 3), st.floats(0.3, 1.5))
def test_tensor_marginal_property(f, c, w):
    g = field_1d(AY, gaussian(AY, c, w)).normalized()
    p = tensor_product(f, g)
    assert norm_squared(p) == pytest.approx(norm_squared(f) * norm_squared(g), abs=1e-8)
    assert np.allclose(marginal_density(p, 0), f.density, atol=1e-8)
