import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hypdens.geometry import (annulus_domain, boundary_distance, build_grid, circle, disk_domain,
                              make_domain, parse_domain, polygon_area, serialize_domain,
                              signed_area, three_circle_domain)


def _doc(curves, closed=True, name="d"):
    out = []
    for c in curves:
        pts = [[float(z.real), float(z.imag)] for z in c]
        if closed:
            pts.append(pts[0])
        out.append(pts)
    return json.dumps({"name": name, "curves": out})


def test_parse_unit_circle():
    d = parse_domain(_doc([circle(0, 1, 256)]))
    assert d.connectivity == 1


def test_parse_annulus():
    d = parse_domain(_doc([circle(0, np.exp(2), 256), circle(0, np.exp(-2), 256)]))
    assert d.connectivity == 2


def test_orientation_normalized():
    d = parse_domain(_doc([circle(0, 1)[::-1], circle(0, 0.5)]))
    assert signed_area(d.curves[0]) > 0
    assert signed_area(d.curves[1]) < 0


def test_open_curve_rejected():
    with pytest.raises(ValueError, match="open curve"):
        parse_domain(_doc([circle(0, 1)], closed=False))


@pytest.mark.parametrize("text", ["not json", "{}", json.dumps({"curves": [[1, 2, 3]]})])
def test_malformed_rejected(text):
    with pytest.raises(ValueError):
        parse_domain(text)


def test_self_intersecting_rejected():
    bowtie = np.array([0, 1 + 1j, 1, 1j])
    with pytest.raises(ValueError, match="intersects itself"):
        make_domain("bowtie", [bowtie])


def test_hole_outside_rejected():
    with pytest.raises(ValueError, match="outside"):
        make_domain("bad", [circle(0, 1), circle(3, 0.5)])


def test_crossing_curves_rejected():
    with pytest.raises(ValueError):
        make_domain("bad", [circle(0, 1), circle(0.9, 0.5)])


def test_roundtrip_serialization():
    d = three_circle_domain()
    e = parse_domain(serialize_domain(d))
    assert e.connectivity == d.connectivity
    for a, b in zip(d.curves, e.curves):
        np.testing.assert_allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("domain,area", [(disk_domain(), np.pi),
                                         (annulus_domain(0.5, 1.0), 0.75 * np.pi)])
def test_mask_area(domain, area):
    g = build_grid(domain, 1 / 64)
    assert abs(g.mask.sum() * g.h**2 / area - 1) < 0.02
    assert abs(polygon_area(domain) / area - 1) < 1e-3


@pytest.mark.parametrize("h", [0.0, -0.1])
def test_bad_spacing(h):
    with pytest.raises(ValueError):
        build_grid(disk_domain(), h)


def test_too_coarse_for_gap():
    with pytest.raises(ValueError, match="coarse"):
        build_grid(annulus_domain(0.95, 1.0), 0.2)


@pytest.mark.parametrize("z,expected", [(0j, 1.0), (0.9 + 0j, 0.1)])
def test_boundary_distance(z, expected):
    g = build_grid(disk_domain(), 1 / 64)
    assert abs(boundary_distance(g, z) - expected) <= g.h


def test_boundary_distance_outside():
    g = build_grid(disk_domain(), 1 / 64)
    with pytest.raises(ValueError):
        boundary_distance(g, 1.5)


def test_mask_connected_and_inside():
    from scipy import ndimage

    d = three_circle_domain()
    g = build_grid(d, 1 / 32)
    _, n = ndimage.label(g.mask)
    assert n == 1
    assert np.all(g.inside[g.mask])
    assert np.all(g.boundary_distance >= 0)


@given(st.integers(0, 10_000), st.integers(0, 10_000))
def test_boundary_distance_lipschitz(i, j):
    g = build_grid(disk_domain(), 1 / 32)
    idx = np.flatnonzero(g.mask)
    a, b = idx[i % idx.size], idx[j % idx.size]
    za, zb = g.z.ravel()[a], g.z.ravel()[b]
    da, db = g.boundary_distance.ravel()[a], g.boundary_distance.ravel()[b]
    assert abs(da - db) <= abs(za - zb) + 2 * g.h
