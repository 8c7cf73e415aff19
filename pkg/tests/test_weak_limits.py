import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from hypdens.metric import ChartUnavailable, annulus_chart
from hypdens.models import (
    AnnulusModel,
    DiskModel,
    automorphism,
    disk_alpha_weight,
    disk_distance,
    pushforward_weight,
    regular_tessellation,
)
from hypdens.weak_limits import (
    disc_probe,
    extract_triplet,
    limit_diagnostics,
    matching_distance,
    weak_distance,
)
from hypdens.weights import model_weight_alpha

MODEL = DiskModel()
W = disk_alpha_weight(1.0)


def axis_distance(z):
    # hyperbolic distance from z to the imaginary axis
    return np.arcsinh(2 * np.abs(z.real) / (1 - np.abs(z) ** 2))


@pytest.fixture(scope="module")
def vertices():
    return regular_tessellation(7, 3, 8.0)


@pytest.fixture(scope="module")
def faces():
    return regular_tessellation(7, 3, 8.0, "face")


def right_side(pts, lo=2.2, hi=4.6):
    d = disk_distance(0, pts)
    ok = (pts.real > 0) & (axis_distance(pts) > 1.6) & (d > lo) & (d < hi)
    q = pts[ok]
    o = np.argsort(disk_distance(0, q))
    return q[o], disk_distance(0, q[o])


@pytest.fixture(scope="module")
def small_triplets(vertices):
    pts = vertices[disk_distance(0, vertices) < 5.0]
    cs = pts[(disk_distance(0, pts) > 2.5)][:4]
    return [extract_triplet(W, vertices, 0, c, MODEL) for c in cs]


# extract_triplet


def test_triplet_model_disk_alpha():
    # D_n has hyperbolic radius 2, so its image is |eta| < tanh(1) with mass 2 r^2 / (1 - r^2)
    T = extract_triplet(W, [], 0, np.tanh(2.0), MODEL)
    r = np.tanh(1.0)
    assert T.radius == pytest.approx(r, rel=1e-9)
    assert T.radius_min == pytest.approx(r, rel=1e-9)
    assert T.measure.total == pytest.approx(2 * r**2 / (1 - r**2), rel=0.03)
    assert T.points.points.size == 0


def test_triplet_center_at_base_raises():
    with pytest.raises(ValueError, match="radius 0"):
        extract_triplet(W, [], 0.3, 0.3, MODEL)


@pytest.mark.parametrize("c", [0.5, np.tanh(1.0)])
def test_triplet_too_close_raises(c):
    with pytest.raises(ValueError, match="must exceed"):
        extract_triplet(W, [], 0, c, MODEL)


def test_triplet_needs_base_or_radius():
    with pytest.raises(ValueError):
        extract_triplet(W, [], None, 0.5, MODEL)
    with pytest.raises(ValueError):
        extract_triplet(W, [], None, 0.5, MODEL, radius=0.0)


def test_triplet_points_recentred(vertices):
    T = extract_triplet(W, vertices, None, 0j, MODEL, radius=2.0)
    inside = vertices[disk_distance(0, vertices) < 2.0]
    assert T.points.points.size == inside.size
    np.testing.assert_allclose(np.sort(np.abs(T.points.points)), np.sort(np.abs(inside)), atol=1e-12)


def test_triplet_lattice_path_matches_annulus_model(annulus2):
    A = AnnulusModel(np.exp(-2), np.exp(2))
    x = brentq(lambda t: A.distance(1.0, np.array([t]))[0] - 3.0, 1.01, np.exp(2) * (1 - 1e-12))
    exact = extract_triplet(W, [], 1.0, x, A)
    chart = annulus_chart(0j, np.exp(-2), np.exp(2), 0)
    grid = extract_triplet(model_weight_alpha(annulus2, 1.0, with_values=False), [], 1.0, x,
                           annulus2, chart=chart)
    assert grid.radius == pytest.approx(exact.radius, rel=0.02)
    assert grid.measure.total == pytest.approx(exact.measure.total, rel=0.02)
    assert grid.hyperbolic_radius == pytest.approx(exact.hyperbolic_radius, rel=0.02)


def test_triplet_lattice_needs_chart(annulus2):
    with pytest.raises(ChartUnavailable):
        extract_triplet(W, [], None, 5.0, annulus2, radius=1.0)


# weak_distance


def test_weak_distance_radius_guard(small_triplets):
    A, B = small_triplets[:2]
    with pytest.raises(ValueError, match="below both"):
        weak_distance(A, B, min(A.radius_min, B.radius_min))


@settings(max_examples=8)
@given(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3), st.sampled_from([0.3, 0.5]))
def test_weak_distance_pseudometric(small_triplets, i, j, k, rho):
    T = small_triplets
    dij = weak_distance(T[i], T[j], rho)
    assert weak_distance(T[i], T[i], rho) == pytest.approx(0.0, abs=1e-12)
    assert dij == pytest.approx(weak_distance(T[j], T[i], rho), abs=1e-12)
    assert dij <= weak_distance(T[i], T[k], rho) + weak_distance(T[k], T[j], rho) + 1e-9


def test_weak_distance_mobius_related_vertices(vertices):
    # the {7,3} vertex set is carried to itself by an automorphism sending 0 to any vertex
    d = disk_distance(0, vertices)
    A = extract_triplet(W, vertices, None, 0j, MODEL, radius=2.0)
    for v in vertices[np.argsort(d)[[1, 40]]]:
        B = extract_triplet(W, vertices, None, v, MODEL, radius=2.0)
        assert weak_distance(A, B, 0.5) <= 0.05


def test_weak_distance_commutes_with_automorphism(vertices):
    # measured 0.0065
    f, inv = automorphism(0.4, 0.3 - 0.1j)
    c = vertices[np.argmin(np.abs(disk_distance(0, vertices) - 3.2))]
    T1 = extract_triplet(W, vertices, 0, c, MODEL)
    T2 = extract_triplet(pushforward_weight(W, inv), f(vertices), f(0j), f(c), MODEL)
    assert T1.measure.total == pytest.approx(T2.measure.total, rel=1e-6)
    assert weak_distance(T1, T2, 0.5) <= 0.02


def test_matching_distance_rim_penalty():
    assert matching_distance(np.array([0.1]), np.zeros(0, dtype=complex), 0.5) == pytest.approx(0.4)
    assert matching_distance(np.array([0.1]), np.array([0.1j]), 0.5) == pytest.approx(np.sqrt(0.02))
    assert matching_distance(np.zeros(0, dtype=complex), np.zeros(0, dtype=complex), 0.5) == 0.0


# limit_diagnostics
# tol = 0.1: same-side distances are 0.025 to 0.083, cross-side about 0.93


@pytest.fixture(scope="module")
def periodic_report(vertices):
    R, dr = right_side(vertices)
    cs, last = [], 0.0
    for z, d in zip(R, dr):
        if d > last + 0.1:
            cs.append(z)
            last = d
        if len(cs) == 5:
            break
    T = [extract_triplet(W, vertices, 0, c, MODEL) for c in cs]
    return limit_diagnostics(T, [0.3, 0.5], tol=0.1)


def test_limits_periodic_orbit_converges(periodic_report):
    rep = periodic_report
    assert rep.convergent
    assert rep.n_clusters == 1
    assert rep.tables[0.5].max() <= 0.1


def test_limits_alternating_two_clusters(vertices, faces):
    seq = np.concatenate([vertices[vertices.real > 0], faces[faces.real < 0]])
    R, dr = right_side(vertices)
    L, dl = right_side(-faces)
    L = -L
    cs, last, side = [], 0.0, 1
    while len(cs) < 6:
        P, dp = (R, dr) if side == 1 else (L, dl)
        k = int(np.argmax(dp > last + 0.05))
        cs.append(P[k])
        last = dp[k]
        side = -side
    T = [extract_triplet(W, seq, 0, c, MODEL) for c in cs]
    rep = limit_diagnostics(T, [0.3, 0.5], tol=0.1)
    assert not rep.convergent
    assert rep.n_clusters == 2
    assert len(set(rep.clusters[::2])) == 1
    assert len(set(rep.clusters[1::2])) == 1
    assert rep.clusters[0] != rep.clusters[1]


def test_limits_depth_must_increase(small_triplets):
    T = small_triplets[:3]
    with pytest.raises(ValueError, match="escape"):
        limit_diagnostics([T[0], T[0], T[1]], [0.3])
    with pytest.raises(ValueError, match="escape"):
        limit_diagnostics(T[::-1], [0.3])


def test_limits_need_three(small_triplets):
    with pytest.raises(ValueError, match="three"):
        limit_diagnostics(small_triplets[:2], [0.3])


def test_limit_report_to_dict(periodic_report):
    d = periodic_report.to_dict()
    assert json.loads(json.dumps(d)) == d
    assert d["radii"] == [0.3, 0.5]
    assert set(d["tables"]) == {"0.3", "0.5"}
    assert d["convergent"] is True


# disc_probe


def test_disc_probe_decreases_with_depth():
    # measured 1.2e-5, 2.6e-7, 1.2e-8
    A = AnnulusModel(np.exp(-2), np.exp(2))
    rng = np.random.default_rng(1)
    r = np.exp(rng.uniform(-2, 2, 3000))
    lam = r * np.exp(2j * np.pi * rng.random(3000))
    lam = lam[(np.abs(lam) > np.exp(-2) * 1.0001) & (np.abs(lam) < np.exp(2) * 0.9999)]
    cs = [brentq(lambda x: A.distance(1.0, np.array([x]))[0] - 2 * d, 1.01, np.exp(2) * (1 - 1e-12))
          for d in (4, 5, 6)]
    P = disc_probe(W, lam, 1.0, cs, A)
    np.testing.assert_allclose(P.depths, [4, 5, 6], rtol=1e-6)
    assert P.decreasing
    assert P.distances[0] <= 1e-3


def test_disc_probe_needs_chart(annulus2):
    with pytest.raises(ChartUnavailable):
        disc_probe(W, [], 1.0, [5.0, 6.0], annulus2)
