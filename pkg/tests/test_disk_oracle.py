import numpy as np
import pytest

from hypdens.density import ring_lattice
from hypdens.disk_oracle import (
    InfeasibleInterpolation,
    benchmark_family,
    crossing_estimate,
    growth_exponent,
    interpolation_constant,
    jensen_exponent,
    oracle_verdict,
    sampling_constant,
    seip_benchmark,
    truncate,
)
from hypdens.models import DiskWeight, disk_alpha_weight

W1 = disk_alpha_weight(1.0)
CORE_NET = ring_lattice(0.25, 0.25, 2 * np.arctanh(0.6)).points  # 111 nodes in |z| <= 0.6


@pytest.fixture(scope="module")
def sparse_nodes():
    seq, _ = benchmark_family(0.3 / (2 * np.pi))
    return seq.points


# interpolation_constant


@pytest.mark.parametrize("n", [2, 4, 16])
def test_single_node(n):
    assert interpolation_constant([0j], W1, n) == pytest.approx(1.0, abs=1e-6)


def test_empty_nodes():
    assert interpolation_constant([], W1, 8) == 0.0


def test_near_collision_blow_up():
    # two nodes at hyperbolic distance 0.1
    x = np.tanh(0.1 / 4)
    c = interpolation_constant([-x, x], W1, 64)
    assert c >= 10 * interpolation_constant([0j], W1, 64)


def test_collision_scales_inversely():
    # measured 7.78, 31.0, 62.0 at distances 0.2, 0.05, 0.025 (n = 32)
    c = [interpolation_constant([-np.tanh(d / 4), np.tanh(d / 4)], W1, 32) for d in (0.05, 0.025)]
    assert c[1] / c[0] == pytest.approx(2.0, rel=0.1)


def test_dimension_must_exceed_nodes():
    with pytest.raises(InfeasibleInterpolation):
        interpolation_constant([0.1, 0.2, 0.3], W1, 3)


def test_nodes_near_rim_rejected():
    with pytest.raises(ValueError):
        interpolation_constant([0.999], W1, 8)


def test_bad_p():
    with pytest.raises(ValueError):
        interpolation_constant([0.1], W1, 8, p=3)


def test_l2_needs_alpha_above_one():
    with pytest.raises(ValueError):
        interpolation_constant([0.3], W1, 8, p=2)
    assert interpolation_constant([0.3, -0.3], disk_alpha_weight(2.0), 32, p=2) >= 1.0


def test_adding_node_does_not_decrease(sparse_nodes):
    nodes = truncate(sparse_nodes, 16)
    a = interpolation_constant(nodes, W1, 16)
    b = interpolation_constant(np.append(nodes, 0.45 + 0.3j), W1, 16)
    assert b >= a * (1 - 0.01)


def test_harmonic_shift_invariance():
    shifted = DiskWeight(invariant_fn=W1.invariant_fn,
                         values_fn=lambda z: W1.values_fn(z) + np.real(0.5 * np.asarray(z)))
    a = interpolation_constant([0.3, -0.3], W1, 32)
    b = interpolation_constant([0.3, -0.3], shifted, 32)
    assert b == pytest.approx(a, rel=0.02)


def test_dimension_stability_low_density():
    seq, _ = benchmark_family(0.5 / (2 * np.pi))
    c = [interpolation_constant(truncate(seq.points, n), W1, n) for n in (16, 32)]
    assert abs(c[1] - c[0]) <= 0.1 * c[0]


# sampling_constant


def test_sampling_dense_net():
    assert sampling_constant(CORE_NET, W1, 16, 0.5) == pytest.approx(1.0, rel=0.1)


def test_sampling_removing_nodes_does_not_decrease():
    full = sampling_constant(CORE_NET, W1, 16, 0.5)
    half = sampling_constant(CORE_NET[::2], W1, 16, 0.5)
    assert half >= full * (1 - 0.01)


def test_sampling_single_point_blows_up():
    assert sampling_constant([0j], W1, 32, 0.5) == float("inf")


def test_sampling_empty_raises():
    with pytest.raises(ValueError):
        sampling_constant([], W1, 8, 0.5)


@pytest.mark.parametrize("core", [0.0, 1.0])
def test_sampling_bad_core(core):
    with pytest.raises(ValueError):
        sampling_constant([0j], W1, 8, core)


# verdict rules and benchmark


@pytest.mark.parametrize("consts,verdict", [
    ((2.0, 1.5, 1.52), "bounded"),
    ((1.0, 2.0, 6.5), "blow-up"),
    ((1.0, 2.0, float("inf")), "blow-up"),
    ((1.0, 1.5, 2.0), "inconclusive"),
    ((1.0,), "inconclusive"),
])
def test_oracle_verdict(consts, verdict):
    assert oracle_verdict(consts) == verdict


def test_growth_and_jensen_exponents():
    assert growth_exponent((16, 32), (1.0, 2.0)) == pytest.approx(1.0)
    assert jensen_exponent(0.8, 1.0, np.inf) == 0.0
    assert jensen_exponent(1.5, 2.0, np.inf) == pytest.approx(1.0)
    assert jensen_exponent(1.5, 2.0, 2) == pytest.approx(0.5)


def test_truncate_keeps_nearest():
    pts = np.array([0.9, 0.1j, -0.5, 0.3])
    assert np.array_equal(truncate(pts, 8, 0.25), np.array([0.1j, 0.3]))


def test_benchmark_family_density():
    seq, dens = benchmark_family(0.5 / (2 * np.pi))
    assert abs(np.log(2 * np.pi * dens / 0.5)) < 0.2
    assert len(seq) > 100


def test_seip_low_density_bounded():
    reports, crossing = seip_benchmark(1.0, [0.5], n_max=32)
    (r,) = reports
    assert r.verdict == "bounded"
    assert all(c >= 1 - 1e-6 for c in r.constants)
    assert np.isnan(crossing)  # no blow-up point in the sweep


def test_seip_rejects_bad_inputs():
    with pytest.raises(ValueError):
        seip_benchmark(0.5, [0.5])
    with pytest.raises(ValueError):
        seip_benchmark(1.0, [2.5])
    with pytest.raises(ValueError):
        seip_benchmark(1.0, [0.5], p=2)


def test_crossing_estimate_midpoint():
    class R:
        def __init__(self, d, v):
            self.measured_density, self.verdict = d, v

    reps = [R(0.5, "bounded"), R(0.9, "bounded"), R(1.3, "blow-up"), R(1.1, "inconclusive")]
    assert crossing_estimate(reps) == pytest.approx(1.1)
