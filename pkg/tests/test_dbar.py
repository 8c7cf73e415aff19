import numpy as np
import pytest

from hypdens import dbar
from hypdens.geometry import build_grid, circle, disk_domain, make_domain
from hypdens.models import DiskModel, automorphism, disk_alpha_weight
from hypdens.weights import model_weight_alpha, smoothstep
from hypdens.density import ring_lattice

MODEL = DiskModel()
W1 = disk_alpha_weight(1.0)


@pytest.fixture(scope="module")
def gd():
    return build_grid(disk_domain(), 1 / 128)


@pytest.fixture(scope="module")
def family(gd):
    forms, centers = dbar.bump_family(gd)
    return forms, [dbar.weighted_solve(f, W1, MODEL) for f in forms]


# Cauchy transform


def test_constant_form_gives_conj_z():
    # omega = 1 on the unit disk; the transform is conj(z) inside
    g = build_grid(make_domain("big", [circle(0, 1.25, 512)]), 1 / 128)
    form = dbar.indicator_form(g, lambda z: np.abs(z) < 1)
    sol = dbar.cauchy_transform(form, order=0)
    sel = np.abs(g.z) <= 0.8
    assert np.max(np.abs(sol.u - np.conj(g.z))[sel]) <= 1e-2


def test_zero_form(gd):
    form = dbar.disk_form(gd, np.zeros(gd.shape, complex))
    sol = dbar.cauchy_transform(form)
    assert np.all(sol.u == 0)
    ws = dbar.weighted_solve(form, W1, MODEL)
    assert ws.constant == 0.0
    assert np.all(ws.u == 0)


def test_support_in_band_raises(gd):
    om = np.where(gd.mask & (np.abs(gd.z) > 0.99), 1.0, 0.0)
    form = dbar.disk_form(gd, om)
    with pytest.raises(dbar.DbarError, match="band"):
        dbar.cauchy_transform(form)
    with pytest.raises(dbar.DbarError, match="band"):
        dbar.weighted_solve(form, W1, MODEL)


def test_unbounded_form_raises(gd):
    om = np.zeros(gd.shape, complex)
    om[gd.index_of(0.1)] = np.inf
    with pytest.raises(dbar.DbarError):
        dbar.disk_form(gd, om)


def test_form_norm_is_poincare_length(gd):
    f = dbar.bump(gd, 0.3, 1.0)
    s = f.support
    nu = np.log(2 / (1 - np.abs(gd.z[s]) ** 2))
    np.testing.assert_allclose(f.norm[s], np.abs(f.omega[s]) * np.exp(-nu), rtol=1e-12)


def test_linearity(gd):
    f1 = dbar.bump(gd, 0.2, 1.0)
    f2 = dbar.bump(gd, -0.3j, 1.2)
    a, b = 2.0 - 1j, 0.5
    combo = dbar.disk_form(gd, a * f1.omega + b * f2.omega)
    u = dbar.weighted_solve(combo, W1, MODEL).u
    u1 = dbar.weighted_solve(f1, W1, MODEL).u
    u2 = dbar.weighted_solve(f2, W1, MODEL).u
    diff = u - a * u1 - b * u2
    check = dbar._check_region(gd)
    r = np.abs(dbar.dbar_fd(diff, gd.h))[check]
    assert r.max() <= 2 * 1e-3 * np.abs(combo.omega).max()


# weighted solves


def test_family_residuals_and_stability(family):
    _, sols = family
    assert all(s.residual <= 1e-3 for s in sols)
    c = [s.constant for s in sols]
    assert max(c) / min(c) <= 2


def test_relocation_invariance(gd, family):
    _, sols = family
    # a = 0.3+0.2i pushes the outermost bump to residual 1.01e-3 at this h
    f, _ = automorphism(0.7, 0.2 + 0.1j)
    forms, _ = dbar.bump_family(gd, relocate=f)
    moved = [dbar.weighted_solve(x, W1, MODEL).constant for x in forms]
    np.testing.assert_allclose(moved, [s.constant for s in sols], rtol=0.05)


def test_far_bump_finite():
    g = build_grid(disk_domain(), 1 / 256)
    sol = dbar.weighted_solve(dbar.bump(g, np.tanh(1.5), 1.0), W1, MODEL)
    assert sol.residual <= 1e-3
    assert 0 < sol.constant < np.inf  # measured 0.2400


def test_constant_monotone_in_alpha(gd):
    # smaller Laplacian lower bound, larger constant (measured 0.3398, 0.3152, 0.2792)
    consts = []
    for alpha in (1.0, 2.0, 4.0):
        forms, _ = dbar.bump_family(gd, count=4, alpha=alpha)
        consts.append(dbar.measure_dbar_constant(forms, disk_alpha_weight(alpha), MODEL))
    assert consts[0] >= consts[1] >= consts[2]


def test_measure_lp_finite(family):
    forms, _ = family
    c2 = dbar.measure_dbar_constant(forms[:3], W1, MODEL, p=2)
    assert 0 < c2 < np.inf


def test_measure_zero_family(gd):
    zero = dbar.disk_form(gd, np.zeros(gd.shape, complex))
    assert dbar.measure_dbar_constant([zero], W1, MODEL) == 0.0


def test_measure_empty_family_raises():
    with pytest.raises(dbar.DbarError):
        dbar.measure_dbar_constant([], W1, MODEL)


def test_multiplier_path(annulus2):
    w = model_weight_alpha(annulus2, 1.0)
    z = annulus2.grid.z
    om = np.where(np.abs(z - 3.0) < 0.5, (1 - (np.abs(z - 3.0) / 0.5) ** 2) ** 3, 0)
    form = dbar.make_form(annulus2.grid, om, annulus2.nu)
    sol = dbar.weighted_solve(form, w, annulus2, zeros=[-3.0, 3j], tol=5e-3)
    assert sol.extras["method"] == "multiplier"
    assert np.isfinite(sol.constant) and sol.constant > 0


def test_multiplier_zero_in_compact(annulus2):
    w = model_weight_alpha(annulus2, 1.0)
    z = annulus2.grid.z
    om = np.where(np.abs(z - 3.0) < 0.5, 1.0, 0.0)
    form = dbar.make_form(annulus2.grid, om, annulus2.nu)
    with pytest.raises(dbar.DbarError, match="compact"):
        dbar.weighted_solve(form, w, annulus2, zeros=[3.1])


def test_weighted_solve_needs_values(annulus2):
    w = model_weight_alpha(annulus2, 1.0, with_values=False)
    z = annulus2.grid.z
    form = dbar.make_form(annulus2.grid, np.where(np.abs(z - 3.0) < 0.5, 1.0, 0.0), annulus2.nu)
    with pytest.raises(dbar.DbarError, match="values"):
        dbar.weighted_solve(form, w, annulus2)


# patching


@pytest.fixture(scope="module")
def patch_setup(gd):
    lam = ring_lattice(1.2, 1.2, 3.2).points
    lam = lam[np.abs(lam) > 0.6]
    rng = np.random.default_rng(0)
    v = (rng.normal(size=lam.size) + 1j * rng.normal(size=lam.size)) / (1 - np.abs(lam) ** 2)
    return lam, v


def _two_charts(gd, a, b):
    r = np.abs(gd.z)
    chi1 = np.where(gd.mask, smoothstep((r - a) / (b - a)), 0)
    chi2 = np.where(gd.mask, 1 - chi1, 0)
    c1 = dbar.kernel_local_chart(gd, gd.mask & (r > a - 0.02), 1.0)
    c2 = dbar.kernel_local_chart(gd, gd.mask & (r < b + 0.02), 1.0)
    return [c1, c2], [chi1, chi2]


def test_patch_single_chart_is_local(gd, patch_setup):
    lam, v = patch_setup
    chart = dbar.kernel_local_chart(gd, gd.mask, 1.0)
    # one round: with chi = 1 there is no correction, only point-sampling error (about 2e-5)
    res = dbar.patch_interpolant([chart], [np.where(gd.mask, 1.0, 0.0)], W1, MODEL, lam, v, grid=gd,
                                 tol=1e-4)
    local = chart.solve(lam, v)
    assert res.rounds == 1
    np.testing.assert_allclose(res.function, local, atol=1e-12 * np.abs(local).max())


def test_patch_two_charts_contract(gd, patch_setup):
    # measured contraction about 0.2 for the [0.45, 0.5] transition
    lam, v = patch_setup
    charts, chis = _two_charts(gd, 0.45, 0.5)
    res = dbar.patch_interpolant(charts, chis, W1, MODEL, lam, v, grid=gd, tol=1e-6)
    assert res.errors[-1] <= 1e-6
    assert max(res.contraction) < 0.5
    assert all(b < a for a, b in zip(res.errors, res.errors[1:]))
    assert res.norm <= res.local_norm / (1 - max(res.contraction)) * 1.05


def test_patch_diverging_correction_raises(gd, patch_setup):
    lam, v = patch_setup
    charts, chis = _two_charts(gd, 0.45, 0.5)
    good = charts[0]
    # a local solver that overshoots the data by 60% makes the per-round ratio 0.6
    sloppy = dbar.LocalChart(mask=good.mask, solve=lambda p, x: 1.6 * good.solve(p, x))
    with pytest.raises(dbar.DbarError, match="1/2"):
        dbar.patch_interpolant([sloppy, charts[1]], chis, W1, MODEL, lam, v, grid=gd)


def test_patch_cutoffs_must_cover(gd, patch_setup):
    lam, v = patch_setup
    charts, chis = _two_charts(gd, 0.45, 0.5)
    with pytest.raises(dbar.DbarError, match="cover"):
        dbar.patch_interpolant(charts, [chis[0], 0.5 * chis[1]], W1, MODEL, lam, v, grid=gd)


def test_patch_points_in_plateau(gd, patch_setup):
    lam, v = patch_setup
    charts, chis = _two_charts(gd, 0.45, 0.5)
    pts = np.append(lam, 0.475)
    with pytest.raises(dbar.DbarError, match="plateau"):
        dbar.patch_interpolant(charts, chis, W1, MODEL, pts, np.append(v, 1.0), grid=gd)
