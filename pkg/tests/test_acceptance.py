"""Acceptance criteria 1-10, one test each.

Every test prints a single ``criterion N: PASS|FAIL`` line with the measured
values next to the pinned tolerances.  Criteria 5 and 6 are expected to fail:
the oracle blow-up rule cannot fire at desk-scale dimensions (see the
decisions ledger), and the tests are left failing rather than loosened.
"""
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import brentq

from hypdens import dbar
from hypdens.density import classify, estimate_density, scan_centers
from hypdens.disk_oracle import benchmark_family, seip_benchmark
from hypdens.geometry import build_grid, disk_domain
from hypdens.metric import closed_geodesic, hyperbolic_disk, solve_liouville
from hypdens.models import (
    AnnulusModel,
    DiskModel,
    automorphism,
    disk_alpha_weight,
    disk_energy_constant,
    disk_nu,
    pushforward_weight,
    regular_tessellation,
)
from hypdens.potential import green_energy, green_function, riesz_measure
from hypdens.weak_limits import disc_probe, extract_triplet, weak_distance
from hypdens.weights import model_weight_alpha

# pinned tolerances
GREEN_TOL = 5e-3
GREEN_SECONDS = 60.0
NU_TOL = 1e-2
CORE_DENSITY_TOL = 1e-2
COLLAR_REL = 0.01
ENERGY_REL = 0.02
AGREEMENT = 0.90
MARGIN = 0.15
CROSSING_BAND = (0.8, 1.2)
DBAR_RESIDUAL = 1e-3
DBAR_SPREAD = 2.0
DBAR_RELOCATION = 0.05
MOBIUS_REL = 0.02
AXIOM_TOL = 1e-12
SUITE_SECONDS = 600.0

MODEL = DiskModel()
RADII = (2.0, 3.0, 4.5, 6.0)
TESTS = Path(__file__).parent


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return emit


@pytest.fixture(scope="module")
def disk256():
    return solve_liouville(build_grid(disk_domain(), 1 / 256))


def test_criterion_01_disk_green(report):
    t0 = time.perf_counter()
    grid = build_grid(disk_domain(), 1 / 256)
    g = green_function(grid.mask, 0, grid=grid)
    elapsed = time.perf_counter() - t0
    r = np.abs(grid.z)
    sel = grid.mask & (r >= 0.1) & (r <= 0.9)
    err = float(np.max(np.abs(g.values[sel] + np.log(r[sel]))))
    ok = err <= GREEN_TOL and elapsed <= GREEN_SECONDS
    assert report(1, ok, f"max error {err:.2e} (tol {GREEN_TOL:g}), {elapsed:.1f} s "
                         f"(limit {GREEN_SECONDS:g} s)")


def test_criterion_02_liouville(report, disk128, annulus2):
    z = disk128.grid.z
    sel = disk128.grid.mask & (np.abs(z) <= 0.95)
    err = float(np.max(np.abs(disk128.nu[sel] - disk_nu(z[sel]))))
    core = float(annulus2.density_at(np.array([1 + 0j]))[0])
    ok = err <= NU_TOL and abs(core - np.pi / 4) <= CORE_DENSITY_TOL
    assert report(2, ok, f"disk nu error {err:.2e} (tol {NU_TOL:g}); annulus density at |z|=1 "
                         f"{core:.5f} vs pi/4 = {np.pi / 4:.5f} (tol {CORE_DENSITY_TOL:g})")


def test_criterion_03_collar_identity(report, annulus2):
    L = closed_geodesic(annulus2, 0).hyperbolic_length
    rel = abs(L / (np.pi**2 / 2) - 1)
    assert report(3, rel <= COLLAR_REL, f"geodesic length {L:.4f} vs pi^2/2 = {np.pi**2 / 2:.4f}, "
                                        f"relative error {rel:.2e} (tol {COLLAR_REL:g})")


def test_criterion_04_energy_identity(report, disk256):
    mu = riesz_measure(model_weight_alpha(disk256, 1.0))
    rels = []
    for r in (2.0, 4.0, 6.0):
        g = green_function(hyperbolic_disk(disk256, 0, r), 0)
        e = green_energy(g, mu)
        rels.append(abs(e / disk_energy_constant(1.0, r) - 1))
    ok = max(rels) <= ENERGY_REL
    assert report(4, ok, "relative errors " + ", ".join(f"r={r:g}: {x:.2e}"
                                                        for r, x in zip((2, 4, 6), rels))
                  + f" (tol {ENERGY_REL:g})")


def _agreement(alpha, sweep, p, n_max):
    reports, crossing = seip_benchmark(alpha, sweep, n_max=n_max, p=p)
    centers = scan_centers(9.0 - max(RADII) - 1.0, 2, 6, 0)
    expected = {"interpolating": "bounded", "neither-certain": "blow-up"}
    hits, used, thresholds, rows = 0, 0, set(), []
    for rep in reports:
        seq, _ = benchmark_family(rep.target * (1.0 if p == np.inf else 1.0 / p)
                                  * (alpha if p == np.inf else alpha - 1) / (2 * np.pi))
        c = classify(seq, disk_alpha_weight(alpha), MODEL, centers, RADII,
                     p=None if p == np.inf else p)
        thresholds.add(c.threshold)
        rows.append(f"t={rep.target:g}: D={rep.measured_density:.3f} {c.verdict}/{rep.verdict}")
        if abs(rep.measured_density - 1) > MARGIN:
            used += 1
            hits += expected.get(c.verdict) == rep.verdict
    return hits / max(used, 1), crossing, thresholds, rows


def test_criterion_05_threshold_calibration(report):
    # subset of the sweep; the full sweep at n_max = 64 is logged in the ledger
    frac, crossing, _, rows = _agreement(1.0, [0.5, 0.7, 1.3, 2.0], np.inf, 64)
    in_band = CROSSING_BAND[0] <= crossing <= CROSSING_BAND[1]
    ok = frac >= AGREEMENT and in_band
    assert report(5, ok, f"agreement {frac:.0%} (need {AGREEMENT:.0%}), crossing {crossing:.3g} "
                         f"(band {CROSSING_BAND}); " + "; ".join(rows))


def test_criterion_06_lp_threshold(report):
    frac, crossing, thresholds, rows = _agreement(2.0, [0.5, 0.7, 1.3, 1.6, 2.0], 2, 96)
    ok = thresholds == {0.5} and frac >= AGREEMENT
    assert report(6, ok, f"classifier thresholds {sorted(thresholds)} (need 0.5), agreement "
                         f"{frac:.0%} (need {AGREEMENT:.0%}); " + "; ".join(rows))


def test_criterion_07_dbar(report):
    grid = build_grid(disk_domain(), 1 / 128)
    w = disk_alpha_weight(1.0)
    forms, _ = dbar.bump_family(grid)
    sols = [dbar.weighted_solve(f, w, MODEL) for f in forms]
    consts = np.array([s.constant for s in sols])
    f, _ = automorphism(0.7, 0.2 + 0.1j)
    moved_forms, _ = dbar.bump_family(grid, relocate=f)
    moved = np.array([dbar.weighted_solve(x, w, MODEL).constant for x in moved_forms])
    resid = max(s.residual for s in sols)
    spread = consts.max() / consts.min()
    reloc = float(np.max(np.abs(moved / consts - 1)))
    ok = resid <= DBAR_RESIDUAL and spread <= DBAR_SPREAD and reloc <= DBAR_RELOCATION
    assert report(7, ok, f"residual {resid:.2e} (tol {DBAR_RESIDUAL:g}), spread {spread:.3f} "
                         f"(limit {DBAR_SPREAD:g}), relocation {reloc:.2e} "
                         f"(tol {DBAR_RELOCATION:g})")


def test_criterion_08_mobius_invariance(report):
    # covariant: centers move with the lattice; intrinsic: the scan stays put
    seq, _ = benchmark_family(1 / (2 * np.pi))
    centers = scan_centers(2.0, 2, 6, 0)
    w = disk_alpha_weight(1.0)
    base = estimate_density(seq, w, MODEL, centers, RADII).value
    rng = np.random.default_rng(20261016)
    cov, intr = [], []
    for _ in range(3):
        # |a| <= 0.4 keeps every scan disk inside the moved complete region
        a = 0.4 * np.sqrt(rng.random()) * np.exp(2j * np.pi * rng.random())
        f, inv = automorphism(2 * np.pi * rng.random(), a)
        moved = seq.mapped(f)
        cov.append(estimate_density(moved, pushforward_weight(w, inv), MODEL, f(centers), RADII).value)
        intr.append(estimate_density(moved, w, MODEL, centers, RADII).value)
    rc = np.abs(np.array(cov) / base - 1)
    ri = np.abs(np.array(intr) / base - 1)
    ok = max(rc.max(), ri.max()) <= MOBIUS_REL
    assert report(8, ok, f"D+ = {base:.4f}; relative change covariant "
                         + ", ".join(f"{x:.1e}" for x in rc) + "; intrinsic "
                         + ", ".join(f"{x:.1e}" for x in ri) + f" (tol {MOBIUS_REL:g})")


def test_criterion_09_weak_limits(report):
    w = disk_alpha_weight(1.0)
    V = regular_tessellation(7, 3, 7.0)
    cs = [c for c in V if 2.5 < abs(2 * np.arctanh(abs(c))) < 5.0][:4]
    T = [extract_triplet(w, V, 0, c, MODEL) for c in cs]
    worst = 0.0
    for rho in (0.3, 0.5):
        D = np.array([[weak_distance(a, b, rho) for b in T] for a in T])
        worst = max(worst, np.abs(np.diag(D)).max(), np.abs(D - D.T).max())
        tri = D[:, None, :] - D[:, :, None] - D.T[None, :, :]  # d(i,k) - d(i,j) - d(j,k)
        worst = max(worst, float(max(tri.max(), 0.0)))
    A = AnnulusModel(np.exp(-2), np.exp(2))
    rng = np.random.default_rng(1)
    r = np.exp(rng.uniform(-2, 2, 3000))
    lam = r * np.exp(2j * np.pi * rng.random(3000))
    lam = lam[(np.abs(lam) > np.exp(-2) * 1.0001) & (np.abs(lam) < np.exp(2) * 0.9999)]
    xs = [brentq(lambda x: A.distance(1.0, np.array([x]))[0] - 2 * d, 1.01,
                 np.exp(2) * (1 - 1e-12)) for d in (4, 5, 6)]
    P = disc_probe(w, lam, 1.0, xs, A)
    ok = worst <= AXIOM_TOL and P.decreasing
    assert report(9, ok, f"largest axiom violation {worst:.1e} (tol {AXIOM_TOL:g}); disc probe "
                         "distances " + ", ".join(f"{x:.2e}" for x in P.distances)
                  + f" at depths 4, 5, 6 ({'strictly decreasing' if P.decreasing else 'not decreasing'})")


def test_criterion_10_suite_runtime(report):
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", str(TESTS),
                           f"--ignore={TESTS / 'test_acceptance.py'}"],
                          capture_output=True, text=True, cwd=TESTS.parent)
    elapsed = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0 and elapsed <= SUITE_SECONDS
    assert report(10, ok, f"property suites {elapsed:.0f} s (limit {SUITE_SECONDS:g} s), "
                          f"exit {proc.returncode}: {tail}")
