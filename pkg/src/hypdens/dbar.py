"""Inhomogeneous Cauchy-Riemann solver with weighted estimates.

Forms are lattices of the coefficient of d(zbar).  The planar solid Cauchy
transform is evaluated by FFT convolution with cell-integrated kernels (the
near-diagonal cells exactly).  On the unit disk with the invariant weight
alpha * log(1/(1 - |z|^2)) the solution operator is

    u(z) = (1/pi) int omega(w) / (z - w) * ((1 - |w|^2) / (1 - z conj(w)))^N dA(w),

N = 2 alpha - 1, which commutes with disk automorphisms acting on functions
by the cocycle (M')^alpha.  Elsewhere the solution is f T[omega / f] with a
multiplier f whose modulus follows e^phi up to the zeros Sigma.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator
from scipy.signal import fftconvolve
from scipy.special import comb

from . import _fd
from .geometry import GridDomain
from .models import DiskModel, disk_nu

BAND_CELLS = 4
NEAR_CELLS = 8


class DbarError(ValueError):
    pass


@dataclass(frozen=True)
class FormField:
    grid: GridDomain
    omega: np.ndarray  # complex coefficient against d(zbar), zero off the support
    norm: np.ndarray  # |omega| e^{-nu}
    support: np.ndarray

    def scaled(self, c: complex) -> "FormField":
        return make_form(self.grid, c * self.omega, self._nu())

    def _nu(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.support, np.log(np.abs(self.omega) / self.norm), 0.0)


def make_form(grid: GridDomain, omega, nu) -> FormField:
    """Form with the given coefficient lattice; ``nu`` is the metric exponent lattice."""
    omega = np.asarray(omega, dtype=complex)
    if omega.shape != grid.shape:
        raise DbarError(f"form lattice has shape {omega.shape}, grid is {grid.shape}")
    if not np.all(np.isfinite(omega)):
        raise DbarError("form is unbounded (non-finite coefficients)")
    support = np.abs(omega) > 0
    nu = np.where(support, np.nan_to_num(np.asarray(nu, dtype=float)), 0.0)
    return FormField(grid=grid, omega=np.where(support, omega, 0), norm=np.abs(omega) * np.exp(-nu),
                     support=support)


def disk_form(grid: GridDomain, omega) -> FormField:
    return make_form(grid, omega, disk_nu(grid.z * grid.mask))


@dataclass(frozen=True)
class DbarSolution:
    u: np.ndarray
    residual_field: np.ndarray  # |dbar u - omega| on the check region, nan elsewhere
    residual: float  # max residual relative to max |omega|
    weighted_norm: float
    data_norm: float
    constant: float
    check: np.ndarray = field(repr=False, default=None)  # interior minus the boundary band
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Cauchy transform


def _cell_integral_F(x, y):
    zeta = x + 1j * y
    return -1j * (zeta * np.log(zeta) - zeta)


def _cell_integral(cx, cy, h):
    """int over the square cell centred at (cx, cy) of dA / zeta (branch-safe)."""
    a = h / 2
    flip = (np.abs(cy) < a) & (cx < 0)
    sx = np.where(flip, -cx, cx)
    sy = np.where(flip, -cy, cy)
    F = _cell_integral_F
    val = F(sx + a, sy + a) - F(sx - a, sy + a) - F(sx + a, sy - a) + F(sx - a, sy - a)
    val = np.where(flip, -val, val)
    return np.where((cx == 0) & (cy == 0), 0.0, val)


def cauchy_kernel(shape, h: float, near: int = NEAR_CELLS) -> np.ndarray:
    """(1/pi) int_cell dA / zeta on offsets covering a lattice of the given shape."""
    ny, nx = shape
    my = np.arange(-(ny - 1), ny)
    mx = np.arange(-(nx - 1), nx)
    X, Y = np.meshgrid(mx * h, my * h)
    zeta = X + 1j * Y
    with np.errstate(divide="ignore", invalid="ignore"):
        K = h * h / zeta
    ci, cj = ny - 1, nx - 1
    sl = (slice(ci - near, ci + near + 1), slice(cj - near, cj + near + 1))
    K[sl] = _cell_integral(X[sl], Y[sl], h)
    return K / np.pi


_EXPONENTS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


@lru_cache(maxsize=4)
def cauchy_moments(shape, h: float, n_gauss: int = 6, near: int = 2, sub: int = 8) -> dict:
    """(1/pi) int_cell s_x^a s_y^b / (e - s) ds for a, b with a + b <= 2, on all offsets e.

    Gauss-Legendre on every cell, subdivided next to the pole; the pole cell
    is exact (only the linear moments survive, by symmetry).
    """
    ny, nx = shape
    X, Y = np.meshgrid(np.arange(-(nx - 1), nx) * h, np.arange(-(ny - 1), ny) * h)
    E = X + 1j * Y
    x, wq = np.polynomial.legendre.leggauss(n_gauss)
    sx, ws = 0.5 * h * x, 0.5 * h * wq
    out = {ab: np.zeros(E.shape, complex) for ab in _EXPONENTS}
    for i in range(n_gauss):
        for j in range(n_gauss):
            with np.errstate(divide="ignore", invalid="ignore"):
                base = ws[i] * ws[j] / (E - (sx[j] + 1j * sx[i]))
            for a, b in _EXPONENTS:
                out[(a, b)] += base * sx[j] ** a * sx[i] ** b
    mids = ((np.arange(sub) + 0.5) / sub - 0.5) * h
    ss = (mids[:, None] + sx[None, :] / sub).ravel()
    W = np.outer(np.tile(ws / sub, sub), np.tile(ws / sub, sub))
    SX, SY = np.meshgrid(ss, ss)
    ci, cj = ny - 1, nx - 1
    for di in range(-near, near + 1):
        for dj in range(-near, near + 1):
            if di == 0 and dj == 0:
                continue
            kern = W / (E[ci + di, cj + dj] - (SX + 1j * SY))
            for a, b in _EXPONENTS:
                out[(a, b)][ci + di, cj + dj] = np.sum(kern * SX**a * SY**b)
    for ab in _EXPONENTS:
        out[ab][ci, cj] = 0.0
    out[(1, 0)][ci, cj] = -h * h / 2
    out[(0, 1)][ci, cj] = 1j * h * h / 2
    return {k: v / np.pi for k, v in out.items()}


def _transform(omega: np.ndarray, h: float, order: int = 2) -> np.ndarray:
    """Cauchy transform of a lattice form.

    order 0 treats omega as constant on cells (exact for cell averages);
    order 2 integrates the local quadratic Taylor model exactly.
    """
    if order == 0:
        return fftconvolve(omega, cauchy_kernel(omega.shape, h), mode="same")
    M = cauchy_moments(tuple(omega.shape), float(h))
    gy, gx = np.gradient(omega, h)
    gyy, _ = np.gradient(gy, h)
    gxy, gxx = np.gradient(gx, h)
    D = {(0, 0): omega, (1, 0): gx, (0, 1): gy, (2, 0): gxx / 2, (1, 1): gxy, (0, 2): gyy / 2}
    return sum(fftconvolve(D[k], M[k], mode="same") for k in _EXPONENTS)


def dbar_fd(u: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central difference (d/dx + i d/dy) / 2; nan within 2 cells of the edge."""
    def d(a, axis):
        out = np.full(a.shape, np.nan + 0j)
        s = [slice(None)] * 2
        core = [slice(None)] * 2
        core[axis] = slice(2, -2)
        def sh(k):
            s2 = list(s)
            s2[axis] = slice(2 + k, a.shape[axis] - 2 + k)
            return a[tuple(s2)]
        out[tuple(core)] = (-sh(2) + 8 * sh(1) - 8 * sh(-1) + sh(-2)) / (12 * h)
        return out
    return 0.5 * (d(u, 1) + 1j * d(u, 0))


def _check_region(grid: GridDomain, band: int = BAND_CELLS) -> np.ndarray:
    if band <= 0:
        return grid.mask.copy()
    return ndimage.binary_erosion(grid.mask, iterations=band)


def _residual(u, form: FormField, check) -> tuple:
    r = np.abs(dbar_fd(u, form.grid.h) - form.omega)
    r = np.where(check, r, np.nan)
    scale = float(np.max(np.abs(form.omega))) if form.support.any() else 1.0
    rel = float(np.nanmax(r)) / scale if np.any(np.isfinite(r)) else 0.0
    return r, rel


def cauchy_transform(form: FormField, grid: GridDomain | None = None,
                     band: int = BAND_CELLS, order: int = 2) -> DbarSolution:
    """u = (1/pi) int omega(w) / (z - w) dA(w), so that dbar u = omega.

    The returned norms are Euclidean sups (no weight); use weighted_solve for
    the weighted estimate.  Use order 0 for cell-averaged data such as
    indicator_form.
    """
    grid = grid or form.grid
    check = _check_region(grid, band)
    if np.any(form.support & ~check):
        raise DbarError("form support touches the boundary band")
    u = _transform(form.omega, grid.h, order)
    r, rel = _residual(u, form, check)
    un = float(np.max(np.abs(u[grid.mask]))) if grid.mask.any() else 0.0
    dn = float(np.max(np.abs(form.omega)))
    return DbarSolution(u=u, residual_field=r, residual=rel, weighted_norm=un, data_norm=dn,
                        constant=un / dn if dn > 0 else 0.0, check=check)


def indicator_form(grid: GridDomain, inside: Callable, nu=None, oversample: int = 8) -> FormField:
    """Form equal to the cell-average of an indicator (fractional cells on the edge)."""
    z = grid.z
    h = grid.h
    off = (np.arange(oversample) + 0.5) / oversample - 0.5
    OX, OY = np.meshgrid(off, off)
    sub = (OX + 1j * OY).ravel() * h
    frac = np.zeros(grid.shape)
    for s in sub:
        frac += inside(z + s)
    frac /= sub.size
    if nu is None:
        nu = np.zeros(grid.shape)
    return make_form(grid, frac.astype(complex), nu)


# ---------------------------------------------------------------------------
# weighted solutions


def _alpha_of(weight):
    a = getattr(weight, "alpha", None)
    if a is not None:
        return float(a)
    inv = getattr(weight, "invariant_fn", None)
    if inv is not None:
        v = np.atleast_1d(inv(np.array([0.0, 0.5, 0.5j])))
        if np.ptp(v) == 0:
            return float(v[0])
    return None


def _is_unit_disk(metric, grid: GridDomain) -> bool:
    if isinstance(metric, DiskModel):
        return True
    src = grid.source
    if src is None or src.connectivity != 1:
        return False
    c = src.outer
    return bool(abs(c.mean()) < 1e-9 and np.ptp(np.abs(c)) < 1e-9 and abs(np.abs(c).max() - 1) < 1e-9)


def _weight_values(weight, grid: GridDomain) -> np.ndarray:
    fn = getattr(weight, "values_fn", None)
    if fn is not None:
        return np.where(grid.mask, fn(grid.z * grid.mask), np.nan)
    vals = getattr(weight, "values", None)
    if vals is None:
        raise DbarError("weighted solve needs weight values")
    return vals


def _disk_correction(form: FormField, N: int, grid: GridDomain, tol: float = 1e-15) -> np.ndarray:
    """Holomorphic part (1/pi) int omega(w) (g(z,w) - 1) / (z - w) dA(w) as a power series in z."""
    if N == 0:
        return np.zeros(grid.shape, dtype=complex)
    sel = form.support
    w = grid.z[sel]
    om = form.omega[sel] * grid.cell_area / np.pi
    a = 1 - np.abs(w) ** 2
    zmax = float(np.max(np.abs(grid.z[grid.mask])))
    q = float(np.max(np.abs(w))) * zmax
    K = 8
    while K < 20000 and (K ** N) * q**K > tol:
        K *= 2
    # (g - 1) / (z - w) = conj(w) sum_{j<N} a^j / (1 - z conj(w))^{j+1}
    coef = np.zeros(K, dtype=complex)
    wb = np.conj(w)
    p = om * wb  # omega conj(w)^{k+1} at k = 0
    aj = [a**j for j in range(N)]
    k = np.arange(K)
    binoms = [comb(k + j, j) for j in range(N)]
    for kk in range(K):
        for j in range(N):
            coef[kk] += binoms[j][kk] * np.sum(p * aj[j])
        p = p * wb
    zz = grid.z[grid.mask]
    out = np.zeros(zz.shape, dtype=complex)
    for kk in range(K - 1, -1, -1):
        out = out * zz + coef[kk]
    res = np.zeros(grid.shape, dtype=complex)
    res[grid.mask] = out
    return res


def _weighted_stats(u, form: FormField, phi, check):
    ew = np.exp(-np.where(check, phi, np.inf))
    un = float(np.max(np.abs(u) * ew))
    dn = float(np.max(np.where(form.support, form.norm, 0.0) * ew))
    return un, dn


def weighted_solve(form: FormField, weight, metric, zeros=None, compact=None, tol: float = 1e-3,
                   period_tol: float = 0.5, band: int = BAND_CELLS) -> DbarSolution:
    """Solve dbar u = omega with the sup-weighted estimate measured.

    On the unit disk with an invariant weight alpha (2 alpha an integer) the
    covariant kernel is used and ``zeros`` is ignored.  Otherwise ``zeros``
    (the multiplier's zero set, e.g. from atomize_riesz_measure) must avoid
    the compact ``compact`` (default: the support of omega grown by 2 cells).
    """
    grid = form.grid
    check = _check_region(grid, band)
    if not form.support.any():
        z0 = np.zeros(grid.shape, dtype=complex)
        return DbarSolution(u=z0, residual_field=np.where(check, 0.0, np.nan), residual=0.0,
                            weighted_norm=0.0, data_norm=0.0, constant=0.0, check=check)
    if np.any(form.support & ~check):
        raise DbarError("form support touches the boundary band")
    phi = _weight_values(weight, grid)
    alpha = _alpha_of(weight)
    extras = {}
    if alpha is not None and _is_unit_disk(metric, grid) and float(2 * alpha).is_integer():
        N = int(round(2 * alpha - 1))
        u = _transform(form.omega, grid.h) + _disk_correction(form, N, grid)
        extras["method"] = "covariant kernel"
        extras["kernel_power"] = N
    else:
        u, extras = _multiplier_solve(form, phi, grid, zeros, compact, check, period_tol)
    r, rel = _residual(u, form, check)
    if rel > tol:
        raise DbarError(f"residual {rel:.3g} exceeds tolerance {tol:.3g}")
    un, dn = _weighted_stats(u, form, phi, check)
    return DbarSolution(u=u, residual_field=r, residual=rel, weighted_norm=un, data_norm=dn,
                        constant=un / dn if dn > 0 else 0.0, check=check, extras=extras)


def _hole_flux(values: np.ndarray, region_mask: np.ndarray, hole: np.ndarray, h: float) -> float:
    """Flux of grad(values) around a hole, via -int grad(values) . grad(eta) for a cutoff eta."""
    d = ndimage.distance_transform_edt(~hole) * h
    eta = np.clip(1 - (d - h) / (4 * h), 0, 1)
    gy, gx = np.gradient(np.where(region_mask, values, 0.0), h)
    ey, ex = np.gradient(eta, h)
    ring = region_mask & (eta > 0) & (eta < 1)
    ring = ring & ndimage.binary_erosion(region_mask)
    return float(-np.sum((gx * ex + gy * ey)[ring]) * h * h)


def _multiplier_solve(form, phi, grid, zeros, compact, check, period_tol):
    """u = f T[omega / f], f = prod (z - sigma) prod (z - a_j)^{k_j} e^{H}."""
    if compact is None:
        compact = ndimage.binary_dilation(form.support, iterations=2)
    if zeros is None:
        zeros = np.zeros(0, dtype=complex)
    zeros = np.asarray(getattr(zeros, "points", zeros), dtype=complex).ravel()
    if zeros.size:
        ii = np.clip(np.round((zeros.imag - grid.y0) / grid.h).astype(int), 0, grid.shape[0] - 1)
        jj = np.clip(np.round((zeros.real - grid.x0) / grid.h).astype(int), 0, grid.shape[1] - 1)
        if np.any(compact[ii, jj]):
            raise DbarError("a multiplier zero lies inside the compact set K")
    z = grid.z
    # f lives on a region two cells wider than the check set, for the residual stencil
    region_mask = ndimage.binary_dilation(check, iterations=2) & grid.mask
    logB = np.zeros(grid.shape, dtype=complex)
    for s in zeros:
        logB += np.log(z - s + (z == s) * 1e-300)
    # harmonic Re H with Re H = phi - log|B| on the region boundary
    from .potential import mask_region

    reg = mask_region(grid, region_mask)
    ops = _fd.build_operators(reg)
    target = np.where(region_mask, phi - logB.real, np.nan)
    filled = np.nan_to_num(target[tuple(ndimage.distance_transform_edt(
        ~region_mask, return_distances=False, return_indices=True))])
    interp = RegularGridInterpolator((grid.ys, grid.xs), filled, bounds_error=False, fill_value=None)

    def bvals(p):
        return interp(np.column_stack([p.imag, p.real]))

    ReH = _fd.scatter(reg, _fd.solve_poisson(ops, np.zeros(reg.size), bvals), fill=0.0)
    # holes of the region: integer winding factors absorb the periods
    lab, nlab = ndimage.label(~region_mask)
    outside = set(np.unique(np.concatenate([lab[0], lab[-1], lab[:, 0], lab[:, -1]])))
    holes = [k for k in range(1, nlab + 1) if k not in outside]
    windings = []
    defect = 0.0
    for k in holes:
        hole = lab == k
        flux = _hole_flux(ReH, region_mask, hole, grid.h)
        c = flux / (2 * np.pi)
        n_int = int(np.round(c))
        defect = max(defect, abs(c - n_int))
        a = complex(np.mean(z[hole]))
        windings.append((a, n_int, c))
        ReH = ReH - c * np.log(np.abs(z - a) + (z == a))
    if defect > period_tol:
        raise DbarError(f"harmonic conjugate period defect {defect:.3g} above tolerance")
    ImH = _fd.harmonic_conjugate(ReH, region_mask, grid.h)
    logf = logB + ReH + 1j * ImH
    for a, n_int, _ in windings:
        logf = logf + n_int * np.log(z - a + (z == a))
    # scale out the largest modulus over the support to keep exp in range
    shift = float(np.max(logf.real[form.support]))
    f = np.where(region_mask, np.exp(logf - shift), 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(form.support, form.omega / f, 0)
    u = np.where(region_mask, f * _transform(g, grid.h), 0)
    extras = {"method": "multiplier", "zeros": int(zeros.size), "period_defect": defect,
              "windings": [int(n) for _, n, _ in windings]}
    return u, extras


# ---------------------------------------------------------------------------
# test families and constants


def bump(grid: GridDomain, center: complex, radius: float, alpha: float = 1.0, phase: complex = 1.0):
    """Covariant bump: the radial profile (1 - s^2)^6, s = d(0, w)/radius, moved to ``center``.

    omega_c = b(M w) conj(M'(w)) M'(w)^alpha with M(w) = (c - w) / (1 - conj(c) w); the
    constant phase of M'^alpha is dropped.
    """
    z = np.where(grid.mask, grid.z, 0)
    c = complex(center)
    Mw = (c - z) / (1 - np.conj(c) * z)
    d = 2 * np.arctanh(np.minimum(np.abs(Mw), 1 - 1e-16))
    s = d / radius
    b = np.where(s < 1, (1 - np.minimum(s, 1.0) ** 2) ** 6, 0.0)
    dM = -(1 - abs(c) ** 2) / (1 - np.conj(c) * z) ** 2
    cocycle = (1 - abs(c) ** 2) ** alpha * (1 - np.conj(c) * z) ** (-2 * alpha)
    om = phase * b * np.conj(dM) * cocycle
    om = np.where(grid.mask & (b > 0), om, 0)
    return disk_form(grid, om)


def bump_family(grid: GridDomain, count: int = 10, radius: float = 1.5, spread: float = 2.0,
                alpha: float = 1.0, relocate=None):
    """``count`` covariant bumps centred at hyperbolic distances 0..spread on a golden-angle spiral.

    ``relocate`` (a disk automorphism) moves every centre, for invariance checks.
    """
    d = np.linspace(0.0, spread, count)
    th = np.arange(count) * np.pi * (3 - np.sqrt(5))
    centers = np.tanh(d / 2) * np.exp(1j * th)
    if relocate is not None:
        centers = np.asarray(relocate(centers))
    return [bump(grid, c, radius, alpha) for c in centers], centers


def lp_ratio(sol: DbarSolution, form: FormField, phi: np.ndarray, nu: np.ndarray, p: float) -> float:
    """int |u|^p e^{-phi} dA / int <omega>^p e^{-phi} dA with the hyperbolic area density."""
    check = sol.check
    dens = np.exp(2 * np.where(check, nu, 0.0) - np.where(check, phi, 0.0))
    num = np.sum(np.where(check, np.abs(sol.u) ** p * dens, 0.0))
    den = np.sum(np.where(check & form.support, form.norm**p * dens, 0.0))
    return float(num / den) if den > 0 else 0.0


def measure_dbar_constant(forms, weight, metric, p: float = np.inf, **kw) -> float:
    """Largest measured ratio over the family (sup norms for p = inf)."""
    forms = list(forms)
    if not forms:
        raise DbarError("empty test family")
    ratios = []
    for form in forms:
        sol = weighted_solve(form, weight, metric, **kw)
        if np.isinf(p):
            ratios.append(sol.constant)
        else:
            if not form.support.any():
                ratios.append(0.0)
                continue
            grid = form.grid
            phi = _weight_values(weight, grid)
            nu = disk_nu(grid.z * grid.mask) if _is_unit_disk(metric, grid) else metric.nu
            ratios.append(lp_ratio(sol, form, phi, nu, p))
    return float(max(ratios))


# ---------------------------------------------------------------------------
# patching local interpolants


@dataclass(frozen=True)
class LocalChart:
    """A chart mask with a local interpolation solver (points, values) -> lattice."""

    mask: np.ndarray
    solve: Callable


@dataclass(frozen=True)
class PatchResult:
    function: np.ndarray
    errors: list  # weighted max data error after each round
    contraction: list  # measured per-round ratio epsilon
    rounds: int
    local_norm: float
    norm: float


def _sample(lattice: np.ndarray, grid: GridDomain, pts: np.ndarray) -> np.ndarray:
    q = np.column_stack([pts.imag, pts.real])
    re = RegularGridInterpolator((grid.ys, grid.xs), lattice.real, method="cubic")(q)
    im = RegularGridInterpolator((grid.ys, grid.xs), lattice.imag, method="cubic")(q)
    return re + 1j * im


def kernel_local_chart(grid: GridDomain, mask: np.ndarray, alpha: float, beta: float | None = None):
    """Local interpolation by normalized disk kernels (1 - |l|^2)^{beta - alpha} / (1 - conj(l) z)^beta."""
    beta = 2 * alpha + 2 if beta is None else beta
    z = grid.z

    def solve(points, values):
        lam = np.asarray(points, dtype=complex)
        if lam.size == 0:
            return np.zeros(grid.shape, dtype=complex)
        scale = (1 - np.abs(lam) ** 2) ** (beta - alpha)
        G = scale[None, :] / (1 - np.conj(lam)[None, :] * lam[:, None]) ** beta
        c = np.linalg.solve(G, np.asarray(values, dtype=complex))
        out = np.zeros(grid.shape, dtype=complex)
        for lj, cj, sj in zip(lam, c, scale):
            out += cj * sj / (1 - np.conj(lj) * z) ** beta
        return np.where(grid.mask, out, 0)

    return LocalChart(mask=mask, solve=solve)


def patch_interpolant(local, cutoffs, weight, metric, points, data, max_rounds: int = 20,
                      tol: float = 1e-6, band: int = BAND_CELLS, grid: GridDomain | None = None
                      ) -> PatchResult:
    """Glue local interpolants with cutoffs and correct by dbar until the data are met.

    Each round: F = sum chi_j f_j, solve dbar u = dbar F, take h = F - u (holomorphic;
    the sign is fixed so that dbar h = 0), then interpolate the remaining error.
    Raises when the measured contraction epsilon reaches 1/2.
    """
    charts = list(local)
    chis = [np.asarray(c, dtype=float) for c in cutoffs]
    if len(charts) != len(chis) or not charts:
        raise DbarError("one cutoff per chart is required")
    pts = np.asarray(getattr(points, "points", points), dtype=complex)
    data = np.asarray(data, dtype=complex)
    if grid is None:
        grid = getattr(weight, "grid", None) or getattr(metric, "grid", None)
    if grid is None:
        raise DbarError("patching needs a grid")
    total_chi = sum(chis)
    if np.max(np.abs(total_chi - 1)[grid.mask]) > 1e-9:
        raise DbarError("cutoffs do not cover the domain (sum differs from 1)")
    for chart, chi in zip(charts, chis):
        if np.any((chi > 0) & grid.mask & ~chart.mask):
            raise DbarError("cutoff not subordinate to its chart")
    iy = np.clip(np.round((pts.imag - grid.y0) / grid.h).astype(int), 0, grid.shape[0] - 1)
    ix = np.clip(np.round((pts.real - grid.x0) / grid.h).astype(int), 0, grid.shape[1] - 1)
    at_pts = np.array([chi[iy, ix] for chi in chis])
    if np.any(np.max(at_pts, axis=0) < 1 - 1e-9):
        raise DbarError("every point must lie in the plateau of one cutoff")
    phi = _weight_values(weight, grid)
    ew_pts = np.exp(-_sample(np.nan_to_num(phi).astype(complex), grid, pts).real)
    check = _check_region(grid, band)
    ew = np.exp(-np.where(check, phi, np.inf))
    nu = disk_nu(grid.z * grid.mask) if _is_unit_disk(metric, grid) else metric.nu

    def assemble(values):
        F = np.zeros(grid.shape, dtype=complex)
        dF = np.zeros(grid.shape, dtype=complex)
        local_norm = 0.0
        for chart, chi in zip(charts, chis):
            own = chi[iy, ix] > 0
            f = chart.solve(pts[own], values[own])
            local_norm = max(local_norm, float(np.max(np.abs(f) * ew * (chi > 0))))
            F += chi * f
            dF += f * np.nan_to_num(dbar_fd(chi.astype(complex), grid.h))
        return F, dF, local_norm

    def correct(values):
        F, dF, local_norm = assemble(values)
        # the band is dropped; there <dbar chi> e^{-phi} is negligible for cutoffs away from the rim
        dF = np.where(ndimage.binary_erosion(check, iterations=1), dF, 0)
        if np.max(np.abs(dF)) == 0:
            return F, local_norm
        form = make_form(grid, dF, nu)
        sol = weighted_solve(form, weight, metric, tol=np.inf, band=band)
        return F - sol.u, local_norm

    total = np.zeros(grid.shape, dtype=complex)
    remaining = data.copy()
    scale = float(np.max(np.abs(data) * ew_pts)) or 1.0
    errors, eps = [], []
    local_norm0 = None
    for rnd in range(max_rounds):
        h, ln = correct(remaining)
        if local_norm0 is None:
            local_norm0 = ln
        total = total + h
        prev = float(np.max(np.abs(remaining) * ew_pts))
        remaining = data - _sample(total, grid, pts)
        err = float(np.max(np.abs(remaining) * ew_pts))
        errors.append(err / scale)
        e = err / prev if prev > 0 else 0.0
        eps.append(e)
        if e >= 0.5:
            raise DbarError(f"correction ratio {e:.3g} >= 1/2: the geometric series diverges")
        if err / scale <= tol:
            break
    norm = float(np.max(np.abs(total) * ew))
    return PatchResult(function=total, errors=errors, contraction=eps, rounds=len(errors),
                       local_norm=float(local_norm0), norm=norm)
