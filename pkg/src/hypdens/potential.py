"""Green functions, Riesz measures and Green energies on grid regions.

Normalization: the Riesz measure of phi is Lap(phi) / (2 pi) dA, so that a
unit point mass has potential log(1/|z - w|) and the disk weight
alpha * log(1/(1 - |z|^2)) gives Green energy 2 alpha log cosh(r/2) on D(0, r).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _fd
from .geometry import DIRECTIONS, GridDomain
from .metric import HyperbolicDisk, MetricField, distance_field, min_pair_distance

POLE_CLEARANCE = 2.0  # in grid spacings
SINGULAR_CELLS = 2.0


@dataclass(frozen=True)
class GreenField:
    pole: complex
    region: _fd.Region
    values: np.ndarray  # nan off the region; +inf never stored (pole is off-node or replaced)
    harmonic: np.ndarray  # the smooth correction H = g - log(1/|w - pole|)

    @property
    def grid(self) -> GridDomain:
        return self.region.grid

    @property
    def mask(self) -> np.ndarray:
        return self.region.mask

    def at(self, w) -> np.ndarray:
        """g(pole, w) for points in the region, via bilinear interpolation of the correction."""
        from scipy.interpolate import RegularGridInterpolator
        from scipy import ndimage

        w = np.asarray(w, dtype=complex)
        grid = self.grid
        H = self.harmonic
        idx = ndimage.distance_transform_edt(~self.mask, return_distances=False, return_indices=True)
        filled = np.nan_to_num(H[idx[0], idx[1]])
        f = RegularGridInterpolator((grid.ys, grid.xs), filled, bounds_error=False, fill_value=None)
        flat = w.ravel()
        val = f(np.column_stack([flat.imag, flat.real])) - np.log(np.abs(flat - self.pole))
        return np.maximum(val, 0.0).reshape(w.shape)


@dataclass(frozen=True)
class MeasureField:
    grid: GridDomain
    density: np.ndarray  # d mu / dA (Euclidean), zero off the mask
    total_mass: float
    # optional smooth factorization density = hyperbolic_density / u^2, used for sub-cell quadrature
    hyperbolic_density: np.ndarray | None = field(default=None, repr=False, compare=False)
    metric: MetricField | None = field(default=None, repr=False, compare=False)

    def restricted(self, mask: np.ndarray) -> "MeasureField":
        d = np.where(mask, self.density, 0.0)
        hd = None if self.hyperbolic_density is None else np.where(mask, self.hyperbolic_density, 0.0)
        return MeasureField(grid=self.grid, density=d, total_mass=float(d.sum() * self.grid.cell_area),
                            hyperbolic_density=hd, metric=self.metric)

    def scaled(self, c: float) -> "MeasureField":
        d = c * self.density
        hd = None if self.hyperbolic_density is None else c * self.hyperbolic_density
        return MeasureField(grid=self.grid, density=d, total_mass=float(d.sum() * self.grid.cell_area),
                            hyperbolic_density=hd, metric=self.metric)

    def density_at(self, w: np.ndarray) -> np.ndarray:
        """Euclidean density at arbitrary points (smooth factorization when available)."""
        from scipy.interpolate import RegularGridInterpolator

        g = self.grid
        pts = np.column_stack([w.imag, w.real])
        if self.hyperbolic_density is not None and self.metric is not None:
            f = RegularGridInterpolator((g.ys, g.xs), _nearest_fill(self.hyperbolic_density, g.mask),
                                        bounds_error=False, fill_value=0.0)
            u = self.metric.u_at(w)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(u > 0, f(pts) / np.maximum(u, 1e-300) ** 2, 0.0)
        f = RegularGridInterpolator((g.ys, g.xs), self.density, bounds_error=False, fill_value=0.0)
        return f(pts)


def _nearest_fill(lattice: np.ndarray, mask: np.ndarray) -> np.ndarray:
    from scipy import ndimage

    idx = ndimage.distance_transform_edt(~mask, return_distances=False, return_indices=True)
    return np.nan_to_num(lattice[idx[0], idx[1]])


def mask_region(grid: GridDomain, mask: np.ndarray) -> _fd.Region:
    """Region for a bare node mask: Dirichlet data at the first excluded node or crossing."""
    base = _fd.domain_region(grid)
    m = base.mask & mask
    arms = np.ones_like(base.arms)
    for k, (di, dj) in enumerate(DIRECTIONS):
        edge = m & ~np.roll(m, shift=(-di, -dj), axis=(0, 1))
        arms[k] = np.where(edge, np.minimum(base.arms[k], 1.0), 1.0)
    return _fd.Region(grid=grid, mask=m, arms=arms)


def as_region(region, grid: GridDomain | None = None) -> _fd.Region:
    if isinstance(region, _fd.Region):
        return region
    if isinstance(region, HyperbolicDisk):
        return region.region
    if grid is None:
        raise ValueError("a bare mask needs its grid")
    return mask_region(grid, np.asarray(region, dtype=bool))


def green_function(region, pole: complex, grid: GridDomain | None = None) -> GreenField:
    """Green function of a sub-region with logarithmic pole, zero on the region boundary."""
    reg = as_region(region, grid)
    g = reg.grid
    if grid is not None and grid is not g:
        raise ValueError("region and grid are incompatible")
    pole = complex(pole)
    i, j = g.index_of(pole)
    if not (0 <= i < g.shape[0] and 0 <= j < g.shape[1]) or not reg.mask[i, j]:
        raise ValueError(f"pole {pole} is outside the region")
    ops = _fd.build_operators(reg)
    bpts = [p for p in ops.bpoints if p.size]
    if bpts:
        dmin = float(np.min(np.abs(np.concatenate(bpts) - pole)))
        if dmin < POLE_CLEARANCE * g.h:
            raise ValueError(f"pole {pole} is within {POLE_CLEARANCE:g}h of the region boundary")
    H = _fd.solve_poisson(ops, np.zeros(reg.size), boundary_fn=lambda p: np.log(np.abs(p - pole)))
    Hl = _fd.scatter(reg, H)
    with np.errstate(divide="ignore"):
        vals = Hl - np.log(np.abs(g.z - pole))
    vals[~reg.mask] = np.nan
    return GreenField(pole=pole, region=reg, values=vals, harmonic=Hl)


def riesz_measure(weight, grid: GridDomain | None = None) -> MeasureField:
    grid = weight.grid if grid is None else grid
    lap = np.where(grid.mask, weight.laplacian_density, 0.0)
    if np.any(lap < -1e-12 * max(1.0, np.abs(lap).max())):
        raise ValueError("negative Laplacian: the weight is not subharmonic")
    dens = np.maximum(lap, 0.0) / (2 * np.pi)
    hyp = np.where(grid.mask, np.maximum(np.nan_to_num(weight.invariant_laplacian), 0.0), 0.0) / (2 * np.pi)
    return MeasureField(grid=grid, density=dens, total_mass=float(dens.sum() * grid.cell_area),
                        hyperbolic_density=hyp, metric=getattr(weight, "metric", None))


def _log_cell_integral(x0, x1, y0, y1):
    """Integral of log(1/r) over the rectangle [x0,x1] x [y0,y1]."""

    def F(x, y):
        r2 = x * x + y * y
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(r2 > 0, x * y * np.log(r2), 0.0) - 3 * x * y
            t = t + np.where(x != 0, x * x * np.arctan(y / np.where(x != 0, x, 1)), 0.0)
            t = t + np.where(y != 0, y * y * np.arctan(x / np.where(y != 0, y, 1)), 0.0)
        return t  # antiderivative of log(x^2 + y^2)

    s = F(x1, y1) - F(x0, y1) - F(x1, y0) + F(x0, y0)
    return -0.5 * s


def _extended_green(g: GreenField) -> np.ndarray:
    """g on the region, linearly continued (negative) to the adjacent outside nodes."""
    reg = g.region
    vals = np.where(reg.mask & np.isfinite(g.values), g.values, 0.0)
    acc = np.zeros(vals.shape)
    cnt = np.zeros(vals.shape)
    for k, (di, dj) in enumerate(DIRECTIONS):
        nb_out = ~np.roll(reg.mask, shift=(-di, -dj), axis=(0, 1))
        src = reg.mask & nb_out
        a = np.clip(reg.arms[k], 0.05, 1.0)
        ext = np.where(src, -vals * (1 - a) / a, 0.0)
        acc += np.roll(ext, shift=(di, dj), axis=(0, 1))
        cnt += np.roll(src.astype(float), shift=(di, dj), axis=(0, 1))
    out = np.where(cnt > 0, acc / np.maximum(cnt, 1), np.nan)
    out[reg.mask] = vals[reg.mask]
    assigned = np.isfinite(out)
    return _nearest_fill(np.where(assigned, out, 0.0), assigned)


def green_energy(g: GreenField, mu: MeasureField, region=None, rim_cells: float = 8.0,
                 sub: int = 6) -> float:
    """Integral of g dmu over the region.

    Cells within 2h of the pole integrate the logarithm exactly against a
    locally constant density.  Cells near the region rim, or where the
    conformal factor varies quickly, are integrated with sub-cell sampling
    of the linearly continued g and of the smooth density factorization.
    """
    from scipy.interpolate import RegularGridInterpolator
    from scipy import ndimage

    if mu.grid.shape != g.grid.shape or mu.grid.h != g.grid.h or mu.grid.x0 != g.grid.x0:
        raise ValueError("green field and measure live on incompatible grids")
    grid = g.grid
    h = grid.h
    reg_mask = g.mask if region is None else (as_region(region, grid).mask & g.mask)
    near = reg_mask & (np.abs(grid.z - g.pole) <= SINGULAR_CELLS * h)
    rim = ndimage.binary_dilation(reg_mask) & ~ndimage.binary_erosion(reg_mask, iterations=2)
    if mu.metric is not None:
        rim |= reg_mask & (mu.metric.u < rim_cells * h)
    rim &= ~near
    plain = reg_mask & ~rim & ~near
    total = float(np.sum(np.where(plain, g.values, 0.0) * np.where(plain, mu.density, 0.0)) * h * h)
    if near.any():
        zc = grid.z[near] - g.pole
        logint = _log_cell_integral(zc.real - h / 2, zc.real + h / 2, zc.imag - h / 2, zc.imag + h / 2)
        total += float(np.sum((logint + g.harmonic[near] * h * h) * mu.density[near]))
    if rim.any():
        with np.errstate(divide="ignore"):
            gext = _extended_green(g) + np.log(np.abs(grid.z - g.pole))
        gext = np.where(g.mask, np.nan_to_num(g.harmonic), gext)  # smooth part
        f = RegularGridInterpolator((grid.ys, grid.xs), gext, bounds_error=False, fill_value=None)
        off = (np.arange(sub) + 0.5) / sub - 0.5
        ox, oy = np.meshgrid(off, off)
        o = (ox + 1j * oy).ravel() * h
        total += _rim_sum(grid.z[rim], o, f, g.pole, mu, region is not None and reg_mask, grid) * h * h / sub**2
    return total


def _rim_sum(centers, offsets, smooth_interp, pole, mu, restrict, grid, chunk=20000):
    out = 0.0
    for s0 in range(0, centers.size, chunk):
        w = (centers[s0:s0 + chunk, None] + offsets[None, :]).ravel()
        gv = smooth_interp(np.column_stack([w.imag, w.real])) - np.log(np.abs(w - pole))
        gv = np.maximum(gv, 0.0)
        if restrict is not False and restrict is not None:
            i = np.clip(np.rint((w.imag - grid.y0) / grid.h).astype(int), 0, grid.shape[0] - 1)
            j = np.clip(np.rint((w.real - grid.x0) / grid.h).astype(int), 0, grid.shape[1] - 1)
            gv = np.where(restrict[i, j], gv, 0.0)
        out += float(np.sum(gv * mu.density_at(w)))
    return out


# ---------------------------------------------------------------------------
# atomization


@dataclass(frozen=True)
class AtomizationResult:
    zeros: np.ndarray  # complex
    masses: np.ndarray  # 1 for every zero
    leftover: float
    separation: float
    flags: tuple = ()


def atomize_riesz_measure(mu: MeasureField, metric: MetricField, center: complex | None = None,
                          distance=None) -> AtomizationResult:
    """Greedy unit-mass clusters swept outward from ``center`` (hyperbolic shells, then angle)."""
    grid = mu.grid
    if np.any(mu.density < 0):
        raise ValueError("negative density")
    h2 = grid.cell_area
    cells = np.flatnonzero((mu.density > 0) & grid.mask)
    mass = mu.density.ravel()[cells] * h2
    total = float(mass.sum())
    if total < 1.0:
        return AtomizationResult(zeros=np.zeros(0, complex), masses=np.zeros(0), leftover=total,
                                 separation=float("inf"))
    if center is None:
        center = complex(np.sum(grid.z.ravel()[cells] * mass) / total)
        if not grid.contains(center):
            center = complex(grid.z.ravel()[cells[np.argmax(mass)]])
    if distance is None:
        distance = distance_field(metric, center)
    T = distance.values.ravel()[cells]
    T = np.nan_to_num(T, nan=np.inf)
    shell = np.floor(T).astype(np.int64, copy=False) if np.all(np.isfinite(T)) else np.floor(np.minimum(T, 1e9))
    z = grid.z.ravel()[cells]
    ang = np.angle(z - center)
    order = np.lexsort((cells, ang, shell))
    zeros = []
    acc_m = 0.0
    acc_z = 0.0j
    for k in order:
        m = mass[k]
        w = z[k]
        while acc_m + m >= 1.0 - 1e-12:
            take = 1.0 - acc_m
            acc_z += take * w
            zeros.append(acc_z)
            m -= take
            acc_m, acc_z = 0.0, 0.0j
        acc_m += m
        acc_z += m * w
    zeros = np.array(zeros, dtype=complex)
    sep = 0.5 * min_pair_distance(zeros, metric)
    flags = ("not separated",) if sep <= 1e-9 else ()
    return AtomizationResult(zeros=zeros, masses=np.ones(len(zeros)), leftover=float(acc_m),
                             separation=sep, flags=flags)


def green_potential(mu: MeasureField, region=None) -> np.ndarray:
    """U(x) = integral of g(x, w) dmu(w) on the region: Lap U = -2 pi mu, U = 0 on the rim."""
    reg = _fd.domain_region(mu.grid) if region is None else as_region(region, mu.grid)
    ops = _fd.build_operators(reg)
    rhs = -2 * np.pi * mu.density[reg.mask]
    U = _fd.solve_poisson(ops, rhs, boundary_fn=lambda p: np.zeros(p.shape))
    return _fd.scatter(reg, U)


def counting_potential(points: np.ndarray, grid: GridDomain, region=None) -> np.ndarray:
    """Sum over points of the Green function g(., sigma) of the region."""
    reg = _fd.domain_region(grid) if region is None else as_region(region, grid)
    pts = np.asarray(points, dtype=complex)
    ops = _fd.build_operators(reg)

    def bdata(p):
        return np.sum(np.log(np.abs(p[:, None] - pts[None, :])), axis=1)

    H = _fd.solve_poisson(ops, np.zeros(reg.size), boundary_fn=bdata)
    Hl = _fd.scatter(reg, H)
    zm = grid.z[reg.mask]
    with np.errstate(divide="ignore"):
        logs = -np.sum(np.log(np.abs(zm[:, None] - pts[None, :])), axis=1)
    out = np.full(grid.shape, np.nan)
    out[reg.mask] = Hl[reg.mask] + logs
    return out


def potential_mismatch(mu: MeasureField, zeros, metric: MetricField, eps: float,
                       compact: np.ndarray | None = None) -> float:
    """sup over the compact minus eps-neighbourhoods of zeros of |G mu - sum g(., sigma)|."""
    grid = mu.grid
    zeros = np.asarray(zeros, dtype=complex)
    if zeros.size == 0 and mu.total_mass == 0:
        return 0.0
    if not eps > 0:
        raise ValueError("eps must be positive")
    U = green_potential(mu)
    V = counting_potential(zeros, grid) if zeros.size else np.where(grid.mask, 0.0, np.nan)
    keep = grid.mask.copy() if compact is None else (grid.mask & compact)
    if zeros.size:
        # hyperbolic eps-neighbourhoods, approximated by the local conformal density
        lam = 1.0 / np.maximum(metric.u_at(zeros), 1e-12)
        from scipy.spatial import cKDTree

        tree = cKDTree(np.column_stack([zeros.real, zeros.imag]))
        zk = grid.z[keep]
        dist, nn = tree.query(np.column_stack([zk.real, zk.imag]), k=1)
        far = dist * lam[nn] > eps
        sel = np.flatnonzero(keep.ravel())[far]
        keep = np.zeros(grid.shape, bool)
        keep.ravel()[sel] = True
    diff = np.abs(U - V)[keep]
    diff = diff[np.isfinite(diff)]
    return float(diff.max()) if diff.size else 0.0
