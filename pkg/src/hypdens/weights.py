"""Subharmonic weights, stored primarily through their Laplacian density.

Conventions: ``laplacian_density`` is the Euclidean Laplacian of phi, and
``invariant_laplacian`` is exp(-2 nu) times it.  Off the interior mask both
lattices hold nan.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import _fd
from .metric import MetricField

BAND_CELLS = 4


@dataclass(frozen=True)
class Weight:
    metric: MetricField
    laplacian_density: np.ndarray
    invariant_laplacian: np.ndarray
    values: Optional[np.ndarray] = None
    label: str = "weight"
    threshold: float = 1.0
    # exact callables on the model disk (z -> value); None on general domains
    invariant_fn: Optional[Callable] = field(default=None, repr=False, compare=False)
    values_fn: Optional[Callable] = field(default=None, repr=False, compare=False)

    @property
    def grid(self):
        return self.metric.grid

    def scaled(self, c: float) -> "Weight":
        """The weight c * phi."""
        if c <= 0:
            raise ValueError("scale must be positive")
        inv_fn = self.invariant_fn
        val_fn = self.values_fn
        return replace(
            self,
            laplacian_density=c * self.laplacian_density,
            invariant_laplacian=c * self.invariant_laplacian,
            values=None if self.values is None else c * self.values,
            label=f"{c:g}*{self.label}",
            invariant_fn=None if inv_fn is None else (lambda z: c * inv_fn(z)),
            values_fn=None if val_fn is None else (lambda z: c * val_fn(z)),
        )


def _is_disk(metric: MetricField) -> bool:
    spec = metric.grid.source
    if spec.connectivity != 1:
        return False
    r = np.abs(spec.outer)
    return bool(np.abs(r - 1).max() < 1e-9 and np.abs(spec.outer.mean()) < 1e-9)


def poisson_values(metric: MetricField, laplacian_density: np.ndarray) -> np.ndarray:
    """phi with the given Laplacian and zero boundary data (defined up to harmonic terms)."""
    region = _fd.domain_region(metric.grid)
    ops = _fd.build_operators(region)
    phi = _fd.solve_poisson(ops, laplacian_density[region.mask], boundary_fn=lambda p: np.zeros(p.shape))
    return _fd.scatter(region, phi)


def from_laplacian(metric: MetricField, laplacian_density: np.ndarray, values=None,
                   label: str = "weight", with_values: bool = False) -> Weight:
    mask = metric.grid.mask
    lap = np.where(mask, laplacian_density, np.nan)
    inv = lap * np.exp(-2 * metric.nu)
    if values is None and with_values:
        values = poisson_values(metric, np.where(mask, lap, 0.0))
    return Weight(metric=metric, laplacian_density=lap, invariant_laplacian=inv,
                  values=values, label=label)


def model_weight_alpha(metric: MetricField, alpha: float, with_values: bool = True) -> Weight:
    """The weight with invariant Laplacian identically alpha."""
    if not alpha > 0:
        raise ValueError("alpha must be positive (the lower Laplacian bound fails otherwise)")
    mask = metric.grid.mask
    dens = np.exp(2 * metric.nu)
    lap = alpha * dens
    inv = np.where(mask, alpha, np.nan)
    values = None
    values_fn = None
    invariant_fn = None
    if _is_disk(metric):
        # phi = alpha * log(1 / (1 - |z|^2)) has Laplacian 4 alpha / (1 - |z|^2)^2
        values_fn = lambda z: alpha * -np.log1p(-np.abs(z) ** 2)
        invariant_fn = lambda z: np.full(np.shape(z), float(alpha))
        if with_values:
            values = np.where(mask, values_fn(metric.grid.z * mask), np.nan)
    elif with_values:
        values = poisson_values(metric, np.where(mask, lap, 0.0))
    return Weight(metric=metric, laplacian_density=lap, invariant_laplacian=inv, values=values,
                  label=f"alpha={alpha:g}", invariant_fn=invariant_fn, values_fn=values_fn)


def laplacian_bounds(weight: Weight, band_cells: int = BAND_CELLS):
    """(lower, upper, admissible) of the invariant Laplacian away from a 4h boundary band."""
    grid = weight.grid
    keep = grid.mask & (grid.boundary_distance > band_cells * grid.h)
    vals = weight.invariant_laplacian[keep]
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return 0.0, float("inf"), False
    lo, hi = float(vals.min()), float(vals.max())
    return lo, hi, bool(lo > 1e-9 and np.isfinite(hi))


def lp_shift(weight: Weight, p: float, phi0: Weight, margin: float = 0.05) -> Weight:
    """phi - phi0 with the 1/p classifier threshold attached."""
    if not p >= 1 or not np.isfinite(p):
        raise ValueError("p must satisfy 1 <= p < inf")
    grid = weight.grid
    keep = grid.mask & (grid.boundary_distance > BAND_CELLS * grid.h)
    inv0 = phi0.invariant_laplacian[keep]
    if np.any(np.abs(inv0 - 1.0) > 0.05):
        raise ValueError("phi0 must have invariant Laplacian 1 within 5%")
    if np.any(weight.invariant_laplacian[keep] <= 1.0 + margin):
        raise ValueError(f"weight's invariant Laplacian is not strictly bigger than 1 (margin {margin})")
    lap = weight.laplacian_density - phi0.laplacian_density
    inv = weight.invariant_laplacian - phi0.invariant_laplacian
    values = None
    if weight.values is not None and phi0.values is not None:
        values = weight.values - phi0.values
    inv_fn = None
    if weight.invariant_fn is not None and phi0.invariant_fn is not None:
        f1, f0 = weight.invariant_fn, phi0.invariant_fn
        inv_fn = lambda z: f1(z) - f0(z)
    val_fn = None
    if weight.values_fn is not None and phi0.values_fn is not None:
        g1, g0 = weight.values_fn, phi0.values_fn
        val_fn = lambda z: g1(z) - g0(z)
    return Weight(metric=weight.metric, laplacian_density=lap, invariant_laplacian=inv,
                  values=values, label=f"({weight.label})-({phi0.label})", threshold=1.0 / p,
                  invariant_fn=inv_fn, values_fn=val_fn)


# ---------------------------------------------------------------------------
# associated pairs on funnel coordinate disks


def smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3 - 2 * t)


def cutoff_chi(zeta: np.ndarray, R: float, profile=smoothstep) -> np.ndarray:
    """0 on |zeta| < 1, 1 on |zeta| > e^{R/2}, profile in log|zeta| between."""
    s = np.log(np.maximum(np.abs(zeta), 1e-300)) / (R / 2)
    return profile(s)


def psi_radial(zeta: np.ndarray, R: float) -> np.ndarray:
    """Bounded radial solution of Lap psi = 1 on |zeta| < e^{R/2}, harmonic outside."""
    a = np.exp(R / 2)
    rho = np.abs(zeta)
    inner = rho**2 / 4
    outer = a * a / 4 + a * a / 2 * np.log(np.maximum(rho, 1e-300) / a)
    return np.where(rho <= a, inner, outer)


@dataclass(frozen=True)
class AssociatedPair:
    funnel_index: int
    collar: float
    disk_radius: float
    h: float  # chart lattice spacing
    zeta: np.ndarray  # chart lattice
    disk: np.ndarray  # |zeta| < e^R
    phi_i: np.ndarray
    lap_i: np.ndarray  # Euclidean Laplacian of phi_i in the chart
    invariant_i: np.ndarray  # relative to the Poincare metric of the coordinate disk
    chi: np.ndarray
    psi: np.ndarray
    mass: float
    phi_chart: np.ndarray  # phi pulled back to the funnel part, nan elsewhere
    lap_chart: np.ndarray
    sup_difference: float
    plateau_defect: float


def associated_pair(weight: Weight, chart, n: int = 160, profile=smoothstep,
                    mass_bound: float = 1e6, resolution: float = 1e-2) -> AssociatedPair:
    """Assemble phi_i = phi chi + M psi on the standard coordinate disk of a funnel.

    ``chart`` is a FunnelChart (see ``metric.funnel_chart``).  phi and its
    Laplacian are pulled back to the chart lattice; the mass M is the smallest
    value on a 1e-2 grid that keeps the invariant Laplacian of phi_i at least
    half the weight's lower bound.
    """
    if weight.values is None:
        raise ValueError("associated pair needs weight values")
    R = chart.collar
    rad = np.exp(R)
    hz = 2 * rad / n
    xs = -rad + hz * (np.arange(n + 1))
    ZX, ZY = np.meshgrid(xs, xs)
    zeta = ZX + 1j * ZY
    rho = np.abs(zeta)
    disk = rho < rad * (1 - 1e-9)
    funnel_part = disk & (rho > 1.0)
    z_of = np.full(zeta.shape, np.nan + 0j)
    z_of[funnel_part] = chart.to_domain(zeta[funnel_part])
    ok = funnel_part & np.isfinite(z_of)
    phi_c = np.full(zeta.shape, np.nan)
    lap_c = np.full(zeta.shape, np.nan)
    grid = weight.grid
    from scipy.interpolate import RegularGridInterpolator

    def sample(lattice, method="linear"):
        filled = np.where(grid.mask, lattice, np.nan)
        from scipy import ndimage

        idx = ndimage.distance_transform_edt(~grid.mask, return_distances=False, return_indices=True)
        filled = filled[idx[0], idx[1]]
        f = RegularGridInterpolator((grid.ys, grid.xs), filled, method=method, bounds_error=False,
                                    fill_value=None)
        w = z_of[ok]
        return f(np.column_stack([w.imag, w.real]))

    # cubic: second differences of bilinear samples carry O(1) kink errors
    phi_c[ok] = sample(weight.values, "cubic")
    # Laplacian transforms with |dz/dzeta|^2
    dz = chart.derivative(zeta[ok])
    lap_c[ok] = sample(weight.laplacian_density) * np.abs(dz) ** 2

    chi = np.where(disk, cutoff_chi(zeta, R, profile), np.nan)
    psi = np.where(disk, psi_radial(zeta, R), np.nan)
    prod = np.where(ok, np.nan_to_num(phi_c) * chi, 0.0)
    prod[disk & (rho <= 1.0)] = 0.0
    lap_prod = _fd.five_point_laplacian(prod, disk & (ok | (rho <= 1.0)), hz)
    # chi is exactly 1 on the outer plateau, so use the pulled-back Laplacian there
    plateau = ok & (rho >= np.exp(R / 2))
    lap_prod = np.where(plateau, lap_c, lap_prod)
    with np.errstate(divide="ignore"):
        lam_disk = 2 * rad / (rad * rad - rho**2)
    lower, _, _ = laplacian_bounds(weight)
    inner = rho < np.exp(R / 2)
    # same 4h boundary band as laplacian_bounds: the lattice does not resolve e^{2 nu} there
    resolved = np.zeros(zeta.shape, dtype=bool)
    resolved[ok] = sample(grid.boundary_distance) > BAND_CELLS * grid.h
    evaluate = disk & np.isfinite(lap_prod) & (resolved | (rho <= 1.0))

    def worst(M):
        lap_i = lap_prod + M * inner
        inv = lap_i / lam_disk**2
        return float(np.min(inv[evaluate]))

    target = 0.5 * lower
    if worst(mass_bound) < target:
        raise ValueError("mass search failed within bound 1e6")
    lo, hi = 0.0, mass_bound
    if worst(0.0) >= target:
        hi = 0.0
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if worst(mid) >= target:
            hi = mid
        else:
            lo = mid
    M = np.ceil(hi / resolution) * resolution
    lap_i = np.where(evaluate, lap_prod + M * inner, np.nan)
    inv_i = lap_i / lam_disk**2
    phi_i = np.where(disk, np.nan_to_num(prod) + M * psi, np.nan)
    band = ok & (rho > 1.0)
    sup_diff = float(np.nanmax(np.abs(phi_i[band] - phi_c[band]))) if band.any() else 0.0
    check = plateau & np.isfinite(lap_i)
    lap_direct = _fd.five_point_laplacian(np.where(ok, phi_i, 0.0), ok, hz)
    sel = check & np.isfinite(lap_direct) & resolved & (rho > np.exp(R / 2) + 2 * hz)
    defect = float(np.max(np.abs(lap_direct[sel] - lap_c[sel]) / lap_c[sel])) if sel.any() else 0.0
    return AssociatedPair(funnel_index=chart.index, collar=R, disk_radius=rad, h=hz, zeta=zeta,
                          disk=disk, phi_i=phi_i, lap_i=lap_i, invariant_i=inv_i, chi=chi, psi=psi,
                          mass=float(M), phi_chart=phi_c, lap_chart=lap_c, sup_difference=sup_diff,
                          plateau_defect=defect)


# ---------------------------------------------------------------------------
# weight files: JSON header line, then CSV rows x,y,lap[,phi]


def write_weight(weight: Weight, stream) -> None:
    grid = weight.grid
    header = {"label": weight.label, "threshold": weight.threshold, "h": grid.h,
              "shape": list(grid.shape), "x0": grid.x0, "y0": grid.y0,
              "has_values": weight.values is not None}
    stream.write(json.dumps(header, sort_keys=True) + "\n")
    m = grid.mask
    cols = [grid.z.real[m], grid.z.imag[m], weight.laplacian_density[m]]
    if weight.values is not None:
        cols.append(weight.values[m])
    np.savetxt(stream, np.column_stack(cols), delimiter=",", fmt="%.12g")


def read_weight(metric: MetricField, stream) -> Weight:
    text = stream.read()
    first, _, rest = text.partition("\n")
    try:
        header = json.loads(first)
    except json.JSONDecodeError:
        raise ValueError("malformed weight file header") from None
    grid = metric.grid
    if abs(header["h"] - grid.h) > 1e-12 or list(header["shape"]) != list(grid.shape):
        raise ValueError("weight file lattice does not match the grid")
    data = np.loadtxt(io.StringIO(rest), delimiter=",", ndmin=2)
    lap = np.full(grid.shape, np.nan)
    lap[grid.mask] = data[:, 2]
    values = None
    if header.get("has_values"):
        values = np.full(grid.shape, np.nan)
        values[grid.mask] = data[:, 3]
    w = from_laplacian(metric, lap, values=values, label=header.get("label", "weight"))
    return replace(w, threshold=float(header.get("threshold", 1.0)))
