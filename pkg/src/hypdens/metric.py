"""Poincare metric of a planar domain and everything built from it.

The complete metric of curvature -1 is ``ds = exp(nu) |dz|`` with
``Lap nu = exp(2 nu)``.  We solve for ``u = exp(-nu)`` instead, which is
smooth up to the boundary and vanishes there:

    u Lap u - |grad u|^2 + 1 = 0,   u = 0 on the boundary.

In the unit disk ``u = (1 - |z|^2) / 2``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from . import _fd
from .geometry import GridDomain, _segments, point_segment_distance

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    pass


class DegenerateDomainError(ValueError):
    pass


@dataclass(frozen=True)
class MetricField:
    grid: GridDomain
    u: np.ndarray  # exp(-nu); solved on the mask, boundary distance on the band, <= 0 outside
    nu: np.ndarray  # nan off the interior mask
    curvature_residual: np.ndarray  # |Lap nu - exp(2 nu)|, nan where undefined
    residual: float  # max |u Lap u - |grad u|^2 + 1| on the mask
    iterations: int
    _interp: RegularGridInterpolator = field(repr=False, compare=False, default=None)

    def u_at(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        pts = np.column_stack([z.ravel().imag, z.ravel().real])
        return self._interp(pts).reshape(z.shape)

    def density_at(self, z) -> np.ndarray:
        """Conformal density exp(nu) at arbitrary points (bilinear in u)."""
        return 1.0 / self.u_at(z)

    def nu_at(self, z) -> np.ndarray:
        return -np.log(self.u_at(z))

    def contains(self, z: complex) -> bool:
        return self.grid.contains(z)

    def check_point(self, z: complex) -> None:
        if not self.grid.contains(z):
            raise ValueError(f"point {z} is outside the domain")


def _boundary_u(grid: GridDomain):
    a, b, _ = _segments(grid.source.curves)

    def values(p):
        # exact crossings give 0; grazing Dirichlet points sit slightly inside
        d, _ = point_segment_distance(p, a, b)
        inside = grid.source.polygon()
        import shapely

        sign = np.where(shapely.contains_xy(inside, p.real, p.imag), 1.0, 0.0)
        return d * sign

    return values


def solve_liouville(grid: GridDomain, tol: float = 1e-9, max_iter: int = 40) -> MetricField:
    """Damped Newton for the curvature -1 equation in the variable u = exp(-nu)."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    region = _fd.domain_region(grid)
    ops = _fd.build_operators(region)
    bfun = _boundary_u(grid)
    bvals = [bfun(p) if p.size else np.zeros(0) for p in ops.bpoints]
    lb = ops.lap_rhs(bvals)
    gxb, gyb = ops.grad_rhs(bvals)
    L, Gx, Gy = ops.L, ops.Gx, ops.Gy

    def residual(u):
        lap = L @ u + lb
        gx = Gx @ u + gxb
        gy = Gy @ u + gyb
        return u * lap - gx * gx - gy * gy + 1.0, lap, gx, gy

    u = grid.boundary_distance[grid.mask].copy()
    F, lap, gx, gy = residual(u)
    res = float(np.abs(F).max())
    it = 0
    while res > tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"Liouville Newton iteration did not converge in {max_iter} steps (residual {res:.3e})"
            )
        it += 1
        J = sp.diags(lap) + sp.diags(u) @ L - 2 * sp.diags(gx) @ Gx - 2 * sp.diags(gy) @ Gy
        du = spla.spsolve(J.tocsc(), -F)
        step = 1.0
        while True:
            trial = u + step * du
            if np.all(trial > 0):
                Ft, lap_t, gx_t, gy_t = residual(trial)
                rt = float(np.abs(Ft).max())
                if rt < res or step < 1e-3:
                    break
            step *= 0.5
            if step < 1e-4:
                raise ConvergenceError("Liouville Newton line search failed")
        u, F, lap, gx, gy, res = trial, Ft, lap_t, gx_t, gy_t, rt
        log.debug("liouville iter %d step %.3g residual %.3e", it, step, res)
    return _make_metric(grid, u, res, it)


def _make_metric(grid: GridDomain, u_mask: np.ndarray, res: float, iterations: int) -> MetricField:
    u = np.where(grid.inside, grid.boundary_distance, grid.signed_distance)
    u[grid.mask] = u_mask
    nu = np.full(u.shape, np.nan)
    nu[grid.mask] = -np.log(u_mask)
    lap_nu = _fd.five_point_laplacian(np.where(grid.mask, nu, 0.0), grid.mask, grid.h)
    curv = np.abs(lap_nu - np.exp(2 * np.where(grid.mask, nu, 0.0)))
    interp = RegularGridInterpolator((grid.ys, grid.xs), u, bounds_error=False, fill_value=None)
    return MetricField(grid=grid, u=u, nu=nu, curvature_residual=curv, residual=res,
                       iterations=iterations, _interp=interp)


def hyperbolic_area_density(metric: MetricField) -> np.ndarray:
    """exp(2 nu) on the interior mask, nan elsewhere."""
    return np.exp(2 * metric.nu)


# ---------------------------------------------------------------------------
# distances


@dataclass(frozen=True)
class DistanceField:
    """Hyperbolic distance from ``source`` sampled on the grid."""

    metric: MetricField
    source: complex
    values: np.ndarray  # nan outside the domain, inf beyond a narrow band
    _interp: RegularGridInterpolator = field(repr=False, compare=False, default=None)
    seed_radius: float = 0.0  # inside this Euclidean radius straight segments are used

    def at(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        pts = np.column_stack([z.ravel().imag, z.ravel().real])
        out = self._interp(pts).reshape(z.shape)
        near = np.abs(z - self.source) < self.seed_radius
        if np.any(near):
            out = np.array(out, dtype=float)
            out[near] = _segment_length(self.metric, self.source, z[near])
        return out


def _segment_length(metric: MetricField, a: complex, z: np.ndarray) -> np.ndarray:
    """Metric length of straight segments a -> z (Simpson rule)."""
    lam = lambda w: 1.0 / np.maximum(metric.u_at(w), 1e-12)
    return np.abs(z - a) * (lam(np.full(z.shape, a)) + 4 * lam((z + a) / 2) + lam(z)) / 6


def _layer_correction(metric: MetricField, T: np.ndarray, layer_cells: float) -> np.ndarray:
    """Refine T where u < layer_cells * h.

    Marching loses accuracy where the travel time has its logarithmic
    boundary singularity.  There T(w) is replaced by the smaller of its
    marched value and min_q T(q) + (segment length q -> w), q ranging over
    nodes just inside the layer; geodesics are nearly straight across it.
    """
    from scipy.spatial import cKDTree

    grid = metric.grid
    h = grid.h
    u = metric.u
    finite = grid.mask & np.isfinite(T)
    layer = finite & (u < layer_cells * h)
    iface = finite & (u >= layer_cells * h) & (u < (layer_cells + 1.5) * h)
    if not layer.any() or not iface.any():
        return T
    zq = grid.z[iface]
    tq = T[iface]
    zw = grid.z[layer]
    tree = cKDTree(np.column_stack([zq.real, zq.imag]))
    lists = tree.query_ball_point(np.column_stack([zw.real, zw.imag]), r=3 * layer_cells * h)
    counts = np.fromiter((len(l) for l in lists), dtype=int, count=len(lists))
    if counts.sum() == 0:
        return T
    wi = np.repeat(np.arange(zw.size), counts)
    qi = np.concatenate([np.asarray(l, dtype=int) for l in lists if len(l)])
    x, wgt = np.polynomial.legendre.leggauss(16)
    t = 0.5 * (x + 1)
    best = np.full(zw.size, np.inf)
    chunk = 200000
    for s0 in range(0, wi.size, chunk):
        a = zq[qi[s0:s0 + chunk]]
        b = zw[wi[s0:s0 + chunk]]
        pts = a[:, None] + (b - a)[:, None] * t[None, :]
        uu = np.maximum(metric.u_at(pts), 1e-12)
        length = 0.5 * np.abs(b - a) * np.sum(wgt[None, :] / uu, axis=1)
        cand = tq[qi[s0:s0 + chunk]] + length
        np.minimum.at(best, wi[s0:s0 + chunk], cand)
    out = T.copy()
    out[layer] = np.minimum(T[layer], best)
    return out


def distance_field(metric: MetricField, source: complex, start_cells: float = 4.0,
                   narrow: float | None = None, layer_cells: float = 12.0) -> DistanceField:
    """Eikonal front propagation |grad T| = exp(nu) from a point source.

    Near the source the travel time is seeded with straight-segment metric
    lengths on a disk of ``start_cells`` grid spacings, then marched with the
    second-order fast marching method.
    """
    import skfmm
    from scipy import ndimage

    metric.check_point(source)
    grid = metric.grid
    h = grid.h
    Z = grid.z
    near = np.abs(Z - source) < (start_cells + 2) * h
    S = np.full(Z.shape, np.inf)
    S[near] = _segment_length(metric, source, Z[near])
    rho = start_cells * h / metric.u_at(source)
    # outside the seeding disk any value above rho marks the far side of the front
    phi = np.where(near, S - rho, 1.0)
    speed = np.where(grid.inside, np.maximum(metric.u, 1e-3 * h), 1.0)
    phi = np.ma.MaskedArray(phi, mask=~grid.inside)
    kw = {}
    if narrow is not None:
        kw["narrow"] = float(narrow)
    T = skfmm.travel_time(phi, speed, dx=h, order=2, **kw)
    far = np.ma.getmaskarray(T) & grid.inside
    T = np.ma.filled(T, np.nan) + rho
    T = np.where(near & (S < rho), S, T)
    T[far] = np.inf
    T[~grid.inside] = np.nan
    if layer_cells > 0:
        T = _layer_correction(metric, T, layer_cells)
    # fill outside nodes from the nearest inside node so interpolation near the rim is defined
    filled = T.copy()
    idx = ndimage.distance_transform_edt(~grid.inside, return_distances=False, return_indices=True)
    filled = filled[idx[0], idx[1]]
    interp = RegularGridInterpolator((grid.ys, grid.xs), filled, bounds_error=False, fill_value=None)
    return DistanceField(metric=metric, source=complex(source), values=T, _interp=interp,
                         seed_radius=start_cells * h)


def hyperbolic_distance(metric: MetricField, a: complex, b: complex) -> float:
    metric.check_point(b)
    return float(distance_field(metric, a).at(np.array([b]))[0])


def _close_at_boundary(metric, base, region, T, r):
    """Move level crossings that fell back to the domain boundary onto the level set.

    T blows up at the boundary, so the level r is reached before it.  With u
    linear along the arm (u0 at the node, 0 at the crossing) the travel time
    at offset s is T0 - (a h / u0) log(1 - s / (a h)).
    """
    from .geometry import DIRECTIONS

    h = metric.grid.h
    arms = region.arms.copy()
    u0 = metric.u
    for k, (di, dj) in enumerate(DIRECTIONS):
        nb_base = np.roll(base.mask, shift=(-di, -dj), axis=(0, 1)) & (base.arms[k] >= 1.0)
        edge = region.mask & ~nb_base & (np.abs(region.arms[k] - base.arms[k]) < 1e-12)
        if not edge.any():
            continue
        a = base.arms[k][edge]
        s = a * (1 - np.exp(-(r - T[edge]) * u0[edge] / (a * h)))
        arms[k][edge] = np.clip(s, _fd.ARM_FLOOR, a)
    return _fd.Region(grid=region.grid, mask=region.mask, arms=arms)


@dataclass(frozen=True)
class HyperbolicDisk:
    center: complex
    radius: float
    mask: np.ndarray
    distance: DistanceField
    simply_connected: bool
    region: _fd.Region = field(repr=False, compare=False, default=None)


def hyperbolic_disk(metric: MetricField, z: complex, r: float,
                    distance: DistanceField | None = None) -> HyperbolicDisk:
    """Grid nodes at hyperbolic distance < r from z."""
    from scipy import ndimage

    if r < 0:
        raise ValueError("radius must be nonnegative")
    if distance is None:
        distance = distance_field(metric, z)
    T = np.nan_to_num(distance.values, nan=np.inf, posinf=1e300)
    base = _fd.domain_region(metric.grid)
    region = _fd.level_region(base, T, r)
    region = _close_at_boundary(metric, base, region, T, r)
    mask = region.mask
    # simply connected iff the complement within a padded frame is connected
    comp = np.pad(~mask, 1, constant_values=True)
    _, n_holes = ndimage.label(comp)
    return HyperbolicDisk(center=complex(z), radius=float(r), mask=mask, distance=distance,
                          simply_connected=bool(n_holes <= 1), region=region)


# ---------------------------------------------------------------------------
# closed geodesics and funnels


@dataclass(frozen=True)
class GeodesicCurve:
    polyline: np.ndarray
    hyperbolic_length: float
    homotopy_class: int
    variation: float  # max estimated geodesic curvature (hyperbolic units)


class _SmoothMetric:
    """Bicubic spline of u for smooth length gradients."""

    def __init__(self, metric: MetricField):
        from scipy.interpolate import RectBivariateSpline

        g = metric.grid
        self.spline = RectBivariateSpline(g.ys, g.xs, metric.u, kx=3, ky=3)
        self.floor = 0.25 * g.h

    def lam_and_grad(self, z):
        y, x = z.imag, z.real
        u = self.spline.ev(y, x)
        ux = self.spline.ev(y, x, dy=1)
        uy = self.spline.ev(y, x, dx=1)
        u = np.maximum(u, self.floor)
        lam = 1.0 / u
        return lam, -ux / u**2, -uy / u**2


def _resample(curve: np.ndarray, n: int) -> np.ndarray:
    closed = np.append(curve, curve[0])
    s = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(closed)))])
    t = np.linspace(0.0, s[-1], n, endpoint=False)
    return np.interp(t, s, closed.real) + 1j * np.interp(t, s, closed.imag)


def _normals(curve: np.ndarray) -> np.ndarray:
    tang = np.roll(curve, -1) - np.roll(curve, 1)
    return 1j * tang / np.abs(tang)  # left normal: the domain side of every boundary curve


def curve_length(sm: _SmoothMetric, z: np.ndarray) -> float:
    e = np.roll(z, -1) - z
    lam, _, _ = sm.lam_and_grad(z + e / 2)
    return float(np.sum(lam * np.abs(e)))


def _length_and_grad(sm: _SmoothMetric, z: np.ndarray):
    e = np.roll(z, -1) - z
    m = z + e / 2
    lam, lx, ly = sm.lam_and_grad(m)
    ae = np.abs(e)
    L = float(np.sum(lam * ae))
    glam = lx + 1j * ly  # d lam / dx + i d lam / dy
    unit = e / ae
    # d/dz_k of lam(m_k)|e_k| and lam(m_{k-1})|e_{k-1}|, as complex gradients
    g_own = 0.5 * glam * ae - lam * unit
    g_prev = 0.5 * np.roll(glam * ae, 1) + np.roll(lam * unit, 1)
    return L, g_own + g_prev


def closed_geodesic(metric: MetricField, boundary_index: int, n_vertices: int = 256,
                    tol: float = 1e-3, max_rounds: int = 40) -> GeodesicCurve:
    """Shorten the boundary curve (pushed 3h inward) to the closed geodesic in its class."""
    from scipy.optimize import minimize

    spec = metric.grid.source
    if spec.connectivity < 2:
        raise DegenerateDomainError("degenerate: no funnel structure in a simply connected domain")
    if not 0 <= boundary_index < spec.connectivity:
        raise IndexError(f"boundary index {boundary_index} out of range")
    sm = _SmoothMetric(metric)
    h = metric.grid.h
    curve = _resample(spec.curves[boundary_index], n_vertices)
    curve = curve + 3 * h * _normals(curve)
    prev = np.inf
    for _ in range(max_rounds):
        nrm = _normals(curve)
        base = curve

        def fun(s):
            z = base + s * nrm
            L, g = _length_and_grad(sm, z)
            return L, (g.conj() * nrm).real

        res = minimize(fun, np.zeros(len(curve)), jac=True, method="L-BFGS-B",
                       options={"maxiter": 200, "gtol": 1e-10})
        curve = _resample(base + res.x * nrm, n_vertices)
        L = curve_length(sm, curve)
        if abs(prev - L) <= 1e-7 * L:
            break
        prev = L
    else:
        raise ConvergenceError("closed geodesic descent did not converge")
    variation = _geodesic_curvature(sm, curve)
    if variation > tol * max(1.0, 1.0 / h) and variation > 0.1:
        raise ConvergenceError(f"closed geodesic not stationary (curvature {variation:.3g})")
    return GeodesicCurve(polyline=curve, hyperbolic_length=curve_length(sm, curve),
                         homotopy_class=boundary_index, variation=variation)


def _geodesic_curvature(sm: _SmoothMetric, z: np.ndarray) -> float:
    """Normal length variation per unit hyperbolic normal displacement and arclength."""
    _, g = _length_and_grad(sm, z)
    nrm = _normals(z)
    lam, _, _ = sm.lam_and_grad(z)
    ds = 0.5 * (np.abs(np.roll(z, -1) - z) + np.abs(z - np.roll(z, 1)))
    dL = (g.conj() * nrm).real  # per unit Euclidean normal move
    return float(np.max(np.abs(dL) / (lam * lam * ds)))


@dataclass(frozen=True)
class Funnel:
    index: int
    geodesic: GeodesicCurve
    length: float
    collar: float  # R = pi^2 / length
    mask: np.ndarray


@dataclass(frozen=True)
class FunnelDecomposition:
    metric: MetricField
    funnels: tuple
    core: np.ndarray


def funnel_decomposition(metric: MetricField, **kw) -> FunnelDecomposition:
    import shapely
    from shapely.geometry import Polygon

    grid = metric.grid
    Z = grid.z
    funnels = []
    masks = []
    for i in range(grid.source.connectivity):
        geo = closed_geodesic(metric, i, **kw)
        poly = Polygon(np.column_stack([geo.polyline.real, geo.polyline.imag]))
        inside_geo = shapely.contains_xy(poly, Z.real, Z.imag)
        m = grid.mask & (~inside_geo if i == 0 else inside_geo)
        masks.append(m)
        funnels.append((i, geo))
    # overlaps (connectivity 2 shares one geodesic) go to the nearest boundary curve
    stack = np.array(masks)
    multi = stack.sum(axis=0) > 1
    for i in range(len(masks)):
        masks[i] = masks[i] & (~multi | (grid.nearest_curve == i))
    out = []
    for (i, geo), m in zip(funnels, masks):
        L = geo.hyperbolic_length
        out.append(Funnel(index=i, geodesic=geo, length=L, collar=np.pi**2 / L, mask=m))
    union = np.any(np.array(masks), axis=0)
    return FunnelDecomposition(metric=metric, funnels=tuple(out), core=grid.mask & ~union)


def min_pair_distance(points, metric: MetricField, k: int = 6) -> float:
    """Minimum pairwise hyperbolic distance.

    Candidate pairs come from Euclidean nearest neighbours ranked by the
    straight-segment metric length; the best few candidates are refined with
    eikonal solves.
    """
    from scipy.spatial import cKDTree

    pts = np.asarray(points, dtype=complex).ravel()
    if pts.size < 2:
        return float("inf")
    tree = cKDTree(np.column_stack([pts.real, pts.imag]))
    kk = min(k + 1, pts.size)
    _, nn = tree.query(np.column_stack([pts.real, pts.imag]), k=kk)
    a = np.repeat(np.arange(pts.size), kk - 1)
    b = nn[:, 1:].ravel()
    seg = np.array([_segment_length(metric, pts[i], np.array([pts[j]]))[0] for i, j in zip(a, b)])
    if np.min(seg) <= 0:
        return 0.0
    best = np.inf
    for i in np.unique(a[np.argsort(seg)[:4]]):
        field_i = distance_field(metric, pts[i])
        others = np.delete(pts, i)
        best = min(best, float(np.min(field_i.at(others))))
    return best


# standard funnel coordinates: funnel -> {1 < |zeta| < e^R}, geodesic -> |zeta| = 1


class ChartUnavailable(ValueError):
    pass


@dataclass(frozen=True)
class FunnelChart:
    """Conformal chart of a funnel onto the round annulus 1 < |zeta| < e^R.

    ``forward`` maps domain points to zeta, ``inverse`` maps zeta back and
    ``dz`` returns dz/dzeta.  ``period_defect`` compares the measured modulus
    with R = pi^2 / length (zero for the exact annulus chart).
    """

    index: int
    collar: float
    forward: object = field(repr=False)
    inverse: object = field(repr=False)
    dz: object = field(repr=False)
    exact: bool = False
    period_defect: float = 0.0

    def to_chart(self, z) -> np.ndarray:
        return self.forward(np.asarray(z, dtype=complex))

    def to_domain(self, zeta) -> np.ndarray:
        return self.inverse(np.asarray(zeta, dtype=complex))

    def derivative(self, zeta) -> np.ndarray:
        return self.dz(np.asarray(zeta, dtype=complex))

    def contains(self, z) -> np.ndarray:
        w = np.abs(self.to_chart(z))
        return np.isfinite(w) & (w > 1.0) & (w < np.exp(self.collar))


def _round_annulus(domain, rtol: float = 1e-6):
    """(center, r_in, r_out) when the domain is a concentric round annulus, else None."""
    if domain.connectivity != 2:
        return None
    outer, inner = domain.curves
    c = outer.mean()
    if abs(inner.mean() - c) > rtol * np.abs(outer - c).mean():
        return None
    ro, ri = np.abs(outer - c), np.abs(inner - c)
    if np.ptp(ro) > rtol * ro.mean() or np.ptp(ri) > rtol * ri.mean():
        return None
    # polygonal samples sit on the circles
    return c, float(ri.max()), float(ro.max())


def annulus_chart(center: complex, r_in: float, r_out: float, index: int) -> FunnelChart:
    """Exact chart of the outer (index 0) or inner (index 1) half of a round annulus."""
    s = np.sqrt(r_in * r_out)
    R = 0.5 * np.log(r_out / r_in)
    if index == 0:
        return FunnelChart(index=0, collar=R, forward=lambda z: (z - center) / s,
                           inverse=lambda w: center + s * w, dz=lambda w: np.full(w.shape, s + 0j),
                           exact=True)
    if index == 1:
        return FunnelChart(index=1, collar=R, forward=lambda z: s / (z - center),
                           inverse=lambda w: center + s / w, dz=lambda w: -s / w**2, exact=True)
    raise ChartUnavailable(f"annulus has no funnel {index}")


def _linestring_distance(curve: np.ndarray, pts: np.ndarray) -> np.ndarray:
    import shapely
    from shapely.geometry import LineString

    ring = np.concatenate([curve, curve[:1]])
    line = LineString(np.column_stack([ring.real, ring.imag]))
    return shapely.distance(line, shapely.points(pts.real, pts.imag))


def funnel_chart(decomp: FunnelDecomposition, index: int, period_tol: float = 0.1) -> FunnelChart:
    """Standard coordinate of funnel ``index``.

    Round annuli use the closed form.  Otherwise the harmonic measure omega of
    the boundary curve in the funnel (0 on the geodesic) is solved on the
    lattice, its conjugate is integrated on the funnel slit along one ray, and
    log zeta = (2 pi / P)(omega + i omega*) with P the measured period.
    """
    metric = decomp.metric
    grid = metric.grid
    if not 0 <= index < len(decomp.funnels):
        raise ChartUnavailable(f"no funnel with index {index}")
    ann = _round_annulus(grid.source)
    if ann is not None:
        return annulus_chart(*ann, index)
    fun = decomp.funnels[index]
    geo = fun.geodesic.polyline
    bcurve = grid.source.curves[index]
    region = _fd.curve_region(_fd.domain_region(grid), [geo], fun.mask)
    if region.size < 64:
        raise ChartUnavailable(f"funnel {index} too small on the lattice")
    ops = _fd.build_operators(region)

    def bvals(p):
        return (_linestring_distance(bcurve, p) < _linestring_distance(geo, p)).astype(float)

    omega = _fd.scatter(region, _fd.solve_poisson(ops, np.zeros(region.size), bvals))
    h = grid.h
    # slit from a geodesic vertex to the nearest boundary point
    g0 = geo[0]
    b0 = bcurve[np.argmin(np.abs(bcurve - g0))]
    Z = grid.z
    t = np.clip(((Z - g0) * np.conj(b0 - g0)).real / abs(b0 - g0) ** 2, 0, 1)
    slit = np.abs(Z - (g0 + t * (b0 - g0))) < 0.75 * h
    cut = region.mask & ~slit
    from scipy import ndimage

    lab, nlab = ndimage.label(cut)
    if nlab == 0:
        raise ChartUnavailable(f"funnel {index} slit leaves no region")
    sizes = ndimage.sum(cut, lab, range(1, nlab + 1))
    keep = lab == 1 + int(np.argmax(sizes))
    conj = _fd.harmonic_conjugate(np.nan_to_num(omega), keep, h)
    # period: jump of the conjugate across the slit, from node pairs straddling it
    side = np.sign(((Z - g0) * np.conj(1j * (b0 - g0))).real)
    jumps = []
    for di, dj in ((0, 2), (2, 0), (0, -2), (-2, 0)):
        nb_keep = np.roll(keep, (-di, -dj), (0, 1))
        nb_side = np.roll(side, (-di, -dj), (0, 1))
        nb_conj = np.roll(conj, (-di, -dj), (0, 1))
        mid = np.roll(slit, (-di // 2, -dj // 2), (0, 1))
        pair = keep & nb_keep & mid & (side > 0) & (nb_side < 0)
        if pair.any():
            jumps.append(nb_conj[pair] - conj[pair])
    if not jumps:
        raise ChartUnavailable(f"funnel {index}: conjugate period not measurable")
    P = float(np.median(np.abs(np.concatenate(jumps))))
    k = 2 * np.pi / P
    defect = abs(k - fun.collar) / fun.collar
    if defect > period_tol:
        raise ChartUnavailable(f"funnel {index}: modulus {k:.4g} vs collar {fun.collar:.4g}")
    # orientation: angle increases counterclockwise around the geodesic
    theta = k * conj
    gx = np.gradient(np.where(keep, omega, np.nan), h, axis=1)
    gy = np.gradient(np.where(keep, omega, np.nan), h, axis=0)
    sel = keep & np.isfinite(gx) & np.isfinite(gy)
    zeta = np.exp(k * omega[sel] + 1j * theta[sel])
    dlog = k * (gx[sel] - 1j * gy[sel])  # d(log zeta)/dz
    zs = Z[sel]
    zeta_dz = 1.0 / (zeta * dlog)
    from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator
    from scipy.spatial import cKDTree

    s, a = np.log(np.abs(zeta)), np.angle(zeta)
    S = np.concatenate([s, s, s])
    A = np.concatenate([a - 2 * np.pi, a, a + 2 * np.pi])
    vals = np.column_stack([np.tile(zs, 3), np.tile(zeta_dz, 3)])
    lin = LinearNDInterpolator(np.column_stack([S, A]), vals)
    near = NearestNDInterpolator(np.column_stack([S, A]), vals)
    fwd_lin = LinearNDInterpolator(np.column_stack([zs.real, zs.imag]), zeta)
    tree = cKDTree(np.column_stack([zs.real, zs.imag]))
    R = fun.collar

    def _polar(w):
        q = np.column_stack([np.log(np.abs(w)).ravel(), np.angle(w).ravel()])
        out = lin(q)
        bad = ~np.all(np.isfinite(out), axis=1)
        if bad.any():
            out[bad] = near(q[bad])
        inside = (np.abs(w.ravel()) >= 1.0) & (np.abs(w.ravel()) <= np.exp(k))
        out[~inside] = np.nan
        return out

    def inverse(w):
        return _polar(w)[:, 0].reshape(w.shape)

    def dz(w):
        return _polar(w)[:, 1].reshape(w.shape)

    def forward(z):
        q = np.column_stack([z.real.ravel(), z.imag.ravel()])
        out = fwd_lin(q)
        bad = ~np.isfinite(out)
        if bad.any():
            d, j = tree.query(q[bad])
            out[bad] = np.where(d < 2 * h, zeta[j], np.nan)
        return out.reshape(z.shape)

    return FunnelChart(index=index, collar=R, forward=forward, inverse=inverse, dz=dz,
                       exact=False, period_defect=defect)
