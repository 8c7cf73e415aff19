"""Weak-limit triplets along escaping centers.

A triplet is a snapshot of (D_n, Delta phi_n, Lambda_n) where
D_n = {z : d(z, z_n) < d(z_n, p) / 2}, transported to the unit disk by the
funnel standard coordinate (scaled so the coordinate disk becomes the unit
disk) followed by the automorphism that sends z_n to 0.  Only measures are
stored, never potentials, so the harmonic normalization of the limit weight
does not enter.

Measures are kept as weighted atoms on a polar quadrature adapted to the
boundary of D_n, which is exact to quadrature order and survives any
conformal change of coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import squareform

from .density import PointSequence
from .metric import ChartUnavailable, FunnelChart, MetricField, annulus_chart, distance_field
from .models import AnnulusModel, DiskModel

_GL_X, _GL_W = np.polynomial.legendre.leggauss(32)


@dataclass(frozen=True)
class DiskMeasure:
    """Finite atomic measure on the unit disk."""

    points: np.ndarray
    masses: np.ndarray

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    def restricted(self, rho: float) -> "DiskMeasure":
        keep = np.abs(self.points) <= rho
        return DiskMeasure(self.points[keep], self.masses[keep])

    def integrate(self, f) -> float:
        return float(np.sum(self.masses * f(self.points)))


@dataclass(frozen=True)
class Triplet:
    radius: float  # r_n: largest |eta| on the boundary of the image of D_n
    radius_min: float  # smallest |eta| on that boundary
    measure: DiskMeasure
    points: PointSequence
    center: complex
    base: complex | None
    hyperbolic_radius: float
    chart: str = "disk"

    def summary(self) -> dict:
        return {"center": [self.center.real, self.center.imag],
                "hyperbolic_radius": self.hyperbolic_radius, "r_n": self.radius,
                "r_min": self.radius_min, "mass": self.measure.total,
                "n_points": len(self.points), "chart": self.chart}


# ---------------------------------------------------------------------------
# frames: domain -> unit disk before centering


@dataclass(frozen=True)
class _Frame:
    to_unit: object = field(repr=False)
    from_unit: object = field(repr=False)
    dfrom: object = field(repr=False)  # dz / dxi
    inner: float  # |xi| below this leaves the chart
    label: str


def _identity_frame() -> _Frame:
    return _Frame(lambda z: np.asarray(z, dtype=complex), lambda x: np.asarray(x, dtype=complex),
                  lambda x: np.ones(np.shape(x), dtype=complex), 0.0, "disk")


def _chart_frame(chart: FunnelChart) -> _Frame:
    s = np.exp(chart.collar)
    return _Frame(lambda z: chart.to_chart(z) / s, lambda x: chart.to_domain(np.asarray(x) * s),
                  lambda x: chart.derivative(np.asarray(x) * s) * s, 1.0 / s,
                  f"funnel {chart.index}")


def annulus_model_chart(model: AnnulusModel, z: complex) -> FunnelChart:
    """Exact chart of the half of a round annulus that contains z."""
    outer = abs(z - model.center) >= np.sqrt(model.r_in * model.r_out)
    return annulus_chart(model.center, model.r_in, model.r_out, 0 if outer else 1)


def _is_unit_disk_field(metric) -> bool:
    src = getattr(metric.grid, "source", None)
    if src is None or src.connectivity != 1:
        return False
    r = np.abs(src.curves[0])
    return abs(src.curves[0].mean()) < 1e-6 and np.ptp(r) < 1e-6 and abs(r.mean() - 1) < 1e-6


def _frame_for(metric, chart, center) -> _Frame:
    if chart is not None:
        return _chart_frame(chart)
    if isinstance(metric, DiskModel):
        return _identity_frame()
    if isinstance(metric, AnnulusModel):
        return _chart_frame(annulus_model_chart(metric, center))
    if isinstance(metric, MetricField) and _is_unit_disk_field(metric):
        return _identity_frame()
    raise ChartUnavailable("a funnel chart is required on this domain")


def _distance_fn(metric, center):
    if isinstance(metric, MetricField):
        df = distance_field(metric, center)

        def dist(pts):
            pts = np.asarray(pts, dtype=complex)
            out = np.full(pts.shape, np.inf)
            inside = np.array([metric.contains(p) for p in pts.ravel()]).reshape(pts.shape)
            if inside.any():
                d = df.at(pts[inside])
                out[inside] = np.where(np.isfinite(d), d, np.inf)
            return out

        return dist
    return lambda pts: np.asarray(metric.distance(center, pts), dtype=float)


def riesz_density_fn(weight, metric):
    """z -> Delta phi(z) / 2pi (Euclidean area density)."""
    if callable(weight) and not hasattr(weight, "invariant_fn"):
        return weight
    inv = getattr(weight, "invariant_fn", None)
    if inv is not None and hasattr(metric, "density"):
        return lambda z: inv(z) * metric.density(z) ** 2 / (2 * np.pi)
    grid = weight.grid
    lap = np.nan_to_num(weight.laplacian_density, nan=0.0) / (2 * np.pi)
    interp = RegularGridInterpolator((grid.ys, grid.xs), lap, bounds_error=False, fill_value=0.0)

    def f(z):
        z = np.asarray(z, dtype=complex)
        return interp(np.column_stack([z.ravel().imag, z.ravel().real])).reshape(z.shape)

    return f


def _seq_points(seq) -> np.ndarray:
    return np.asarray(getattr(seq, "points", seq), dtype=complex).ravel()


# ---------------------------------------------------------------------------
# extraction


def extract_triplet(weight, seq, base, center, metric, chart: FunnelChart | None = None,
                    radius: float | None = None, n_angle: int = 128,
                    min_distance: float = 2.0) -> Triplet:
    """Triplet of (weight, seq) on D(center, d(center, base) / 2).

    ``metric`` is a DiskModel, an AnnulusModel or a lattice MetricField.  A
    FunnelChart is needed on lattice domains other than the unit disk.
    ``weight`` is a Weight, a DiskWeight, or a callable giving Delta phi / 2pi.
    ``radius`` overrides the hyperbolic radius (``base`` may then be None).
    """
    center = complex(center)
    metric.check_point(center)
    dist = _distance_fn(metric, center)
    if radius is None:
        if base is None:
            raise ValueError("a base point or an explicit radius is required")
        if complex(base) == center:
            raise ValueError("center equals the base point: the disk has radius 0")
        d = float(dist(np.array([complex(base)]))[0])
        if not d > min_distance:
            raise ValueError(f"d(center, base) = {d:.3g} must exceed {min_distance}")
        rho = d / 2
    else:
        rho = float(radius)
        if not rho > 0:
            raise ValueError("radius must be positive")

    frame = _frame_for(metric, chart, center)
    xi_n = complex(frame.to_unit(np.array([center]))[0])
    if not np.isfinite(xi_n) or abs(xi_n) >= 1 or (frame.inner > 0 and abs(xi_n) <= frame.inner):
        raise ChartUnavailable("center is outside the chart")
    c = np.conj(xi_n)

    def eta_to_z(eta):
        xi = (eta + xi_n) / (1 + c * eta)
        return xi, frame.from_unit(xi)

    theta = 2 * np.pi * np.arange(n_angle) / n_angle
    ray = np.exp(1j * theta)

    def excess(t):
        xi, z = eta_to_z(t * ray)
        out = dist(z) - rho
        bad = ~np.isfinite(z) | ((frame.inner > 0) & (np.abs(xi) <= frame.inner))
        return np.where(bad, np.inf, out), bad

    lo = np.zeros(n_angle)
    hi = np.full(n_angle, 1 - 1e-12)
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        e, _ = excess(mid)
        inside = e < 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    t_edge = 0.5 * (lo + hi)
    _, bad = excess(t_edge * (1 - 1e-6))
    if bad.any() or t_edge.max() > 1 - 1e-6:
        raise ChartUnavailable("D_n is not contained in a single funnel chart")

    # polar quadrature on each ray out to its edge
    tq = 0.5 * (_GL_X[:, None] + 1) * t_edge[None, :]
    wq = 0.5 * _GL_W[:, None] * t_edge[None, :] * (2 * np.pi / n_angle)
    eta = tq * ray[None, :]
    xi, z = eta_to_z(eta)
    jac = np.abs(frame.dfrom(xi)) ** 2 * ((1 - abs(xi_n) ** 2) / np.abs(1 + c * eta) ** 2) ** 2
    dens = riesz_density_fn(weight, metric)(z)
    masses = (dens * jac * tq * wq).ravel()
    measure = DiskMeasure(eta.ravel(), masses)

    lam = _seq_points(seq)
    if lam.size:
        d_lam = dist(lam)
        lam = lam[d_lam < rho]
    if lam.size:
        x = frame.to_unit(lam)
        if np.any(~np.isfinite(x)) or (frame.inner > 0 and np.any(np.abs(x) <= frame.inner)):
            raise ChartUnavailable("D_n is not contained in a single funnel chart")
        lam_eta = (x - xi_n) / (1 - c * x)
    else:
        lam_eta = np.zeros(0, dtype=complex)
    pts = PointSequence(lam_eta, label=f"triplet at {center:.4g}")
    return Triplet(radius=float(t_edge.max()), radius_min=float(t_edge.min()), measure=measure,
                   points=pts, center=center, base=None if base is None else complex(base),
                   hyperbolic_radius=rho, chart=frame.label)


# ---------------------------------------------------------------------------
# distances


def _tent_table(measure: DiskMeasure, rho: float, n_rings: int, n_angle: int) -> np.ndarray:
    """Integrals of 1-Lipschitz tents max(0, s - |z - c|) over a rotation-closed family of centers."""
    m = measure.restricted(rho)
    radii = rho * np.arange(n_rings + 1) / n_rings
    ang = np.exp(2j * np.pi * np.arange(n_angle) / n_angle)
    centers = radii[:, None] * ang[None, :]
    out = []
    for s in (rho / n_rings, 2 * rho / n_rings):
        s = min(s, 1.0)
        vals = np.maximum(0.0, s - np.abs(m.points[None, None, :] - centers[:, :, None]))
        out.append(vals @ m.masses)
    total = np.full((1, n_angle), m.total)
    return np.concatenate(out + [total], axis=0)


def matching_distance(a: np.ndarray, b: np.ndarray, rho: float) -> float:
    """Optimal matching cost on |z| <= rho; unmatched points pay their distance to the rim."""
    a = a[np.abs(a) <= rho]
    b = b[np.abs(b) <= rho]
    na, nb = a.size, b.size
    if na + nb == 0:
        return 0.0
    big = 1e6
    C = np.zeros((na + nb, na + nb))
    C[:na, :nb] = np.abs(a[:, None] - b[None, :])
    C[:na, nb:] = big
    C[:na, nb:][np.arange(na), np.arange(na)] = rho - np.abs(a)
    C[na:, :nb] = big
    C[na:, :nb][np.arange(nb), np.arange(nb)] = rho - np.abs(b)
    r, c = linear_sum_assignment(C)
    return float(C[r, c].sum())


def weak_distance(A: Triplet, B: Triplet, rho: float, rotations: bool = True,
                  n_angle: int = 360, n_rings: int = 4) -> float:
    """Bounded-Lipschitz distance of the measures plus matching distance of the points on |z| <= rho.

    The bounded-Lipschitz part is the largest discrepancy over a fixed family
    of 1-Lipschitz tents bounded by 1 (plus the total mass), closed under
    rotation by 2 pi / n_angle.  With ``rotations`` the distance is minimized
    over that rotation group, which removes the orientation left free by the
    centering automorphism.  Both versions are exact pseudometrics.
    """
    if not rho < min(A.radius_min, B.radius_min):
        raise ValueError("test radius must be below both triplet radii")
    TA = _tent_table(A.measure, rho, n_rings, n_angle)
    TB = _tent_table(B.measure, rho, n_rings, n_angle)
    a, b = A.points.points, B.points.points
    shifts = range(n_angle) if rotations else (0,)
    best = np.inf
    for k in shifts:
        bl = float(np.max(np.abs(TA - np.roll(TB, k, axis=-1))))
        if bl >= best:
            continue
        mt = matching_distance(a, b * np.exp(2j * np.pi * k / n_angle), rho)
        best = min(best, bl + mt)
    return best


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class LimitReport:
    radii: tuple
    tables: dict  # rho -> pairwise distance matrix
    consecutive: dict  # rho -> distances between neighbours
    monotone: bool
    convergent: bool
    clusters: np.ndarray  # cluster label per triplet at the largest radius
    n_clusters: int
    tolerance: float
    candidate: Triplet

    def to_dict(self) -> dict:
        return {"radii": list(self.radii),
                "tables": {f"{r:g}": np.round(t, 12).tolist() for r, t in self.tables.items()},
                "consecutive": {f"{r:g}": np.round(v, 12).tolist() for r, v in self.consecutive.items()},
                "monotone": self.monotone, "convergent": self.convergent,
                "clusters": self.clusters.tolist(), "n_clusters": self.n_clusters,
                "tolerance": self.tolerance, "candidate": self.candidate.summary()}


def limit_diagnostics(triplets, radii, tol: float = 0.05) -> LimitReport:
    """Pairwise weak distances along an escaping sequence of triplets.

    Convergent means that at every test radius the triplets in the second
    half of the sequence lie within ``tol`` of each other.  Clusters come from
    single linkage at ``tol`` on the largest test radius.
    """
    triplets = list(triplets)
    if len(triplets) < 3:
        raise ValueError("need at least three triplets")
    depth = np.array([t.hyperbolic_radius for t in triplets])
    if np.any(np.diff(depth) <= 0):
        raise ValueError("centers must escape: d(z_n, p) has to increase strictly")
    radii = tuple(sorted(float(r) for r in radii))
    n = len(triplets)
    tables, consec = {}, {}
    tail = list(range(n // 2, n))
    convergent, monotone = True, True
    for rho in radii:
        D = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                D[i, j] = D[j, i] = weak_distance(triplets[i], triplets[j], rho)
        tables[rho] = D
        c = np.array([D[i, i + 1] for i in range(n - 1)])
        consec[rho] = c
        monotone &= bool(np.all(np.diff(c) <= tol))
        convergent &= bool(D[np.ix_(tail, tail)].max() <= tol)
    Z = linkage(squareform(tables[radii[-1]], checks=False), method="single")
    labels = fcluster(Z, t=tol, criterion="distance")
    return LimitReport(radii=radii, tables=tables, consecutive=consec, monotone=monotone,
                       convergent=convergent, clusters=labels, n_clusters=int(labels.max()),
                       tolerance=tol, candidate=triplets[-1])


# ---------------------------------------------------------------------------
# comparison with the coordinate disk of a funnel


def disk_side_density(weight, metric, chart: FunnelChart, alpha: float | None = None,
                      assoc=None):
    """Delta phi_i / 2pi on the unit disk xi = zeta / e^R.

    With an AssociatedPair the chart lattice Laplacian is used.  Otherwise
    the surface measure is pulled back on e^{R/2} < |zeta| < e^R, where
    Delta phi_i = Delta phi, and the inner part carries the alpha-invariant
    measure of the coordinate disk.
    """
    s = np.exp(chart.collar)
    if assoc is not None:
        zs = assoc.zeta
        xs = zs[0].real
        lap = np.nan_to_num(np.where(assoc.disk, assoc.lap_i, 0.0))
        interp = RegularGridInterpolator((xs, xs), lap, bounds_error=False, fill_value=0.0)

        def f(xi):
            zeta = np.asarray(xi) * s
            return interp(np.column_stack([zeta.ravel().imag, zeta.ravel().real])).reshape(
                zeta.shape) * s**2 / (2 * np.pi)

        return f
    if alpha is None:
        alpha = getattr(weight, "alpha", None)
    if alpha is None:
        raise ValueError("alpha is needed for the inner part of the coordinate disk")
    surf = riesz_density_fn(weight, metric)

    def f(xi):
        xi = np.asarray(xi, dtype=complex)
        out = alpha * (2 / (1 - np.abs(xi) ** 2)) ** 2 / (2 * np.pi)
        outer = np.abs(xi) > np.exp(-chart.collar / 2)
        if outer.any():
            x = xi[outer]
            out[outer] = surf(chart.to_domain(x * s)) * np.abs(chart.derivative(x * s) * s) ** 2
        return out

    return f


@dataclass(frozen=True)
class DiscProbe:
    depths: np.ndarray  # hyperbolic radius of D_n per center
    distances: np.ndarray
    rho: float
    surface: tuple
    disk: tuple

    @property
    def decreasing(self) -> bool:
        return bool(np.all(np.diff(self.distances) < 0))


def disc_probe(weight, seq, base, centers, metric, chart: FunnelChart | None = None,
               rho: float | None = None, assoc=None, alpha: float | None = None,
               n_angle: int = 128) -> DiscProbe:
    """Weak distance between surface triplets and coordinate-disk triplets at the same centers."""
    centers = [complex(c) for c in centers]
    if chart is None:
        if not isinstance(metric, AnnulusModel):
            raise ChartUnavailable("a funnel chart is required on this domain")
        chart = annulus_model_chart(metric, centers[0])
    s = np.exp(chart.collar)
    dens = disk_side_density(weight, metric, chart, alpha=alpha, assoc=assoc)
    lam = _seq_points(seq)
    lam = lam[chart.contains(lam)]
    lam_xi = PointSequence(chart.to_chart(lam) / s)
    surf, disk = [], []
    for c in centers:
        A = extract_triplet(weight, seq, base, c, metric, chart=chart, n_angle=n_angle)
        xi = complex(chart.to_chart(np.array([c]))[0] / s)
        B = extract_triplet(dens, lam_xi, None, xi, DiskModel(), radius=A.hyperbolic_radius,
                            n_angle=n_angle)
        surf.append(A)
        disk.append(B)
    if rho is None:
        rho = 0.9 * min(t.radius_min for t in surf + disk)
    dist = np.array([weak_distance(a, b, rho) for a, b in zip(surf, disk)])
    return DiscProbe(depths=np.array([t.hyperbolic_radius for t in surf]), distances=dist,
                     rho=float(rho), surface=tuple(surf), disk=tuple(disk))
