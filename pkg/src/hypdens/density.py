"""Separation, Green-energy densities and the interpolation/sampling classifier.

For a center z and radius r the density ratio is

    sum_{lambda: c < d(z, lambda) < r} g_r(z, lambda)  /  integral_{D(z,r)} g_r(z, w) dmu(w)

with mu = Lap(phi) / (2 pi) dA and inner cutoff c = 1/2 by default.  The
upper density takes the sup over scan centers and extrapolates in r with the
model ratio(r) = D + c / r.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .metric import MetricField, distance_field, hyperbolic_disk, _segment_length
from .models import DiskModel, DiskWeight, disk_alpha_weight, disk_distance

RADII = (2.0, 3.0, 4.5, 6.0)
INNER_CUTOFF = 0.5


@dataclass(frozen=True)
class PointSequence:
    points: np.ndarray
    label: str = "sequence"
    # the truncated list is complete on the hyperbolic disk D(reach_center, reach_radius)
    reach_center: complex = 0j
    reach_radius: float = float("inf")

    def __post_init__(self):
        object.__setattr__(self, "points", np.atleast_1d(np.asarray(self.points, dtype=complex)))

    def __len__(self) -> int:
        return self.points.size

    def union(self, other: "PointSequence") -> "PointSequence":
        return PointSequence(np.concatenate([self.points, other.points]), f"{self.label}+{other.label}",
                             self.reach_center, min(self.reach_radius, other.reach_radius))

    def mapped(self, f, label: str | None = None, reach_center=None) -> "PointSequence":
        rc = f(np.array([self.reach_center]))[0] if reach_center is None else reach_center
        return PointSequence(f(self.points), label or self.label, complex(rc), self.reach_radius)


@dataclass(frozen=True)
class DensityEstimate:
    mode: str
    samples: tuple  # (center, radius, ratio)
    value: float
    uncertainty: float
    inner_cutoff: float
    per_radius: tuple  # (radius, aggregated ratio)
    dropped: int = 0


@dataclass(frozen=True)
class Classification:
    verdict: str
    separation: float
    threshold: float
    upper: Optional[DensityEstimate] = None
    lower: Optional[DensityEstimate] = None
    margin: float = float("nan")
    flags: tuple = ()


# ---------------------------------------------------------------------------
# surfaces


class GridSurface:
    """Density primitives on a grid metric (eikonal distances, Shortley-Weller Green functions)."""

    def __init__(self, metric: MetricField):
        self.metric = metric
        self._dist = {}
        self._measures = {}

    def contains(self, z):
        return self.metric.contains(z)

    def check_point(self, z):
        self.metric.check_point(z)

    def field(self, a):
        key = complex(a)
        if key not in self._dist:
            self._dist[key] = distance_field(self.metric, key)
        return self._dist[key]

    def distance(self, a, pts):
        return self.field(a).at(np.asarray(pts, dtype=complex))

    def pair_distance(self, a, b):
        return float(self.distance(a, np.array([b]))[0])

    def local_distances(self, a, pts):
        """Straight-segment metric lengths (upper bounds, sharp for nearby points)."""
        return _segment_length(self.metric, complex(a), np.asarray(pts, dtype=complex))

    def _measure(self, weight):
        from .potential import riesz_measure

        key = id(weight)
        if key not in self._measures:
            self._measures[key] = (weight, riesz_measure(weight))
        return self._measures[key][1]

    def disk_parts(self, z, r, weight, green=None):
        from .potential import green_energy, green_function

        if green is None:
            disk = hyperbolic_disk(self.metric, z, r, distance=self.field(z))
            green = green_function(disk, z)
        energy = green_energy(green, self._measure(weight))

        def g(pts):
            pts = np.asarray(pts, dtype=complex)
            d = self.distance(z, pts)
            return np.where(d < r, green.at(pts), 0.0)

        return g, energy


class ModelSurface:
    def __init__(self, model: DiskModel):
        self.model = model

    def contains(self, z):
        return self.model.contains(z)

    def check_point(self, z):
        self.model.check_point(z)

    def distance(self, a, pts):
        return self.model.distance(a, pts)

    def pair_distance(self, a, b):
        return float(disk_distance(a, b))

    def local_distances(self, a, pts):
        return disk_distance(a, pts)

    def disk_parts(self, z, r, weight, green=None):
        return (lambda pts: self.model.green_r(z, r, pts)), self.model.energy(z, r, weight)


def as_surface(metric):
    if isinstance(metric, (GridSurface, ModelSurface)):
        return metric
    if isinstance(metric, DiskModel):
        return ModelSurface(metric)
    if isinstance(metric, MetricField):
        return GridSurface(metric)
    raise TypeError(f"unsupported metric object {type(metric).__name__}")


# ---------------------------------------------------------------------------
# separation


def _points(seq) -> np.ndarray:
    return seq.points if isinstance(seq, PointSequence) else np.atleast_1d(np.asarray(seq, dtype=complex))


def separation(seq, metric) -> float:
    """Half the minimum pairwise hyperbolic distance; +inf for fewer than two points."""
    pts = _points(seq)
    surf = as_surface(metric)
    for p in pts:
        surf.check_point(p)
    if pts.size < 2:
        return float("inf")
    if isinstance(surf, ModelSurface):
        best = np.inf
        for s in range(0, pts.size, 512):  # chunked to keep memory linear
            d = disk_distance(pts[s:s + 512, None], pts[None, :])
            d[np.arange(d.shape[0]), s + np.arange(d.shape[0])] = np.inf
            best = min(best, float(d.min()))
        return 0.5 * best
    from .metric import min_pair_distance

    return 0.5 * min_pair_distance(pts, surf.metric)


def is_separated(sep: float, tol: float = 1e-9) -> bool:
    return sep > tol


def separated_subsequence(seq, metric, eps: float, origin: complex | None = None) -> PointSequence:
    """Greedy maximal subsequence with pairwise distances >= 2 eps.

    Scan order: increasing distance from ``origin`` (the disk center, or the
    barycenter of the core for grid metrics), ties broken by input index.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    pts = _points(seq)
    label = seq.label if isinstance(seq, PointSequence) else "sequence"
    surf = as_surface(metric)
    if pts.size == 0:
        return PointSequence(pts, label + "/sep")
    if origin is None:
        origin = 0j if isinstance(surf, ModelSurface) else _core_barycenter(surf.metric)
    d0 = surf.distance(origin, pts)
    order = np.lexsort((np.arange(pts.size), d0))
    if not np.isfinite(eps):
        keep = [order[0]]
    else:
        keep = []
        for k in order:
            if keep:
                dd = surf.local_distances(pts[k], pts[keep])
                if np.min(dd) < 2 * eps:
                    continue
            keep.append(k)
    keep = np.sort(np.array(keep))
    out = pts[keep]
    if isinstance(seq, PointSequence):
        return PointSequence(out, label + "/sep", seq.reach_center, seq.reach_radius)
    return PointSequence(out, label + "/sep")


def _core_barycenter(metric: MetricField) -> complex:
    g = metric.grid
    z = g.z[g.mask]
    c = complex(z.mean())
    if g.contains(c):
        return c
    return complex(z[np.argmax(g.boundary_distance[g.mask])])


# ---------------------------------------------------------------------------
# densities


def partial_density(seq, weight, metric, z: complex, r: float, region_green=None,
                    inner_cutoff: float = INNER_CUTOFF) -> float:
    """Green-weighted count of points in D(z, r) over the Green energy of the weight."""
    if not r > 1:
        raise ValueError("radius must exceed 1")
    surf = as_surface(metric)
    surf.check_point(z)
    g, energy = surf.disk_parts(z, r, weight, region_green)
    if not energy > 1e-9:
        raise ValueError(f"degenerate weight on D({z}, {r}): Green energy {energy:.3g}")
    pts = _points(seq)
    if pts.size == 0:
        return 0.0
    d = surf.distance(z, pts)
    sel = (d > inner_cutoff) & (d < r)
    if not sel.any():
        return 0.0
    return float(np.sum(g(pts[sel])) / energy)


def _fit_extrapolation(radii, values):
    r = np.asarray(radii, float)
    v = np.asarray(values, float)
    A = np.column_stack([np.ones_like(r), 1.0 / r])
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    return float(coef[0]), float(coef[1]), v - A @ coef


def estimate_density(seq, weight, metric, centers, radii=RADII, mode: str = "upper",
                     inner_cutoff: float = INNER_CUTOFF, scale_energy: float = 1.0) -> DensityEstimate:
    """Sup (upper) or inf (lower) of ratios over scan centers, extrapolated in 1/r."""
    if mode not in ("upper", "lower"):
        raise ValueError("mode must be 'upper' or 'lower'")
    centers = np.atleast_1d(np.asarray(centers, dtype=complex))
    radii = np.asarray(sorted(radii), float)
    if centers.size == 0 or radii.size == 0:
        raise ValueError("empty scan set")
    surf = as_surface(metric)
    reach_c = getattr(seq, "reach_center", 0j)
    reach_r = getattr(seq, "reach_radius", float("inf"))
    d_reach = surf.distance(reach_c, centers) if np.isfinite(reach_r) else np.zeros(centers.size)
    samples = []
    per_radius = []
    dropped = 0
    agg = np.max if mode == "upper" else np.min
    for r in radii:
        vals = []
        for z, dz in zip(centers, d_reach):
            if dz + r > reach_r:
                dropped += 1
                continue
            q = partial_density(seq, weight, surf, z, r, inner_cutoff=inner_cutoff) / scale_energy
            samples.append((complex(z), float(r), q))
            vals.append(q)
        if vals:
            per_radius.append((float(r), float(agg(vals))))
    if not per_radius:
        raise ValueError("every scan center was dropped by the truncation window")
    rs = [p[0] for p in per_radius]
    vs = [p[1] for p in per_radius]
    top_r = rs[-1]
    band = [s[2] for s in samples if s[1] == top_r]
    if len(rs) >= 3:
        D, _, resid = _fit_extrapolation(rs[-3:], vs[-3:])
        spread = max(float(np.max(np.abs(resid))), 0.5 * (max(vs[-3:]) - min(vs[-3:])))
    else:
        D, spread = vs[-1], 0.5 * (max(vs) - min(vs)) if len(vs) > 1 else 0.0
    D = float(np.clip(D, min(band), max(band)))
    unc = float(max(spread, abs(D - vs[-1])))
    return DensityEstimate(mode=mode, samples=tuple(samples), value=D, uncertainty=unc,
                           inner_cutoff=inner_cutoff, per_radius=tuple(per_radius), dropped=dropped)


def _admissible(weight, metric) -> bool:
    if isinstance(weight, DiskWeight):
        probe = 0.95 * np.exp(2j * np.pi * np.arange(32) / 32) * np.linspace(0, 1, 32)
        vals = weight.invariant_fn(probe)
        return bool(np.all(vals > 1e-9) and np.all(np.isfinite(vals)))
    from .weights import laplacian_bounds

    return laplacian_bounds(weight)[2]


def _shift_for_p(weight, metric, p: float):
    """phi - phi0 with threshold 1/p, phi0 the invariant weight with Laplacian 1."""
    from .weights import lp_shift, model_weight_alpha

    if isinstance(weight, DiskWeight):
        if not p >= 1:
            raise ValueError("p must satisfy 1 <= p < inf")
        f = weight.invariant_fn
        probe = 0.95 * np.exp(2j * np.pi * np.arange(32) / 32) * np.linspace(0, 1, 32)
        if np.any(f(probe) <= 1.05):
            raise ValueError("weight's invariant Laplacian is not strictly bigger than 1 (margin 0.05)")
        v = weight.values_fn
        return DiskWeight(invariant_fn=lambda z: f(z) - 1.0,
                          values_fn=None if v is None else (lambda z: v(z) + np.log1p(-np.abs(z) ** 2)),
                          alpha=None if weight.alpha is None else weight.alpha - 1.0,
                          label=f"({weight.label})-phi0", threshold=1.0 / p)
    m = metric.metric if isinstance(metric, GridSurface) else metric
    phi0 = model_weight_alpha(m, 1.0, with_values=weight.values is not None)
    return lp_shift(weight, p, phi0)


def classify(seq, weight, metric, centers, radii=RADII, p: float | None = None,
             mode: str = "interpolation", eps: float | None = None,
             inner_cutoff: float = INNER_CUTOFF) -> Classification:
    """Compare D+ (interpolation) or D- of a separated subsequence (sampling) with the threshold."""
    if mode not in ("interpolation", "sampling"):
        raise ValueError("mode must be 'interpolation' or 'sampling'")
    if p is not None and mode == "sampling":
        raise ValueError("the L^p sampling threshold is not available; only interpolation is classified")
    surf = as_surface(metric)
    if not _admissible(weight, metric if not isinstance(metric, GridSurface) else metric.metric):
        raise ValueError("inadmissible weight: invariant Laplacian not pinched between positive constants")
    if p is not None:
        weight = _shift_for_p(weight, metric, p)
    thr = float(getattr(weight, "threshold", 1.0))
    flags = []
    if mode == "interpolation":
        sep = separation(seq, surf)
        est = estimate_density(seq, weight, surf, centers, radii, "upper", inner_cutoff)
        margin = thr - est.value
        if not is_separated(sep):
            flags.append("not separated")
            verdict = "neither-certain"
        elif abs(margin) <= est.uncertainty:
            verdict = "indeterminate"
        elif margin > 0:
            verdict = "interpolating"
        else:
            verdict = "neither-certain"
        return Classification(verdict=verdict, separation=sep, threshold=thr, upper=est,
                              margin=margin, flags=tuple(flags))
    eps = 0.25 if eps is None else eps
    sub = separated_subsequence(seq, surf, eps)
    sep = separation(sub, surf)
    est = estimate_density(sub, weight, surf, centers, radii, "lower", inner_cutoff)
    margin = est.value - thr
    if abs(margin) <= est.uncertainty:
        verdict = "indeterminate"
    elif margin > 0:
        verdict = "sampling"
    else:
        verdict = "neither-certain"
    return Classification(verdict=verdict, separation=sep, threshold=thr, lower=est,
                          margin=margin, flags=tuple(flags))


# ---------------------------------------------------------------------------
# benchmark lattices on the disk


def ring_lattice(step: float, arc: float, radius: float, twist: float = 0.5) -> PointSequence:
    """Points on hyperbolic circles of radii step, 2 step, ... around 0.

    Ring k carries round(2 pi sinh(k step) / arc) equally spaced points, so
    neighbouring points are about ``step`` apart radially and ``arc`` apart
    along the ring; successive rings are rotated by ``twist`` of a gap.
    The center itself is included.
    """
    pts = [0j]
    k = 1
    while k * step <= radius:
        t = k * step
        n = max(1, int(round(2 * np.pi * np.sinh(t) / arc)))
        ang = 2 * np.pi * (np.arange(n) + twist * (k % 2)) / n
        pts.append(np.tanh(t / 2) * np.exp(1j * ang))
        k += 1
    pts = np.concatenate([np.atleast_1d(p) for p in pts])
    return PointSequence(pts, label=f"ring(step={step:.3g},arc={arc:.3g})", reach_center=0j,
                         reach_radius=float(radius))


def scan_centers(radius: float, n_rings: int = 3, per_ring: int = 6, seed: int = 0) -> np.ndarray:
    """Quasi-uniform hyperbolic net of centers within D(0, radius)."""
    rng = np.random.default_rng(seed)
    out = [0j]
    for k in range(1, n_rings + 1):
        t = radius * k / n_rings
        phase = rng.uniform(0, 2 * np.pi)
        ang = phase + 2 * np.pi * np.arange(per_ring) / per_ring
        out.append(np.tanh(t / 2) * np.exp(1j * ang))
    return np.concatenate([np.atleast_1d(o) for o in out])
