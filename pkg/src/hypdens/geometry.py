"""Finitely connected planar domains and their lattice discretization.

A domain is stored as dense closed polylines: the outer curve first
(counterclockwise) followed by the holes (clockwise).  ``build_grid`` turns
it into a node lattice with a conservative interior mask: a node belongs to
the mask only if it keeps a clearance of ``MASK_CLEARANCE * h`` from every
boundary curve, so Shortley-Weller arms never degenerate.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import LinearRing, Polygon

# E, W, N, S unit steps as (di, dj) in (row=y, col=x) index order
DIRECTIONS = ((0, 1), (0, -1), (1, 0), (-1, 0))
# mask nodes keep at least this many grid spacings from the boundary
MASK_CLEARANCE = 0.2


@dataclass(frozen=True)
class DomainSpec:
    name: str
    curves: tuple  # tuple of complex ndarrays, open (last != first)

    @property
    def connectivity(self) -> int:
        return len(self.curves)

    @property
    def outer(self) -> np.ndarray:
        return self.curves[0]

    @property
    def holes(self) -> tuple:
        return self.curves[1:]

    def polygon(self) -> Polygon:
        return Polygon(_xy(self.outer), [_xy(c) for c in self.holes])


def _xy(curve: np.ndarray) -> np.ndarray:
    return np.column_stack([curve.real, curve.imag])


def signed_area(curve: np.ndarray) -> float:
    x, y = curve.real, curve.imag
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _densify(curve: np.ndarray, n_min: int) -> np.ndarray:
    if len(curve) >= n_min:
        return curve
    closed = np.append(curve, curve[0])
    seg = np.abs(np.diff(closed))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.linspace(0.0, s[-1], n_min, endpoint=False)
    return np.interp(t, s, closed.real) + 1j * np.interp(t, s, closed.imag)


def make_domain(name: str, curves, min_samples: int = 128) -> DomainSpec:
    """Validate curves and normalize orientation (outer ccw, holes cw)."""
    if len(curves) < 1:
        raise ValueError("domain needs at least one curve")
    fixed = []
    for k, c in enumerate(curves):
        c = np.asarray(c, dtype=complex)
        if len(c) < 3:
            raise ValueError(f"curve {k} has fewer than 3 samples")
        c = _densify(c, min_samples)
        area = signed_area(c)
        if area == 0.0:
            raise ValueError(f"curve {k} is degenerate")
        want_ccw = k == 0
        if (area > 0) != want_ccw:
            c = c[::-1]
        if not LinearRing(_xy(c)).is_simple:
            raise ValueError(f"curve {k} intersects itself")
        fixed.append(c)
    outer = Polygon(_xy(fixed[0]))
    holes = [Polygon(_xy(c)) for c in fixed[1:]]
    for k, hp in enumerate(holes, start=1):
        if not outer.contains(hp):
            if outer.exterior.intersects(hp.exterior):
                raise ValueError(f"curve {k} intersects the outer curve")
            raise ValueError(f"hole {k} lies outside the outer curve")
    for a in range(len(holes)):
        for b in range(a + 1, len(holes)):
            if holes[a].intersects(holes[b]):
                raise ValueError(f"holes {a + 1} and {b + 1} intersect")
    return DomainSpec(name=name, curves=tuple(fixed))


def parse_domain(text: str, min_samples: int = 128) -> DomainSpec:
    """Parse the JSON domain format ``{"name": ..., "curves": [[[x, y], ...], ...]}``.

    A curve must repeat its first sample at the end unless the document sets
    ``"closed": true``.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed domain file: {exc}") from None
    if not isinstance(doc, dict) or "curves" not in doc:
        raise ValueError("malformed domain file: missing 'curves'")
    closed_flag = bool(doc.get("closed", False))
    curves = []
    for k, raw in enumerate(doc["curves"]):
        try:
            pts = np.asarray(raw, dtype=float)
        except (TypeError, ValueError):
            raise ValueError(f"malformed domain file: curve {k}") from None
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"malformed domain file: curve {k} is not a list of [x, y]")
        c = pts[:, 0] + 1j * pts[:, 1]
        if len(c) > 1 and c[0] == c[-1]:
            c = c[:-1]
        elif not closed_flag:
            raise ValueError(f"open curve: curve {k} does not end at its first sample")
        curves.append(c)
    return make_domain(str(doc.get("name", "domain")), curves, min_samples=min_samples)


def serialize_domain(domain: DomainSpec) -> str:
    curves = []
    for c in domain.curves:
        closed = np.append(c, c[0])
        curves.append([[float(z.real), float(z.imag)] for z in closed])
    return json.dumps({"name": domain.name, "curves": curves})


def circle(center: complex, radius: float, n: int = 256) -> np.ndarray:
    t = 2 * np.pi * np.arange(n) / n
    return center + radius * np.exp(1j * t)


def disk_domain(n: int = 256) -> DomainSpec:
    return make_domain("unit-disk", [circle(0, 1.0, n)])


def annulus_domain(r_in: float, r_out: float, n: int = 256) -> DomainSpec:
    return make_domain("annulus", [circle(0, r_out, n), circle(0, r_in, n)])


def collar_annulus(R: float, n: int = 512) -> DomainSpec:
    """The annulus exp(-R) < |z| < exp(R), whose core geodesic has length pi^2/R."""
    return annulus_domain(np.exp(-R), np.exp(R), n)


def three_circle_domain(n: int = 256) -> DomainSpec:
    return make_domain(
        "three-circles",
        [circle(0, 1.0, n), circle(-0.45, 0.2, n), circle(0.45, 0.2, n)],
    )


def _segments(curves):
    a = np.concatenate([c for c in curves])
    b = np.concatenate([np.roll(c, -1) for c in curves])
    owner = np.concatenate([np.full(len(c), k) for k, c in enumerate(curves)])
    return a, b, owner


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray, k_near: int = 6):
    """Distance from points ``p`` to the nearest of segments ``a -> b`` and its index.

    Candidate segments are those starting or ending at the ``k_near`` closest
    vertices, which is exact for the dense, evenly sampled polylines used here.
    """
    from scipy.spatial import cKDTree

    p = np.asarray(p, dtype=complex).ravel()
    if p.size == 0:
        return np.zeros(0), np.zeros(0, dtype=int)
    k_near = min(k_near, len(a))
    tree = cKDTree(np.column_stack([a.real, a.imag]))
    _, near = tree.query(np.column_stack([p.real, p.imag]), k=k_near)
    near = near.reshape(len(p), k_near)
    # segment k starts at vertex k; the segment ending at vertex k starts at prev[k]
    prev = _previous_vertex(a, b)
    cand = np.concatenate([near, prev[near]], axis=1)
    A, B = a[cand], b[cand]
    AB = B - A
    t = np.clip(((p[:, None] - A) * AB.conj()).real / np.abs(AB) ** 2, 0.0, 1.0)
    d = np.abs(p[:, None] - (A + t * AB))
    j = np.argmin(d, axis=1)
    rows = np.arange(len(p))
    return d[rows, j], cand[rows, j]


def _previous_vertex(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # b[k] == a[next(k)], so the segment ending at vertex k is the one whose b equals a[k]
    lookup = {complex(z): k for k, z in enumerate(b)}
    return np.array([lookup.get(complex(z), k) for k, z in enumerate(a)])


def ray_crossing(p: np.ndarray, direction: complex, curves, max_len: float) -> np.ndarray:
    """Distance along an axis ray from each point to the first polyline crossing.

    ``direction`` must be one of 1, -1, 1j, -1j.  Returns ``inf`` when no
    crossing occurs within ``max_len``.
    """
    p = np.asarray(p, dtype=complex).ravel()
    out = np.full(p.shape, np.inf)
    if p.size == 0:
        return out
    a, b, _ = _segments(curves)
    # rotate so the ray points along +x
    rot = np.conj(direction)
    pa, pb, pp = a * rot, b * rot, p * rot
    for s in range(0, len(pp), 2048):
        q = pp[s:s + 2048, None]
        ya, yb = pa.imag[None, :], pb.imag[None, :]
        dy = yb - ya
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (q.imag - ya) / dy
            x = pa.real[None, :] + t * (pb.real - pa.real)[None, :]
        ok = (dy != 0) & (t >= 0) & (t <= 1)
        dist = np.where(ok, x - q.real, np.inf)
        dist = np.where(dist > 0, dist, np.inf)
        out[s:s + 2048] = dist.min(axis=1)
    out[out > max_len] = np.inf
    return out


@dataclass(frozen=True)
class GridDomain:
    h: float
    x0: float
    y0: float
    shape: tuple  # (ny, nx)
    inside: np.ndarray  # node strictly inside the domain
    mask: np.ndarray  # conservative interior mask
    boundary_distance: np.ndarray  # Euclidean distance to the boundary, 0 outside
    signed_distance: np.ndarray  # positive inside, negative outside
    nearest_curve: np.ndarray  # index of the closest boundary curve
    arms: np.ndarray = field(repr=False)  # (4, ny, nx) arm lengths / h to the boundary for mask nodes
    source: DomainSpec = field(repr=False, default=None)

    @property
    def xs(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.shape[1])

    @property
    def ys(self) -> np.ndarray:
        return self.y0 + self.h * np.arange(self.shape[0])

    @property
    def z(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys)
        return X + 1j * Y

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    def mask_area(self) -> float:
        return float(self.mask.sum()) * self.cell_area

    def index_of(self, z: complex) -> tuple:
        j = int(round((z.real - self.x0) / self.h))
        i = int(round((z.imag - self.y0) / self.h))
        return i, j

    def contains(self, z: complex) -> bool:
        """True when z lies in a cell of the interior mask."""
        i, j = self.index_of(z)
        if not (0 <= i < self.shape[0] and 0 <= j < self.shape[1]):
            return False
        return bool(self.mask[i, j])


def build_grid(domain: DomainSpec, h: float, margin: int = 3) -> GridDomain:
    if not h > 0:
        raise ValueError(f"grid spacing must be positive, got {h}")
    outer = domain.outer
    xmin, xmax = outer.real.min(), outer.real.max()
    ymin, ymax = outer.imag.min(), outer.imag.max()
    x0 = xmin - margin * h
    y0 = ymin - margin * h
    nx = int(np.ceil((xmax - xmin) / h)) + 2 * margin + 1
    ny = int(np.ceil((ymax - ymin) / h)) + 2 * margin + 1
    xs = x0 + h * np.arange(nx)
    ys = y0 + h * np.arange(ny)
    X, Y = np.meshgrid(xs, ys)
    Z = X + 1j * Y

    poly = domain.polygon()
    inside = shapely.contains_xy(poly, X, Y)

    a, b, owner = _segments(domain.curves)
    d, seg = point_segment_distance(Z.ravel(), a, b)
    dist = d.reshape(Z.shape)
    nearest = owner[seg].reshape(Z.shape)

    mask = inside & (dist >= MASK_CLEARANCE * h)
    if not mask.any():
        raise ValueError("grid spacing too coarse: empty interior mask")

    # every curve must be separated from the others by interior cells
    for k in range(domain.connectivity):
        if not np.any(mask & (nearest == k)):
            raise ValueError(f"grid spacing too coarse to resolve boundary curve {k}")
    _, ncomp = _label(mask)
    if ncomp != 1:
        raise ValueError("grid spacing too coarse: interior mask is disconnected")

    arms = np.ones((4,) + Z.shape)
    for k, (di, dj) in enumerate(DIRECTIONS):
        need = mask & ~np.roll(mask, shift=(-di, -dj), axis=(0, 1))
        # grazing rays: the excluded neighbour itself (within MASK_CLEARANCE*h
        # of the boundary) serves as the Dirichlet point
        t = ray_crossing(Z[need], complex(dj, di), domain.curves, max_len=h)
        arms[k][need] = np.minimum(t / h, 1.0)
    return GridDomain(
        h=float(h), x0=float(x0), y0=float(y0), shape=Z.shape, inside=inside, mask=mask,
        boundary_distance=np.where(inside, dist, 0.0),
        signed_distance=np.where(inside, dist, -dist), nearest_curve=nearest, arms=arms,
        source=domain,
    )


def _label(mask):
    from scipy import ndimage

    return ndimage.label(mask)


def boundary_distance(grid: GridDomain, z: complex) -> float:
    """Exact Euclidean distance from an interior point to the boundary polylines."""
    if not grid.contains(z):
        raise ValueError(f"point {z} is outside the domain")
    a, b, _ = _segments(grid.source.curves)
    d, _ = point_segment_distance(np.array([z]), a, b)
    return float(d[0])


def polygon_area(domain: DomainSpec) -> float:
    """Area enclosed by the curves, from the shoelace (boundary integral) formula."""
    return abs(signed_area(domain.outer)) - sum(abs(signed_area(c)) for c in domain.holes)
