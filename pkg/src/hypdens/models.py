"""Closed-form model surfaces: the unit disk and the round annulus.

The disk model is exact (Mobius-invariant formulas) and serves both as an
independent oracle for the grid pipeline and as a fast backend for
benchmarks whose ground truth lives on the disk.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Gauss-Legendre nodes for radial quadrature in hyperbolic polar coordinates
_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


def mobius(a: complex, z):
    """The involutive automorphism z -> (a - z) / (1 - conj(a) z)."""
    z = np.asarray(z, dtype=complex)
    return (a - z) / (1 - np.conj(a) * z)


def automorphism(theta: float, a: complex):
    """z -> e^{i theta} (z - a) / (1 - conj(a) z)."""
    rot = np.exp(1j * theta)

    def f(z):
        z = np.asarray(z, dtype=complex)
        return rot * (z - a) / (1 - np.conj(a) * z)

    def inv(w):
        w = np.asarray(w, dtype=complex) / rot
        return (w + a) / (1 + np.conj(a) * w)

    return f, inv


def disk_distance(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    t = np.abs((a - b) / (1 - np.conj(a) * b))
    return 2 * np.arctanh(np.minimum(t, 1 - 1e-16))


def disk_green_r(z: complex, r: float, w) -> np.ndarray:
    """Green function of D(z, r) with pole z: log(tanh(r/2) / tanh(d/2)), zero outside."""
    d = disk_distance(z, w)
    with np.errstate(divide="ignore"):
        g = np.log(np.tanh(r / 2) / np.tanh(d / 2))
    return np.where(d < r, g, 0.0)


def disk_nu(z) -> np.ndarray:
    return np.log(2 / (1 - np.abs(np.asarray(z)) ** 2))


def disk_energy_constant(alpha: float, r: float) -> float:
    """Green energy of the alpha-invariant weight on D(z, r): 2 alpha log cosh(r/2)."""
    return 2 * alpha * np.log(np.cosh(r / 2))


def disk_energy(z: complex, r: float, invariant_fn, n_theta: int = 64) -> float:
    """(1/2pi) * integral of g_r(z, .) times the invariant Laplacian over D(z, r), hyperbolic area.

    Polar quadrature around z: w = M_z(tanh(t/2) e^{i theta}),
    dA_hyp = sinh t dt dtheta.
    """
    t = 0.5 * r * (_GL_X + 1)
    wt = 0.5 * r * _GL_W
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    zeta = np.tanh(t / 2)[:, None] * np.exp(1j * th)[None, :]
    w = mobius(z, zeta)
    inv = invariant_fn(w)
    g = np.log(np.tanh(r / 2) / np.tanh(t / 2))
    radial = np.mean(inv, axis=1) * g * np.sinh(t)
    return float(np.sum(wt * radial))


@dataclass(frozen=True)
class DiskModel:
    """Exact unit-disk surface used by density scans and oracles."""

    rim: float = 0.999999

    def contains(self, z: complex) -> bool:
        return abs(z) < 1.0

    def check_point(self, z: complex) -> None:
        if not abs(z) < 1.0:
            raise ValueError(f"point {z} is outside the domain")

    def distance(self, a: complex, pts) -> np.ndarray:
        self.check_point(a)
        return disk_distance(a, pts)

    def green_r(self, z: complex, r: float, pts) -> np.ndarray:
        return disk_green_r(z, r, pts)

    def energy(self, z: complex, r: float, weight) -> float:
        alpha = getattr(weight, "alpha", None)
        if alpha is not None:
            return disk_energy_constant(alpha, r)
        return disk_energy(z, r, weight.invariant_fn)

    def hyperbolic_radius_to_euclid(self, r: float) -> float:
        return float(np.tanh(r / 2))

    def density(self, z) -> np.ndarray:
        """Conformal density e^nu = 2 / (1 - |z|^2)."""
        return 2 / (1 - np.abs(np.asarray(z)) ** 2)


@dataclass(frozen=True)
class DiskWeight:
    """Weight on the model disk given by callables (no lattice)."""

    invariant_fn: object
    values_fn: object = None
    alpha: float | None = None
    label: str = "disk weight"
    threshold: float = 1.0

    def scaled(self, c: float) -> "DiskWeight":
        f, v = self.invariant_fn, self.values_fn
        return DiskWeight(invariant_fn=lambda z: c * f(z),
                          values_fn=None if v is None else (lambda z: c * v(z)),
                          alpha=None if self.alpha is None else c * self.alpha,
                          label=f"{c:g}*{self.label}", threshold=self.threshold)


def disk_alpha_weight(alpha: float, threshold: float = 1.0) -> DiskWeight:
    if not alpha > 0:
        raise ValueError("alpha must be positive (the lower Laplacian bound fails otherwise)")
    return DiskWeight(invariant_fn=lambda z: np.full(np.shape(z), float(alpha)),
                      values_fn=lambda z: -alpha * np.log1p(-np.abs(np.asarray(z)) ** 2),
                      alpha=float(alpha), label=f"alpha={alpha:g}", threshold=threshold)


def pushforward_weight(weight: DiskWeight, inverse_map) -> DiskWeight:
    """phi o rho^{-1}: invariant Laplacian is transported unchanged."""
    f = weight.invariant_fn
    v = weight.values_fn
    return DiskWeight(invariant_fn=lambda z: f(inverse_map(z)),
                      values_fn=None if v is None else (lambda z: v(inverse_map(z))),
                      alpha=weight.alpha, label=weight.label, threshold=weight.threshold)


# ---------------------------------------------------------------------------
# round annulus e^{-R} < |z| < e^{R}


def annulus_density(R: float, z) -> np.ndarray:
    """Conformal density (pi / 2R) sec(pi log|z| / 2R) / |z|."""
    z = np.asarray(z)
    s = np.log(np.abs(z))
    return (np.pi / (2 * R)) / np.cos(np.pi * s / (2 * R)) / np.abs(z)


def annulus_geodesic_length(R: float) -> float:
    """Length of the core circle |z| = 1: pi^2 / R."""
    return np.pi**2 / R


@dataclass(frozen=True)
class AnnulusModel:
    """Exact round annulus r_in < |z - center| < r_out.

    Distances use the universal cover: s = (pi / 2R) log((z - c) / sqrt(r_in r_out))
    lies in the strip |Re s| < pi/2, and tan(s / 2) maps the strip onto the
    unit disk.  Deck translations shift s by i pi^2 / R.
    """

    r_in: float
    r_out: float
    center: complex = 0j
    deck_terms: int = 3

    @property
    def collar(self) -> float:
        return 0.5 * np.log(self.r_out / self.r_in)

    def _s(self, z):
        z = np.asarray(z, dtype=complex)
        w = np.log((z - self.center) / np.sqrt(self.r_in * self.r_out))
        return np.pi * w / (2 * self.collar)

    def contains(self, z) -> bool:
        r = abs(complex(z) - self.center)
        return self.r_in < r < self.r_out

    def check_point(self, z) -> None:
        if not self.contains(z):
            raise ValueError(f"point {z} is outside the domain")

    def density(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        s = np.sqrt(self.r_in * self.r_out)
        return annulus_density(self.collar, (z - self.center) / s) / s

    def distance(self, a: complex, pts) -> np.ndarray:
        self.check_point(a)
        sa = self._s(a)
        sb = self._s(pts)
        period = 1j * np.pi**2 / self.collar
        xa = np.tan(sa / 2)
        best = np.full(np.shape(sb), np.inf)
        for k in range(-self.deck_terms, self.deck_terms + 1):
            best = np.minimum(best, disk_distance(xa, np.tan((sb + k * period) / 2)))
        return best


# ---------------------------------------------------------------------------
# regular tessellations {p, q}: p-gons, q meeting at each vertex


def _su11(a: complex, theta: float = 0.0) -> np.ndarray:
    """Matrix of z -> e^{i theta} (z + a) / (1 + conj(a) z)."""
    rot = np.exp(0.5j * theta)
    return np.array([[rot, rot * a], [np.conj(rot * a), np.conj(rot)]]) / np.sqrt(1 - abs(a) ** 2)


def _apply(M: np.ndarray, z):
    z = np.asarray(z, dtype=complex)
    return (M[0, 0] * z + M[0, 1]) / (M[1, 0] * z + M[1, 1])


def tessellation_density(p: int, q: int, kind: str = "vertex") -> float:
    """Points per unit hyperbolic area of the vertex / edge-midpoint / face-center orbit."""
    face = np.pi * ((p - 2) - 2 * p / q)
    per_face = {"vertex": p / q, "edge": p / 2, "face": 1.0}[kind]
    return per_face / face


def regular_tessellation(p: int, q: int, radius: float, kind: str = "vertex") -> np.ndarray:
    """Vertices (or edge midpoints, face centers) of {p, q} within hyperbolic radius of 0.

    A vertex sits at the origin.  Each vertex carries a frame (an SU(1,1)
    matrix) whose q edge directions are e^{2 pi i k / q}; stepping along an
    edge composes with the unit edge translation.
    """
    if (p - 2) * (q - 2) <= 4:
        raise ValueError("{p, q} must be hyperbolic: (p - 2)(q - 2) > 4")
    if kind == "face":
        pts = regular_tessellation(q, p, radius + 2.0, "vertex")
        return pts[disk_distance(0, pts) <= radius]
    ell = 2 * np.arccosh(np.cos(np.pi / p) / np.sin(np.pi / q))
    a = np.tanh(ell / 2)
    steps = [_su11(0, 2 * np.pi * k / q) @ _su11(a) @ _su11(0, np.pi) for k in range(q)]
    limit = np.tanh((radius + ell) / 2)
    frames = [np.eye(2, dtype=complex)]
    seen = {(0, 0)}
    queue = [frames[0]]
    key = lambda z: (round(z.real * 1e7), round(z.imag * 1e7))
    while queue:
        nxt = []
        for F in queue:
            for S in steps:
                G = F @ S
                z = _apply(G, 0)
                if abs(z) > limit or key(z) in seen:
                    continue
                seen.add(key(z))
                frames.append(G)
                nxt.append(G)
        queue = nxt
    if kind == "vertex":
        pts = np.array([_apply(F, 0) for F in frames])
    elif kind == "edge":
        mids = np.tanh(ell / 4) * np.exp(2j * np.pi * np.arange(q) / q)
        allm = np.concatenate([_apply(F, mids) for F in frames])
        _, first = np.unique(np.round(allm * 1e7), return_index=True)
        pts = allm[np.sort(first)]
    else:
        raise ValueError("kind must be vertex, edge or face")
    return pts[disk_distance(0, pts) <= radius]
