"""Shortley-Weller finite differences on masked sub-regions of a GridDomain.

A ``Region`` is a set of unknown nodes together with, for every node and
axis direction, the arm length (in units of h) to the next node or to the
boundary crossing in that direction.  Dirichlet data are supplied as values
at the crossing points.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import DIRECTIONS, GridDomain, ray_crossing

ARM_FLOOR = 1e-3


@dataclass(frozen=True)
class Region:
    grid: GridDomain
    mask: np.ndarray
    arms: np.ndarray  # (4, ny, nx)

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    def index(self) -> np.ndarray:
        idx = np.full(self.mask.shape, -1, dtype=int)
        idx[self.mask] = np.arange(self.size)
        return idx

    def crossings(self) -> list:
        """Per direction: (flat node indices, boundary points) for boundary arms."""
        z = self.grid.z
        out = []
        for k, (di, dj) in enumerate(DIRECTIONS):
            nb = np.roll(self.mask, shift=(-di, -dj), axis=(0, 1))
            bnd = self.mask & (~nb | (self.arms[k] < 1.0))
            pts = z[bnd] + self.arms[k][bnd] * self.grid.h * complex(dj, di)
            out.append((bnd, pts))
        return out


def domain_region(grid: GridDomain) -> Region:
    return Region(grid=grid, mask=grid.mask, arms=grid.arms)


def level_region(base: Region, field: np.ndarray, level: float) -> Region:
    """Sub-region {field < level} of ``base``, crossings by linear interpolation."""
    mask = base.mask & (field < level)
    arms = np.ones_like(base.arms)
    for k, (di, dj) in enumerate(DIRECTIONS):
        nb_field = np.roll(field, shift=(-di, -dj), axis=(0, 1))
        edge = mask & ~np.roll(mask, shift=(-di, -dj), axis=(0, 1))
        nb_base = np.roll(base.mask, shift=(-di, -dj), axis=(0, 1)) & (base.arms[k] >= 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (level - field) / (nb_field - field)
        a = np.where(nb_base, t, base.arms[k])
        # the level set may also cut an edge that ends on the base boundary
        early = ~nb_base & np.isfinite(t) & (t > 0) & (t < base.arms[k])
        a = np.where(early, t, a)
        a = np.clip(np.nan_to_num(a, nan=1.0, posinf=1.0), ARM_FLOOR, None)
        arms[k] = np.where(edge, a, 1.0)
    return Region(grid=base.grid, mask=mask, arms=arms)


def curve_region(base: Region, curves, inside_mask: np.ndarray) -> Region:
    """Restrict ``base`` to nodes of ``inside_mask``, cutting edges at the given polylines."""
    mask = base.mask & inside_mask
    arms = np.ones_like(base.arms)
    z = base.grid.z
    h = base.grid.h
    for k, (di, dj) in enumerate(DIRECTIONS):
        nb_in = np.roll(mask, shift=(-di, -dj), axis=(0, 1))
        edge = mask & ~nb_in
        a = np.minimum(base.arms[k], 1.0)
        t = ray_crossing(z[edge], complex(dj, di), curves, max_len=1.5 * h) / h
        a_edge = np.minimum(a[edge], t)
        a_edge = np.maximum(a_edge, ARM_FLOOR)
        arms[k][edge] = a_edge
    return Region(grid=base.grid, mask=mask, arms=arms)


def _axis_coefficients(arms, h):
    """Second-difference and gradient weights along x and y."""
    aE, aW, aN, aS = arms
    lap = {
        0: 2.0 / (h * h * aE * (aE + aW)),
        1: 2.0 / (h * h * aW * (aE + aW)),
        2: 2.0 / (h * h * aN * (aN + aS)),
        3: 2.0 / (h * h * aS * (aN + aS)),
    }
    grad = {
        0: aW / (h * aE * (aE + aW)),
        1: -aE / (h * aW * (aE + aW)),
        2: aS / (h * aN * (aN + aS)),
        3: -aN / (h * aS * (aN + aS)),
    }
    return lap, grad


@dataclass
class Operators:
    """Sparse discrete operators on a region, plus boundary coupling.

    For nodal values u and crossing values b_k:
        Lap u = L @ u + sum_k lb[k] * b_k
        d/dx u = Gx @ u + sum_k gxb[k] * b_k   (and similarly for y)
    where b_k is scattered per node (zero where direction k is interior).
    """

    region: Region
    L: sp.csr_matrix
    Gx: sp.csr_matrix
    Gy: sp.csr_matrix
    lb: list
    gxb: list
    gyb: list
    bnodes: list  # per direction: boolean over region unknowns
    bpoints: list  # per direction: complex crossing points

    def boundary_vectors(self, values) -> list:
        """Scatter per-direction crossing values into unknown-length vectors."""
        out = []
        for k in range(4):
            v = np.zeros(self.region.size, dtype=np.result_type(values[k], float))
            v[self.bnodes[k]] = values[k]
            out.append(v)
        return out

    def lap_rhs(self, values) -> np.ndarray:
        b = self.boundary_vectors(values)
        return sum(self.lb[k] * b[k] for k in range(4))

    def grad_rhs(self, values):
        b = self.boundary_vectors(values)
        gx = sum(self.gxb[k] * b[k] for k in range(4))
        gy = sum(self.gyb[k] * b[k] for k in range(4))
        return gx, gy


def build_operators(region: Region) -> Operators:
    h = region.grid.h
    idx = region.index()
    n = region.size
    sel = region.mask
    arms = [region.arms[k][sel] for k in range(4)]
    lapc, gradc = _axis_coefficients(arms, h)
    rows_L, cols_L, vals_L = [], [], []
    rows_x, cols_x, vals_x = [], [], []
    rows_y, cols_y, vals_y = [], [], []
    diag_L = np.zeros(n)
    diag_x = np.zeros(n)
    diag_y = np.zeros(n)
    lb, gxb, gyb, bnodes, bpoints = [], [], [], [], []
    me = np.arange(n)
    crossings = region.crossings()
    for k, (di, dj) in enumerate(DIRECTIONS):
        nb_idx = np.roll(idx, shift=(-di, -dj), axis=(0, 1))[sel]
        bnd_full, pts = crossings[k]
        bnd = bnd_full[sel]
        interior = ~bnd
        diag_L -= lapc[k]
        rows_L.append(me[interior])
        cols_L.append(nb_idx[interior])
        vals_L.append(lapc[k][interior])
        lb.append(np.where(bnd, lapc[k], 0.0))
        g = gradc[k]
        if k < 2:
            diag_x -= g
            rows_x.append(me[interior])
            cols_x.append(nb_idx[interior])
            vals_x.append(g[interior])
            gxb.append(np.where(bnd, g, 0.0))
            gyb.append(np.zeros(n))
        else:
            diag_y -= g
            rows_y.append(me[interior])
            cols_y.append(nb_idx[interior])
            vals_y.append(g[interior])
            gyb.append(np.where(bnd, g, 0.0))
            gxb.append(np.zeros(n))
        bnodes.append(bnd)
        bpoints.append(pts)

    def assemble(rows, cols, vals, diag):
        r = np.concatenate(rows + [me])
        c = np.concatenate(cols + [me])
        v = np.concatenate(vals + [diag])
        return sp.csr_matrix((v, (r, c)), shape=(n, n))

    return Operators(
        region=region,
        L=assemble(rows_L, cols_L, vals_L, diag_L),
        Gx=assemble(rows_x, cols_x, vals_x, diag_x),
        Gy=assemble(rows_y, cols_y, vals_y, diag_y),
        lb=lb, gxb=gxb, gyb=gyb, bnodes=bnodes, bpoints=bpoints,
    )


def solve_poisson(ops: Operators, rhs: np.ndarray, boundary_fn=None) -> np.ndarray:
    """Solve Lap u = rhs on the region with u = boundary_fn(point) on crossings."""
    b = np.asarray(rhs, dtype=float).copy()
    if boundary_fn is not None:
        vals = [boundary_fn(p) if p.size else np.zeros(0) for p in ops.bpoints]
        b = b - ops.lap_rhs(vals)
    try:
        u = spla.spsolve(ops.L.tocsc(), b)
    except RuntimeError as exc:  # singular factorization
        raise RuntimeError(f"linear solve failed: {exc}") from None
    if not np.all(np.isfinite(u)):
        raise RuntimeError("linear solve failed: non-finite solution")
    return u


def scatter(region: Region, values: np.ndarray, fill=np.nan) -> np.ndarray:
    out = np.full(region.mask.shape, fill, dtype=np.result_type(values, float))
    out[region.mask] = values
    return out


def five_point_laplacian(field: np.ndarray, mask: np.ndarray, h: float) -> np.ndarray:
    """Plain 5-point Laplacian where all four neighbours are in ``mask``; nan elsewhere."""
    out = np.full(field.shape, np.nan)
    inner = mask.copy()
    for di, dj in DIRECTIONS:
        inner &= np.roll(mask, shift=(-di, -dj), axis=(0, 1))
    f = np.where(mask, field, 0.0)
    lap = (np.roll(f, -1, 0) + np.roll(f, 1, 0) + np.roll(f, -1, 1) + np.roll(f, 1, 1) - 4 * f) / (h * h)
    out[inner] = lap[inner]
    return out


def harmonic_conjugate(values: np.ndarray, mask: np.ndarray, h: float, anchor=None) -> np.ndarray:
    """Least-squares harmonic conjugate of a lattice function on a simply connected mask.

    Edge increments of the conjugate differential ``-u_y dx + u_x dy`` are
    estimated with the trapezoid rule from centred gradients and integrated
    by solving the graph Laplacian normal equations.  The conjugate is pinned
    to zero at ``anchor`` (the first mask node by default).
    """
    u = np.where(mask, values, 0.0)
    gx = np.full(u.shape, np.nan)
    gy = np.full(u.shape, np.nan)
    inner_x = mask & np.roll(mask, 1, 1) & np.roll(mask, -1, 1)
    inner_y = mask & np.roll(mask, 1, 0) & np.roll(mask, -1, 0)
    gx[inner_x] = ((np.roll(u, -1, 1) - np.roll(u, 1, 1)) / (2 * h))[inner_x]
    gy[inner_y] = ((np.roll(u, -1, 0) - np.roll(u, 1, 0)) / (2 * h))[inner_y]
    # one-sided fallback on the rim
    fx = mask & ~inner_x
    right = fx & np.roll(mask, -1, 1)
    left = fx & ~right & np.roll(mask, 1, 1)
    gx[right] = ((np.roll(u, -1, 1) - u) / h)[right]
    gx[left] = ((u - np.roll(u, 1, 1)) / h)[left]
    fy = mask & ~inner_y
    up = fy & np.roll(mask, -1, 0)
    down = fy & ~up & np.roll(mask, 1, 0)
    gy[up] = ((np.roll(u, -1, 0) - u) / h)[up]
    gy[down] = ((u - np.roll(u, 1, 0)) / h)[down]
    gx = np.nan_to_num(gx)
    gy = np.nan_to_num(gy)

    idx = np.full(mask.shape, -1, dtype=int)
    n = int(mask.sum())
    idx[mask] = np.arange(n)
    rows, cols, vals, rhs_parts = [], [], [], []
    # horizontal edges: increment = integral of -u_y dx
    ex = mask & np.roll(mask, -1, 1)
    a = idx[ex]
    b = np.roll(idx, -1, 1)[ex]
    inc_x = -0.5 * h * (gy[ex] + np.roll(gy, -1, 1)[ex])
    ey = mask & np.roll(mask, -1, 0)
    c = idx[ey]
    d = np.roll(idx, -1, 0)[ey]
    inc_y = 0.5 * h * (gx[ey] + np.roll(gx, -1, 0)[ey])
    m_x, m_y = len(a), len(c)
    e = np.arange(m_x + m_y)
    rows = np.concatenate([e[:m_x], e[:m_x], e[m_x:], e[m_x:]])
    cols = np.concatenate([b, a, d, c])
    vals = np.concatenate([np.ones(m_x), -np.ones(m_x), np.ones(m_y), -np.ones(m_y)])
    D = sp.csr_matrix((vals, (rows, cols)), shape=(m_x + m_y, n))
    rhs = np.concatenate([inc_x, inc_y])
    if anchor is None:
        k0 = 0
    else:
        k0 = idx[anchor]
    keep = np.ones(n, dtype=bool)
    keep[k0] = False
    Dk = D[:, keep]
    M = (Dk.T @ Dk).tocsc()
    sol = spla.spsolve(M, Dk.T @ rhs)
    out = np.full(mask.shape, np.nan)
    full = np.zeros(n)
    full[keep] = sol
    out[mask] = full
    return out
