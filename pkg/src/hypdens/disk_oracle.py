"""Brute-force interpolation and sampling constants on the unit disk.

Functions are polynomials of degree < n.  For p = inf the weighted sup norm
sup |f| e^{-phi} is discretized on a polar grid in |z| <= 0.995 and the
minimal-norm interpolant is a linear program (polygonal modulus
constraints, added lazily where the current solution violates them).  For
p = 2 the norm is the integral of |f|^2 e^{-phi} dA_hyp and the constant is
1 / sqrt(lambda_min(E^{1/2} K E^{1/2})) with K the truncated reproducing
kernel on the nodes and E = diag(e^{-phi(lambda)}).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.special import betaln

from .models import DiskModel, disk_alpha_weight, regular_tessellation, tessellation_density

RIM = 0.995
POLYGON_SIDES = 16
COND_LIMIT = 1e13


class InfeasibleInterpolation(ValueError):
    pass


class IllConditioned(ArithmeticError):
    """The solve lost accuracy; the oracle verdict for this cell is inconclusive."""


@dataclass(frozen=True)
class OracleReport:
    label: str
    weight: str
    p: float
    dims: tuple
    constants: tuple
    node_counts: tuple
    verdict: str  # bounded | blow-up | inconclusive
    target: float = float("nan")
    measured_density: float = float("nan")
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# grids and bases


class PolarGrid:
    """Origin plus an (n_r, n_t) polar lattice in |z| <= rim, radii clustered toward the rim."""

    def __init__(self, n: int, rim: float = RIM):
        self.n_r = max(64, 2 * n)
        self.n_t = max(64, 4 * n)
        s = (np.arange(self.n_r) + 0.5) / self.n_r
        self.radii = rim * np.sqrt(1 - (1 - s) ** 2)
        self.angles = 2 * np.pi * np.arange(self.n_t) / self.n_t
        ring = (self.radii[:, None] * np.exp(1j * self.angles)[None, :]).ravel()
        self.points = np.concatenate([[0j], ring])

    @property
    def size(self) -> int:
        return self.points.size

    def local_maxima(self, vals: np.ndarray) -> np.ndarray:
        """Indices whose value is >= every neighbour (periodic in angle)."""
        V = vals[1:].reshape(self.n_r, self.n_t)
        P = np.pad(V, ((1, 1), (0, 0)), constant_values=-np.inf)
        P[0] = vals[0]
        ok = np.ones_like(V, dtype=bool)
        for dr in (-1, 0, 1):
            for dt in (-1, 0, 1):
                if dr == 0 and dt == 0:
                    continue
                nb = np.roll(P[1 + dr:1 + dr + self.n_r], -dt, axis=1)
                ok &= V >= nb
        idx = 1 + np.flatnonzero(ok.ravel())
        if vals[0] >= V[0].max():
            idx = np.concatenate([[0], idx])
        return idx

    def coarse(self, n: int, step: float = 0.75) -> np.ndarray:
        """Rings spaced evenly in hyperbolic radius, angular spacing about one hyperbolic unit."""
        t_rim = 2 * np.arctanh(self.radii[-1])
        picked = [np.array([0])]
        for t in np.arange(step, t_rim + 1e-9, step):
            i = int(np.argmin(np.abs(self.radii - np.tanh(t / 2))))
            m = int(min(self.n_t, 2 * n, 8 + np.ceil(2 * np.pi * np.sinh(t))))
            cols = np.linspace(0, self.n_t, m, endpoint=False).astype(int)
            picked.append(1 + i * self.n_t + cols)
        return np.unique(np.concatenate(picked))


def polar_grid(n: int, rim: float = RIM) -> np.ndarray:
    """Points of the evaluation grid (at least 64 x 64 in |z| <= rim)."""
    return PolarGrid(n, rim).points


def _weight_values(weight, z):
    if weight.values_fn is None:
        raise ValueError("the oracle needs weight values on the disk")
    return weight.values_fn(z)


def _monomials(z, n, log_scale):
    """z^k * exp(-log_scale[k]) for k < n, computed in log space."""
    z = np.asarray(z, dtype=complex)
    k = np.arange(n)
    zero = z == 0
    logr = np.log(np.where(zero, 1.0, np.abs(z)))
    mag = np.exp(np.clip(logr[:, None] * k[None, :] - log_scale[None, :], -745, 700))
    out = mag * np.exp(1j * np.angle(z)[:, None] * k[None, :])
    out[zero, 1:] = 0
    return out


def _sup_log_scale(weight, n, grid):
    """log of the weighted sup norm of each monomial on the grid."""
    phi = _weight_values(weight, grid)
    logr = np.log(np.maximum(np.abs(grid), 1e-300))
    k = np.arange(n)
    return np.max(logr[:, None] * k[None, :] - phi[:, None], axis=0)


# ---------------------------------------------------------------------------
# p = 2


def _bergman_log_norms(weight, n):
    """log ||z^k||^2 in L^2(e^{-phi} dA_hyp), closed form for the alpha weight."""
    alpha = getattr(weight, "alpha", None)
    k = np.arange(n)
    if alpha is not None:
        if not alpha > 1:
            raise ValueError("the L^2 space is trivial unless the weight's Laplacian exceeds 1")
        # 2 pi * 4 * B(k+1, alpha-1) / 2
        return np.log(4 * np.pi) + betaln(k + 1, alpha - 1)
    raise ValueError("non-radial weights need the numerical Gram matrix")


def _gram(weight, n, n_r=400, n_t=None):
    """Gram matrix of scaled monomials in L^2(e^{-phi} dA_hyp) by polar quadrature."""
    x, w = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * (x + 1) * (1 - 1e-9)
    wr = 0.5 * w
    n_t = n_t or max(64, 4 * n)
    th = 2 * np.pi * np.arange(n_t) / n_t
    Z = (r[:, None] * np.exp(1j * th)[None, :]).ravel()
    dens = np.exp(-_weight_values(weight, Z)) * 4 / (1 - np.abs(Z) ** 2) ** 2
    wts = (wr[:, None] * r[:, None] * np.full(n_t, 2 * np.pi / n_t)[None, :]).ravel() * dens
    log_scale = 0.5 * np.log(np.maximum(np.sum(np.abs(_monomials(Z, n, np.zeros(n))) ** 2 * wts[:, None], axis=0), 1e-300))
    B = _monomials(Z, n, log_scale)
    G = (B.conj().T * wts) @ B
    return G, log_scale


def _l2_constant(nodes, weight, n):
    alpha = getattr(weight, "alpha", None)
    if alpha is not None:
        log_scale = 0.5 * _bergman_log_norms(weight, n)
        V = _monomials(nodes, n, log_scale)
        K = V @ V.conj().T
    else:
        G, log_scale = _gram(weight, n)
        V = _monomials(nodes, n, log_scale)
        L = np.linalg.cholesky(G)
        W = np.linalg.solve(L, V.conj().T)  # L^{-1} V^*
        K = W.conj().T @ W
    e = np.exp(-0.5 * _weight_values(weight, nodes))
    A = e[:, None] * K * e[None, :]
    ev, vec = np.linalg.eigh(A)
    if ev[0] <= ev[-1] / COND_LIMIT:
        return float("inf"), vec[:, 0]
    return float(1 / np.sqrt(ev[0])), vec[:, 0]


# ---------------------------------------------------------------------------
# p = inf


class _ChebyshevProblem:
    """min_b sup_grid |F0 v + N b| e^{-phi} for data v on the nodes.

    Coefficients live in the scaled monomial basis; F0 is the least-squares
    right inverse of the node evaluation matrix and N an orthonormal basis of
    its null space, so the interpolation constraints are built in.  The sup
    is enforced on a point set grown by exchange: every grid local maximum
    above the current level is added until none remain.
    """

    def __init__(self, nodes, weight, n, pgrid, log_scale):
        from scipy.linalg import null_space, pinv

        self.pgrid, self.grid, self.n, self.log_scale = pgrid, pgrid.points, n, log_scale
        self.wg = np.exp(-_weight_values(weight, self.grid))
        V = _monomials(nodes, n, log_scale)
        sv = np.linalg.svd(V, compute_uv=False)
        if sv[-1] <= sv[0] / COND_LIMIT:
            raise IllConditioned("node evaluation matrix is numerically singular")
        self.F0 = pinv(V)
        self.N = null_space(V)
        near = np.argmin(np.abs(self.grid[None, :] - nodes[:, None]), axis=1)
        self.seed = np.unique(np.concatenate([pgrid.coarse(n), near]))

    def basis_at(self, idx):
        B = _monomials(self.grid[idx], self.n, self.log_scale) * self.wg[idx][:, None]
        return B @ self.F0, B @ self.N

    def evaluate(self, coef, chunk=8192):
        return _eval(coef, self.grid, self.log_scale, chunk) * self.wg

    def solve(self, v, method="socp", rounds=25, tol=1e-2):
        """Returns (grid sup of the optimal interpolant, data gradient G, coefficients).

        The dual certificate gives s >= Re(G v') for every data vector v', with
        equality at v, so G drives the ascent over data.
        """
        step = self._socp if method == "socp" else self._lp
        slack = 1.0 if method == "socp" else 1 / np.cos(np.pi / POLYGON_SIDES)
        vals = np.abs(self.evaluate(self.F0 @ v))
        idx = np.unique(np.concatenate([self.seed, self.pgrid.local_maxima(vals)]))
        BF, BN = self.basis_at(idx)
        for _ in range(rounds):
            b, s, G = step(BF, BN, v)
            coef = self.F0 @ v + self.N @ b
            vals = np.abs(self.evaluate(coef))
            if vals.max() <= s * slack * (1 + tol):
                break
            cand = self.pgrid.local_maxima(vals)
            cand = np.setdiff1d(cand[vals[cand] > s * (1 + tol)], idx)
            if cand.size == 0:
                cand = np.setdiff1d(np.flatnonzero(vals > s * (1 + tol)), idx)
                cand = cand[np.argsort(-vals[cand])][: 4 * self.n]
            if cand.size == 0:
                break
            F2, N2 = self.basis_at(cand)
            idx = np.concatenate([idx, cand])
            BF, BN = np.vstack([BF, F2]), np.vstack([BN, N2])
        return float(vals.max()), G, coef

    @staticmethod
    def _socp(BF, BN, v):
        """Second-order cones |r_j + (BN b)_j| <= s."""
        import clarabel
        import scipy.sparse as sp

        m, k = BN.shape
        r = BF @ v
        A = np.zeros((3 * m, 2 * k + 1))
        A[0::3, -1] = -1.0
        A[1::3, :k] = -BN.real
        A[1::3, k:2 * k] = BN.imag
        A[2::3, :k] = -BN.imag
        A[2::3, k:2 * k] = -BN.real
        rhs = np.zeros(3 * m)
        rhs[1::3] = r.real
        rhs[2::3] = r.imag
        q = np.zeros(2 * k + 1)
        q[-1] = 1.0
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        solver = clarabel.DefaultSolver(sp.csc_matrix((2 * k + 1, 2 * k + 1)), q, sp.csc_matrix(A), rhs,
                                        [clarabel.SecondOrderConeT(3)] * m, settings)
        sol = solver.solve()
        if str(sol.status) not in ("Solved", "AlmostSolved"):
            raise IllConditioned(f"cone program failed: {sol.status}")
        x = np.asarray(sol.x)
        z = np.asarray(sol.z).reshape(m, 3)
        G = -(z[:, 1] - 1j * z[:, 2]) @ BF
        return x[:k] + 1j * x[k:2 * k], x[-1], G

    @staticmethod
    def _lp(BF, BN, v, sides=POLYGON_SIDES):
        """Polygonal modulus: Re(e^{-i theta_l} e_j) <= s for every side l."""
        m, k = BN.shape
        rot = np.exp(-2j * np.pi * np.arange(sides) / sides)
        R = (rot[None, :, None] * BN[:, None, :]).reshape(-1, k)
        r0 = (rot[None, :] * (BF @ v)[:, None]).ravel().real
        A = np.hstack([R.real, -R.imag, -np.ones((m * sides, 1))])
        cost = np.zeros(2 * k + 1)
        cost[-1] = 1.0
        res = linprog(cost, A_ub=A, b_ub=-r0, bounds=[(None, None)] * (2 * k) + [(0, None)],
                      method="highs")
        if res.status != 0:
            raise IllConditioned(f"linear program failed: {res.message}")
        y = -res.ineqlin.marginals
        G = (y * np.tile(rot, m)) @ np.repeat(BF, sides, axis=0)
        x = res.x
        return x[:k] + 1j * x[k:2 * k], x[-1], G


def _eval(coef, z, log_scale, chunk=8192):
    out = np.empty(z.size, dtype=complex)
    for s0 in range(0, z.size, chunk):
        out[s0:s0 + chunk] = _monomials(z[s0:s0 + chunk], coef.size, log_scale) @ coef
    return out


def interpolation_constant(nodes, weight, n: int, p: float = np.inf, ascent_steps: int = 4,
                           n_starts: int = 2, seed: int = 0, method: str = "socp",
                           return_details: bool = False):
    """Norm of the minimal-norm interpolation operator on polynomials of degree < n.

    Data are normalized by sup |v| e^{-phi(lambda)} <= 1 (p = inf) or
    sum |v|^2 e^{-phi(lambda)} <= 1 (p = 2).
    """
    nodes = np.atleast_1d(np.asarray(nodes, dtype=complex))
    if nodes.size == 0:
        return 0.0
    if np.any(np.abs(nodes) > RIM):
        raise ValueError(f"nodes must lie in |z| <= {RIM}")
    if n <= nodes.size:
        raise InfeasibleInterpolation(f"dimension {n} does not exceed the node count {nodes.size}")
    alpha = getattr(weight, "alpha", None)
    if p == 2:
        return _l2_constant(nodes, weight, n)[0]
    if p != np.inf:
        raise ValueError("p must be 2 or inf")
    pgrid = PolarGrid(n)
    log_scale = _sup_log_scale(weight, n, pgrid.points)
    phi_n = _weight_values(weight, nodes)
    starts = []
    if alpha is not None:
        # hardest data of the L^2 problem one step up the weight scale
        _, vec = _l2_constant(nodes, disk_alpha_weight(alpha + 1.0), n)
        starts.append(np.exp(1j * np.angle(vec)))
    starts.append(np.exp(2j * np.pi * np.random.default_rng(seed).uniform(size=nodes.size)))
    prob = _ChebyshevProblem(nodes, weight, n, pgrid, log_scale)
    best = 0.0
    history = []
    for phase in starts[:n_starts]:
        cur = 0.0
        for _ in range(ascent_steps):
            val, G, _ = prob.solve(phase * np.exp(phi_n), method=method)
            history.append(val)
            if val <= cur * (1 + 1e-2):
                cur = max(cur, val)
                break
            cur = val
            new = np.exp(-1j * np.angle(np.where(np.abs(G) > 0, G, np.conj(phase))))
            if np.allclose(new, phase):
                break
            phase = new
        best = max(best, cur)
    if return_details:
        return best, history
    return best


def sampling_constant(nodes, weight, n: int, core_radius: float, starts: int = 4, seed: int = 0,
                      rounds: int = 4, coef_bound: float = 1e8) -> float:
    """Lower bound for sup_core |f| e^{-phi} / sup_nodes |f| e^{-phi} over degree < n.

    Each start maximizes Re f(target) e^{-phi(target)} subject to the node
    constraints, then moves the target to the core maximizer.  Returns inf
    when the nodes do not bound the coefficients (blow-up).
    """
    nodes = np.atleast_1d(np.asarray(nodes, dtype=complex))
    if nodes.size == 0:
        raise ValueError("empty node set cannot sample")
    if not 0 < core_radius < 1:
        raise ValueError("core radius must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    core = polar_grid(n, rim=core_radius)
    log_scale = _sup_log_scale(weight, n, polar_grid(n))
    phi_c = _weight_values(weight, core)
    phi_n = _weight_values(weight, nodes)
    Vn = _monomials(nodes, n, log_scale) * np.exp(-phi_n)[:, None]
    ang = 2 * np.pi * np.arange(POLYGON_SIDES) / POLYGON_SIDES
    R = (np.exp(-1j * ang)[None, :, None] * Vn[:, None, :]).reshape(-1, n)
    A_ub = np.hstack([R.real, -R.imag])
    b_ub = np.ones(A_ub.shape[0])
    best = 0.0
    for _ in range(starts):
        target = core[rng.integers(core.size)]
        for _ in range(rounds):
            b = _monomials(np.array([target]), n, log_scale)[0] * np.exp(-weight.values_fn(target))
            cost = -np.concatenate([b.real, -b.imag])  # maximize Re f(target) e^{-phi}
            res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=[(-coef_bound, coef_bound)] * (2 * n),
                          method="highs")
            if res.status != 0:
                break
            if np.max(np.abs(res.x)) >= 0.99 * coef_bound:
                # the coefficient box is active: the node set does not control f
                return float("inf")
            coef = res.x[:n] + 1j * res.x[n:]
            vals = np.abs(_eval(coef, core, log_scale)) * np.exp(-phi_c)
            on_nodes = np.max(np.abs(Vn @ coef))
            ratio = float(vals.max() / max(on_nodes, 1e-300))
            best = max(best, ratio)
            nxt = core[int(np.argmax(vals))]
            if nxt == target:
                break
            target = nxt
    return best


# ---------------------------------------------------------------------------
# benchmark

KAPPA = 0.25  # nodes kept per basis dimension


def truncate(points, n: int, kappa: float = KAPPA) -> np.ndarray:
    """The floor(kappa n) points nearest the origin (ties broken by angle)."""
    pts = np.asarray(points, dtype=complex)
    d = np.round(np.abs(pts), 12)
    order = np.lexsort((np.round(np.angle(pts), 12), d))
    return pts[order[: max(1, int(kappa * n))]]


def oracle_verdict(constants) -> str:
    """bounded: top two within 10%; blow-up: >= 3x growth (or an infinite top value)."""
    c = [float(x) for x in constants]
    if len(c) < 2:
        return "inconclusive"
    a, b = c[-2], c[-1]
    if not np.isfinite(b):
        return "blow-up"
    if not np.isfinite(a):
        return "inconclusive"
    if b >= 3 * a:
        return "blow-up"
    if b <= 1.1 * a:
        return "bounded"
    return "inconclusive"


def growth_exponent(dims, constants) -> float:
    """log-log slope of the constant over the top two dimensions."""
    (n0, n1), (c0, c1) = dims[-2:], constants[-2:]
    if not (np.isfinite(c0) and np.isfinite(c1)):
        return float("nan")
    return float(np.log(c1 / c0) / np.log(n1 / n0))


def jensen_exponent(relative_density: float, alpha_eff: float, p: float) -> float:
    """Growth rate of the constant in n that Jensen's formula forces above the threshold.

    A degree-n interpolant vanishing on the truncated nodes pays
    exp((D - 1) alpha r) over hyperbolic radius r, and e^r grows like n; for
    p = 2 the relevant weight is the shifted one and the norm is squared.
    """
    scale = alpha_eff if p == np.inf else alpha_eff / p
    return float(max(relative_density - 1.0, 0.0) * scale)


def lattice_menu(max_q: int = 40):
    """(density, p, q) for vertex sets of {3,q}, {4,q}, {5,q}, sorted by density."""
    out = []
    for p in (3, 4, 5):
        for q in range(3, max_q + 1):
            if (p - 2) * (q - 2) > 4:
                out.append((float(tessellation_density(p, q)), p, q))
    return sorted(out)


def benchmark_family(target_density: float, radius: float = 9.0):
    """Tessellation vertex set whose points per hyperbolic area is closest to the target."""
    from .density import PointSequence

    dens, p, q = min(lattice_menu(), key=lambda e: (abs(np.log(e[0] / target_density)), e[1]))
    pts = regular_tessellation(p, q, radius)
    return PointSequence(pts, label=f"{{{p},{q}}}", reach_radius=radius), dens


def seip_benchmark(alpha: float, sweep, n_max: int = 96, seed: int = 0, p: float = np.inf,
                   dims=None, kappa: float = KAPPA, centers=None, radii=(2.0, 3.0, 4.5, 6.0),
                   radius: float = 9.0):
    """Sweep relative densities t, run the oracle across dimensions, locate the crossing.

    t is relative to the threshold: D / 1 for sup norms, D_shift / (1/p)
    for p = 2 with the curvature-shifted weight.  The crossing estimate is
    the midpoint between the largest bounded and smallest blow-up measured t.
    """
    from .density import estimate_density, scan_centers

    if not alpha >= 1:
        raise ValueError("alpha must be at least 1")
    if any(not 0.3 <= t <= 2.0 for t in sweep):
        raise ValueError("sweep values must lie in [0.3, 2]")
    weight = disk_alpha_weight(alpha)
    if p == np.inf:
        dens_weight, thr, alpha_eff = weight, 1.0, float(alpha)
    else:
        if not alpha > 1:
            raise ValueError("the L^2 benchmark needs alpha > 1")
        thr, alpha_eff = 1.0 / p, alpha - 1.0
        dens_weight = disk_alpha_weight(alpha_eff, threshold=thr)
    if dims is None:
        dims = tuple(n_max // 2**k for k in (3, 2, 1, 0)) if p == 2 else (n_max // 4, n_max // 2, n_max)
    centers = scan_centers(radius - max(radii) - 1.0, 2, 6, seed) if centers is None else centers
    model = DiskModel()
    reports = []
    for t in sweep:
        # points per hyperbolic area giving relative density t: D = 2 pi n_pts / alpha_eff
        seq, dens = benchmark_family(t * thr * alpha_eff / (2 * np.pi), radius)
        D = estimate_density(seq, dens_weight, model, centers, radii, "upper").value / thr
        consts, counts = [], []
        for n in dims:
            nodes = truncate(seq.points, n, kappa)
            counts.append(int(nodes.size))
            try:
                consts.append(float(interpolation_constant(nodes, weight, n, p, seed=seed)))
            except InfeasibleInterpolation:
                consts.append(float("inf"))
            except IllConditioned:
                consts.append(float("nan"))
        verdict = oracle_verdict(consts) if np.all(np.isfinite(consts) | np.isinf(consts)) else "inconclusive"
        reports.append(OracleReport(
            label=seq.label, weight=weight.label, p=p, dims=tuple(dims), constants=tuple(consts),
            node_counts=tuple(counts), verdict=verdict, target=float(t), measured_density=float(D),
            extras={"exact_density": float(2 * np.pi * dens / alpha_eff / thr),
                    "growth_exponent": growth_exponent(dims, consts),
                    "jensen_exponent": jensen_exponent(D, alpha_eff, p)}))
    return reports, crossing_estimate(reports)


def crossing_estimate(reports) -> float:
    bounded = [r.measured_density for r in reports if r.verdict == "bounded"]
    blown = [r.measured_density for r in reports if r.verdict == "blow-up"]
    if not bounded or not blown:
        return float("nan")
    hi = max(bounded)
    above = [t for t in blown if t > hi]
    return float(0.5 * (hi + (min(above) if above else min(blown))))
