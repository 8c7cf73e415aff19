"""Command-line entry point.

Every command writes a deterministic JSON report (sorted keys, the config
hash embedded) plus ``meta.json`` with the timestamp and versions, so two
runs with the same config and seed produce byte-identical reports.

Exit codes: 0 ok, 1 error, 2 indeterminate verdict, 64 usage.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_ERROR, EXIT_INDETERMINATE, EXIT_USAGE = 0, 1, 2, 64
WORKERS_ENV = "HYPDENS_WORKERS"
SCHEMA_VERSION = "1.0"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    command: str
    domain: str | None = None
    h: float = 1 / 128
    tol: float = 1e-9
    alpha: float | None = None
    weight: str | None = None
    seq: str | None = None
    reach: float | None = None
    radii: tuple = (2.0, 3.0, 4.5, 6.0)
    centers: str = "scan:2.0,2,6"
    p: float | None = None
    mode: str = "interpolation"
    backend: str = "auto"
    seed: int = 0
    out: str = "hypdens_out"
    workers: int = 1
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        for name in ("weight", "seq"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise FileNotFoundError(f"{name} file not found: {path}")
        if self.domain is not None and not Path(self.domain).exists() and _builtin(self.domain) is None:
            raise FileNotFoundError(f"domain file not found: {self.domain}")
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        r = np.asarray(self.radii, float)
        if r.size == 0 or np.any(np.diff(r) <= 0) or np.any(r <= 0):
            raise ValueError("radii must be positive and strictly increasing")
        if self.backend not in ("auto", "model", "grid"):
            raise ValueError("backend must be auto, model or grid")

    def public(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d.pop("workers")
        d["radii"] = [float(x) for x in self.radii]
        return d

    def digest(self) -> str:
        text = json.dumps(self.public(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _builtin(name: str):
    from .geometry import annulus_domain, collar_annulus, disk_domain, three_circle_domain

    if name == "disk":
        return disk_domain()
    if name == "three-circle":
        return three_circle_domain()
    if name.startswith("annulus:"):
        vals = [float(v) for v in name.split(":", 1)[1].split(",")]
        if len(vals) == 1:
            return collar_annulus(vals[0])
        return annulus_domain(vals[0], vals[1])
    return None


def load_domain(spec: str):
    from .geometry import parse_domain

    path = Path(spec)
    if path.exists():
        return parse_domain(path.read_text())
    dom = _builtin(spec)
    if dom is None:
        raise FileNotFoundError(f"domain file not found: {spec}")
    return dom


def is_unit_disk(domain) -> bool:
    if domain.connectivity != 1:
        return False
    c = domain.curves[0]
    return abs(c.mean()) < 1e-6 and np.ptp(np.abs(c)) < 1e-6 and abs(np.abs(c).mean() - 1) < 1e-6


def read_points(path: str) -> np.ndarray:
    """CSV of x,y rows; a non-numeric first row is a header."""
    rows = [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
    if rows and not _numeric(rows[0]):
        rows = rows[1:]
    if not rows:
        return np.zeros(0, dtype=complex)
    data = np.array([[float(v) for v in r.split(",")[:2]] for r in rows], ndmin=2)
    return data[:, 0] + 1j * data[:, 1]


def write_points(path, pts) -> None:
    pts = np.asarray(pts, dtype=complex)
    with open(path, "w") as f:
        f.write("x,y\n")
        for z in pts:
            f.write(f"{z.real:.17g},{z.imag:.17g}\n")


def _numeric(row: str) -> bool:
    try:
        [float(v) for v in row.split(",")[:2]]
        return True
    except ValueError:
        return False


def parse_point(text: str) -> complex:
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"expected x,y but got {text!r}") from None
    return complex(x, y)


def parse_list(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"expected a comma separated list but got {text!r}") from None


def worker_count(flag: int | None) -> int:
    if flag is not None:
        return max(1, int(flag))
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def pmap(fn, items, workers: int):
    """Order-preserving map over a thread pool (modules are pure)."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# report plumbing


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else (None if np.isnan(v) else ("inf" if v > 0 else "-inf"))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def write_report(cfg: RunConfig, kind: str, body: dict) -> Path:
    from jsonschema import validate

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"kind": kind, "version": __version__, "config_hash": cfg.digest(),
              "config": cfg.public(), **body}
    report = _clean(report)
    validate(report, SCHEMAS[kind])
    path = out / f"{kind}.json"
    path.write_text(dumps(report))
    meta = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "python": platform.python_version(),
            "numpy": np.__version__, "version": __version__, "config_hash": cfg.digest(),
            "report": path.name}
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return path


def write_error(cfg: RunConfig, exc: BaseException) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    body = {"kind": "error", "version": __version__, "config_hash": cfg.digest(),
            "error": type(exc).__name__, "message": str(exc)}
    (out / "error.json").write_text(dumps(body))


# ---------------------------------------------------------------------------
# schema


def _obj(required, props=None):
    props = dict(props or {})
    props.setdefault("config_hash", {"type": "string"})
    props.setdefault("kind", {"type": "string"})
    return {"type": "object", "required": ["kind", "config_hash", *required], "properties": props}


_NUM = {"type": ["number", "string", "null"]}
_FUNNEL_ROW = {"type": "object", "required": ["index", "length", "collar"],
               "properties": {"index": {"type": "integer"}, "length": _NUM, "collar": _NUM}}
_DENSITY = {"type": "object", "required": ["mode", "value", "uncertainty", "per_radius"],
            "properties": {"mode": {"type": "string"}, "value": _NUM, "uncertainty": _NUM,
                           "per_radius": {"type": "array"}}}
_CLASSIFICATION = {"type": "object", "required": ["verdict", "separation", "threshold", "margin"],
                   "properties": {"verdict": {"enum": ["interpolating", "sampling", "neither-certain",
                                                       "indeterminate"]},
                                  "separation": _NUM, "threshold": _NUM, "margin": _NUM}}

SCHEMAS = {
    "metric": _obj(["residual", "iterations", "funnels"],
                   {"funnels": {"type": "array", "items": _FUNNEL_ROW}}),
    "potential": _obj(["pole", "symmetry"]),
    "weight": _obj(["action"]),
    "density": _obj(["density"], {"density": {"type": "object"}}),
    "classification": _obj(["classification"], {"classification": _CLASSIFICATION}),
    "oracle": _obj(["reports", "crossing"]),
    "dbar": _obj(["constants", "residual"]),
    "weaklimits": _obj(["triplets", "diagnostics"]),
    "pipeline": _obj(["metric", "funnels"], {"funnels": {"type": "array", "items": _FUNNEL_ROW}}),
    "error": _obj(["error", "message"]),
}


def schema_document() -> dict:
    return {"schema_version": SCHEMA_VERSION, "package_version": __version__,
            "exit_codes": {"ok": EXIT_OK, "error": EXIT_ERROR, "indeterminate": EXIT_INDETERMINATE,
                           "usage": EXIT_USAGE},
            "reports": SCHEMAS,
            "keys": sorted({"classification", "density", "funnels", *SCHEMAS})}


# ---------------------------------------------------------------------------
# shared builders


def _metric(cfg: RunConfig, domain):
    from .geometry import build_grid
    from .metric import solve_liouville

    return solve_liouville(build_grid(domain, cfg.h), tol=cfg.tol)


def _funnel_table(metric) -> list:
    from .metric import funnel_decomposition

    if metric.grid.source.connectivity < 2:
        return []
    dec = funnel_decomposition(metric)
    # collar R = pi^2 / L
    return [{"index": f.index, "length": f.length, "collar": f.collar} for f in dec.funnels]


def _use_model(cfg: RunConfig, domain) -> bool:
    if cfg.backend == "model":
        if not is_unit_disk(domain):
            raise ValueError("the model backend is only available on the unit disk")
        return True
    return cfg.backend == "auto" and is_unit_disk(domain)


def _surface_and_weight(cfg: RunConfig, domain):
    """(metric-like object, weight) for the density commands."""
    from .models import DiskModel, disk_alpha_weight
    from .weights import model_weight_alpha, read_weight

    if _use_model(cfg, domain):
        if cfg.weight is not None:
            raise ValueError("weight files need the grid backend")
        return DiskModel(), disk_alpha_weight(cfg.alpha if cfg.alpha is not None else 1.0)
    metric = _metric(cfg, domain)
    if cfg.weight is not None:
        with open(cfg.weight) as f:
            return metric, read_weight(metric, f)
    return metric, model_weight_alpha(metric, cfg.alpha if cfg.alpha is not None else 1.0,
                                      with_values=False)


def _sequence(cfg: RunConfig):
    from .density import PointSequence

    if cfg.seq is None:
        raise ValueError("a point sequence file is required")
    pts = read_points(cfg.seq)
    reach = float("inf") if cfg.reach is None else float(cfg.reach)
    return PointSequence(pts, label=Path(cfg.seq).stem, reach_radius=reach)


def _centers(cfg: RunConfig, metric) -> np.ndarray:
    from .density import scan_centers

    spec = cfg.centers
    if spec.startswith("scan:"):
        radius, n_rings, per_ring = parse_list(spec[5:])
        c = scan_centers(radius, int(n_rings), int(per_ring), cfg.seed)
        if not hasattr(metric, "grid"):
            return c
        # on a grid domain the scan is placed around the core barycenter
        from .density import _core_barycenter

        z0 = _core_barycenter(metric)
        pts = z0 + c * metric.grid.boundary_distance.max() * 0.5
        return np.array([p for p in pts if metric.contains(p)])
    if not Path(spec).exists():
        raise FileNotFoundError(f"centers file not found: {spec}")
    return read_points(spec)


def _density_dict(est) -> dict:
    return {"mode": est.mode, "value": est.value, "uncertainty": est.uncertainty,
            "inner_cutoff": est.inner_cutoff, "dropped": est.dropped,
            "per_radius": [list(p) for p in est.per_radius],
            "samples": [[s[0].real, s[0].imag, s[1], s[2]] for s in est.samples]}


def _plot_ratios(path: Path, est, threshold: float) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "hypdens"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    r = np.array([s[1] for s in est.samples])
    q = np.array([s[2] for s in est.samples])
    ax.plot(r, q, ".", color="0.6", label="centers")
    pr = np.array(est.per_radius)
    ax.plot(pr[:, 0], pr[:, 1], "o-", label=est.mode)
    ax.axhline(threshold, ls="--", color="k", lw=0.8, label="threshold")
    ax.set_xlabel("hyperbolic radius r")
    ax.set_ylabel("partial density ratio")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# commands


def cmd_metric(cfg: RunConfig) -> int:
    domain = load_domain(cfg.domain)
    m = _metric(cfg, domain)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    g = m.grid
    sel = g.mask
    np.savetxt(out / "metric.csv", np.column_stack([g.z.real[sel], g.z.imag[sel], m.nu[sel]]),
               delimiter=",", header="x,y,nu", comments="", fmt="%.12g")
    write_report(cfg, "metric", {"residual": m.residual, "iterations": m.iterations,
                                 "funnels": _funnel_table(m)})
    return EXIT_OK


def cmd_potential(cfg: RunConfig) -> int:
    from .geometry import build_grid
    from .potential import green_function

    domain = load_domain(cfg.domain)
    grid = build_grid(domain, cfg.h)
    pole = cfg.extra["pole"]
    probe = cfg.extra.get("probe")
    region = grid.mask
    if cfg.extra.get("region_r") is not None:
        from .metric import hyperbolic_disk, solve_liouville

        m = solve_liouville(grid, tol=cfg.tol)
        region = hyperbolic_disk(m, cfg.extra["region_center"], cfg.extra["region_r"]).mask
    from .potential import mask_region

    reg = mask_region(grid, region)
    g = green_function(reg, pole)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    sel = reg.mask
    np.savetxt(out / "green.csv", np.column_stack([grid.z.real[sel], grid.z.imag[sel], g.values[sel]]),
               delimiter=",", header="x,y,g", comments="", fmt="%.12g")
    sym = None
    if probe is not None:
        g2 = green_function(reg, probe)
        a = float(_at(grid, g.values, probe))
        b = float(_at(grid, g2.values, pole))
        sym = {"g_pole_probe": a, "g_probe_pole": b, "difference": abs(a - b)}
    write_report(cfg, "potential", {"pole": pole, "symmetry": sym})
    return EXIT_OK


def _at(grid, values, z):
    from scipy.interpolate import RegularGridInterpolator

    f = RegularGridInterpolator((grid.ys, grid.xs), np.nan_to_num(values))
    return f([[z.imag, z.real]])[0]


def cmd_weight(cfg: RunConfig) -> int:
    from .weights import (associated_pair, laplacian_bounds, lp_shift, model_weight_alpha,
                          read_weight, write_weight)

    action = cfg.extra["action"]
    domain = load_domain(cfg.domain)
    m = _metric(cfg, domain)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.weight is not None:
        with open(cfg.weight) as f:
            w = read_weight(m, f)
    else:
        w = model_weight_alpha(m, cfg.alpha if cfg.alpha is not None else 1.0)
    body = {"action": action}
    if action == "model":
        with open(out / "weight.csv", "w") as f:
            write_weight(w, f)
    elif action == "check":
        lo, hi, ok = laplacian_bounds(w)
        body.update(lower=lo, upper=hi, admissible=ok)
    elif action == "lpshift":
        if cfg.p is None:
            raise UsageError("lpshift needs --p")
        shifted = lp_shift(w, cfg.p, model_weight_alpha(m, 1.0, with_values=w.values is not None))
        with open(out / "weight.csv", "w") as f:
            write_weight(shifted, f)
        body.update(threshold=shifted.threshold)
    elif action == "assoc":
        from .metric import funnel_chart, funnel_decomposition

        ch = funnel_chart(funnel_decomposition(m), int(cfg.extra["funnel"]))
        pair = associated_pair(w, ch)
        body.update(funnel=pair.funnel_index, collar=pair.collar, mass=pair.mass,
                    sup_difference=pair.sup_difference, plateau_defect=pair.plateau_defect,
                    chart_exact=ch.exact, period_defect=ch.period_defect)
    write_report(cfg, "weight", body)
    return EXIT_OK


def cmd_density(cfg: RunConfig) -> int:
    from .density import estimate_density

    domain = load_domain(cfg.domain)
    metric, weight = _surface_and_weight(cfg, domain)
    seq = _sequence(cfg)
    centers = _centers(cfg, metric)
    modes = ("upper", "lower")
    ests = pmap(lambda mode: estimate_density(seq, weight, metric, centers, cfg.radii, mode),
                modes, cfg.workers)
    write_report(cfg, "density", {"density": {m: _density_dict(e) for m, e in zip(modes, ests)}})
    return EXIT_OK


def cmd_classify(cfg: RunConfig) -> int:
    from .density import classify

    domain = load_domain(cfg.domain)
    metric, weight = _surface_and_weight(cfg, domain)
    seq = _sequence(cfg)
    centers = _centers(cfg, metric)
    c = classify(seq, weight, metric, centers, cfg.radii, p=cfg.p, mode=cfg.mode)
    est = c.upper if c.upper is not None else c.lower
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "samples.csv", "w") as f:
        f.write("x,y,radius,ratio\n")
        for z, r, q in est.samples:
            f.write(f"{z.real:.12g},{z.imag:.12g},{r:.12g},{q:.12g}\n")
    _plot_ratios(out / "ratios.svg", est, c.threshold)
    body = {"classification": {"verdict": c.verdict, "separation": c.separation,
                               "threshold": c.threshold, "margin": c.margin, "flags": list(c.flags)},
            "density": _density_dict(est)}
    write_report(cfg, "classification", body)
    return EXIT_INDETERMINATE if c.verdict == "indeterminate" else EXIT_OK


def cmd_oracle(cfg: RunConfig) -> int:
    from .disk_oracle import crossing_estimate, seip_benchmark

    sweep = cfg.extra["sweep"]
    p = np.inf if cfg.p is None else cfg.p
    alpha = cfg.alpha if cfg.alpha is not None else 1.0
    n_max = int(cfg.extra["n_max"])

    def one(t):
        reps, _ = seip_benchmark(alpha, [t], n_max=n_max, seed=cfg.seed, p=p)
        return reps[0]

    reports = pmap(one, sweep, cfg.workers)
    rows = [{"target": r.target, "measured_density": r.measured_density, "verdict": r.verdict,
             "dims": list(r.dims), "constants": list(r.constants), "label": r.label,
             "extras": r.extras} for r in reports]
    write_report(cfg, "oracle", {"reports": rows, "crossing": crossing_estimate(reports)})
    return EXIT_OK


def cmd_dbar(cfg: RunConfig) -> int:
    from .dbar import bump_family, measure_dbar_constant, weighted_solve
    from .geometry import build_grid, disk_domain
    from .metric import solve_liouville
    from .weights import model_weight_alpha

    domain = load_domain(cfg.domain) if cfg.domain else disk_domain()
    m = solve_liouville(build_grid(domain, cfg.h), tol=cfg.tol)
    alpha = cfg.alpha if cfg.alpha is not None else 1.0
    w = model_weight_alpha(m, alpha)
    forms, centers = bump_family(m.grid, count=int(cfg.extra["count"]), alpha=alpha)
    p = np.inf if cfg.p is None else cfg.p
    sols = pmap(lambda f: weighted_solve(f, w, m), forms, cfg.workers)
    consts = [s.constant for s in sols] if p == np.inf else [
        measure_dbar_constant([f], w, m, p=p) for f in forms]
    write_report(cfg, "dbar", {"constants": consts, "residual": max(s.residual for s in sols),
                               "centers": list(centers), "spread": max(consts) / min(consts)})
    return EXIT_OK


def cmd_weaklimits(cfg: RunConfig) -> int:
    from .models import AnnulusModel
    from .weak_limits import extract_triplet, limit_diagnostics

    domain = load_domain(cfg.domain)
    seq = _sequence(cfg)
    base = cfg.extra["base"]
    centers = read_points(cfg.centers)
    alpha = cfg.alpha if cfg.alpha is not None else 1.0
    chart = None
    from .metric import _round_annulus

    ring = _round_annulus(domain)
    if _use_model(cfg, domain) or (ring is not None and cfg.backend != "grid"):
        from .models import DiskModel, disk_alpha_weight

        metric = DiskModel() if ring is None else AnnulusModel(ring[1], ring[2], ring[0])
        weight = disk_alpha_weight(alpha)
    else:
        from .metric import funnel_chart, funnel_decomposition

        metric, weight = _surface_and_weight(cfg, domain)
        chart = funnel_chart(funnel_decomposition(metric), int(cfg.extra.get("funnel", 0)))
    trips = pmap(lambda c: extract_triplet(weight, seq, base, c, metric, chart=chart), centers,
                 cfg.workers)
    radii = cfg.extra["test_radii"]
    rep = limit_diagnostics(trips, radii, tol=float(cfg.extra.get("limit_tol", 0.05)))
    write_report(cfg, "weaklimits", {"triplets": [t.summary() for t in trips],
                                     "diagnostics": rep.to_dict()})
    return EXIT_OK if rep.convergent else EXIT_INDETERMINATE


def cmd_pipeline(cfg: RunConfig) -> int:
    from .density import classify

    domain = load_domain(cfg.domain)
    m = _metric(cfg, domain)
    body = {"metric": {"residual": m.residual, "iterations": m.iterations, "h": cfg.h,
                       "connectivity": domain.connectivity},
            "funnels": _funnel_table(m)}
    code = EXIT_OK
    if cfg.seq is not None:
        metric, weight = _surface_and_weight(cfg, domain)
        seq = _sequence(cfg)
        c = classify(seq, weight, metric, _centers(cfg, metric), cfg.radii, p=cfg.p, mode=cfg.mode)
        est = c.upper if c.upper is not None else c.lower
        body["classification"] = {"verdict": c.verdict, "separation": c.separation,
                                  "threshold": c.threshold, "margin": c.margin,
                                  "flags": list(c.flags)}
        body["density"] = _density_dict(est)
        if c.verdict == "indeterminate":
            code = EXIT_INDETERMINATE
        if is_unit_disk(domain):
            body["oracle"] = _oracle_crosscheck(cfg, seq, c)
    elif is_unit_disk(domain):
        body["oracle"] = {"agreement": None, "reason": "no sequence given"}
    write_report(cfg, "pipeline", body)
    return code


def _oracle_crosscheck(cfg: RunConfig, seq, c) -> dict:
    """Minimal-norm interpolation constants on truncated node sets versus the verdict."""
    from .disk_oracle import InfeasibleInterpolation, interpolation_constant, oracle_verdict, truncate
    from .models import disk_alpha_weight

    weight = disk_alpha_weight(cfg.alpha if cfg.alpha is not None else 1.0)
    n_max = int(cfg.extra.get("oracle_n", 32))
    dims = (n_max // 4, n_max // 2, n_max)
    consts = []
    for n in dims:
        try:
            consts.append(float(interpolation_constant(truncate(seq.points, n), weight, n)))
        except InfeasibleInterpolation:
            consts.append(float("inf"))
    verdict = oracle_verdict(consts)
    expected = {"interpolating": "bounded", "neither-certain": "blow-up"}.get(c.verdict)
    agree = None if expected is None or verdict == "inconclusive" else verdict == expected
    return {"dims": list(dims), "constants": consts, "verdict": verdict, "agreement": agree}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hypdens", description="Green-function densities on planar hyperbolic domains")
    ap.add_argument("--version", action="version", version=f"hypdens {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, domain=True):
        if domain:
            p.add_argument("--domain", required=True, help="domain JSON file, or disk | annulus:R | "
                                                           "annulus:r_in,r_out | three-circle")
        p.add_argument("--h", type=float, default=1 / 128, help="grid spacing")
        p.add_argument("--tol", type=float, default=1e-9, help="Liouville solver tolerance")
        p.add_argument("--out", default="hypdens_out", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker threads (default: ${WORKERS_ENV} or 1)")

    def weight_args(p):
        p.add_argument("--alpha", type=float, default=None, help="invariant model weight")
        p.add_argument("--weight", default=None, help="weight file")

    def density_args(p):
        p.add_argument("--seq", required=True, help="CSV of x,y points")
        p.add_argument("--reach", type=float, default=None,
                       help="hyperbolic radius around 0 on which the list is complete")
        p.add_argument("--radii", default="2,3,4.5,6")
        p.add_argument("--centers", default="scan:2.0,2,6",
                       help="scan:radius,n_rings,per_ring or a CSV file")
        p.add_argument("--backend", default="auto", choices=("auto", "model", "grid"))
        p.add_argument("--p", type=float, default=None)
        p.add_argument("--mode", default="interpolation", choices=("interpolation", "sampling"))

    p = sub.add_parser("metric", help="solve the Liouville equation")
    p.add_argument("action", nargs="?", default="solve", choices=("solve",))
    common(p)

    p = sub.add_parser("potential", help="Green function with a pole")
    p.add_argument("action", nargs="?", default="green", choices=("green",))
    common(p)
    p.add_argument("--pole", required=True)
    p.add_argument("--probe", default=None, help="second point for the symmetry check")
    p.add_argument("--region-center", default=None)
    p.add_argument("--region-r", type=float, default=None)

    p = sub.add_parser("weight", help="model weights, checks, associated pairs, L^p shifts")
    p.add_argument("action", choices=("model", "check", "assoc", "lpshift"))
    common(p)
    weight_args(p)
    p.add_argument("--funnel", type=int, default=0)
    p.add_argument("--p", type=float, default=None)

    for name, hlp in (("density", "upper and lower density estimates"),
                      ("classify", "interpolation / sampling verdict")):
        p = sub.add_parser(name, help=hlp)
        common(p)
        weight_args(p)
        density_args(p)

    p = sub.add_parser("oracle", help="disk benchmark with minimal-norm interpolation")
    common(p, domain=False)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--sweep", default="0.5,1.5")
    p.add_argument("--n-max", type=int, default=32)
    p.add_argument("--p", type=float, default=None)

    p = sub.add_parser("dbar", help="weighted dbar constants on a bump family")
    common(p, domain=False)
    p.add_argument("--domain", default=None)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--p", type=float, default=None)

    p = sub.add_parser("weaklimits", help="triplets along escaping centers")
    common(p)
    weight_args(p)
    p.add_argument("--seq", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--centers", required=True, help="CSV of escaping centers")
    p.add_argument("--radii", default="0.3,0.5", help="test radii in the unit disk")
    p.add_argument("--backend", default="auto", choices=("auto", "model", "grid"))
    p.add_argument("--funnel", type=int, default=0)
    p.add_argument("--limit-tol", type=float, default=0.05)

    p = sub.add_parser("pipeline", help="metric, funnels, classification and oracle cross-check")
    common(p)
    weight_args(p)
    p.add_argument("--seq", default=None)
    p.add_argument("--reach", type=float, default=None)
    p.add_argument("--radii", default="2,3,4.5,6")
    p.add_argument("--centers", default="scan:2.0,2,6")
    p.add_argument("--backend", default="auto", choices=("auto", "model", "grid"))
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--mode", default="interpolation", choices=("interpolation", "sampling"))
    p.add_argument("--oracle-n", type=int, default=32)

    sub.add_parser("schema", help="print the JSON schema of all reports")
    return ap


def config_from_args(args) -> RunConfig:
    g = lambda name, default=None: getattr(args, name, default)
    cmd = args.command
    cfg = RunConfig(command=cmd, domain=g("domain"), h=g("h", 1 / 128), tol=g("tol", 1e-9),
                    alpha=g("alpha"), weight=g("weight"), seq=g("seq"), reach=g("reach"),
                    p=g("p"), mode=g("mode", "interpolation"), backend=g("backend", "auto"),
                    seed=g("seed", 0), out=g("out", "hypdens_out"),
                    workers=worker_count(g("workers")))
    if g("radii") is not None and cmd != "weaklimits":
        cfg.radii = parse_list(args.radii)
    if g("centers") is not None:
        cfg.centers = args.centers
    extra = {}
    if cmd == "potential":
        extra["pole"] = parse_point(args.pole)
        extra["probe"] = parse_point(args.probe) if args.probe else None
        extra["region_center"] = parse_point(args.region_center) if args.region_center else 0j
        extra["region_r"] = args.region_r
    elif cmd == "weight":
        extra.update(action=args.action, funnel=args.funnel)
    elif cmd == "oracle":
        extra.update(sweep=list(parse_list(args.sweep)), n_max=args.n_max)
    elif cmd == "dbar":
        extra.update(count=args.count)
    elif cmd == "weaklimits":
        extra.update(base=parse_point(args.base), test_radii=list(parse_list(args.radii)),
                     funnel=args.funnel, limit_tol=args.limit_tol)
    elif cmd == "pipeline":
        extra.update(oracle_n=args.oracle_n)
    cfg.extra = extra
    return cfg


COMMANDS = {"metric": cmd_metric, "potential": cmd_potential, "weight": cmd_weight,
            "density": cmd_density, "classify": cmd_classify, "oracle": cmd_oracle,
            "dbar": cmd_dbar, "weaklimits": cmd_weaklimits, "pipeline": cmd_pipeline}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.command == "schema":
        sys.stdout.write(json.dumps(schema_document(), sort_keys=True, indent=2) + "\n")
        return EXIT_OK
    try:
        cfg = config_from_args(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"hypdens: error: {exc}\n")
        return EXIT_USAGE
    try:
        cfg.validate()
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        sys.stderr.write(f"hypdens: error: {exc}\n")
        return EXIT_USAGE
    except Exception as exc:  # any module error becomes a structured report
        write_error(cfg, exc)
        sys.stderr.write(f"hypdens: {type(exc).__name__}: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
