"""Experiment orchestration: config-driven pipeline runs and summary diffs.

Subcommands:

  gen-config  write the bundled experiment configs
  run         solve -> extract -> analyse -> verify, emitting CSV/JSON
              artifacts and a single machine-readable summary.json
  compare     fieldwise numeric diff of two summaries with tolerances

Runs are deterministic given the config and seed; the summary holds every
measurement the acceptance checks need, so they are recomputable without a
re-solve.  The solve stage is cached inside the output directory, keyed by
a content hash of the config subtree that affects it.
"""

import argparse
import hashlib
import json
import os
import sys
import traceback

import numpy as np

from . import serialize
from .asymptotics import (
    REGULAR_KAPPA_WINDOW,
    blowup,
    c1_distance_to_model,
    check_compatibility,
    fit_expansion,
    growth_exponents,
    holder_seminorm_gradient,
    vanishing_order,
)
from .coefficients import Inhomogeneity, ObstacleField, make_identity, make_perturbed, reflect_extend
from .free_boundary import extract_sets, fit_graph, quotient_regularity, reifenberg_delta
from .grid import GridSpec, build_grid
from .profiles import eval_profile, frame_at, normalization_constant
from .regress import dyadic_radii
from .solver import ProblemSpec, SolutionField, solve_psor
from .barriers import build_barrier, verify_barrier
from .whitney import approximate_normals, whitney_decompose

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config handling

def _require(cfg, key, path):
    if key not in cfg:
        raise ConfigError(f"missing key '{path}{key}'")
    return cfg[key]


def _as_p(value):
    if value in ("inf", None):
        return np.inf
    return float(value)


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{path}: schema_version must be {SCHEMA_VERSION}")
    grid = _require(cfg, "grid", "")
    dim = int(_require(grid, "dim", "grid."))
    h = float(_require(grid, "h", "grid."))
    try:
        GridSpec(dim=dim, h=h)
    except ValueError as exc:
        raise ConfigError(f"{path}: grid: {exc}") from exc
    mode = _require(cfg, "mode", "")
    if mode not in ("boundary_zero", "boundary_obstacle", "interior"):
        raise ConfigError(f"{path}: unknown mode {mode!r}")
    _require(cfg, "metric", "")
    _require(cfg, "dirichlet", "")
    cfg.setdefault("seed", 0)
    cfg.setdefault("solver", {})
    cfg.setdefault("analysis", {})
    ana = cfg["analysis"]
    win = ana.get("exponent_window")
    if win is not None:
        lo, hi = float(win[0]), float(win[1])
        if lo < 4 * h - 1e-12 or hi > 0.25 + 1e-12:
            raise ConfigError(
                f"{path}: analysis.exponent_window must lie within [4h, 1/4]"
            )
    return cfg


def make_dirichlet(cfg_d, n):
    kind = cfg_d.get("kind")
    coeff = float(cfg_d.get("coeff", 1.0))
    cn = normalization_constant(n)
    if kind == "w32":
        return lambda p: coeff * cn * eval_profile("w32", p[:, -2], p[:, -1])
    if kind == "zero":
        return lambda p: np.zeros(len(p))
    if kind == "neg_linear":
        return lambda p: -coeff * p[:, -1]
    if kind == "abs_linear":
        return lambda p: coeff * np.abs(p[:, -1])
    if kind == "w32_plus_linear":
        return lambda p: cn * eval_profile("w32", p[:, -2], p[:, -1]) + coeff * p[:, -1]
    if kind == "w32_shifted":
        shift = float(cfg_d.get("shift", 0.3))
        return lambda p: cn * eval_profile("w32", p[:, -2] - shift, p[:, -1])
    if kind == "quadratic_signorini":
        return lambda p: p[:, -2] ** 2 - p[:, -1] ** 2
    raise ConfigError(f"unknown dirichlet kind {kind!r}")


def make_metric(cfg_m, grid):
    kind = cfg_m.get("kind")
    if kind == "identity":
        return make_identity(grid, p=_as_p(cfg_m.get("p", "inf")))
    if kind == "perturbed":
        return make_perturbed(
            grid,
            float(cfg_m.get("amplitude", 0.05)),
            tuple(cfg_m.get("wavevector", [3.0, 2.0, 2.0][: grid.dim])),
            p=_as_p(cfg_m.get("p", "inf")),
        )
    raise ConfigError(f"unknown metric kind {kind!r}")


def make_obstacle(cfg_o, grid_full):
    if cfg_o is None:
        return None
    kind = cfg_o.get("kind")
    pc = grid_full.plane_coords()
    if kind == "zero":
        phi = np.zeros(grid_full.plane_lattice_shape())
    elif kind == "neg_quadratic":
        phi = -float(cfg_o.get("coeff", 1.0)) * np.sum(pc**2, axis=-1)
    else:
        raise ConfigError(f"unknown obstacle kind {kind!r}")
    return ObstacleField(grid=grid_full, phi=phi, p=_as_p(cfg_o.get("p", "inf")))


def make_inhomogeneity(cfg_f, grid_full):
    if cfg_f is None:
        return None
    kind = cfg_f.get("kind")
    q = _as_p(cfg_f.get("q", "inf"))
    coords = grid_full.coords
    if kind == "constant":
        f = np.full(grid_full.shape, float(cfg_f.get("value", 1.0)))
    elif kind == "singular_power":
        alpha = float(cfg_f.get("alpha", 0.6))
        coeff = float(cfg_f.get("coeff", 1.0))
        r = np.linalg.norm(coords, axis=-1)
        f = coeff * np.maximum(r, grid_full.h / 2.0) ** (-alpha)
    else:
        raise ConfigError(f"unknown inhomogeneity kind {kind!r}")
    f = np.where(grid_full.active, f, 0.0)
    return Inhomogeneity(grid=grid_full, f=f, q=q)


# ---------------------------------------------------------------------------
# pipeline

def _solve_cache_key(cfg):
    sub = {k: cfg.get(k) for k in
           ("grid", "metric", "mode", "dirichlet", "obstacle", "inhomogeneity",
            "solver")}
    blob = json.dumps(sub, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _pick_centers(points, limit, radius=0.5):
    """Deterministic subsample: lexicographic sort, even strides."""
    pts = np.atleast_2d(points)
    keep = np.linalg.norm(pts, axis=1) <= radius
    pts = pts[keep]
    if len(pts) == 0:
        return pts
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    if len(pts) <= limit:
        return pts
    idx = np.linspace(0, len(pts) - 1, limit).round().astype(int)
    return pts[np.unique(idx)]


def run_pipeline(cfg, outdir):
    serialize.ensure_dir(outdir)
    cache_dir = serialize.ensure_dir(os.path.join(outdir, "cache"))
    summary = {"schema_version": SCHEMA_VERSION, "config": cfg}
    stage = "setup"
    try:
        dim = int(cfg["grid"]["dim"])
        h = float(cfg["grid"]["h"])
        n = dim - 1
        mode = cfg["mode"]
        half = build_grid(GridSpec(dim=dim, h=h, half=True))
        full = build_grid(GridSpec(dim=dim, h=h, half=False))

        stage = "metric"
        gen_grid = full if mode == "interior" else half
        metric = make_metric(cfg["metric"], gen_grid)
        metric_full = metric if mode == "interior" else reflect_extend(metric, full)
        summary["metric"] = {"cstar": metric.cstar, "p": metric.p}

        stage = "solve"
        key = _solve_cache_key(cfg)
        cache_stem = os.path.join(cache_dir, f"solve_{key}")
        if os.path.exists(cache_stem + ".json"):
            w = serialize.load_field(cache_stem)
            solve_stats = serialize.load_json(cache_stem + "_report.json")
        else:
            dirichlet = make_dirichlet(cfg["dirichlet"], n)
            phi = make_obstacle(cfg.get("obstacle"), full)
            f = make_inhomogeneity(cfg.get("inhomogeneity"), full)
            spec = ProblemSpec(
                metric=metric, mode=mode, dirichlet=dirichlet, phi=phi, f=f,
                relax=cfg["solver"].get("relax"),
                tol=float(cfg["solver"].get("tol", 1e-8)),
                max_sweeps=int(cfg["solver"].get("max_sweeps", 200_000)),
            )
            rep = solve_psor(spec)
            w = rep.w
            solve_stats = {
                "sweeps": rep.sweeps,
                "converged": bool(rep.converged),
                "pde_residual": rep.pde_residual,
                "complementarity_residual": rep.complementarity_residual,
                "energy": rep.energy,
            }
            serialize.save_field(cache_stem, w)
            serialize.dump_json(cache_stem + "_report.json", solve_stats)
        summary["solve"] = solve_stats
        serialize.save_field(os.path.join(outdir, "solution"), w)

        stage = "extract"
        ana = cfg.get("analysis", {})
        contact_tol = float(ana.get("contact_tol", 1e-7))
        slit = extract_sets(w, contact_tol=contact_tol)
        summary["slit"] = {
            "n_contact": int(slit.lam.sum()),
            "n_positivity": int(slit.omega.sum()),
            "n_boundary": int(slit.gamma.sum()),
            "no_free_boundary": bool(slit.no_free_boundary),
        }
        if slit.gamma.any():
            serialize.save_points_csv(
                os.path.join(outdir, "free_boundary.csv"),
                slit.gamma_points,
                [f"x{i}" for i in range(dim - 1)],
            )

        if slit.no_free_boundary:
            summary["analysis_skipped"] = "no free boundary"
            serialize.dump_json(os.path.join(outdir, "summary.json"), summary)
            return summary

        max_centers = int(ana.get("max_centers", 8))
        centers = _pick_centers(slit.gamma_points, max_centers)

        stage = "vanishing_order"
        win = ana.get("exponent_window")
        radii = None
        if win is not None:
            radii = dyadic_radii(h, r_min=float(win[0]), r_max=float(win[1]))
        kappa_rows = []
        for c in centers:
            est = vanishing_order(w, c, radii=radii)
            kappa_rows.append(
                {"center": list(c), "kappa": est.kappa, "r2": est.r2,
                 "regular": bool(est.regular), "flagged": bool(est.r2 < 0.95)}
            )
        summary["vanishing_order"] = kappa_rows
        serialize.save_table_csv(
            os.path.join(outdir, "vanishing_order.csv"),
            {
                "kappa": [r["kappa"] for r in kappa_rows],
                "r2": [r["r2"] for r in kappa_rows],
            },
        )

        gated = [np.asarray(r["center"]) for r in kappa_rows if r["regular"]]

        if ana.get("growth", {}).get("enabled", True):
            stage = "growth"
            try:
                g_radii = dyadic_radii(h, r_min=8 * h)
            except ValueError as exc:
                g_radii = None
                summary["growth"] = {"skipped": str(exc)}
        if ana.get("growth", {}).get("enabled", True) and g_radii is not None:
            grep = growth_exponents(w, slit, np.array(centers), radii=g_radii)
            summary["growth"] = {
                "radii": list(g_radii),
                "slopes_w": list(grep.slopes_w),
                "slopes_grad": list(grep.slopes_grad),
                "r2_w": list(grep.r2_w),
                "r2_grad": list(grep.r2_grad),
                "cone_lower_ratio": list(grep.cone_lower_ratio),
            }
            serialize.save_table_csv(
                os.path.join(outdir, "growth.csv"),
                {"slope_w": grep.slopes_w, "slope_grad": grep.slopes_grad,
                 "r2_w": grep.r2_w, "r2_grad": grep.r2_grad},
            )

        graph = None
        if n == 2 and ana.get("graph", {}).get("enabled", True):
            stage = "graph"
            graph = fit_graph(slit)
            summary["graph"] = {
                "lipschitz": graph.lipschitz,
                "holder_alpha": graph.holder_alpha,
                "holder_seminorm": graph.holder_seminorm,
                "n_columns": int(len(graph.columns)),
            }
            serialize.save_table_csv(
                os.path.join(outdir, "graph.csv"),
                {"x_pp": graph.columns, "g": graph.g, "grad_g": graph.grad_g},
            )

        if ana.get("flatness", {}).get("enabled", True):
            stage = "flatness"
            scales = ana.get("flatness", {}).get("scales")
            if scales is None:
                scales = [r for r in [0.25, 0.125, 0.0625] if r >= 8 * h]
            if scales:
                frep = reifenberg_delta(slit, scales, centers=centers)
                summary["flatness"] = {
                    "scales": list(map(float, scales)),
                    "delta": [[None if not np.isfinite(v) else v for v in row]
                              for row in frep.delta],
                    "worst_delta": frep.worst_delta,
                    "n_skipped": len(frep.skipped),
                }
            else:
                summary["flatness"] = {"skipped": "no admissible scales >= 8h"}

        if ana.get("expansion", {}).get("enabled", True):
            stage = "expansion"
            exp_rows = []
            for c in gated:
                try:
                    frame = frame_at(c, metric_full, slit)
                    fit = fit_expansion(w, c, frame, slit,
                                        mode="interior" if mode == "interior" else "boundary")
                    comp = check_compatibility(fit)
                    exp_rows.append({
                        "center": list(c),
                        "a": fit.a,
                        "a_eff": fit.a_eff,
                        "b_nu": fit.b_e["nu"],
                        "b_np1": fit.b_np1,
                        "b_tilde": fit.b_tilde,
                        "c1": fit.frame.c1,
                        "c2": fit.frame.c2,
                        "residual_exponent": fit.residual_exponent,
                        "residual_r2": fit.residual_r2,
                        "curl_defect": comp.curl_defect,
                        "coeff_defect": comp.coeff_defect,
                    })
                except ValueError as exc:
                    exp_rows.append({"center": list(c), "error": str(exc)})
            summary["expansion"] = exp_rows
            serialize.dump_json(os.path.join(outdir, "expansion.json"), exp_rows)

        if n == 2 and ana.get("quotient", {}).get("enabled", True) and graph is not None:
            stage = "quotient"
            qrep = quotient_regularity(w, slit, e=np.array([1.0, 0.0]),
                                       centers=centers, graph=graph)
            summary["quotient"] = {
                "limits": [None if not np.isfinite(v) else v for v in qrep.limits],
                "max_mismatch": qrep.max_mismatch,
            }

        if ana.get("blowup", {}).get("enabled", False):
            stage = "blowup"
            b_radii = ana.get("blowup", {}).get("radii", [0.25, 0.125, 0.0625])
            rows = []
            for c in gated:
                dists = []
                for r in b_radii:
                    try:
                        bl = blowup(w, c, r)
                        d, _ = c1_distance_to_model(bl)
                        dists.append(d)
                    except ValueError:
                        dists.append(None)
                ok = [d for d in dists if d is not None]
                rows.append({
                    "center": list(c),
                    "radii": list(map(float, b_radii)),
                    "c1_distance": dists,
                    "decreasing": bool(all(a > b for a, b in zip(ok, ok[1:]))) if len(ok) >= 2 else None,
                })
            summary["blowup"] = rows

        if ana.get("holder", {}).get("enabled", False):
            stage = "holder"
            expo = float(ana.get("holder", {}).get("exponent", 0.5))
            region = w.grid.upper_mask() & (
                np.sum(w.grid.coords**2, axis=-1) <= 0.25
            )
            val = holder_seminorm_gradient(w, region, expo,
                                           seed=int(cfg.get("seed", 0)))
            summary["holder"] = {"exponent": expo, "seminorm": val}

        if ana.get("barrier", {}).get("enabled", False):
            stage = "barrier"
            s = float(ana.get("barrier", {}).get("s", 0.25))
            wd = whitney_decompose(slit)
            approximate_normals(wd, slit)
            bar = build_barrier("h_minus_s", s, wd, metric_full, slit)
            brep = verify_barrier(bar, metric_full, slit, band=8 * h,
                                  compare_closed_form=bool(
                                      cfg["metric"].get("kind") == "identity"))
            summary["barrier"] = {
                "s": s,
                "min_operator_weighted": brep.min_operator_weighted,
                "closed_form_ratio": list(brep.closed_form_ratio),
                "cone_growth_min": brep.cone_growth_min,
                "global_floor": brep.global_floor,
                "n_cubes": len(wd),
            }

        stage = "summary"
        serialize.dump_json(os.path.join(outdir, "summary.json"), summary)
        return summary
    except Exception as exc:
        manifest = {
            "stage": stage,
            "error": str(exc),
            "traceback": traceback.format_exc(),
        }
        serialize.dump_json(os.path.join(outdir, "error.json"), manifest)
        raise


# ---------------------------------------------------------------------------
# compare

def _walk_diff(a, b, path, rtol, atol, out):
    num = (int, float)
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            if k not in a or k not in b:
                out.append((path + "/" + str(k), "missing", None, None))
                continue
            _walk_diff(a[k], b[k], path + "/" + str(k), rtol, atol, out)
    elif isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            out.append((path, "length", len(a), len(b)))
            return
        for i, (x, y) in enumerate(zip(a, b)):
            _walk_diff(x, y, f"{path}[{i}]", rtol, atol, out)
    elif isinstance(a, num) and isinstance(b, num) and not isinstance(a, bool):
        fa, fb = float(a), float(b)
        if np.isnan(fa) and np.isnan(fb):
            return
        if abs(fa - fb) > atol + rtol * max(abs(fa), abs(fb)):
            out.append((path, "value", fa, fb))
    else:
        if a is None and b is None:
            return
        if a != b:
            out.append((path, "value", a, b))


def compare_summaries(path_a, path_b, rtol=0.0, atol=0.0):
    a = serialize.load_json(path_a)
    b = serialize.load_json(path_b)
    if a.get("schema_version") != b.get("schema_version"):
        raise ConfigError("schema mismatch between summaries")
    out = []
    _walk_diff(a, b, "", rtol, atol, out)
    return out


# ---------------------------------------------------------------------------
# bundled configs

def bundled_configs():
    base_solver = {"tol": 1e-8, "max_sweeps": 200000, "relax": None}
    return {
        "constant_w32": {
            "schema_version": SCHEMA_VERSION,
            "seed": 0,
            "grid": {"dim": 2, "h": 1.0 / 128},
            "mode": "boundary_zero",
            "metric": {"kind": "identity", "p": "inf"},
            "dirichlet": {"kind": "w32"},
            "solver": base_solver,
            "analysis": {"blowup": {"enabled": True}, "barrier": {"enabled": True}},
        },
        "trivial_zero": {
            "schema_version": SCHEMA_VERSION,
            "seed": 0,
            "grid": {"dim": 2, "h": 1.0 / 64},
            "mode": "boundary_zero",
            "metric": {"kind": "identity", "p": "inf"},
            "dirichlet": {"kind": "zero"},
            "solver": base_solver,
            "analysis": {},
        },
        "perturbed2d": {
            "schema_version": SCHEMA_VERSION,
            "seed": 0,
            "grid": {"dim": 2, "h": 1.0 / 128},
            "mode": "boundary_zero",
            "metric": {"kind": "perturbed", "amplitude": 0.05,
                       "wavevector": [3.0, 2.0], "p": "inf"},
            "dirichlet": {"kind": "w32"},
            "solver": base_solver,
            "analysis": {"blowup": {"enabled": True},
                         "holder": {"enabled": True, "exponent": 0.5}},
        },
        "perturbed3d_small": {
            "schema_version": SCHEMA_VERSION,
            "seed": 0,
            "grid": {"dim": 3, "h": 1.0 / 32},
            "mode": "boundary_zero",
            "metric": {"kind": "perturbed", "amplitude": 0.002,
                       "wavevector": [3.0, 2.0, 2.0], "p": "inf"},
            "dirichlet": {"kind": "w32"},
            "solver": base_solver,
            "analysis": {},
        },
        "interior_abs": {
            "schema_version": SCHEMA_VERSION,
            "seed": 0,
            "grid": {"dim": 2, "h": 1.0 / 64},
            "mode": "interior",
            "metric": {"kind": "identity", "p": "inf"},
            "dirichlet": {"kind": "abs_linear"},
            "solver": base_solver,
            "analysis": {"growth": {"enabled": False},
                         "flatness": {"enabled": False},
                         "expansion": {"enabled": False}},
        },
    }


# ---------------------------------------------------------------------------
# entry point

def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="thinobstacle",
        description="Thin obstacle problem laboratory: solve, extract, analyse.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--threads", type=int, default=None)
    p_run.add_argument("--tol-overrides", default=None,
                       help="JSON object merged into the solver block")

    p_cmp = sub.add_parser("compare", help="diff two summary JSON files")
    p_cmp.add_argument("summary_a")
    p_cmp.add_argument("summary_b")
    p_cmp.add_argument("--rtol", type=float, default=0.0)
    p_cmp.add_argument("--atol", type=float, default=0.0)

    p_gen = sub.add_parser("gen-config", help="write the bundled configs")
    p_gen.add_argument("--out", default=".")
    p_gen.add_argument("names", nargs="*", default=[])

    args = parser.parse_args(argv)

    if args.command == "gen-config":
        cfgs = bundled_configs()
        names = args.names or sorted(cfgs)
        serialize.ensure_dir(args.out)
        for name in names:
            if name not in cfgs:
                print(f"unknown config {name!r}; known: {sorted(cfgs)}",
                      file=sys.stderr)
                return 2
            path = os.path.join(args.out, f"{name}.json")
            serialize.dump_json(path, cfgs[name])
            print(path)
        return 0

    if args.command == "run":
        threads = args.threads or os.environ.get("THINOBSTACLE_THREADS")
        if threads:
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                        "MKL_NUM_THREADS"):
                os.environ[var] = str(threads)
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return 2
        if args.tol_overrides:
            try:
                cfg["solver"].update(json.loads(args.tol_overrides))
            except json.JSONDecodeError as exc:
                print(f"invalid --tol-overrides: {exc}", file=sys.stderr)
                return 2
        try:
            run_pipeline(cfg, args.out)
        except Exception as exc:
            print(f"pipeline failed: {exc}", file=sys.stderr)
            return 3
        print(os.path.join(args.out, "summary.json"))
        return 0

    if args.command == "compare":
        try:
            diffs = compare_summaries(args.summary_a, args.summary_b,
                                      rtol=args.rtol, atol=args.atol)
        except ConfigError as exc:
            print(f"compare failed: {exc}", file=sys.stderr)
            return 2
        for path, kind, va, vb in diffs:
            print(f"{path}: {kind}: {va!r} != {vb!r}")
        return 1 if diffs else 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
