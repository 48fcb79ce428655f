"""Contact-set extraction and the geometry of its boundary.

The contact set is read off the solved field by a tolerance test; the
free boundary is the one-cell layer of contact nodes adjacent to the
positivity set.  Geometry measurements:

  * fit_graph      graph representation x_n = g(x'') with smoothed slopes;
                   raw lattice differences quantise to multiples of h over
                   the column spacing, so gradients come from local
                   least-squares line fits over a window
  * reifenberg_delta   scaled Hausdorff distance to the best lattice plane,
                   by brute-force search over thin-space normals
  * quotient_regularity   Hoelder behaviour of d_e w / d_n w up to the
                   boundary inside non-degeneracy cones, with the boundary
                   limit cross-checked against -grad g
"""

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, SlitSet, hausdorff_distance, make_slit
from .regress import linear_fit, loglog_fit
from .solver import SolutionField

DEFAULT_CONTACT_TOL = 1e-7  # 10 x solver tolerance


def extract_sets(w: SolutionField, contact_tol=DEFAULT_CONTACT_TOL, phi=None) -> SlitSet:
    """Contact/positivity/free-boundary sets of a solved field.

    Contact nodes are thin-space nodes with w - phi <= contact_tol.  An
    empty contact set or empty positivity set raises no error; the returned
    slit carries the no_free_boundary flag instead.
    """
    grid = w.grid
    pv = w.plane_values()
    if phi is not None:
        pv = pv - (phi.phi if hasattr(phi, "phi") else phi)
    lam_mask = (pv <= contact_tol) & grid.plane_mask()
    return make_slit(grid, lam_mask)


@dataclass
class GraphFit:
    """Sampled graph x_n = g(x'') of the free boundary with derived norms."""

    columns: np.ndarray          # x'' sample positions (empty for n=1)
    g: np.ndarray                # boundary position per column
    grad_g: np.ndarray           # smoothed d g / d x''
    lipschitz: float
    holder_alpha: float = np.nan
    holder_seminorm: float = np.nan
    holder_r2: float = np.nan
    window: float = 0.0


def fit_graph(slit: SlitSet, fit_window=0.5, smooth_window=None) -> GraphFit:
    """Graph fit of the free boundary over |x''| <= fit_window.

    Requires a single boundary node per x'' column (graph-likeness); the
    offending columns are reported otherwise.  Slopes are least-squares fits
    over a centred window (default max(8h, 1/8)); the Hoelder exponent and
    seminorm of grad g come from a log-log fit of slope differences over
    pair distances in [4h, 1/4].
    """
    grid = slit.grid
    h = grid.h
    if grid.n == 1:
        gp = slit.gamma_points
        if len(gp) == 0:
            raise ValueError("empty free boundary; nothing to fit")
        return GraphFit(
            columns=np.zeros((0,)),
            g=np.array([gp[:, -1].mean()]),
            grad_g=np.zeros((0,)),
            lipschitz=0.0,
        )

    pc = grid.plane_coords()
    xpp_axis = grid.axes[0]
    cols = np.where(np.abs(xpp_axis) <= fit_window + 1e-12)[0]
    g_vals = np.full(len(cols), np.nan)
    bad = []
    for out_i, ci in enumerate(cols):
        hits = np.where(slit.gamma[ci])[0]
        if len(hits) == 0:
            continue
        if len(hits) > 1:
            xs = pc[ci][hits, -1]
            if xs.max() - xs.min() > h + 1e-12:
                bad.append(float(xpp_axis[ci]))
                continue
        g_vals[out_i] = pc[ci][hits, -1].mean()
    if bad:
        raise ValueError(f"free boundary is not graph-like over columns {bad[:8]}")
    keep = np.isfinite(g_vals)
    columns = xpp_axis[cols][keep]
    g_vals = g_vals[keep]
    if len(columns) < 5:
        raise ValueError("too few boundary columns for a graph fit")

    if smooth_window is None:
        smooth_window = max(8 * h, 0.25)
    grad_g = np.empty(len(columns))
    for i, c in enumerate(columns):
        sel = np.abs(columns - c) <= smooth_window + 1e-12
        slope, _, _ = linear_fit(columns[sel], g_vals[sel])
        grad_g[i] = slope
    lipschitz = float(np.abs(grad_g).max()) if grad_g.size else 0.0

    alpha, semi, r2 = np.nan, np.nan, np.nan
    if len(columns) >= 8:
        ii, jj = np.triu_indices(len(columns), k=1)
        dist = np.abs(columns[ii] - columns[jj])
        dgrad = np.abs(grad_g[ii] - grad_g[jj])
        band = (dist >= 4 * h) & (dist <= 0.25) & (dgrad > 1e-14)
        if band.sum() >= 5:
            alpha, _, r2 = linear_fit(np.log(dist[band]), np.log(dgrad[band]))
            alpha = float(np.clip(alpha, 0.0, 1.0))
            semi = float(np.max(dgrad[band] / dist[band] ** alpha))

    return GraphFit(
        columns=columns,
        g=g_vals,
        grad_g=grad_g,
        lipschitz=lipschitz,
        holder_alpha=alpha,
        holder_seminorm=semi,
        holder_r2=r2,
        window=smooth_window,
    )


@dataclass
class FlatnessReport:
    """Scaled plane-distances delta(x0, r) of the free boundary."""

    centers: np.ndarray
    scales: np.ndarray
    delta: np.ndarray            # (n_centers, n_scales); NaN where skipped
    worst_delta: float
    skipped: list = field(default_factory=list)


def _candidate_normals(n, step_deg):
    if n == 1:
        return np.array([[1.0]])
    ang = np.deg2rad(np.arange(0.0, 180.0, step_deg))
    return np.column_stack([np.cos(ang), np.sin(ang)])


def _plane_lattice_points(slit: SlitSet, x0, nu, r):
    """Thin-space lattice realisation of the plane through x0 normal to nu."""
    grid = slit.grid
    pc = grid.plane_coords()[grid.plane_mask()]
    rel = pc - x0
    close = np.abs(rel @ nu) <= grid.h / 2.0 + 1e-12
    inside = np.linalg.norm(rel, axis=1) <= r
    return pc[close & inside]


def reifenberg_delta(slit: SlitSet, scales, centers=None, coarse_deg=5.0,
                     fine_deg=1.0) -> FlatnessReport:
    """Reifenberg flatness numbers by brute-force plane search.

    For each centre and scale the candidate planes run over a discretised
    normal circle (coarse pass then 1-degree refinement); each plane is
    realised as the set of thin-space lattice nodes within h/2 of it, so a
    lattice-flat boundary scores exactly zero.  Balls holding fewer than two
    boundary nodes are skipped and recorded.
    """
    grid = slit.grid
    h = grid.h
    scales = np.asarray(scales, dtype=float)
    if np.any(scales < 8 * h - 1e-12):
        raise ValueError("flatness scales below 8h are discretisation noise")
    gp = slit.gamma_points
    if centers is None:
        centers = gp
    centers = np.atleast_2d(np.asarray(centers, dtype=float))

    delta = np.full((len(centers), len(scales)), np.nan)
    skipped = []
    for ic, x0 in enumerate(centers):
        rel = gp - x0
        dist = np.linalg.norm(rel, axis=1)
        for isc, r in enumerate(scales):
            local = gp[dist <= r]
            if len(local) < 2:
                skipped.append((tuple(x0), float(r)))
                continue
            best = np.inf
            best_nu = None
            for nu in _candidate_normals(grid.n, coarse_deg):
                plane_pts = _plane_lattice_points(slit, x0, nu, r)
                if len(plane_pts) == 0:
                    continue
                dh = hausdorff_distance(local, plane_pts)
                if dh < best:
                    best, best_nu = dh, nu
            if grid.n == 2 and best_nu is not None:
                base = np.rad2deg(np.arctan2(best_nu[1], best_nu[0]))
                for deg in np.arange(base - coarse_deg, base + coarse_deg, fine_deg):
                    ang = np.deg2rad(deg)
                    nu = np.array([np.cos(ang), np.sin(ang)])
                    plane_pts = _plane_lattice_points(slit, x0, nu, r)
                    if len(plane_pts) == 0:
                        continue
                    dh = hausdorff_distance(local, plane_pts)
                    best = min(best, dh)
            delta[ic, isc] = best / r
    finite = delta[np.isfinite(delta)]
    worst = float(finite.max()) if finite.size else np.nan
    return FlatnessReport(centers=centers, scales=scales, delta=delta,
                          worst_delta=worst, skipped=skipped)


@dataclass
class QuotientReport:
    """Boundary behaviour of d_e w / d_n w along non-degeneracy cones."""

    centers: np.ndarray
    limits: np.ndarray           # extrapolated quotient at the boundary
    holder_alpha: np.ndarray
    graph_grad: np.ndarray       # -grad g at matching columns (NaN if absent)
    max_mismatch: float


def quotient_regularity(w: SolutionField, slit: SlitSet, e, centers=None,
                        graph: GraphFit = None, d_min=None, d_max=0.25):
    """Quotient d_e w / d_n w sampled along the cone axis above each centre.

    The quotient is fitted as q0 + c d^{1/2} over boundary distances d; q0
    is the boundary limit.  A vanishing denominator in the sampled region
    raises (the instance violates non-degeneracy).  When a graph fit is
    supplied, the limits are cross-checked against -grad g columnwise.
    """
    grid = w.grid
    h = grid.h
    if d_min is None:
        d_min = 2 * h
    e = np.asarray(e, dtype=float)
    if e.shape == (grid.dim - 1,):
        e_amb = np.append(e, 0.0)
    else:
        e_amb = e
    if abs(e_amb[-1]) > 1e-12:
        raise ValueError("quotient direction must be tangential")

    from .splitting import directional_derivative

    dew = directional_derivative(w.values, e_amb, grid)
    en = np.zeros(grid.dim)
    en[-2] = 1.0
    dnw = directional_derivative(w.values, en, grid)

    if centers is None:
        centers = slit.gamma_points
    centers = np.atleast_2d(np.asarray(centers, dtype=float))

    limits = np.full(len(centers), np.nan)
    alphas = np.full(len(centers), np.nan)
    ggrad = np.full(len(centers), np.nan)
    for ic, c in enumerate(centers):
        x0 = np.append(c, 0.0) if c.shape == (grid.dim - 1,) else c
        idx0 = [int(np.argmin(np.abs(ax - v))) for ax, v in zip(grid.axes, x0)]
        ds, qs = [], []
        steps = int(d_max / h) + 2
        for k in range(1, steps):
            idx = list(idx0)
            idx[-2] += k
            if idx[-2] >= grid.shape[-2]:
                break
            idx = tuple(idx)
            if not grid.active[idx]:
                break
            d = slit.dist_gamma[idx]
            if d < d_min or d > d_max:
                continue
            den = dnw[idx]
            if den <= 0:
                raise ValueError(
                    f"d_n w <= 0 at distance {d:.3g} from the boundary near {x0}; "
                    "non-degeneracy violated"
                )
            ds.append(d)
            qs.append(dew[idx] / den)
        if len(ds) < 4:
            continue
        ds = np.array(ds)
        qs = np.array(qs)
        basis = np.vstack([np.ones_like(ds), np.sqrt(ds)]).T
        coef, *_ = np.linalg.lstsq(basis, qs, rcond=None)
        limits[ic] = coef[0]
        dq = np.abs(qs - coef[0])
        slope, _, _ = loglog_fit(ds[dq > 1e-14], dq[dq > 1e-14])
        alphas[ic] = slope
        if graph is not None and grid.n == 2 and graph.columns.size:
            j = int(np.argmin(np.abs(graph.columns - x0[0])))
            if np.abs(graph.columns[j] - x0[0]) <= grid.h and np.isfinite(graph.grad_g[j]):
                ggrad[ic] = -graph.grad_g[j]

    both = np.isfinite(limits) & np.isfinite(ggrad)
    mismatch = float(np.abs(limits[both] - ggrad[both]).max()) if both.any() else np.nan
    return QuotientReport(centers=centers, limits=limits, holder_alpha=alphas,
                          graph_grad=ggrad, max_mismatch=mismatch)
