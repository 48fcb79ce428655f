"""Degenerate auxiliary equation and solution splittings.

The workhorse is the linear solve of

    div(a grad u) - K dist(x, Gamma)^{-2} u = div F + g   off the contact set,
    u = 0 on the contact set and on the outer sphere,

whose singular potential suppresses u near the boundary of the contact set.
A tangential-derivative field splits as d_e w = v1 + v2 with v1 absorbing
the divergence right-hand side produced by the rough coefficients; the
solution itself splits as w = u + u~ through the non-divergence variant
with unit potential.  The potential's distance factor is floored at h/2:
the continuum potential blows up on the slit boundary, whose nodes carry
the Dirichlet condition anyway.

Decay is measured by log-log regression of |u| against dist(x, Gamma)
along the diagonal ray from the boundary point.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .coefficients import MetricField
from .grid import Grid, SlitSet
from .regress import loglog_fit
from .solver import SolutionField, assemble_operator

DEFAULT_POTENTIAL_FACTOR = 16.0  # K = factor * (sigma + 1); calibrated, not derived


def default_potential(sigma):
    return DEFAULT_POTENTIAL_FACTOR * (sigma + 1.0)


@dataclass
class SplitProblem:
    """Data of the degenerate solve; F has shape (dim, *grid.shape)."""

    metric: MetricField
    slit: SlitSet
    K: float
    F: np.ndarray = None
    g: np.ndarray = None
    sigma: float = 0.0
    p: float = np.inf

    def __post_init__(self):
        if self.K <= 0:
            raise ValueError("potential strength K must be positive")
        grid = self.metric.grid
        if self.F is not None and self.F.shape != (grid.dim,) + grid.shape:
            raise ValueError("F must have shape (dim, *grid.shape)")
        if self.g is not None and self.g.shape != grid.shape:
            raise ValueError("g must be a node field")

    def weighted_norms(self):
        """||F dist^{-sigma}||_p and ||g dist^{1-(n+1)/p-sigma}||_{p/2} (floored dist)."""
        grid = self.metric.grid
        d = np.maximum(self.slit.dist_gamma, grid.h / 2.0)
        act = grid.active
        out = {}
        if self.F is not None:
            mag = np.sqrt(np.sum(self.F**2, axis=0))
            vals = (mag * d**(-self.sigma))[act]
            out["F"] = _lp(vals, self.p, grid)
        if self.g is not None:
            expo = 1.0 - (grid.dim) / self.p - self.sigma if not np.isinf(self.p) else 1.0 - self.sigma
            vals = (np.abs(self.g) * d**expo)[act]
            out["g"] = _lp(vals, self.p / 2.0 if not np.isinf(self.p) else np.inf, grid)
        return out


def _lp(vals, p, grid):
    if np.isinf(p):
        return float(vals.max())
    return float((np.sum(vals**p) * grid.h**grid.dim) ** (1.0 / p))


@dataclass
class SplitPair:
    """Components of a splitting; main + err reproduces the input field."""

    u_main: SolutionField
    u_err: SolutionField
    input_field: np.ndarray = field(default=None, repr=False)
    bound_ratio: float = None


def _lambda_node_mask(grid: Grid, slit: SlitSet):
    """Node mask of the contact set inside the full grid (plane slice)."""
    mask = np.zeros(grid.shape, dtype=bool)
    mask[..., grid.plane_index] = slit.lam
    return mask & grid.active


def _divergence(F, grid: Grid):
    """Central-difference divergence of a face-free vector field."""
    div = np.zeros(grid.shape)
    for k in range(grid.dim):
        div += np.gradient(F[k], grid.h, axis=k)
    return div


def solve_degenerate(sp: SplitProblem) -> SolutionField:
    """Solve the SPD degenerate system; exact zeros on the contact set.

    The right-hand side div F + g is discretised with central differences;
    the system is solved directly (sparse LU), so the algebraic residual is
    at machine level.
    """
    grid = sp.metric.grid
    if grid.spec.half:
        raise ValueError("degenerate solves live on the reflected full ball")
    op = assemble_operator(sp.metric, grid)

    dist = np.maximum(sp.slit.dist_gamma, grid.h / 2.0)
    pot = sp.K * dist**-2.0
    pot_vec = np.zeros(grid.n_active)
    pot_vec[grid.node_index[grid.active]] = pot[grid.active]

    rhs = np.zeros(grid.shape)
    if sp.F is not None:
        rhs += _divergence(sp.F, grid)
    if sp.g is not None:
        rhs += sp.g
    b = np.zeros(grid.n_active)
    b[op.interior_ids] = -rhs[grid.interior]

    lam_nodes = _lambda_node_mask(grid, sp.slit)
    pinned = np.zeros(grid.n_active, dtype=bool)
    pinned[grid.node_index[lam_nodes]] = True
    interior_mask = np.zeros(grid.n_active, dtype=bool)
    interior_mask[op.interior_ids] = True
    free = interior_mask & ~pinned

    A = (op.A_off + sps.diags(op.diag + pot_vec)).tocsr()
    w = np.zeros(grid.n_active)
    A_ff = A[free][:, free].tocsc()
    try:
        lu = spla.splu(A_ff)
    except RuntimeError as exc:
        raise RuntimeError(f"degenerate system is singular: {exc}") from exc
    w[free] = lu.solve(b[free])

    values = np.zeros(grid.shape)
    values[grid.active] = w
    return SolutionField(grid=grid, values=values, mode="degenerate")


def directional_derivative(values, direction, grid: Grid):
    """Central-difference derivative along a unit direction vector."""
    e = np.asarray(direction, dtype=float)
    if e.shape == (grid.dim - 1,):
        e = np.append(e, 0.0)
    out = np.zeros(grid.shape)
    for k in range(grid.dim):
        if e[k] != 0.0:
            out += e[k] * np.gradient(values, grid.h, axis=k)
    return out


def split_tangential_derivative(w: SolutionField, metric: MetricField,
                                slit: SlitSet, e, K=None) -> SplitPair:
    """Split d_e w = v1 + v2; v1 solves the degenerate equation with
    F^i = -(d_e a^{ij}) d_j w.

    For a constant metric F = 0 and the error component vanishes.
    """
    grid = w.grid
    e = np.asarray(e, dtype=float)
    if e.shape == (grid.dim - 1,):
        e = np.append(e, 0.0)
    if abs(e[-1]) > 1e-12:
        raise ValueError("splitting direction must be tangential")
    if K is None:
        K = default_potential(0.0)

    dew = directional_derivative(w.values, e, grid)
    dew[~grid.active] = 0.0

    grads_w = np.gradient(w.values, grid.h, axis=tuple(range(grid.dim)))
    F = np.zeros((grid.dim,) + grid.shape)
    nonconstant = metric.cstar > 0
    if nonconstant:
        for i in range(grid.dim):
            dea_row = [
                directional_derivative(metric.a[..., i, j], e, grid)
                for j in range(grid.dim)
            ]
            for j in range(grid.dim):
                F[i] -= dea_row[j] * grads_w[j]
            F[i][~grid.active] = 0.0
        sp = SplitProblem(metric=metric, slit=slit, K=K, F=F)
        v1 = solve_degenerate(sp)
    else:
        v1 = SolutionField(grid=grid, values=np.zeros(grid.shape), mode="degenerate")

    v2_vals = dew - v1.values
    v2 = SolutionField(grid=grid, values=v2_vals, mode="split_main")
    return SplitPair(u_main=v2, u_err=v1, input_field=dew)


def assemble_nondivergence(metric: MetricField, grid: Grid, potential):
    """Matrix of -a^{ij} d_{ij} + potential over active nodes (not symmetric)."""
    d, h = grid.dim, grid.h
    a = metric.a
    idx = grid.node_index
    where_int = np.argwhere(grid.interior)
    center = idx[tuple(where_int.T)].astype(np.int32)

    rows, cols, vals = [], [], []
    diag = np.ones(grid.n_active)
    diag[center] = 0.0

    def nb(offset):
        return idx[tuple((where_int + np.asarray(offset)).T)].astype(np.int32)

    for k in range(d):
        akk = a[..., k, k][tuple(where_int.T)]
        for sgn in (1, -1):
            off = [0] * d
            off[k] = sgn
            rows.append(center)
            cols.append(nb(off))
            vals.append(-akk / h**2)
        np.add.at(diag, center, 2.0 * akk / h**2)

    for k in range(d):
        for l in range(k + 1, d):
            akl = a[..., k, l][tuple(where_int.T)]
            if np.abs(akl).max() == 0.0:
                continue
            coeff = 2.0 * akl / (4.0 * h**2)  # both (k,l) and (l,k) terms
            for sk, sl, s_out in [(1, 1, -1.0), (1, -1, 1.0), (-1, 1, 1.0), (-1, -1, -1.0)]:
                off = [0] * d
                off[k] = sk
                off[l] = sl
                rows.append(center)
                cols.append(nb(off))
                vals.append(s_out * coeff)

    A = sps.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_active, grid.n_active),
    )
    pvec = np.zeros(grid.n_active)
    pvec[grid.node_index[grid.active]] = potential[grid.active]
    return A, diag + pvec, center


def split_solution(w: SolutionField, metric: MetricField, slit: SlitSet,
                   f=None) -> SplitPair:
    """Split w = u + u~ through the non-divergence degenerate equation.

    u~ solves a^{ij} d_{ij} u~ - dist(x,Gamma)^{-2} u~ = f - (d_i a^{ij}) d_j w
    with zero data on the contact set; u = w - u~.  Reports the empirical
    ratio sup |u~| / (dist(Lambda) dist(Gamma)^{1-(n+1)/p}).
    """
    grid = w.grid
    dist = np.maximum(slit.dist_gamma, grid.h / 2.0)
    pot = dist**-2.0

    rhs = np.zeros(grid.shape)
    if f is not None:
        rhs += f.f if hasattr(f, "f") else f
    grads_w = np.gradient(w.values, grid.h, axis=tuple(range(grid.dim)))
    if metric.cstar > 0:
        for i in range(grid.dim):
            for j in range(grid.dim):
                da = np.gradient(metric.a[..., i, j], grid.h, axis=i)
                rhs -= da * grads_w[j]

    A, diag, center = assemble_nondivergence(metric, grid, pot)
    interior_mask = np.zeros(grid.n_active, dtype=bool)
    interior_mask[center] = True
    lam_nodes = _lambda_node_mask(grid, slit)
    pinned = np.zeros(grid.n_active, dtype=bool)
    pinned[grid.node_index[lam_nodes]] = True
    free = interior_mask & ~pinned

    b = np.zeros(grid.n_active)
    ids = grid.node_index[grid.interior]
    b[ids] = -rhs[grid.interior]  # A contains -a d_{ij}, so system is A u~ = -rhs

    u = np.zeros(grid.n_active)
    A_full = (A + sps.diags(diag)).tocsr()
    A_ff = A_full[free][:, free].tocsc()
    u[free] = spla.spsolve(A_ff, b[free])

    vals = np.zeros(grid.shape)
    vals[grid.active] = u
    u_err = SolutionField(grid=grid, values=vals, mode="split_err")
    u_main = SolutionField(grid=grid, values=w.values - vals, mode="split_main")

    expo = 1.0 - grid.dim / metric.p if not np.isinf(metric.p) else 1.0
    dl = np.maximum(slit.dist_lambda, grid.h / 2.0)
    denom = dl * dist**expo
    act = grid.active
    ratio = float(np.max(np.abs(vals[act]) / denom[act]))
    return SplitPair(u_main=u_main, u_err=u_err, input_field=w.values,
                     bound_ratio=ratio)


def decay_slope(u: SolutionField, slit: SlitSet, x0=None, d_min=None, d_max=0.12):
    """Log-log slope of |u| vs dist(Gamma) along the diagonal ray from x0.

    The ray is {x = x0 + t (e_n + e_{n+1})/sqrt(2)} sampled at grid nodes;
    by default x0 is the contact-boundary point nearest the origin.  The
    window is near-field by default: away from the boundary the solution
    saturates and changes sign, which says nothing about the vanishing rate.
    """
    grid = u.grid
    if x0 is None:
        gp = slit.gamma_points_ambient()
        x0 = gp[np.argmin(np.linalg.norm(gp, axis=1))]
    if d_min is None:
        d_min = 2.0 * grid.h
    idx0 = [int(np.argmin(np.abs(ax - c))) for ax, c in zip(grid.axes, x0)]
    steps = int(0.9 / grid.h)
    dists, vals = [], []
    for k in range(1, steps):
        idx = list(idx0)
        idx[-2] += k
        idx[-1] += k
        if any(i < 0 or i >= s for i, s in zip(idx, grid.shape)):
            break
        idx = tuple(idx)
        if not grid.active[idx]:
            break
        d = slit.dist_gamma[idx]
        if d < d_min or d > d_max:
            continue
        dists.append(d)
        vals.append(abs(u.values[idx]))
    slope, r2, n_used = loglog_fit(np.array(dists), np.array(vals))
    return {"slope": slope, "r2": r2, "n": n_used}
