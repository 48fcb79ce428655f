"""Finite-difference solver for the thin obstacle problem and its variants.

The divergence-form operator is discretised on the full (reflected) ball:
face-averaged coefficients for the diagonal part of the tensor, the
symmetric wide-stencil form D_k(a^{kl} D_l) + D_l(a^{kl} D_k) for the cross
terms.  The matrix is symmetric with zero row sums on interior rows, so the
constrained problem is the KKT system of a convex quadratic over {w >= phi
on the thin plane} and projected multicolour SOR converges monotonically.

Boundary modes solve the reflected problem with the constraint on the thin
plane; the natural flux -a^{n+1,j} d_j w appears as (half) the residual of
the plane rows.  Interior mode enforces the opposite complementarity sign
(nonnegative flux jump across the plane on the contact set) and is solved
by an active-set iteration that pins contact nodes to the obstacle, since a
projection method converges to the minimal-contact branch instead.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .coefficients import Inhomogeneity, MetricField, ObstacleField, reflect_extend
from .grid import Grid, GridSpec, build_grid

_FACE_FLOOR = 0.25  # half of the (A2) lower eigenvalue bound


class AssemblyError(RuntimeError):
    pass


@dataclass
class SolutionField:
    """Discrete solution on the (reflected) grid as a full box array."""

    grid: Grid
    values: np.ndarray
    mode: str = "boundary_zero"

    def upper_values(self):
        """Restrict to x_{n+1} >= 0 (identity on half grids)."""
        if self.grid.spec.half:
            return self.values
        sel = [slice(None)] * self.grid.dim
        sel[-1] = slice(self.grid.plane_index, None)
        return self.values[tuple(sel)]

    def plane_values(self):
        return self.values[..., self.grid.plane_index]


@dataclass
class SolveReport:
    w: SolutionField
    sweeps: int
    converged: bool
    pde_residual: float
    complementarity_residual: float
    energy: float
    energy_trace: np.ndarray = field(default=None, repr=False)


@dataclass
class ProblemSpec:
    """Problem data and solver parameters.

    metric lives on the upper half grid for the boundary modes (it is
    reflected internally) or on the full grid for interior mode.  dirichlet
    is a callable points -> values; in the boundary modes it is evaluated at
    (x', |x_{n+1}|), matching the even reflection of the solution.
    relax = None picks 2/(1 + sin(pi h)).
    """

    metric: MetricField
    mode: str
    dirichlet: object
    f: Inhomogeneity = None
    phi: ObstacleField = None
    relax: float = None
    tol: float = 1e-8
    max_sweeps: int = 200_000
    check_every: int = 50
    track_energy: bool = False

    def __post_init__(self):
        if self.mode not in ("boundary_zero", "boundary_obstacle", "interior"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "boundary_obstacle" and self.phi is None:
            raise ValueError("boundary_obstacle mode requires an obstacle field")


class DiscreteOperator:
    """Sparse operator A = -div(a grad) in 1/h^2 units over active nodes.

    Interior rows carry the stencil; sphere rows are Dirichlet placeholders
    (unit diagonal, untouched by sweeps).
    """

    def __init__(self, grid, A_off, diag, interior_ids, colors, plane_flags):
        self.grid = grid
        self.A_off = A_off            # off-diagonal part, CSR
        self.diag = diag              # full diagonal vector
        self.interior_ids = interior_ids
        self.colors = colors          # list of id arrays covering interior rows
        self.plane_flags = plane_flags  # per colour: which rows are constrained
        self._color_rows = [A_off[ids] for ids in colors]

    def residual(self, w, b):
        """b - A w on all active nodes (unscaled, 1/h^2 units)."""
        return b - self.A_off @ w - self.diag * w

    def apply(self, w):
        return self.A_off @ w + self.diag * w


def assemble_operator(metric: MetricField, grid: Grid = None) -> DiscreteOperator:
    """Assemble the divergence-form stencil on a full-ball grid."""
    if grid is None:
        grid = metric.grid
    if grid.spec.half:
        raise ValueError("operators are assembled on the reflected full ball")
    d, h = grid.dim, grid.h
    a = metric.a
    idx = grid.node_index
    n_act = grid.n_active
    interior = grid.interior
    where_int = np.argwhere(interior)
    center = idx[tuple(where_int.T)].astype(np.int32)

    rows, cols, vals = [], [], []
    diag = np.ones(n_act)
    diag[center] = 0.0

    def neighbour_ids(offset):
        shifted = where_int + np.asarray(offset)
        return idx[tuple(shifted.T)].astype(np.int32)

    # diagonal-coefficient faces
    for k in range(d):
        akk = a[..., k, k]
        akk_c = akk[tuple(where_int.T)]
        for sgn in (1, -1):
            off = [0] * d
            off[k] = sgn
            nb = neighbour_ids(off)
            akk_n = akk[tuple((where_int + np.asarray(off)).T)]
            face = 0.5 * (akk_c + akk_n)
            if np.any(face < _FACE_FLOOR):
                raise AssemblyError(
                    f"non-elliptic face coefficient on axis {k}: min {face.min():.3g}"
                )
            rows.append(center)
            cols.append(nb)
            vals.append(-face / h**2)
            np.add.at(diag, center, face / h**2)

    # cross terms: 4-point wide stencil, symmetric by construction
    for k in range(d):
        for l in range(k + 1, d):
            akl = a[..., k, l]
            if np.abs(akl[grid.active]).max() == 0.0:
                continue
            shifts = {}
            for axis, sgn in [(k, 1), (k, -1), (l, 1), (l, -1)]:
                off = [0] * d
                off[axis] = sgn
                shifts[(axis, sgn)] = akl[tuple((where_int + np.asarray(off)).T)]
            quarters = 1.0 / (4.0 * h**2)
            for sk, sl, s_out in [(1, 1, -1.0), (1, -1, 1.0), (-1, 1, 1.0), (-1, -1, -1.0)]:
                off = [0] * d
                off[k] = sk
                off[l] = sl
                nb = neighbour_ids(off)
                coeff = s_out * (shifts[(k, sk)] + shifts[(l, sl)]) * quarters
                rows.append(center)
                cols.append(nb)
                vals.append(coeff)

    A_off = sps.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_act, n_act),
    )

    # multicolour ordering: 2 colours when no cross terms, 2^d otherwise
    has_cross = any(
        np.abs(a[..., k, l][grid.active]).max() > 0.0
        for k in range(d)
        for l in range(k + 1, d)
    )
    if has_cross:
        colour_of = np.zeros(len(where_int), dtype=np.int64)
        for axis in range(d):
            colour_of += (where_int[:, axis] % 2) << axis
        n_col = 1 << d
    else:
        colour_of = where_int.sum(axis=1) % 2
        n_col = 2
    colors = [center[colour_of == c] for c in range(n_col)]
    colors = [c for c in colors if c.size]

    plane_node = np.zeros(n_act, dtype=bool)
    plane_node[idx[grid.plane & grid.interior]] = True
    plane_flags = [plane_node[ids] for ids in colors]

    return DiscreteOperator(grid, A_off, diag, center, colors, plane_flags)


def default_relax(h):
    """SOR factor 2/(1+sin(pi h)); near-optimal for the ball Laplacian."""
    return 2.0 / (1.0 + np.sin(np.pi * h))


def _full_grid_setup(spec: ProblemSpec):
    """Reflect half-grid data onto the full ball; pass full-grid data through."""
    metric = spec.metric
    if metric.grid.spec.half:
        full = build_grid(GridSpec(dim=metric.grid.dim, h=metric.grid.h, half=False))
        metric_full = reflect_extend(metric, full)
    else:
        full = metric.grid
        metric_full = metric
    return full, metric_full


def _dirichlet_values(spec: ProblemSpec, grid: Grid):
    pts = grid.coords[grid.sphere]
    if spec.mode != "interior":
        pts = pts.copy()
        pts[:, -1] = np.abs(pts[:, -1])  # even reflection of the data
    vals = np.asarray(spec.dirichlet(pts), dtype=float)
    if vals.shape != (pts.shape[0],):
        raise ValueError("dirichlet callable must return one value per boundary node")
    return vals


def _phi_on_plane(spec: ProblemSpec, grid: Grid):
    shape = grid.plane_lattice_shape()
    if spec.phi is None:
        return np.zeros(shape)
    if spec.phi.phi.shape != shape:
        raise ValueError("obstacle lattice does not match the grid")
    return spec.phi.phi


def compute_energy(metric: MetricField, w: np.ndarray, grid: Grid, upper_only: bool):
    """Discrete Dirichlet energy int a^{ij} d_i w d_j w (midpoint, interior nodes)."""
    d, h = grid.dim, grid.h
    grads = np.gradient(w, h, axis=tuple(range(d)))
    dens = np.zeros(grid.shape)
    for i in range(d):
        for j in range(d):
            dens += metric.a[..., i, j] * grads[i] * grads[j]
    mask = grid.interior
    if upper_only:
        weights = grid.quad_weights_upper()
        return float(np.sum(np.where(mask, dens, 0.0) * weights))
    return float(np.sum(dens[mask]) * h**d)


def solve_psor(spec: ProblemSpec) -> SolveReport:
    """Solve the discrete variational inequality; see the module docstring."""
    grid, metric_full = _full_grid_setup(spec)
    op = assemble_operator(metric_full, grid)

    b = np.zeros(grid.n_active)
    if spec.f is not None:
        fvals = spec.f.f
        if spec.f.grid.spec.half:
            tmp = np.zeros(grid.shape)
            m = grid.plane_index
            sel_up = [slice(None)] * (grid.dim - 1) + [slice(m, None)]
            sel_lo = [slice(None)] * (grid.dim - 1) + [slice(None, m)]
            tmp[tuple(sel_up)] = fvals
            tmp[tuple(sel_lo)] = fvals[..., ::-1][..., :m]
            fvals = tmp
        b[op.interior_ids] = -fvals[grid.interior]

    phi_plane = _phi_on_plane(spec, grid)
    phi_vec = np.full(grid.n_active, -np.inf)
    plane_ids = grid.node_index[grid.plane]
    phi_vec[plane_ids] = phi_plane[grid.plane_mask()]

    w = np.zeros(grid.n_active)
    sphere_ids = grid.node_index[grid.sphere]
    g_vals = _dirichlet_values(spec, grid)
    w[sphere_ids] = g_vals

    # reject boundary data below the obstacle on the plane trace
    on_plane_bd = np.abs(grid.coords[grid.sphere][:, -1]) < 1e-12
    if np.any(on_plane_bd):
        trace_ids = sphere_ids[on_plane_bd]
        if np.any(g_vals[on_plane_bd] < phi_vec[trace_ids] - 1e-12):
            raise ValueError("Dirichlet data lies below the obstacle on the plane trace")

    if spec.mode == "interior":
        return _solve_interior(spec, grid, metric_full, op, b, w, phi_vec)

    feasible = np.maximum(w, phi_vec)
    w[plane_ids] = feasible[plane_ids]

    omega = spec.relax if spec.relax is not None else default_relax(grid.h)
    h2 = grid.h**2
    track = spec.track_energy
    energies = [] if track else None

    diag = op.diag
    colour_data = [
        (ids, op._color_rows[i], diag[ids], b[ids], op.plane_flags[i], phi_vec[ids])
        for i, ids in enumerate(op.colors)
    ]

    plane_mask_vec = np.zeros(grid.n_active, dtype=bool)
    plane_mask_vec[grid.node_index[grid.plane & grid.interior]] = True
    free_mask = np.zeros(grid.n_active, dtype=bool)
    free_mask[op.interior_ids] = True
    free_mask &= ~plane_mask_vec

    int_mask = np.zeros(grid.n_active, dtype=bool)
    int_mask[op.interior_ids] = True
    if track:
        qb_fixed = op.apply(np.where(int_mask, 0.0, w))

        def quad_functional(wv):
            # 1/2 w_I A_II w_I - w_I (b_I - A_IB w_B): descent functional of the sweeps
            q = op.apply(wv)
            return float(
                0.5 * wv[int_mask] @ q[int_mask]
                + 0.5 * wv[int_mask] @ qb_fixed[int_mask]
                - b[int_mask] @ wv[int_mask]
            )

    converged = False
    sweeps = 0
    pde_res = np.inf
    comp_res = np.inf
    for sweep in range(spec.max_sweeps):
        sweeps = sweep + 1
        for ids, A_c, d_c, b_c, is_plane, phi_c in colour_data:
            wc = w[ids]
            wc = wc + omega * (b_c - A_c @ w - d_c * wc) / d_c
            np.maximum(wc, phi_c, out=wc, where=is_plane)
            w[ids] = wc
        if track:
            energies.append(quad_functional(w))
        if sweeps % spec.check_every == 0 or sweeps == spec.max_sweeps:
            r = op.residual(w, b) * h2
            pde_res = float(np.abs(r[free_mask]).max()) if free_mask.any() else 0.0
            slack = w[plane_mask_vec] - phi_vec[plane_mask_vec]
            flux = -r[plane_mask_vec]  # scaled contact force, >= 0 at convergence
            if slack.size:
                comp_res = float(np.abs(np.minimum(slack, flux)).max())
                neg = float(min(slack.min(), flux.min()))
            else:
                comp_res, neg = 0.0, 0.0
            if pde_res <= spec.tol and comp_res <= spec.tol and neg >= -spec.tol:
                converged = True
                break

    values = np.zeros(grid.shape)
    values[grid.active] = w
    sol = SolutionField(grid=grid, values=values, mode=spec.mode)
    energy = compute_energy(metric_full, values, grid, upper_only=True)
    return SolveReport(
        w=sol,
        sweeps=sweeps,
        converged=converged,
        pde_residual=pde_res,
        complementarity_residual=comp_res,
        energy=energy,
        energy_trace=np.array(energies) if track else None,
    )


def _solve_interior(spec, grid, metric_full, op, b, w, phi_vec):
    """Active-set solve of the interior complementarity problem.

    Contact nodes are pinned to the obstacle; a node is released when its
    flux jump turns negative and re-pinned when the free solve dips below
    the obstacle.  Each iterate solves the pinned linear system directly.
    """
    n_act = grid.n_active
    plane_ids = grid.node_index[grid.plane & grid.interior]
    sphere_ids = grid.node_index[grid.sphere]
    interior_mask = np.zeros(n_act, dtype=bool)
    interior_mask[op.interior_ids] = True

    A_full = op.A_off + sps.diags(op.diag)
    A_full = A_full.tocsr()

    pinned = np.zeros(n_act, dtype=bool)
    pinned[plane_ids] = True  # start from the maximal contact set
    h = grid.h

    settled = False
    for _ in range(60):
        fixed = ~interior_mask | pinned
        w_fix = w.copy()
        w_fix[pinned] = phi_vec[pinned]
        free = ~fixed
        A_ff = A_full[free][:, free]
        rhs = b[free] - A_full[free][:, fixed] @ w_fix[fixed]
        w_free = spla.spsolve(A_ff.tocsc(), rhs)
        w = w_fix
        w[free] = w_free

        r = (b - A_full @ w) * h  # jump units; >= 0 at valid contact rows
        release = pinned & (r < -1e-9)
        violate = np.zeros(n_act, dtype=bool)
        violate[plane_ids] = True
        violate &= ~pinned & (w < phi_vec - 1e-11)
        state = (pinned & ~release) | violate
        if np.array_equal(state, pinned):
            settled = True
            break
        pinned = state
    if not settled:
        raise RuntimeError("interior active-set iteration did not settle")

    raw = b - A_full @ w
    free_rows = interior_mask.copy()
    free_rows[plane_ids] = False
    pde_res = float(np.abs(raw[free_rows] * h**2).max()) if free_rows.any() else 0.0
    slack = w[plane_ids] - phi_vec[plane_ids]
    jump_scaled = raw[plane_ids] * h  # positive where contact presses
    comp_res = float(np.abs(np.minimum(slack, jump_scaled)).max()) if slack.size else 0.0

    values = np.zeros(grid.shape)
    values[grid.active] = w
    sol = SolutionField(grid=grid, values=values, mode="interior")
    energy = compute_energy(metric_full, values, grid, upper_only=False)
    return SolveReport(
        w=sol,
        sweeps=1,
        converged=True,
        pde_residual=pde_res,
        complementarity_residual=comp_res,
        energy=energy,
    )


def flux_jump(w: SolutionField, order=2):
    """Discrete [d_{n+1} w] = one-sided upper minus lower derivative on the plane."""
    grid = w.grid
    if grid.spec.half:
        raise ValueError("flux jump needs the full-ball field")
    k = grid.plane_index
    h = grid.h
    v = w.values
    up1 = v[..., k + 1] - v[..., k]
    up2 = v[..., k + 2] - v[..., k]
    lo1 = v[..., k - 1] - v[..., k]
    lo2 = v[..., k - 2] - v[..., k]
    if order == 1:
        dup = up1 / h
        dlo = -lo1 / h
    else:
        dup = (4.0 * up1 - up2) / (2.0 * h)
        dlo = -(4.0 * lo1 - lo2) / (2.0 * h)
    return dup - dlo


def upper_flux(w: SolutionField, x0, n_fit=12):
    """One-sided upper derivative at a plane node by a {t, t^{3/2}} fit.

    The 3/2-homogeneous mode dominates plain difference quotients near a
    free-boundary point (O(sqrt(h)) bias), so the fit carries an explicit
    t^{3/2} basis column alongside the linear one.
    """
    grid = w.grid
    x0 = np.asarray(x0, dtype=float)
    idx = tuple(int(np.argmin(np.abs(ax - xi))) for ax, xi in zip(grid.axes, x0))
    k = grid.plane_index
    if idx[-1] != k:
        raise ValueError("upper_flux expects a thin-plane point")
    h = grid.h
    m = min(n_fit, grid.shape[-1] - 1 - k)
    t = h * np.arange(1, m + 1)
    line = list(idx[:-1]) + [slice(k + 1, k + 1 + m)]
    vals = w.values[tuple(line)] - w.values[idx]
    basis = np.vstack([t, t**1.5]).T
    coef, *_ = np.linalg.lstsq(basis, vals, rcond=None)
    return float(coef[0])


def normalize_interior(w: SolutionField, x0, slit=None, n_fit=12):
    """Subtract the odd linear mode b~(x0) x_{n+1} at an interior contact point.

    b~ is the one-sided upper flux limit; the returned field vanishes at x0
    with gradient O(h^{1/2}).  Raises when x0 is not a free-boundary node of
    the supplied slit.
    """
    if w.mode != "interior":
        raise ValueError("normalize_interior applies to interior-mode solutions")
    if slit is not None:
        pts = slit.gamma_points_ambient()
        x0a = np.asarray(x0, dtype=float)
        if x0a.shape == (w.grid.dim - 1,):
            x0a = np.append(x0a, 0.0)
        if pts.size == 0 or np.min(np.linalg.norm(pts - x0a, axis=1)) > w.grid.h / 2:
            raise ValueError(f"{x0} is not a free-boundary node")
    btilde = upper_flux(w, x0, n_fit=n_fit)
    values = w.values - btilde * w.grid.coords[..., -1]
    values[~w.grid.active] = 0.0
    return SolutionField(grid=w.grid, values=values, mode="interior"), btilde


def subtract_obstacle(w: SolutionField, phi: ObstacleField, metric: MetricField):
    """v = w - phi (constant extension in x_{n+1}) and the induced volume term.

    Returns (v, f) with f = -(d_i a^{ij}) d_j phi - a^{ij} d_{ij} phi, the
    right-hand side of the reduced zero-obstacle problem.
    """
    grid = w.grid
    if metric.grid is not grid:
        if metric.grid.spec.half:
            metric = reflect_extend(metric, grid)
        elif metric.grid.shape != grid.shape:
            raise ValueError("metric grid does not match the solution grid")
    h, d = grid.h, grid.dim
    phi_ext = np.repeat(phi.phi[..., None], grid.shape[-1], axis=-1)
    v = w.values - phi_ext
    v[~grid.active] = 0.0

    grads_phi = np.gradient(phi_ext, h, axis=tuple(range(d)))
    grads_a = [
        np.gradient(metric.a[..., i, :], h, axis=tuple(range(d)))
        for i in range(d)
    ]
    f = np.zeros(grid.shape)
    for i in range(d):
        for j in range(d):
            f -= grads_a[i][i][..., j] * grads_phi[j]
    for i in range(d):
        for j in range(d):
            second = np.gradient(grads_phi[j], h, axis=i)
            f -= metric.a[..., i, j] * second
    f[~grid.active] = 0.0
    vf = SolutionField(grid=grid, values=v, mode="boundary_zero")
    return vf, Inhomogeneity(grid=grid, f=f, q=phi.p)


def solve_linear(metric: MetricField, dirichlet, f=None):
    """Unconstrained Dirichlet solve (helper for manufactured oracles)."""
    spec = ProblemSpec(metric=metric, mode="boundary_zero", dirichlet=dirichlet, f=f)
    grid, metric_full = _full_grid_setup(spec)
    op = assemble_operator(metric_full, grid)
    b = np.zeros(grid.n_active)
    if f is not None:
        b[op.interior_ids] = -f.f[grid.interior]
    w = np.zeros(grid.n_active)
    sphere_ids = grid.node_index[grid.sphere]
    w[sphere_ids] = _dirichlet_values(spec, grid)
    interior_mask = np.zeros(grid.n_active, dtype=bool)
    interior_mask[op.interior_ids] = True
    A_full = (op.A_off + sps.diags(op.diag)).tocsr()
    free = interior_mask
    fixed = ~free
    A_ff = A_full[free][:, free]
    rhs = b[free] - A_full[free][:, fixed] @ w[fixed]
    w[free] = spla.spsolve(A_ff.tocsc(), rhs)
    values = np.zeros(grid.shape)
    values[grid.active] = w
    return SolutionField(grid=grid, values=values, mode="linear")
