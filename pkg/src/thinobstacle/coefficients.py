"""Synthetic W^{1,p} metrics with the thin-space normalisations.

A metric is a symmetric (n+1)x(n+1) tensor per node, dimensionless, with

  (A1)  a^{i,n+1}(x',0) = 0 for i <= n    (no cross flux on the thin plane)
  (A2)  eigenvalues in [1/2, 2]
  (A3)  a in W^{1,p}, p > n+1; the discrete grad-L^p norm is reported as cstar
  (A4)  a(0) = identity

Metrics are generated already satisfying (A1); the classical change of
coordinates that produces (A1) for a general metric is out of scope.  On a
full-ball grid the tensor follows the even/odd reflection rule: entries
mixing the last axis with a tangential one are odd in x_{n+1}, all others
even.  (A1) makes the reflected tensor continuous.
"""

from dataclasses import dataclass

import numpy as np

from .grid import Grid

# deterministic phase offsets for the trigonometric perturbation
_PHASES = np.array(
    [
        [0.00, 1.30, 2.10],
        [1.30, 2.60, 0.70],
        [2.10, 0.70, 1.90],
    ]
)


@dataclass
class MetricField:
    """Sampled coefficient tensor with integrability metadata.

    a has shape (*grid.shape, dim, dim); p in (n+1, inf]; cstar is the
    discrete ||grad a||_{L^p} over the (half) ball.
    """

    grid: Grid
    a: np.ndarray
    p: float
    cstar: float

    @property
    def dim(self):
        return self.grid.dim

    def at_origin(self):
        idx = tuple(np.argmin(np.abs(ax)) for ax in self.grid.axes)
        return self.a[idx]

    def at_point(self, x):
        """Tensor at the nearest grid node to x."""
        idx = tuple(
            int(np.argmin(np.abs(ax - xi))) for ax, xi in zip(self.grid.axes, x)
        )
        return self.a[idx]


@dataclass
class ObstacleField:
    """Scalar obstacle on the thin-space sub-lattice, W^{2,p} tagged."""

    grid: Grid
    phi: np.ndarray        # shape grid.shape[:-1]
    p: float = np.inf

    def __post_init__(self):
        if self.phi.shape != self.grid.plane_lattice_shape():
            raise ValueError("obstacle must be sampled on the thin-space lattice")
        if not np.all(np.isfinite(self.phi[self.grid.plane_mask()])):
            raise ValueError("obstacle has non-finite values on the disc")


@dataclass
class Inhomogeneity:
    """Volumetric right-hand side f with integrability exponent q."""

    grid: Grid
    f: np.ndarray          # shape grid.shape
    q: float = np.inf

    def __post_init__(self):
        if self.f.shape != self.grid.shape:
            raise ValueError("inhomogeneity must be sampled on the grid")
        vals = np.abs(self.f[self.grid.active])
        w = self.grid.h**self.grid.dim
        self.lq_norm = (
            float(vals.max()) if np.isinf(self.q)
            else float((np.sum(vals**self.q) * w) ** (1.0 / self.q))
        )
        if not np.isfinite(self.lq_norm):
            raise ValueError("inhomogeneity has infinite discrete L^q norm")


def make_identity(grid: Grid, p=np.inf) -> MetricField:
    """Identity metric: a = delta everywhere, cstar = 0."""
    d = grid.dim
    a = np.zeros(grid.shape + (d, d))
    for i in range(d):
        a[..., i, i] = 1.0
    return MetricField(grid=grid, a=a, p=p, cstar=0.0)


def make_perturbed(grid: Grid, amplitude, wavevector, p=np.inf) -> MetricField:
    """Trigonometric perturbation of the identity metric.

    a = delta + amplitude * chi(x) * sin(2 pi k.x + phase_ij), with a smooth
    cutoff chi vanishing at the origin (keeps (A4)) and the a^{i,n+1} entries
    multiplied by x_{n+1} (keeps (A1)).  On full grids the tensor follows the
    reflection parities.  Raises if any nodal eigenvalue leaves [1/2, 2].
    """
    d = grid.dim
    k = np.asarray(wavevector, dtype=float)
    if k.shape != (d,):
        raise ValueError(f"wavevector must have {d} components")
    coords = grid.coords.copy()
    sign_last = np.sign(coords[..., -1])
    sign_last[sign_last == 0.0] = 1.0
    coords[..., -1] = np.abs(coords[..., -1])  # evaluate on the upper half, reflect

    r2 = np.sum(coords**2, axis=-1)
    chi = r2 / (r2 + 0.15**2)
    phase = 2.0 * np.pi * np.tensordot(coords, k, axes=([-1], [0]))

    a = np.zeros(grid.shape + (d, d))
    for i in range(d):
        a[..., i, i] = 1.0
    for i in range(d):
        for j in range(i, d):
            bump = amplitude * chi * np.sin(phase + _PHASES[i, j])
            if j == d - 1 and i < d - 1:
                bump = bump * coords[..., -1] * sign_last  # (A1) + odd reflection
            a[..., i, j] += bump
            if i != j:
                a[..., j, i] += bump

    ev = np.linalg.eigvalsh(a[grid.active])
    lo, hi = float(ev.min()), float(ev.max())
    if lo < 0.5 or hi > 2.0:
        raise ValueError(
            f"amplitude {amplitude} breaks the ellipticity window: eigenvalues in "
            f"[{lo:.3f}, {hi:.3f}]"
        )
    m = MetricField(grid=grid, a=a, p=p, cstar=0.0)
    m.cstar = grad_lp_norm(m)
    return m


def grad_lp_norm(metric: MetricField, p=None) -> float:
    """Discrete ||grad a||_{L^p} over the ball: central differences, midpoint rule.

    The pointwise magnitude is the max over tensor entries of |grad a^{ij}|;
    p = inf gives the max over nodes.
    """
    grid = metric.grid
    if p is None:
        p = metric.p
    h = grid.h
    grads = np.gradient(
        metric.a, h, axis=tuple(range(grid.dim))
    )  # list over axes, each (*shape, d, d)
    mag2 = np.zeros(grid.shape + (grid.dim, grid.dim))
    for g in grads:
        mag2 += g**2
    point = np.sqrt(mag2).max(axis=(-2, -1))
    vals = point[grid.active]
    if np.isinf(p):
        return float(vals.max())
    return float((np.sum(vals**p) * h**grid.dim) ** (1.0 / p))


@dataclass
class AssumptionReport:
    """Per-assumption verdicts with the worst offending node."""

    symmetric: bool
    symmetric_defect: float
    elliptic: bool
    eig_range: tuple
    eig_worst_node: tuple
    offdiag_plane: bool
    offdiag_worst: float
    origin_identity: bool
    origin_defect: float
    morrey_ratio: float

    @property
    def all_pass(self):
        return self.symmetric and self.elliptic and self.offdiag_plane and self.origin_identity


def check_assumptions(metric: MetricField, atol=1e-9) -> AssumptionReport:
    """Check (A1), (A2), (A4) plus symmetry; report the Morrey ratio.

    The Morrey consistency |a(x) - delta| <= C cstar |x|^{1-(n+1)/p} holds
    with an inexplicit constant, so the ratio is reported, not enforced.
    """
    grid, a = metric.grid, metric.a
    d = grid.dim

    sym_defect = float(np.abs(a - np.swapaxes(a, -1, -2))[grid.active].max())
    ev = np.linalg.eigvalsh(a[grid.active])
    lo, hi = float(ev.min()), float(ev.max())
    worst_flat = int(np.argmin(ev.min(axis=-1))) if ev.size else 0
    worst_node = tuple(
        np.argwhere(grid.active)[worst_flat]
    )

    plane_vals = a[grid.plane][:, :-1, -1]
    off_worst = float(np.abs(plane_vals).max()) if plane_vals.size else 0.0

    origin_defect = float(np.abs(metric.at_origin() - np.eye(d)).max())

    # empirical Morrey ratio sup |a - delta| / (cstar |x|^{1-(n+1)/p})
    if metric.cstar > 0:
        dev = np.abs(a - np.eye(d)).max(axis=(-2, -1))
        r = np.linalg.norm(grid.coords, axis=-1)
        expo = 1.0 - d / metric.p if not np.isinf(metric.p) else 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = dev / (metric.cstar * r**expo)
        ratio = ratio[grid.active & (r > 2 * grid.h)]
        morrey = float(np.nanmax(ratio)) if ratio.size else 0.0
    else:
        morrey = 0.0

    return AssumptionReport(
        symmetric=sym_defect <= atol,
        symmetric_defect=sym_defect,
        elliptic=(lo >= 0.5 - atol) and (hi <= 2.0 + atol),
        eig_range=(lo, hi),
        eig_worst_node=worst_node,
        offdiag_plane=off_worst <= atol,
        offdiag_worst=off_worst,
        origin_identity=origin_defect <= atol,
        origin_defect=origin_defect,
        morrey_ratio=morrey,
    )


def reflect_extend(metric: MetricField, full_grid: Grid) -> MetricField:
    """Extend a metric from the upper half ball to the full ball.

    Entries a^{ij} with i,j <= n and a^{n+1,n+1} extend evenly; a^{n+1,j}
    extends oddly.  (A1) is required, otherwise the extension would jump
    across the plane.
    """
    half_grid = metric.grid
    if not half_grid.spec.half:
        raise ValueError("reflect_extend expects a metric on the upper half ball")
    if full_grid.spec.half or full_grid.h != half_grid.h or full_grid.dim != half_grid.dim:
        raise ValueError("target grid must be the matching full-ball grid")
    rep = check_assumptions(metric, atol=1e-9)
    if not rep.offdiag_plane:
        raise ValueError(
            f"(A1) violated (max |a^(i,n+1)| on plane = {rep.offdiag_worst:.3g}); "
            "odd extension would be discontinuous"
        )
    d = half_grid.dim
    m = half_grid.shape[-1] - 1  # index count above plane
    a_full = np.zeros(full_grid.shape + (d, d))
    upper = [slice(None)] * (d - 1) + [slice(m, None)]
    a_full[tuple(upper)] = metric.a
    mirrored = metric.a[..., ::-1, :, :][..., :m, :, :]  # t = 1 .. h, mirrored below
    parity = np.ones((d, d))
    parity[:-1, -1] = -1.0
    parity[-1, :-1] = -1.0
    lower = [slice(None)] * (d - 1) + [slice(None, m)]
    a_full[tuple(lower)] = mirrored * parity
    out = MetricField(grid=full_grid, a=a_full, p=metric.p, cstar=metric.cstar)
    out.cstar = grad_lp_norm(out)
    return out


def restrict_half(metric: MetricField, half_grid: Grid) -> MetricField:
    """Restrict a full-ball metric to the upper half grid."""
    full = metric.grid
    if full.spec.half:
        raise ValueError("metric already lives on a half grid")
    m = (full.shape[-1] - 1) // 2
    sel = [slice(None)] * (full.dim - 1) + [slice(m, None)]
    a = metric.a[tuple(sel)].copy()
    out = MetricField(grid=half_grid, a=a, p=metric.p, cstar=metric.cstar)
    out.cstar = grad_lp_norm(out)
    return out
