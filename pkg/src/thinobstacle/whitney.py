"""Whitney decomposition of the ball minus the contact boundary.

Dyadic cubes with disjoint interiors covering B_1 minus a neighbourhood of
the boundary point set, satisfying

  (W1)  diam(Q) <= dist(Q, Gamma) <= 4 diam(Q)
  (W2)  touching cubes differ by at most a factor 4 in diameter
  (W3)  a cube touches at most 12^{n+1} others

and mirror-symmetric in x_{n+1} (the boundary set lies in the thin space,
so refinement decisions mirror).  Recursion stops at cubes smaller than
half a mesh cell; the uncovered sliver is the boundary-adjacent band that
the barrier construction excludes anyway.

Each cube carries a projection point (a nearest boundary node) and, after
approximate_normals, a thin-space unit normal fitted at scale 64 diam(Q).
"""

from dataclasses import dataclass, field

import numpy as np

from .grid import SlitSet


@dataclass
class WhitneyDecomposition:
    centers: np.ndarray          # (m, d)
    half: np.ndarray             # (m,) half side lengths
    projections: np.ndarray      # (m, d) nearest boundary nodes
    normals: np.ndarray = None   # (m, n) thin-space normals (after fitting)
    normal_scale_clamped: np.ndarray = None
    neighbors: list = field(default=None, repr=False)

    @property
    def diam(self):
        d = self.centers.shape[1]
        return 2.0 * self.half * np.sqrt(d)

    def __len__(self):
        return len(self.centers)


def _dist_points_to_cube(points, center, half):
    gap = np.abs(points - center) - half
    return np.linalg.norm(np.clip(gap, 0.0, None), axis=1)


def whitney_decompose(slit: SlitSet, min_half=None) -> WhitneyDecomposition:
    """Dyadic Whitney cubes of B_1 minus the free boundary point set."""
    if slit.no_free_boundary or not slit.gamma.any():
        raise ValueError("empty free boundary; no decomposition")
    grid = slit.grid
    d = grid.dim
    gamma = slit.gamma_points_ambient()
    if min_half is None:
        min_half = grid.h / 4.0

    # 2^d unit root cubes tiling [-1,1]^d, mirror-symmetric by construction
    signs = np.stack(np.meshgrid(*([[-0.5, 0.5]] * d), indexing="ij"), -1).reshape(-1, d)
    stack = [(c, 0.5) for c in signs]
    out_centers, out_half = [], []
    while stack:
        center, half = stack.pop()
        diam = 2.0 * half * np.sqrt(d)
        dist = _dist_points_to_cube(gamma, center, half).min()
        if dist - 1e-12 > 1.0 + diam:
            continue  # cannot intersect the unit ball region of interest
        if np.linalg.norm(center) - half * np.sqrt(d) > 1.0:
            continue  # entirely outside B_1
        if dist >= diam - 1e-12:
            out_centers.append(center)
            out_half.append(half)
            continue
        if half / 2.0 < min_half:
            continue  # boundary-adjacent sliver, dropped
        off = half / 2.0
        for s in signs:
            stack.append((center + 2.0 * off * s, off))

    centers = np.array(out_centers)
    half = np.array(out_half)

    from scipy.spatial import cKDTree

    tree = cKDTree(gamma)
    _, nearest = tree.query(centers)
    projections = gamma[nearest]

    wd = WhitneyDecomposition(centers=centers, half=half, projections=projections)
    wd.neighbors = _touching(centers, half)
    return wd


def _touching(centers, half):
    """Adjacency by closed-cube intersection in the max norm."""
    m = len(centers)
    neighbors = [[] for _ in range(m)]
    order = np.argsort(half)
    tol = 1e-9
    for a in range(m):
        gap = np.abs(centers - centers[a]).max(axis=1) - (half + half[a])
        touch = np.where(gap <= tol)[0]
        neighbors[a] = [int(b) for b in touch if b != a]
    del order
    return neighbors


def check_w1(wd: WhitneyDecomposition, gamma_points):
    """(W1) ratios dist/diam per cube; valid decompositions sit in [1, 4]."""
    ratios = np.empty(len(wd))
    for i in range(len(wd)):
        dist = _dist_points_to_cube(gamma_points, wd.centers[i], wd.half[i]).min()
        ratios[i] = dist / wd.diam[i]
    return ratios


def check_w2(wd: WhitneyDecomposition):
    """Neighbour diameter ratios; (W2) demands [1/4, 4]."""
    ratios = []
    for a, nbs in enumerate(wd.neighbors):
        for b in nbs:
            ratios.append(wd.half[a] / wd.half[b])
    return np.array(ratios) if ratios else np.ones(1)


def check_w3(wd: WhitneyDecomposition):
    """Touching-cube counts; (W3) demands <= 12^{n+1}."""
    return np.array([len(nbs) for nbs in wd.neighbors])


def approximate_normals(wd: WhitneyDecomposition, slit: SlitSet, scale=64.0,
                        flatness_eps=None):
    """Thin-space normals from total-least-squares plane fits at scale 64 r_j.

    The fitted plane is a canonical witness of the flatness condition at
    the projection point.  Fit balls leaving the domain are clamped to the
    available data and flagged.  Normals are oriented towards the
    positivity set.  Returns the slow-variation certificate: the maximum
    |nu_j - nu_k| over touching cubes (divided by flatness_eps if given).
    """
    grid = slit.grid
    gp = slit.gamma_points
    op = slit.omega_points
    n = grid.n
    m = len(wd)
    normals = np.zeros((m, n))
    clamped = np.zeros(m, dtype=bool)
    for j in range(m):
        xj = wd.projections[j][:-1]
        r_fit = scale * wd.diam[j]
        if r_fit > 2.0:
            r_fit = 2.0
            clamped[j] = True
        if n == 1:
            side = np.mean(op[:, 0]) - xj[0] if len(op) else 1.0
            normals[j, 0] = 1.0 if side >= 0 else -1.0
            continue
        local = gp[np.linalg.norm(gp - xj, axis=1) <= r_fit]
        if len(local) < 2:
            local = gp
            clamped[j] = True
        centred = local - local.mean(axis=0)
        _, _, vt = np.linalg.svd(centred, full_matrices=False)
        nu = vt[-1]
        near_om = op[np.linalg.norm(op - xj, axis=1) <= max(r_fit, 4 * grid.h)]
        if len(near_om) and np.mean((near_om - xj) @ nu) < 0:
            nu = -nu
        normals[j] = nu

    wd.normals = normals
    wd.normal_scale_clamped = clamped

    dev = 0.0
    for a, nbs in enumerate(wd.neighbors):
        for b in nbs:
            dev = max(dev, float(np.linalg.norm(normals[a] - normals[b])))
    cert = {"max_neighbor_deviation": dev}
    if flatness_eps:
        cert["deviation_over_eps"] = dev / flatness_eps
    return cert
