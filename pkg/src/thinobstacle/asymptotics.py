"""Vanishing orders, blow-ups, expansion fits and growth exponents.

All exponents are measured by log-log regression over dyadic radii and
carry an r^2 quality; fits below 0.95 are flagged by the caller, not
trusted.  Expansion fits are gated to the regular window: the vanishing
order must sit in [1.4, 1.6] before a 3/2-profile fit is attempted, since
the next admissible homogeneity is 2.

Coefficient conventions.  ExpansionFit.a multiplies the unit-L^2 profile
(c_n-normalised); the compatibility identities of the gradient expansion
live at the unnormalised profile, so check_compatibility folds c_n into
the leading coefficient before testing b_nu c1 = b_{n+1} c2 and
a_eff = (2/3) b_{n+1} c2.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .grid import Grid, SlitSet, annulus_norm
from .profiles import (
    AsymptoticFrame,
    anisotropic_profile,
    eval_profile,
    normalization_constant,
)
from .regress import dyadic_radii, linear_fit, loglog_fit
from .solver import SolutionField

REGULAR_KAPPA_WINDOW = (1.4, 1.6)
DEFAULT_ELL0_FACTOR = 16.0  # ell_0 = (2^4 sqrt(n))^{-1}


def ell0(n, factor=DEFAULT_ELL0_FACTOR):
    """Cone-region aperture parameter ell_0 = (factor sqrt(n))^{-1}."""
    return 1.0 / (factor * np.sqrt(n))


@dataclass
class VanishingOrderEstimate:
    x0: np.ndarray
    kappa: float
    radii: np.ndarray
    r2: float
    norms: np.ndarray = field(default=None, repr=False)

    @property
    def regular(self):
        lo, hi = REGULAR_KAPPA_WINDOW
        return lo <= self.kappa <= hi


def vanishing_order(w: SolutionField, x0, radii=None) -> VanishingOrderEstimate:
    """Slope of ln(r^{-(n+1)/2} ||w||_{A+_{r,2r}(x0)}) against ln r.

    Radii default to the dyadic list in [4h, 1/4].  A vanishing annulus norm
    flags kappa = +inf.
    """
    grid = w.grid
    x0 = np.asarray(x0, dtype=float)
    if x0.shape == (grid.dim - 1,):
        x0 = np.append(x0, 0.0)
    if radii is None:
        radii = dyadic_radii(grid.h)
    radii = np.asarray(radii, dtype=float)
    norms = np.array([annulus_norm(grid, w.values, x0, r) for r in radii])
    if np.all(norms == 0.0):
        return VanishingOrderEstimate(x0=x0, kappa=np.inf, radii=radii, r2=1.0,
                                      norms=norms)
    scaled = radii ** (-(grid.dim) / 2.0) * norms
    kappa, r2, _ = loglog_fit(radii, scaled)
    return VanishingOrderEstimate(x0=x0, kappa=kappa, radii=radii, r2=r2, norms=norms)


@dataclass
class BlowupField:
    x0: np.ndarray
    r: float
    grid: Grid          # unit-ball grid carrying the rescaled field
    values: np.ndarray
    gradients: np.ndarray = field(default=None, repr=False)  # (dim, *shape)


def _interpolator(grid: Grid, values):
    filled = np.where(grid.active, values, 0.0)
    return RegularGridInterpolator(grid.axes, filled, bounds_error=False,
                                   fill_value=0.0)


def blowup(w: SolutionField, x0, r, unit_grid: Grid = None) -> BlowupField:
    """L^2-normalised rescaling w(x0 + r x) on a unit-ball grid.

    Linear interpolation onto the unit grid, then exact renormalisation in
    the discrete L^2(B_1^+) quadrature.  Requires r >= 8h and the rescaled
    ball inside the domain.
    """
    grid = w.grid
    x0 = np.asarray(x0, dtype=float)
    if x0.shape == (grid.dim - 1,):
        x0 = np.append(x0, 0.0)
    if r < 8.0 * grid.h - 1e-12:
        raise ValueError(f"blow-up radius {r} under-resolved (needs r >= 8h)")
    if np.linalg.norm(x0) + r > 1.0 + 1e-12:
        raise ValueError("blow-up ball leaves the domain")
    if unit_grid is None:
        from .grid import GridSpec, build_grid

        unit_grid = build_grid(GridSpec(dim=grid.dim, h=1.0 / 32,
                                        half=grid.spec.half))
    interp = _interpolator(grid, w.values)
    pts = x0 + r * unit_grid.coords.reshape(-1, grid.dim)
    vals = interp(pts).reshape(unit_grid.shape)
    vals[~unit_grid.active] = 0.0
    nrm = unit_grid.l2_norm_upper(vals)
    if nrm < 1e-14:
        raise ValueError("blow-up normalisation underflow")
    # gradients from the source grid (chain rule), not from differencing
    # the interpolant, whose cellwise slopes are lattice noise
    grads_src = np.gradient(w.values, grid.h, axis=tuple(range(grid.dim)))
    gr = np.empty((grid.dim,) + unit_grid.shape)
    for k in range(grid.dim):
        gk = _interpolator(grid, np.where(grid.interior, grads_src[k], 0.0))
        gr[k] = r * gk(pts).reshape(unit_grid.shape) / nrm
    return BlowupField(x0=x0, r=r, grid=unit_grid, values=vals / nrm,
                       gradients=gr)


def c1_distance_to_model(bl: BlowupField, angle_step_deg=1.0, radius=0.5,
                         exclude_plane_band=0.0, c1=1.0, c2=1.0,
                         quotient_step=None):
    """C^1 distance of a blow-up to its best thin-space rotation of the model.

    Brute force over normals at angle_step resolution (two signs in 2D);
    the distance is max|difference| + max|gradient difference| over the
    upper half-ball of the given radius.  exclude_plane_band masks a strip
    around the thin plane: a blow-up at scale r resolves the contact kink
    only to width ~ h/r, and comparing inside that strip measures the
    lattice, not the field.

    c1, c2 stretch the model profile (anisotropic frame scales at the
    centre): the blow-up limit at a boundary point carries the local
    coefficient tensor, and only reduces to the plain profile where it is
    the identity.  The stretched model is L^2-renormalised on the unit
    grid, matching the blow-up normalisation.  Returns (distance,
    best_normal).
    """
    g = bl.grid
    cn = normalization_constant(g.n)
    mask = g.upper_mask() & g.interior
    mask &= np.sum(g.coords**2, axis=-1) <= radius**2
    # stay off the plane row: the centred vertical difference of the even
    # field is 0 there, not the one-sided derivative the C^1 norm uses
    mask &= np.abs(g.coords[..., -1]) >= max(exclude_plane_band, g.h)
    h = g.h

    if quotient_step is not None:
        # derivatives as centred difference quotients at a fixed scale,
        # applied identically to both fields: the blow-up's sub-lattice
        # gradient noise (O(h/r) at small r) cancels instead of flooring
        # the comparison
        k_step = max(1, int(round(quotient_step / h)))
        grads_w = None
    else:
        k_step = None
        if bl.gradients is not None:
            grads_w = list(bl.gradients)
        else:
            grads_w = np.gradient(bl.values, h, axis=tuple(range(g.dim)))

    if g.n == 1:
        normals = [np.array([1.0]), np.array([-1.0])]
    else:
        ang = np.deg2rad(np.arange(0.0, 360.0, angle_step_deg))
        normals = [np.array([np.cos(a), np.sin(a)]) for a in ang]

    def coarse_quotient(fld, axis):
        out = np.zeros_like(fld)
        src_p = [slice(None)] * g.dim
        src_m = [slice(None)] * g.dim
        dst = [slice(None)] * g.dim
        src_p[axis] = slice(2 * k_step, None)
        src_m[axis] = slice(None, -2 * k_step)
        dst[axis] = slice(k_step, -k_step)
        out[tuple(dst)] = (fld[tuple(src_p)] - fld[tuple(src_m)]) / (2 * k_step * h)
        return out

    def quotient_mask():
        ok = mask.copy()
        for axis in range(g.dim):
            ok &= Grid._shift_mask(g.active, axis, k_step)
            ok &= Grid._shift_mask(g.active, axis, -k_step)
        return ok

    best = np.inf
    best_nu = None
    t2 = g.coords[..., -1] / c2
    for nu in normals:
        t1 = np.tensordot(g.coords[..., :-1], nu, axes=([-1], [0])) / c1
        model = cn * eval_profile("w32", t1, t2)
        model = np.where(g.active, model, 0.0)
        nrm = g.l2_norm_upper(model)
        model = model / nrm
        scale = 1.5 * cn / nrm
        diff = np.abs(bl.values - model)[mask].max()
        gdiff = 0.0
        if quotient_step is not None:
            qm = quotient_mask()
            for axis in range(g.dim):
                qw = coarse_quotient(bl.values, axis)
                qp = coarse_quotient(model, axis)
                gdiff = max(gdiff, np.abs(qw - qp)[qm].max())
        else:
            # exact model gradient: (3/2) c_n (w12 nu/c1, w12bar/c2) / nrm
            w12 = scale * eval_profile("w12", t1, t2)
            w12b = scale * eval_profile("w12bar", t1, t2)
            for k in range(g.dim - 1):
                gm = w12 * nu[k] / c1
                gdiff = max(gdiff, np.abs(grads_w[k] - gm)[mask].max())
            gdiff = max(gdiff, np.abs(grads_w[-1] - w12b / c2)[mask].max())
        dist = diff + gdiff
        if dist < best:
            best, best_nu = dist, nu
    return float(best), best_nu


@dataclass
class ExpansionFit:
    """Leading-order expansion coefficients at a regular boundary point."""

    frame: AsymptoticFrame
    a: float                     # coefficient of the c_n-normalised profile
    b_e: dict                    # direction label -> coefficient (plain w12)
    b_np1: float
    b_tilde: float = 0.0
    residual_exponent: float = np.nan
    residual_r2: float = np.nan
    residual_max: float = np.nan
    kappa: float = np.nan
    center_offset: float = 0.0   # sub-lattice boundary offset along nu

    @property
    def a_eff(self):
        """Coefficient of the unnormalised profile (c_n folded in)."""
        return self.a * normalization_constant(len(self.frame.nu))


def _node_samples(grid: Grid, frame: AsymptoticFrame, r_inner, r_outer):
    """Grid nodes in a slab around the span{nu, e_{n+1}} upper half plane.

    Sampling at nodes avoids interpolation noise, which otherwise floors
    the expansion residual; the profile is evaluated at each node's own
    (t1, t2), so the slab width costs only the boundary-coefficient
    variation along the boundary, not a projection error.
    """
    h = grid.h
    rel = grid.coords - frame.x0
    nu_amb = np.append(frame.nu, 0.0)
    t1 = np.tensordot(rel[..., :-1], frame.nu, axes=([-1], [0]))
    t2 = rel[..., -1]
    dist = np.linalg.norm(rel, axis=-1)
    sel = grid.active & (t2 >= 2 * h) & (dist >= r_inner) & (dist <= r_outer)
    if grid.n == 2:
        tau = np.array([nu_amb[1], -nu_amb[0]])  # thin-space tangent of Gamma
        off = rel[..., 0] * tau[0] + rel[..., 1] * tau[1]
        sel &= np.abs(off) <= 2 * h
    idx = np.where(sel)
    return idx, (t1[sel] / frame.c1), (t2[sel] / frame.c2)


def fit_expansion(w: SolutionField, x0, frame: AsymptoticFrame, slit: SlitSet,
                  mode="boundary", fit_radius=0.125, kappa=None) -> ExpansionFit:
    """Leading-order coefficients at x0 by least squares against the profiles.

    a from w against the anisotropic normalised 3/2 profile over grid nodes
    in a slab around the span{nu, e_{n+1}} half-plane within B_{1/8}(x0);
    b_nu and b_{n+1} from the directional derivatives against the 1/2
    profiles on the same nodes.  Interior mode adds the constant b~ to the
    d_{n+1} w expansion.  Requires the vanishing order at x0 inside the
    regular window.  The residual exponent comes from an envelope (band
    maximum) log-log regression of |w - a P - offset correction|.
    """
    grid = w.grid
    if kappa is None:
        kappa = vanishing_order(w, x0).kappa
    lo, hi = REGULAR_KAPPA_WINDOW
    if not (lo <= kappa <= hi):
        raise ValueError(
            f"vanishing order {kappa:.3f} outside the regular window "
            f"[{lo}, {hi}]; 3/2-expansion invalid"
        )

    h = grid.h
    cn = normalization_constant(grid.n)
    idx, t1s, t2s = _node_samples(grid, frame, 2 * h, fit_radius)
    if len(t1s) < 12:
        raise ValueError("too few slab nodes for an expansion fit")
    wv = w.values[idx]

    # the centre sits on a lattice node, up to h/2 off the true boundary;
    # that offset feeds an r^{1/2} mode into the fit (the profile's
    # tangential derivative), which would drown the higher-order residual
    # and bias the gradient coefficients.  w carries no 1/2-homogeneous
    # mode of its own, so estimating the offset from that mode and
    # re-centring is exact, not a model change.
    offset_total = 0.0
    for _ in range(2):
        prof = cn * eval_profile("w32", t1s, t2s)
        offset_basis = eval_profile("w12", t1s, t2s)
        basis = np.vstack([prof, offset_basis]).T
        coef, *_ = np.linalg.lstsq(basis, wv, rcond=None)
        a = float(coef[0])
        offset_coeff = float(coef[1])
        delta1 = -offset_coeff / (1.5 * a * cn)
        if abs(delta1) > 2 * h:
            break  # implausible shift; keep the lattice centre
        t1s = t1s - delta1
        offset_total += delta1 * frame.c1
    prof = cn * eval_profile("w32", t1s, t2s)
    offset_basis = eval_profile("w12", t1s, t2s)
    basis = np.vstack([prof, offset_basis]).T
    coef, *_ = np.linalg.lstsq(basis, wv, rcond=None)
    a = float(coef[0])
    offset_coeff = float(coef[1])

    grads = np.gradient(w.values, h, axis=tuple(range(grid.dim)))
    nu_amb = np.append(frame.nu, 0.0)
    dnu = np.zeros(grid.shape)
    for k in range(grid.dim):
        if nu_amb[k] != 0.0:
            dnu += nu_amb[k] * grads[k]
    dlast = grads[-1]

    w12 = offset_basis
    w12b = eval_profile("w12bar", t1s, t2s)
    dnu_v = dnu[idx]
    dlast_v = dlast[idx]

    b_nu = float(dnu_v @ w12 / (w12 @ w12))
    if mode == "interior":
        basis = np.vstack([np.ones_like(w12b), w12b]).T
        coef, *_ = np.linalg.lstsq(basis, dlast_v, rcond=None)
        b_tilde, b_np1 = float(coef[0]), float(coef[1])
    else:
        b_tilde = 0.0
        b_np1 = float(dlast_v @ w12b / (w12b @ w12b))

    resid = np.abs(wv - a * prof - offset_coeff * offset_basis)
    dist = np.hypot(t1s * frame.c1, t2s * frame.c2)
    # envelope regression: band maxima are robust to the sign scatter of
    # the pointwise residual
    edges = np.geomspace(2 * h, fit_radius, 9)
    mids, envs = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (dist >= lo) & (dist < hi)
        if sel.sum() >= 3:
            mids.append(np.sqrt(lo * hi))
            envs.append(resid[sel].max())
    res_expo, res_r2, _ = loglog_fit(np.array(mids), np.array(envs))

    labels = {"nu": b_nu}
    return ExpansionFit(frame=frame, a=a, b_e=labels, b_np1=b_np1,
                        b_tilde=b_tilde, residual_exponent=res_expo,
                        residual_r2=res_r2, residual_max=float(resid.max()),
                        kappa=kappa, center_offset=float(offset_total))


@dataclass
class CompatibilityReport:
    curl_defect: float           # |b_nu c1 - b_{n+1} c2| / max(...)
    coeff_defect: float          # |a_eff - (2/3) b_{n+1} c2| / a_eff
    direction_defects: dict


def check_compatibility(fit: ExpansionFit, extra_directions=None) -> CompatibilityReport:
    """Relative defects of the expansion identities.

    Tests b_nu c1 = b_{n+1} c2 and a_eff = (2/3) b_{n+1} c2, plus the
    direction law b_e = (3/2) a_eff (e . nu) / c1 for any supplied tangent
    directions with fitted coefficients.
    """
    fr = fit.frame
    lhs = fit.b_e["nu"] * fr.c1
    rhs = fit.b_np1 * fr.c2
    curl = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
    a_eff = fit.a_eff
    coeff = abs(a_eff - (2.0 / 3.0) * fit.b_np1 * fr.c2) / max(abs(a_eff), 1e-300)
    dir_defects = {}
    if extra_directions:
        for label, (e, b_val) in extra_directions.items():
            e = np.asarray(e, dtype=float)
            pred = 1.5 * a_eff * float(e @ fr.nu) / fr.c1
            dir_defects[label] = abs(b_val - pred) / max(abs(b_val), 1e-300)
    return CompatibilityReport(curl_defect=float(curl), coeff_defect=float(coeff),
                               direction_defects=dir_defects)


@dataclass
class GrowthReport:
    centers: np.ndarray
    radii: np.ndarray
    sup_w: np.ndarray            # (n_centers, n_radii)
    sup_grad: np.ndarray
    slopes_w: np.ndarray
    slopes_grad: np.ndarray
    r2_w: np.ndarray
    r2_grad: np.ndarray
    cone_lower_ratio: np.ndarray  # min of d_e w / dist^{1/2} over the cone region


def growth_exponents(w: SolutionField, slit: SlitSet, centers, radii=None,
                     e_dir=None, ell0_factor=DEFAULT_ELL0_FACTOR) -> GrowthReport:
    """Dyadic log-log slopes of sup_{B_r}|w| and sup_{B_r}|grad w|.

    Also reports the cone lower-bound ratio min d_e w / dist(Gamma)^{1/2}
    over {dist(Lambda) >= ell_0 dist(Gamma)} within the smallest radius,
    with ell_0 = (2^4 sqrt(n))^{-1} by default.
    """
    grid = w.grid
    h = grid.h
    if radii is None:
        radii = dyadic_radii(h, r_min=8 * h)
    radii = np.asarray(radii, dtype=float)
    if len(radii) < 2:
        raise ValueError("radius range too small for growth regression")
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if centers.shape[1] == grid.dim - 1:
        centers = np.hstack([centers, np.zeros((len(centers), 1))])

    grads = np.gradient(w.values, h, axis=tuple(range(grid.dim)))
    gmag = np.sqrt(sum(g**2 for g in grads))
    gmag[~grid.interior] = 0.0

    if e_dir is None:
        e_dir = np.zeros(grid.dim)
        e_dir[-2] = 1.0
    dew = np.zeros(grid.shape)
    for k in range(grid.dim):
        if e_dir[k] != 0.0:
            dew += e_dir[k] * grads[k]

    el0 = ell0(grid.n, ell0_factor)
    sup_w = np.zeros((len(centers), len(radii)))
    sup_g = np.zeros_like(sup_w)
    slopes_w = np.zeros(len(centers))
    slopes_g = np.zeros(len(centers))
    r2w = np.zeros(len(centers))
    r2g = np.zeros(len(centers))
    cone_ratio = np.full(len(centers), np.nan)

    absw = np.abs(np.where(grid.active, w.values, 0.0))
    for ic, x0 in enumerate(centers):
        dist = np.linalg.norm(grid.coords - x0, axis=-1)
        for ir, r in enumerate(radii):
            ball = (dist <= r) & grid.active
            sup_w[ic, ir] = absw[ball].max()
            sup_g[ic, ir] = gmag[ball].max()
        slopes_w[ic], r2w[ic], _ = loglog_fit(radii, sup_w[ic])
        slopes_g[ic], r2g[ic], _ = loglog_fit(radii, sup_g[ic])

        cone = (
            grid.interior
            & (dist <= radii.min())
            & (slit.dist_lambda >= el0 * slit.dist_gamma)
            & (slit.dist_gamma >= 2 * h)
        )
        if cone.any():
            vals = dew[cone] / np.sqrt(slit.dist_gamma[cone])
            cone_ratio[ic] = float(vals.min())

    return GrowthReport(centers=centers, radii=radii, sup_w=sup_w, sup_grad=sup_g,
                        slopes_w=slopes_w, slopes_grad=slopes_g, r2_w=r2w,
                        r2_grad=r2g, cone_lower_ratio=cone_ratio)


def holder_seminorm_gradient(w: SolutionField, region_mask, exponent,
                             d_min=None, d_max=None, focus_mask=None,
                             max_points=3000, seed=0):
    """Empirical Hoelder seminorm of grad w over sampled node pairs.

    sup |grad w(x) - grad w(y)| / |x-y|^exponent over pairs inside the
    region with d_min <= |x-y| <= d_max (defaults 4h and no upper bound).
    The region mask chooses the geometry: an upper-half mask keeps pairs on
    one side of the slit; a full-ball mask allows pairs straddling it.

    Sampling is deterministic: nodes in focus_mask (e.g. a band around the
    free boundary, where the sup lives) are kept at a finer stride than the
    background, and strides are fixed by the node ordering, not a RNG.  The
    seed argument is kept for interface stability only.
    """
    grid = w.grid
    h = grid.h
    if d_min is None:
        d_min = 4 * h
    if not (0.0 < exponent <= 1.0):
        raise ValueError("exponent must lie in (0, 1]")
    grads = np.gradient(w.values, h, axis=tuple(range(grid.dim)))
    mask = region_mask & grid.interior

    if focus_mask is None:
        focus_mask = np.zeros(grid.shape, dtype=bool)
    focus = mask & focus_mask
    rest = mask & ~focus_mask

    def strided(m, budget):
        idx = np.flatnonzero(m.ravel())
        if len(idx) <= budget:
            return idx
        step = int(np.ceil(len(idx) / budget))
        return idx[::step]

    idx_focus = strided(focus, (2 * max_points) // 3)
    idx_rest = strided(rest, max_points - len(idx_focus))
    idx = np.concatenate([idx_focus, idx_rest])
    pts = grid.coords.reshape(-1, grid.dim)[idx]
    gv = np.stack([g.ravel()[idx] for g in grads], axis=-1)

    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    gdiff = np.linalg.norm(gv[:, None, :] - gv[None, :, :], axis=-1)
    sel = dist >= d_min
    if d_max is not None:
        sel &= dist <= d_max
    np.fill_diagonal(sel, False)
    if not sel.any():
        return 0.0
    return float((gdiff[sel] / dist[sel] ** exponent).max())
