"""Log-log regression helpers for scaling-exponent measurements.

All exponent estimates in this package go through loglog_fit so that the
slope, intercept and r^2 quality are computed the same way everywhere.
Fits with r^2 below RSQ_FLAG are flagged, not trusted.
"""

import numpy as np

RSQ_FLAG = 0.95


def linear_fit(x, y):
    """Least-squares line y = slope*x + intercept, with r^2.

    Returns (slope, intercept, r2).  r2 is defined as 1 - SS_res/SS_tot and
    set to 1.0 when y is constant (SS_tot == 0).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points for a line fit")
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope, intercept = coef
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0.0:
        r2 = 1.0
    else:
        r2 = 1.0 - np.sum(resid**2) / ss_tot
    return float(slope), float(intercept), float(r2)


def loglog_fit(r, q):
    """Slope of log(q) against log(r); drops non-positive entries.

    Returns (slope, r2, n_used).
    """
    r = np.asarray(r, dtype=float)
    q = np.asarray(q, dtype=float)
    keep = (r > 0) & (q > 0) & np.isfinite(q)
    if keep.sum() < 2:
        return np.nan, 0.0, int(keep.sum())
    slope, _, r2 = linear_fit(np.log(r[keep]), np.log(q[keep]))
    return slope, r2, int(keep.sum())


def dyadic_radii(h, r_min=None, r_max=0.25):
    """Dyadic radii r_max, r_max/2, ... down to r_min (default 4h).

    Sorted decreasing.  Raises if fewer than two radii fit in the window.
    """
    if r_min is None:
        r_min = 4.0 * h
    radii = []
    r = r_max
    while r >= r_min - 1e-12:
        radii.append(r)
        r /= 2.0
    if len(radii) < 2:
        raise ValueError(
            f"radius window [{r_min:.4g}, {r_max:.4g}] holds fewer than two dyadic radii"
        )
    return np.array(radii)
