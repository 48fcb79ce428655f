"""Closed-form model profiles and the anisotropic frame at contact-boundary points.

The two-dimensional building blocks, written in polar coordinates of the
(t1, t2) plane with theta measured from the positive t1 axis:

  w32        r^{3/2} cos(3 theta / 2)      degree 3/2, even in t2
  w12        r^{1/2} cos(theta / 2)        degree 1/2, even in t2
  w12bar     -r^{1/2} sin(theta / 2)       degree 1/2, odd in t2
  w12_power  w12^{1+s}                     barrier chart profile, s in (0,1)

The slit sits on {t2 = 0, t1 <= 0}; w12bar at the slit takes its limit from
above.  The gradient identity grad w32 = (3/2) (w12, w12bar) holds pointwise
off the slit.

The normalisation constant c_n makes c_n * w32 have unit L^2 norm on the
upper half ball; it is computed by quadrature on first use and cached.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .coefficients import MetricField
from .grid import SlitSet

PROFILE_KINDS = ("w32", "w12", "w12bar", "w12_power")

_CN_CACHE = {}


def eval_profile(kind, t1, t2, s=None):
    """Evaluate a model profile at (t1, t2); arrays broadcast.

    For the even profiles theta is measured in the upper half plane using
    |t2|; w12bar is odd in t2 with the slit value taken from above.
    """
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if kind == "w12bar":
        theta = np.arctan2(t2, t1)
        theta = np.where(
            (t2 == 0.0) & (t1 < 0.0), np.pi, theta
        )  # slit value from above
        r = np.hypot(t1, t2)
        return -np.sqrt(r) * np.sin(theta / 2.0)
    theta = np.arctan2(np.abs(t2), t1)
    r = np.hypot(t1, t2)
    if kind == "w32":
        return r**1.5 * np.cos(1.5 * theta)
    if kind == "w12":
        return np.sqrt(r) * np.cos(theta / 2.0)
    if kind == "w12_power":
        if s is None or not (0.0 < s < 1.0):
            raise ValueError("w12_power needs an exponent s in (0, 1)")
        return (np.sqrt(r) * np.cos(theta / 2.0)) ** (1.0 + s)
    raise ValueError(f"unknown profile kind {kind!r}; use one of {PROFILE_KINDS}")


def normalization_constant(n) -> float:
    """c_n with || c_n * w32 ||_{L^2(B_1^+)} = 1, computed by quadrature.

    The angular integral of cos^2(3 theta/2) over [0, pi] is exact (pi/2);
    the radial factor is integrated numerically and the value cached.
    """
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    if n in _CN_CACHE:
        return _CN_CACHE[n]
    ang = np.pi / 2.0
    if n == 1:
        rad, _ = quad(lambda r: r**4, 0.0, 1.0)
        norm2 = ang * rad
    else:
        # profile invariant in x'': chord length 2 sqrt(1-r^2) per (t1,t2) point
        rad, _ = quad(lambda r: r**4 * np.sqrt(1.0 - r**2), 0.0, 1.0)
        norm2 = 2.0 * ang * rad
    _CN_CACHE[n] = 1.0 / np.sqrt(norm2)
    return _CN_CACHE[n]


def model_solution(grid, rotate_nu=None):
    """c_n-normalised w32 sampled on a grid (x_n, x_{n+1} plane profile).

    rotate_nu optionally replaces e_n by a unit vector in the thin space
    (n = 2 only), evaluating the profile in ((x . nu), x_{n+1}).
    """
    cn = normalization_constant(grid.n)
    coords = grid.coords
    if rotate_nu is None:
        t1 = coords[..., -2]
    else:
        nu = np.asarray(rotate_nu, dtype=float)
        thin = coords[..., :-1]
        t1 = np.tensordot(thin, nu, axes=([-1], [0]))
    return cn * eval_profile("w32", t1, coords[..., -1])


def model_gradient_scale(n):
    """Coefficient (3/2) c_n in grad(c_n w32) = (3/2) c_n (w12, w12bar)."""
    return 1.5 * normalization_constant(n)


@dataclass
class AsymptoticFrame:
    """Local frame of the contact boundary at x0: normal and metric scales.

    nu is the outer unit normal of the contact set inside the thin space
    (pointing into the positivity set); c1 = sqrt(nu . A(x0) nu) and
    c2 = sqrt(a^{n+1,n+1}(x0)) are the anisotropic stretch factors.
    """

    x0: np.ndarray
    nu: np.ndarray
    A0: np.ndarray
    c1: float
    c2: float

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.nu = np.asarray(self.nu, dtype=float)
        if not np.isclose(np.linalg.norm(self.nu), 1.0, atol=1e-8):
            raise ValueError("frame normal must be a unit vector")
        lo, hi = 1.0 / np.sqrt(2.0), np.sqrt(2.0)
        if not (lo - 1e-9 <= self.c1 <= hi + 1e-9 and lo - 1e-9 <= self.c2 <= hi + 1e-9):
            raise ValueError(
                f"frame scales c1={self.c1:.4f}, c2={self.c2:.4f} leave "
                "[1/sqrt(2), sqrt(2)] (ellipticity window violated)"
            )

    def local_coords(self, x):
        """(t1, t2) = (((x-x0) . nu)/c1, x_{n+1}/c2) for ambient points x."""
        x = np.asarray(x, dtype=float)
        v = x - self.x0
        thin = v[..., :-1]
        t1 = np.tensordot(thin, self.nu, axes=([-1], [0])) / self.c1
        t2 = v[..., -1] / self.c2
        return t1, t2


def frame_at(x0, metric: MetricField, slit: SlitSet, fit_radius=0.1) -> AsymptoticFrame:
    """Frame at a free-boundary point: normal from the local boundary fit.

    For n = 2 the normal comes from a total-least-squares line fit of the
    free-boundary nodes within fit_radius of x0, oriented towards the
    positivity set.  For n = 1 the boundary is a point and the normal is the
    direction of the adjacent positivity nodes.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape == (metric.grid.dim - 1,):
        x0 = np.append(x0, 0.0)
    gp = slit.gamma_points
    if gp.size == 0:
        raise ValueError("empty free boundary; no frame")
    n = metric.grid.n

    if n == 1:
        om = slit.omega_points
        if om.size == 0:
            raise ValueError("empty positivity set; normal undefined")
        side = np.mean(om[:, 0]) - x0[0]
        nu = np.array([1.0 if side >= 0 else -1.0])
    else:
        d2 = np.sum((gp - x0[:-1]) ** 2, axis=1)
        local = gp[d2 <= fit_radius**2]
        if len(local) < 3:
            raise ValueError(
                f"only {len(local)} free-boundary nodes within {fit_radius} of {x0}; "
                "cannot estimate a normal"
            )
        centred = local - local.mean(axis=0)
        _, _, vt = np.linalg.svd(centred, full_matrices=False)
        nu = vt[-1]  # smallest singular direction = normal of the fitted line
        om = slit.omega_points
        d2o = np.sum((om - x0[:-1]) ** 2, axis=1)
        near_om = om[d2o <= (2 * fit_radius) ** 2]
        if len(near_om) and np.mean((near_om - x0[:-1]) @ nu) < 0:
            nu = -nu
    A0 = metric.at_point(x0)
    nu_amb = np.append(nu, 0.0)
    c1 = float(np.sqrt(nu_amb @ A0 @ nu_amb))
    c2 = float(np.sqrt(A0[-1, -1]))
    return AsymptoticFrame(x0=x0, nu=nu, A0=A0, c1=c1, c2=c2)


def identity_frame(x0, dim) -> AsymptoticFrame:
    """Frame with nu = e_n and unit scales (constant-coefficient case)."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape == (dim - 1,):
        x0 = np.append(x0, 0.0)
    nu = np.zeros(dim - 1)
    nu[-1] = 1.0
    return AsymptoticFrame(x0=x0, nu=nu, A0=np.eye(dim), c1=1.0, c2=1.0)


def anisotropic_profile(kind, x, frame: AsymptoticFrame, s=None):
    """Model profile in the frame's stretched coordinates.

    Evaluates eval_profile(kind, ((x-x0).nu)/c1, x_{n+1}/c2); with the
    identity frame this reduces to the plain profile.
    """
    t1, t2 = frame.local_coords(x)
    return eval_profile(kind, t1, t2, s=s)
