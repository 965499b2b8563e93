"""
Hyperbolic metric, the critical angle theta_R, the rescaled half-width
Delta, ball approximations on the band and the geometry of two
intersecting balls.
"""

import math
import logging
from enum import Enum
from dataclasses import dataclass

import numpy as np

from .config import PreconditionError
from .model import BandPoint, circ_dist, log_sinh

logger = logging.getLogger(__name__)

# slack used when checking y-coordinates against [0, H]
HEIGHT_TOL = 1e-12


class BallKind(str, Enum):
    LOWER = "Lower"
    UPPER = "Upper"


def slack(kind, eps):
    """The factor 1-eps for Lower, 1+eps for Upper"""
    return 1.0 - eps if BallKind(kind) is BallKind.LOWER else 1.0 + eps


def _check_height(y, params, name="y"):
    if y < -HEIGHT_TOL or y > params.H + HEIGHT_TOL:
        raise PreconditionError(f"{name} = {y} must lie in [0, H = {params.H:.6f}]")


def hyp_dist_array(r1, th1, r2, th2):
    """Hyperbolic distance for arrays of polar coordinates.

    Uses cosh d = cosh(r1 - r2) + 2 sinh r1 sinh r2 sin^2(dtheta/2), which is
    the law of cosines rewritten without the cancellation of large terms.
    """
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    s = np.sin(0.5 * (np.asarray(th1, dtype=float) - np.asarray(th2, dtype=float)))
    arg = np.cosh(r1 - r2) + 2.0 * np.sinh(r1) * np.sinh(r2) * s * s
    return np.arccosh(np.maximum(arg, 1.0))


def hyp_dist(p1, p2):
    return float(hyp_dist_array(p1.r, p1.theta, p2.r, p2.theta))


def _log_critical_sin2(r1, r2, R):
    """log sin^2(theta_R/2) = log of sinh((R+d)/2) sinh((R-d)/2) / (sinh r1 sinh r2)"""
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    d = np.abs(r1 - r2)
    with np.errstate(invalid="ignore"):
        return (
            log_sinh(0.5 * (R + d))
            + log_sinh(np.maximum(0.5 * (R - d), 0.0))
            - log_sinh(r1)
            - log_sinh(r2)
        )


def theta_R_array(r1, r2, R):
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    forced = (r1 <= 0.0) | (r2 <= 0.0) | (r1 + r2 <= R)
    with np.errstate(invalid="ignore", over="ignore"):
        s2 = np.exp(_log_critical_sin2(r1, r2, R))
        s = np.sqrt(np.clip(s2, 0.0, 1.0))
        theta = 2.0 * np.arcsin(s)
    theta = np.where(forced | ~np.isfinite(s2) | (s2 >= 1.0), math.pi, theta)
    return theta


def theta_R(r1, r2, params):
    """Critical relative angle at which radii r1, r2 are exactly R apart"""
    return float(theta_R_array(r1, r2, params.R))


def edge_mask(r1, th1, r2, th2, R):
    """Vectorised adjacency predicate: relative angle <= theta_R(r1, r2).

    Every edge decision in the package goes through this function.
    """
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    s = np.sin(0.5 * (np.asarray(th1, dtype=float) - np.asarray(th2, dtype=float)))
    with np.errstate(invalid="ignore", over="ignore"):
        log_crit = _log_critical_sin2(r1, r2, R)
        crit = np.exp(log_crit)
        closed = s * s <= crit
    return closed | (r1 <= 0.0) | (r2 <= 0.0) | (r1 + r2 <= R)


def edge_test(p1, p2, params):
    return bool(edge_mask(p1.r, p1.theta, p2.r, p2.theta, params.R))


@dataclass(frozen=True)
class DeltaValue:
    value: float
    saturated: bool


def delta_array(y1, y2, params):
    """Delta as a function of heights, half-width of the exact mapped ball"""
    r1 = params.R - np.asarray(y1, dtype=float)
    r2 = params.R - np.asarray(y2, dtype=float)
    return 0.5 * math.exp(params.R / 2.0) * theta_R_array(r1, r2, params.R)


def delta(r1, r2, params):
    """Rescaled critical angle e^{R/2} theta_R / 2, flagged when saturated at pi"""
    saturated = r1 <= 0.0 or r2 <= 0.0 or r1 + r2 <= params.R
    value = 0.5 * math.exp(params.R / 2.0) * theta_R(r1, r2, params)
    return DeltaValue(value=value, saturated=saturated)


def lambda_n(r1, r2, params):
    """Relative deviation of Delta from e^{(y1+y2)/2}"""
    y1, y2 = params.R - r1, params.R - r2
    _check_height(y1, params, "y1")
    _check_height(y2, params, "y2")
    return delta(r1, r2, params).value * math.exp(-0.5 * (y1 + y2)) - 1.0


@dataclass(frozen=True)
class BallApprox:
    center: BandPoint
    kind: BallKind
    eps: float
    height_cut: float

    @property
    def c(self):
        return slack(self.kind, self.eps)


def make_ball(center, kind, params, height_cut=None):
    h = params.R - center.y - params.C_eps if height_cut is None else float(height_cut)
    return BallApprox(center=center, kind=BallKind(kind), eps=params.eps, height_cut=h)


def ball_contains(b, q, params):
    """Membership in B-(p) or B+(p); B+ also holds every point above height_cut"""
    if b.kind is BallKind.UPPER and q.y > b.height_cut:
        return True
    if q.y >= b.height_cut:
        return False
    width = b.c * math.exp(0.5 * (q.y + b.center.y))
    return bool(circ_dist(q.x, b.center.x, params) < width)


def band_edge_mask(x1, y1, x2, y2, params):
    """edge_mask evaluated on the preimages of band coordinates"""
    scale = 2.0 * math.exp(-params.R / 2.0)
    return edge_mask(
        params.R - np.asarray(y1, dtype=float),
        scale * np.asarray(x1, dtype=float),
        params.R - np.asarray(y2, dtype=float),
        scale * np.asarray(x2, dtype=float),
        params.R,
    )


def truncated_ball_contains(p, q, params):
    """q lies in the image of the ball of p restricted to heights <= y(p)"""
    _check_height(p.y, params, "y(p)")
    if q.y > p.y:
        return False
    return bool(band_edge_mask(p.x, p.y, q.x, q.y, params))


def balls_disjoint(p1, p2, kind, params):
    """Threshold test for disjointness of the two truncated ball approximations"""
    _check_height(p1.y, params, "y1")
    _check_height(p2.y, params, "y2")
    c = slack(kind, params.eps)
    h = params.R - p1.y - params.C_eps
    threshold = c * math.exp(h / 2.0) * (math.exp(p1.y / 2.0) + math.exp(p2.y / 2.0))
    return bool(circ_dist(p1.x, p2.x, params) > threshold)


@dataclass(frozen=True)
class IntersectionFrame:
    """Two band points ordered by height and the heights where their balls cross.

    y_L is nan when the right boundary of p1 and the left boundary of p2 do not
    meet above the x-axis; y_U is inf when the right boundaries are parallel.
    """

    p1: BandPoint
    p2: BandPoint
    t: float
    Y1: float
    Y2: float
    y_L: float
    y_U: float
    h: float
    kind: BallKind
    eps: float

    @property
    def c(self):
        return slack(self.kind, self.eps)

    @property
    def lower_exists(self):
        return not math.isnan(self.y_L)

    @property
    def upper_finite(self):
        return math.isfinite(self.y_U)


def forward_gap(x1, x2, params):
    """Counter-clockwise gap from x1 to x2 on the band, in [0, 2 I_n)"""
    return float(np.mod(x2 - x1, 2.0 * params.I_n))


def intersection_frame(p1, p2, params, kind=BallKind.UPPER):
    """Frame for p1 at least as high as p2, with p2 to the right of p1"""
    _check_height(p1.y, params, "y1")
    _check_height(p2.y, params, "y2")
    if p2.y > p1.y:
        raise PreconditionError(f"frame needs y2 <= y1, got y1={p1.y}, y2={p2.y}")
    t = forward_gap(p1.x, p2.x, params)
    if t > params.I_n:
        raise PreconditionError("frame needs x1 <_Phi x2 (forward gap at most I_n)")

    kind = BallKind(kind)
    c = slack(kind, params.eps)
    Y1, Y2 = math.exp(p1.y / 2.0), math.exp(p2.y / 2.0)

    ratio_low = t / (c * (Y1 + Y2))
    y_L = 2.0 * math.log(ratio_low) if ratio_low >= 1.0 else math.nan
    if Y1 == Y2:
        y_U = math.inf
    elif t > 0.0:
        y_U = 2.0 * math.log(t / (c * (Y1 - Y2)))
    else:
        y_U = -math.inf
    return IntersectionFrame(
        p1=p1,
        p2=p2,
        t=t,
        Y1=Y1,
        Y2=Y2,
        y_L=y_L,
        y_U=y_U,
        h=params.R - p1.y - params.C_eps,
        kind=kind,
        eps=params.eps,
    )


def left_boundary_root(frame):
    """Solution of the left-left crossing equation, e^{y/2} = t/(c (Y2 - Y1)).

    Negative whenever Y2 < Y1, so the left boundaries never meet.
    """
    if frame.Y1 == frame.Y2:
        return math.inf
    return frame.t / (frame.c * (frame.Y2 - frame.Y1))


def truncated_region_diameter(p, params, samples=257):
    """Diameter of the image of the ball of p cut at height y(p)"""
    heights = np.linspace(0.0, p.y, samples) if p.y > 0 else np.zeros(1)
    half = np.minimum(delta_array(p.y, heights, params), params.I_n)
    u = np.concatenate([-half, half])
    v = np.concatenate([heights, heights])
    du = np.abs(u[:, None] - u[None, :])
    du = np.minimum(du, 2.0 * params.I_n - du)
    dv = v[:, None] - v[None, :]
    return float(np.sqrt(du * du + dv * dv).max())
