"""
Intensity measures of balls, truncated balls, ball intersections and the
high strip Z_h, the covariance formulas and the limit constants.

Each closed form has a quadrature oracle next to it. The oracles integrate
the band intensity b e^{-alpha y} over heights, with the x-extent of the
region at each height written out exactly.
"""

import math
import logging
from dataclasses import dataclass

from scipy import integrate

from .config import PreconditionError, QuadratureError
from .geometry import (
    HEIGHT_TOL,
    BallKind,
    delta,
    delta_array,
    forward_gap,
    intersection_frame,
    slack,
)
from .model import circ_dist

logger = logging.getLogger(__name__)

# exponent beyond which exp(-x) is zero in double precision
UNDERFLOW_EXPONENT = 800.0


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_depth: int = 40

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol < 0 or self.max_depth <= 0:
            raise PreconditionError(f"invalid quadrature settings: {self}")

    @property
    def limit(self):
        return max(50, 10 * self.max_depth)


DEFAULT_QUADRATURE = QuadratureSpec()


def integrate_1d(f, a, b, spec=None, points=None):
    """scipy.integrate.quad with QuadratureError on non-convergence"""
    spec = spec or DEFAULT_QUADRATURE
    if b <= a:
        return 0.0
    if points is not None:
        points = sorted({float(p) for p in points if a < p < b})
        points = points or None
    res = integrate.quad(
        f,
        a,
        b,
        epsabs=spec.abs_tol,
        epsrel=spec.rel_tol,
        limit=spec.limit,
        points=points,
        full_output=1,
    )
    value, abserr = res[0], res[1]
    if len(res) > 3:
        # QUADPACK flags roundoff at tight tolerances even when the estimate is fine
        if abserr <= 100.0 * max(spec.abs_tol, spec.rel_tol * abs(value)):
            logger.debug(f"quad accepted with warning: {res[3]} (abserr={abserr:.3e})")
            return float(value)
        raise QuadratureError(f"quadrature on [{a}, {b}] did not converge: {res[3]}")
    return float(value)


def _intensity(params, intensity):
    return params.beta if intensity is None else float(intensity)


def _check_height(y, params, name="y"):
    if y < -HEIGHT_TOL or y > params.H + HEIGHT_TOL:
        raise PreconditionError(f"{name} = {y} must lie in [0, H = {params.H:.6f}]")


def _exp_segment(rate, lo, hi):
    """integral of e^{-rate*y} over [lo, hi]"""
    if hi <= lo:
        return 0.0
    return (math.exp(-rate * lo) - math.exp(-rate * hi)) / rate


# --------------------------------------------------------------------------
# ball approximations


def mu_ball_pm(p, kind, params, intensity=None):
    """Measure of B-(p) (window part) or B+(p) (window part plus high strip)"""
    _check_height(p.y, params)
    a, R = params.alpha, params.R
    b = _intensity(params, intensity)
    c = slack(kind, params.eps)
    h = max(R - p.y - params.C_eps, 0.0)
    value = c * params.intensity_gamma(b) * math.exp(p.y / 2.0) * (1.0 - math.exp((0.5 - a) * h))
    if BallKind(kind) is BallKind.UPPER:
        value += (b * math.pi / a) * math.exp(R / 2.0) * (math.exp(-a * h) - math.exp(-a * R))
    return value


def mu_ball_pm_oracle(p, kind, params, intensity=None, spec=None):
    a, R = params.alpha, params.R
    b = _intensity(params, intensity)
    c = slack(kind, params.eps)
    h = max(R - p.y - params.C_eps, 0.0)
    window = integrate_1d(
        lambda s: b * math.exp(-a * s) * 2.0 * c * math.exp(0.5 * (p.y + s)), 0.0, h, spec
    )
    if BallKind(kind) is BallKind.LOWER:
        return window
    strip = integrate_1d(lambda s: b * math.exp(-a * s) * 2.0 * params.I_n, h, R, spec)
    return window + strip


def mu_truncated_ball(p, kind, params, intensity=None):
    """Measure of the window approximation of the ball of p cut at height y(p)"""
    _check_height(p.y, params)
    c = slack(kind, params.eps)
    gamma_b = params.intensity_gamma(_intensity(params, intensity))
    return c * gamma_b * math.exp(p.y / 2.0) * (1.0 - math.exp((0.5 - params.alpha) * p.y))


def mu_truncated_ball_oracle(p, kind, params, intensity=None, spec=None):
    b = _intensity(params, intensity)
    c = slack(kind, params.eps)
    a = params.alpha
    return integrate_1d(
        lambda s: b * math.exp(-a * s) * 2.0 * c * math.exp(0.5 * (p.y + s)), 0.0, p.y, spec
    )


def mu_Z(p1, params, intensity=None):
    """Measure of the full-width strip above h = R - y1 - C"""
    if p1.y > params.H + HEIGHT_TOL:
        raise PreconditionError(f"y1 = {p1.y} exceeds H = {params.H:.6f}")
    a, R = params.alpha, params.R
    b = _intensity(params, intensity)
    return (math.pi * b / a) * math.exp((0.5 - a) * R) * math.expm1(a * (p1.y + params.C_eps))


def mu_Z_oracle(p1, params, intensity=None, spec=None):
    a, R = params.alpha, params.R
    b = _intensity(params, intensity)
    lo = R - p1.y - params.C_eps
    return integrate_1d(lambda s: b * 2.0 * params.I_n * math.exp(-a * s), lo, R, spec)


# --------------------------------------------------------------------------
# intersections


def intersection_window(frame):
    """(lower, upper) bounds on t for the closed-form intersection measure"""
    c = frame.c
    return c * (frame.Y1 + frame.Y2), c * math.exp(frame.h / 2.0) * (frame.Y1 - frame.Y2)


def _exact_half_width(frame, params):
    return delta(params.R - frame.p1.y, params.R - frame.p2.y, params).value


def in_intersection_window(frame, params):
    lower, upper = intersection_window(frame)
    lower = max(lower, _exact_half_width(frame, params))
    return lower < frame.t <= upper


def _resolve_kind(frame, kind):
    kind = frame.kind if kind is None else BallKind(kind)
    if kind is not frame.kind:
        raise PreconditionError(f"frame built for {frame.kind.value}, asked for {kind.value}")
    return kind


def mu_intersection(frame, kind, params, intensity=None):
    """Closed-form measure of the intersection of the two truncated window balls"""
    _resolve_kind(frame, kind)
    if not in_intersection_window(frame, params):
        lower, upper = intersection_window(frame)
        raise PreconditionError(
            f"t = {frame.t:.6g} outside the closed-form window ({lower:.6g}, {upper:.6g}]; "
            "use mu_intersection_bound or the quadrature oracle"
        )
    a = params.alpha
    c = frame.c
    gamma_b = params.intensity_gamma(_intensity(params, intensity))
    kappa = c ** (2.0 * a) * gamma_b / (4.0 * a) * (
        (frame.Y1 + frame.Y2) ** (2.0 * a) - (frame.Y1 - frame.Y2) ** (2.0 * a)
    )
    eta = gamma_b * frame.Y2 * math.exp((0.5 - a) * frame.h)
    return kappa * frame.t ** (1.0 - 2.0 * a) - c * eta


def mu_intersection_case3(frame, kind, params, intensity=None):
    """Closed form when only the right boundary of p1 meets the left one of p2 below h"""
    _resolve_kind(frame, kind)
    a = params.alpha
    c = frame.c
    S = frame.Y1 + frame.Y2
    lower = max(c * S, c * math.exp(frame.h / 2.0) * (frame.Y1 - frame.Y2))
    upper = c * math.exp(frame.h / 2.0) * S
    if not lower < frame.t <= upper:
        raise PreconditionError(f"t = {frame.t:.6g} outside ({lower:.6g}, {upper:.6g}]")
    b = _intensity(params, intensity)
    gamma_b = params.intensity_gamma(b)
    return (
        gamma_b / (4.0 * a) * (c * S) ** (2.0 * a) * frame.t ** (1.0 - 2.0 * a)
        + (b * frame.t / a) * math.exp(-a * frame.h)
        - 0.5 * c * gamma_b * S * math.exp((0.5 - a) * frame.h)
    )


def _window_overlap(t, c, Y1, Y2, w):
    """Overlap length of |x| < c Y1 w and |x - t| < c Y2 w"""
    right = min(c * Y1 * w, t + c * Y2 * w)
    left = max(-c * Y1 * w, t - c * Y2 * w)
    return max(0.0, right - left)


def mu_intersection_oracle(frame, params, intensity=None, spec=None):
    """Quadrature of the intersection of the truncated window balls, any t"""
    if frame.h <= 0.0:
        return 0.0
    a = params.alpha
    b = _intensity(params, intensity)
    c, t, Y1, Y2 = frame.c, frame.t, frame.Y1, frame.Y2
    points = [y for y in (frame.y_L, frame.y_U) if math.isfinite(y)]
    return integrate_1d(
        lambda s: b * math.exp(-a * s) * _window_overlap(t, c, Y1, Y2, math.exp(s / 2.0)),
        0.0,
        frame.h,
        spec,
        points,
    )


def mu_intersection_bound(frame, params, intensity=None):
    """Upper bound on the measure of the intersection of the two exact balls"""
    if frame.t <= math.exp(params.R / 4.0) * (frame.Y1 + frame.Y2):
        raise PreconditionError("bound needs t > e^{R/4} (Y1 + Y2)")
    a = params.alpha
    b = _intensity(params, intensity)
    gamma_b = params.intensity_gamma(b)
    c = 1.0 + params.eps
    S, D, t, h = frame.Y1 + frame.Y2, frame.Y1 - frame.Y2, frame.t, frame.h
    eh = math.exp(h / 2.0) if h > 0 else 0.0

    if h <= 0.0 or t > c * eh * S:
        part = 0.0
    elif t <= c * eh * D:
        part = c ** (2.0 * a) * gamma_b / (4.0 * a) * (S ** (2.0 * a) - D ** (2.0 * a)) * t ** (1.0 - 2.0 * a)
    else:
        part = gamma_b / (4.0 * a) * (c * S) ** (2.0 * a) * t ** (1.0 - 2.0 * a) + (b * t / a) * math.exp(-a * h)
    return part + mu_Z(frame.p1, params, intensity)


# --------------------------------------------------------------------------
# exact mapped balls


def _circular_overlap(w1, w2, t, I_n):
    """Overlap of arcs [-w1, w1] and [t - w2, t + w2] on a circle of length 2 I_n"""
    if w1 >= I_n or w2 >= I_n:
        return 2.0 * min(w1, w2, I_n)
    total = 0.0
    for shift in (-2.0 * I_n, 0.0, 2.0 * I_n):
        total += max(0.0, min(w1, t + shift + w2) - max(-w1, t + shift - w2))
    return total


def ball_measure_exact(p, params, intensity=None, spec=None):
    """Measure of the image of the hyperbolic ball of radius R around p"""
    a, R = params.alpha, params.R
    b = _intensity(params, intensity)
    return integrate_1d(
        lambda s: b * math.exp(-a * s) * 2.0 * min(float(delta_array(p.y, s, params)), params.I_n),
        0.0,
        R,
        spec,
        [R - p.y],
    )


def intersection_measure_exact(p1, p2, params, intensity=None, spec=None):
    """Measure of the intersection of the images of two hyperbolic balls"""
    a, R, I_n = params.alpha, params.R, params.I_n
    b = _intensity(params, intensity)
    t = float(circ_dist(p1.x, p2.x, params))

    def overlap(s):
        w1 = float(delta_array(p1.y, s, params))
        w2 = float(delta_array(p2.y, s, params))
        return b * math.exp(-a * s) * _circular_overlap(w1, w2, t, I_n)

    points = [R - p1.y, R - p2.y]
    Y1, Y2 = math.exp(p1.y / 2.0), math.exp(p2.y / 2.0)
    if t > 0:
        points.append(2.0 * math.log(t / (Y1 + Y2)))
        if Y1 != Y2:
            points.append(2.0 * math.log(t / abs(Y1 - Y2)))
    return integrate_1d(overlap, 0.0, R, spec, points)


def cov_iso(p1, p2, params, kind=BallKind.UPPER, intensity=None, spec=None):
    """Covariance of the isolation indicators of two added points"""
    _check_height(p1.y, params, "y1")
    _check_height(p2.y, params, "y2")
    E1 = math.exp(-ball_measure_exact(p1, params, intensity, spec))
    E2 = math.exp(-ball_measure_exact(p2, params, intensity, spec))

    hi, lo = (p1, p2) if (p1.y, p1.x) >= (p2.y, p2.x) else (p2, p1)
    Y12 = delta(params.R - hi.y, params.R - lo.y, params).value
    if circ_dist(hi.x, lo.x, params) < Y12:
        return -E1 * E2

    if forward_gap(hi.x, lo.x, params) > params.I_n:
        # reflect so that the lower point sits to the right
        hi = type(hi)(x=-hi.x, y=hi.y)
        lo = type(lo)(x=-lo.x, y=lo.y)
    frame = intersection_frame(hi, lo, params, kind)
    if in_intersection_window(frame, params):
        mu_s = mu_intersection(frame, kind, params, intensity)
    else:
        mu_s = intersection_measure_exact(hi, lo, params, intensity, spec)
    return E1 * E2 * math.expm1(mu_s)


# --------------------------------------------------------------------------
# limit constants


def _decay_cutoff(exponent, start=1.0, ceiling=4000.0):
    """Smallest doubling of start where exponent(y) exceeds the underflow level"""
    y = start
    while y < ceiling:
        if exponent(y) >= UNDERFLOW_EXPONENT:
            return y
        y *= 2.0
    return ceiling


def _prefactor(params, b):
    """(2 I_n / n) b = pi b / nu; equals 2 alpha for b = beta"""
    return math.pi * b / params.nu


def ext_exponent(y, gamma_b, alpha):
    """Measure of the truncated ball under exact windows, gamma e^{y/2}(1 - e^{(1/2-alpha)y})"""
    return gamma_b * math.exp(y / 2.0) * -math.expm1((0.5 - alpha) * y)


def iso_expectation_constant(params, spec=None, intensity=None):
    """lim E[S^iso]/n = 2 alpha int exp(-gamma e^{y/2}) e^{-alpha y} dy"""
    a = params.alpha
    b = _intensity(params, intensity)
    gamma_b = params.intensity_gamma(b)
    top = _decay_cutoff(lambda y: gamma_b * math.exp(y / 2.0) + a * y)
    value = integrate_1d(lambda y: math.exp(-gamma_b * math.exp(y / 2.0) - a * y), 0.0, top, spec)
    return _prefactor(params, b) * value


def ext_expectation_constant(params, spec=None, intensity=None):
    """lim E[S^ext]/n = 2 alpha int exp(-gamma e^{y/2}(1 - e^{(1/2-alpha)y})) e^{-alpha y} dy"""
    a = params.alpha
    b = _intensity(params, intensity)
    gamma_b = params.intensity_gamma(b)
    top = _decay_cutoff(lambda y: ext_exponent(y, gamma_b, a) + a * y)
    value = integrate_1d(lambda y: math.exp(-ext_exponent(y, gamma_b, a) - a * y), 0.0, top, spec)
    return _prefactor(params, b) * value


def ideal_overlap_measure(y1, y2, z, b, alpha):
    """Closed-form measure of the intersection of the two ideal truncated regions"""
    a1, a2 = math.exp(y1 / 2.0), math.exp(y2 / 2.0)
    A, m = a1 + a2, 2.0 * min(a1, a2)
    D = A - m
    Y = min(y1, y2)
    z = abs(z)
    q = alpha - 0.5
    y_low = 2.0 * math.log(z / A) if z > 0 else -math.inf
    y_up = 2.0 * math.log(z / D) if z > 0 and D > 0 else (math.inf if D == 0 else -math.inf)
    lo, hi = max(0.0, y_low), min(Y, y_up)
    value = 0.0
    if hi > lo:
        value += A * _exp_segment(q, lo, hi) - z * _exp_segment(alpha, lo, hi)
    lo2 = max(0.0, y_up)
    if Y > lo2:
        value += m * _exp_segment(q, lo2, Y)
    return b * value


def ideal_pair_cov_ext(y1, y2, z, params, intensity=None, spec=None):
    """Covariance of the extreme indicators of (0, y1) and (z, y2) in the ideal band"""
    if y1 < 0 or y2 < 0:
        raise PreconditionError(f"heights must be non-negative, got {y1}, {y2}")
    a = params.alpha
    b = _intensity(params, intensity)
    gamma_b = params.intensity_gamma(b)
    E1 = math.exp(-ext_exponent(y1, gamma_b, a))
    E2 = math.exp(-ext_exponent(y2, gamma_b, a))
    if abs(z) < math.exp(0.5 * (y1 + y2)):
        return -E1 * E2

    a1, a2 = math.exp(y1 / 2.0), math.exp(y2 / 2.0)
    zz = abs(z)

    def overlap(s):
        w = math.exp(s / 2.0)
        return b * math.exp(-a * s) * max(0.0, min(2.0 * min(a1, a2) * w, (a1 + a2) * w - zz))

    points = [2.0 * math.log(zz / (a1 + a2))]
    if a1 != a2:
        points.append(2.0 * math.log(zz / abs(a1 - a2)))
    mu_s = integrate_1d(overlap, 0.0, min(y1, y2), spec, points)
    return E1 * E2 * math.expm1(mu_s)


@dataclass(frozen=True)
class Truncation:
    y_cut: float = 30.0
    z_cut: float | None = None

    @property
    def z_limit(self):
        return 4.0 * math.exp(self.y_cut) if self.z_cut is None else self.z_cut


@dataclass(frozen=True)
class SigmaResult:
    value: float
    first_term: float
    covariance_term: float
    truncation_error: float
    y_cut: float
    z_cut: float

    def truncation_report(self):
        return {
            "y_cut": self.y_cut,
            "z_cut": self.z_cut,
            "first_term": self.first_term,
            "covariance_term": self.covariance_term,
            "error_bound": self.truncation_error,
        }


def sigma_ext_constant(params, truncation=None, intensity=None, spec=None):
    """lim Var[S^ext]/n with y integrals cut at y_cut and |z| at z_cut"""
    truncation = truncation or Truncation()
    spec = spec or DEFAULT_QUADRATURE
    a = params.alpha
    q = a - 0.5
    b = _intensity(params, intensity)
    gamma_b = params.intensity_gamma(b)
    pref = _prefactor(params, b)
    y_cut, z_cut = float(truncation.y_cut), float(truncation.z_limit)

    def E(y):
        return math.exp(-ext_exponent(y, gamma_b, a))

    y_top = min(y_cut, _decay_cutoff(lambda y: ext_exponent(y, gamma_b, a) + a * y))

    first = pref * integrate_1d(lambda y: E(y) * math.exp(-a * y), 0.0, y_top, spec)

    def z_integral(y1, y2):
        # integral over z in R of the pair covariance, by symmetry in z
        E12 = E(y1) * E(y2)
        if E12 == 0.0:
            return 0.0
        inner_edge = math.exp(0.5 * (y1 + y2))
        block = -2.0 * min(inner_edge, z_cut) * E12
        z_max = min(inner_edge + math.exp(min(y1, y2)), z_cut)
        if z_max <= inner_edge:
            return block
        tail = integrate_1d(
            lambda z: math.expm1(ideal_overlap_measure(y1, y2, z, b, a)),
            inner_edge,
            z_max,
            spec,
        )
        return block + 2.0 * E12 * tail

    def middle(y1):
        # y2 <= y1 half of the symmetric square
        return integrate_1d(
            lambda y2: z_integral(y1, y2) * math.exp(-a * y2), 0.0, y1, spec
        ) * math.exp(-a * y1)

    cov = 2.0 * pref * b * integrate_1d(middle, 0.0, y_top, spec)

    # tails beyond y_cut, |c| <= min(E1, E2) and the z-extent is at most 4 e^{(y1+y2)/2}
    e_cut = E(y_cut)
    tail_first = pref * e_cut * math.exp(-a * y_cut) / a
    tail_cov = 8.0 * pref * b * e_cut * math.exp(-q * y_cut) / (q * q)
    z_reach = 2.0 * math.exp(y_cut)
    tail_z = 4.0 * pref * b * max(0.0, z_reach - z_cut) / (a * a)
    result = SigmaResult(
        value=first + cov,
        first_term=first,
        covariance_term=cov,
        truncation_error=tail_first + tail_cov + tail_z,
        y_cut=y_cut,
        z_cut=z_cut,
    )
    logger.debug(f"sigma_ext_constant: {result}")
    return result


def iso_variance_regime(alpha):
    """Growth of Var[S^iso]: n^{3-2alpha}, n log n, or n"""
    if alpha < 1.0:
        return {"regime": "superlinear", "exponent": 3.0 - 2.0 * alpha}
    if alpha == 1.0:
        return {"regime": "nlogn", "exponent": 1.0}
    return {"regime": "linear", "exponent": 1.0}
