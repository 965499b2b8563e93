"""
Model parameters, coordinate types and the disc-to-band mapping.

Every constant used elsewhere in the package is derived here from
(alpha, nu, n) so there is a single place where R, I_n, H, beta and
gamma are defined.
"""

import math
import logging
from enum import Enum
from dataclasses import dataclass, field

import numpy as np

from .config import ParameterError

logger = logging.getLogger(__name__)

LN3 = math.log(3.0)


class ProcessKind(str, Enum):
    EXACT_DISC = "ExactDisc"
    IDEAL_BAND = "IdealBand"


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the Poissonized hyperbolic random geometric graph.

    beta and gamma follow the band-intensity convention beta = 2*nu*alpha/pi.
    The Phi-image of the disc process has intensity disc_beta * e^{-alpha*y}
    with disc_beta = nu*alpha/pi; experiments comparing against disc samples
    pass that intensity explicitly.
    """

    alpha: float
    nu: float
    n: float
    R: float
    I_n: float
    H: float
    beta: float
    gamma: float
    C_eps: float
    eps: float
    disc_beta: float

    def intensity_gamma(self, intensity=None):
        """gamma = 4b/(2alpha-1) for a band intensity prefactor b"""
        b = self.beta if intensity is None else intensity
        return 4.0 * b / (2.0 * self.alpha - 1.0)

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "nu": self.nu,
            "n": self.n,
            "R": self.R,
            "I_n": self.I_n,
            "H": self.H,
            "beta": self.beta,
            "gamma": self.gamma,
            "C_eps": self.C_eps,
            "eps": self.eps,
            "disc_beta": self.disc_beta,
        }


def default_c_eps(R):
    """5 ln R, halved back to R/2 when that would not fit inside (0, R)"""
    c = 5.0 * math.log(R)
    if c >= R:
        c = R / 2.0
    return c


def make_params(alpha, nu, n, C_eps=None):
    """Validate (alpha, nu, n) and derive every model constant"""
    for name, value in (("alpha", alpha), ("nu", nu), ("n", n)):
        if not isinstance(value, (int, float, np.integer, np.floating)):
            raise ParameterError(f"{name} must be a real number, got {value!r}")
        if not math.isfinite(value):
            raise ParameterError(f"{name} must be finite, got {value!r}")
    alpha, nu, n = float(alpha), float(nu), float(n)

    if alpha <= 0.5:
        raise ParameterError(f"alpha must exceed 1/2, got {alpha}")
    if nu <= 0:
        raise ParameterError(f"nu must be positive, got {nu}")
    if nu >= n:
        raise ParameterError(f"nu must be smaller than n, got nu={nu}, n={n}")

    R = 2.0 * math.log(n / nu)
    if R <= math.e:
        raise ParameterError(f"R = 2 ln(n/nu) = {R:.4f} must exceed e")
    H = 4.0 * math.log(R)
    if H >= R:
        raise ParameterError(
            f"truncation height H = 4 ln R = {H:.4f} is not below R = {R:.4f}; "
            "increase n/nu"
        )

    if C_eps is None:
        C_eps = default_c_eps(R)
    if not isinstance(C_eps, (int, float, np.integer, np.floating)):
        raise ParameterError(f"C_eps must be a real number, got {C_eps!r}")
    C_eps = float(C_eps)
    if not math.isfinite(C_eps) or not 0.0 < C_eps < R:
        raise ParameterError(f"C_eps must lie in (0, R={R:.4f}), got {C_eps}")
    if C_eps <= LN3:
        raise ParameterError(f"C_eps must exceed ln 3 so that eps < 1/3, got {C_eps}")

    beta = 2.0 * nu * alpha / math.pi
    disc_beta = nu * alpha / math.pi
    params = ModelParams(
        alpha=alpha,
        nu=nu,
        n=n,
        R=R,
        I_n=0.5 * math.pi * math.exp(R / 2.0),
        H=H,
        beta=beta,
        gamma=4.0 * beta / (2.0 * alpha - 1.0),
        C_eps=C_eps,
        eps=math.exp(-C_eps),
        disc_beta=disc_beta,
    )
    logger.debug(f"Model parameters derived: {params}")
    return params


def mean_degree_constant(params):
    """Limit of the average degree, 8 alpha^2 nu / (pi (2 alpha - 1)^2)"""
    a = params.alpha
    return 8.0 * a * a * params.nu / (math.pi * (2.0 * a - 1.0) ** 2)


def h1_height(params):
    """Height of the conditioning event: no points above h1"""
    a, R = params.alpha, params.R
    return R / (2.0 * a) + math.log(math.log(R)) / (2.0 * a)


def defect_density_bound(params):
    a, R = params.alpha, params.R
    if a * R > 700:
        return 0.0
    return 2.0 * a / (math.exp(a * R) - 2.0)


def log_sinh(x):
    """log(sinh(x)) for x >= 0, -inf at 0, without overflow"""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = x + np.log1p(-np.exp(-2.0 * x)) - math.log(2.0)
    return out


def _scalar_or_array(out):
    return float(out) if np.ndim(out) == 0 else out


def rho_radial(r, params):
    """Radial probability density alpha sinh(alpha r)/(cosh(alpha R) - 1) on [0, R]"""
    r = np.asarray(r, dtype=float)
    a, R = params.alpha, params.R
    inside = (r >= 0.0) & (r <= R)
    rc = np.clip(r, 0.0, R)
    if a * R > 30.0:
        # e^{a(r-R)} (1 - e^{-2ar}) / (1 - e^{-aR})^2
        val = a * np.exp(a * (rc - R)) * (-np.expm1(-2.0 * a * rc)) / np.expm1(-a * R) ** 2
    else:
        val = a * np.sinh(a * rc) / (np.cosh(a * R) - 1.0)
    return _scalar_or_array(np.where(inside, val, 0.0))


def defect_density(y, params):
    """Density of the defect radius y = R - r"""
    y = np.asarray(y, dtype=float)
    inside = (y >= 0.0) & (y <= params.R)
    val = rho_radial(params.R - np.clip(y, 0.0, params.R), params)
    return _scalar_or_array(np.where(inside, val, 0.0))


def high_point_probability(params, y0):
    """P(y > y0) for a single point of the disc process"""
    a, R = params.alpha, params.R
    if y0 <= 0:
        return 1.0
    if y0 >= R:
        return 0.0
    # P(r < R - y0) = sinh^2(a(R-y0)/2) / sinh^2(aR/2)
    log_ratio = 2.0 * (float(log_sinh(a * (R - y0) / 2.0)) - float(log_sinh(a * R / 2.0)))
    return math.exp(log_ratio)


def wrap_angle(theta):
    """Map angles into (-pi, pi]"""
    theta = np.asarray(theta, dtype=float)
    return _scalar_or_array(math.pi - np.mod(math.pi - theta, 2.0 * math.pi))


@dataclass(frozen=True, slots=True)
class DiscPoint:
    r: float
    theta: float
    y: float

    @classmethod
    def from_polar(cls, r, theta, params):
        return cls(r=float(r), theta=float(theta), y=params.R - float(r))

    @classmethod
    def from_defect(cls, y, theta, params):
        return cls(r=params.R - float(y), theta=float(theta), y=float(y))


@dataclass(frozen=True, slots=True)
class BandPoint:
    x: float
    y: float


def phi(p, params):
    """Rescale the angle: x = theta e^{R/2} / 2, height unchanged"""
    return BandPoint(x=0.5 * p.theta * math.exp(params.R / 2.0), y=p.y)


def phi_inverse(b, params):
    """Recover the disc point from its band image"""
    theta = 2.0 * b.x * math.exp(-params.R / 2.0)
    return DiscPoint(r=params.R - b.y, theta=theta, y=b.y)


def phi_array(theta, params):
    return 0.5 * np.asarray(theta, dtype=float) * math.exp(params.R / 2.0)


def phi_inverse_array(x, params):
    return 2.0 * np.asarray(x, dtype=float) * math.exp(-params.R / 2.0)


def circ_dist(x1, x2, params):
    """Circular distance on the band of circumference 2 I_n"""
    d = np.abs(np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float))
    return _scalar_or_array(np.minimum(d, 2.0 * params.I_n - d))


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PointSet:
    """One Poisson sample stored column-wise in both coordinate systems."""

    params: ModelParams
    r: np.ndarray
    theta: np.ndarray
    y: np.ndarray
    x: np.ndarray
    seed: int
    process_kind: ProcessKind
    y_max: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return int(self.r.shape[0])

    @property
    def points(self):
        return [DiscPoint(r=float(r), theta=float(t), y=float(y)) for r, t, y in zip(self.r, self.theta, self.y)]

    @property
    def band_points(self):
        return [BandPoint(x=float(x), y=float(y)) for x, y in zip(self.x, self.y)]

    def disc_point(self, i):
        return DiscPoint(r=float(self.r[i]), theta=float(self.theta[i]), y=float(self.y[i]))

    def band_point(self, i):
        return BandPoint(x=float(self.x[i]), y=float(self.y[i]))

    def same_points(self, other):
        return (
            self.params == other.params
            and self.seed == other.seed
            and self.process_kind == other.process_kind
            and np.array_equal(self.r, other.r)
            and np.array_equal(self.theta, other.theta)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.x, other.x)
        )


def point_set_from_disc(params, r, theta, seed, kind=ProcessKind.EXACT_DISC, y_max=None):
    """Build a PointSet from polar coordinates; band images via phi"""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(wrap_angle(theta), dtype=float).reshape(r.shape)
    return PointSet(
        params=params,
        r=_frozen(r),
        theta=_frozen(theta),
        y=_frozen(params.R - r),
        x=_frozen(phi_array(theta, params)),
        seed=int(seed),
        process_kind=ProcessKind(kind),
        y_max=y_max,
    )


def point_set_from_columns(params, r, theta, y, x, seed, kind, y_max=None):
    """Assemble a PointSet from stored columns without recomputing any of them"""
    return PointSet(
        params=params,
        r=_frozen(r),
        theta=_frozen(theta),
        y=_frozen(y),
        x=_frozen(x),
        seed=int(seed),
        process_kind=ProcessKind(kind),
        y_max=y_max,
    )


def point_set_from_band(params, x, y, seed, y_max=None):
    """Build an IdealBand PointSet from band coordinates; preimages via phi inverse"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return PointSet(
        params=params,
        r=_frozen(params.R - y),
        theta=_frozen(phi_inverse_array(x, params)),
        y=_frozen(y),
        x=_frozen(x),
        seed=int(seed),
        process_kind=ProcessKind.IDEAL_BAND,
        y_max=y_max,
    )
