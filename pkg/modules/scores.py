"""
Isolated and extreme indicators, the global counts and the empirical
stabilization radius of the extreme-point score.
"""

import math
import logging
from dataclasses import dataclass, asdict

import numpy as np

from .config import PreconditionError
from .geometry import HEIGHT_TOL, band_edge_mask, truncated_region_diameter
from .model import BandPoint, ProcessKind


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreCounts:
    N: int
    s_iso: int
    s_ext: int
    s_iso_H: int
    s_ext_H: int
    mean_degree: float
    max_y: float

    def to_dict(self):
        return asdict(self)


def isolated_flags(g):
    return np.asarray(g.degrees) == 0


def extreme_flags(ps, g):
    """True where no neighbour has a strictly smaller defect radius"""
    if len(ps) != g.n_vertices:
        raise PreconditionError("graph and point set sizes differ")
    y = np.asarray(ps.y)
    coo = g.adjacency.tocoo()
    blocked = np.zeros(g.n_vertices, dtype=bool)
    lower = y[coo.col] < y[coo.row]
    blocked[coo.row[lower]] = True
    return ~blocked


def count_scores(ps, g):
    """S^iso, S^ext and their restrictions to heights y <= H"""
    iso = isolated_flags(g)
    ext = extreme_flags(ps, g)
    low = np.asarray(ps.y) <= ps.params.H
    N = len(ps)
    return ScoreCounts(
        N=N,
        s_iso=int(iso.sum()),
        s_ext=int(ext.sum()),
        s_iso_H=int((iso & low).sum()),
        s_ext_H=int((ext & low).sum()),
        mean_degree=float(np.mean(g.degrees)) if N else 0.0,
        max_y=float(np.max(ps.y)) if N else 0.0,
    )


def _band_distance(ps, i, js):
    dx = np.abs(ps.x[js] - ps.x[i])
    dx = np.minimum(dx, 2.0 * ps.params.I_n - dx)
    dy = ps.y[js] - ps.y[i]
    return np.sqrt(dx * dx + dy * dy)


def _check_band(ps, i):
    if ps.process_kind is not ProcessKind.IDEAL_BAND:
        raise PreconditionError("stabilization radius needs an IdealBand point set")
    if ps.y[i] > ps.params.H + HEIGHT_TOL:
        raise PreconditionError(f"y_{i} = {ps.y[i]} exceeds H = {ps.params.H:.6f}")


def stabilization_radius(ps, i):
    """Distance to the nearest point of the truncated ball of p_i, else its diameter"""
    _check_band(ps, i)
    others = np.arange(len(ps)) != i
    inside = others & (ps.y <= ps.y[i])
    inside &= band_edge_mask(ps.x[i], ps.y[i], ps.x, ps.y, ps.params)
    js = np.nonzero(inside)[0]
    if js.size:
        return float(_band_distance(ps, i, js).min())
    return truncated_region_diameter(BandPoint(x=float(ps.x[i]), y=float(ps.y[i])), ps.params)


def diameter_table(params, top=None, size=513, samples=129):
    """Truncated-region diameters on a height grid; regions are nested so the
    diameter is non-decreasing in y and linear interpolation stays in range"""
    top = params.H if top is None else top
    heights = np.linspace(0.0, top, size)
    diam = np.array(
        [truncated_region_diameter(BandPoint(x=0.0, y=float(h)), params, samples) for h in heights]
    )
    return heights, np.maximum.accumulate(diam)


def stabilization_radii(ps, g, max_height=None):
    """Stabilization radius of every point with y <= max_height (default H).

    Uses the graph: the lower neighbours of p_i are exactly the points of its
    truncated ball. Points without one get the tabulated region diameter.
    """
    if ps.process_kind is not ProcessKind.IDEAL_BAND:
        raise PreconditionError("stabilization radius needs an IdealBand point set")
    top = ps.params.H if max_height is None else min(max_height, ps.params.H)
    idx = np.nonzero(ps.y <= top)[0]
    nearest = np.full(len(ps), np.inf)

    coo = g.adjacency.tocoo()
    lower = ps.y[coo.col] <= ps.y[coo.row]
    rows, cols = coo.row[lower], coo.col[lower]
    if rows.size:
        dx = np.abs(ps.x[rows] - ps.x[cols])
        dx = np.minimum(dx, 2.0 * ps.params.I_n - dx)
        dy = ps.y[rows] - ps.y[cols]
        np.minimum.at(nearest, rows, np.sqrt(dx * dx + dy * dy))

    radii = nearest[idx]
    empty = ~np.isfinite(radii)
    if empty.any():
        heights, diam = diameter_table(ps.params, top)
        radii[empty] = np.interp(ps.y[idx][empty], heights, diam)
    return idx, radii


def stabilization_c0(params, intensity=None):
    b = params.beta if intensity is None else intensity
    a = params.alpha
    return math.sqrt(3.0) * b * (1.0 - math.exp(-8.0 * a)) / a


def phi_stab(t, params, intensity=None):
    """min(alpha t / 4, c0 sqrt(t/3))"""
    t = np.asarray(t, dtype=float)
    c0 = stabilization_c0(params, intensity)
    return np.minimum(params.alpha * t / 4.0, c0 * np.sqrt(t / 3.0))


def stabilization_tail_constant(ys, radii, params, y_bins, t_grid, min_hits=10, intensity=None):
    """Smallest c with P(R >= t | y-bin) <= c e^{alpha y/2} e^{-phi(t)} on binned data.

    Cells whose empirical tail rests on fewer than min_hits exceedances are
    ignored. Returns (c, number of cells used).
    """
    ys = np.asarray(ys, dtype=float)
    radii = np.asarray(radii, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    phis = phi_stab(t_grid, params, intensity)
    best, used = 0.0, 0
    for lo, hi in zip(y_bins[:-1], y_bins[1:]):
        sel = (ys >= lo) & (ys < hi)
        total = int(sel.sum())
        if total == 0:
            continue
        y_ref = float(ys[sel].mean())
        r_sel = radii[sel]
        for t, ph in zip(t_grid, phis):
            hits = int((r_sel >= t).sum())
            if hits < min_hits:
                continue
            c = hits / total * math.exp(ph - params.alpha * y_ref / 2.0)
            best = max(best, c)
            used += 1
    return best, used
