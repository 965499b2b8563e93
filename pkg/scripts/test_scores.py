"""
Tests for the isolated / extreme indicators and stabilization radii.
"""

import os
import sys
import math

import numpy as np
import pytest

# Add the project root to the path (parent directory of scripts)
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from modules.config import PreconditionError
from modules.geometry import truncated_ball_contains, truncated_region_diameter
from modules.graph import build_fast, graph_from_edges
from modules.model import BandPoint, make_params, point_set_from_band, point_set_from_disc
from modules.sampler import permute, rotate, sample_band, sample_disc
from modules.scores import (
    count_scores,
    diameter_table,
    extreme_flags,
    isolated_flags,
    phi_stab,
    stabilization_radii,
    stabilization_radius,
    stabilization_tail_constant,
)


@pytest.fixture
def params():
    return make_params(1.0, 1.0, 1000)


@pytest.mark.parametrize("alpha", [0.75, 1.5, 3.0])
def test_isolated_points_are_extreme(alpha):
    ps = sample_disc(make_params(alpha, 1.0, 2000), 10)
    g = build_fast(ps)
    iso = isolated_flags(g)
    ext = extreme_flags(ps, g)
    assert not np.any(iso & ~ext)
    counts = count_scores(ps, g)
    assert counts.s_iso <= counts.s_ext <= counts.N
    assert counts.s_iso_H <= counts.s_iso
    assert counts.s_ext_H <= counts.s_ext
    assert counts.max_y == pytest.approx(float(ps.y.max()))


def test_three_point_example(params):
    # a and b are adjacent with y(a) < y(b); c is alone
    ps = point_set_from_disc(params, [13.0, 12.5, 13.0], [0.0, 1e-4, 3.0], 0)
    g = build_fast(ps)
    assert g.edge_set() == {(0, 1)}
    assert list(isolated_flags(g)) == [False, False, True]
    assert list(extreme_flags(ps, g)) == [True, False, True]
    counts = count_scores(ps, g)
    assert (counts.s_iso, counts.s_ext) == (1, 2)
    assert counts.mean_degree == pytest.approx(2.0 / 3.0)


def test_equal_heights_do_not_block(params):
    ps = point_set_from_disc(params, [13.0, 13.0], [0.0, 1e-4], 0)
    g = build_fast(ps)
    assert g.n_edges == 1
    assert list(extreme_flags(ps, g)) == [True, True]


def test_extreme_flags_size_mismatch(params):
    ps = point_set_from_disc(params, [13.0], [0.0], 0)
    with pytest.raises(PreconditionError):
        extreme_flags(ps, graph_from_edges(2, [], []))


def test_extreme_flags_match_truncated_ball_scan():
    params = make_params(1.5, 1.0, 400)
    ps = sample_band(params, 8, y_max=params.H)
    points = [BandPoint(x=float(x), y=float(y)) for x, y in zip(ps.x, ps.y)]
    expected = [
        not any(q.y < p.y and truncated_ball_contains(p, q, params) for q in points)
        for p in points
    ]
    g = build_fast(ps)
    assert list(extreme_flags(ps, g)) == expected
    assert count_scores(ps, g).s_ext == sum(expected)
    assert 0 < sum(expected) < len(points)


def test_counts_invariant_under_rotation():
    ps = sample_disc(make_params(1.0, 1.0, 500), 31)
    turned = rotate(ps, 1.234)
    assert count_scores(turned, build_fast(turned)) == count_scores(ps, build_fast(ps))


def test_counts_invariant_under_permutation():
    ps = sample_disc(make_params(1.0, 1.0, 500), 32)
    order = np.random.default_rng(1).permutation(len(ps))
    shuffled = permute(ps, order)
    g = build_fast(ps)
    g_shuffled = build_fast(shuffled)
    assert count_scores(shuffled, g_shuffled) == count_scores(ps, g)
    assert np.array_equal(extreme_flags(shuffled, g_shuffled), extreme_flags(ps, g)[order])
    assert np.array_equal(isolated_flags(g_shuffled), isolated_flags(g)[order])


def test_empty_counts(params):
    ps = point_set_from_disc(params, [], [], 0)
    counts = count_scores(ps, build_fast(ps))
    assert counts.N == 0
    assert counts.s_ext == 0
    assert counts.mean_degree == 0.0


def test_stabilization_radius_preconditions(params):
    disc = point_set_from_disc(params, [13.0], [0.0], 0)
    with pytest.raises(PreconditionError):
        stabilization_radius(disc, 0)
    high = point_set_from_band(params, [0.0], [params.H + 0.5], 0)
    with pytest.raises(PreconditionError):
        stabilization_radius(high, 0)


def test_stabilization_radius_nearest_lower_point(params):
    ps = point_set_from_band(params, [0.0, 0.5, 0.2], [2.0, 1.0, 3.0], 0)
    # point 1 is lower and adjacent, point 2 is higher and ignored
    assert stabilization_radius(ps, 0) == pytest.approx(math.hypot(0.5, 1.0))


def test_stabilization_radius_falls_back_to_diameter(params):
    ps = point_set_from_band(params, [0.0, 500.0], [2.0, 1.0], 0)
    expected = truncated_region_diameter(ps.band_point(0), params)
    assert stabilization_radius(ps, 0) == pytest.approx(expected)


def test_vectorised_radii_match_pointwise():
    params = make_params(1.5, 1.0, 2000)
    ps = sample_band(params, 5, y_max=params.H)
    g = build_fast(ps)
    idx, radii = stabilization_radii(ps, g)
    assert np.all(ps.y[idx] <= params.H)
    has_lower = np.zeros(len(ps), dtype=bool)
    coo = g.adjacency.tocoo()
    has_lower[coo.row[ps.y[coo.col] <= ps.y[coo.row]]] = True

    checked = 0
    for pos in range(0, idx.size, max(1, idx.size // 150)):
        i = idx[pos]
        exact = stabilization_radius(ps, i)
        if has_lower[i]:
            assert radii[pos] == pytest.approx(exact, rel=1e-12)
        else:
            assert radii[pos] == pytest.approx(exact, rel=0.05)
        checked += 1
    assert checked > 100


def test_stabilization_radii_need_band(params):
    ps = point_set_from_disc(params, [13.0], [0.0], 0)
    with pytest.raises(PreconditionError):
        stabilization_radii(ps, build_fast(ps))


def test_diameter_table_monotone(params):
    heights, diam = diameter_table(params, top=6.0, size=33, samples=65)
    assert heights[0] == 0.0 and heights[-1] == 6.0
    assert np.all(np.diff(diam) >= 0)
    assert diam[0] == pytest.approx(2.0, rel=0.05)


def test_phi_stab_switches_branch(params):
    small, large = phi_stab([1e-4, 1e4], params)
    assert small == pytest.approx(params.alpha * 1e-4 / 4)
    assert large < params.alpha * 1e4 / 4


def test_tail_constant_on_synthetic_data(params):
    ys = np.full(100, 1.0)
    radii = np.concatenate([np.full(50, 5.0), np.zeros(50)])
    c, used = stabilization_tail_constant(ys, radii, params, [0.0, 2.0], [1.0, 6.0])
    expected = 0.5 * math.exp(float(phi_stab(1.0, params)) - params.alpha / 2.0)
    assert used == 1
    assert c == pytest.approx(expected)


def test_tail_constant_ignores_thin_cells(params):
    ys = np.full(20, 1.0)
    radii = np.concatenate([np.full(5, 5.0), np.zeros(15)])
    c, used = stabilization_tail_constant(ys, radii, params, [0.0, 2.0], [1.0], min_hits=10)
    assert (c, used) == (0.0, 0)


def main():
    return pytest.main([__file__, "-q"])


if __name__ == "__main__":
    sys.exit(main())
