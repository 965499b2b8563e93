"""
Distance-R graph on a PointSet: brute-force oracle, layered angular sweep,
degree statistics and edge-list export.
"""

import json
import math
import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special
from scipy.sparse import csr_matrix

from .config import InvariantBreach, PreconditionError, load_settings
from .geometry import edge_mask

logger = logging.getLogger(__name__)

SIDECAR_SUFFIX = ".meta.json"

# Delta <= (pi/2) e^{(y+y')/2} / sqrt((1-e^{-2r})(1-e^{-2r'})) and the root factor
# is at most 1.157 once r, r' >= CORE_RADIUS
WINDOW_FACTOR = 0.5 * math.pi * 1.2
CORE_RADIUS = 1.0
LAYER_WIDTH = 2.0 * math.log(2.0)
MAX_CANDIDATES_PER_BLOCK = 2_000_000

# the Gamma-ratio tail law holds once k - a clears the Pareto scale of the rates
TAIL_GAP = 5.0
TAIL_SCALE_FACTOR = 3.0


@dataclass(frozen=True)
class HrgGraph:
    n_vertices: int
    adjacency: csr_matrix
    degrees: np.ndarray

    def neighbors(self, i):
        start, stop = self.adjacency.indptr[i], self.adjacency.indptr[i + 1]
        return self.adjacency.indices[start:stop]

    @property
    def n_edges(self):
        return int(self.degrees.sum() // 2)

    def edges(self):
        """Edge array of shape (m, 2), i < j, lexicographically sorted"""
        coo = self.adjacency.tocoo()
        keep = coo.row < coo.col
        pairs = np.column_stack([coo.row[keep], coo.col[keep]]).astype(np.int64)
        if pairs.size == 0:
            return np.zeros((0, 2), dtype=np.int64)
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        return pairs[order]

    def edge_set(self):
        return {(int(i), int(j)) for i, j in self.edges()}


def graph_from_edges(n_vertices, rows, cols):
    """Symmetric, loop-free adjacency from an unordered pair list"""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    keep = rows != cols
    rows, cols = rows[keep], cols[keep]
    data = np.ones(2 * rows.size, dtype=np.int8)
    adj = csr_matrix(
        (data, (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(n_vertices, n_vertices),
    )
    adj.sum_duplicates()
    adj.data[:] = 1
    adj.sort_indices()
    degrees = np.diff(adj.indptr).astype(np.int64)
    return HrgGraph(n_vertices=n_vertices, adjacency=adj, degrees=degrees)


def build_bruteforce(ps, limit=None):
    """All-pairs oracle, O(N^2)"""
    limit = load_settings().brute_limit if limit is None else limit
    N = len(ps)
    if N > limit:
        raise PreconditionError(f"brute-force builder guarded at N <= {limit}, got N = {N}")
    R = ps.params.R
    rows, cols = [], []
    for i in range(N - 1):
        mask = edge_mask(ps.r[i], ps.theta[i], ps.r[i + 1 :], ps.theta[i + 1 :], R)
        js = np.nonzero(mask)[0] + i + 1
        if js.size:
            rows.append(np.full(js.size, i, dtype=np.int64))
            cols.append(js)
    if rows:
        return graph_from_edges(N, np.concatenate(rows), np.concatenate(cols))
    return graph_from_edges(N, [], [])


def _window_pairs(query_idx, query_x, ext_x, ext_idx, width):
    """Candidate (query, target) index pairs with |x_q - x_t| <= width in the extended order"""
    lo = np.searchsorted(ext_x, query_x - width, side="left")
    hi = np.searchsorted(ext_x, query_x + width, side="right")
    counts = hi - lo
    total = int(counts.sum())
    if total == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    starts = np.cumsum(counts) - counts
    offsets = np.arange(total) - np.repeat(starts, counts)
    pos = np.repeat(lo, counts) + offsets
    return np.repeat(query_idx, counts), ext_idx[pos]


def _chunks(weights, budget):
    """Split a weight sequence into contiguous blocks of total weight about budget"""
    bounds = [0]
    acc = 0
    for i, w in enumerate(weights):
        acc += int(w)
        if acc >= budget:
            bounds.append(i + 1)
            acc = 0
    if bounds[-1] != len(weights):
        bounds.append(len(weights))
    return list(zip(bounds[:-1], bounds[1:]))


def build_fast(ps):
    """Layered angular sweep with exact edge tests on candidate windows.

    Points are bucketed by e^{y/2} into dyadic layers and sorted by x. For a
    layer pair (k, l) every neighbour lies within WINDOW_FACTOR * 2^{k+l+2}
    in x, which over-covers the exact ball. Points with r < CORE_RADIUS are
    tested against everything.
    """
    N = len(ps)
    if N < 2:
        return graph_from_edges(N, [], [])
    params = ps.params
    R, I_n = params.R, params.I_n
    r, theta, x, y = ps.r, ps.theta, ps.x, ps.y

    pair_rows, pair_cols = [], []

    def test(rows, cols):
        if rows.size == 0:
            return
        mask = edge_mask(r[rows], theta[rows], r[cols], theta[cols], R)
        if mask.any():
            pair_rows.append(rows[mask])
            pair_cols.append(cols[mask])

    core = np.nonzero(r < CORE_RADIUS)[0]
    everyone = np.arange(N, dtype=np.int64)
    for c in core:
        others = everyone[everyone != c]
        test(np.full(others.size, c, dtype=np.int64), others)

    rest = np.nonzero(r >= CORE_RADIUS)[0]
    layer_of = np.floor(y[rest] / LAYER_WIDTH).astype(np.int64)
    layers = {}
    for k in np.unique(layer_of):
        members = rest[layer_of == k]
        members = members[np.argsort(x[members], kind="stable")]
        layers[int(k)] = members

    keys = sorted(layers)
    for a, k in enumerate(keys):
        for l in keys[a:]:
            width = WINDOW_FACTOR * 2.0 ** (k + l + 2)
            q_idx, t_idx = layers[k], layers[l]
            if width >= I_n:
                rows = np.repeat(q_idx, t_idx.size)
                cols = np.tile(t_idx, q_idx.size)
                if k == l:
                    keep = rows < cols
                    rows, cols = rows[keep], cols[keep]
                test(rows, cols)
                continue

            t_x = x[t_idx]
            hi_wrap = t_x > I_n - width
            lo_wrap = t_x <= -I_n + width
            ext_x = np.concatenate([t_x[hi_wrap] - 2.0 * I_n, t_x, t_x[lo_wrap] + 2.0 * I_n])
            ext_idx = np.concatenate([t_idx[hi_wrap], t_idx, t_idx[lo_wrap]])

            q_x = x[q_idx]
            expected = np.searchsorted(ext_x, q_x + width, side="right") - np.searchsorted(
                ext_x, q_x - width, side="left"
            )
            for start, stop in _chunks(expected, MAX_CANDIDATES_PER_BLOCK):
                rows, cols = _window_pairs(q_idx[start:stop], q_x[start:stop], ext_x, ext_idx, width)
                if k == l:
                    keep = rows < cols
                    rows, cols = rows[keep], cols[keep]
                test(rows, cols)

    if not pair_rows:
        return graph_from_edges(N, [], [])
    rows = np.concatenate(pair_rows)
    cols = np.concatenate(pair_cols)
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    codes = np.unique(lo * N + hi)
    g = graph_from_edges(N, codes // N, codes % N)
    logger.debug(f"build_fast: N={N} edges={g.n_edges} layers={len(keys)} core={core.size}")
    return g


class GraphBuilder:
    """Selects a builder and optionally cross-checks it against the oracle"""

    def __init__(self, builder="fast", brute_limit=None):
        self.logger = logging.getLogger(self.__class__.__name__)
        if builder not in ("fast", "brute"):
            raise PreconditionError(f"unknown builder {builder!r}")
        self.builder = builder
        self.brute_limit = load_settings().brute_limit if brute_limit is None else brute_limit
        self.logger.info(f"GraphBuilder initialized (builder={builder})")

    def build(self, ps):
        """Build the graph with the configured builder"""
        if self.builder == "brute":
            return build_bruteforce(ps, self.brute_limit)
        return build_fast(ps)

    def verify(self, ps, g=None):
        """Compare the fast builder with brute force; returns False when skipped"""
        if len(ps) > self.brute_limit:
            self.logger.warning(
                f"Skipping verification: N = {len(ps)} exceeds brute limit {self.brute_limit}"
            )
            return False
        fast = g if g is not None and self.builder == "fast" else build_fast(ps)
        brute = build_bruteforce(ps, self.brute_limit)
        if not np.array_equal(fast.edges(), brute.edges()):
            missing = len(brute.edge_set() - fast.edge_set())
            extra = len(fast.edge_set() - brute.edge_set())
            msg = f"fast builder disagrees with brute force: {missing} missing, {extra} extra edges"
            self.logger.error(msg)
            raise InvariantBreach(msg)
        self.logger.info(f"Verified {fast.n_edges} edges against brute force")
        return True


@dataclass(frozen=True)
class TailFit:
    """Maximum-likelihood tail index a of P(D = k) ~ Gamma(k - a) / Gamma(k + 1) over k >= k_min"""

    k_min: int
    size: int
    index: float
    stderr: float

    @property
    def slope(self):
        """Asymptotic log-log slope of the CCDF"""
        return -self.index


def _tail_score(a, tail, k_min):
    m = tail.size
    return m * special.digamma(k_min - a) + m / a - special.digamma(tail - a).sum()


def fit_tail_index(degrees, k_min):
    """Discrete MLE of the Pareto index of a mixed Poisson degree law, or None.

    For k well above the mixing scale P(D = k) is proportional to
    Gamma(k - a) / Gamma(k + 1), whose tail sum from k_min is
    Gamma(k_min - a) / (a Gamma(k_min)). The score is strictly decreasing
    in a on (0, k_min), so the root is bracketed there.
    """
    k_min = int(k_min)
    tail = np.asarray(degrees, dtype=float)
    tail = tail[tail >= k_min]
    if k_min < 2 or tail.size == 0:
        return None
    lo, hi = 1e-6, k_min - 1e-9
    if not _tail_score(lo, tail, k_min) > 0.0 > _tail_score(hi, tail, k_min):
        return None
    a = optimize.brentq(_tail_score, lo, hi, args=(tail, k_min), xtol=1e-10)
    m = tail.size
    info = m * special.polygamma(1, k_min - a) + m / a**2 - special.polygamma(1, tail - a).sum()
    stderr = float(1.0 / math.sqrt(info)) if info > 0 else math.inf
    return TailFit(k_min=k_min, size=m, index=float(a), stderr=stderr)


def tail_fit(degrees, mean=None, k_min=None, min_tail=10):
    """Tail index with k_min chosen as the first cut clearing the mixing scale.

    Candidate cuts start at max(2, ceil(2 mean)); a cut k is accepted once
    k - a >= max(TAIL_GAP, TAIL_SCALE_FACTOR * scale), scale = mean (a - 1) / a
    being the Pareto scale of the Poisson rates.
    """
    degrees = np.asarray(degrees, dtype=np.int64)
    if degrees.size == 0:
        return None
    if k_min is not None:
        fit = fit_tail_index(degrees, k_min)
        return fit if fit is not None and fit.size >= min_tail else None

    mean = float(degrees.mean()) if mean is None else float(mean)
    for k in range(max(2, math.ceil(2.0 * mean)), int(degrees.max()) + 1):
        if np.count_nonzero(degrees >= k) < min_tail:
            break
        fit = fit_tail_index(degrees, k)
        if fit is None:
            continue
        scale = mean * (fit.index - 1.0) / fit.index if fit.index > 1.0 else mean
        if k - fit.index >= max(TAIL_GAP, TAIL_SCALE_FACTOR * scale):
            return fit
    return None


@dataclass(frozen=True)
class DegreeStats:
    mean_degree: float
    max_degree: int
    ks: np.ndarray
    ccdf: np.ndarray
    k_min: int | None
    k_max: int | None
    ls_slope: float | None
    ls_slope_stderr: float | None
    tail: TailFit | None
    degenerate: bool

    @property
    def tail_slope(self):
        return None if self.tail is None else self.tail.slope

    @property
    def tail_exponent(self):
        """Exponent of the degree pmf, a + 1"""
        return None if self.tail is None else self.tail.index + 1.0

    def to_dict(self):
        return {
            "mean_degree": self.mean_degree,
            "max_degree": self.max_degree,
            "k_min": self.k_min,
            "k_max": self.k_max,
            "ls_slope": self.ls_slope,
            "ls_slope_stderr": self.ls_slope_stderr,
            "tail_k_min": None if self.tail is None else self.tail.k_min,
            "tail_size": None if self.tail is None else self.tail.size,
            "tail_slope": self.tail_slope,
            "tail_slope_stderr": None if self.tail is None else self.tail.stderr,
            "tail_exponent": self.tail_exponent,
            "degenerate": self.degenerate,
        }


def loglog_fit(x, y):
    """Least-squares slope of log y on log x and its standard error"""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    slope, intercept = np.polyfit(lx, ly, deg=1)
    m = lx.size
    if m <= 2:
        return float(slope), 0.0
    resid = ly - (slope * lx + intercept)
    spread = float(np.sum((lx - lx.mean()) ** 2))
    return float(slope), math.sqrt(float(np.sum(resid**2)) / (m - 2) / spread)


def degree_ccdf(degrees):
    """ks = 1..max degree and N_{>=k}"""
    degrees = np.asarray(degrees, dtype=np.int64)
    if degrees.size == 0 or degrees.max() == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    counts = np.bincount(degrees)
    tail = np.cumsum(counts[::-1])[::-1]
    ks = np.arange(1, counts.size, dtype=np.int64)
    return ks, tail[1:]


def degree_stats(g, k_min=None, k_max=None, min_tail=10):
    """Mean degree, CCDF, a log-log least-squares slope over [k_min, k_max] and the tail MLE"""
    degrees = np.asarray(g.degrees, dtype=np.int64)
    mean = float(degrees.mean()) if degrees.size else 0.0
    max_deg = int(degrees.max()) if degrees.size else 0
    ks, ccdf = degree_ccdf(degrees)
    if max_deg == 0:
        return DegreeStats(mean, 0, ks, ccdf, None, None, None, None, None, True)

    lo = max(1, math.ceil(2.0 * mean)) if k_min is None else int(k_min)
    if k_max is None:
        enough = ks[ccdf >= min_tail]
        hi = int(enough.max()) if enough.size else 0
    else:
        hi = int(k_max)
    sel = (ks >= lo) & (ks <= hi) & (ccdf > 0)
    ls_slope = ls_stderr = None
    if sel.sum() >= 3:
        ls_slope, ls_stderr = loglog_fit(ks[sel], ccdf[sel])
    else:
        logger.warning(f"Least-squares tail fit skipped: {int(sel.sum())} usable points in [{lo}, {hi}]")

    tail = tail_fit(degrees, mean=mean, k_min=k_min, min_tail=min_tail)
    if tail is None:
        logger.warning(f"Tail MLE skipped: no admissible cut with {min_tail} or more degrees")
    return DegreeStats(
        mean_degree=mean,
        max_degree=max_deg,
        ks=ks,
        ccdf=ccdf,
        k_min=lo,
        k_max=hi,
        ls_slope=ls_slope,
        ls_slope_stderr=ls_stderr,
        tail=tail,
        degenerate=False,
    )


def write_edge_list(g, path, ps):
    """Lines 'i j' (0-based, i < j) plus a JSON sidecar echoing the sample parameters"""
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in g.edges():
            fh.write(f"{i} {j}\n")
    meta = {
        "n_vertices": g.n_vertices,
        "seed": ps.seed,
        "alpha": ps.params.alpha,
        "nu": ps.params.nu,
        "n": ps.params.n,
        "n_edges": g.n_edges,
    }
    with open(f"{path}{SIDECAR_SUFFIX}", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
    logger.info(f"Wrote {g.n_edges} edges to {path}")


def read_edge_list(path):
    with open(f"{path}{SIDECAR_SUFFIX}", encoding="utf-8") as fh:
        meta = json.load(fh)
    pairs = np.loadtxt(path, dtype=np.int64, ndmin=2) if _has_lines(path) else np.zeros((0, 2), dtype=np.int64)
    return graph_from_edges(meta["n_vertices"], pairs[:, 0], pairs[:, 1]), meta


def _has_lines(path):
    with open(path, encoding="utf-8") as fh:
        return any(line.strip() for line in fh)
