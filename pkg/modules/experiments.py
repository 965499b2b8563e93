"""
Monte Carlo harness: replicate counts over (alpha, n) grids and the report
that compares them with the limit constants and variance regimes.

Replicates may run in worker processes; results are folded back in
(alpha, n, replicate) order so every number depends only on the config
and its master seed.
"""

import csv
import json
import math
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from dataclasses import dataclass, field, asdict, fields
from concurrent.futures import ProcessPoolExecutor, as_completed

import numpy as np
from scipy import stats

from .config import ParameterError, PreconditionError, ResourceGuardError, load_settings
from .graph import build_bruteforce, build_fast, degree_stats, loglog_fit
from .measures import (
    Truncation,
    ext_expectation_constant,
    iso_expectation_constant,
    iso_variance_regime,
    sigma_ext_constant,
)
from .model import h1_height, high_point_probability, make_params, mean_degree_constant
from .sampler import expected_band_count, replicate_seeds, sample_band, sample_disc
from .scores import count_scores, stabilization_radii, stabilization_tail_constant

logger = logging.getLogger(__name__)

MIN_MOMENT_REPLICATES = 30
KS_CRITICAL_1PCT = 1.63
KS_RELAXATION = 1.5
SKEWNESS_THRESHOLD = 0.5
LOW_ACCEPTANCE = 0.10

STATISTIC_ALIASES = {
    "iso": ("s_iso",),
    "ext": ("s_ext",),
    "full": ("s_iso", "s_ext"),
    "H": ("s_iso_H", "s_ext_H"),
}
CONDITIONING_HEIGHTS = {
    "h1": h1_height,
    "h1_plain": lambda params: params.R / (2.0 * params.alpha),
}


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class StabilizationConfig:
    n_grid: tuple
    y_bins: tuple
    t_grid: tuple
    min_hits: int = 10


@dataclass(frozen=True)
class DegreeConfig:
    n: float
    replicates: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    alpha_list: tuple
    nu: float
    n_grid: tuple
    replicates: int
    master_seed: int
    name: str = "experiment"
    statistics: tuple = ("iso", "ext")
    conditioning: dict | None = None
    C_eps: float | None = None
    process: str = "disc"
    y_max: str = "R"
    builder: str = "fast"
    threads: int | None = None
    point_budget: float | None = None
    normality_min_replicates: int = 500
    variance_min_replicates: int = 200
    sigma: bool = False
    stabilization: StabilizationConfig | None = None
    degree: DegreeConfig | None = None

    @property
    def columns(self):
        chosen = []
        for key in self.statistics:
            for col in STATISTIC_ALIASES[key]:
                if col not in chosen:
                    chosen.append(col)
        return tuple(chosen)

    def params(self, alpha, n):
        return make_params(alpha, self.nu, n, self.C_eps)

    def to_dict(self):
        return asdict(self)


def _as_tuple(value, name, cast=float):
    if not isinstance(value, (list, tuple)) or not value:
        raise ParameterError(f"{name} must be a non-empty list")
    return tuple(cast(v) for v in value)


def _check_keys(raw, allowed, where):
    unknown = set(raw) - set(allowed)
    if unknown:
        raise ParameterError(f"unknown keys in {where}: {sorted(unknown)}")


def _check_increasing(grid, name):
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ParameterError(f"{name} must be strictly increasing, got {list(grid)}")


def config_from_dict(raw):
    """Validate a raw mapping and build an ExperimentConfig"""
    _check_keys(raw, [f.name for f in fields(ExperimentConfig)], "experiment config")
    for key in ("alpha_list", "nu", "n_grid", "replicates", "master_seed"):
        if key not in raw:
            raise ParameterError(f"experiment config is missing {key!r}")

    kwargs = dict(raw)
    kwargs["alpha_list"] = _as_tuple(raw["alpha_list"], "alpha_list")
    kwargs["n_grid"] = _as_tuple(raw["n_grid"], "n_grid")
    _check_increasing(kwargs["n_grid"], "n_grid")
    kwargs["nu"] = float(raw["nu"])
    kwargs["replicates"] = int(raw["replicates"])
    kwargs["master_seed"] = int(raw["master_seed"])
    if kwargs["replicates"] < 1:
        raise ParameterError("replicates must be at least 1")
    if kwargs["master_seed"] < 0:
        raise ParameterError("master_seed must be non-negative")

    stats_keys = tuple(raw.get("statistics", ("iso", "ext")))
    bad = [s for s in stats_keys if s not in STATISTIC_ALIASES]
    if bad:
        raise ParameterError(f"unknown statistics {bad}; choose from {sorted(STATISTIC_ALIASES)}")
    kwargs["statistics"] = stats_keys

    if raw.get("process", "disc") not in ("disc", "band"):
        raise ParameterError(f"process must be 'disc' or 'band', got {raw['process']!r}")
    if raw.get("y_max", "R") not in ("R", "H"):
        raise ParameterError(f"y_max must be 'R' or 'H', got {raw['y_max']!r}")
    if raw.get("builder", "fast") not in ("fast", "brute"):
        raise ParameterError(f"builder must be 'fast' or 'brute', got {raw['builder']!r}")

    cond = raw.get("conditioning")
    if cond is not None:
        _check_keys(cond, ["kind", "height"], "conditioning")
        if cond.get("kind") != "NoPointsAbove":
            raise ParameterError(f"conditioning kind must be 'NoPointsAbove', got {cond.get('kind')!r}")
        if cond.get("height", "h1") not in CONDITIONING_HEIGHTS:
            raise ParameterError(f"conditioning height must be one of {sorted(CONDITIONING_HEIGHTS)}")
        kwargs["conditioning"] = {"kind": "NoPointsAbove", "height": cond.get("height", "h1")}

    stab = raw.get("stabilization")
    if stab is not None:
        _check_keys(stab, [f.name for f in fields(StabilizationConfig)], "stabilization")
        n_grid = _as_tuple(stab["n_grid"], "stabilization.n_grid")
        y_bins = _as_tuple(stab["y_bins"], "stabilization.y_bins")
        _check_increasing(n_grid, "stabilization.n_grid")
        _check_increasing(y_bins, "stabilization.y_bins")
        kwargs["stabilization"] = StabilizationConfig(
            n_grid=n_grid,
            y_bins=y_bins,
            t_grid=_as_tuple(stab["t_grid"], "stabilization.t_grid"),
            min_hits=int(stab.get("min_hits", 10)),
        )

    deg = raw.get("degree")
    if deg is not None:
        _check_keys(deg, ["n", "replicates"], "degree")
        kwargs["degree"] = DegreeConfig(n=float(deg["n"]), replicates=int(deg.get("replicates", 1)))

    config = ExperimentConfig(**kwargs)
    for alpha in config.alpha_list:
        for n in config.n_grid:
            config.params(alpha, n)
    return config


def load_experiment_config(path):
    """Read an ExperimentConfig from a .toml or .json file"""
    path = Path(path)
    if path.suffix == ".toml":
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    elif path.suffix == ".json":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    else:
        raise ParameterError(f"config must be .toml or .json, got {path.name}")
    logger.info(f"Loaded experiment config from {path}")
    return config_from_dict(raw)


# --------------------------------------------------------------------------
# raw counts


@dataclass(frozen=True)
class CountRow:
    alpha: float
    n: float
    replicate: int
    seed: int
    N: int
    s_iso: int
    s_ext: int
    s_iso_H: int
    s_ext_H: int
    mean_degree: float
    max_y: float


COUNT_COLUMNS = [f.name for f in fields(CountRow)]


def _format_cell(value):
    return f"{value:.17g}" if isinstance(value, float) else str(value)


def write_counts_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(COUNT_COLUMNS)
        for row in rows:
            writer.writerow([_format_cell(getattr(row, c)) for c in COUNT_COLUMNS])
    logger.info(f"Wrote {len(rows)} count rows to {path}")


def read_counts_csv(path):
    casts = {f.name: f.type for f in fields(CountRow)}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [
            CountRow(**{k: (int if casts[k] in (int, "int") else float)(v) for k, v in rec.items()})
            for rec in reader
        ]


def _sample(params, seed, process, y_max):
    if process == "band":
        top = params.H if y_max == "H" else params.R
        return sample_band(params, seed, y_max=top)
    return sample_disc(params, seed)


def _replicate_task(task):
    """Worker entry point: one sample, one graph, one row"""
    alpha, nu, n, C_eps, replicate, seed, process, y_max, builder = task
    params = make_params(alpha, nu, n, C_eps)
    ps = _sample(params, seed, process, y_max)
    g = build_bruteforce(ps) if builder == "brute" else build_fast(ps)
    counts = count_scores(ps, g)
    return CountRow(
        alpha=alpha,
        n=n,
        replicate=replicate,
        seed=seed,
        N=counts.N,
        s_iso=counts.s_iso,
        s_ext=counts.s_ext,
        s_iso_H=counts.s_iso_H,
        s_ext_H=counts.s_ext_H,
        mean_degree=counts.mean_degree,
        max_y=counts.max_y,
    )


class ExperimentRunner:
    """Runs the replicate grid of an ExperimentConfig"""

    def __init__(self, config, threads=None, settings=None):
        self.logger = logging.getLogger(self.__class__.__name__)
        self.config = config
        self.settings = settings or load_settings()
        self.threads = max(1, int(threads or config.threads or self.settings.threads))
        self.point_budget = float(config.point_budget or self.settings.point_budget)
        self.completed = []
        self.logger.info(f"ExperimentRunner initialized ({config.name}, threads={self.threads})")

    def tasks(self):
        cfg = self.config
        out = []
        for alpha in cfg.alpha_list:
            for n in cfg.n_grid:
                seeds = replicate_seeds(cfg.master_seed, alpha, n, cfg.replicates)
                for k, seed in enumerate(seeds):
                    out.append((alpha, cfg.nu, n, cfg.C_eps, k, seed, cfg.process, cfg.y_max, cfg.builder))
        return out

    def expected_points(self):
        cfg = self.config
        total = 0.0
        for alpha in cfg.alpha_list:
            for n in cfg.n_grid:
                if cfg.process == "band":
                    params = cfg.params(alpha, n)
                    top = params.H if cfg.y_max == "H" else params.R
                    per = expected_band_count(params, top)
                else:
                    per = n
                total += per * cfg.replicates
        return total

    def check_budget(self):
        expected = self.expected_points()
        if expected > self.point_budget:
            raise ResourceGuardError(
                f"expected {expected:.3g} points exceeds the budget of {self.point_budget:.3g}"
            )
        return expected

    def run_counts(self, partial_path=None):
        """Per-replicate count rows in (alpha, n, replicate) order"""
        self.check_budget()
        tasks = self.tasks()
        self.completed = []
        try:
            if self.threads == 1:
                for task in tasks:
                    self.completed.append(_replicate_task(task))
            else:
                self._run_parallel(tasks)
        except KeyboardInterrupt:
            self.logger.warning(f"Interrupted after {len(self.completed)} of {len(tasks)} replicates")
            if partial_path is not None:
                self.flush_partial(partial_path)
            raise
        rows = self._ordered(self.completed)
        self.logger.info(f"Completed {len(rows)} replicates")
        return rows

    def _run_parallel(self, tasks):
        order = {(t[0], t[2], t[4]): i for i, t in enumerate(tasks)}
        ex = ProcessPoolExecutor(max_workers=self.threads)
        try:
            futures = {ex.submit(_replicate_task, t): t for t in tasks}
            for fut in as_completed(futures):
                self.completed.append(fut.result())
        except KeyboardInterrupt:
            ex.shutdown(wait=False, cancel_futures=True)
            raise
        else:
            ex.shutdown(wait=True)
        self.completed.sort(key=lambda row: order[(row.alpha, row.n, row.replicate)])

    def _ordered(self, rows):
        alpha_pos = {a: i for i, a in enumerate(self.config.alpha_list)}
        n_pos = {n: i for i, n in enumerate(self.config.n_grid)}
        return sorted(rows, key=lambda r: (alpha_pos[r.alpha], n_pos[r.n], r.replicate))

    def flush_partial(self, path):
        rows = self._ordered(self.completed)
        write_counts_csv(rows, path)
        Path(f"{path}.partial").write_text(f"{len(rows)} of {len(self.tasks())} replicates\n", encoding="utf-8")
        self.logger.warning(f"Partial results flushed to {path}")


# --------------------------------------------------------------------------
# estimators


def jackknife_ci(samples, estimator, level=0.95):
    """Delete-one jackknife interval centred on the full-sample estimate"""
    x = np.asarray(samples, dtype=float)
    m = x.size
    theta = float(estimator(x))
    if m < 3:
        return theta, (theta, theta)
    loo = np.array([estimator(np.delete(x, i)) for i in range(m)])
    se = math.sqrt((m - 1) / m * float(np.sum((loo - loo.mean()) ** 2)))
    z = float(stats.norm.ppf(0.5 + level / 2.0))
    return theta, (theta - z * se, theta + z * se)


def jackknife_mean_ci(samples, level=0.95):
    return jackknife_ci(samples, np.mean, level)


def jackknife_variance_ci(samples, level=0.95):
    theta, (lo, hi) = jackknife_ci(samples, lambda v: np.var(v, ddof=1), level)
    return theta, (max(0.0, lo), hi)


@dataclass(frozen=True)
class MomentSummary:
    statistic: str
    alpha: float
    n: float
    replicates: int
    mean: float | None
    variance: float | None
    mean_ci: tuple | None
    variance_ci: tuple | None


def group_rows(rows):
    """{(alpha, n): rows} preserving replicate order"""
    cells = {}
    for row in rows:
        cells.setdefault((row.alpha, row.n), []).append(row)
    return cells


def column(rows, name):
    return np.array([getattr(r, name) for r in rows], dtype=float)


def summarize(rows, statistic, level=0.95):
    cells = group_rows(rows)
    out = []
    for (alpha, n), cell in cells.items():
        values = column(cell, statistic)
        if values.size < MIN_MOMENT_REPLICATES:
            logger.warning(f"{statistic} at alpha={alpha}, n={n:g}: {values.size} replicates, moments skipped")
            out.append(MomentSummary(statistic, alpha, n, int(values.size), None, None, None, None))
            continue
        mean, mean_ci = jackknife_mean_ci(values, level)
        var, var_ci = jackknife_variance_ci(values, level)
        out.append(MomentSummary(statistic, alpha, n, int(values.size), mean, var, mean_ci, var_ci))
    return out


# --------------------------------------------------------------------------
# report operations


def limit_constants(config, alpha, spec=None):
    """iso and ext constants at the intensity of the disc image"""
    params = config.params(alpha, config.n_grid[0])
    intensity = params.disc_beta if config.process == "disc" else params.beta
    return {
        "iso_constant": iso_expectation_constant(params, spec, intensity=intensity),
        "ext_constant": ext_expectation_constant(params, spec, intensity=intensity),
        "intensity": intensity,
    }


def _constant_for(statistic, constants):
    return constants["iso_constant"] if statistic.startswith("s_iso") else constants["ext_constant"]


def expectation_convergence(rows, config, constants=None):
    """Relative gaps |mean/n - constant| along n_grid, per alpha and statistic.

    The trend is judged on the part of each gap that the jackknife interval of
    the mean resolves: decreasing when the last resolved gap is zero or below
    the first.
    """
    if len(config.n_grid) < 3:
        raise PreconditionError("expectation_convergence needs at least 3 grid points")
    cells = group_rows(rows)
    out = []
    for alpha in config.alpha_list:
        consts = constants[alpha] if constants else limit_constants(config, alpha)
        for statistic in config.columns:
            target = _constant_for(statistic, consts)
            table = []
            for n in config.n_grid:
                mean, (lo, hi) = jackknife_mean_ci(column(cells[(alpha, n)], statistic))
                gap = abs(mean / n - target) / target
                half = 0.5 * (hi - lo) / (n * target)
                table.append(
                    {
                        "n": n,
                        "mean_over_n": mean / n,
                        "gap": gap,
                        "ci_half_width": half,
                        "resolved_gap": max(0.0, gap - half),
                    }
                )
            last, first = table[-1]["resolved_gap"], table[0]["resolved_gap"]
            out.append(
                {
                    "alpha": alpha,
                    "statistic": statistic,
                    "constant": target,
                    "table": table,
                    "decreasing": last == 0.0 or last < first,
                }
            )
    return out


def variance_scaling(rows, config):
    """Least-squares slope of ln Var against ln n"""
    if len(config.n_grid) < 4:
        raise PreconditionError("variance_scaling needs at least 4 grid points")
    if config.replicates < config.variance_min_replicates:
        raise PreconditionError(
            f"variance_scaling needs {config.variance_min_replicates} replicates, got {config.replicates}"
        )
    cells = group_rows(rows)
    ns = np.asarray(config.n_grid, dtype=float)
    out = []
    for alpha in config.alpha_list:
        regime = iso_variance_regime(alpha)
        for statistic in config.columns:
            variances = np.array([np.var(column(cells[(alpha, n)], statistic), ddof=1) for n in config.n_grid])
            expected = regime["exponent"] if statistic.startswith("s_iso") else 1.0
            entry = {"alpha": alpha, "statistic": statistic, "expected_slope": expected, "variances": variances.tolist()}
            if np.any(variances <= 0):
                entry.update(slope=None, stderr=None, note="zero variance in some cell")
            else:
                slope, stderr = loglog_fit(ns, variances)
                entry.update(slope=slope, stderr=stderr)
            if statistic.startswith("s_iso") and regime["regime"] == "nlogn":
                ratios = variances / (ns * np.log(ns))
                entry["nlogn_ratios"] = ratios.tolist()
                entry["nlogn_spread"] = float(ratios.max() / ratios.min()) if ratios.min() > 0 else None
            out.append(entry)
    return out


def normality_test(samples, min_replicates=500, alpha=None):
    """KS distance of standardized samples to N(0,1), skewness and excess kurtosis"""
    x = np.asarray(samples, dtype=float)
    m = x.size
    sd = float(np.std(x, ddof=1)) if m > 1 else 0.0
    if sd == 0.0:
        return {"replicates": m, "ks": None, "skewness": None, "kurtosis": None, "verdict": None}
    z = (x - x.mean()) / sd
    ks = float(stats.kstest(z, "norm").statistic)
    result = {
        "replicates": m,
        "ks": ks,
        "skewness": float(stats.skew(z)),
        "kurtosis": float(stats.kurtosis(z)),
        "ks_threshold": KS_RELAXATION * KS_CRITICAL_1PCT / math.sqrt(m),
        "verdict": None,
    }
    if m < min_replicates or alpha == 1.0:
        return result
    result["verdict"] = "normal-consistent" if ks < result["ks_threshold"] else "inconclusive"
    return result


def clt_dichotomy(rows, config):
    """Per alpha and statistic: normality along n_grid and the cross-n verdict"""
    cells = group_rows(rows)
    out = []
    for alpha in config.alpha_list:
        for statistic in config.columns:
            per_n = [
                dict(n=n, **normality_test(column(cells[(alpha, n)], statistic), config.normality_min_replicates, alpha))
                for n in config.n_grid
            ]
            tail = per_n[-2:]
            verdict = per_n[-1]["verdict"]
            enough = all(t["replicates"] >= config.normality_min_replicates for t in tail)
            if alpha != 1.0 and enough and len(tail) == 2:
                if all(t["skewness"] is not None and abs(t["skewness"]) > SKEWNESS_THRESHOLD for t in tail):
                    verdict = "non-normal"
            out.append({"alpha": alpha, "statistic": statistic, "per_n": per_n, "verdict": verdict})
    return out


def conditional_variance(rows, config):
    """Var[S^iso | no points above h] / Var[S^iso] by replicate rejection"""
    if not config.conditioning:
        raise PreconditionError("conditional_variance needs a conditioning block")
    height_fn = CONDITIONING_HEIGHTS[config.conditioning["height"]]
    cells = group_rows(rows)
    out = []
    for alpha in config.alpha_list:
        table = []
        for n in config.n_grid:
            cell = cells[(alpha, n)]
            params = config.params(alpha, n)
            h = height_fn(params)
            keep = column(cell, "max_y") <= h
            values = column(cell, "s_iso")
            rate = float(keep.mean())
            if rate < LOW_ACCEPTANCE:
                logger.warning(f"alpha={alpha}, n={n:g}: conditioning acceptance {rate:.3f} below {LOW_ACCEPTANCE}")
            full_var = float(np.var(values, ddof=1)) if values.size > 1 else math.nan
            cond_var = float(np.var(values[keep], ddof=1)) if keep.sum() > 1 else math.nan
            ratio = cond_var / full_var if full_var > 0 else math.nan
            expected = math.exp(-params.n * high_point_probability(params, h))
            table.append({"n": n, "height": h, "acceptance": rate, "expected_acceptance": expected, "ratio": ratio})
        ratios = [t["ratio"] for t in table]
        out.append(
            {
                "alpha": alpha,
                "collapse_regime": 0.5 < alpha < 1.0,
                "table": table,
                "decreasing": all(b < a for a, b in zip(ratios, ratios[1:])),
            }
        )
    return out


def extreme_variance_check(rows, config, truncation=None):
    """Var[S^ext]/n at the largest n against the limit constant"""
    cells = group_rows(rows)
    n = config.n_grid[-1]
    out = []
    for alpha in config.alpha_list:
        params = config.params(alpha, n)
        intensity = params.disc_beta if config.process == "disc" else params.beta
        sigma = sigma_ext_constant(params, truncation or Truncation(), intensity=intensity)
        var = float(np.var(column(cells[(alpha, n)], "s_ext"), ddof=1))
        out.append(
            {
                "alpha": alpha,
                "n": n,
                "variance_over_n": var / n,
                "sigma2": sigma.value,
                "relative_gap": abs(var / n - sigma.value) / sigma.value,
                "truncation": sigma.truncation_report(),
            }
        )
    return out


def degree_law(config):
    """Mean degree against its constant and the tail slope (MLE) against -2 alpha"""
    if config.degree is None:
        raise PreconditionError("degree_law needs a degree block")
    n = config.degree.n
    out = []
    for alpha in config.alpha_list:
        params = config.params(alpha, n)
        seeds = replicate_seeds(config.master_seed, alpha, n, config.degree.replicates)
        fits = [degree_stats(build_fast(sample_disc(params, seed))) for seed in seeds]
        means = np.array([f.mean_degree for f in fits])
        slopes = np.array([f.tail_slope for f in fits if f.tail_slope is not None])
        ls_slopes = np.array([f.ls_slope for f in fits if f.ls_slope is not None])
        target = mean_degree_constant(params)
        out.append(
            {
                "alpha": alpha,
                "n": n,
                "mean_degree": float(means.mean()),
                "constant": target,
                "relative_gap": abs(float(means.mean()) - target) / target,
                "tail_slope": float(slopes.mean()) if slopes.size else None,
                "tail_slope_sd": float(slopes.std(ddof=1)) if slopes.size > 1 else None,
                "ls_slope": float(ls_slopes.mean()) if ls_slopes.size else None,
                "slope_target": -2.0 * alpha,
                "degenerate": any(f.degenerate for f in fits),
                "fits": [f.to_dict() for f in fits],
            }
        )
    return out


def stabilization_tail(config):
    """Calibrated tail constant of the stabilization radius along a grid of n"""
    if config.stabilization is None:
        raise PreconditionError("stabilization_tail needs a stabilization block")
    stab = config.stabilization
    out = []
    for alpha in config.alpha_list:
        table = []
        for n in stab.n_grid:
            params = config.params(alpha, n)
            seed = replicate_seeds(config.master_seed, alpha, n, 1)[0]
            ps = sample_band(params, seed, y_max=params.H)
            g = build_fast(ps)
            idx, radii = stabilization_radii(ps, g)
            c, used = stabilization_tail_constant(
                ps.y[idx], radii, params, stab.y_bins, stab.t_grid, stab.min_hits
            )
            table.append({"n": n, "constant": c, "cells_used": used, "points": int(idx.size)})
        consts = [t["constant"] for t in table if t["cells_used"]]
        spread = max(consts) / min(consts) if consts and min(consts) > 0 else None
        out.append({"alpha": alpha, "table": table, "spread": spread})
    return out


# --------------------------------------------------------------------------
# report


@dataclass
class ExperimentReport:
    config: dict
    moments: list = field(default_factory=list)
    expectation: list | None = None
    variance: list | None = None
    normality: list | None = None
    conditioning: list | None = None
    extreme_variance: list | None = None
    degree: list | None = None
    stabilization: list | None = None
    skipped: dict = field(default_factory=dict)

    def to_dict(self):
        out = asdict(self)
        out["moments"] = [asdict(m) for m in self.moments]
        return out


def _attempt(report, name, fn, *args):
    try:
        return fn(*args)
    except PreconditionError as e:
        report.skipped[name] = str(e)
        logger.info(f"Report section {name} skipped: {e}")
        return None


def build_report(config, rows, extras=True):
    """Assemble every report section the config and row count allow"""
    report = ExperimentReport(config=config.to_dict())
    for statistic in ("N",) + config.columns:
        report.moments.extend(summarize(rows, statistic))
    report.expectation = _attempt(report, "expectation", expectation_convergence, rows, config)
    report.variance = _attempt(report, "variance", variance_scaling, rows, config)
    report.normality = clt_dichotomy(rows, config)
    if config.conditioning:
        report.conditioning = conditional_variance(rows, config)
    if config.sigma:
        report.extreme_variance = extreme_variance_check(rows, config)
    if extras and config.degree is not None:
        report.degree = degree_law(config)
    if extras and config.stabilization is not None:
        report.stabilization = stabilization_tail(config)
    return report


def json_safe(obj):
    """Plain JSON values; NaN and infinities become None"""
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return json_safe(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_report(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(json_safe(report.to_dict()), fh, indent=2, allow_nan=False)
    logger.info(f"Report written to {path}")
