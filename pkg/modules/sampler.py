"""
Poisson samplers for the disc process and the ideal band process.

All randomness flows from explicit integer seeds through PCG64 generators;
replicate seeds are mixed from a master seed with SeedSequence so that a
replicate's sample does not depend on which worker draws it.
"""

import csv
import json
import math
import logging

import numpy as np

from .config import ParameterError, PreconditionError
from .model import (
    ProcessKind,
    log_sinh,
    make_params,
    point_set_from_band,
    point_set_from_columns,
    point_set_from_disc,
    wrap_angle,
)

logger = logging.getLogger(__name__)

CSV_HEADER = ["r", "theta", "y", "x"]
SIDECAR_SUFFIX = ".meta.json"
SIDECAR_KEYS = ("alpha", "nu", "n", "C_eps", "seed", "process_kind")

# above this z, arccosh(z) = ln(2z) - 1/(4z^2) to double precision
ARCCOSH_SERIES_CUTOFF = 1e8


def make_rng(seed):
    """PCG64-based generator for a fixed integer seed"""
    if int(seed) < 0:
        raise PreconditionError(f"seed must be non-negative, got {seed}")
    return np.random.default_rng(np.random.PCG64(int(seed)))


def derive_seed(master_seed, *keys):
    """Mix a master seed with integer keys into a 64-bit child seed"""
    entropy = [int(master_seed)] + [int(k) for k in keys]
    if any(k < 0 for k in entropy):
        raise PreconditionError(f"seed keys must be non-negative, got {entropy}")
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0])


def alpha_key(alpha):
    """Integer key for a curvature value, stable under float formatting"""
    return int(round(float(alpha) * 1_000_000))


def replicate_seeds(master_seed, alpha, n, replicates):
    return [derive_seed(master_seed, alpha_key(alpha), int(round(n)), k) for k in range(replicates)]


def inverse_cdf_radius(u, params):
    """r = arccosh(1 + u (cosh(alpha R) - 1)) / alpha, evaluated in log domain"""
    u = np.asarray(u, dtype=float)
    a, R = params.alpha, params.R
    log_span = math.log(2.0) + 2.0 * float(log_sinh(a * R / 2.0))  # ln(cosh(aR) - 1)
    with np.errstate(divide="ignore"):
        log_z = np.logaddexp(0.0, np.log(u) + log_span)
    big = log_z > math.log(ARCCOSH_SERIES_CUTOFF)
    small_z = np.exp(np.where(big, 0.0, log_z))
    acosh = np.where(
        big,
        math.log(2.0) + log_z - 0.25 * np.exp(-2.0 * log_z),
        np.arccosh(small_z),
    )
    return np.clip(acosh / a, 0.0, R)


def sample_disc(params, seed):
    """Poisson(n) points on the disc with uniform angles and radial density rho"""
    rng = make_rng(seed)
    count = int(rng.poisson(params.n))
    theta = math.pi - 2.0 * math.pi * rng.random(count)
    r = inverse_cdf_radius(rng.random(count), params)
    logger.debug(f"sample_disc: seed={seed} N={count}")
    return point_set_from_disc(params, r, theta, seed, ProcessKind.EXACT_DISC)


def expected_band_count(params, y_max=None, intensity=None):
    """2 I_n b (1 - e^{-alpha y_max}) / alpha"""
    y_max = params.R if y_max is None else y_max
    b = params.beta if intensity is None else intensity
    return 2.0 * params.I_n * b * (-math.expm1(-params.alpha * y_max)) / params.alpha


def sample_band(params, seed, y_max=None, intensity=None):
    """Poisson process on (-I_n, I_n] x [0, y_max] with intensity b e^{-alpha y}"""
    y_max = params.R if y_max is None else float(y_max)
    if not 0.0 < y_max <= params.R:
        raise PreconditionError(f"y_max must lie in (0, R = {params.R:.6f}], got {y_max}")
    rng = make_rng(seed)
    count = int(rng.poisson(expected_band_count(params, y_max, intensity)))
    x = params.I_n - 2.0 * params.I_n * rng.random(count)
    y = -np.log1p(rng.random(count) * np.expm1(-params.alpha * y_max)) / params.alpha
    logger.debug(f"sample_band: seed={seed} N={count} y_max={y_max:.4f}")
    return point_set_from_band(params, x, y, seed, y_max=y_max)


def binned_intensity(ps, bins):
    """Empirical intensity per unit band area in each y-bin"""
    bins = np.asarray(bins, dtype=float)
    counts, _ = np.histogram(ps.y, bins=bins)
    area = 2.0 * ps.params.I_n * np.diff(bins)
    return 0.5 * (bins[:-1] + bins[1:]), counts / area


def rotate(ps, shift):
    """Rotate every angle by the same shift"""
    theta = wrap_angle(np.asarray(ps.theta) + shift)
    return point_set_from_disc(ps.params, ps.r, theta, ps.seed, ps.process_kind, ps.y_max)


def permute(ps, order):
    order = np.asarray(order)
    return point_set_from_columns(
        ps.params,
        ps.r[order],
        ps.theta[order],
        ps.y[order],
        ps.x[order],
        ps.seed,
        ps.process_kind,
        ps.y_max,
    )


def sidecar_path(path):
    return f"{path}{SIDECAR_SUFFIX}"


def write_point_csv(ps, path):
    """Dump a PointSet to CSV (17 significant digits) plus a JSON sidecar"""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in zip(ps.r, ps.theta, ps.y, ps.x):
            writer.writerow([f"{v:.17g}" for v in row])
    meta = {
        "alpha": ps.params.alpha,
        "nu": ps.params.nu,
        "n": ps.params.n,
        "C_eps": ps.params.C_eps,
        "seed": ps.seed,
        "process_kind": ps.process_kind.value,
        "y_max": ps.y_max,
        "N": len(ps),
    }
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
    logger.info(f"Wrote {len(ps)} points to {path}")


def _read_sidecar(path):
    meta_path = sidecar_path(path)
    with open(meta_path, encoding="utf-8") as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as e:
            raise ParameterError(f"{meta_path}: not valid JSON ({e})") from e
    if not isinstance(meta, dict):
        raise ParameterError(f"{meta_path}: expected a JSON object")
    missing = [k for k in SIDECAR_KEYS if k not in meta]
    if missing:
        raise ParameterError(f"{meta_path}: missing keys {missing}")
    return meta


def read_point_csv(path):
    """Load a PointSet written by write_point_csv"""
    meta = _read_sidecar(path)
    params = make_params(meta["alpha"], meta["nu"], meta["n"], meta["C_eps"])

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ParameterError(f"{path}: expected header {CSV_HEADER}, got {header}")
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ParameterError(f"{path}:{reader.line_num}: expected {len(CSV_HEADER)} columns, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as e:
                raise ParameterError(f"{path}:{reader.line_num}: {e}") from e
    cols = np.array(rows, dtype=float).reshape(-1, 4)
    try:
        ps = point_set_from_columns(
            params,
            cols[:, 0],
            cols[:, 1],
            cols[:, 2],
            cols[:, 3],
            meta["seed"],
            meta["process_kind"],
            meta.get("y_max"),
        )
    except (TypeError, ValueError) as e:
        raise ParameterError(f"{sidecar_path(path)}: {e}") from e
    logger.info(f"Read {len(ps)} points from {path}")
    return ps
