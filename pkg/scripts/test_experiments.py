"""
Tests for the experiment config loader, the replicate runner and the
report sections.
"""

import os
import sys
import json
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

# Add the project root to the path (parent directory of scripts)
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

import main as pipeline
import modules.experiments as experiments
from main import EXIT_IO, EXIT_OK, EXIT_USAGE, run_pipeline, run_report_only
from modules.config import ParameterError, PreconditionError, ResourceGuardError
from modules.experiments import (
    CountRow,
    ExperimentReport,
    ExperimentRunner,
    build_report,
    clt_dichotomy,
    conditional_variance,
    config_from_dict,
    degree_law,
    expectation_convergence,
    jackknife_ci,
    jackknife_mean_ci,
    jackknife_variance_ci,
    limit_constants,
    load_experiment_config,
    normality_test,
    read_counts_csv,
    stabilization_tail,
    summarize,
    variance_scaling,
    write_counts_csv,
    write_report,
)
from modules.measures import ext_expectation_constant
from modules.model import h1_height

BASE = {
    "alpha_list": [1.5],
    "nu": 1.0,
    "n_grid": [256],
    "replicates": 3,
    "master_seed": 11,
}


def make_config(**overrides):
    raw = dict(BASE)
    raw.update(overrides)
    return config_from_dict(raw)


def synthetic_row(alpha, n, k, **values):
    base = dict(seed=k, N=int(n), s_iso=0, s_ext=0, s_iso_H=0, s_ext_H=0, mean_degree=0.0, max_y=0.0)
    base.update(values)
    return CountRow(alpha=alpha, n=n, replicate=k, **base)


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    monkeypatch.setenv("HRG_THREADS", "1")


# --------------------------------------------------------------------------
# config


def test_config_defaults_and_columns():
    cfg = make_config(statistics=["full", "H"])
    assert cfg.alpha_list == (1.5,)
    assert cfg.columns == ("s_iso", "s_ext", "s_iso_H", "s_ext_H")
    assert cfg.process == "disc"
    assert make_config().columns == ("s_iso", "s_ext")


@pytest.mark.parametrize(
    "overrides",
    [
        {"colour": "blue"},
        {"statistics": ["iso", "median"]},
        {"n_grid": [512, 256]},
        {"process": "torus"},
        {"y_max": "Z"},
        {"builder": "grid"},
        {"replicates": 0},
        {"master_seed": -3},
        {"alpha_list": [0.4]},
        {"alpha_list": []},
        {"conditioning": {"kind": "NoPointsBelow"}},
        {"conditioning": {"kind": "NoPointsAbove", "height": "h9"}},
        {"degree": {"n": 1000, "k": 3}},
    ],
)
def test_config_rejects_bad_input(overrides):
    with pytest.raises(ParameterError):
        make_config(**overrides)


def test_config_requires_core_keys():
    raw = dict(BASE)
    del raw["nu"]
    with pytest.raises(ParameterError):
        config_from_dict(raw)


def test_shipped_configs_load():
    configs_dir = os.path.join(project_root, "configs")
    names = sorted(f for f in os.listdir(configs_dir) if f.endswith(".toml"))
    assert "smoke.toml" in names
    for name in names:
        cfg = load_experiment_config(os.path.join(configs_dir, name))
        assert cfg.replicates >= 1
    smoke = load_experiment_config(os.path.join(configs_dir, "smoke.toml"))
    assert smoke.name == "smoke"
    assert smoke.alpha_list == (1.5,)


def test_json_config_and_unknown_suffix(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(dict(BASE, name="json-run")), encoding="utf-8")
    assert load_experiment_config(path).name == "json-run"
    other = tmp_path / "cfg.yaml"
    other.write_text("nu: 1\n", encoding="utf-8")
    with pytest.raises(ParameterError):
        load_experiment_config(other)


# --------------------------------------------------------------------------
# runner


def test_run_counts_is_deterministic():
    cfg = make_config()
    first = ExperimentRunner(cfg, threads=1).run_counts()
    second = ExperimentRunner(cfg, threads=1).run_counts()
    assert first == second
    assert [r.replicate for r in first] == [0, 1, 2]
    assert all(r.s_iso <= r.s_ext <= r.N for r in first)


def test_run_counts_independent_of_worker_count():
    cfg = make_config(alpha_list=[1.0, 2.0], n_grid=[200, 256])
    serial = ExperimentRunner(cfg, threads=1).run_counts()
    parallel = ExperimentRunner(cfg, threads=2).run_counts()
    assert serial == parallel
    assert [(r.alpha, r.n) for r in serial[:4]] == [(1.0, 200.0)] * 3 + [(1.0, 256.0)]


def test_band_process_rows():
    cfg = make_config(process="band", y_max="H")
    rows = ExperimentRunner(cfg, threads=1).run_counts()
    params = cfg.params(1.5, 256)
    assert all(r.max_y <= params.H for r in rows)
    assert all(r.s_iso_H == r.s_iso for r in rows)


def test_budget_guard():
    cfg = make_config(point_budget=100.0)
    runner = ExperimentRunner(cfg, threads=1)
    assert runner.expected_points() == pytest.approx(3 * 256)
    with pytest.raises(ResourceGuardError):
        runner.run_counts()


def test_interrupt_flushes_partial_counts(tmp_path, monkeypatch):
    real = experiments._replicate_task
    calls = []

    def flaky(task):
        calls.append(task)
        if len(calls) == 3:
            raise KeyboardInterrupt
        return real(task)

    monkeypatch.setattr(experiments, "_replicate_task", flaky)
    path = tmp_path / "counts.csv"
    runner = ExperimentRunner(make_config(), threads=1)
    with pytest.raises(KeyboardInterrupt):
        runner.run_counts(partial_path=path)
    assert len(read_counts_csv(path)) == 2
    marker = tmp_path / "counts.csv.partial"
    assert marker.read_text(encoding="utf-8").startswith("2 of 3")


def test_counts_csv_round_trip(tmp_path):
    rows = ExperimentRunner(make_config(), threads=1).run_counts()
    path = tmp_path / "rows.csv"
    write_counts_csv(rows, path)
    assert read_counts_csv(path) == rows


# --------------------------------------------------------------------------
# estimators


def test_jackknife_mean_matches_standard_error():
    x = np.random.default_rng(0).normal(size=200)
    mean, (lo, hi) = jackknife_mean_ci(x)
    half = stats.norm.ppf(0.975) * np.std(x, ddof=1) / math.sqrt(x.size)
    assert mean == pytest.approx(x.mean())
    assert (hi - lo) / 2 == pytest.approx(half, rel=1e-9)


def test_jackknife_variance_interval():
    x = np.random.default_rng(1).exponential(size=300)
    var, (lo, hi) = jackknife_variance_ci(x)
    assert var == pytest.approx(np.var(x, ddof=1))
    assert 0.0 <= lo < var < hi
    assert jackknife_mean_ci([1.0, 2.0]) == (1.5, (1.5, 1.5))


def test_jackknife_interval_covers_the_true_mean():
    rng = np.random.default_rng(3)
    repeats = 500
    covered = 0
    for _ in range(repeats):
        counts = rng.poisson(4.0, size=60)
        _, (lo, hi) = jackknife_ci(counts, np.mean)
        covered += lo <= 4.0 <= hi
    assert covered / repeats >= 0.90


def test_summarize_skips_thin_cells():
    rows = [synthetic_row(1.5, 100.0, k, s_iso=k) for k in range(10)]
    (summary,) = summarize(rows, "s_iso")
    assert summary.replicates == 10
    assert summary.mean is None and summary.variance_ci is None
    rows = [synthetic_row(1.5, 100.0, k, s_iso=k % 7) for k in range(40)]
    (summary,) = summarize(rows, "s_iso")
    assert summary.mean == pytest.approx(np.mean([k % 7 for k in range(40)]))


# --------------------------------------------------------------------------
# report sections


def test_normality_test_verdicts():
    rng = np.random.default_rng(2)
    normal = normality_test(rng.normal(size=1000), alpha=1.5)
    assert normal["verdict"] == "normal-consistent"
    skewed = normality_test(rng.exponential(size=1000), alpha=1.5)
    assert skewed["verdict"] == "inconclusive"
    assert skewed["skewness"] > 1.0
    assert normality_test(rng.normal(size=1000), alpha=1.0)["verdict"] is None
    assert normality_test(rng.normal(size=100), alpha=1.5)["verdict"] is None
    assert normality_test(np.ones(600))["ks"] is None


def clt_rows(alpha, draw):
    rng = np.random.default_rng(3)
    return [
        synthetic_row(alpha, n, k, s_iso=int(draw(rng)))
        for n in (1000.0, 2000.0)
        for k in range(500)
    ]


def test_clt_flags_skewed_counts():
    cfg = make_config(alpha_list=[0.75], n_grid=[1000, 2000], replicates=500, statistics=["iso"])
    (entry,) = clt_dichotomy(clt_rows(0.75, lambda rng: rng.exponential(50.0)), cfg)
    assert entry["verdict"] == "non-normal"
    assert len(entry["per_n"]) == 2


def test_clt_has_no_verdict_at_alpha_one():
    cfg = make_config(alpha_list=[1.0], n_grid=[1000, 2000], replicates=500, statistics=["iso"])
    (entry,) = clt_dichotomy(clt_rows(1.0, lambda rng: rng.exponential(50.0)), cfg)
    assert entry["verdict"] is None


def test_expectation_convergence_gaps():
    cfg = make_config(n_grid=[1000, 2000, 4000], statistics=["iso"])
    target = 0.1
    rows = [
        synthetic_row(1.5, n, k, s_iso=target * n + 10.0)
        for n in (1000.0, 2000.0, 4000.0)
        for k in range(3)
    ]
    constants = {1.5: {"iso_constant": target, "ext_constant": 0.2}}
    (entry,) = expectation_convergence(rows, cfg, constants)
    gaps = [t["gap"] for t in entry["table"]]
    assert gaps == pytest.approx([0.1, 0.05, 0.025])
    assert entry["decreasing"]
    with pytest.raises(PreconditionError):
        expectation_convergence(rows, make_config(n_grid=[1000, 2000]), constants)


def test_expectation_trend_ignores_gaps_inside_the_interval():
    cfg = make_config(n_grid=[1000, 2000, 4000], statistics=["iso"])
    constants = {1.5: {"iso_constant": 0.1, "ext_constant": 0.2}}
    noisy = {1000.0: [95, 105, 95, 105], 2000.0: [200] * 4, 4000.0: [397, 407, 397, 407]}
    rows = [synthetic_row(1.5, n, k, s_iso=v) for n, vals in noisy.items() for k, v in enumerate(vals)]
    (entry,) = expectation_convergence(rows, cfg, constants)
    first, last = entry["table"][0], entry["table"][-1]
    assert first["gap"] == pytest.approx(0.0, abs=1e-15)
    assert last["gap"] == pytest.approx(0.005)
    assert last["ci_half_width"] > last["gap"]
    assert last["resolved_gap"] == 0.0
    assert entry["decreasing"]

    growing = {1000.0: [100] * 4, 2000.0: [200] * 4, 4000.0: [480] * 4}
    rows = [synthetic_row(1.5, n, k, s_iso=v) for n, vals in growing.items() for k, v in enumerate(vals)]
    (entry,) = expectation_convergence(rows, cfg, constants)
    assert entry["table"][-1]["resolved_gap"] == pytest.approx(0.2)
    assert not entry["decreasing"]


def test_limit_constants_use_disc_image_intensity():
    cfg = make_config()
    params = cfg.params(1.5, 256)
    out = limit_constants(cfg, 1.5)
    assert out["intensity"] == params.disc_beta
    assert out["ext_constant"] == ext_expectation_constant(params, intensity=params.disc_beta)
    band = limit_constants(make_config(process="band"), 1.5)
    assert band["intensity"] == params.beta


def variance_rows(alpha, ns, spread):
    rows = []
    for n in ns:
        s = math.sqrt(spread(n))
        for k in range(200):
            rows.append(synthetic_row(alpha, n, k, s_iso=100.0 + (s if k % 2 else -s)))
    return rows


def test_variance_scaling_recovers_slope():
    ns = [1000.0, 2000.0, 4000.0, 8000.0]
    cfg = make_config(alpha_list=[0.75], n_grid=ns, replicates=200, statistics=["iso"])
    (entry,) = variance_scaling(variance_rows(0.75, ns, lambda n: n**1.5), cfg)
    assert entry["slope"] == pytest.approx(1.5, rel=1e-9)
    assert entry["expected_slope"] == pytest.approx(1.5)


def test_variance_scaling_nlogn_ratios():
    ns = [1000.0, 2000.0, 4000.0, 8000.0]
    cfg = make_config(alpha_list=[1.0], n_grid=ns, replicates=200, statistics=["iso"])
    (entry,) = variance_scaling(variance_rows(1.0, ns, lambda n: n * math.log(n)), cfg)
    assert entry["nlogn_spread"] == pytest.approx(1.0, rel=1e-9)


def test_variance_scaling_preconditions():
    with pytest.raises(PreconditionError):
        variance_scaling([], make_config(n_grid=[1000, 2000, 4000]))
    with pytest.raises(PreconditionError):
        variance_scaling([], make_config(n_grid=[1000, 2000, 4000, 8000], replicates=10))


def test_conditional_variance_ratio():
    cfg = make_config(
        alpha_list=[0.75],
        n_grid=[1000, 4000],
        conditioning={"kind": "NoPointsAbove", "height": "h1"},
    )
    rows = []
    for n, kept in ((1000.0, (10, 12)), (4000.0, (10, 11))):
        top = cfg.params(0.75, n).R
        for k in range(100):
            if k % 2:
                rows.append(synthetic_row(0.75, n, k, s_iso=kept[(k // 2) % 2], max_y=0.0))
            else:
                rows.append(synthetic_row(0.75, n, k, s_iso=(0, 40)[(k // 2) % 2], max_y=top))
    (entry,) = conditional_variance(rows, cfg)
    assert entry["collapse_regime"]
    assert entry["decreasing"]
    first = entry["table"][0]
    assert first["acceptance"] == pytest.approx(0.5)
    assert first["height"] == pytest.approx(h1_height(cfg.params(0.75, 1000)))
    assert 0.0 < first["expected_acceptance"] <= 1.0
    assert 0.0 < first["ratio"] < 1.0
    with pytest.raises(PreconditionError):
        conditional_variance(rows, make_config(alpha_list=[0.75], n_grid=[1000, 4000]))


def test_degree_law_section():
    cfg = make_config(degree={"n": 2000, "replicates": 1})
    (entry,) = degree_law(cfg)
    assert entry["mean_degree"] > 0
    assert entry["slope_target"] == -3.0
    assert entry["relative_gap"] < 0.5


def test_stabilization_tail_section():
    cfg = make_config(
        stabilization={"n_grid": [1000, 2000], "y_bins": [0.0, 1.0, 2.0], "t_grid": [0.5, 1.0, 2.0], "min_hits": 5}
    )
    (entry,) = stabilization_tail(cfg)
    assert [t["n"] for t in entry["table"]] == [1000.0, 2000.0]
    assert all(t["constant"] >= 0 for t in entry["table"])
    assert all(t["points"] > 0 for t in entry["table"])


def test_build_report_records_skipped_sections():
    cfg = make_config()
    rows = ExperimentRunner(cfg, threads=1).run_counts()
    report = build_report(cfg, rows)
    assert set(report.skipped) == {"expectation", "variance"}
    assert report.normality is not None
    assert all(m.mean is None for m in report.moments)
    assert report.to_dict()["config"]["name"] == "experiment"


# --------------------------------------------------------------------------
# pipeline


def write_toml(path, name="tiny"):
    path.write_text(
        "\n".join(
            [
                f'name = "{name}"',
                "alpha_list = [1.5]",
                "nu = 1.0",
                "n_grid = [256]",
                "replicates = 3",
                "master_seed = 5",
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    return path


def test_run_pipeline_writes_outputs(tmp_path):
    cfg_path = write_toml(tmp_path / "tiny.toml")
    out_dir = tmp_path / "out"
    assert run_pipeline(str(cfg_path), str(out_dir)) == EXIT_OK
    counts = out_dir / "tiny_counts.csv"
    report = out_dir / "tiny_report.json"
    assert len(read_counts_csv(counts)) == 3
    data = json.loads(report.read_text(encoding="utf-8"))
    assert "expectation" in data["skipped"]

    rebuilt = run_report_only(str(cfg_path), str(counts), str(tmp_path / "again.json"))
    assert rebuilt.to_dict() == build_report(load_experiment_config(cfg_path), read_counts_csv(counts)).to_dict()


def test_run_pipeline_exit_codes(tmp_path):
    assert run_pipeline(str(tmp_path / "missing.toml"), str(tmp_path / "out")) == EXIT_IO
    bad = tmp_path / "bad.toml"
    bad.write_text('name = "bad"\nnu = 1.0\n', encoding="utf-8")
    assert run_pipeline(str(bad), str(tmp_path / "out")) == EXIT_USAGE


def test_run_pipeline_internal_failure_is_exit_1(tmp_path, monkeypatch):
    class BrokenRunner:
        def __init__(self, config, threads=None):
            pass

        def run_counts(self, partial_path=None):
            raise RuntimeError("worker crashed")

    monkeypatch.setattr(pipeline, "ExperimentRunner", BrokenRunner)
    cfg_path = write_toml(tmp_path / "tiny.toml")
    assert run_pipeline(str(cfg_path), str(tmp_path / "out")) == pipeline.EXIT_PARTIAL


def test_run_pipeline_quiet_prints_nothing(tmp_path, capsys):
    cfg_path = write_toml(tmp_path / "tiny.toml")
    assert run_pipeline(str(cfg_path), str(tmp_path / "loud")) == EXIT_OK
    assert "PROCESS SUMMARY" in capsys.readouterr().out
    assert run_pipeline(str(cfg_path), str(tmp_path / "quiet"), quiet=True) == EXIT_OK
    assert capsys.readouterr().out == ""


def test_report_json_has_no_nan_tokens(tmp_path):
    report = ExperimentReport(
        config={"name": "x"},
        expectation=[{"ratio": float("nan"), "slope": np.float64(np.inf), "values": np.array([1.0, np.nan])}],
    )
    path = tmp_path / "r.json"
    write_report(report, path)
    text = path.read_text(encoding="utf-8")
    assert "NaN" not in text and "Infinity" not in text
    (entry,) = json.loads(text)["expectation"]
    assert entry == {"ratio": None, "slope": None, "values": [1.0, None]}


def test_config_is_immutable():
    cfg = make_config()
    assert replace(cfg, name="other").name == "other"
    with pytest.raises(AttributeError):
        cfg.name = "x"


def main():
    return pytest.main([__file__, "-q"])


if __name__ == "__main__":
    sys.exit(main())
