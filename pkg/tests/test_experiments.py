import math

import numpy as np
import pytest

from psdk.exceptions import ConfigError, InsufficientPointsError
from psdk.experiments import (
    CSV_HEADER,
    ExperimentConfig,
    RunRecord,
    default_config,
    load_config,
    parse_config_file,
    render_csv,
    run_dpca,
    run_extrinsic,
    run_intrinsic,
    run_perturb_order,
    run_selftest,
    slope_fit,
    summarize_records,
)
from psdk.models import derive_stream_id

# ---------------------------------------------------------------------------
# slope fitting


def test_slope_fit_recovers_power_law():
    points = [(x, 3.0 * x**-0.5) for x in (1.0, 2.0, 4.0, 8.0)]
    slope, intercept, r2 = slope_fit(points)
    assert abs(slope - (-0.5)) < 1e-12
    assert abs(intercept - math.log(3.0)) < 1e-12
    assert abs(r2 - 1.0) < 1e-12


def test_slope_fit_drops_nonpositive_pairs():
    points = [(1.0, 2.0), (2.0, 4.0), (4.0, 8.0), (8.0, 0.0), (-1.0, 5.0)]
    fit = slope_fit(points)
    assert fit.n_points == 3
    assert abs(fit.slope - 1.0) < 1e-12


def test_slope_fit_insufficient_points():
    with pytest.raises(InsufficientPointsError):
        slope_fit([])
    with pytest.raises(InsufficientPointsError):
        slope_fit([(1.0, 1.0)])
    with pytest.raises(InsufficientPointsError):
        slope_fit([(1.0, 1.0), (1.0, 2.0)])  # same x
    with pytest.raises(InsufficientPointsError):
        slope_fit([(1.0, -1.0), (2.0, -2.0)])


# ---------------------------------------------------------------------------
# CSV output


def test_csv_header_is_frozen():
    assert CSV_HEADER == (
        "experiment,method,p,K,M,n,sigma_sq,repetition,seed,error,wall_time_ms"
    )
    assert render_csv([]).split("\n")[0] == CSV_HEADER


def test_csv_floats_roundtrip():
    rec = RunRecord("dpca", "lrc", 10, 2, 5, 100, 1.0 / 3.0, 0, 42, 1e-300)
    text = render_csv([rec])
    line = text.split("\n")[1]
    cells = line.split(",")
    assert cells[6] == "0.33333333333333331"
    assert float(cells[9]) == 1e-300
    assert cells[10] == "0"


def test_csv_newlines():
    rec = RunRecord("dpca", "lrc", 10, 2, 5, 100, 0.0, 0, 42, 0.5)
    text = render_csv([rec])
    assert "\r" not in text
    assert text.endswith("\n")
    assert text.count("\n") == 2


# ---------------------------------------------------------------------------
# configuration


def test_default_configs_validate():
    for experiment in ("intrinsic_avg", "dpca", "extrinsic_avg", "perturb_order"):
        default_config(experiment).validate()
        default_config(experiment, quick=True).validate()


def test_parse_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# a comment\n"
        "\n"
        "p = 40  # trailing comment\n"
        "M_grid = 10, 20,30\n"
        "sigma_sq = 0.25\n"
    )
    values = parse_config_file(path)
    assert values == {"p": "40", "M_grid": "10, 20,30", "sigma_sq": "0.25"}


def test_load_config_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("p = 40\nrepetitions = 5\n")
    cfg = load_config("intrinsic_avg", path=path, quick=True,
                      overrides={"master_seed": 9, "output_path": None})
    assert cfg.p == 40              # file beats default
    assert cfg.repetitions == 5
    assert cfg.master_seed == 9     # override beats file
    assert cfg.output_path == ""    # None overrides are skipped
    assert cfg.p_grid == (50,)      # untouched quick default


def test_load_config_experiment_mismatch_warns(tmp_path, capsys):
    path = tmp_path / "run.cfg"
    path.write_text("experiment = dpca\n")
    cfg = load_config("intrinsic_avg", path=path, quick=True)
    assert cfg.experiment == "intrinsic_avg"
    assert "command line selects" in capsys.readouterr().err


def test_load_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("granularity = 3\n")
    with pytest.raises(ConfigError, match="unknown config key"):
        load_config("intrinsic_avg", path=path, quick=True)


def test_load_config_rejects_bad_value(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("p = many\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        load_config("intrinsic_avg", path=path, quick=True)


def test_load_config_rejects_malformed_line(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("p 40\n")
    with pytest.raises(ConfigError, match="expected 'key = value'"):
        load_config("intrinsic_avg", path=path, quick=True)


def test_config_validation_errors():
    base = dict(p=10, K=2, M_grid=(3,), repetitions=2)
    cases = [
        dict(experiment="mystery"),
        dict(experiment="intrinsic_avg", **{**base, "K": 11}),
        dict(experiment="intrinsic_avg", **{**base, "sigma_sq": -1.0}),
        dict(experiment="intrinsic_avg", **{**base, "repetitions": 0}),
        dict(experiment="intrinsic_avg", **{**base, "master_seed": -1}),
        dict(experiment="intrinsic_avg", **{**base, "threads": 0}),
        dict(experiment="intrinsic_avg", **{**base, "index_mode": "psychic"}),
        dict(experiment="intrinsic_avg", **{**base, "index_mode": "find_index_machine1"}),
        dict(experiment="intrinsic_avg", **{**base, "M_grid": (0,)}),
        dict(experiment="intrinsic_avg", **{**base, "p_grid": (1,)}),
        dict(experiment="intrinsic_avg", **{**base, "M_grid": ()}),
        dict(experiment="dpca", **base),  # no n_grid
        dict(experiment="extrinsic_avg", p=10, K=2, repetitions=2),
        dict(experiment="extrinsic_avg", p=10, K=2, repetitions=2,
             sigma_grid=(-0.1,)),
        dict(experiment="extrinsic_avg", p=10, K=2, repetitions=2,
             sigma_grid=(0.1,), n_inner=0),
        dict(experiment="perturb_order", p=10, K=2, repetitions=2,
             eps_grid=(1e-2, 1e-3)),
        dict(experiment="perturb_order", p=10, K=2, repetitions=2,
             eps_grid=(1e-2, 1e-3, 1e-4, 0.0)),
        dict(experiment="perturb_order", p=10, K=1, repetitions=2),
    ]
    for kwargs in cases:
        with pytest.raises(ConfigError):
            ExperimentConfig(**kwargs).validate()


def test_runner_rejects_foreign_config():
    cfg = default_config("dpca", quick=True)
    with pytest.raises(ConfigError, match="not intrinsic_avg"):
        run_intrinsic(cfg)


# ---------------------------------------------------------------------------
# intrinsic averaging runner


def _tiny_intrinsic(**kwargs):
    base = dict(
        experiment="intrinsic_avg", p=12, K=2, sigma_sq=1.0, p_grid=(12,),
        M_grid=(3, 6), repetitions=4, master_seed=5,
    )
    base.update(kwargs)
    return ExperimentConfig(**base).validate()


def test_run_intrinsic_shape_and_methods():
    records = run_intrinsic(_tiny_intrinsic())
    assert len(records) == 1 * 2 * 4 * 2
    assert {r.method for r in records} == {"karcher", "euclid"}
    assert all(r.experiment == "intrinsic_avg" for r in records)
    assert all(r.n == 0 for r in records)
    assert all(r.error >= 0 for r in records)


def test_run_intrinsic_zero_noise_recovers_signal():
    records = run_intrinsic(_tiny_intrinsic(sigma_sq=0.0))
    assert max(r.error for r in records) < 1e-8


def test_run_intrinsic_thread_count_invisible():
    a = render_csv(run_intrinsic(_tiny_intrinsic()))
    b = render_csv(run_intrinsic(_tiny_intrinsic(threads=3)))
    assert a == b


def test_run_intrinsic_error_grows_with_p_shrinks_with_m():
    cfg = ExperimentConfig(
        experiment="intrinsic_avg", p=20, K=3, sigma_sq=1.0, p_grid=(20, 40),
        M_grid=(10, 40), repetitions=10, master_seed=1,
    ).validate()
    records = run_intrinsic(cfg)
    med = {}
    for p in (20, 40):
        for m in (10, 40):
            errs = [r.error for r in records
                    if r.method == "karcher" and r.p == p and r.M == m]
            med[(p, m)] = np.median(errs)
    assert med[(20, 40)] < med[(20, 10)]
    assert med[(40, 40)] < med[(40, 10)]
    assert med[(40, 10)] > med[(20, 10)]
    assert med[(40, 40)] > med[(20, 40)]


def test_run_intrinsic_supports_oracle_rows():
    records = run_intrinsic(_tiny_intrinsic(index_mode="find_index_oracle"))
    assert len(records) == 16
    assert all(np.isfinite(r.error) and r.error >= 0 for r in records)


# ---------------------------------------------------------------------------
# distributed PCA runner


def _tiny_dpca(**kwargs):
    base = dict(
        experiment="dpca", p=12, K=2, sigma_sq=0.0, M_grid=(3,), n_grid=(60, 120),
        repetitions=3, master_seed=11, index_mode="canonical",
    )
    base.update(kwargs)
    return ExperimentConfig(**base).validate()


def test_run_dpca_shape_and_methods():
    records = run_dpca(_tiny_dpca())
    assert len(records) == 2 * 3 * 4
    assert {r.method for r in records} == {"full", "lrc", "fan", "bw"}
    assert all(0 <= r.error <= 2.0 for r in records)


def test_run_dpca_seed_column_is_stream_id():
    records = run_dpca(_tiny_dpca())
    for rec in records:
        gi = {60: 0, 120: 1}[rec.n]
        assert rec.seed == derive_stream_id(2, gi, rec.repetition, 0)


def test_run_dpca_index_modes():
    for mode in ("canonical", "find_index_oracle", "find_index_machine1"):
        records = run_dpca(_tiny_dpca(index_mode=mode))
        assert {r.method for r in records} == {"full", "lrc", "fan", "bw"}


def test_run_dpca_thread_count_invisible():
    a = render_csv(run_dpca(_tiny_dpca(index_mode="find_index_machine1")))
    b = render_csv(run_dpca(_tiny_dpca(index_mode="find_index_machine1", threads=4)))
    assert a == b


# ---------------------------------------------------------------------------
# extrinsic averaging runner


def _tiny_extrinsic(**kwargs):
    base = dict(
        experiment="extrinsic_avg", p=10, K=2, sigma_sq=0.2, M_grid=(3,),
        sigma_grid=(0.0, 0.4), M_fixed=4, n_inner=80, repetitions=3,
        master_seed=2,
    )
    base.update(kwargs)
    return ExperimentConfig(**base).validate()


def test_run_extrinsic_shape():
    records = run_extrinsic(_tiny_extrinsic())
    # grid: one M sweep point + two sigma sweep points, 2 methods each
    assert len(records) == 3 * 3 * 2
    assert {r.method for r in records} == {"karcher", "euclid"}
    assert all(r.n == 80 for r in records)
    grid = {(r.M, r.sigma_sq) for r in records}
    assert grid == {(3, 0.2), (4, 0.0), (4, 0.4)}


def test_run_extrinsic_thread_count_invisible():
    a = render_csv(run_extrinsic(_tiny_extrinsic()))
    b = render_csv(run_extrinsic(_tiny_extrinsic(threads=3)))
    assert a == b


# ---------------------------------------------------------------------------
# expansion-order runner


def _tiny_perturb(**kwargs):
    base = dict(experiment="perturb_order", p=10, K=4, repetitions=3,
                master_seed=3)
    base.update(kwargs)
    return ExperimentConfig(**base).validate()


def test_run_perturb_order_shape():
    cfg = _tiny_perturb()
    records = run_perturb_order(cfg)
    assert len(records) == 3 * len(cfg.eps_grid) * 3
    assert {r.method for r in records} == {"lq_rotation", "lq_factor",
                                           "karcher_factor"}
    # sigma_sq column carries the noise scale
    assert {r.sigma_sq for r in records} == set(cfg.eps_grid)


def test_run_perturb_order_remainders_are_quadratic():
    cfg = _tiny_perturb()
    records = run_perturb_order(cfg)
    for method in ("lq_rotation", "lq_factor", "karcher_factor"):
        for rep in range(cfg.repetitions):
            pts = [(r.sigma_sq, r.error) for r in records
                   if r.method == method and r.repetition == rep]
            fit = slope_fit(pts)
            assert 1.7 < fit.slope < 2.3, (method, rep, fit.slope)


# ---------------------------------------------------------------------------
# summaries and selftest


def test_summarize_records_mentions_methods_and_slopes():
    cfg = _tiny_dpca()
    text = summarize_records(cfg, run_dpca(cfg))
    for token in ("full", "lrc", "fan", "bw", "slope vs n"):
        assert token in text

    cfg = _tiny_intrinsic()
    text = summarize_records(cfg, run_intrinsic(cfg))
    assert "method=karcher" in text
    assert "method=euclid" in text

    cfg = _tiny_extrinsic()
    text = summarize_records(cfg, run_extrinsic(cfg))
    assert "karcher/euclid mean ratio" in text

    cfg = _tiny_perturb()
    text = summarize_records(cfg, run_perturb_order(cfg))
    assert "remainder slope" in text


def test_selftest_passes():
    ok, lines = run_selftest()
    assert ok, "\n".join(lines)
    assert len(lines) == 5
    assert all(line.startswith("ok - ") for line in lines)
