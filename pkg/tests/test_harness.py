import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq
from statsmodels.stats.proportion import proportion_confint

from fadingrelay import analysis, harness
from fadingrelay.binning import CodebookParams
from fadingrelay.channel import SystemParams
from fadingrelay.harness import (COLUMNS, ConfigError, ExperimentConfig, emit, read_records,
                                 resolve_plan, run_batch, sweep, sweep_points, wilson_interval)
from fadingrelay.scheme import Thresholds


def small_config(**overrides):
    data = {
        "params": {"a_sq": 1.5, "snr_base": 1.0, "N": 8, "eps": 0.5, "eps1": 0.5, "eps2": 0.5},
        "codebook": {"M_R": 2, "M_D": 2},
        "n_trials": 3000,
        "base_seed": 11,
    }
    data.update(overrides)
    return ExperimentConfig.from_dict(data)


# -- Wilson interval -----------------------------------------------------------

@given(st.integers(1, 10_000), st.data(), st.sampled_from([0.9, 0.95, 0.99]))
def test_wilson_matches_reference(n, data, conf):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson_interval(k, n, conf)
    ref = proportion_confint(k, n, alpha=1 - conf, method="wilson")
    assert (lo, hi) == pytest.approx(ref, abs=1e-12)
    assert 0 <= lo <= k / n <= hi <= 1
    assert hi > lo


def test_wilson_rejects_empty():
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


# -- config --------------------------------------------------------------------

def test_config_comments_and_unknown_keys():
    cfg = ExperimentConfig.from_dict({"_note": "x", "params": {"_c": 1, "a_sq": 2.0}})
    assert cfg.params.a_sq == 2.0
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"params": {"bogus": 1}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"codebook": {"M_R": 1, "M_D": 1, "M_X": 2}})


@pytest.mark.parametrize("data", [
    {"n_trials": 0}, {"base_seed": -1}, {"sampler": "x"}, {"confidence": 1.0},
    {"rate_reference": "x"}, {"sweep": {"codebook": [1]}}, {"sweep": {"a_sq": []}},
    {"workers": 0},
])
def test_config_validation(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_invalid_params_raise_value_error():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"params": {"theta": 2.0}})


def test_overrides():
    cfg = small_config()
    out = cfg.with_overrides({"params.a_sq": 3.0, "N": 16, "b_sq_gamma": 2.0,
                              "codebook.M_D": 4, "n_trials": 5})
    assert out.params.a_sq == 3.0 and out.params.N == 16
    assert out.params.b_sq_gamma == pytest.approx(2.0)
    assert out.codebook == CodebookParams(M_R=2, M_D=4)
    assert out.n_trials == 5
    assert cfg.params.a_sq == 1.5  # original untouched
    for key in ("nope", "params.nope", "sweep.x.y"):
        with pytest.raises(ConfigError):
            cfg.with_overrides({key: 1})


def test_config_dict_roundtrip():
    cfg = small_config(sweep={"N": [4, 8]})
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_resolve_plan_precedence():
    p = {"a_sq": 1.3, "snr_base": 2.0, "N": 4}
    cb, t, rate = resolve_plan(ExperimentConfig.from_dict(
        {"params": p, "codebook": {"M_R": 2, "M_D": 3}, "rate": 0.1}))
    assert cb == CodebookParams(M_R=2, M_D=3)
    assert rate == pytest.approx(math.log(6) / 4)
    params = SystemParams(**p)
    _, _, rate = resolve_plan(ExperimentConfig.from_dict({"params": p, "rate_fraction": 0.5}))
    assert rate == pytest.approx(0.5 * analysis.min_cut_rate(params))
    _, _, rate = resolve_plan(ExperimentConfig.from_dict(
        {"params": p, "rate_fraction": 0.5, "rate_reference": "chernoff", "rate": 9.0}))
    assert rate == pytest.approx(0.5 * analysis.chernoff_rate_limit(params))
    _, _, rate = resolve_plan(ExperimentConfig.from_dict({"params": p, "rate": 0.3}))
    assert rate == 0.3
    with pytest.raises(ConfigError):
        resolve_plan(ExperimentConfig.from_dict({"params": p}))


# -- batches -------------------------------------------------------------------

def test_batch_invariants():
    res = run_batch(small_config())
    assert sum(res.counts[t] for t in ("none", "e11", "e12", "e2")) == res.n_trials
    assert 0 <= res.p_e_hat <= 1 and res.ci_halfwidth > 0
    assert res.ci_low <= res.p_e_hat <= res.ci_high
    params = small_config().params
    assert res.exact == analysis.exact_end_to_end(params, res.codebook, res.thresholds)
    assert res.thresholds == Thresholds.from_params(params)
    e, n = res.stage_frequency("e11")
    assert n == res.n_trials and e == res.counts["relay_fail"]
    with pytest.raises(ValueError):
        res.stage_frequency("e3")


def test_single_trial_batch():
    res = run_batch(small_config(n_trials=1))
    assert res.n_trials == 1 and res.ci_halfwidth > 0


def test_batch_determinism():
    a, b = run_batch(small_config()), run_batch(small_config())
    assert a.counts == b.counts and a.p_e_hat == b.p_e_hat
    c = run_batch(small_config(base_seed=12))
    assert c.counts != a.counts


def test_streams_differ():
    cfg = small_config()
    assert run_batch(cfg, stream=0).counts != run_batch(cfg, stream=1).counts


def test_parallel_matches_serial():
    cfg = small_config(n_trials=5000)
    serial = run_batch(cfg)
    parallel = run_batch(dataclasses.replace(cfg, workers=3))
    assert serial.counts == parallel.counts


def test_sub_block_chunking(monkeypatch):
    # a tiny element budget splits every block into many chunks
    monkeypatch.setattr(harness, "ELEMENT_BUDGET", 50)
    cfg = small_config(n_trials=2500)
    a, b = run_batch(cfg), run_batch(cfg)
    assert a.counts == b.counts
    assert sum(a.counts[t] for t in ("none", "e11", "e12", "e2")) == 2500
    assert a.ci_low <= a.exact.p_e_total <= a.ci_high


@pytest.mark.parametrize("sampler", ["correlation", "energy"])
def test_batch_agrees_with_oracle(sampler):
    res = run_batch(small_config(n_trials=20_000, sampler=sampler, confidence=0.999))
    assert res.ci_low <= res.exact.p_e_total <= res.ci_high
    for stage in ("e11", "e12", "e2"):
        k, n = res.stage_frequency(stage)
        lo, hi = wilson_interval(k, n, 0.999)
        assert lo <= getattr(res.exact, f"p_{stage}") <= hi


def test_zero_snr_batch():
    cfg = small_config(params={"snr_base": 1e-9, "N": 8}, n_trials=5000)
    res = run_batch(cfg)
    assert res.exact.p_e_total > 0.9
    assert res.ci_low <= res.exact.p_e_total <= res.ci_high


def test_wilson_coverage_over_repeated_batches():
    # 10^4-trial batches at a configuration with exact P_e = 0.05
    base = {"a_sq": 1.5, "N": 16, "eps": 0.5, "eps1": 0.5, "eps2": 0.5}
    cb = CodebookParams(M_R=2, M_D=2)

    def pe(snr):
        p = SystemParams(snr_base=snr, **base)
        return analysis.exact_end_to_end(p, cb, Thresholds.from_params(p)).p_e_total

    snr = brentq(lambda s: pe(s) - 0.05, 0.5, 50.0, xtol=1e-12)
    assert pe(snr) == pytest.approx(0.05, abs=1e-9)
    cfg = ExperimentConfig.from_dict({
        "params": dict(base, snr_base=snr), "codebook": {"M_R": 2, "M_D": 2},
        "n_trials": 10_000, "sampler": "energy", "base_seed": 2024,
    })
    hits = 0
    runs = 100
    for stream in range(runs):
        res = run_batch(cfg, stream=stream)
        hits += res.ci_low <= 0.05 <= res.ci_high
    assert hits >= 93


# -- records and sweeps --------------------------------------------------------

def test_sweep_points_product():
    cfg = small_config(sweep={"N": [4, 8], "a_sq": [1.2, 2.0, 3.0]})
    pts = sweep_points(cfg)
    assert len(pts) == 6
    assert pts[0][1] == {"N": 4, "a_sq": 1.2} and pts[-1][1] == {"N": 8, "a_sq": 3.0}
    with pytest.raises(ConfigError):
        sweep_points(small_config())


def test_sweep_points_with_explicit_points():
    cfg = small_config(points=[{"N": 4}, {"N": 8}], sweep={"a_sq": [1.2, 2.0]})
    labels = [label for label, _ in sweep_points(cfg)]
    assert labels == ["p0;N=4;a_sq=1.2", "p0;N=4;a_sq=2.0", "p1;N=8;a_sq=1.2", "p1;N=8;a_sq=2.0"]


def test_sweep_records_failures_and_continues():
    cfg = small_config(n_trials=200, sweep={"theta": [0.5, 2.0, 1.0]})
    seen = []
    recs = sweep(cfg, on_point=lambda i, n, r: seen.append((i, n)))
    assert [r.status for r in recs] == ["ok", "error", "ok"]
    assert "theta" in recs[1].error
    assert seen == [(0, 3), (1, 3), (2, 3)]


def test_sweep_planning_failure_is_recorded():
    cfg = ExperimentConfig.from_dict({
        "params": {"a_sq": 1.5, "snr_base": 4.0, "N": 64}, "n_trials": 10,
        "max_codebook": 1 << 10, "sweep": {"rate_fraction": [0.01, 0.9]},
    })
    recs = sweep(cfg)
    assert recs[0].status == "ok"
    assert recs[1].status == "error" and "ResourceError" in recs[1].error
    # analytic columns survive a failed batch
    assert recs[1].min_cut == pytest.approx(analysis.min_cut_rate(cfg.params))


def test_rate_fraction_axis_shows_clamp():
    cfg = ExperimentConfig.from_dict({
        "params": {"a_sq": 1.3, "snr_base": 2.0, "N": 16, "eps": 0.8, "eps1": 0.5, "eps2": 0.4},
        "rate_reference": "chernoff", "n_trials": 50, "sampler": "energy",
        "sweep": {"rate_fraction": [0.5, 0.9, 1.3, 2.0]},
    })
    recs = sweep(cfg)
    assert [r.bound_clamped for r in recs] == [False, False, True, True]


def test_record_contents():
    rec = harness.make_record(small_config(n_trials=500), "x")
    assert rec.status == "ok" and rec.point == "x"
    assert rec.M_S == 4 and rec.count_none + rec.count_e11 + rec.count_e12 + rec.count_e2 == 500
    assert rec.b_sq_gamma == 1.0 and rec.regime == analysis.RELAY_LIMITED_BY_SR
    assert rec.rate == pytest.approx(math.log(4) / 8)


def _records():
    recs = sweep(small_config(n_trials=300, sweep={"a_sq": [0.5, 1.5]}))
    recs.append(harness._failed_record("bad", ValueError("boom")))
    return recs


def test_emit_jsonl_roundtrip(tmp_path):
    recs = _records()
    path = tmp_path / "out.jsonl"
    emit(recs, "jsonl", path)
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    assert all(json.loads(line)["schema_version"] == harness.SCHEMA_VERSION for line in lines)
    assert read_records(path, "jsonl") == recs


def test_emit_csv_roundtrip(tmp_path):
    recs = _records()
    path = tmp_path / "out.csv"
    emit(recs, "csv", path)
    rows = path.read_text().splitlines()
    assert rows[0].split(",") == list(COLUMNS)
    assert len({len(r.split(",")) for r in rows}) == 1
    back = read_records(path, "csv")
    assert back == [dataclasses.replace(r, wall_time=None) for r in recs]


def test_emit_empty_csv(tmp_path):
    path = tmp_path / "empty.csv"
    emit([], "csv", path)
    assert path.read_text() == ",".join(COLUMNS) + "\n"
    emit([], "jsonl", tmp_path / "empty.jsonl")
    assert (tmp_path / "empty.jsonl").read_text() == ""


def test_emit_precision(tmp_path):
    rec = harness._failed_record("p", ValueError("x"))
    rec.a_sq = 0.1 + 0.2
    emit([rec], "csv", tmp_path / "a.csv")
    assert "0.30000000000000004" in (tmp_path / "a.csv").read_text()
    assert read_records(tmp_path / "a.csv", "csv")[0].a_sq == 0.1 + 0.2


def test_emit_errors(tmp_path):
    with pytest.raises(ValueError):
        emit([], "xml", tmp_path / "a.xml")
    with pytest.raises(OSError, match="missing"):
        emit([], "csv", tmp_path / "missing" / "a.csv")


@settings(max_examples=30, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False), st.integers(-2**62, 2**62),
       st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=20))
def test_jsonl_roundtrip_values(tmp_path_factory, x, k, text):
    rec = harness._failed_record(text, ValueError("v"))
    rec.snr_base, rec.N, rec.regime = x, k, text
    path = tmp_path_factory.mktemp("r") / "r.jsonl"
    emit([rec], "jsonl", path)
    assert read_records(path, "jsonl") == [rec]
