"""Seeded Monte Carlo batches, parameter sweeps and record emission.

Seeding: trials are split into fixed blocks of ``BLOCK_SIZE`` in index
order. Block ``b`` of sweep point ``p`` draws from
``default_rng(SeedSequence(base_seed, spawn_key=(p, b)))``, so a block's
trials are the same whichever process runs it and in whatever order;
aggregation is a sum of counts. A block is processed in chunks of at most
``ELEMENT_BUDGET`` correlator outputs; each chunk draws its uniform messages
first, then its channel blocks.
"""
from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from scipy.stats import norm

from . import analysis
from .binning import CodebookParams
from .channel import SystemParams, peak_snr
from .scheme import ERROR_TYPES, SAMPLERS, Thresholds, run_trials

BLOCK_SIZE = 1024
# Upper bound on correlator outputs (or statistics) held in memory at once.
ELEMENT_BUDGET = 1 << 22
SCHEMA_VERSION = 1
RATE_REFERENCES = ("min_cut", "chernoff")
SWEEPABLE = frozenset({"a_sq", "b_sq", "gamma", "snr_base", "T_s", "T_d", "T_c", "theta",
                       "N", "eps", "eps1", "eps2", "n_paths", "b_sq_gamma",
                       "rate", "rate_fraction", "n_trials"})


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment, or a grid of them when ``sweep``/``points`` are set.

    The codebook comes from, in order of precedence: an explicit
    ``codebook``; ``rate_fraction`` times the ``rate_reference`` rate
    (``"min_cut"`` or the ``"chernoff"`` rate condition); a target ``rate``
    in nats/s.
    """

    params: SystemParams = field(default_factory=SystemParams)
    codebook: CodebookParams | None = None
    rate: float | None = None
    rate_fraction: float | None = None
    rate_reference: str = "min_cut"
    n_trials: int = 1000
    base_seed: int = 0
    sampler: str = "correlation"
    confidence: float = 0.95
    max_codebook: int = 1 << 20
    workers: int = 1
    sweep: dict = field(default_factory=dict)
    points: list = field(default_factory=list)

    def __post_init__(self):
        if isinstance(self.n_trials, bool) or not isinstance(self.n_trials, int) or self.n_trials < 1:
            raise ConfigError(f"n_trials must be a positive integer, got {self.n_trials!r}")
        if not isinstance(self.base_seed, int) or not 0 <= self.base_seed < 2 ** 64:
            raise ConfigError(f"base_seed must be a 64-bit unsigned integer, got {self.base_seed!r}")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        if self.rate_reference not in RATE_REFERENCES:
            raise ConfigError(f"rate_reference must be one of {RATE_REFERENCES}")
        if not 0 < self.confidence < 1:
            raise ConfigError(f"confidence must lie in (0, 1), got {self.confidence!r}")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError(f"workers must be a positive integer, got {self.workers!r}")
        for name, values in self.sweep.items():
            if name not in SWEEPABLE:
                raise ConfigError(f"cannot sweep {name!r}; sweepable: {sorted(SWEEPABLE)}")
            if not isinstance(values, list) or not values:
                raise ConfigError(f"sweep axis {name!r} needs a non-empty list of values")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        """Build from parsed JSON. Keys starting with ``_`` are comments."""
        data = {k: v for k, v in data.items() if not k.startswith("_")}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        try:
            params = {k: v for k, v in data.get("params", {}).items() if not k.startswith("_")}
            bad = set(params) - set(SystemParams.field_names())
            if bad:
                raise ConfigError(f"unknown params keys: {sorted(bad)}")
            kwargs["params"] = SystemParams(**params)
            if data.get("codebook") is not None:
                cb = {k: v for k, v in data["codebook"].items() if not k.startswith("_")}
                if set(cb) - {"M_R", "M_D"}:
                    raise ConfigError(f"unknown codebook keys: {sorted(set(cb) - {'M_R', 'M_D'})}")
                kwargs["codebook"] = CodebookParams(**cb)
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["params"] = self.params.as_dict()
        return out

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        """Apply ``{key: value}`` overrides; keys may be dotted (``params.a_sq``)
        or bare sweepable names (``a_sq``, ``b_sq_gamma``, ``rate_fraction``)."""
        data = self.to_dict()
        for key, value in overrides.items():
            _set_key(data, key, value)
        return ExperimentConfig.from_dict(data)


def _set_key(data: dict, key: str, value) -> None:
    param_names = set(SystemParams.field_names())
    if key == "b_sq_gamma":
        b_sq = data["params"]["b_sq"]
        if not b_sq > 0:
            raise ConfigError("b_sq_gamma needs a positive b_sq")
        data["params"]["gamma"] = value / b_sq
        return
    if key in param_names:
        data["params"][key] = value
        return
    parts = key.split(".")
    target = data
    for part in parts[:-1]:
        if not isinstance(target.get(part), dict):
            if part == "codebook" and target.get(part) is None:
                target[part] = {}
            else:
                raise ConfigError(f"unknown config key {key!r}")
        target = target[part]
    leaf = parts[-1]
    if target is data and leaf not in data:
        raise ConfigError(f"unknown config key {key!r}")
    target[leaf] = value


def resolve_plan(config: ExperimentConfig) -> tuple[CodebookParams, Thresholds, float]:
    """Codebook, thresholds and target rate (nats/s) for a single-point config."""
    params = config.params
    thresholds = Thresholds.from_params(params)
    if config.codebook is not None:
        R_1, R_2 = analysis.achieved_rates(config.codebook, params)
        return config.codebook, thresholds, R_1 + R_2
    if config.rate_fraction is not None:
        if config.rate_reference == "chernoff":
            reference = analysis.chernoff_rate_limit(params, thresholds)
            allow_above = True
        else:
            reference = analysis.min_cut_rate(params)
            allow_above = False
        rate = config.rate_fraction * reference
    elif config.rate is not None:
        rate, allow_above = config.rate, False
    else:
        raise ConfigError("config needs a codebook, a rate or a rate_fraction")
    plan = analysis.plan_codebook(params, rate, max_codebook=config.max_codebook,
                                  allow_above_min_cut=allow_above)
    return plan.codebook, plan.thresholds, rate


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("need at least one trial")
    z = norm.ppf(0.5 + confidence / 2)
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return lo, hi


# -- batches -------------------------------------------------------------------

COUNT_KEYS = ("none", "e11", "e12", "e2", "relay_fail", "relay_ok", "bin_fail_relay_ok",
              "bin_ok", "within_fail_bin_ok")


def _block_counts(args) -> dict[str, int]:
    params, cb, thresholds, sampler, base_seed, stream, block, n = args
    rng = np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(stream, block)))
    per_trial = (2 * cb.M_S + cb.M_R) * (params.N if sampler == "correlation" else 1)
    chunk = max(1, ELEMENT_BUDGET // per_trial)
    counts = dict.fromkeys(COUNT_KEYS, 0)
    done = 0
    while done < n:
        size = min(chunk, n - done)
        messages = rng.integers(0, cb.M_S, size=size)
        out = run_trials(messages, params, cb, thresholds, rng, sampler)
        m1 = messages // cb.M_D
        codes = np.bincount(out.error_code, minlength=len(ERROR_TYPES))
        for tag, c in zip(ERROR_TYPES, codes):
            counts[tag] += int(c)
        relay_ok = out.relay == m1
        bin_ok = out.dest_bin == m1
        counts["relay_fail"] += int(size - relay_ok.sum())
        counts["relay_ok"] += int(relay_ok.sum())
        counts["bin_fail_relay_ok"] += int((relay_ok & ~bin_ok).sum())
        counts["bin_ok"] += int(bin_ok.sum())
        counts["within_fail_bin_ok"] += int((bin_ok & (out.dest_msg != messages)).sum())
        done += size
    return counts


@dataclass
class TrialBatchResult:
    n_trials: int
    counts: dict
    p_e_hat: float
    ci_low: float
    ci_high: float
    codebook: CodebookParams
    thresholds: Thresholds
    target_rate: float
    exact: analysis.ExactErrorReport
    bounds: analysis.ChernoffBounds
    confidence: float
    wall_time: float

    @property
    def ci_halfwidth(self) -> float:
        return (self.ci_high - self.ci_low) / 2

    def stage_frequency(self, stage: str) -> tuple[int, int]:
        """``(errors, trials)`` behind the empirical Pr{e11}, Pr{e12} or Pr{e2}.

        e11: relay misses the bin, over all trials. e12: destination misses
        the bin, over trials with a correct relay. e2: within-bin stage
        fails, over trials with a correct destination bin.
        """
        c = self.counts
        if stage == "e11":
            return c["relay_fail"], self.n_trials
        if stage == "e12":
            return c["bin_fail_relay_ok"], c["relay_ok"]
        if stage == "e2":
            return c["within_fail_bin_ok"], c["bin_ok"]
        raise ValueError(f"unknown stage {stage!r}")


def run_batch(config: ExperimentConfig, stream: int = 0) -> TrialBatchResult:
    """Run ``config.n_trials`` seeded trials and attach the analytic references."""
    start = time.perf_counter()
    cb, thresholds, rate = resolve_plan(config)
    params = config.params
    n_blocks = -(-config.n_trials // BLOCK_SIZE)
    jobs = [(params, cb, thresholds, config.sampler, config.base_seed, stream, b,
             min(BLOCK_SIZE, config.n_trials - b * BLOCK_SIZE)) for b in range(n_blocks)]
    if config.workers > 1 and n_blocks > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            partial = list(pool.map(_block_counts, jobs))
    else:
        partial = [_block_counts(job) for job in jobs]
    counts = dict.fromkeys(COUNT_KEYS, 0)
    for part in partial:
        for key, value in part.items():
            counts[key] += value
    errors = config.n_trials - counts["none"]
    lo, hi = wilson_interval(errors, config.n_trials, config.confidence)
    return TrialBatchResult(
        n_trials=config.n_trials,
        counts=counts,
        p_e_hat=errors / config.n_trials,
        ci_low=lo,
        ci_high=hi,
        codebook=cb,
        thresholds=thresholds,
        target_rate=rate,
        exact=analysis.exact_end_to_end(params, cb, thresholds),
        bounds=analysis.chernoff_error_bounds(params, cb, thresholds),
        confidence=config.confidence,
        wall_time=time.perf_counter() - start,
    )


# -- records -------------------------------------------------------------------

@dataclass
class SweepRecord:
    """One emitted row. Rates are in nats/s; ``None`` marks values that are
    unavailable for a failed point. ``wall_time`` is omitted from CSV."""

    point: str
    status: str
    error: str
    a_sq: float
    b_sq: float
    gamma: float
    b_sq_gamma: float
    snr_base: float
    T_s: float
    T_d: float
    T_c: float
    theta: float
    N: int
    eps: float
    eps1: float
    eps2: float
    peak_snr: float
    regime: str
    min_cut: float
    cutset_ub: float
    block_markov_lb: float
    capacity_known: bool
    R_1_edge: float
    R_2_edge: float
    chernoff_rate_limit: float | None = None
    M_R: int | None = None
    M_D: int | None = None
    M_S: int | None = None
    rate_target: float | None = None
    rate: float | None = None
    R_1: float | None = None
    R_2: float | None = None
    A_R: float | None = None
    B_R: float | None = None
    B_S: float | None = None
    sampler: str | None = None
    n_trials: int | None = None
    base_seed: int | None = None
    count_none: int | None = None
    count_e11: int | None = None
    count_e12: int | None = None
    count_e2: int | None = None
    count_relay_ok: int | None = None
    count_bin_fail_relay_ok: int | None = None
    count_bin_ok: int | None = None
    count_within_fail_bin_ok: int | None = None
    p_e_hat: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    ci_halfwidth: float | None = None
    freq_e11: float | None = None
    freq_e12: float | None = None
    freq_e2: float | None = None
    exact_p_e: float | None = None
    exact_p_e11: float | None = None
    exact_p_e12: float | None = None
    exact_p_e2: float | None = None
    bound_e11: float | None = None
    bound_e12: float | None = None
    bound_e2: float | None = None
    bound_total: float | None = None
    bound_clamped: bool | None = None
    wall_time: float | None = None


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(SweepRecord)}
COLUMNS = tuple(name for name in _FIELD_TYPES if name != "wall_time")


def _ratio(k: int, n: int):
    return k / n if n else None


def make_record(config: ExperimentConfig, point: str = "", stream: int = 0) -> SweepRecord:
    """Analytic values for ``config`` plus a Monte Carlo batch.

    Planning or simulation failures yield a record with ``status="error"``.
    """
    params = config.params
    report = analysis.rate_report(params)
    regime = analysis.classify_regime(params)
    rec = SweepRecord(
        point=point, status="ok", error="",
        **{k: getattr(params, k) for k in ("a_sq", "b_sq", "gamma", "snr_base", "T_s", "T_d",
                                           "T_c", "theta", "N", "eps", "eps1", "eps2")},
        b_sq_gamma=params.b_sq_gamma, peak_snr=peak_snr(params), regime=regime.tag,
        min_cut=report.min_cut, cutset_ub=report.cutset_ub,
        block_markov_lb=report.block_markov_lb, capacity_known=report.capacity_known,
        R_1_edge=regime.R_1, R_2_edge=regime.R_2,
    )
    try:
        rec.chernoff_rate_limit = analysis.chernoff_rate_limit(params)
        result = run_batch(config, stream)
    except (ValueError, ArithmeticError) as exc:
        rec.status, rec.error = "error", f"{type(exc).__name__}: {exc}"
        return rec
    cb = result.codebook
    R_1, R_2 = analysis.achieved_rates(cb, params)
    c = result.counts
    rec.M_R, rec.M_D, rec.M_S = cb.M_R, cb.M_D, cb.M_S
    rec.rate_target, rec.rate, rec.R_1, rec.R_2 = result.target_rate, R_1 + R_2, R_1, R_2
    rec.A_R, rec.B_R, rec.B_S = result.thresholds.A_R, result.thresholds.B_R, result.thresholds.B_S
    rec.sampler, rec.n_trials, rec.base_seed = config.sampler, config.n_trials, config.base_seed
    rec.count_none, rec.count_e11, rec.count_e12, rec.count_e2 = (c[t] for t in ERROR_TYPES)
    rec.count_relay_ok, rec.count_bin_fail_relay_ok = c["relay_ok"], c["bin_fail_relay_ok"]
    rec.count_bin_ok, rec.count_within_fail_bin_ok = c["bin_ok"], c["within_fail_bin_ok"]
    rec.p_e_hat, rec.ci_low, rec.ci_high = result.p_e_hat, result.ci_low, result.ci_high
    rec.ci_halfwidth = result.ci_halfwidth
    rec.freq_e11, rec.freq_e12, rec.freq_e2 = (_ratio(*result.stage_frequency(s))
                                               for s in ("e11", "e12", "e2"))
    ex = result.exact
    rec.exact_p_e, rec.exact_p_e11, rec.exact_p_e12, rec.exact_p_e2 = (
        ex.p_e_total, ex.p_e11, ex.p_e12, ex.p_e2)
    b = result.bounds
    rec.bound_e11, rec.bound_e12, rec.bound_e2 = b.e11.bound, b.e12.bound, b.e2.bound
    rec.bound_total, rec.bound_clamped = b.total, b.clamped
    rec.wall_time = result.wall_time
    return rec


def sweep_points(config: ExperimentConfig) -> list[tuple[str, dict]]:
    """Labelled overrides: each entry of ``points`` crossed with the
    Cartesian product of the ``sweep`` axes (in the order given)."""
    points = config.points or [{}]
    axes = list(config.sweep.items())
    if not config.points and not axes:
        raise ConfigError("sweep needs at least one axis or point")
    names = [name for name, _ in axes]
    out = []
    for i, base in enumerate(points):
        for combo in itertools.product(*(values for _, values in axes)):
            overrides = {k: v for k, v in base.items() if not k.startswith("_")}
            overrides.update(zip(names, combo))
            label = ";".join(f"{k}={_label(v)}" for k, v in overrides.items())
            if config.points:
                label = f"p{i}" + (";" + label if label else "")
            out.append((label, overrides))
    return out


def _label(value) -> str:
    if isinstance(value, dict):
        return "/".join(f"{k}:{v}" for k, v in value.items())
    return repr(value) if isinstance(value, float) else str(value)


def sweep(config: ExperimentConfig,
          on_point: Callable[[int, int, SweepRecord], None] | None = None) -> list[SweepRecord]:
    """One ``run_batch`` per grid point. A point that fails to configure or
    run becomes an error record; the sweep carries on."""
    base = dataclasses.replace(config, sweep={}, points=[])
    grid = sweep_points(config)
    records = []
    for index, (label, overrides) in enumerate(grid):
        try:
            point_config = base.with_overrides(overrides)
        except (ValueError, TypeError) as exc:
            rec = _failed_record(label, exc)
        else:
            rec = make_record(point_config, label, stream=index)
        records.append(rec)
        if on_point is not None:
            on_point(index, len(grid), rec)
    return records


def _failed_record(label: str, exc: Exception) -> SweepRecord:
    values = {name: None for name in _FIELD_TYPES}
    values.update(point=label, status="error", error=f"{type(exc).__name__}: {exc}", regime="")
    return SweepRecord(**values)


# -- emission ------------------------------------------------------------------

def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _json_value(value) -> str:
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return json.dumps(value)


def emit(records: Iterable[SweepRecord], fmt: str, path) -> None:
    """Write records as CSV (header + ``COLUMNS``) or JSON lines.

    Floats carry 17 significant digits. JSON lines add ``schema_version``
    and ``wall_time``.
    """
    path = Path(path)
    records = list(records)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            if fmt == "csv":
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(COLUMNS)
                for rec in records:
                    writer.writerow([_format(getattr(rec, c)) for c in COLUMNS])
            elif fmt == "jsonl":
                for rec in records:
                    items = [f'"schema_version": {SCHEMA_VERSION}']
                    items += [f"{json.dumps(name)}: {_json_value(getattr(rec, name))}"
                              for name in _FIELD_TYPES]
                    fh.write("{" + ", ".join(items) + "}\n")
            else:
                raise ValueError(f"unknown format {fmt!r}; use 'csv' or 'jsonl'")
    except OSError as exc:
        raise OSError(f"cannot write records to {path}: {exc.strerror or exc}") from exc


def _parse_cell(name: str, text: str):
    kind = _FIELD_TYPES[name]
    if text == "" and kind != "str":
        return None
    if kind.startswith("bool"):
        return text == "true"
    if kind.startswith("int"):
        return int(text)
    if kind.startswith("float"):
        return float(text)
    return text


def read_records(path, fmt: str) -> list[SweepRecord]:
    """Inverse of ``emit``. CSV rows come back with ``wall_time=None``."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        if fmt == "csv":
            reader = csv.DictReader(fh)
            return [SweepRecord(**{k: _parse_cell(k, v) for k, v in row.items()})
                    for row in reader]
        if fmt == "jsonl":
            out = []
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    row.pop("schema_version", None)
                    out.append(SweepRecord(**row))
            return out
    raise ValueError(f"unknown format {fmt!r}")
