"""Closed-form rates, regime planning, Chernoff bounds and exact error probabilities.

Rates are in nats per second throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .binning import CodebookParams
from .channel import Link, SystemParams, signal_variance
from .scheme import Thresholds
from .special import gammainc_pq, log_gammainc_pq

NATS_TO_BITS = 1.0 / math.log(2.0)
DEFAULT_MAX_CODEBOOK = 1 << 24

DIRECT = "Direct"
RELAY_LIMITED_BY_SR = "RelayLimitedBySR"
RELAY_LIMITED_BY_MA_CUT = "RelayLimitedByMACut"


class PlanningError(ValueError):
    """Requested rate cannot be planned (e.g. above the min-cut)."""


class ResourceError(ValueError):
    """Planned codebook exceeds the configured size cap."""


# -- capacity bounds -----------------------------------------------------------

def min_cut_rate(params: SystemParams) -> float:
    """Hypergraph min-cut ``min{max(1, a^2), 1 + b^2 gamma} P_S/N_0 (1 - 2 T_d/T_c)``."""
    return (min(max(1.0, params.a_sq), 1.0 + params.b_sq_gamma)
            * params.snr_base * params.underspread_factor)


def cutset_upper(params: SystemParams) -> float:
    """Wideband limit of the FD-AWGN cut-set bound."""
    return min(1.0 + params.a_sq, 1.0 + params.b_sq_gamma) * params.snr_base


def block_markov_lower(params: SystemParams) -> float:
    """Wideband limit of the FD-AWGN generalized block-Markov bound."""
    return min(max(1.0, params.a_sq), 1.0 + params.b_sq_gamma) * params.snr_base


@dataclass(frozen=True)
class RateReport:
    min_cut: float
    cutset_ub: float
    block_markov_lb: float
    capacity_known: bool
    underspread_factor: float


def rate_report(params: SystemParams) -> RateReport:
    return RateReport(
        min_cut=min_cut_rate(params),
        cutset_ub=cutset_upper(params),
        block_markov_lb=block_markov_lower(params),
        capacity_known=params.a_sq >= 1.0 + params.b_sq_gamma,
        underspread_factor=params.underspread_factor,
    )


@dataclass(frozen=True)
class Regime:
    """Operating regime and the rates carried by the bin index (R_1) and the
    within-bin index (R_2)."""

    tag: str
    R_1: float
    R_2: float

    @property
    def rate(self) -> float:
        return self.R_1 + self.R_2


def classify_regime(params: SystemParams) -> Regime:
    scale = params.snr_base * params.underspread_factor
    if params.a_sq <= 1.0:
        return Regime(DIRECT, 0.0, scale)
    if params.a_sq <= 1.0 + params.b_sq_gamma:
        return Regime(RELAY_LIMITED_BY_SR, (params.a_sq - 1.0) * scale, scale)
    return Regime(RELAY_LIMITED_BY_MA_CUT, params.b_sq_gamma * scale, scale)


def hyperedge_capacities(params: SystemParams) -> dict[str, float]:
    """Capacities of the four hyperedges of the wideband relay model.

    blue: source to relay and destination; red: source to relay only;
    black: source to destination only; green: relay to destination.
    """
    scale = params.snr_base * params.underspread_factor
    relay_useful = params.a_sq > 1.0
    return {
        "blue": scale if relay_useful else 0.0,
        "red": max(0.0, params.a_sq - 1.0) * scale,
        "black": 0.0 if relay_useful else scale,
        "green": params.b_sq_gamma * scale,
    }


def bandwidths(cb: CodebookParams, params: SystemParams) -> tuple[float, float]:
    """Minimum source and relay bandwidths ``(W_S, W_R)`` in Hz."""
    return cb.M_S / params.window, cb.M_R / params.window


# -- codebook planning ---------------------------------------------------------

@dataclass(frozen=True)
class CodebookPlan:
    codebook: CodebookParams
    thresholds: Thresholds
    regime: Regime
    target_rate: float
    R_1: float  # achieved, from the rounded codebook sizes
    R_2: float

    @property
    def rate(self) -> float:
        return self.R_1 + self.R_2


def nats_per_block(params: SystemParams) -> float:
    """Seconds of transmission per nat of rate: ``N T_s / theta``."""
    return params.N * params.T_s / params.theta


def achieved_rates(cb: CodebookParams, params: SystemParams) -> tuple[float, float]:
    """``(R_1, R_2) = theta / (N T_s) * (ln M_R, ln M_D)``."""
    span = nats_per_block(params)
    return math.log(cb.M_R) / span, math.log(cb.M_D) / span


def regime_shares(params: SystemParams) -> tuple[float, float]:
    """Fractions of the total rate carried by the bin and within-bin indices."""
    regime = classify_regime(params)
    return regime.R_1 / regime.rate, regime.R_2 / regime.rate


def _round_size(log_size: float, log_cap: float) -> int:
    if log_size > log_cap + 1.0:
        raise ResourceError(f"codebook of size e^{log_size:.3g} exceeds the cap")
    return max(1, math.floor(math.exp(log_size) + 0.5))


def plan_codebook(params: SystemParams, rate: float, *,
                  max_codebook: int = DEFAULT_MAX_CODEBOOK,
                  allow_above_min_cut: bool = False) -> CodebookPlan:
    """Size the binning codebook for a target rate.

    The rate is split between bin and within-bin indices in the proportions
    of the operating regime, each part is turned into a message count by
    rounding ``exp(R_x N T_s / theta)`` to the nearest integer >= 1, and the
    achieved rates are recomputed from the rounded sizes.
    """
    if not rate > 0:
        raise PlanningError(f"target rate must be positive, got {rate}")
    limit = min_cut_rate(params)
    if not allow_above_min_cut and rate > limit * (1 + 1e-12):
        raise PlanningError(f"target rate {rate:.6g} exceeds the min-cut {limit:.6g} nats/s")
    regime = classify_regime(params)
    share_1, share_2 = regime_shares(params)
    span = nats_per_block(params)
    log_cap = math.log(max_codebook)
    M_R = _round_size(rate * share_1 * span, log_cap)
    M_D = _round_size(rate * share_2 * span, log_cap)
    if M_R * M_D > max_codebook:
        raise ResourceError(f"codebook size {M_R * M_D} exceeds the cap {max_codebook}")
    cb = CodebookParams(M_R=M_R, M_D=M_D)
    R_1, R_2 = achieved_rates(cb, params)
    return CodebookPlan(cb, Thresholds.from_params(params), regime, rate, R_1, R_2)


# -- Chernoff machinery --------------------------------------------------------

def g_function(A: float, u: float) -> float:
    """Chernoff objective ``A u + ln(1 - u)``; maximal at ``u = 1 - 1/A``."""
    if not 0 <= u < 1:
        raise ValueError(f"u must lie in [0, 1), got {u}")
    return A * u + math.log1p(-u)


def chernoff_exponent(A: float) -> float:
    """``A - 1 - ln A``, the best exponent of the noise-tail Chernoff bound."""
    if not A > 1:
        raise ValueError(f"threshold must exceed the noise level 1, got {A}")
    return (A - 1.0) - math.log1p(A - 1.0)


def rate_limits(params: SystemParams, thresholds: Thresholds) -> dict[str, float]:
    """Finite-duty-cycle rate conditions ``(theta/T_s)(A - 1 - ln A)``.

    Keys: ``"R"`` (relay, threshold A_R), ``"R_1"`` (destination bin stage,
    B_R) and ``"R_2"`` (within-bin stage, B_S). A threshold at or below 1
    gives a limit of 0.
    """
    def limit(A):
        return params.theta / params.T_s * chernoff_exponent(A) if A > 1 else 0.0

    return {"R": limit(thresholds.A_R), "R_1": limit(thresholds.B_R), "R_2": limit(thresholds.B_S)}


def chernoff_rate_limit(params: SystemParams, thresholds: Thresholds | None = None) -> float:
    """Largest total rate meeting every stage's rate condition under the regime split."""
    thresholds = thresholds or Thresholds.from_params(params)
    limits = rate_limits(params, thresholds)
    share_1, share_2 = regime_shares(params)
    if share_1 == 0.0:
        return limits["R_2"]
    return min(limits["R"], limits["R_1"] / share_1, limits["R_2"] / share_2)


@dataclass(frozen=True)
class StageBound:
    """``miss + exp(-N * exponent)`` for one decoding stage."""

    exponent: float
    fa_term: float
    miss_term: float
    bound: float
    clamped: bool


_INACTIVE = StageBound(exponent=math.inf, fa_term=0.0, miss_term=0.0, bound=0.0, clamped=False)


@dataclass(frozen=True)
class ChernoffBounds:
    e11: StageBound
    e12: StageBound
    e2: StageBound

    @property
    def total(self) -> float:
        return min(1.0, self.e11.bound + self.e12.bound + self.e2.bound)

    @property
    def clamped(self) -> bool:
        return self.e11.clamped or self.e12.clamped or self.e2.clamped


def _stage_bound(N: int, threshold: float, n_candidates: int, sigma_sq: float) -> StageBound:
    exponent = chernoff_exponent(threshold) - math.log(n_candidates) / N
    clamped = exponent <= 0
    fa = 1.0 if clamped else math.exp(-N * exponent)
    miss = exact_tails(N, threshold, sigma_sq)[0]
    return StageBound(exponent, fa, miss, min(1.0, miss + fa), clamped)


def chernoff_error_bounds(params: SystemParams, cb: CodebookParams,
                          thresholds: Thresholds) -> ChernoffBounds:
    """Per-stage union/Chernoff bounds on Pr{e11}, Pr{e12} and Pr{e2}.

    The false-alarm term of a stage deciding among ``M`` tones is
    ``exp(-N (A - 1 - ln A - ln(M)/N))``; the miss term is the exact
    probability that the signal tone falls below its threshold. A
    nonpositive exponent violates the stage's rate condition: the term is
    clamped to 1 and ``clamped`` is set. With a single bin only the
    within-bin stage (over all ``M_S`` tones) is active.
    """
    N = params.N
    e2 = _stage_bound(N, thresholds.B_S, cb.M_D, signal_variance(Link.SD, params))
    if cb.direct:
        return ChernoffBounds(_INACTIVE, _INACTIVE, e2)
    e11 = _stage_bound(N, thresholds.A_R, cb.M_S, signal_variance(Link.SR, params))
    e12 = _stage_bound(N, thresholds.B_R, cb.M_R, signal_variance(Link.RD, params))
    return ChernoffBounds(e11, e12, e2)


# -- exact oracle --------------------------------------------------------------

def exact_tails(N: int, A: float, sigma_sq: float) -> tuple[float, float]:
    """``(Pr{S < A}, Pr{S >= A})`` for ``S`` the mean of ``N`` i.i.d.
    exponentials of mean ``sigma_sq`` (``N S / sigma_sq`` is Erlang(N))."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if not A > 0 or not sigma_sq > 0:
        raise ValueError("threshold and variance must be positive")
    return gammainc_pq(N, N * A / sigma_sq)


def exact_log_tails(N: int, A: float, sigma_sq: float) -> tuple[float, float]:
    """Natural logs of ``exact_tails``; stays finite where the tails underflow."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if not A > 0 or not sigma_sq > 0:
        raise ValueError("threshold and variance must be positive")
    return log_gammainc_pq(N, N * A / sigma_sq)


@dataclass(frozen=True)
class ExactErrorReport:
    """Exact stage and end-to-end error probabilities.

    ``p_e11``: relay does not decode the right bin. ``p_e12``: destination
    bin stage fails given a correct relay. ``p_e2``: within-bin stage fails
    given a correct bin. ``p_tag_*`` are the probabilities that a trial's
    first failing stage is that stage and the message is lost; they sum to
    ``p_e_total``.
    """

    p_miss_relay: float
    p_fa_relay: float
    p_e11: float
    p_miss_destR: float
    p_fa_destR: float
    p_e12: float
    p_miss_destS: float
    p_fa_destS: float
    p_e2: float
    p_e_total: float
    p_relay_declared: float
    p_relay_wrong: float
    p_tag_e11: float
    p_tag_e12: float
    p_tag_e2: float


def _clip01(p: float) -> float:
    return min(1.0, max(0.0, p))


def exact_end_to_end(params: SystemParams, cb: CodebookParams,
                     thresholds: Thresholds) -> ExactErrorReport:
    """Exact error probabilities of the threshold decoders.

    Tone statistics are independent across tones and links, so each stage
    reduces to products of per-tone tails. A relay that declares an error
    stays silent; a relay that decodes a wrong bin forwards that bin.
    """
    N = params.N
    miss_s, _ = exact_tails(N, thresholds.B_S, signal_variance(Link.SD, params))
    _, fa_s = exact_tails(N, thresholds.B_S, 1.0)
    within_ok = (1 - miss_s) * (1 - fa_s) ** (cb.M_D - 1)

    if cb.direct:
        success = within_ok
        return ExactErrorReport(
            p_miss_relay=0.0, p_fa_relay=0.0, p_e11=0.0,
            p_miss_destR=0.0, p_fa_destR=0.0, p_e12=0.0,
            p_miss_destS=miss_s, p_fa_destS=fa_s, p_e2=_clip01(1 - within_ok),
            p_e_total=_clip01(1 - success),
            p_relay_declared=0.0, p_relay_wrong=0.0,
            p_tag_e11=0.0, p_tag_e12=0.0, p_tag_e2=_clip01(1 - success),
        )

    miss_r, _ = exact_tails(N, thresholds.A_R, signal_variance(Link.SR, params))
    _, fa_r = exact_tails(N, thresholds.A_R, 1.0)
    quiet_bin = (1 - fa_r) ** cb.M_D
    own_miss = miss_r * (1 - fa_r) ** (cb.M_D - 1)
    relay_ok = (1 - own_miss) * quiet_bin ** (cb.M_R - 1)
    relay_wrong = (cb.M_R - 1) * own_miss * (1 - quiet_bin) * quiet_bin ** (cb.M_R - 2)
    relay_declared = 1 - relay_ok - relay_wrong

    miss_d, _ = exact_tails(N, thresholds.B_R, signal_variance(Link.RD, params))
    _, fa_d = exact_tails(N, thresholds.B_R, 1.0)
    # Pr{destination decodes the true bin} for each relay behaviour
    bin_ok_given_ok = (1 - miss_d) * (1 - fa_d) ** (cb.M_R - 1)
    bin_ok_given_wrong = fa_d * miss_d * (1 - fa_d) ** (cb.M_R - 2)
    bin_ok_given_silent = fa_d * (1 - fa_d) ** (cb.M_R - 1)

    lucky = relay_wrong * bin_ok_given_wrong + relay_declared * bin_ok_given_silent
    success = within_ok * (relay_ok * bin_ok_given_ok + lucky)
    return ExactErrorReport(
        p_miss_relay=miss_r, p_fa_relay=fa_r, p_e11=_clip01(1 - relay_ok),
        p_miss_destR=miss_d, p_fa_destR=fa_d, p_e12=_clip01(1 - bin_ok_given_ok),
        p_miss_destS=miss_s, p_fa_destS=fa_s, p_e2=_clip01(1 - within_ok),
        p_e_total=_clip01(1 - success),
        p_relay_declared=_clip01(relay_declared), p_relay_wrong=_clip01(relay_wrong),
        p_tag_e11=_clip01(1 - relay_ok - within_ok * lucky),
        p_tag_e12=_clip01(relay_ok * (1 - bin_ok_given_ok)),
        p_tag_e2=_clip01(relay_ok * bin_ok_given_ok * (1 - within_ok)),
    )
