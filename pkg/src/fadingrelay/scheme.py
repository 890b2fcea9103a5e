"""Peaky-FSK frequency-binning relaying: relay Phase 1/2, destination Steps 1/2.

Decoders accept a single statistics vector or a batch with leading trial
axes. Single vectors decode to ``int`` or ``None`` (declared error); batches
decode to integer arrays with ``DECLARED`` marking declared errors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .binning import CodebookParams
from .channel import (CorrelationBlock, Link, SystemParams, make_correlations, peak_snr,
                      sample_decision_stats)

DECLARED = -1
ERROR_TYPES = ("none", "e11", "e12", "e2")
SAMPLERS = ("correlation", "energy")


@dataclass(frozen=True)
class Thresholds:
    A_R: float
    B_R: float
    B_S: float

    @classmethod
    def from_params(cls, params: SystemParams) -> "Thresholds":
        rho = peak_snr(params)
        return cls(
            A_R=1 + (1 - params.eps) * params.a_sq * rho,
            B_R=1 + (1 - params.eps1) * params.b_sq_gamma * rho,
            B_S=1 + (1 - params.eps2) * rho,
        )


@dataclass(frozen=True)
class DecodeOutcome:
    """Result of one trial.

    ``error_type`` is ``"none"`` iff the destination recovered the sent
    message; otherwise it names the first stage that went wrong.
    """

    message: int
    relay_result: int | None
    dest_bin_result: int | None
    dest_msg_result: int | None
    error_type: str


@dataclass
class TrialOutcomes:
    """Batched outcomes, one entry per trial; ``DECLARED`` marks declared errors."""

    messages: np.ndarray
    relay: np.ndarray
    dest_bin: np.ndarray
    dest_msg: np.ndarray
    error_code: np.ndarray  # index into ERROR_TYPES

    def __len__(self):
        return len(self.messages)

    def outcome(self, i: int) -> DecodeOutcome:
        def opt(v):
            v = int(v)
            return None if v == DECLARED else v

        return DecodeOutcome(
            message=int(self.messages[i]),
            relay_result=opt(self.relay[i]),
            dest_bin_result=opt(self.dest_bin[i]),
            dest_msg_result=opt(self.dest_msg[i]),
            error_type=ERROR_TYPES[int(self.error_code[i])],
        )


def decision_stats(block) -> np.ndarray:
    """Mean energy per tone, ``S_k = (1/N) sum_n |R_k(n)|^2``."""
    values = block.values if isinstance(block, CorrelationBlock) else np.asarray(block)
    return (values.real ** 2 + values.imag ** 2).mean(axis=-2)


def _unique_index(mask: np.ndarray):
    """Index of the single True entry along the last axis, else DECLARED."""
    hits = mask.sum(axis=-1)
    idx = np.where(hits == 1, mask.argmax(axis=-1), DECLARED)
    if idx.ndim == 0:
        idx = int(idx)
        return None if idx == DECLARED else idx
    return idx


def relay_decode(stats, A_R: float, cb: CodebookParams):
    """Relay Phase 1: the unique bin holding a tone at or above ``A_R``."""
    stats = np.asarray(stats)
    if stats.shape[-1] != cb.M_S:
        raise ValueError(f"expected {cb.M_S} statistics, got {stats.shape[-1]}")
    fired = (stats >= A_R).reshape(stats.shape[:-1] + (cb.M_R, cb.M_D)).any(axis=-1)
    return _unique_index(fired)


def dest_decode_bin(stats_rd, B_R: float):
    """Destination Step 1 over the ``M_R`` relay tones."""
    return _unique_index(np.asarray(stats_rd) >= B_R)


def dest_decode_within_bin(stats_sd_bin, B_S: float):
    """Destination Step 2 over the ``M_D`` source tones of the decoded bin.

    Returns the within-bin offset of the unique tone at or above ``B_S``.
    """
    return _unique_index(np.asarray(stats_sd_bin) >= B_S)


def relay_forward(m1_hat, params: SystemParams, cb: CodebookParams,
                  rng: np.random.Generator) -> CorrelationBlock:
    """Relay Phase 2 as seen by the destination.

    A relay that declared an error (``None`` / ``DECLARED``) stays silent,
    giving a noise-only block.
    """
    if isinstance(m1_hat, np.ndarray):
        return make_correlations(Link.RD, m1_hat, cb.M_R, params, rng)
    if m1_hat is None or m1_hat == DECLARED:
        return make_correlations(Link.RD, None, cb.M_R, params, rng)
    return make_correlations(Link.RD, int(m1_hat), cb.M_R, params, rng)


def run_trials(messages, params: SystemParams, cb: CodebookParams, thresholds: Thresholds,
               rng: np.random.Generator, sampler: str = "correlation") -> TrialOutcomes:
    """Run the full chain for a batch of messages.

    Draws happen in the order SR block, SD block, RD block. With a single bin
    (``M_R == 1``) the relay and Step 1 are bypassed and no SR/RD draws are
    made. ``sampler="energy"`` draws the decision statistics straight from
    their Gamma law instead of simulating correlator outputs.
    """
    if sampler not in SAMPLERS:
        raise ValueError(f"sampler must be one of {SAMPLERS}, got {sampler!r}")
    m = np.asarray(messages, dtype=np.int64)
    if np.any((m < 0) | (m >= cb.M_S)):
        raise ValueError(f"message outside [0, {cb.M_S})")
    n = m.shape[0]

    if sampler == "correlation":
        def stats_for(link, sent, M):
            return decision_stats(make_correlations(link, sent, M, params, rng))
    else:
        def stats_for(link, sent, M):
            return sample_decision_stats(link, sent, M, params, rng)

    m1 = m // cb.M_D
    if cb.direct:
        sd = stats_for(Link.SD, m, cb.M_S)
        relay = np.zeros(n, dtype=np.int64)
        dest_bin = np.zeros(n, dtype=np.int64)
    else:
        sr = stats_for(Link.SR, m, cb.M_S)
        sd = stats_for(Link.SD, m, cb.M_S)
        relay = relay_decode(sr, thresholds.A_R, cb)
        rd = stats_for(Link.RD, relay, cb.M_R)
        dest_bin = dest_decode_bin(rd, thresholds.B_R)

    dest_msg = np.full(n, DECLARED, dtype=np.int64)
    rows = np.flatnonzero(dest_bin != DECLARED)
    if rows.size:
        first = dest_bin[rows] * cb.M_D
        cols = first[:, None] + np.arange(cb.M_D)
        within = dest_decode_within_bin(sd[rows[:, None], cols], thresholds.B_S)
        dest_msg[rows] = np.where(within != DECLARED, first + within, DECLARED)

    code = np.full(n, 3, dtype=np.int8)
    code[dest_bin != m1] = 2
    code[relay != m1] = 1
    code[dest_msg == m] = 0
    return TrialOutcomes(m, relay, dest_bin, dest_msg, code)


def run_trial(m: int, params: SystemParams, cb: CodebookParams, thresholds: Thresholds,
              rng: np.random.Generator, sampler: str = "correlation") -> DecodeOutcome:
    return run_trials(np.array([m]), params, cb, thresholds, rng, sampler).outcome(0)
