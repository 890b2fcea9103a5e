"""Correlation-domain model of the three wideband fading links.

A correlator output for repetition ``n`` and candidate tone ``k`` is

    R_k(n) = [k == sent] * amp * G(n) + W_k(n)

with ``W_k(n)`` i.i.d. CN(0, 1), ``G(n)`` the aggregate complex gain of the
link in repetition ``n`` and ``amp`` the square root of the peak SNR
(times ``gamma`` on the relay->destination link). Guard intervals only enter
through ``T_s - 2*T_d`` inside the peak SNR.

Random draw order (stable contract): for each link, the ``N`` gains of every
trial are drawn first, then the noise, both in C order over
``(trial, repetition, tone)``. A complex normal consumes two consecutive
standard normals (real part, then imaginary part). The generator is numpy's
PCG64 via ``numpy.random.default_rng``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields

import numpy as np


class Link(str, enum.Enum):
    SR = "SR"  # source -> relay
    SD = "SD"  # source -> destination
    RD = "RD"  # relay -> destination


GAIN_MODELS = ("rayleigh", "path_sum")


@dataclass(frozen=True)
class SystemParams:
    """Channel and scheme scalars.

    Gains are relative to the source->destination total gain, which is 1.
    ``snr_base`` is ``P_S/N_0`` in 1/s; times are in seconds.
    ``eps``, ``eps1``, ``eps2`` are the threshold margins used at the relay,
    the destination bin stage and the destination within-bin stage.
    """

    a_sq: float = 1.0
    b_sq: float = 1.0
    gamma: float = 1.0
    snr_base: float = 1.0
    T_s: float = 1.0
    T_d: float = 0.0
    T_c: float = 1.0
    theta: float = 1.0
    N: int = 16
    eps: float = 0.2
    eps1: float = 0.2
    eps2: float = 0.2
    gain_model: str = "rayleigh"
    n_paths: int = 64

    def __post_init__(self):
        for name in ("a_sq", "b_sq", "gamma", "T_d"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)!r}")
        for name in ("snr_base", "T_s", "T_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not 0 < self.theta <= 1:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta!r}")
        if isinstance(self.N, bool) or not isinstance(self.N, int) or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        for name in ("eps", "eps1", "eps2"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {getattr(self, name)!r}")
        if self.T_s > self.T_c:
            raise ValueError(f"T_s={self.T_s} exceeds coherence time T_c={self.T_c}")
        if not 2 * self.T_d < self.T_s:
            raise ValueError(f"guard intervals 2*T_d={2 * self.T_d} leave no window in T_s={self.T_s}")
        if self.gain_model not in GAIN_MODELS:
            raise ValueError(f"gain_model must be one of {GAIN_MODELS}, got {self.gain_model!r}")
        if isinstance(self.n_paths, bool) or not isinstance(self.n_paths, int) or self.n_paths < 1:
            raise ValueError(f"n_paths must be a positive integer, got {self.n_paths!r}")

    @property
    def b_sq_gamma(self) -> float:
        return self.b_sq * self.gamma

    @property
    def window(self) -> float:
        """Integration window ``T_s - 2*T_d``."""
        return self.T_s - 2 * self.T_d

    @property
    def underspread_factor(self) -> float:
        return 1 - 2 * self.T_d / self.T_c

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.field_names()}


def peak_snr(params: SystemParams) -> float:
    """Per-correlation peak SNR ``(P_S/N_0) * (T_s - 2 T_d) / theta``."""
    return params.snr_base * params.window / params.theta


def gain_variance(link: Link, params: SystemParams) -> float:
    link = Link(link)
    return {Link.SR: params.a_sq, Link.SD: 1.0, Link.RD: params.b_sq}[link]


def signal_amplitude(link: Link, params: SystemParams) -> float:
    """Scale applied to the aggregate gain in the sent column."""
    rho = peak_snr(params)
    if Link(link) is Link.RD:
        return math.sqrt(params.gamma * rho)
    return math.sqrt(rho)


def signal_variance(link: Link, params: SystemParams) -> float:
    """Second moment of a correlator output in the sent column."""
    return 1.0 + signal_amplitude(link, params) ** 2 * gain_variance(link, params)


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly symmetric CN(0, variance) samples."""
    shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
    z = rng.standard_normal(shape + (2,)).view(np.complex128)[..., 0]
    z *= math.sqrt(0.5 * variance)
    return z


def path_sum_gain(L: int, total_gain: float, rng: np.random.Generator, size=None,
                  amplitude: str = "gaussian"):
    """Aggregate gain of ``L`` paths with independent uniform phases.

    Each path carries power ``total_gain / L``. With ``amplitude="gaussian"``
    the per-path amplitude is complex Gaussian, so the sum is exactly
    CN(0, total_gain) for every ``L``; ``amplitude="constant"`` fixes each
    path magnitude at ``sqrt(total_gain / L)`` and relies on the CLT.
    """
    if L < 1:
        raise ValueError(f"path count must be >= 1, got {L}")
    if size is None:
        shape = ()
    else:
        shape = (size,) if isinstance(size, (int, np.integer)) else tuple(size)
    per_path = total_gain / L
    if amplitude == "gaussian":
        amps = complex_normal(rng, shape + (L,), per_path)
    elif amplitude == "constant":
        amps = np.full(shape + (L,), math.sqrt(per_path), dtype=np.complex128)
    else:
        raise ValueError(f"unknown amplitude model {amplitude!r}")
    phases = rng.uniform(0.0, 2 * math.pi, size=shape + (L,))
    g = (amps * np.exp(1j * phases)).sum(axis=-1)
    return complex(g) if size is None else g


def draw_gains(link: Link, params: SystemParams, rng: np.random.Generator,
               n_trials: int | None = None) -> np.ndarray:
    """Per-repetition gains ``G(n)``, shape ``(N,)`` or ``(n_trials, N)``.

    Entries are i.i.d. with mean 0 and variance ``a^2`` (SR), 1 (SD) or
    ``b^2`` (RD).
    """
    shape = (params.N,) if n_trials is None else (n_trials, params.N)
    var = gain_variance(link, params)
    if params.gain_model == "path_sum":
        return path_sum_gain(params.n_paths, var, rng, size=shape)
    return complex_normal(rng, shape, var)


@dataclass
class CorrelationBlock:
    """Correlator outputs of one link.

    ``values`` has shape ``(N, M)`` for a single trial or ``(n, N, M)`` for a
    batch. ``sent`` is the transmitted tone, ``None`` (or ``-1`` entries in a
    batch) when the transmitter was silent.
    """

    link: Link
    values: np.ndarray
    sent: int | np.ndarray | None

    @property
    def n_candidates(self) -> int:
        return self.values.shape[-1]


def make_correlations(link: Link, sent, M: int, params: SystemParams,
                      rng: np.random.Generator) -> CorrelationBlock:
    """Draw one correlation block per trial.

    ``sent`` is an int, ``None``, or an integer array of per-trial tones with
    ``-1`` marking a silent transmitter; an array yields a batched block.
    """
    link = Link(link)
    batched = isinstance(sent, np.ndarray)
    tones = np.atleast_1d(np.asarray(-1 if sent is None else sent, dtype=np.int64))
    if np.any(tones >= M):
        raise ValueError(f"sent index outside [0, {M})")
    n = tones.shape[0]
    gains = draw_gains(link, params, rng, n_trials=n)
    values = complex_normal(rng, (n, params.N, M))
    active = np.flatnonzero(tones >= 0)
    if active.size:
        values[active, :, tones[active]] += signal_amplitude(link, params) * gains[active]
    if batched:
        return CorrelationBlock(link, values, tones)
    return CorrelationBlock(link, values[0], None if sent is None else int(sent))


def sample_decision_stats(link: Link, sent: np.ndarray, M: int, params: SystemParams,
                          rng: np.random.Generator) -> np.ndarray:
    """Draw energy statistics directly from their exact law.

    Under Rayleigh gains each column of a block is i.i.d. CN(0, sigma^2), so
    the mean of ``N`` squared magnitudes is ``sigma^2 * Gamma(N, 1) / N``.
    Equivalent in distribution to ``decision_stats(make_correlations(...))``
    at ``N`` times lower cost; used for codebooks too large to simulate
    tone by tone. Returns shape ``(n, M)``.
    """
    if params.gain_model != "rayleigh":
        raise ValueError("energy sampling requires the rayleigh gain model")
    tones = np.asarray(sent, dtype=np.int64)
    n = tones.shape[0]
    stats = rng.standard_gamma(params.N, size=(n, M)) / params.N
    active = np.flatnonzero(tones >= 0)
    if active.size:
        stats[active, tones[active]] *= signal_variance(link, params)
    return stats
