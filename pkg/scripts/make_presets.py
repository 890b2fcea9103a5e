"""Regenerate the bundled preset configs in src/fadingrelay/presets/.

The oracle-grid cells get their ``snr_base`` solved (bisection on the exact
end-to-end error probability) so each cell sits at a target P_e, then
rounded to 4 decimals and frozen into the JSON.
"""
import json
from pathlib import Path

from scipy.optimize import brentq

from fadingrelay.analysis import exact_end_to_end
from fadingrelay.binning import CodebookParams
from fadingrelay.channel import SystemParams
from fadingrelay.scheme import Thresholds

OUT = Path(__file__).resolve().parents[1] / "src" / "fadingrelay" / "presets"

ORACLE_BASE = dict(a_sq=1.5, b_sq=1.0, gamma=1.0, T_s=1.0, T_d=0.0, T_c=1.0, theta=1.0,
                   eps=0.5, eps1=0.5, eps2=0.5)
ORACLE_CODEBOOKS = [(2, 2), (2, 4), (4, 2)]  # (M_R, M_D): M_S in {4, 8}, M_R in {2, 4}
ORACLE_N = [8, 32]
ORACLE_TARGETS = [0.2, 0.4]


def exact_pe(snr, N, cb):
    p = SystemParams(**ORACLE_BASE, snr_base=snr, N=N)
    return exact_end_to_end(p, cb, Thresholds.from_params(p)).p_e_total


def oracle_grid():
    points = []
    for M_R, M_D in ORACLE_CODEBOOKS:
        cb = CodebookParams(M_R, M_D)
        for N in ORACLE_N:
            for target in ORACLE_TARGETS:
                snr = brentq(lambda s: exact_pe(s, N, cb) - target, 1e-3, 100.0, xtol=1e-10)
                snr = round(snr, 4)
                points.append({"N": N, "snr_base": snr, "codebook": {"M_R": M_R, "M_D": M_D},
                               "_exact_p_e": round(exact_pe(snr, N, cb), 6)})
    return {
        "_comment": "Monte Carlo vs exact oracle grid: 12 cells, snr_base tuned per cell.",
        "params": dict(ORACLE_BASE, N=8, snr_base=1.0),
        "n_trials": 100000,
        "base_seed": 20240601,
        "sampler": "correlation",
        "confidence": 0.99,
        "points": points,
    }


def fig3():
    a_sq = [round(0.25 + 0.05 * i, 2) for i in range(76)]
    return {
        "_comment": "Rate bounds against the S-R gain a^2 at b^2*gamma = 0.5, P_S/N_0 = 1, T_d = 0.",
        "params": {"a_sq": 1.0, "b_sq": 0.5, "gamma": 1.0, "snr_base": 1.0, "T_s": 1.0,
                   "T_d": 0.0, "T_c": 1.0, "theta": 1.0, "N": 8},
        "rate_fraction": 0.5,
        "rate_reference": "min_cut",
        "n_trials": 200,
        "base_seed": 3,
        "sweep": {"a_sq": a_sq},
    }


def n_scaling():
    return {
        "_comment": ("Error probability against N at fixed fractions of the Chernoff rate "
                     "condition (regime 1 < a^2 <= 1 + b^2 gamma). Codebooks above "
                     "max_codebook are recorded as failed points."),
        "params": {"a_sq": 1.3, "b_sq": 1.0, "gamma": 1.0, "snr_base": 2.0, "T_s": 1.0,
                   "T_d": 0.0, "T_c": 1.0, "theta": 1.0, "N": 16,
                   "eps": 0.8, "eps1": 0.5, "eps2": 0.4},
        "rate_reference": "chernoff",
        "rate_fraction": 0.6,
        "sampler": "energy",
        "n_trials": 4000,
        "base_seed": 7,
        "max_codebook": 1 << 20,
        "sweep": {"rate_fraction": [0.6, 0.8, 1.3], "N": [16, 32, 64, 128]},
    }


def example():
    return {
        "_comment": "Annotated single-point config. Keys starting with '_' are ignored.",
        "params": {
            "_a_sq": "source->relay total gain a^2 (source->destination gain is 1)",
            "a_sq": 1.5,
            "_b_sq": "relay->destination total gain b^2",
            "b_sq": 1.0,
            "_gamma": "relay/source power ratio P_R / P_S",
            "gamma": 1.0,
            "_snr_base": "P_S / N_0 in 1/s",
            "snr_base": 1.0,
            "_times": "symbol time T_s, delay spread T_d, coherence time T_c (seconds)",
            "T_s": 1.0, "T_d": 0.0, "T_c": 1.0,
            "_theta": "duty factor in (0, 1]",
            "theta": 1.0,
            "_N": "repetitions per symbol",
            "N": 8,
            "_eps": "threshold margins for A_R, B_R, B_S",
            "eps": 0.2, "eps1": 0.2, "eps2": 0.2,
            "_gain_model": "rayleigh (complex Gaussian) or path_sum (n_paths phasors)",
            "gain_model": "rayleigh", "n_paths": 64,
        },
        "_codebook": "explicit sizes; alternatively give rate (nats/s) or rate_fraction",
        "codebook": {"M_R": 2, "M_D": 2},
        "n_trials": 1000,
        "base_seed": 1,
        "_sampler": "correlation (correlator outputs) or energy (decision statistics)",
        "sampler": "correlation",
        "confidence": 0.95,
    }


if __name__ == "__main__":
    for name, build in (("oracle-grid", oracle_grid), ("fig3", fig3),
                        ("n-scaling", n_scaling), ("example", example)):
        (OUT / f"{name}.json").write_text(json.dumps(build(), indent=2) + "\n")
        print("wrote", name)
