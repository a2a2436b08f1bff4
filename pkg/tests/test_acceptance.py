"""Acceptance criteria 1-7, one test each.

Every test records a single PASS/FAIL line, collected in the
"acceptance criteria" section of the terminal summary.
"""

from fractions import Fraction

import numpy as np

from picdtc import experiments as ex
from picdtc.chain import CouplingConfig
from picdtc.density import cached_threshold, default_chain_length, rank_gf2
from picdtc.trellis import build_trellis

from test_chain import test_rate_formula_randomized as rate_identities
from test_decoding import test_never_wrong_randomized as never_wrong
from test_decoding import test_set_bcjr_matches_exhaustive_oracle as bcjr_vs_oracle
from test_density import test_de_trajectory_monotone as de_monotone
from test_density import test_transfer_exact_vs_mc_grid as exact_vs_mc
from test_trellis import test_shortening_equivalence_1000_vectors as shortening

CODE = ("5", "3", "7")
LAMS = (Fraction(1, 8), Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1))
CAPACITY = 2 / 3

SIM_K, SIM_L = 10_000, 20
SIM_SEED = 2024


def threshold(lam, m, L=None):
    L = default_chain_length(m) if L is None else L
    return cached_threshold(*CODE, float(lam), m, L).eps_bp


def simulate(lam, eps, trials=20, seed=SIM_SEED):
    Kc = CouplingConfig.from_lambda(SIM_K, lam, 1, SIM_L).Kc
    cfg = ex.ExperimentConfig(*CODE, K=SIM_K, Kc=Kc, m=1, L=SIM_L, epsilons=(eps,),
                              trials=trials, min_erasures=100, seed=seed,
                              max_sweeps=200, max_inner_iters=100)
    return ex.ber_sweep(cfg).results[0]


def test_c1_threshold_table(report):
    a, b = threshold(1, 1), threshold(1, 5)
    ok = abs(a - 0.6594) <= 0.002 and abs(b - 0.6644) <= 0.002
    report("C1", ok, f"eps_bp(lam=1,m=1)={a:.5f} vs 0.6594, eps_bp(lam=1,m=5)={b:.5f} vs 0.6644, tol 0.002")
    assert ok


def test_c1_optional_m50(report):
    c = threshold(1, 50)
    ok = abs(c - 0.6656) <= 0.002
    report("C1 (optional)", ok, f"eps_bp(lam=1,m=50,L=500)={c:.5f} vs 0.6656, tol 0.002")
    assert ok


def test_c2_lambda_trend(report):
    col = [threshold(lam, 1) for lam in LAMS]
    mono = all(b >= a for a, b in zip(col, col[1:]))
    gap_half, gap_one = CAPACITY - col[2], CAPACITY - col[4]
    ok = mono and abs(gap_half - 0.009) <= 0.002 and abs(gap_one - 0.0073) <= 0.002
    table = ", ".join(f"{lam}:{e:.5f}" for lam, e in zip(LAMS, col))
    report("C2", ok, f"m=1 [{table}] monotone={mono}, gap(1/2)={gap_half:.5f}, gap(1)={gap_one:.5f}")
    assert ok


def test_c3_memory_trend(report):
    ms = (1, 2, 5, 10)
    row = [threshold(1, m) for m in ms]
    mono = all(b >= a for a, b in zip(row, row[1:]))
    gain = row[2] - row[0]
    ok = mono and gain >= 0.003
    table = ", ".join(f"m={m}:{e:.5f}" for m, e in zip(ms, row))
    report("C3", ok, f"lam=1 [{table}] monotone={mono}, gain m=1->5 {gain:.5f} (>= 0.003)")
    assert ok


def test_c4_sim_vs_de(report):
    parts, ok = [], True
    for lam in (Fraction(1, 4), Fraction(1, 2)):
        # threshold of the simulated ensemble itself (L = 20)
        eps_bp = threshold(lam, 1, SIM_L)
        below = simulate(lam, eps_bp - 0.01)
        above = simulate(lam, eps_bp + 0.02)
        good = below["ber"] <= 1e-4 and above["ber"] >= 1e-2
        ok &= good
        parts.append(f"lam={lam} eps_bp={eps_bp:.5f} BER({below['epsilon']:.5f})={below['ber']:.3g} "
                     f"[{below['trials']} trials] BER({above['epsilon']:.5f})={above['ber']:.3g}")
    report("C4", ok, "; ".join(parts))
    assert ok


def test_c5_coupling_gain(report):
    coupled = simulate(Fraction(3, 4), 0.645)
    uncoupled = simulate(Fraction(0), 0.645)
    ok = coupled["ber"] * 10 < uncoupled["ber"]
    report("C5", ok, f"eps=0.645 BER(lam=3/4)={coupled['ber']:.3g} [{coupled['trials']} trials], "
                     f"BER(lam=0)={uncoupled['ber']:.3g} [{uncoupled['trials']} trials]")
    assert ok


def test_c6_property_suites(report):
    rsc1, rsc2 = build_trellis("5", None, "7"), build_trellis(*CODE)
    checks = {
        "never-wrong x1000": lambda: never_wrong(rsc2),
        "shortening x1000": lambda: shortening(rsc1, rsc2, np.random.default_rng(1)),
        "bcjr=oracle x1000": lambda: bcjr_vs_oracle(CODE, np.random.default_rng(2)),
        "rate identities": rate_identities,
        "exact~MC 5x5x5": lambda: exact_vs_mc(rsc2),
        "DE monotone x10": lambda: de_monotone(rsc2),
    }
    verdicts = {}
    for name, check in checks.items():
        try:
            check()
            verdicts[name] = True
        except AssertionError:
            verdicts[name] = False
    ok = all(verdicts.values())
    report("C6", ok, ", ".join(f"{k}:{'ok' if v else 'FAILED'}" for k, v in verdicts.items()))
    assert ok


def test_c7_search(report):
    ranked = rank_gf2("5", "7", [str(c) for c in range(1, 8)], lam=1, m=1, L=100)
    top = [c for c, _ in ranked[:2]]
    ok = "3" in top
    table = ", ".join(f"{c}:{e:.5f}" for c, e in ranked)
    report("C7", ok, f"ranking [{table}]")
    assert ok
