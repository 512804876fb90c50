"""Acceptance criteria at desk scale.  Each test records one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are printed in
the terminal summary (and live with ``-s``).
"""
from __future__ import annotations

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import ACCEPTANCE
from fpplab import bounds
from fpplab.harness import ExperimentConfig, edge_influence_probe, run_experiment
from fpplab.passage import DistributionSchedule, sample_path_times
from fpplab.verify import BERNOULLI, UNIFORM, check_oracle, check_records, check_tie_break

DEFAULT = ExperimentConfig(UNIFORM)


def report(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert passed, line


@pytest.fixture(scope="module")
def default_run():
    return run_experiment(DEFAULT)


def test_01_oracle_equivalence():
    t0 = time.perf_counter()
    check = check_oracle(fields=100, seed=1, schedules=(UNIFORM, BERNOULLI))
    elapsed = time.perf_counter() - t0
    report(1, "oracle equivalence", check.passed and elapsed < 60,
           f"{check.detail}; {elapsed:.1f}s (limit 60s)")


def test_02_tie_break_fidelity():
    check = check_tie_break(fields=100, seed=2, min_tie_share=0.3)
    report(2, "tie-break fidelity", check.passed, check.detail)


def test_03_chernoff_certificate():
    t0 = time.perf_counter()
    cert = bounds.derive_chernoff(UNIFORM, 2)
    hits = {}
    for k in (10, 20, 50):
        times = sample_path_times(UNIFORM, k, 10_000, 3)
        hits[k] = int(np.count_nonzero(times <= cert.beta1 * k))
    elapsed = time.perf_counter() - t0
    ok = all(h == 0 for h in hits.values()) and math.exp(-2 * 10) < 1e-8 and elapsed < 60
    report(3, "chernoff certificate", ok,
           f"beta1={cert.beta1:.6f}, hits {hits} over 10^4 paths each, "
           f"certified bound at k=10 {cert.path_bound(10):.2e}; {elapsed:.1f}s")


def test_04_coupling_identity(default_run):
    coupling, _ = check_records(default_run.records)
    report(4, "coupling identity", coupling.passed,
           f"default run (grid {DEFAULT.n_grid}, {DEFAULT.replications} reps): {coupling.detail}")


def test_05_lipschitz_influence():
    parts, ok = [], True
    for target in ("uniform", "path"):
        rep = edge_influence_probe(DEFAULT, 32, 1000, target=target)
        ok &= rep.lipschitz_violations == 0 and rep.support_violations == 0
        parts.append(f"{target}: max |dT_hat|={rep.max_abs_delta:.4f} <= {rep.cap:.4f}, "
                     f"{rep.nonzero} nonzero, {rep.lipschitz_violations} cap / "
                     f"{rep.support_violations} support violations")
    report(5, "lipschitz influence (1000 probes each, n=32)", ok, "; ".join(parts))


def test_06_lemma_variance_bound(default_run):
    rows = default_run.summary.lemma
    ok = all(r["passes"] for r in rows)
    report(6, "lemma variance bound", ok,
           ", ".join(f"n={r['n']}: {r['var_T_hat']:.3f} <= {r['bound']:.1f}" for r in rows))


def test_07_variance_scaling_ceiling():
    t0 = time.perf_counter()
    cfg = replace(DEFAULT, n_grid=(8, 16, 32, 64, 128), replications=500)
    fit = run_experiment(cfg).summary.fit
    elapsed = time.perf_counter() - t0
    ok = fit is not None and fit.slope_hi < 1.5 and elapsed < 20 * 60
    detail = (f"slope {fit.slope:.4f}, 95% CI [{fit.slope_lo:.4f}, {fit.slope_hi:.4f}]"
              if fit else "no fit")
    report(7, "variance exponent below 3/2", ok, f"{detail}; {elapsed:.0f}s")


def test_08_time_constant(default_run):
    det = run_experiment(replace(DEFAULT, schedule=DistributionSchedule.constant(
        "deterministic(1)"), replications=5)).summary
    s = default_run.summary
    stats = s.per_n
    mono = all(b.T.mean / b.n <= a.T.mean / a.n + 3 * math.hypot(a.T.mean_se / a.n,
                                                                 b.T.mean_se / b.n)
               for a, b in zip(stats, stats[1:]))
    beta1 = default_run.resolved.beta1
    upper = s.stats_for(8).T.mean / 8
    ok = det.mu_fekete == 1.0 and mono and beta1 <= s.mu_fekete <= upper
    report(8, "time constant", ok,
           f"deterministic mu_hat={det.mu_fekete!r}; uniform mean_T/n "
           + ", ".join(f"{st.T.mean / st.n:.4f}" for st in stats)
           + f"; {beta1:.4f} <= mu_hat={s.mu_fekete:.4f} <= {upper:.4f}")


def test_09_event_frequencies(default_run):
    pareto = run_experiment(replace(DEFAULT, schedule=DistributionSchedule.constant(
        "pareto(1, 20)"))).summary
    uni = default_run.summary
    an_ok = all(e.an_margin >= 0 for e in uni.events)
    gn_ok = all(e.gn_margin >= 0 for e in pareto.events)
    detail = ("uniform A_n^c: " + ", ".join(f"n={e.n} {e.an_fail:.3f}<={e.an_bound:.2e}"
                                            for e in uni.events)
              + "; pareto G_n^c: " + ", ".join(f"n={e.n} {e.gn_fail:.3f}<={e.gn_bound:.2f}"
                                             for e in pareto.events))
    report(9, "event frequencies vs bounds", an_ok and gn_ok, detail)


def test_10_determinism(default_run):
    again = run_experiment(DEFAULT)
    threaded = run_experiment(DEFAULT, threads=2)
    same_bytes = again.records_text().encode() == default_run.records_text().encode()
    same_summary = threaded.summary.as_dict() == default_run.summary.as_dict()
    report(10, "determinism", same_bytes and same_summary,
           f"rerun records byte-identical: {same_bytes}; threads 1 vs 2 summary identical: "
           f"{same_summary}")
