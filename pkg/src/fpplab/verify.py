"""Executable invariant checks.  Each returns a :class:`Check`; none raise."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import bounds
from .geodesic import canonical_geodesic, shortest_time_field
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    ReplicationRecord,
    edge_influence_probe,
    load_records,
    resolve,
    run_experiment,
    triangle_check,
)
from .lattice import Box
from .oracle import brute_force_field, literal_tie_break, minimal_paths
from .passage import DistributionSchedule, sample_field, sample_path_times, uniforms

UNIFORM = DistributionSchedule.constant("shifted-uniform(0.5, 1.5)")
BERNOULLI = DistributionSchedule.constant("bernoulli-mix(1, 2, 0.5)")


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def guarded(name: str):
    """Report precondition errors as a failed check instead of a traceback."""
    def wrap(fn: Callable[..., Check]) -> Callable[..., Check]:
        @functools.wraps(fn)
        def inner(*args, **kwargs) -> Check:
            try:
                return fn(*args, **kwargs)
            except (ValueError, AssertionError) as exc:
                return Check(name, False, f"precondition failure: {exc}")
        return inner
    return wrap


def _random_targets(seed: int, count: int, box: Box, min_l1: int = 1) -> list[tuple[int, ...]]:
    """Deterministic destinations at l1 distance >= min_l1 from the origin."""
    pool = [s for s in box.sites() if sum(abs(c) for c in s) >= min_l1]
    u = uniforms((seed, 0xD57), count)
    return [pool[int(x * len(pool))] for x in u]


@guarded("oracle equivalence")
def check_oracle(fields: int = 100, seed: int = 1,
                 schedules: Sequence[DistributionSchedule] = (UNIFORM, BERNOULLI)) -> Check:
    box = Box(2, 2)
    origin = (0, 0)
    field_bad = path_bad = total = 0
    for schedule in schedules:
        targets = _random_targets(seed, fields, box)
        for rep in range(fields):
            w = sample_field(schedule, box, seed, rep)
            if not np.array_equal(shortest_time_field(w, origin), brute_force_field(w, origin)):
                field_bad += 1
            T, paths = minimal_paths(w, origin, targets[rep])
            res = canonical_geodesic(w, origin, targets[rep])
            if res.time != T or res.path.sites != literal_tie_break(paths):
                path_bad += 1
            total += 1
    return Check("oracle equivalence", field_bad == 0 and path_bad == 0,
                 f"{total} fields on B_2: {field_bad} field mismatches, "
                 f"{path_bad} geodesic mismatches")


@guarded("tie-break fidelity")
def check_tie_break(fields: int = 100, seed: int = 2, min_tie_share: float = 0.3) -> Check:
    box = Box(2, 2)
    origin = (0, 0)
    targets = _random_targets(seed, fields, box, min_l1=3)
    bad = tied = 0
    for rep in range(fields):
        w = sample_field(BERNOULLI, box, seed, rep)
        _, paths = minimal_paths(w, origin, targets[rep])
        res = canonical_geodesic(w, origin, targets[rep])
        tied += res.tie_events > 0
        bad += res.path.sites != literal_tie_break(paths)
    share = tied / fields
    return Check("tie-break fidelity", bad == 0 and share >= min_tie_share,
                 f"{fields} fields, {bad} mismatches, ties present in {share:.0%} "
                 f"(need >= {min_tie_share:.0%})")


@guarded("chernoff certificate")
def check_chernoff(schedule: DistributionSchedule = UNIFORM, d: int = 2,
                   ks: Sequence[int] = (10, 20, 50), count: int = 10_000,
                   seed: int = 3) -> Check:
    cert = bounds.derive_chernoff(schedule, d)
    parts = []
    ok = True
    for k in ks:
        times = sample_path_times(schedule, k, count, seed, d)
        hits = int(np.count_nonzero(times <= cert.beta1 * k))
        bound = cert.path_bound(k)
        se = math.sqrt(bound * (1 - bound) / count)
        ok &= hits / count <= bound + 3 * se
        parts.append(f"k={k}: {hits}/{count} (bound {bound:.2e})")
    return Check("chernoff certificate", ok, f"beta1={cert.beta1:.6f}; " + ", ".join(parts))


def check_records(records: Sequence[ReplicationRecord]) -> list[Check]:
    coupling = [r for r in records if r.gn_holds and not r.coupled]
    order = [r for r in records if r.T_hat > r.T or r.edges < r.n]
    return [
        Check("coupling identity", not coupling,
              f"{sum(r.gn_holds for r in records)} records with G_n, "
              f"{len(coupling)} with T != T_hat or different paths"),
        Check("record invariants", not order,
              f"{len(records)} records, {len(order)} with T_hat > T or edges < n"),
    ]


def check_summary(result: ExperimentResult) -> list[Check]:
    s = result.summary
    lemma_bad = [x for x in s.lemma if not x["passes"]]
    checks = [Check("lemma variance bound", not lemma_bad,
                    ", ".join(f"n={x['n']}: {x['var_T_hat']:.3g} <= {x['bound']:.3g}"
                              for x in s.lemma))]
    by_n = {st.n: st for st in s.per_n}
    sub = []
    for n in by_n:
        for m in by_n:
            if m >= n and n + m in by_n:
                a, b, c = by_n[n].T, by_n[m].T, by_n[n + m].T
                se = math.sqrt(a.mean_se**2 + b.mean_se**2 + c.mean_se**2)
                sub.append((n, m, c.mean <= a.mean + b.mean + 3 * se))
    checks.append(Check("mean subadditivity", all(ok for *_, ok in sub),
                        f"{len(sub)} grid pairs checked"))
    ratios = [(st.n, st.T.mean / st.n, st.T.mean_se / st.n) for st in s.per_n]
    mono = all(r2 <= r1 + 3 * math.hypot(e1, e2)
               for (_, r1, e1), (_, r2, e2) in zip(ratios, ratios[1:]))
    checks.append(Check("time constant monotone", mono,
                        "mean_T/n: " + ", ".join(f"{n}:{r:.4f}" for n, r, _ in ratios)
                        + f"; mu_hat={s.mu_fekete:.6f}"))
    ev_bad = [e for e in s.events if e.an_margin < 0 or e.gn_margin < 0]
    checks.append(Check("event frequencies vs bounds", not ev_bad,
                        f"worst margin {min(min(e.an_margin, e.gn_margin) for e in s.events):.3g}"))
    return checks


@guarded("lipschitz influence")
def check_influence(cfg: ExperimentConfig, n: int = 32, probes: int = 1000,
                    target: str = "uniform") -> Check:
    rep = edge_influence_probe(cfg, n, probes, target=target)
    ok = rep.lipschitz_violations == 0 and rep.support_violations == 0
    return Check("lipschitz influence", ok,
                 f"{probes} {target} probes at n={n}: max |dT|={rep.max_abs_delta:.4f} "
                 f"<= cap {rep.cap:.4f}, {rep.nonzero} nonzero, "
                 f"{rep.lipschitz_violations} cap violations, "
                 f"{rep.support_violations} off-geodesic changes")


@guarded("triangle inequality")
def check_triangle(cfg: ExperimentConfig, n: int = 8, reps: int = 5) -> Check:
    rows = triangle_check(cfg, resolve(cfg), n, reps)
    # Both sides are float path sums in different orders; allow rounding slack.
    bad = sum(whole > (a + b) * (1 + 64 * np.finfo(float).eps) for whole, a, b in rows)
    return Check("triangle inequality", bad == 0,
                 f"T(0,2n) <= T(0,n) + T(n,2n) up to rounding on {reps} shared fields, "
                 f"{bad} violations")


def check_record_file(path: Path) -> list[Check]:
    try:
        header, records = load_records(path)
    except ValueError as exc:
        return [Check("record file integrity", False, str(exc))]
    return [Check("record file integrity", True,
                  f"{path}: {len(records)} records, digest {header['body_sha256'][:12]}")
            ] + check_records(records)


def run_suite(cfg: ExperimentConfig, quick: bool = True, record_file: Path | None = None,
              threads: int = 1) -> list[Check]:
    """The release gate: every invariant at desk scale."""
    fields = 30 if quick else 100
    checks = [
        check_oracle(fields, seed=cfg.master_seed),
        check_tie_break(fields, seed=cfg.master_seed, min_tie_share=0.3),
        check_chernoff(cfg.schedule, cfg.d, count=2_000 if quick else 10_000,
                       seed=cfg.master_seed),
    ]
    small = replace(cfg, n_grid=(8, 16, 32), replications=30) if quick else cfg
    try:
        result = run_experiment(small, threads=threads)
    except (ValueError, AssertionError) as exc:
        checks.append(Check("experiment", False, f"precondition failure: {exc}"))
    else:
        checks += check_records(result.records) + check_summary(result)
    checks.append(check_influence(cfg, n=16 if quick else 32, probes=100 if quick else 1000))
    checks.append(check_triangle(cfg))
    if record_file is not None:
        checks += check_record_file(record_file)
    return checks
