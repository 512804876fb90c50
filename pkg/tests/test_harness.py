from __future__ import annotations

import json
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fpplab.config import load_config
from fpplab.harness import (
    ConfigError,
    ExperimentConfig,
    ReplicationRecord,
    ResourceRefusal,
    edge_influence_probe,
    load_records,
    resolve,
    run_experiment,
    subsequence_diagnostic,
    summarize,
    write_outputs,
)
from fpplab.passage import DistributionSchedule
from fpplab.records import IntegrityError, read_artifact
from fpplab.stats import loglog_fit, moments

UNIFORM = DistributionSchedule.constant("shifted-uniform(0.5, 1.5)")
ONE = DistributionSchedule.constant("deterministic(1)")


@pytest.fixture(scope="module")
def small_run():
    cfg = ExperimentConfig(UNIFORM, n_grid=(4, 8, 16), replications=12, master_seed=5)
    return run_experiment(cfg)


def test_deterministic_run():
    res = run_experiment(ExperimentConfig(ONE, n_grid=(4, 8), replications=3))
    for st in res.summary.per_n:
        assert st.T.mean == st.n and st.T.var == 0.0
    assert res.summary.mu_fekete == 1.0
    assert res.summary.fit is None
    assert all(e.an_fail == 0.0 for e in res.summary.events)
    assert all(r.max_proxy == 0.0 for r in res.summary.subsequence)


def test_record_line_round_trip(small_run):
    for r in small_run.records[:5]:
        assert ReplicationRecord.from_line(r.to_line()) == r
        json.loads(r.to_line())


def test_summary_is_order_independent(small_run):
    cfg, resolved = small_run.cfg, small_run.resolved
    shuffled = list(small_run.records)
    random.Random(0).shuffle(shuffled)
    assert summarize(shuffled, cfg, resolved).as_dict() == small_run.summary.as_dict()


def test_rerun_is_identical(small_run):
    again = run_experiment(small_run.cfg)
    assert again.records_text() == small_run.records_text()


def test_seed_changes_records(small_run):
    from dataclasses import replace

    other = run_experiment(replace(small_run.cfg, master_seed=6))
    assert other.records_text() != small_run.records_text()


def test_outputs_and_integrity(tmp_path, small_run):
    paths = write_outputs(small_run, tmp_path)
    header, records = load_records(paths["records.jsonl"])
    assert records == small_run.records
    assert header["config_digest"] == small_run.cfg.digest()
    text = paths["records.jsonl"].read_text()
    paths["records.jsonl"].write_text(text.replace('"rep": 0,', '"rep": 7,', 1))
    with pytest.raises(IntegrityError, match="checksum"):
        load_records(paths["records.jsonl"])
    with pytest.raises(IntegrityError):
        read_artifact(paths["summary.json"], "records")


def test_invariants_on_small_run(small_run):
    for r in small_run.records:
        assert r.T_hat <= r.T
        assert r.edges >= r.n
        if r.gn_holds:
            assert r.coupled
    for row in small_run.summary.lemma:
        assert row["passes"]


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(UNIFORM, replications=1)
    with pytest.raises(ConfigError):
        ExperimentConfig(UNIFORM, n_grid=(8, 8))
    with pytest.raises(ConfigError):
        ExperimentConfig(UNIFORM, box_factor=1.5)
    with pytest.raises(ResourceRefusal, match="edges"):
        resolve(ExperimentConfig(UNIFORM, box_factor="auto", n_grid=(64, 128)))


def test_bad_schedule_refused():
    with pytest.raises(ValueError):
        resolve(ExperimentConfig(DistributionSchedule.constant("pareto(1, 10)")))


def test_subsequence_thresholds_are_monotone(small_run):
    a = subsequence_diagnostic(small_run.records, small_run.resolved.alpha, 0.01)
    b = subsequence_diagnostic(small_run.records, small_run.resolved.alpha, 0.02)
    assert [r.n for r in a] == [4, 16]
    assert all(y.exceed <= x.exceed for x, y in zip(a, b))


def test_influence_probe_small():
    cfg = ExperimentConfig(UNIFORM, n_grid=(8,), replications=2)
    rep = edge_influence_probe(cfg, 8, 60, target="path")
    assert rep.lipschitz_violations == 0 and rep.support_violations == 0
    assert rep.nonzero > 0


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "lab.ini"
    p.write_text("[experiment]\nreplications = 7\n[schedule]\nspecs = pareto(1, 20)\n")
    lab = load_config(p, ["n_grid=4, 8", "experiment.master_seed=3"])
    assert lab.experiment.replications == 7
    assert lab.experiment.n_grid == (4, 8) and lab.experiment.master_seed == 3
    assert str(lab.experiment.schedule.specs[0]) == "pareto(1, 20)"
    p.write_text("[experiment]\nreplicatoins = 7\n")
    with pytest.raises(ConfigError, match="replicatoins"):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(None, ["nonsense.key=1"])


def test_moments_and_fit():
    m = moments([1.0, 2.0, 3.0, 4.0])
    assert m.mean == 2.5 and m.var == pytest.approx(5 / 3)
    xs = [8, 16, 32, 64, 128]
    fit = loglog_fit(xs, [3.0 * x for x in xs])
    assert abs(fit.slope - 1.0) < 1e-9
    fit = loglog_fit(xs, [0.2 * x**1.5 for x in xs])
    assert fit.slope == pytest.approx(1.5, abs=1e-9)
    assert loglog_fit(xs, [0.0] * 5) is None
    assert loglog_fit(xs[:2], [1.0, 2.0]) is None
    assert np.isfinite(fit.slope_hi)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 16))
def test_axis_event_nesting(rep, n):
    # truncated axis sums are nondecreasing in the truncation level k, so the
    # level-n event sits inside every level-k event (k <= n) and contains A_n
    from fpplab.lattice import Box
    from fpplab.passage import axis_edge_indices, sample_field, truncate_field

    schedule = DistributionSchedule.constant("pareto(1, 20)")
    box = Box(2 * n, 2)
    w = sample_field(schedule, box, 31, rep)
    axis = axis_edge_indices(box, 2 * n)
    alpha = 0.165525
    sums = [math.fsum(truncate_field(w, k, alpha).weights[axis]) for k in range(1, n + 1)]
    assert all(a <= b for a, b in zip(sums, sums[1:]))
    threshold = 6 * schedule.mean_sup() * n
    holds = [s <= threshold for s in sums]
    if holds[-1]:
        assert all(holds)
    if math.fsum(w.weights[axis]) <= threshold:
        assert holds[-1]
