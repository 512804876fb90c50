from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fpplab.lattice import Box
from fpplab.passage import (
    DistributionError,
    DistributionSchedule,
    DistributionSpec,
    ScheduleError,
    check_schedule,
    moment_sup,
    sample_field,
    sample_path_times,
    small_time_mass,
    stream_key,
    truncate_field,
    truncation_cap,
    uniforms,
    validate_schedule,
)

UNIFORM = DistributionSchedule.constant("shifted-uniform(0.5, 1.5)")
ONE = DistributionSchedule.constant("deterministic(1)")


def test_spec_round_trip_through_text():
    for text in ["shifted-uniform(0.5, 1.5)", "shifted-exponential(0, 1)", "pareto(1, 20)",
                 "deterministic(1)", "bernoulli-mix(1, 2, 0.5)"]:
        spec = DistributionSpec.parse(text)
        assert DistributionSpec.parse(str(spec)) == spec


@pytest.mark.parametrize("text", ["shifted-uniform(1, 0.5)", "pareto(1, -2)",
                                  "gauss(0, 1)", "shifted-exponential(0, 0)",
                                  "bernoulli-mix(1, 2, 1.5)", "deterministic(-1)"])
def test_bad_specs_rejected(text):
    with pytest.raises(DistributionError):
        DistributionSpec.parse(text)


def test_deterministic_field_is_all_ones():
    w = sample_field(ONE, Box(3, 2), 1, 0)
    assert np.all(w.weights == 1.0)


def test_same_seed_same_field_and_read_only():
    a = sample_field(UNIFORM, Box(4, 2), 99, 5)
    b = sample_field(UNIFORM, Box(4, 2), 99, 5)
    assert a.digest() == b.digest()
    assert sample_field(UNIFORM, Box(4, 2), 99, 6).digest() != a.digest()
    with pytest.raises(ValueError):
        a.weights[0] = 3.0


def test_uniform_sample_mean():
    w = sample_field(UNIFORM, Box(112, 2), 3, 0).weights[:100_000]
    se = math.sqrt(1 / 12 / w.size)
    assert abs(w.mean() - 1.0) < 3 * se


def test_philox_stream_matches_raw_generator():
    # The Philox4x64-10 words under key (0, 0), as produced by numpy's reference bit generator.
    raw = [0x02F4BA6408E4D89B, 0x3DD62B0B9CA8C5B2, 0x1C8667A55D902E79, 0x907D7A052FD5B4DC]
    expected = [((r >> 11) + 0.5) * 2.0**-53 for r in raw]
    assert uniforms((0, 0), 4).tolist() == expected


def test_frozen_field_vectors():
    assert stream_key(20240611, 0, 16, 3) == (20240611, 68719476739)
    assert uniforms(stream_key(20240611, 0, 16, 3), 3).tolist() == [
        0.18688547212951062, 0.9584242754356087, 0.6051831776729086]
    w = sample_field(UNIFORM, Box(2, 2), 7, 0)
    assert w.digest() == "3170aa8bc44aae356fea8716522510340635333ea3bc04ed37939514470ac2c7"


def test_stream_prefix_stability():
    assert np.array_equal(uniforms((5, 9), 1000)[:10], uniforms((5, 9), 10))


def test_small_time_mass_examples():
    assert small_time_mass(UNIFORM, 0.25) == 0.0
    assert small_time_mass(ONE, 2) == 1.0
    exp = DistributionSchedule.constant("shifted-exponential(0, 1)")
    assert small_time_mass(exp, 0.1) == pytest.approx(-math.expm1(-0.1), rel=1e-12)
    assert small_time_mass(exp, 0.1) == pytest.approx(0.09516, abs=5e-6)
    with pytest.raises(ValueError):
        small_time_mass(UNIFORM, 0)


def test_moment_examples():
    pareto = DistributionSchedule.constant("pareto(1, 20)")
    assert moment_sup(pareto, 18.4) == pytest.approx(12.5, rel=1e-12)
    assert math.isinf(moment_sup(pareto, 20))
    assert moment_sup(DistributionSchedule.constant("deterministic(3)"), 2.5) == pytest.approx(3**2.5)


def test_exponential_moment_by_quadrature():
    from scipy import integrate

    spec = DistributionSpec.parse("shifted-exponential(0.5, 2)")
    q = 3.5
    val, _ = integrate.quad(lambda x: x**q * 2 * math.exp(-2 * (x - 0.5)), 0.5, math.inf)
    assert spec.moment(q) == pytest.approx(val, rel=1e-9)


def test_truncation_examples():
    alpha = 0.165525
    assert truncation_cap(16, alpha) == pytest.approx(16**alpha)
    assert truncation_cap(16, alpha) == pytest.approx(1.5824, abs=1e-4)
    box = Box(1, 2)
    from fpplab.passage import WeightField

    w = WeightField(box, np.array([5.0, 0.3] + [1.0] * 10))
    t = truncate_field(w, 16, alpha)
    assert t.weights[0] == pytest.approx(1.5824, abs=1e-4)
    assert t.weights[1] == 0.3
    for bad in (0.0, 1 / 6, 0.2, -0.1):
        with pytest.raises(ValueError):
            truncation_cap(16, bad)


@given(st.sampled_from(["shifted-uniform(0.5, 1.5)", "shifted-exponential(0, 1)",
                        "pareto(1, 20)", "bernoulli-mix(1, 2, 0.5)", "deterministic(1)"]))
def test_small_time_mass_monotone_on_grid(text):
    schedule = DistributionSchedule.constant(text)
    masses = [small_time_mass(schedule, 10.0**-j) for j in range(1, 7)]
    assert all(b <= a for a, b in zip(masses, masses[1:]))


def test_validation():
    assert validate_schedule(UNIFORM, 2, 0.5).ok
    # pareto(1, 18) lacks the 18.5-th moment required in d = 2
    rep = validate_schedule(DistributionSchedule.constant("pareto(1, 18)"), 2, 0.5)
    assert not rep.ok
    assert validate_schedule(DistributionSchedule.constant("pareto(1, 20)"), 2, 0.5).ok
    with pytest.raises(ScheduleError):
        check_schedule(DistributionSchedule.constant("deterministic(0)"), 2, 0.5)


def test_schedule_rules():
    box = Box(2, 2)
    periodic = DistributionSchedule(("deterministic(1)", "deterministic(2)"), "periodic")
    w = sample_field(periodic, box, 1, 0)
    assert w.weights.tolist() == [1.0 + (i % 2) for i in range(box.num_edges)]
    coord = DistributionSchedule(("deterministic(1)", "deterministic(2)"), "coordinate")
    w = sample_field(coord, box, 1, 0)
    from fpplab.lattice import iter_edges

    for e, x in zip(iter_edges(box), w.weights):
        assert x == 1.0 + sum(e.base) % 2
    with pytest.raises(ScheduleError):
        DistributionSchedule(("deterministic(1)", "deterministic(2)"), "constant")


@settings(max_examples=20)
@given(st.integers(1, 30))
def test_path_times_are_left_to_right_sums(k):
    t = sample_path_times(ONE, k, 5, 0)
    assert t.tolist() == [float(k)] * 5
