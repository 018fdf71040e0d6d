"""Detection tests: arithmetic, tie handling, symmetry, and power regimes."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coalmix.detection import (
    ALTERNATIVE,
    NULL,
    UNDECIDED,
    GeneSampleSet,
    agnostic_two_sample_test,
    empirical_quantile,
    mean_test,
    min_test,
    oracle_quantile_test,
)
from coalmix.errors import DomainError
from coalmix.rng import derive_rng
from coalmix.sequences import pair_theta_samples
from coalmix.sweep import power_estimate


def _samples(values, k=10):
    return GeneSampleSet(k=k, thetas=np.array(values, dtype=np.int64))


def test_sample_set_validation():
    with pytest.raises(DomainError):
        _samples([])
    with pytest.raises(DomainError):
        _samples([11], k=10)
    with pytest.raises(DomainError):
        _samples([-1], k=10)


def test_empirical_quantile_examples():
    assert empirical_quantile(_samples([1, 2, 3, 4]), 0.5) == 2
    assert empirical_quantile(_samples([7]), 0.1) == 7
    assert empirical_quantile(_samples([7]), 1.0) == 7
    assert empirical_quantile(_samples([3, 1, 2]), 1.0) == 3
    with pytest.raises(DomainError):
        empirical_quantile(_samples([1]), 0.0)
    with pytest.raises(DomainError):
        empirical_quantile(_samples([1]), 1.5)


@given(st.lists(st.integers(min_value=0, max_value=50), min_size=1, max_size=60),
       st.floats(min_value=0.001, max_value=1.0))
def test_empirical_quantile_definition(values, q):
    samples = GeneSampleSet(k=50, thetas=np.array(values))
    v = empirical_quantile(samples, q)
    rank = max(1, math.ceil(q * len(values)))
    assert np.count_nonzero(samples.thetas <= v) >= rank
    # v is the smallest such sample value
    below = samples.thetas[samples.thetas < v]
    assert below.size < rank


def test_oracle_threshold_arithmetic():
    # m=100, w=0.1, w'=0.2 -> threshold 15; a count of 20 is alternative
    k = 10
    values = [0] * 20 + [10] * 80
    verdict = oracle_quantile_test(_samples(values, k), p0=0.5, w=0.1, w_prime=0.2)
    assert verdict.threshold == pytest.approx(15.0)
    assert verdict.statistic == 20
    assert verdict.decision == ALTERNATIVE


def test_oracle_zero_count_is_null():
    verdict = oracle_quantile_test(_samples([10] * 50), p0=0.5, w=0.1, w_prime=0.2)
    assert verdict.statistic == 0
    assert verdict.decision == NULL


def test_oracle_rejects_bad_tails():
    with pytest.raises(DomainError):
        oracle_quantile_test(_samples([1]), p0=0.5, w=0.2, w_prime=0.2)


def test_oracle_monotone_in_count():
    # raising a theta from below k*p0 to above can only flip alternative -> null
    k = 10
    base = [0] * 15 + [10] * 85
    v1 = oracle_quantile_test(_samples(base, k), p0=0.5, w=0.1, w_prime=0.2)
    raised = [10] + base[1:]
    v2 = oracle_quantile_test(_samples(raised, k), p0=0.5, w=0.1, w_prime=0.2)
    assert v2.statistic == v1.statistic - 1
    assert (v1.decision, v2.decision) != (NULL, ALTERNATIVE)


def test_oracle_boundary_theta_counts():
    # theta/k equal to p0 counts into the statistic
    verdict = oracle_quantile_test(_samples([5, 10], k=10), p0=0.5, w=0.1, w_prime=0.3)
    assert verdict.statistic == 1


def test_agnostic_identical_datasets_undecided():
    d = _samples([3, 5, 7, 9, 11, 13], k=20)
    verdict = agnostic_two_sample_test(d, d, split_seed=4)
    assert verdict.alternative is None
    assert verdict.decision == UNDECIDED


def test_agnostic_shifted_dataset_is_alternative():
    rng = np.random.default_rng(0)
    base = rng.integers(5, 15, size=40)
    d1 = GeneSampleSet(k=20, thetas=base)
    d2 = GeneSampleSet(k=20, thetas=base - 1)
    verdict = agnostic_two_sample_test(d1, d2, split_seed=9)
    assert verdict.alternative == 2


def test_agnostic_swap_symmetry():
    rng = np.random.default_rng(3)
    for trial in range(20):
        d1 = GeneSampleSet(k=20, thetas=rng.integers(0, 21, size=30))
        d2 = GeneSampleSet(k=20, thetas=rng.integers(0, 21, size=30))
        a = agnostic_two_sample_test(d1, d2, split_seed=trial)
        b = agnostic_two_sample_test(d2, d1, split_seed=trial)
        if a.alternative is None:
            assert b.alternative is None
        else:
            assert b.alternative == 3 - a.alternative


def test_agnostic_requires_matching_k():
    with pytest.raises(DomainError):
        agnostic_two_sample_test(_samples([1, 2], k=10), _samples([1, 2], k=20))


def test_agnostic_requires_splittable_halves():
    with pytest.raises(DomainError):
        agnostic_two_sample_test(_samples([1], k=10), _samples([1, 2], k=10))


def test_agnostic_determinism():
    rng = np.random.default_rng(5)
    d1 = GeneSampleSet(k=20, thetas=rng.integers(0, 21, size=50))
    d2 = GeneSampleSet(k=20, thetas=rng.integers(0, 21, size=50))
    a = agnostic_two_sample_test(d1, d2, split_seed=11)
    b = agnostic_two_sample_test(d1, d2, split_seed=11)
    assert a == b


def test_verdict_json_fields():
    verdict = oracle_quantile_test(_samples([0, 10], k=10), p0=0.5, w=0.1, w_prime=0.2)
    payload = json.loads(verdict.to_json())
    assert set(payload) == {"decision", "statistic", "threshold", "split_seed"}
    d = _samples([3, 5, 7, 9], k=20)
    payload = json.loads(agnostic_two_sample_test(d, d, split_seed=2).to_json())
    assert payload["decision"] == "undecided"
    assert payload["split_seed"] == 2


def test_mean_test_examples():
    assert mean_test(_samples([5, 5, 5]), _samples([5, 5, 5])).alternative is None
    assert mean_test(_samples([5, 5, 5]), _samples([4, 4, 4])).alternative == 2
    assert mean_test(_samples([4, 4]), _samples([5, 5])).alternative == 1
    with pytest.raises(DomainError):
        mean_test(_samples([1], k=5), _samples([1], k=6))


def test_min_test_examples():
    assert min_test(_samples([3, 9]), _samples([3, 8])).alternative is None
    assert min_test(_samples([3, 9]), _samples([7, 8])).alternative == 1
    assert min_test(_samples([7, 9]), _samples([3, 8])).alternative == 2


def test_oracle_detects_mixture_at_long_sequences():
    # alternative-only power at f=0.05, k=400: a doubling scan over the
    # multiplier c in m = ceil(c/(f^2 sqrt(k))) crossed 0.93 at c=64
    from coalmix.exact import oracle_tail_probs

    f, k = 0.05, 400
    p0, w, wp = oracle_tail_probs(f, k)
    m = math.ceil(64 / (f * f * math.sqrt(k)))
    hits = 0
    reps = 200
    for i in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence(56, spawn_key=(i,)))
        thetas = pair_theta_samples(1 - f, m, k, rng)
        verdict = oracle_quantile_test(GeneSampleSet(k, thetas), p0, w, wp)
        hits += verdict.decision == ALTERNATIVE
    assert hits / reps >= 0.9


def _first_power_crossing(test, f, k, m_values, target, seed, replicates=150):
    for m in m_values:
        if power_estimate(test, f, k, m, seed, replicates) >= target:
            return m
    return None


def test_mean_test_power_in_short_sequence_regime():
    # with k = 1, enough genes make the mean comparison reliable
    f, k = 0.3, 1
    m_star = _first_power_crossing("mean", f, k, [128, 256, 512, 1024, 2048, 4096], 0.92, seed=61)
    assert m_star is not None
    fresh = power_estimate("mean", f, k, m_star, master_seed=62, replicates=200)
    assert fresh >= 0.9


def test_min_test_power_in_long_sequence_regime():
    # k ~ f^-2 log(1/f) makes the minimum statistic informative.  At f=0.1
    # this k leaves the binomial noise (0.031) above the support shift
    # (0.020), so the calibrated multiplier is large: a scan over doubling
    # c found the 0.9 crossing near c=1024 (m=10240), where minima ties
    # (scored as failure) already absorb ~3% of trials.
    f = 0.1
    k = math.ceil(f ** -2 * math.log(1 / f))
    assert k == 231
    m_star = math.ceil(1024 / f)
    fresh = power_estimate("min", f, k, m_star, master_seed=64, replicates=200)
    assert fresh >= 0.9


@pytest.mark.parametrize("test_name,f,k,m_grid", [
    ("mean", 0.3, 1, [64, 192, 576, 1728]),
    ("min", 0.1, 231, [20, 60, 180, 540]),
])
def test_power_monotone_in_m(test_name, f, k, m_grid):
    rates = [power_estimate(test_name, f, k, m, master_seed=65, replicates=500, salt=i)
             for i, m in enumerate(m_grid)]
    for lo, hi in zip(rates, rates[1:]):
        assert hi >= lo - 0.02
