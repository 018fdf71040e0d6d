"""Exact pmfs, mixture structure, divergences, and analytic helpers."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from coalmix.errors import DomainError
from coalmix.exact import (
    MixingDensity,
    ThetaPmf,
    binom_loglik_drop,
    binom_loglik_drop_curvature,
    binom_loglik_rate,
    binom_weighted_moments,
    empirical_pmf,
    hellinger2,
    hellinger2_partition,
    hellinger_mix_kernel,
    hellinger_scaling_scan,
    lower_tail,
    mixture_decompose,
    null_mixing_density,
    oracle_tail_probs,
    pmf_theta,
    point_mass_density,
    tensorize_h2,
    tv,
    tv_bracket_m,
    write_scan_csv,
)
from coalmix.rng import derive_rng
from coalmix.sequences import pair_theta_samples

P0_EDGE = 0.75 * (1 - math.exp(-2))          # null support lower end, ~0.648499
E0_X = 0.75 * (1 - math.exp(-2) / 3)         # null mean of X, ~0.716166


def test_null_density_support():
    mix = null_mixing_density(1.0)
    assert mix.lower == pytest.approx(P0_EDGE, abs=1e-12)
    assert mix.upper == 0.75
    with pytest.raises(DomainError):
        null_mixing_density(0.0)


def _integrate_over_support(mix, fn):
    # the density has an integrable (upper - x)^(-1/2) singularity; the
    # substitution x = upper - t^2 removes it for the scipy oracle
    def g(t):
        x = mix.upper - t * t
        return fn(x) * mix.density(x) * 2 * t

    val, err = integrate.quad(g, 0.0, math.sqrt(mix.upper - mix.lower), limit=200)
    return val


def test_null_density_normalizes_by_independent_quadrature():
    mix = null_mixing_density(1.0)
    assert abs(_integrate_over_support(mix, lambda x: 1.0) - 1.0) < 1e-8


def test_null_mean_closed_form_vs_independent_quadrature():
    # oracle first: integrate x * density(x) with scipy, then pin the closed form
    mix = null_mixing_density(1.0)
    mean = _integrate_over_support(mix, lambda x: x)
    assert abs(mean - E0_X) < 1e-8
    # pmf at k=1 is [1 - E[X], E[X]]
    pmf = pmf_theta(1, mix)
    assert pmf.probs[1] == pytest.approx(E0_X, abs=1e-9)
    assert pmf.probs[0] == pytest.approx(1 - E0_X, abs=1e-9)


def test_null_density_band():
    mix = null_mixing_density(1.0)
    xs = np.linspace(mix.lower + 1e-9, mix.p_bar - 1e-9, 500)
    g = mix.density(xs)
    assert np.all(g >= mix.rho - 1e-12)
    assert np.all(g <= 1.0 / mix.rho + 1e-12)


def test_mixture_sigma_values():
    sigma, signal, alt = mixture_decompose(0.1)
    assert sigma == pytest.approx(1 - math.exp(-0.1), abs=1e-15)
    assert sigma == pytest.approx(0.0951626, abs=1e-7)
    assert signal.lower == pytest.approx(0.75 * (1 - math.exp(-2 * 0.9)), abs=1e-12)
    assert signal.upper == pytest.approx(P0_EDGE, abs=1e-12)
    assert alt.upper == 0.75


def test_sigma_is_order_f():
    for f in (1e-3, 1e-5, 1e-7):
        sigma, _, _ = mixture_decompose(f)
        assert sigma / f == pytest.approx(1.0, abs=2 * f)


def test_mixture_decompose_rejects_bad_f():
    for f in (0.0, 1.0, -0.2):
        with pytest.raises(DomainError):
            mixture_decompose(f)


@pytest.mark.parametrize("f", [0.02, 0.1])
@pytest.mark.parametrize("k", [10, 50])
def test_mixture_identity(f, k):
    sigma, signal, alt = mixture_decompose(f)
    q = pmf_theta(k, alt)
    p0 = pmf_theta(k, null_mixing_density(1.0))
    p1 = pmf_theta(k, signal)
    blend = ThetaPmf(k=k, probs=(1 - sigma) * p0.probs + sigma * p1.probs, provenance="blend")
    assert tv(q, blend) < 1e-9


def test_pmf_normalization_and_positivity():
    for k in (0, 1, 7, 64, 513):
        for mix in (null_mixing_density(1.0), mixture_decompose(0.05)[1]):
            pmf = pmf_theta(k, mix)
            pmf.validate(tol=1e-10)


def test_pmf_k0_is_unit_mass():
    pmf = pmf_theta(0, null_mixing_density(1.0))
    assert pmf.probs.shape == (1,)
    assert pmf.probs[0] == pytest.approx(1.0, abs=1e-10)


def test_point_mass_pmf_is_binomial():
    pmf = pmf_theta(2, point_mass_density(0.5))
    assert np.allclose(pmf.probs, [0.25, 0.5, 0.25], atol=1e-14)
    k = 17
    pmf = pmf_theta(k, point_mass_density(0.3))
    assert np.allclose(pmf.probs, stats.binom.pmf(np.arange(k + 1), k, 0.3), atol=1e-13)


def test_point_mass_rejects_boundary():
    for p in (0.0, 1.0, -0.5):
        with pytest.raises(DomainError):
            point_mass_density(p)


def test_pmf_rejects_unnormalized_density():
    mix = null_mixing_density(1.0)
    bad = MixingDensity(
        lower=mix.lower, upper=mix.upper, tag="null", tau=mix.tau,
        z_lo=mix.z_lo, z_hi=mix.z_hi, log_norm=mix.log_norm + 0.3,
        rho=mix.rho, p_bar=mix.p_bar,
    )
    with pytest.raises(DomainError, match="normalized"):
        pmf_theta(5, bad)


def test_pmf_rejects_negative_k():
    with pytest.raises(DomainError):
        pmf_theta(-1, null_mixing_density(1.0))


def test_quadrature_matches_monte_carlo():
    f, k, n = 0.1, 20, 2 * 10 ** 5
    _, _, alt = mixture_decompose(f)
    exact_pmf = pmf_theta(k, alt)
    thetas = pair_theta_samples(1.0 - f, n, k, derive_rng(41))
    emp = empirical_pmf(thetas, k)
    assert tv(exact_pmf, emp) < 0.01


def test_hellinger_and_tv_basic_cases():
    a = ThetaPmf(k=1, probs=np.array([1.0, 0.0]), provenance="test")
    b = ThetaPmf(k=1, probs=np.array([0.0, 1.0]), provenance="test")
    c = ThetaPmf(k=1, probs=np.array([0.5, 0.5]), provenance="test")
    assert hellinger2(a, a) == 0.0
    assert hellinger2(a, b) == pytest.approx(2.0)
    assert hellinger2(a, c) == pytest.approx((1 - math.sqrt(0.5)) ** 2 + 0.5, abs=1e-12)
    assert tv(a, a) == 0.0
    assert tv(a, b) == pytest.approx(1.0)
    assert tv(a, c) == pytest.approx(0.5)


def test_divergences_reject_mismatched_k():
    a = ThetaPmf(k=1, probs=np.array([1.0, 0.0]), provenance="t")
    b = ThetaPmf(k=2, probs=np.array([1.0, 0.0, 0.0]), provenance="t")
    with pytest.raises(DomainError):
        hellinger2(a, b)
    with pytest.raises(DomainError):
        tv(a, b)


def test_tensorize_examples():
    assert tensorize_h2(0.0, 10) == 0.0
    assert tensorize_h2(0.7, 1) == pytest.approx(0.7, abs=1e-15)
    assert tensorize_h2(2.0, 5) == 2.0
    with pytest.raises(DomainError):
        tensorize_h2(2.5, 1)
    with pytest.raises(DomainError):
        tensorize_h2(0.5, 0)


def test_tv_bracket_examples():
    assert tv_bracket_m(0.0, 7) == (0.0, 0.0)
    assert tv_bracket_m(2.0, 1) == (1.0, 1.0)
    lo, hi = tv_bracket_m(0.02, 1)
    assert lo == pytest.approx(0.01)
    assert hi == pytest.approx(math.sqrt(0.02 * 0.995), abs=1e-12)


@given(st.floats(min_value=0.0, max_value=2.0), st.integers(min_value=1, max_value=10 ** 6))
def test_tv_bracket_orders(h2_single, m):
    lo, hi = tv_bracket_m(h2_single, m)
    assert 0.0 <= lo <= hi <= 1.0


def test_hellinger_mix_kernel_shape():
    assert hellinger_mix_kernel(0.3, 1.0) == 0.0
    s_down = np.linspace(0.0, 1.0, 200)
    s_up = np.linspace(1.0, 50.0, 200)
    k_down = hellinger_mix_kernel(0.3, s_down)
    k_up = hellinger_mix_kernel(0.3, s_up)
    assert np.all(np.diff(k_down) < 1e-15)       # strictly decreasing on [0,1]
    assert np.all(np.diff(k_up) > -1e-15)        # increasing on [1,inf)
    # two-sided bound above 1
    b = 0.3
    envelope = np.minimum(b * (s_up - 1), (b * (s_up - 1)) ** 2)
    assert np.all(hellinger_mix_kernel(b, s_up) <= envelope + 1e-12)


def test_hellinger_mix_kernel_domain():
    with pytest.raises(DomainError):
        hellinger_mix_kernel(-0.1, 1.0)
    with pytest.raises(DomainError):
        hellinger_mix_kernel(2.0, 0.0)   # 1 + b(s-1) < 0


def test_binom_loglik_rate_peaks_at_fraction():
    k = 40
    for j in (1, 13, 20, 39):
        xs = np.linspace(0.01, 0.99, 981)
        vals = binom_loglik_rate(j, k, xs)
        peak = xs[np.argmax(vals)]
        assert abs(peak - j / k) < 2e-3
        # derivative vanishes at j/k (finite differences)
        h = 1e-6
        d = (binom_loglik_rate(j, k, j / k + h) - binom_loglik_rate(j, k, j / k - h)) / (2 * h)
        assert abs(d) < 1e-6


def test_binom_loglik_drop_zero_shift():
    assert binom_loglik_drop(3, 10, 0.4, 0.0) == 0.0


def test_binom_loglik_drop_curvature_bound_and_oracle():
    rng = np.random.default_rng(7)
    for _ in range(200):
        k = int(rng.integers(1, 60))
        j = int(rng.integers(0, k + 1))
        p = float(rng.uniform(0.05, 0.95))
        x = float(rng.uniform(0.0, p * 0.98))
        curv = binom_loglik_drop_curvature(j, k, p, x)
        assert curv >= 0.5
        # finite-difference oracle for the second derivative
        h = min(1e-5, (p - x) / 10)
        fd = (
            binom_loglik_drop(j, k, p, x + h)
            - 2 * binom_loglik_drop(j, k, p, x)
            + binom_loglik_drop(j, k, p, max(x - h, 0.0))
        ) / (h * h)
        if x - h >= 0:
            assert fd == pytest.approx(curv, rel=1e-3, abs=1e-3)


def test_hellinger_sum_matches_moment_ratio_form():
    # assemble H^2 from the per-outcome expectation ratios and compare with
    # the direct pmf evaluation
    for f, k in ((0.1, 50), (0.02, 200)):
        sigma, signal, alt = mixture_decompose(f)
        null = null_mixing_density(1.0)
        p = pmf_theta(k, null)
        q = pmf_theta(k, alt)
        direct = hellinger2(p, q)
        m0 = binom_weighted_moments(k, null)
        m1 = binom_weighted_moments(k, signal)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(m0 > 0, m1 / np.where(m0 > 0, m0, 1.0), 0.0)
        terms = hellinger_mix_kernel(sigma, ratio) * p.probs
        assert abs(direct - terms.sum()) < 1e-9


def test_lower_tail_boundary_inclusive():
    pmf = ThetaPmf(k=10, probs=np.full(11, 1 / 11), provenance="t")
    assert lower_tail(pmf, 0.3) == pytest.approx(4 / 11)    # j = 0..3
    assert lower_tail(pmf, 0.299) == pytest.approx(3 / 11)  # j = 0..2


def test_oracle_tail_probs_order():
    p0, w, wp = oracle_tail_probs(0.05, 20)
    assert p0 == pytest.approx(P0_EDGE, abs=1e-12)
    assert 0 < w < wp < 1


def test_scan_single_point():
    rows = hellinger_scaling_scan(0.5, [0.1])
    assert len(rows) == 1
    row = rows[0]
    assert row.k == 10
    assert row.ratio > 0
    assert row.h2 == pytest.approx(row.h2_J0 + row.h2_J1 + row.h2_Jprime, abs=1e-15)


def test_scan_partition_matches_total():
    null = null_mixing_density(1.0)
    _, _, alt = mixture_decompose(0.1)
    p, q = pmf_theta(40, null), pmf_theta(40, alt)
    parts = hellinger2_partition(p, q, [0.3, 0.7])
    assert sum(parts) == pytest.approx(hellinger2(p, q), abs=1e-15)


def test_scan_rejects_bad_inputs():
    with pytest.raises(DomainError):
        hellinger_scaling_scan(0.0, [0.1])
    with pytest.raises(DomainError):
        hellinger_scaling_scan(0.5, [0.5])     # f above 0.2
    with pytest.raises(DomainError, match="guard"):
        hellinger_scaling_scan(0.01, [5e-5])   # k overflows the guard


def test_scan_csv_write(tmp_path):
    rows = hellinger_scaling_scan(0.5, [0.1, 0.05])
    path = tmp_path / "scan.csv"
    write_scan_csv(rows, str(path), metadata={"kappa": "0.5"})
    text = path.read_text().splitlines()
    assert text[0] == "# kappa=0.5"
    assert text[1] == "f,kappa,k,h2,ratio,h2_J0,h2_J1,h2_Jprime"
    assert len(text) == 4


def test_empirical_pmf_validation():
    with pytest.raises(DomainError):
        empirical_pmf(np.array([]), 5)
    with pytest.raises(DomainError):
        empirical_pmf(np.array([6]), 5)
    pmf = empirical_pmf(np.array([0, 1, 1, 5]), 5)
    assert pmf.probs[1] == 0.5
