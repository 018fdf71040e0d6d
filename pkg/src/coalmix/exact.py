"""Exact single-gene distance-statistic distributions and divergences.

For a two-leaf clock tree the differing-site count of one gene is binomial
with k trials and a random success probability

    X = (3/4) * (1 - exp(-2*(tau + Z))),      Z ~ Exp(1),

so every pmf here is a binomial mixture  P[theta = j] = C(k,j) * E[X^j (1-X)^(k-j)].

The null model has tau = 1; the shorter tree has tau = 1 - f.  Because the
exponential is memoryless, the shorter tree's distribution decomposes as

    Q = (1 - sigma_f) * P_null + sigma_f * P_signal,   sigma_f = P[Z <= f],

where P_signal conditions Z on being at most f.  Quadrature is performed in
the Z variable: the X-space density blows up at the upper end of the
support, while the Z-space integrand exp(-z) * x(z)^j (1-x(z))^(k-j) is
smooth.  Products are assembled in log space with log-gamma so entries stay
accurate up to very large k.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DomainError

SUPPORT_CAP = 0.75           # limiting success probability at infinite distance
Z_TRUNCATION = 40.0          # exponential tail beyond this is < 5e-18
PANEL_TOL = 1e-14            # per-panel acceptance threshold
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)
_J_CHUNK = 16384


def success_probability(tau: float, z: np.ndarray | float) -> np.ndarray | float:
    """Map a coalescence offset z to the per-site success probability X."""
    return SUPPORT_CAP * -np.expm1(-2.0 * (tau + z))


@dataclass(frozen=True)
class MixingDensity:
    """Law of the latent success probability X on a support inside (0, 1).

    Exponential-window form: X = success_probability(tau, Z) with Z an
    Exp(1) variable restricted to [z_lo, z_hi] (log_norm is the log-mass of
    that window).  Point form (tau is None): X is degenerate at `point`,
    which turns the pmf into a pure binomial for unit tests.

    rho and p_bar record the band rho <= density <= 1/rho that holds on
    (lower, p_bar).
    """

    lower: float
    upper: float
    tag: str
    tau: float | None = None
    z_lo: float = 0.0
    z_hi: float = math.inf
    log_norm: float = 0.0
    rho: float | None = None
    p_bar: float | None = None
    point: float | None = None

    def validate(self) -> None:
        if self.point is not None:
            if not 0.0 < self.point < 1.0:
                raise DomainError(f"point mass must lie in (0,1), got {self.point}")
            return
        if self.tau is None or self.tau <= 0:
            raise DomainError("exponential-window density requires tau > 0")
        if not 0.0 <= self.z_lo < self.z_hi:
            raise DomainError(f"invalid window [{self.z_lo}, {self.z_hi}]")
        expected = _log_window_mass(self.z_lo, self.z_hi)
        if abs(self.log_norm - expected) > 1e-10:
            raise DomainError("density is not normalized over its window")

    def density(self, x: np.ndarray | float) -> np.ndarray:
        """X-space density, obtained from the Z law by change of variables."""
        if self.point is not None:
            raise DomainError("a point mass has no density function")
        x = np.asarray(x, dtype=float)
        inside = (x > self.lower) & (x < self.upper)
        u = np.where(inside, 1.0 - x / SUPPORT_CAP, 1.0)   # = exp(-2 (tau + z))
        z = -self.tau - 0.5 * np.log(u)
        g = np.exp(-z - self.log_norm) * 0.5 / (SUPPORT_CAP * u)
        return np.where(inside, g, 0.0)


def _log_window_mass(z_lo: float, z_hi: float) -> float:
    if math.isinf(z_hi):
        return -z_lo
    # log(exp(-z_lo) - exp(-z_hi))
    return -z_lo + math.log(-math.expm1(-(z_hi - z_lo)))


def _exp_window_density(tau: float, z_lo: float, z_hi: float, tag: str) -> MixingDensity:
    lower = float(success_probability(tau, z_lo))
    upper = float(success_probability(tau, z_hi)) if not math.isinf(z_hi) else SUPPORT_CAP
    log_norm = _log_window_mass(z_lo, z_hi)
    # density in z-coordinates is (2/3) e^(2 tau + z) / mass: increasing in z
    z_cap = min(2.0, z_hi)
    g_lo = (2.0 / 3.0) * math.exp(2.0 * tau + z_lo - log_norm)
    g_hi = (2.0 / 3.0) * math.exp(2.0 * tau + z_cap - log_norm)
    return MixingDensity(
        lower=lower,
        upper=upper,
        tag=tag,
        tau=tau,
        z_lo=z_lo,
        z_hi=z_hi,
        log_norm=log_norm,
        rho=min(g_lo, 1.0 / g_hi),
        p_bar=float(success_probability(tau, z_cap)),
    )


def null_mixing_density(tau: float) -> MixingDensity:
    """Law of X for the two-leaf tree with divergence time tau."""
    if tau <= 0:
        raise DomainError(f"divergence time must be positive, got {tau}")
    return _exp_window_density(tau, 0.0, math.inf, "null")


def point_mass_density(p: float) -> MixingDensity:
    """Degenerate mixing at a fixed success probability (pure binomial)."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"success probability must lie in (0,1), got {p}")
    return MixingDensity(lower=p, upper=p, tag="point", point=p)


def mixture_decompose(f: float) -> tuple[float, MixingDensity, MixingDensity]:
    """Split the shorter tree's law: Q = (1-sigma_f) * null + sigma_f * signal.

    Returns (sigma_f, signal density, Q density).  sigma_f = 1 - exp(-f)
    exactly; the signal component conditions the coalescence offset on
    falling inside the shortened branch, giving support (lower, p0) with
    lower = (3/4)(1 - exp(-2(1-f))).
    """
    if not 0.0 < f < 1.0:
        raise DomainError(f"branch shortening f must lie in (0,1), got {f}")
    sigma_f = -math.expm1(-f)
    signal = _exp_window_density(1.0 - f, 0.0, f, "signal")
    alternative = _exp_window_density(1.0 - f, 0.0, math.inf, "alternative")
    return sigma_f, signal, alternative


@dataclass
class ThetaPmf:
    """Distribution of the differing-site count on {0, ..., k}."""

    k: int
    probs: np.ndarray
    provenance: str
    sigma_f: float | None = None

    def validate(self, tol: float = 1e-10) -> None:
        if self.probs.shape != (self.k + 1,):
            raise DomainError(f"pmf must have k+1 = {self.k + 1} entries")
        if self.probs.min() < 0:
            raise DomainError("pmf entries must be nonnegative")
        if abs(self.probs.sum() - 1.0) > tol:
            raise DomainError(f"pmf sums to {self.probs.sum()}, not 1")


def pmf_theta(k: int, mix: MixingDensity) -> ThetaPmf:
    """Exact pmf entries C(k,j) * E[X^j (1-X)^(k-j)] by adaptive quadrature.

    Gauss-Legendre panels over the Z window are bisected until the
    per-panel refinement difference drops below PANEL_TOL, giving absolute
    entry errors well under 1e-12.  The Exp(1) tail is truncated at
    Z_TRUNCATION (mass < 5e-18).
    """
    if k < 0:
        raise DomainError(f"site count must be nonnegative, got {k}")
    mix.validate()
    if mix.point is not None:
        j = np.arange(k + 1, dtype=float)
        logp = (
            gammaln(k + 1) - gammaln(j + 1) - gammaln(k - j + 1)
            + j * math.log(mix.point) + (k - j) * math.log1p(-mix.point)
        )
        return ThetaPmf(k=k, probs=np.exp(logp), provenance=mix.tag)
    probs = _window_quadrature(k, mix, with_binom=True)
    return ThetaPmf(k=k, probs=probs, provenance=mix.tag)


def binom_weighted_moments(k: int, mix: MixingDensity) -> np.ndarray:
    """E[X^j (1-X)^(k-j)] for j = 0..k, without the binomial coefficient.

    Accepted panels here must converge in relative terms: the values span
    hundreds of orders of magnitude across j, so an absolute threshold
    would stop refining where entries are tiny but ratio-relevant.
    """
    if k < 0:
        raise DomainError(f"site count must be nonnegative, got {k}")
    mix.validate()
    if mix.point is not None:
        j = np.arange(k + 1, dtype=float)
        return np.exp(j * math.log(mix.point) + (k - j) * math.log1p(-mix.point))
    return _window_quadrature(k, mix, with_binom=False, rel_tol=1e-12)


def _window_quadrature(
    k: int, mix: MixingDensity, with_binom: bool, rel_tol: float | None = None
) -> np.ndarray:
    j = np.arange(k + 1, dtype=float)
    if with_binom:
        log_coeff = gammaln(k + 1) - gammaln(j + 1) - gammaln(k - j + 1)
    else:
        log_coeff = np.zeros(k + 1)
    z_hi = min(mix.z_hi, mix.z_lo + Z_TRUNCATION)

    def eval_panel(lo: float, hi: float) -> np.ndarray:
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        z = mid + half * _GL_NODES
        wz = half * _GL_WEIGHTS * np.exp(-z - mix.log_norm)
        x = success_probability(mix.tau, z)
        lx = np.log(x)
        l1x = np.log1p(-x)
        out = np.empty(k + 1)
        for start in range(0, k + 1, _J_CHUNK):
            stop = min(start + _J_CHUNK, k + 1)
            jj = j[start:stop, None]
            block = np.exp(log_coeff[start:stop, None] + jj * lx + (k - jj) * l1x)
            out[start:stop] = block @ wz
        return out

    def accepted(coarse: np.ndarray, fine: np.ndarray) -> bool:
        if rel_tol is None:
            return float(np.max(np.abs(fine - coarse))) < PANEL_TOL
        scale = np.maximum(np.abs(fine), 1e-300)
        return float(np.max(np.abs(fine - coarse) / scale)) < rel_tol

    total = np.zeros(k + 1)
    stack = [(mix.z_lo, z_hi, eval_panel(mix.z_lo, z_hi))]
    while stack:
        lo, hi, coarse = stack.pop()
        mid = 0.5 * (lo + hi)
        left = eval_panel(lo, mid)
        right = eval_panel(mid, hi)
        fine = left + right
        if accepted(coarse, fine) or (hi - lo) < 1e-12:
            total += fine
        else:
            stack.append((lo, mid, left))
            stack.append((mid, hi, right))
    return total


def empirical_pmf(thetas: np.ndarray, k: int) -> ThetaPmf:
    thetas = np.asarray(thetas)
    if thetas.size == 0:
        raise DomainError("empirical pmf needs at least one sample")
    if thetas.min() < 0 or thetas.max() > k:
        raise DomainError("theta samples must lie in 0..k")
    counts = np.bincount(thetas.astype(np.int64), minlength=k + 1)
    return ThetaPmf(k=k, probs=counts / thetas.size, provenance="empirical")


def lower_tail(pmf: ThetaPmf, p: float) -> float:
    """P[theta / k <= p]."""
    mask = np.arange(pmf.k + 1) <= pmf.k * p + 1e-12
    return float(pmf.probs[mask].sum())


def _check_same_k(p: ThetaPmf, q: ThetaPmf) -> None:
    if p.k != q.k:
        raise DomainError(f"pmfs have different k: {p.k} vs {q.k}")


def hellinger2(p: ThetaPmf, q: ThetaPmf) -> float:
    """Squared Hellinger distance, in [0, 2]."""
    _check_same_k(p, q)
    return float(np.sum((np.sqrt(p.probs) - np.sqrt(q.probs)) ** 2))


def hellinger2_partition(p: ThetaPmf, q: ThetaPmf, cuts: list[float]) -> list[float]:
    """Squared-Hellinger contributions of j/k intervals split at `cuts`.

    Returns len(cuts)+1 sums over [0, c0), [c0, c1), ..., [c_last, 1]; they
    add up exactly to hellinger2(p, q).
    """
    _check_same_k(p, q)
    jk = np.arange(p.k + 1) / max(p.k, 1)
    terms = (np.sqrt(p.probs) - np.sqrt(q.probs)) ** 2
    edges = [-np.inf, *cuts, np.inf]
    return [float(terms[(jk >= lo) & (jk < hi)].sum()) for lo, hi in zip(edges[:-1], edges[1:])]


def tv(p: ThetaPmf, q: ThetaPmf) -> float:
    """Total variation distance, in [0, 1]."""
    _check_same_k(p, q)
    return float(0.5 * np.abs(p.probs - q.probs).sum())


def tv_arrays(p: np.ndarray, q: np.ndarray) -> float:
    return float(0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum())


def tensorize_h2(h2_single: float, m: int) -> float:
    """Squared Hellinger distance between m-fold product distributions."""
    if not 0.0 <= h2_single <= 2.0:
        raise DomainError(f"squared Hellinger distance must lie in [0,2], got {h2_single}")
    if m < 1:
        raise DomainError(f"gene count must be at least 1, got {m}")
    if h2_single == 2.0:
        return 2.0
    return float(2.0 * -np.expm1(m * np.log1p(-h2_single / 2.0)))


def tv_bracket_m(h2_single: float, m: int) -> tuple[float, float]:
    """Bracket [lower, upper] for the m-gene total variation distance."""
    h2_m = tensorize_h2(h2_single, m)
    upper = math.sqrt(h2_m * (1.0 - h2_m / 4.0))
    return h2_m / 2.0, min(1.0, upper)


def hellinger_mix_kernel(weight: float, ratio: np.ndarray | float) -> np.ndarray | float:
    """(sqrt(1 + weight*(ratio-1)) - 1)^2, the per-outcome mixture penalty.

    Strictly decreasing in ratio on [0,1] and increasing on [1,inf); for
    ratio >= 1 it is bounded by min(weight*(ratio-1), (weight*(ratio-1))^2).
    """
    if weight <= 0:
        raise DomainError(f"mixture weight must be positive, got {weight}")
    ratio = np.asarray(ratio, dtype=float)
    if np.any(ratio < 0):
        raise DomainError("ratio must be nonnegative")
    t = weight * (ratio - 1.0)
    if np.any(1.0 + t < 0):
        raise DomainError("1 + weight*(ratio-1) must be nonnegative")
    out = np.expm1(0.5 * np.log1p(t)) ** 2
    return float(out) if out.ndim == 0 else out


def binom_loglik_rate(j: int, k: int, x: np.ndarray | float) -> np.ndarray | float:
    """Per-site log-likelihood (j/k) log x + (1-j/k) log(1-x) for x in (0,1).

    Increasing on (0, j/k], decreasing on [j/k, 1); maximized at x = j/k.
    """
    if not 0 <= j <= k or k < 1:
        raise DomainError(f"need 0 <= j <= k with k >= 1, got j={j}, k={k}")
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0) | (x >= 1)):
        raise DomainError("x must lie strictly inside (0,1)")
    out = (j / k) * np.log(x) + (1.0 - j / k) * np.log1p(-x)
    return float(out) if out.ndim == 0 else out


def binom_loglik_drop(j: int, k: int, p: float, shift: np.ndarray | float) -> np.ndarray | float:
    """Log-likelihood loss when the success probability drops from p by `shift`.

    Equals binom_loglik_rate(j,k,p) - binom_loglik_rate(j,k,p-shift); defined
    for 0 <= shift < p.  Its second derivative in `shift` is at least 1/2.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0,1), got {p}")
    shift = np.asarray(shift, dtype=float)
    if np.any((shift < 0) | (shift >= p)):
        raise DomainError("shift must lie in [0, p)")
    if not 0 <= j <= k or k < 1:
        raise DomainError(f"need 0 <= j <= k with k >= 1, got j={j}, k={k}")
    # log1p on both sides keeps the value exactly 0 at shift = 0
    out = (j / k) * (np.log(p) - np.log(p - shift)) + (1.0 - j / k) * (
        np.log1p(-p) - np.log1p(shift - p)
    )
    return float(out) if out.ndim == 0 else out


def binom_loglik_drop_curvature(j: int, k: int, p: float, shift: np.ndarray | float) -> np.ndarray | float:
    """Second derivative of binom_loglik_drop in `shift`; always >= 1/2."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0,1), got {p}")
    shift = np.asarray(shift, dtype=float)
    if np.any((shift < 0) | (shift >= p)):
        raise DomainError("shift must lie in [0, p)")
    out = (j / k) / (p - shift) ** 2 + (1.0 - j / k) / (1.0 - p + shift) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ScanRow:
    f: float
    kappa: float
    k: int
    h2: float
    ratio: float
    h2_J0: float
    h2_J1: float
    h2_Jprime: float


MAX_SCAN_K = 10 ** 8


def hellinger_scaling_scan(
    kappa: float, f_grid: list[float], interval_constant: float = 1.0
) -> list[ScanRow]:
    """H^2(null, alternative) along k = ceil(f^(2*kappa - 2)) with diagnostics.

    `ratio` is H^2 / (f^2 sqrt(k)), the quantity whose boundedness expresses
    the square-root trade-off.  The diagnostic columns split the Hellinger
    sum by the j/k windows [p0, p0 + C sqrt(log k / k)) (border), above it
    (high), and below p0 (low), with C = interval_constant.
    """
    if not 0.0 < kappa < 1.0:
        raise DomainError(f"kappa must lie in (0,1), got {kappa}")
    if interval_constant <= 0:
        raise DomainError("interval constant must be positive")
    rows = []
    null = null_mixing_density(1.0)
    for f in f_grid:
        if not 0.0 < f <= 0.2:
            raise DomainError(f"scan f values must lie in (0, 0.2], got {f}")
        k = math.ceil(f ** (2.0 * kappa - 2.0))
        if k > MAX_SCAN_K:
            raise DomainError(f"k = {k} exceeds the scan guard of {MAX_SCAN_K}")
        _, _, alt = mixture_decompose(f)
        p = pmf_theta(k, null)
        q = pmf_theta(k, alt)
        h2 = hellinger2(p, q)
        border = interval_constant * math.sqrt(math.log(max(k, 2)) / k)
        low, mid, high = hellinger2_partition(p, q, [null.lower, null.lower + border])
        rows.append(
            ScanRow(
                f=f,
                kappa=kappa,
                k=k,
                h2=h2,
                ratio=h2 / (f * f * math.sqrt(k)),
                h2_J0=mid,
                h2_J1=high,
                h2_Jprime=low,
            )
        )
    return rows


SCAN_COLUMNS = ["f", "kappa", "k", "h2", "ratio", "h2_J0", "h2_J1", "h2_Jprime"]


def write_scan_csv(rows: list[ScanRow], path: str, metadata: dict | None = None) -> None:
    """Write scan rows atomically with self-describing # metadata lines."""
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            for key, value in (metadata or {}).items():
                fh.write(f"# {key}={value}\n")
            writer = csv.writer(fh)
            writer.writerow(SCAN_COLUMNS)
            for r in rows:
                writer.writerow(
                    ["%.10g" % r.f, "%.10g" % r.kappa, r.k, "%.12g" % r.h2,
                     "%.12g" % r.ratio, "%.12g" % r.h2_J0, "%.12g" % r.h2_J1,
                     "%.12g" % r.h2_Jprime]
                )
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def oracle_tail_probs(f: float, k: int) -> tuple[float, float, float]:
    """(p0, w, w') for the known-models quantile test at (f, k).

    p0 is the lower edge of the null mixing support; w and w' are the exact
    probabilities that theta/k falls at or below p0 under the null and the
    shorter tree respectively.
    """
    null = null_mixing_density(1.0)
    _, _, alt = mixture_decompose(f)
    p0 = null.lower
    w = lower_tail(pmf_theta(k, null), p0)
    w_prime = lower_tail(pmf_theta(k, alt), p0)
    return p0, w, w_prime
