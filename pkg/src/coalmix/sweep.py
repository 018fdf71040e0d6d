"""Monte-Carlo power sweeps over the (f, kappa, m) grid.

One trial simulates a null dataset (divergence 1) and an alternative
dataset (divergence 1 - f) through the coalescent and sequence layers,
applies the selected test, and scores whether every verdict matched the
ground truth (undecided counts as failure).  Seeds derive from
(master_seed, cell_index, replicate_index), so results are reproducible and
independent of evaluation order.

Grid coordinates follow k = ceil(f^(2*kappa - 2)) and either
m = ceil(f^(-1-mu)) or m = ceil(c / (f^2 sqrt(k))).
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import detection, exact
from .errors import CalibrationError, DomainError
from .reconstruct import triplet_topology
from .sequences import pair_theta_samples, triplet_theta_samples

TESTS = ("oracle", "agnostic", "mean", "min", "triplet")
MAX_K = 10 ** 6
MAX_SITES = 10 ** 9          # per-dataset m*k guard


@dataclass(frozen=True)
class CellSpec:
    index: int
    test: str
    f: float
    kappa: float
    k: int
    mu_or_c: float
    m: int
    quantile_constant: float = 1.0


@dataclass(frozen=True)
class SweepConfig:
    test: str
    f_grid: tuple[float, ...]
    kappa_grid: tuple[float, ...]
    m_mode: str                       # "mu" or "c"
    m_grid: tuple[float, ...]
    replicates: int
    master_seed: int
    out_path: str | None = None
    quantile_constant: float = 1.0
    record_timing: bool = True

    def validate(self) -> None:
        if self.test not in TESTS:
            raise DomainError(f"unknown test {self.test!r}; choose from {TESTS}")
        if self.replicates < 1:
            raise DomainError("replicate count must be at least 1")
        if self.m_mode not in ("mu", "c"):
            raise DomainError("m_mode must be 'mu' or 'c'")
        if not self.f_grid or not self.kappa_grid or not self.m_grid:
            raise DomainError("all grids must be non-empty")
        for f in self.f_grid:
            if not 0.0 < f < 1.0:
                raise DomainError(f"f must lie in (0,1), got {f}")
        for kappa in self.kappa_grid:
            if not 0.0 < kappa < 1.0:
                raise DomainError(f"kappa must lie in (0,1), got {kappa}")
        for v in self.m_grid:
            if self.m_mode == "mu" and not 0.0 < v < 1.0:
                raise DomainError(f"mu must lie in (0,1), got {v}")
            if self.m_mode == "c" and v <= 0:
                raise DomainError(f"c must be positive, got {v}")
        for cell in self.cells():
            if cell.k > MAX_K:
                raise DomainError(f"cell {cell.index}: k = {cell.k} exceeds the {MAX_K} guard")
            if cell.m * cell.k > MAX_SITES:
                raise DomainError(
                    f"cell {cell.index}: m*k = {cell.m * cell.k} exceeds the {MAX_SITES} guard"
                )

    def cells(self) -> list[CellSpec]:
        out = []
        index = 0
        for f in self.f_grid:
            for kappa in self.kappa_grid:
                k = resolve_k(f, kappa)
                for v in self.m_grid:
                    m = resolve_m(f, k, self.m_mode, v)
                    out.append(
                        CellSpec(
                            index=index,
                            test=self.test,
                            f=f,
                            kappa=kappa,
                            k=k,
                            mu_or_c=v,
                            m=m,
                            quantile_constant=self.quantile_constant,
                        )
                    )
                    index += 1
        return out

    @classmethod
    def from_json(cls, path: str) -> "SweepConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if ("mu_grid" in raw) == ("c_grid" in raw):
            raise DomainError("config must set exactly one of mu_grid or c_grid")
        m_mode = "mu" if "mu_grid" in raw else "c"
        try:
            return cls(
                test=raw["test"],
                f_grid=tuple(raw["f_grid"]),
                kappa_grid=tuple(raw["kappa_grid"]),
                m_mode=m_mode,
                m_grid=tuple(raw.get("mu_grid", raw.get("c_grid"))),
                replicates=int(raw["replicates"]),
                master_seed=int(raw["master_seed"]),
                out_path=raw.get("out_path"),
                quantile_constant=float(raw.get("quantile_constant", 1.0)),
                record_timing=bool(raw.get("record_timing", True)),
            )
        except KeyError as exc:
            raise DomainError(f"config is missing required key {exc}") from None


def resolve_k(f: float, kappa: float) -> int:
    return math.ceil(f ** (2.0 * kappa - 2.0))


def resolve_m(f: float, k: int, mode: str, value: float) -> int:
    if mode == "mu":
        return math.ceil(f ** (-1.0 - value))
    return math.ceil(value / (f * f * math.sqrt(k)))


@dataclass
class SweepRecord:
    test: str
    f: float
    kappa: float
    k: int
    mu_or_c: float
    m: int
    replicates: int
    successes: int
    rate: float
    ci_lo: float
    ci_hi: float
    seconds: float
    error: str = ""


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """95% score interval; well behaved at the 0/1 boundary."""
    if n < 1 or not 0 <= successes <= n:
        raise DomainError(f"invalid counts: {successes}/{n}")
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == n else min(1.0, center + half)
    return lo, hi


def run_trial(cell: CellSpec, trial_seed, oracle_inputs: tuple[float, float, float] | None = None) -> bool:
    """One simulate-and-test evaluation; True when every verdict is correct."""
    rng = np.random.default_rng(trial_seed)
    if cell.test == "triplet":
        mats = triplet_theta_samples(cell.f, cell.m, cell.k, rng, closest=("1", "2"))
        call = triplet_topology(
            mats,
            quantile_constant=cell.quantile_constant,
            split_seed=int(rng.integers(2 ** 63)),
        )
        return call.closest == ("1", "2")

    null_thetas = pair_theta_samples(1.0, cell.m, cell.k, rng)
    alt_thetas = pair_theta_samples(1.0 - cell.f, cell.m, cell.k, rng)
    null_set = detection.GeneSampleSet(cell.k, null_thetas)
    alt_set = detection.GeneSampleSet(cell.k, alt_thetas)

    if cell.test == "oracle":
        if oracle_inputs is None:
            oracle_inputs = exact.oracle_tail_probs(cell.f, cell.k)
        p0, w, w_prime = oracle_inputs
        v_null = detection.oracle_quantile_test(null_set, p0, w, w_prime)
        v_alt = detection.oracle_quantile_test(alt_set, p0, w, w_prime)
        return v_null.decision == detection.NULL and v_alt.decision == detection.ALTERNATIVE
    if cell.test == "agnostic":
        verdict = detection.agnostic_two_sample_test(
            null_set,
            alt_set,
            quantile_constant=cell.quantile_constant,
            split_seed=int(rng.integers(2 ** 63)),
        )
        return verdict.alternative == 2
    if cell.test == "mean":
        return detection.mean_test(null_set, alt_set).alternative == 2
    if cell.test == "min":
        return detection.min_test(null_set, alt_set).alternative == 2
    raise DomainError(f"unknown test {cell.test!r}")


def run_cell(cell: CellSpec, master_seed: int, replicates: int) -> SweepRecord:
    start = time.perf_counter()
    oracle_inputs = exact.oracle_tail_probs(cell.f, cell.k) if cell.test == "oracle" else None
    successes = 0
    for rep in range(replicates):
        seed = np.random.SeedSequence(entropy=master_seed, spawn_key=(cell.index, rep))
        if run_trial(cell, seed, oracle_inputs=oracle_inputs):
            successes += 1
    lo, hi = wilson_interval(successes, replicates)
    return SweepRecord(
        test=cell.test,
        f=cell.f,
        kappa=cell.kappa,
        k=cell.k,
        mu_or_c=cell.mu_or_c,
        m=cell.m,
        replicates=replicates,
        successes=successes,
        rate=successes / replicates,
        ci_lo=lo,
        ci_hi=hi,
        seconds=time.perf_counter() - start,
    )


def run_sweep(config: SweepConfig, threads: int = 1) -> list[SweepRecord]:
    """Evaluate every grid cell; records carry per-cell errors rather than raising.

    Cells are independent, so `threads > 1` runs them on a thread pool; the
    per-cell seed derivation makes results identical for any worker count,
    and records are assembled in grid order before writing.
    """
    config.validate()

    def evaluate(cell: CellSpec) -> SweepRecord:
        try:
            return run_cell(cell, config.master_seed, config.replicates)
        except Exception as exc:   # noqa: BLE001 - per-cell errors go into the CSV
            return SweepRecord(
                test=cell.test, f=cell.f, kappa=cell.kappa, k=cell.k,
                mu_or_c=cell.mu_or_c, m=cell.m, replicates=config.replicates,
                successes=0, rate=math.nan, ci_lo=math.nan, ci_hi=math.nan,
                seconds=0.0, error=f"{type(exc).__name__}: {exc}",
            )

    cells = config.cells()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(evaluate, cells))
    else:
        records = [evaluate(cell) for cell in cells]
    if config.out_path:
        write_sweep_csv(records, config.out_path, config)
    return records


SWEEP_COLUMNS = [
    "test", "f", "kappa", "k", "mu_or_c", "m",
    "replicates", "successes", "rate", "ci_lo", "ci_hi", "seconds",
]


def write_sweep_csv(records: list[SweepRecord], path: str, config: SweepConfig | None = None) -> None:
    """Atomic CSV write; timings are zeroed unless the config records them."""
    record_timing = config.record_timing if config is not None else True
    with_errors = any(r.error for r in records)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            if config is not None:
                fh.write(f"# test={config.test}\n")
                fh.write(f"# master_seed={config.master_seed}\n")
                fh.write(f"# replicates={config.replicates}\n")
                fh.write(f"# m_mode={config.m_mode}\n")
                fh.write(f"# quantile_constant={config.quantile_constant:.10g}\n")
            writer = csv.writer(fh)
            writer.writerow(SWEEP_COLUMNS + (["error"] if with_errors else []))
            for r in records:
                row = [
                    r.test, "%.10g" % r.f, "%.10g" % r.kappa, r.k, "%.10g" % r.mu_or_c,
                    r.m, r.replicates, r.successes, "%.6f" % r.rate,
                    "%.6f" % r.ci_lo, "%.6f" % r.ci_hi,
                    "%.3f" % (r.seconds if record_timing else 0.0),
                ]
                if with_errors:
                    row.append(r.error)
                writer.writerow(row)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def power_estimate(
    test: str,
    f: float,
    k: int,
    m: int,
    master_seed: int,
    replicates: int,
    salt: int = 0,
    quantile_constant: float = 1.0,
) -> float:
    """Empirical success rate of `test` at an explicit (f, k, m) point."""
    cell = CellSpec(index=0, test=test, f=f, kappa=math.nan, k=k, mu_or_c=math.nan,
                    m=m, quantile_constant=quantile_constant)
    oracle_inputs = exact.oracle_tail_probs(f, k) if test == "oracle" else None
    successes = 0
    for rep in range(replicates):
        seed = np.random.SeedSequence(entropy=master_seed, spawn_key=(salt, rep))
        if run_trial(cell, seed, oracle_inputs=oracle_inputs):
            successes += 1
    return successes / replicates


@dataclass
class CalibrationResult:
    f: float
    kappa: float
    k: int
    target: float
    c: float                     # certified-indistinguishable multiplier
    c_prime: float               # empirical-power multiplier
    m_at_c: int
    m_at_c_prime: int
    tv_upper_at_c: float
    power_at_c_prime: float
    evidence: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, default=float, indent=2)


def calibrate_constants(
    f: float,
    kappa: float,
    target: float,
    test: str = "oracle",
    master_seed: int = 0,
    replicates: int = 200,
    quantile_constant: float = 1.0,
    c_max: float = 65536.0,
) -> CalibrationResult:
    """Locate the constants in m = ceil(c / (f^2 sqrt(k))) for both theorems.

    The indistinguishability side (c) is certified by exact computation:
    bisection until the tensorized Hellinger -> total-variation upper bound
    drops to 1 - target, which lower-bounds any test's total error by
    target.  The distinguishability side (c') bisects on empirical power.
    Bracket failures raise CalibrationError instead of guessing.
    """
    if not 0.5 < target < 1.0:
        raise DomainError(f"target power must lie in (0.5, 1), got {target}")
    if test not in TESTS:
        raise DomainError(f"unknown test {test!r}")
    k = resolve_k(f, kappa)
    if k > MAX_K:
        raise DomainError(f"k = {k} exceeds the {MAX_K} guard")
    delta = 1.0 - target

    null = exact.null_mixing_density(1.0)
    _, _, alt = exact.mixture_decompose(f)
    h2_single = exact.hellinger2(exact.pmf_theta(k, null), exact.pmf_theta(k, alt))

    def tv_upper(c: float) -> float:
        return exact.tv_bracket_m(h2_single, resolve_m(f, k, "c", c))[1]

    c_lo = 1e-6
    if tv_upper(c_lo) > delta:
        raise CalibrationError(
            f"bracket failure on the exact side: even m = 1 gives TV upper bound "
            f"{tv_upper(c_lo):.4f} > {delta:.4f}; (f={f}, k={k}) is outside the regime"
        )
    c_hi = c_lo
    while tv_upper(c_hi) <= delta:
        c_hi *= 2.0
        if c_hi > c_max:
            raise CalibrationError("bracket failure on the exact side: bound never crossed")
    exact_probes = []
    for _ in range(60):
        mid = math.sqrt(c_lo * c_hi)
        if tv_upper(mid) <= delta:
            c_lo = mid
        else:
            c_hi = mid
        exact_probes.append((mid, resolve_m(f, k, "c", mid), tv_upper(mid)))
    c = c_lo

    def power(cv: float, salt: int) -> float:
        return power_estimate(
            test, f, k, resolve_m(f, k, "c", cv), master_seed, replicates,
            salt=salt, quantile_constant=quantile_constant,
        )

    power_probes = []
    lo, hi = None, None
    cv, salt = 1.0, 0
    while cv <= c_max:
        p = power(cv, salt)
        power_probes.append((cv, resolve_m(f, k, "c", cv), p))
        salt += 1
        if p >= target:
            hi = cv
            break
        lo = cv
        cv *= 2.0
    if hi is None:
        raise CalibrationError(
            f"bracket failure on the power side: {test} never reached {target} up to c={c_max}"
        )
    if lo is not None:
        for _ in range(10):
            mid = math.sqrt(lo * hi)
            if resolve_m(f, k, "c", mid) in (resolve_m(f, k, "c", lo), resolve_m(f, k, "c", hi)):
                break
            p = power(mid, salt)
            power_probes.append((mid, resolve_m(f, k, "c", mid), p))
            salt += 1
            if p >= target:
                hi = mid
            else:
                lo = mid
    c_prime = hi
    power_final = next(p for cv2, _, p in reversed(power_probes) if cv2 == c_prime)

    return CalibrationResult(
        f=f, kappa=kappa, k=k, target=target,
        c=c, c_prime=c_prime,
        m_at_c=resolve_m(f, k, "c", c),
        m_at_c_prime=resolve_m(f, k, "c", c_prime),
        tv_upper_at_c=tv_upper(c),
        power_at_c_prime=power_final,
        evidence={
            "h2_single": h2_single,
            "exact_probes": exact_probes[-8:],
            "power_probes": power_probes,
            "replicates": replicates,
            "test": test,
        },
    )


def find_m_star(
    f: float,
    k: int,
    power_target: float = 0.5,
    test: str = "oracle",
    master_seed: int = 0,
    replicates: int = 200,
    m_max: int = 10 ** 6,
) -> int:
    """Smallest m (up to bisection resolution) whose success rate reaches the target."""
    if test not in TESTS:
        raise DomainError(f"unknown test {test!r}")

    salt = [0]

    def power(m: int) -> float:
        salt[0] += 1
        return power_estimate(test, f, k, m, master_seed, replicates, salt=salt[0])

    lo, hi = 1, 2
    while power(hi) < power_target:
        lo, hi = hi, hi * 2
        if hi > m_max:
            raise CalibrationError(f"no m <= {m_max} reaches success rate {power_target}")
    while hi - lo > max(1, hi // 64):
        mid = (lo + hi) // 2
        if power(mid) < power_target:
            lo = mid
        else:
            hi = mid
    return hi
