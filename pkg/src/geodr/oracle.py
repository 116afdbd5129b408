"""Ground-truth engines that never touch the parameter recursion.

``propagate_pmf`` pushes an explicit probability vector through one step of
``Y' = (Y_1 + ... + Y_eta - 1)_+``; ``mc_sample`` simulates the branching tree
directly. Both are used to check the closed-form laws from :mod:`geodr.glaw`.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .exceptions import DomainError, ResourceLimitError
from .glaw import GeometricTypeLaw

MAX_SUPPORT = 1 << 23
MIN_TOL = 1e-14


@dataclass(frozen=True)
class TruncatedPmf:
    """Probabilities of ``0..N`` plus a bound on the mass beyond ``N``."""

    masses: np.ndarray
    tail_bound: float = 0.0

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float)
        if masses.ndim != 1 or masses.size == 0:
            raise DomainError("masses must be a non-empty vector")
        if np.any(masses < 0) or self.tail_bound < 0:
            raise DomainError("masses and tail bound must be nonnegative")
        total = float(masses.sum()) + self.tail_bound
        if abs(total - 1) > 1e-12:
            raise DomainError(f"masses plus tail bound sum to {total!r}, not 1")
        object.__setattr__(self, "masses", masses)

    @property
    def support_size(self) -> int:
        return self.masses.size

    def mean(self) -> float:
        return float(np.dot(np.arange(self.masses.size), self.masses))


def unit_mass(k: int = 0) -> TruncatedPmf:
    masses = np.zeros(k + 1)
    masses[k] = 1.0
    return TruncatedPmf(masses, 0.0)


def geometric_type_pmf(law: GeometricTypeLaw, tol: float = 1e-12) -> TruncatedPmf:
    """Closed-form pmf of ``G(r, p)`` cut where ``(1 - p)(1 - r)**N < tol/10``."""
    r, p, w = float(law.r), float(law.p), float(law.one_minus_p)
    log_q = math.log1p(-r)
    need = math.log(tol / 10) - math.log(w)
    n_max = max(1, math.ceil(need / log_q)) if need < 0 else 1
    if n_max > MAX_SUPPORT:
        raise ResourceLimitError(f"G(r={r}, p={p}) needs {n_max} support points at tol={tol}")
    k = np.arange(1, n_max + 1)
    masses = np.empty(n_max + 1)
    masses[0] = p
    masses[1:] = w * r * np.exp((k - 1) * log_q)
    tail = w * math.exp(n_max * log_q)
    # float sum drifts by a few ulps; absorb that into the tail estimate
    tail = max(tail, 1.0 - masses.sum(), 0.0)
    return TruncatedPmf(masses, tail)


def _compound(masses: np.ndarray, theta: float, n_terms: int, size: int) -> np.ndarray:
    """``sum_{j<=n_terms} theta (1-theta)^(j-1) masses^{*j}`` on indices ``0..size-1``."""
    nfft = 1 << (2 * size - 1).bit_length()
    base = np.zeros(size)
    k = min(size, masses.size)
    base[:k] = masses[:k]
    base_hat = np.fft.rfft(base, nfft)
    power = base.copy()
    out = theta * power
    weight = theta
    for _ in range(2, n_terms + 1):
        # linear convolution truncated to the kept window: exact for indices < size
        power = np.fft.irfft(np.fft.rfft(power, nfft) * base_hat, nfft)[:size]
        np.clip(power, 0.0, None, out=power)
        weight *= 1 - theta
        out += weight * power
    return out


def propagate_pmf(pmf: TruncatedPmf, m: float, tol: float = 1e-12, max_support: int = MAX_SUPPORT) -> TruncatedPmf:
    """Law of ``(Y_1 + ... + Y_eta - 1)_+`` with ``eta`` geometric of mean ``m``.

    The compound sum is truncated at the first ``J`` with ``(1 - 1/m)**J < tol/10``
    and evaluated on a window that doubles until the mass left outside it is
    below ``tol/10``. The returned tail bound is the full missing mass.
    """
    if tol < MIN_TOL:
        raise DomainError(f"tol must be at least {MIN_TOL}, got {tol}")
    if not m > 1:
        raise DomainError(f"m must exceed 1, got {m}")
    theta = 1.0 / m
    n_terms = max(1, math.ceil(math.log(tol / 10) / math.log1p(-theta)))
    masses = pmf.masses
    s_in = float(masses.sum())
    # total mass the truncated compound sum would carry on an infinite window
    j = np.arange(1, n_terms + 1)
    target = float(np.sum(theta * (1 - theta) ** (j - 1) * s_in**j))
    size = max(2 * masses.size, 64)
    while True:
        if size > max_support:
            raise ResourceLimitError(f"support would exceed {max_support} points at tol={tol}")
        comp = _compound(masses, theta, n_terms, size)
        if target - comp.sum() <= tol / 10:
            break
        size *= 2
    out = comp[1:].copy()
    out[0] += comp[0]
    # drop trailing points while the discarded mass stays within tol/10
    csum = np.cumsum(out[::-1])
    cut = int(np.searchsorted(csum, tol / 10, side="right"))
    if 0 < cut < out.size:
        out = out[: out.size - cut]
    tail = max(0.0, 1.0 - float(out.sum()))
    return TruncatedPmf(out, tail)


def tv_distance(a: TruncatedPmf, b: TruncatedPmf) -> float:
    """Upper bound on total variation: half of L1 over the kept support plus both tails."""
    n = max(a.masses.size, b.masses.size)
    x = np.zeros(n)
    y = np.zeros(n)
    x[: a.masses.size] = a.masses
    y[: b.masses.size] = b.masses
    if a.tail_bound == b.tail_bound and np.array_equal(x, y):
        return 0.0
    return min(1.0, 0.5 * (float(np.abs(x - y).sum()) + a.tail_bound + b.tail_bound))


@dataclass(frozen=True)
class McConfig:
    seed: int
    samples: int
    n: int
    node_budget: int = 10**8
    block_size: int = 4096
    n_jobs: int = 1

    def __post_init__(self):
        if self.samples < 1:
            raise DomainError("samples must be at least 1")
        if self.n < 0:
            raise DomainError("depth n must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.block_size < 1:
            raise DomainError("block_size must be at least 1")


@dataclass(frozen=True)
class McSummary:
    samples: int
    n: int
    seed: int
    counts: np.ndarray  # counts[k] = number of samples with Y_n = k
    mean: float
    mean_se: float
    survival: float
    survival_se: float

    @property
    def conditional_pmf(self) -> np.ndarray:
        """Empirical ``P(Y_n = k | Y_n >= 1)`` for ``k = 1, 2, ...``."""
        pos = self.counts[1:]
        total = pos.sum()
        return pos / total if total else pos.astype(float)


def expected_nodes(m: float, n: int) -> float:
    """Expected node count of one depth-``n`` tree, root included."""
    return float(sum(m**k for k in range(n + 1)))


def _sample_block(gen: np.random.Generator, size: int, law0: GeometricTypeLaw, m: float, n: int) -> np.ndarray:
    log_keep = math.log1p(-1.0 / m)
    counts_by_level = []
    width = size
    for _ in range(n):
        u = 1.0 - gen.random(width)
        eta = np.floor(np.log(u) / log_keep).astype(np.int64) + 1
        counts_by_level.append(eta)
        width = int(eta.sum())
    r0, p0 = float(law0.r), float(law0.p)
    u0 = gen.random(width)
    u1 = 1.0 - gen.random(width)
    leaves = np.floor(np.log(u1) / math.log1p(-r0)).astype(np.int64) + 1
    values = np.where(u0 < p0, 0, leaves)
    for eta in reversed(counts_by_level):
        starts = np.concatenate(([0], np.cumsum(eta)[:-1]))
        values = np.maximum(np.add.reduceat(values, starts) - 1, 0)
    return values


def mc_sample(law0: GeometricTypeLaw, m: float, cfg: McConfig) -> McSummary:
    """Simulate ``cfg.samples`` independent depth-``n`` trees.

    Samples are processed in blocks; block ``b`` draws from a Philox stream
    keyed by ``(seed, b)``, so the result does not depend on ``n_jobs``.
    """
    if not m > 1:
        raise DomainError(f"m must exceed 1, got {m}")
    need = cfg.samples * expected_nodes(m, cfg.n)
    if need > cfg.node_budget:
        raise ResourceLimitError(f"expected {need:.3g} tree nodes exceeds the budget {cfg.node_budget}")
    sizes = [min(cfg.block_size, cfg.samples - start) for start in range(0, cfg.samples, cfg.block_size)]

    def run(b: int) -> np.ndarray:
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, b])))
        return _sample_block(gen, sizes[b], law0, m, cfg.n)

    if cfg.n_jobs == 1:
        blocks = [run(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            blocks = list(pool.map(run, range(len(sizes))))
    y = np.concatenate(blocks)
    counts = np.bincount(y)
    n = y.size
    mean = float(y.mean())
    sd = float(y.std(ddof=1)) if n > 1 else 0.0
    surv = float(np.count_nonzero(y)) / n
    return McSummary(
        samples=n,
        n=cfg.n,
        seed=cfg.seed,
        counts=counts,
        mean=mean,
        mean_se=sd / math.sqrt(n),
        survival=surv,
        survival_se=math.sqrt(surv * (1 - surv) / n),
    )


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    critical: float
    p_value: float

    @property
    def rejected(self) -> bool:
        return self.statistic > self.critical


def conditional_chisquare(summary: McSummary, r: float, level: float = 0.999, min_expected: float = 5.0) -> ChiSquareResult:
    """Pearson test of the positive part of ``summary`` against geometric(``r``) on {1, 2, ...}.

    Bins are pooled from the right so every expected count is at least ``min_expected``;
    the last bin collects the whole upper tail.
    """
    observed = summary.counts[1:].astype(float)
    total = observed.sum()
    if total == 0:
        raise DomainError("no positive samples to test")
    r = float(r)
    obs_bins, exp_bins = [], []
    k = 1
    remaining = total
    while True:
        e = total * r * (1 - r) ** (k - 1)
        o = observed[k - 1] if k - 1 < observed.size else 0.0
        tail_e = total * (1 - r) ** k
        if e < min_expected or tail_e < min_expected:
            obs_bins.append(observed[k - 1 :].sum())
            exp_bins.append(remaining)
            break
        obs_bins.append(o)
        exp_bins.append(e)
        remaining -= e
        k += 1
    obs_bins, exp_bins = np.array(obs_bins), np.array(exp_bins)
    stat = float(np.sum((obs_bins - exp_bins) ** 2 / exp_bins))
    dof = max(1, obs_bins.size - 1)
    return ChiSquareResult(stat, dof, float(stats.chi2.ppf(level, dof)), float(stats.chi2.sf(stat, dof)))
