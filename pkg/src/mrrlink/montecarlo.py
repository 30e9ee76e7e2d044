"""Reproducible trial engine and empirical-density helpers.

Every trial gets its own generator seeded from ``(master_seed, trial_index)``
through a fixed 64-bit mix, and trials are aggregated in fixed-size blocks
merged in block order.  Output therefore depends only on the master seed and
the trial count, never on how many worker processes ran the blocks.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

MASK64 = (1 << 64) - 1
BLOCK_SIZE = 256


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, trial_index: int) -> int:
    """Stable per-trial seed: two rounds of splitmix64 over master and index."""
    return splitmix64(splitmix64(master_seed & MASK64) ^ (trial_index & MASK64))


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, trial_index)))


@dataclass
class RunningStats:
    """Streaming count / mean / M2 (Welford), mergeable (Chan et al.)."""

    count: int = 0
    mean: float = 0.0
    M2: float = 0.0

    def push(self, x: float) -> None:
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.M2 += d * (x - self.mean)

    def push_many(self, xs) -> None:
        xs = np.asarray(xs, dtype=float).ravel()
        if xs.size == 0:
            return
        m = float(xs.mean())
        other = RunningStats(int(xs.size), m, float(((xs - m) ** 2).sum()))
        self.merge(other)

    def merge(self, other: RunningStats) -> RunningStats:
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.M2 = other.count, other.mean, other.M2
            return self
        n = self.count + other.count
        d = other.mean - self.mean
        self.mean += d * other.count / n
        self.M2 += other.M2 + d * d * self.count * other.count / n
        self.count = n
        return self

    @property
    def variance(self) -> float:
        return self.M2 / (self.count - 1) if self.count > 1 else math.nan

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def sem(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 1 else math.nan


@dataclass
class TrialSummary:
    n_trials: int
    stats: dict[str, RunningStats] = field(default_factory=dict)
    samples: dict[str, np.ndarray] | None = None


def _run_block(trial_fn, master_seed, start, stop, collect):
    stats: dict[str, RunningStats] = {}
    raw: dict[str, list] = {}
    for idx in range(start, stop):
        res = trial_fn(trial_rng(master_seed, idx))
        for key, val in res.items():
            arr = np.asarray(val, dtype=float).ravel()
            finite = arr[np.isfinite(arr)]
            stats.setdefault(key, RunningStats()).push_many(finite)
            if collect:
                raw.setdefault(key, []).append(arr)
    if collect:
        return stats, {k: np.concatenate(v) for k, v in raw.items()}
    return stats, None


def run_trials(
    trial_fn,
    n_trials: int,
    master_seed: int,
    *,
    workers: int = 1,
    collect: bool = False,
) -> TrialSummary:
    """Run ``trial_fn(rng) -> {name: value(s)}`` for ``n_trials`` seeded trials.

    Non-finite values (failed trials) are left out of the running statistics
    but kept in the collected samples.  ``trial_fn`` must be picklable when
    ``workers > 1``.
    """
    if n_trials < 1:
        raise ValueError("trial count must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    blocks = [(s, min(s + BLOCK_SIZE, n_trials)) for s in range(0, n_trials, BLOCK_SIZE)]
    if workers == 1 or len(blocks) == 1:
        results = [_run_block(trial_fn, master_seed, a, b, collect) for a, b in blocks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_block, trial_fn, master_seed, a, b, collect) for a, b in blocks
            ]
            results = [f.result() for f in futures]
    summary = TrialSummary(n_trials)
    raw: dict[str, list] = {}
    for stats, samples in results:
        for key, st in stats.items():
            summary.stats.setdefault(key, RunningStats()).merge(st)
        if samples is not None:
            for key, arr in samples.items():
                raw.setdefault(key, []).append(arr)
    if collect:
        summary.samples = {k: np.concatenate(v) for k, v in raw.items()}
    return summary


@dataclass(frozen=True)
class BinnedDensity:
    edges: np.ndarray
    density: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)


def empirical_pdf(samples, bins="fd") -> BinnedDensity:
    """Histogram normalised to unit mass; Freedman-Diaconis width by default.

    A sample of identical values gives a single unit-width bin of unit mass.
    """
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise ValueError("no finite samples")
    if np.ptp(x) == 0:
        edges = np.array([x[0] - 0.5, x[0] + 0.5])
        return BinnedDensity(edges, np.array([1.0]))
    density, edges = np.histogram(x, bins=bins, density=True)
    return BinnedDensity(edges, density)


def compare_density(empirical: BinnedDensity, analytical) -> dict[str, float]:
    """Sup-norm (relative to the analytical peak) and L1 distance.

    ``analytical`` is a callable density; it is averaged over each bin with
    five-point Gauss-Legendre so narrow peaks are not under-sampled.
    """
    nodes, weights = np.polynomial.legendre.leggauss(5)
    a, b = empirical.edges[:-1], empirical.edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    vals = np.asarray(analytical(pts.ravel()), dtype=float).reshape(pts.shape)
    binned = (vals * weights[None, :]).sum(axis=1) / 2.0
    peak = float(np.max(binned))
    sup = float(np.max(np.abs(empirical.density - binned))) / peak if peak > 0 else math.inf
    widths = empirical.widths
    # mass of the analytical density outside the histogram range counts fully
    inside = float((binned * widths).sum())
    l1 = float((np.abs(empirical.density - binned) * widths).sum()) + max(0.0, 1.0 - inside)
    return {"sup_norm_rel_peak": sup, "l1_distance": min(l1, 2.0)}


def compare_density_arrays(p, q, widths) -> dict[str, float]:
    """Same statistics for two densities already tabulated on common bins."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    w = np.asarray(widths, dtype=float)
    peak = float(np.max(q))
    sup = float(np.max(np.abs(p - q))) / peak if peak > 0 else math.inf
    return {"sup_norm_rel_peak": sup, "l1_distance": float((np.abs(p - q) * w).sum())}
