"""Exhaustive maximum-likelihood active-set detection and error-rate sweeps."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .channel import ActivityScenario, ChannelRealization, SystemConfig, canonical_set, draw_gains
from .errors import BudgetExceededError, InvalidArgumentError
from .rand import RngStream, complex_normal, mc_samples

DEFAULT_BUDGET = 10**6
# cap on (trials x subsets) cost entries evaluated at once
_MAX_COST_ENTRIES = 1 << 22


@dataclass(frozen=True)
class DetectionTrial:
    """Outcome of one detection.  ``truth`` and ``i_md`` are ``None`` when unknown."""

    truth: tuple[int, ...] | None
    decoded: tuple[int, ...]
    i_md: int | None
    log_likelihoods: np.ndarray | None = None

    @property
    def correct(self) -> bool:
        return self.truth == self.decoded


@dataclass(frozen=True)
class SweepRow:
    n0: int
    trials: int
    errors: int
    pe: float
    ci_low: float
    ci_high: float
    i_md_counts: tuple[int, ...]  # errors with |A_md| = 1..k


def decompose_errors(trial: DetectionTrial) -> tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
    """``(A_eq, A_md, A_fa)`` of a trial with known truth."""
    if trial.truth is None:
        raise InvalidArgumentError("trial has no ground truth")
    s = ActivityScenario(trial.truth, trial.decoded)
    return s.a_eq, s.a_md, s.a_fa


def subset_table(ell: int, k: int, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """All size-``k`` subsets of ``0..ell-1`` in lexicographic order, one per row."""
    count = math.comb(ell, k)
    if count > budget:
        raise BudgetExceededError(f"C({ell},{k}) = {count} subsets exceeds the search budget {budget}")
    flat = np.fromiter(itertools.chain.from_iterable(itertools.combinations(range(ell), k)),
                       dtype=np.intp, count=count * k)
    return flat.reshape(count, k)


def subset_costs(cross: np.ndarray, corr: np.ndarray, subsets: np.ndarray) -> np.ndarray:
    """Residual energy minus ``|y|^2`` for every subset, batched over leading trials.

    ``cross`` is the real ``(..., ell, ell)`` Gram of per-user contributions and
    ``corr`` the real ``(..., ell)`` correlation of each contribution with ``y``.
    """
    lead = corr.shape[:-1]
    batch = int(np.prod(lead, dtype=np.int64)) if lead else 1
    step = max(1, _MAX_COST_ENTRIES // max(1, batch * subsets.shape[1] ** 2))
    out = []
    for start in range(0, len(subsets), step):
        sub = subsets[start:start + step]
        quad = cross[..., sub[:, :, None], sub[:, None, :]].sum(axis=(-2, -1))
        out.append(quad - 2.0 * corr[..., sub].sum(axis=-1))
    return np.concatenate(out, axis=-1)


def _statistics(contrib: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # contrib: (..., n0, ell, N_R), y: (..., n0, N_R)
    cross = np.einsum("...uir,...ujr->...ij", np.conj(contrib), contrib).real
    corr = np.einsum("...uir,...ur->...i", np.conj(contrib), y).real
    return cross, corr


def ml_detect(
    y_block: np.ndarray,
    signatures: np.ndarray,
    channels: ChannelRealization,
    cfg: SystemConfig,
    budget: int = DEFAULT_BUDGET,
    *,
    truth: Iterable[int] | None = None,
    keep_likelihoods: bool = False,
) -> DetectionTrial:
    """Known-cardinality ML detection over every size-``k`` subset of ``1..ell``.

    ``y_block`` is ``N_R x n0``, ``signatures`` ``(n0, ell, N_T)`` and
    ``channels`` covers all ``ell`` users with gains ``(n0, ell, N_R, N_T)``.
    The decoded set minimizes the residual energy; exact ties go to the
    lexicographically smallest subset.
    """
    if channels.users != tuple(range(1, cfg.ell + 1)):
        raise InvalidArgumentError("channels must cover users 1..ell in order")
    gains = channels.gains
    if gains.ndim != 4 or gains.shape[1:] != (cfg.ell, cfg.n_r, cfg.n_t):
        raise InvalidArgumentError(f"gains shape {gains.shape} does not match the configuration")
    n0 = gains.shape[0]
    y = np.asarray(y_block)
    if y.shape != (cfg.n_r, n0):
        raise InvalidArgumentError(f"y_block shape {y.shape}, expected {(cfg.n_r, n0)}")
    signatures = np.asarray(signatures)
    if signatures.shape != (n0, cfg.ell, cfg.n_t):
        raise InvalidArgumentError(f"signatures shape {signatures.shape}, expected {(n0, cfg.ell, cfg.n_t)}")
    subsets = subset_table(cfg.ell, cfg.k, budget)
    contrib = np.einsum("ukrt,ukt->ukr", gains, signatures)
    cross, corr = _statistics(contrib, y.T)
    costs = subset_costs(cross, corr, subsets)
    best = int(np.argmin(costs))
    decoded = tuple(int(u) + 1 for u in subsets[best])
    lls = None
    if keep_likelihoods:
        energy = float(np.sum(np.abs(y) ** 2))
        lls = -(costs + energy) - n0 * cfg.n_r * math.log(math.pi)
    if truth is None:
        return DetectionTrial(None, decoded, None, lls)
    truth = cfg.check_users(truth)
    if len(truth) != cfg.k:
        raise InvalidArgumentError(f"truth has {len(truth)} users, expected k={cfg.k}")
    i_md = len(set(truth) - set(decoded))
    return DetectionTrial(truth, decoded, i_md, lls)


def wilson_interval(errors: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise InvalidArgumentError("trials must be positive")
    p = errors / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def _trial_sampler(cfg: SystemConfig, n0: int, subsets: np.ndarray):
    ell, k = cfg.ell, cfg.k
    sig_std = np.sqrt(cfg.power / cfg.n_t)
    per_trial = max(n0 * ell * cfg.n_r * cfg.n_t, len(subsets) * k * k)
    step = max(1, _MAX_COST_ENTRIES // per_trial)

    def draw(rng, size):
        out = []
        for start in range(0, size, step):
            b = min(step, size - start)
            truth = np.sort(np.argsort(rng.random((b, ell)), axis=1)[:, :k], axis=1)
            h = draw_gains(rng, (b, n0), cfg.beta, cfg.n_r, cfg.n_t)
            s = complex_normal(rng, (b, n0, ell, cfg.n_t)) * sig_std[:, None]
            z = complex_normal(rng, (b, n0, cfg.n_r))
            contrib = np.einsum("bukrt,bukt->bukr", h, s)
            active = np.zeros((b, ell))
            np.put_along_axis(active, truth, 1.0, axis=1)
            y = np.einsum("bukr,bk->bur", contrib, active) + z
            cross, corr = _statistics(contrib, y)
            decoded = subsets[np.argmin(subset_costs(cross, corr, subsets), axis=1)]
            hits = (decoded[:, :, None] == truth[:, None, :]).any(axis=2).sum(axis=1)
            out.append(k - hits)
        return np.concatenate(out)

    return draw


def error_sweep(
    cfg: SystemConfig,
    n0_grid: Sequence[int],
    trials: int,
    stream: RngStream | None = None,
    *,
    workers: int = 1,
    budget: int = DEFAULT_BUDGET,
) -> list[SweepRow]:
    """Empirical ML error probability at each signature length in ``n0_grid``.

    Each trial draws a uniformly random active set of exactly ``k`` users,
    fresh fading, signatures and noise.
    """
    if trials < 1:
        raise InvalidArgumentError("trials must be positive")
    grid = [int(v) for v in n0_grid]
    if not grid:
        raise InvalidArgumentError("n0 grid is empty")
    if grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidArgumentError("n0 grid must be positive and strictly ascending")
    subsets = subset_table(cfg.ell, cfg.k, budget)
    stream = stream or RngStream(cfg.seed)
    rows = []
    for n0 in grid:
        i_md = mc_samples(_trial_sampler(cfg, n0, subsets), trials, stream.child("detect", n0),
                          chunk_size=cfg.chunk_size, workers=workers)
        errors = int(np.count_nonzero(i_md))
        lo, hi = wilson_interval(errors, trials, cfg.z)
        counts = tuple(int(c) for c in np.bincount(i_md, minlength=cfg.k + 1)[1:])
        rows.append(SweepRow(n0, trials, errors, errors / trials, lo, hi, counts))
    return rows


def detection_trial_from_sets(truth: Iterable[int], decoded: Iterable[int]) -> DetectionTrial:
    truth, decoded = canonical_set(truth), canonical_set(decoded)
    if len(truth) != len(decoded):
        raise InvalidArgumentError("known-cardinality trials need |truth| = |decoded|")
    return DetectionTrial(truth, decoded, len(set(truth) - set(decoded)))
