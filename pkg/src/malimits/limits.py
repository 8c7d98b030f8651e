"""Thresholds, capacities and exponents for MIMO massive random access.

The identification-cost functions take ``mi_by_size``, a callable mapping a
misdetection-set size ``i`` to the mutual information of a size-``i`` set;
:func:`mi_by_size_mc` builds one from Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .channel import SystemConfig, draw_gains
from .errors import InvalidArgumentError
from .info import (
    _gram_sampler,
    _sub_batches,
    _trials,
    binary_entropy,
    log_binomial,
    logdet_pd,
    mutual_information,
)
from .rand import McEstimate, RngStream, mc_samples

MiBySize = Callable[[int], float]


@dataclass(frozen=True)
class RateAllocation:
    """Codebook sizes ``log M_k`` (nats) of the active users."""

    log_m: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.log_m)
        if not vals:
            raise InvalidArgumentError("rate allocation needs at least one user")
        if any(not v > 0 or not math.isfinite(v) for v in vals):
            raise InvalidArgumentError("every log M_k must be positive and finite")
        object.__setattr__(self, "log_m", vals)

    @classmethod
    def equal(cls, k: int, log_m: float = 1.0) -> "RateAllocation":
        return cls((log_m,) * k)

    @classmethod
    def from_groups(cls, counts: Sequence[int], log_m: Sequence[float]) -> "RateAllocation":
        if len(counts) != len(log_m):
            raise InvalidArgumentError("group counts and group log M lists differ in length")
        vals: list[float] = []
        for c, v in zip(counts, log_m):
            if c < 1:
                raise InvalidArgumentError("group counts must be positive")
            vals.extend([v] * int(c))
        return cls(tuple(vals))

    @property
    def mu(self) -> np.ndarray:
        x = np.asarray(self.log_m)
        return x / x.sum()

    def c(self, n: int) -> np.ndarray:
        return n * self.mu


@dataclass(frozen=True)
class RegionSpec:
    """Rate classes of the finite-dimension region: ``K_j`` users at rate ``V_j``."""

    group_counts: tuple[int, ...]
    group_rates: tuple[float, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.group_counts)
        rates = tuple(float(v) for v in self.group_rates)
        if len(counts) != len(rates) or not counts:
            raise InvalidArgumentError("need one rate per group and at least one group")
        if any(c < 1 for c in counts) or any(v < 0 for v in rates):
            raise InvalidArgumentError("group counts must be >= 1 and rates >= 0")
        object.__setattr__(self, "group_counts", counts)
        object.__setattr__(self, "group_rates", rates)

    @property
    def dimension(self) -> int:
        return len(self.group_counts)


@dataclass(frozen=True)
class LimitReport:
    n0_achievable: float
    n0_converse: float
    n0_asymptotic: float
    argmax_i: int
    theta: float
    rates: np.ndarray = field(repr=False)
    capacities: np.ndarray = field(repr=False)
    sum_rhs: float

    @property
    def infeasible(self) -> bool:
        return self.theta >= 1.0


def _check_alloc(cfg: SystemConfig, alloc: RateAllocation) -> None:
    if len(alloc.log_m) != cfg.k:
        raise InvalidArgumentError(f"allocation covers {len(alloc.log_m)} users, configuration has k={cfg.k}")


def _check_mi(value: float, what: str) -> float:
    value = float(value)
    if not value > 0 or not math.isfinite(value):
        raise InvalidArgumentError(f"{what} must be positive and finite, got {value}")
    return value


def _scan_identification(cfg: SystemConfig, mi_by_size: MiBySize, numerator) -> tuple[float, int]:
    best, best_i = 0.0, 0
    for i in range(1, cfg.k + 1):
        num = numerator(i)
        if num is None:
            continue
        ratio = num / _check_mi(mi_by_size(i), f"mutual information for size {i}")
        if ratio >= best:
            best, best_i = ratio, i
    return best, best_i


def _margin(cfg: SystemConfig, epsilon: float | None) -> float:
    eps = cfg.epsilon if epsilon is None else float(epsilon)
    if not 0 <= eps < 1:
        raise InvalidArgumentError("epsilon must lie in [0, 1)")
    return eps


def identification_cost_achievable(
    cfg: SystemConfig, mi_by_size: MiBySize, *, epsilon: float | None = None
) -> tuple[float, int]:
    """Sufficient signature length ``(1+eps) max_i log C(ell-k, i) / I(i)`` and its argmax.

    Sizes with no possible false-alarm set (``i > ell - k``) are skipped; ties
    go to the larger ``i``.  ``epsilon`` overrides the configuration's margin
    and may be 0.
    """
    eps = _margin(cfg, epsilon)
    free = cfg.ell - cfg.k

    def num(i):
        return log_binomial(free, i) if i <= free else None

    best, best_i = _scan_identification(cfg, mi_by_size, num)
    return (1.0 + eps) * best, best_i


def identification_cost_converse(
    cfg: SystemConfig, mi_by_size: MiBySize, *, epsilon: float | None = None
) -> tuple[float, int]:
    """Necessary signature length ``(1-eps) max_i log C(ell-k+i, i) / I(i)`` and its argmax."""
    eps = _margin(cfg, epsilon)
    free = cfg.ell - cfg.k
    best, best_i = _scan_identification(cfg, mi_by_size, lambda i: log_binomial(free + i, i))
    return (1.0 - eps) * best, best_i


def identification_cost_asymptotic(cfg: SystemConfig, mi_full: float) -> float:
    """``log C(ell, k) / I_full``, the large-``ell`` identification cost."""
    return log_binomial(cfg.ell, cfg.k) / _check_mi(mi_full, "mi_full")


def finite_threshold_achievable(
    cfg: SystemConfig, i: int, mi_i: float, delta1: float, delta2: float, gamma: float = 1.0
) -> float:
    """Finite-``ell`` sufficient signature length for misdetection size ``i``.

    The configuration's ``epsilon`` is the slack margin; ``gamma`` is a free positive constant.
    """
    if not 1 <= i <= cfg.k:
        raise InvalidArgumentError(f"i must lie in 1..k, got {i}")
    if not (0 < delta1 < 1 and 0 < delta2 < 1):
        raise InvalidArgumentError("delta1 and delta2 must lie in (0, 1)")
    mi_i = _check_mi(mi_i, "mi_i")
    eps = cfg.epsilon
    free = cfg.ell - cfg.k
    fa = log_binomial(free, i) if i <= free else 0.0
    num = fa + (1 + eps) / eps * log_binomial(cfg.k, i) + math.log(cfg.k / delta1) + gamma / eps
    return (1 + eps) * num / ((1 - delta2) * mi_i)


def finite_threshold_converse(cfg: SystemConfig, i: int, mi_i: float, delta1: float, delta2: float) -> float:
    """Signature length below which the error probability cannot vanish, clipped at 0."""
    if not 1 <= i <= cfg.k:
        raise InvalidArgumentError(f"i must lie in 1..k, got {i}")
    if not 0 < delta1 <= 1 or delta2 < 0:
        raise InvalidArgumentError("need 0 < delta1 <= 1 and delta2 >= 0")
    mi_i = _check_mi(mi_i, "mi_i")
    value = (log_binomial(cfg.ell - cfg.k + i, i) + math.log(delta1)) / ((1 + delta2) * mi_i)
    return max(0.0, value)


def theta(cfg: SystemConfig, mi_full: float) -> float:
    """Identification overhead relative to the block: ``ell H2(alpha) / (n I_full)``."""
    mi_full = _check_mi(mi_full, "mi_full")
    return cfg.ell * binary_entropy(cfg.alpha()) / (cfg.n * mi_full)


def message_length_rates(cfg: SystemConfig, alloc: RateAllocation, mi_full: float) -> np.ndarray:
    """Boundary message lengths ``R_k = c_k I_full`` for a known active set."""
    _check_alloc(cfg, alloc)
    return alloc.c(cfg.n) * float(mi_full)


def message_length_capacity(cfg: SystemConfig, alloc: RateAllocation, mi_full: float) -> np.ndarray:
    """``B_k = c_k I_full - mu_k ell H2(alpha)``; negative entries mean identification eats the block."""
    _check_alloc(cfg, alloc)
    penalty = cfg.ell * binary_entropy(cfg.alpha())
    return alloc.c(cfg.n) * float(mi_full) - alloc.mu * penalty


def region_rhs(cfg: SystemConfig, mi_full: float) -> float:
    return cfg.n * float(mi_full) - cfg.ell * binary_entropy(cfg.alpha())


def region_check(spec: RegionSpec, cfg: SystemConfig, mi_full: float) -> tuple[bool, float]:
    """Whether ``sum_j K_j V_j`` fits under the sum constraint; returns ``(inside, slack)``."""
    if sum(spec.group_counts) != cfg.k:
        raise InvalidArgumentError(f"group counts sum to {sum(spec.group_counts)}, expected k={cfg.k}")
    lhs = math.fsum(c * v for c, v in zip(spec.group_counts, spec.group_rates))
    slack = region_rhs(cfg, mi_full) - lhs
    return slack >= 0.0, slack


def activity_deviation_bound(ell: int, alpha: float, delta: float, n: int) -> float:
    """Chebyshev bound on ``Pr{|k_A - k| >= delta n}`` for Binomial(ell, alpha) activity."""
    if not delta > 0:
        raise InvalidArgumentError("delta must be positive")
    if not 0 <= alpha <= 1:
        raise InvalidArgumentError("alpha must lie in [0, 1]")
    if ell < 1 or n < 1:
        raise InvalidArgumentError("ell and n must be positive")
    var = ell * alpha * (1 - alpha)
    return min(1.0, var / (delta * delta * n * n))


def error_exponent_e0(
    cfg: SystemConfig,
    subset: Iterable[int],
    rho: float | None = None,
    trials: int | None = None,
    stream: RngStream | None = None,
    *,
    workers: int = 1,
) -> McEstimate:
    """Per-use Gallager function ``-log E_H det(I + G/(1+rho))^{-rho}``.

    The standard error comes from the delta method on the inner mean; the CI
    is the image of the inner CI under ``-log``.
    """
    rho = cfg.rho if rho is None else float(rho)
    if not 0 <= rho <= 1:
        raise InvalidArgumentError("rho must lie in [0, 1]")
    users = cfg.check_users(subset)
    t = _trials(cfg, trials)
    if not users or rho == 0:
        return McEstimate.exact(0.0, t)
    stream = stream or RngStream(cfg.seed)
    draw = _gram_sampler(cfg, users, shrink=1.0 / (1.0 + rho))
    x = mc_samples(lambda rng, size: np.exp(-rho * logdet_pd(draw(rng, size))), t, stream,
                   chunk_size=cfg.chunk_size, workers=workers)
    inner = McEstimate.from_samples(x, cfg.z)
    value = -math.log(inner.mean)
    se = inner.std_error / inner.mean
    hi = -math.log(max(inner.ci_low, np.finfo(float).tiny))
    lo = -math.log(min(inner.ci_high, 1.0))
    return McEstimate(value, se, min(lo, value), max(hi, value), t)


def error_exponent_rate(
    cfg: SystemConfig,
    subset: Iterable[int],
    alloc: RateAllocation,
    rho: float | None,
    mi_full: float,
    trials: int | None = None,
    stream: RngStream | None = None,
    *,
    epsilon: float | None = None,
    workers: int = 1,
) -> float:
    """Per-use error exponent of joint decoding for users ``subset`` of the active set ``1..k``.

    Rates are the backed-off boundary rates ``(1-eps) c_k I_full``; ``epsilon``
    defaults to the configuration's and may be 0 or 1 here.  A non-positive
    return value is a legitimate outcome, not an error.
    """
    rho = cfg.rho if rho is None else float(rho)
    eps = cfg.epsilon if epsilon is None else float(epsilon)
    if not 0 <= eps <= 1:
        raise InvalidArgumentError("epsilon must lie in [0, 1]")
    _check_alloc(cfg, alloc)
    users = cfg.check_users(subset)
    if not users or users[-1] > cfg.k:
        raise InvalidArgumentError("subset must be a nonempty subset of the active set 1..k")
    e0 = error_exponent_e0(cfg, users, rho, trials, stream, workers=workers).mean
    rates = (1 - eps) * alloc.c(cfg.n) * float(mi_full)
    rate_sum = float(np.sum(rates[np.asarray(users) - 1]))
    return e0 - (rho * rate_sum + log_binomial(cfg.k, len(users))) / cfg.n


def dof(cfg: SystemConfig) -> int:
    """Multiplexing gain ``min(N_R, k N_T)``."""
    return min(cfg.n_r, cfg.k * cfg.n_t)


def mi_by_size_mc(
    cfg: SystemConfig,
    trials: int | None = None,
    stream: RngStream | None = None,
    *,
    samples: int = 20,
    workers: int = 1,
) -> MiBySize:
    """Monte Carlo ``i -> I(i)`` for misdetection sets of size ``1..k``.

    With exchangeable users one draw of ``k`` users serves every size through
    prefix sums of their Gram matrices.  Otherwise each size takes the minimum
    over ``samples`` random size-``i`` user sets.
    """
    t = _trials(cfg, trials)
    stream = stream or RngStream(cfg.seed)
    if cfg.equal_users():
        values = _prefix_mi(cfg, t, stream.child("mi_by_size"), workers)
        table = {i + 1: float(v) for i, v in enumerate(values)}
    else:
        rng = stream.child("mi_by_size", "subsets").generator()
        table = {}
        for i in range(1, cfg.k + 1):
            best = math.inf
            for j in range(samples):
                users = rng.choice(cfg.ell, size=i, replace=False) + 1
                est = mutual_information(cfg, users, None, t, stream.child("mi_by_size", i, j), workers=workers)
                best = min(best, est.mean)
            table[i] = best

    def lookup(i: int) -> float:
        if i not in table:
            raise InvalidArgumentError(f"size {i} outside 1..{cfg.k}")
        return table[i]

    return lookup


def _prefix_mi(cfg: SystemConfig, trials: int, stream: RngStream, workers: int) -> np.ndarray:
    beta = np.full(cfg.k, cfg.beta[0])
    scale = cfg.power[0] / cfg.n_t
    eye = np.eye(cfg.n_r)
    per_item = cfg.k * cfg.n_r * max(cfg.n_r, cfg.n_t)

    def draw(rng, size):
        out = []
        for sub in _sub_batches(size, per_item):
            h = draw_gains(rng, (sub,), beta, cfg.n_r, cfg.n_t)
            # per-user H H^H, then prefix sums give the Gram matrix of users 1..i
            outer = np.einsum("bkrt,bkst->bkrs", h, np.conj(h)) * scale
            out.append(logdet_pd(np.cumsum(outer, axis=1) + eye))
        return np.concatenate(out)

    x = mc_samples(draw, trials, stream, chunk_size=cfg.chunk_size, workers=workers)
    return x.mean(axis=0)


def limit_report(
    cfg: SystemConfig,
    alloc: RateAllocation,
    mi_full: float,
    mi_by_size: MiBySize,
) -> LimitReport:
    n0_ach, arg = identification_cost_achievable(cfg, mi_by_size)
    n0_conv, _ = identification_cost_converse(cfg, mi_by_size)
    return LimitReport(
        n0_achievable=n0_ach,
        n0_converse=n0_conv,
        n0_asymptotic=identification_cost_asymptotic(cfg, mi_full),
        argmax_i=arg,
        theta=theta(cfg, mi_full),
        rates=message_length_rates(cfg, alloc, mi_full),
        capacities=message_length_capacity(cfg, alloc, mi_full),
        sum_rhs=region_rhs(cfg, mi_full),
    )
