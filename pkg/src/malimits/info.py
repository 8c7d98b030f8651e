"""Log-det capacities, information density and the concentration machinery.

All quantities are in nats.  Expectations over the fading are Monte Carlo
estimates returned as :class:`~malimits.rand.McEstimate`.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np
from scipy.special import betaln

from .channel import (
    ActivityScenario,
    ChannelRealization,
    CovarianceSpec,
    SystemConfig,
    contributions,
    draw_gains,
    gram,
)
from .errors import InvalidArgumentError, NumericalFailureError
from .rand import McEstimate, RngStream, complex_normal, mc_samples

# upper bound on complex entries materialized at once inside one MC chunk
_MAX_BATCH_ENTRIES = 1 << 22


def logdet_pd(m: np.ndarray) -> np.ndarray:
    """Log-determinant of Hermitian positive-definite matrices via Cholesky."""
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"Cholesky factorization failed: {exc}") from None
    diag = np.real(np.diagonal(chol, axis1=-2, axis2=-1))
    return 2.0 * np.sum(np.log(diag), axis=-1)


def _eye_plus(g: np.ndarray) -> np.ndarray:
    return g + np.eye(g.shape[-1])


def _sub_batches(size: int, per_item: int):
    step = max(1, _MAX_BATCH_ENTRIES // max(1, per_item))
    for start in range(0, size, step):
        yield min(step, size - start)


def log_det_capacity(channels: ChannelRealization, q: CovarianceSpec, users: Iterable[int]) -> float:
    """``log det(I + sum_{k in users} H_k Q_k H_k^H)`` for one channel use."""
    users = tuple(sorted(set(int(u) for u in users)))
    if not users:
        return 0.0
    g = gram(channels.select(users), q.scale(users))
    return float(logdet_pd(_eye_plus(g)))


def _gram_sampler(cfg: SystemConfig, users: tuple[int, ...], shrink: float = 1.0):
    """Batch sampler of ``I + shrink * G_users`` over independent fading draws."""
    idx = np.asarray(users, dtype=int) - 1
    beta = cfg.beta[idx]
    scale = cfg.power[idx] / cfg.n_t * shrink
    per_item = len(users) * cfg.n_r * cfg.n_t

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        parts = []
        for sub in _sub_batches(size, per_item):
            h = draw_gains(rng, (sub,), beta, cfg.n_r, cfg.n_t)
            parts.append(_eye_plus(gram(h, scale)))
        return np.concatenate(parts, axis=0)

    return draw


def _trials(cfg: SystemConfig, trials: int | None) -> int:
    t = cfg.trials if trials is None else int(trials)
    if t < 2:
        raise InvalidArgumentError("trials must be at least 2")
    return t


def mutual_information(
    cfg: SystemConfig,
    a_md: Iterable[int],
    q: CovarianceSpec | None = None,
    trials: int | None = None,
    stream: RngStream | None = None,
    *,
    workers: int = 1,
) -> McEstimate:
    """Estimate ``E_H log det(I + sum_{k in a_md} H_k Q_k H_k^H)`` per channel use."""
    users = cfg.check_users(a_md)
    t = _trials(cfg, trials)
    if not users:
        return McEstimate.exact(0.0, t)
    if q is not None and (q.n_t != cfg.n_t or not np.array_equal(q.power, cfg.power)):
        raise InvalidArgumentError("covariance spec disagrees with the configuration")
    stream = stream or RngStream(cfg.seed)
    draw = _gram_sampler(cfg, users)
    x = mc_samples(lambda rng, size: logdet_pd(draw(rng, size)), t, stream,
                   chunk_size=cfg.chunk_size, workers=workers)
    return McEstimate.from_samples(x, cfg.z)


def density_terms(z: np.ndarray, phi_md: np.ndarray, g_md: np.ndarray) -> np.ndarray:
    """Per-use information density from noise, misdetected signal and its Gram matrix.

    ``log det(I+G) - |z|^2 + (z+phi)^H (I+G)^{-1} (z+phi)``, broadcast over
    leading axes.  The last axis of ``z``/``phi_md`` is the receive antenna.
    """
    omega = _eye_plus(g_md)
    try:
        chol = np.linalg.cholesky(omega)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"Cholesky factorization failed: {exc}") from None
    logdet = 2.0 * np.sum(np.log(np.real(np.diagonal(chol, axis1=-2, axis2=-1))), axis=-1)
    v = z + phi_md
    w = np.linalg.solve(chol, v[..., None])[..., 0]
    quad = np.sum(np.abs(w) ** 2, axis=-1)
    return logdet - np.sum(np.abs(z) ** 2, axis=-1) + quad


def information_density(
    y_block: np.ndarray,
    signatures: np.ndarray,
    channels: ChannelRealization,
    scenario: ActivityScenario,
    q: CovarianceSpec,
) -> float:
    """Conditional information density of the misdetected users' signatures.

    ``y_block`` is ``N_R x n0``; ``signatures`` is ``(n0, K, N_T)`` and
    ``channels.gains`` is ``(n0, K, N_R, N_T)``, both aligned with
    ``channels.users``.  The residual noise is recovered as
    ``z = y - sum_{k in truth} H_k s_k``.
    """
    if scenario.a_fa:
        raise InvalidArgumentError("the density is defined for a partition of the truth set; got false alarms")
    if set(scenario.a_eq) | set(scenario.a_md) != set(scenario.truth):
        raise InvalidArgumentError("a_eq and a_md must partition the truth set")
    if channels.gains.ndim != 4:
        raise InvalidArgumentError("channels must carry a leading channel-use axis")
    y = np.asarray(y_block)
    n0 = channels.gains.shape[0]
    if y.shape != (channels.gains.shape[2], n0):
        raise InvalidArgumentError(f"y_block shape {y.shape} does not match channels {channels.gains.shape}")
    if not scenario.a_md:
        return 0.0
    phi = contributions(channels, np.asarray(signatures))
    z = y.T - phi[:, channels.positions(scenario.truth), :].sum(axis=1)
    md = channels.positions(scenario.a_md)
    phi_md = phi[:, md, :].sum(axis=1)
    g_md = gram(channels.gains[:, md], q.scale(scenario.a_md))
    return float(np.sum(density_terms(z, phi_md, g_md)))


def information_density_samples(
    cfg: SystemConfig,
    a_md: Iterable[int],
    n0: int,
    trials: int | None = None,
    stream: RngStream | None = None,
    *,
    workers: int = 1,
) -> np.ndarray:
    """Draw ``trials`` independent values of the block information density.

    Only the noise and the misdetected users enter the density once the
    correctly detected users are subtracted, so those are all that is drawn.
    """
    users = cfg.check_users(a_md)
    t = _trials(cfg, trials)
    if n0 < 1:
        raise InvalidArgumentError("n0 must be at least 1")
    if not users:
        return np.zeros(t)
    stream = stream or RngStream(cfg.seed)
    idx = np.asarray(users, dtype=int) - 1
    beta = cfg.beta[idx]
    sig_std = np.sqrt(cfg.power[idx] / cfg.n_t)
    unit = np.ones(len(users))
    per_item = n0 * len(users) * cfg.n_r * cfg.n_t

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        out = []
        for sub in _sub_batches(size, per_item):
            h = draw_gains(rng, (sub, n0), beta, cfg.n_r, cfg.n_t)
            s = complex_normal(rng, (sub, n0, len(users), cfg.n_t)) * sig_std[:, None]
            z = complex_normal(rng, (sub, n0, cfg.n_r))
            phi_md = np.einsum("bukrt,bukt->bur", h, s)
            # scale the gains by sqrt(p/N_T) so one unit-weight Gram gives sum H Q H^H
            g_md = gram(h * sig_std[:, None, None], unit)
            out.append(density_terms(z, phi_md, g_md).sum(axis=1))
        return np.concatenate(out)

    return mc_samples(draw, t, stream, chunk_size=cfg.chunk_size, workers=workers)


def hardening_limit(cfg: SystemConfig, users: Iterable[int]) -> float:
    """Large-system limit ``N_R log(1 + sum_t beta_t p_t)`` of the log-det capacity."""
    users = cfg.check_users(users)
    if not users:
        raise InvalidArgumentError("hardening_limit needs a nonempty user set")
    return cfg.n_r * math.log1p(cfg.received_power(users))


def concentration_constant(
    cfg: SystemConfig,
    a_md: Iterable[int],
    trials: int | None = None,
    stream: RngStream | None = None,
    *,
    workers: int = 1,
) -> McEstimate:
    """Estimate the Bernstein scale ``c = 32 N_R + E[det(I+G_md)] exp(-I)``.

    ``E[det]`` and the mutual information ``I`` are estimated from the same
    draws.  The CI bounds combine the two marginal CIs in the conservative
    direction, so ``ci_high`` is the value to plug into the tail bound.
    """
    users = cfg.check_users(a_md)
    t = _trials(cfg, trials)
    base = 32.0 * cfg.n_r
    if not users:
        return McEstimate.exact(base + 1.0, t)
    stream = stream or RngStream(cfg.seed)
    draw = _gram_sampler(cfg, users)

    def both(rng, size):
        ld = logdet_pd(draw(rng, size))
        return np.stack([np.exp(ld), ld], axis=1)

    x = mc_samples(both, t, stream, chunk_size=cfg.chunk_size, workers=workers)
    det = McEstimate.from_samples(x[:, 0], cfg.z)
    mi = McEstimate.from_samples(x[:, 1], cfg.z)
    value = base + det.mean * math.exp(-mi.mean)
    hi = base + det.ci_high * math.exp(-mi.ci_low)
    lo = base + max(det.ci_low, 0.0) * math.exp(-mi.ci_high)
    # first-order propagation of the two standard errors (treated as independent)
    se = math.exp(-mi.mean) * math.hypot(det.std_error, det.mean * mi.std_error)
    return McEstimate(value, se, lo, hi, t)


def bernstein_tail_bound(n0: int, delta: float, c: float) -> float:
    """Two-sided tail bound ``2 exp(-n0 delta^2 / (4c^2 + 2c delta))``."""
    if n0 < 1:
        raise InvalidArgumentError("n0 must be at least 1")
    if delta < 0:
        raise InvalidArgumentError("delta must be non-negative")
    if not c > 0:
        raise InvalidArgumentError("c must be positive")
    if math.isinf(delta):
        return 0.0
    return 2.0 * math.exp(-n0 * delta * delta / (4.0 * c * c + 2.0 * c * delta))


def binary_entropy(p):
    """Binary entropy in nats, with ``0 log 0 = 0``."""
    arr = np.asarray(p, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise InvalidArgumentError(f"probability out of range: {p!r}")
    # evaluate on the smaller tail so that H(p) and H(1-p) share one code path
    m = np.minimum(arr, 1.0 - arr)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = 0.0 - (np.where(m > 0, m * np.log(m), 0.0) + (1 - m) * np.log1p(-m))
    return float(h) if h.ndim == 0 else h


def log_binomial(n, k):
    """``log C(n, k)`` in nats, evaluated through the log-beta function."""
    n_arr = np.asarray(n, dtype=float)
    k_arr = np.asarray(k, dtype=float)
    if np.any(k_arr < 0) or np.any(k_arr > n_arr) or np.any(n_arr < 0):
        raise InvalidArgumentError(f"need 0 <= k <= n, got n={n!r}, k={k!r}")
    trivial = (k_arr == 0) | (k_arr == n_arr)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.log1p(n_arr) - betaln(n_arr - k_arr + 1.0, k_arr + 1.0)
    out = np.where(trivial, 0.0, out)
    return float(out) if out.ndim == 0 else out
