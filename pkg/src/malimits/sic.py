"""Successive interference cancellation: when does decoding one user at a time work?

The user decoded first is the last active index ``k``; every other active
user is treated as Gaussian interference.  Closed forms assume channel
hardening and are evaluated exactly; the Monte Carlo paths validate them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import SystemConfig, draw_gains, gram
from .errors import InvalidArgumentError
from .info import _eye_plus, _sub_batches, _trials, logdet_pd
from .rand import McEstimate, RngStream, complex_normal, mc_samples

CONVERGES = "converges"
DIVERGES = "diverges"


@dataclass(frozen=True)
class SicReport:
    c_first: float
    n_times_c: float
    dt_exponent: float
    verdict: str


@dataclass(frozen=True)
class SicDensity:
    """Per-use averages of the first-user density and its pieces."""

    density: McEstimate
    quad_all: McEstimate
    quad_residual: McEstimate
    rate: McEstimate


def _others_load(cfg: SystemConfig) -> tuple[float, float]:
    """``(beta p)`` of the first decoded user and the summed load of the other active users."""
    load = cfg.beta[: cfg.k] * cfg.power[: cfg.k]
    return float(load[-1]), float(np.sum(load[:-1]))


def sic_surrogate(cfg: SystemConfig) -> float:
    """Hardened first-user capacity ``N_R log(1 + beta p_k / (1 + sum_others beta p))``."""
    own, others = _others_load(cfg)
    return cfg.n_r * math.log1p(own / (1.0 + others))


def sic_first_user_capacity(
    cfg: SystemConfig,
    trials: int | None = None,
    stream: RngStream | None = None,
    *,
    workers: int = 1,
) -> tuple[McEstimate, float]:
    """Estimate ``E[log det(I+G_all) - log det(I+G_others)]`` over active users ``1..k``.

    Both log-dets use the same draw, so every sample is non-negative.  Returns
    the estimate and the hardened surrogate.
    """
    t = _trials(cfg, trials)
    stream = stream or RngStream(cfg.seed)
    k = cfg.k
    beta = cfg.beta[:k]
    scale = cfg.power[:k] / cfg.n_t
    per_item = k * cfg.n_r * cfg.n_t

    def draw(rng, size):
        out = []
        for sub in _sub_batches(size, per_item):
            h = draw_gains(rng, (sub,), beta, cfg.n_r, cfg.n_t)
            full = logdet_pd(_eye_plus(gram(h, scale)))
            rest = logdet_pd(_eye_plus(gram(h[:, :-1], scale[:-1]))) if k > 1 else 0.0
            out.append(full - rest)
        return np.concatenate(out)

    x = mc_samples(draw, t, stream, chunk_size=cfg.chunk_size, workers=workers)
    return McEstimate.from_samples(x, cfg.z), sic_surrogate(cfg)


def n_times_c(cfg: SystemConfig) -> float:
    """Closed-form ``n C`` for equal users with ``k = n``: ``n N_R log(1 + bp/(1+(n-1)bp))``."""
    if cfg.k != cfg.n:
        raise InvalidArgumentError(f"closed form needs k = n, got k={cfg.k}, n={cfg.n}")
    if not cfg.equal_users():
        raise InvalidArgumentError("closed form needs equal beta and power")
    bp = float(cfg.beta[0] * cfg.power[0])
    return cfg.n * cfg.n_r * math.log1p(bp / (1.0 + (cfg.n - 1) * bp))


def n_times_c_limit(cfgs: Sequence[SystemConfig], rel_tol: float = 0.01) -> tuple[list[float], str]:
    """``n C`` along a sequence of configurations and a convergence verdict.

    The sequence converges when its last two values differ by less than
    ``rel_tol`` relative to the last one.
    """
    if len(cfgs) < 2:
        raise InvalidArgumentError("need at least two configurations to judge convergence")
    if any(b.n <= a.n for a, b in zip(cfgs, cfgs[1:])):
        raise InvalidArgumentError("configurations must have strictly increasing n")
    values = [n_times_c(c) for c in cfgs]
    return values, convergence_verdict(values, rel_tol)


def convergence_verdict(values: Sequence[float], rel_tol: float = 0.01) -> str:
    last, prev = values[-1], values[-2]
    return CONVERGES if abs(last - prev) < rel_tol * abs(last) else DIVERGES


def dt_exponent(cfg: SystemConfig, epsilon: float) -> tuple[float, float]:
    """Exponent ``eps N_R n log(1 + bp_k/(1 + sum_others bp)) + log 2`` and the bound ``exp(-exponent)``."""
    if not 0 <= epsilon < 1:
        raise InvalidArgumentError("epsilon must lie in [0, 1)")
    own, others = _others_load(cfg)
    exponent = epsilon * cfg.n_r * cfg.n * math.log1p(own / (1.0 + others)) + math.log(2.0)
    return exponent, min(1.0, max(0.0, math.exp(-exponent)))


def sic_information_density(
    cfg: SystemConfig,
    trials: int | None = None,
    stream: RngStream | None = None,
    *,
    workers: int = 1,
) -> SicDensity:
    """Monte Carlo of the first user's per-use information density.

    With ``Sigma = I + G_others`` the density is
    ``log det(I+G_all) - log det(Sigma) - y^H (I+G_all)^{-1} y
    + (y - H_k s_k)^H Sigma^{-1} (y - H_k s_k)``.  Both quadratic forms
    should average to ``N_R``, leaving the rate term.
    """
    if cfg.k < 2:
        raise InvalidArgumentError("the interference-whitened density needs k >= 2")
    t = _trials(cfg, trials)
    stream = stream or RngStream(cfg.seed)
    k = cfg.k
    beta = cfg.beta[:k]
    sig_std = np.sqrt(cfg.power[:k] / cfg.n_t)
    unit = np.ones(k)
    per_item = k * cfg.n_r * cfg.n_t

    def draw(rng, size):
        out = []
        for sub in _sub_batches(size, per_item):
            h = draw_gains(rng, (sub,), beta, cfg.n_r, cfg.n_t) * sig_std[:, None, None]
            s = complex_normal(rng, (sub, k, cfg.n_t))
            z = complex_normal(rng, (sub, cfg.n_r))
            phi = np.einsum("bkrt,bkt->bkr", h, s)
            y = phi.sum(axis=1) + z
            resid = y - phi[:, -1]
            chol_all = np.linalg.cholesky(_eye_plus(gram(h, unit)))
            chol_rest = np.linalg.cholesky(_eye_plus(gram(h[:, :-1], unit[:-1])))
            ld_all = 2 * np.sum(np.log(np.real(np.diagonal(chol_all, axis1=-2, axis2=-1))), axis=-1)
            ld_rest = 2 * np.sum(np.log(np.real(np.diagonal(chol_rest, axis1=-2, axis2=-1))), axis=-1)
            q_all = np.sum(np.abs(np.linalg.solve(chol_all, y[..., None])[..., 0]) ** 2, axis=-1)
            q_res = np.sum(np.abs(np.linalg.solve(chol_rest, resid[..., None])[..., 0]) ** 2, axis=-1)
            rate = ld_all - ld_rest
            out.append(np.stack([rate - q_all + q_res, q_all, q_res, rate], axis=1))
        return np.concatenate(out)

    x = mc_samples(draw, t, stream, chunk_size=cfg.chunk_size, workers=workers)
    est = [McEstimate.from_samples(x[:, j], cfg.z) for j in range(4)]
    return SicDensity(*est)


def sic_report(
    cfgs: Sequence[SystemConfig],
    epsilon: float,
    trials: int | None = None,
    stream: RngStream | None = None,
    *,
    rel_tol: float = 0.01,
    workers: int = 1,
) -> list[SicReport]:
    """One report per configuration of an increasing-``n`` sequence with ``k = n``.

    ``c_first`` uses the hardened surrogate (exact, no sampling) unless
    ``trials`` is given.
    """
    values, verdict = n_times_c_limit(cfgs, rel_tol)
    reports = []
    for cfg, nc in zip(cfgs, values):
        if trials is None:
            c_first = sic_surrogate(cfg)
        else:
            sub = (stream or RngStream(cfg.seed)).child("sic", cfg.n)
            c_first = sic_first_user_capacity(cfg, trials, sub, workers=workers)[0].mean
        reports.append(SicReport(c_first, nc, dt_exponent(cfg, epsilon)[0], verdict))
    return reports
