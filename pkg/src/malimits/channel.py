"""Scenario configuration and synthesis of channels, signatures and received blocks.

Users are labelled ``1..ell``.  All user sets are stored as sorted tuples.
Gain arrays are laid out as ``(..., K, N_R, N_T)`` where ``K`` indexes the
users of the accompanying tuple, in order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .rand import DEFAULT_CHUNK_SIZE, DEFAULT_Z, as_generator, complex_normal


def _frozen_vector(value, ell: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(ell, float(arr))
    if arr.shape != (ell,):
        raise InvalidArgumentError(f"{name} must be a scalar or have length ell={ell}, got shape {arr.shape}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SystemConfig:
    """All parameters of one massive-access scenario.

    ``beta`` and ``power`` accept a scalar, which is broadcast to every user.
    """

    ell: int
    k: int
    n: int
    n0: int
    n_r: int = 1
    n_t: int = 1
    beta: np.ndarray | float = 1.0
    power: np.ndarray | float = 1.0
    epsilon: float = 0.1
    rho: float = 1.0
    trials: int = 100_000
    seed: int = 0
    chunk_size: int = DEFAULT_CHUNK_SIZE
    z: float = DEFAULT_Z

    def __post_init__(self):
        ints = ("ell", "k", "n", "n0", "n_r", "n_t", "trials", "seed", "chunk_size")
        for name in ints:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise InvalidArgumentError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if not 1 <= self.k <= self.ell:
            raise InvalidArgumentError(f"need 1 <= k <= ell, got k={self.k}, ell={self.ell}")
        if not 1 <= self.n0 <= self.n:
            raise InvalidArgumentError(f"need 1 <= n0 <= n, got n0={self.n0}, n={self.n}")
        if self.n_r < 1 or self.n_t < 1:
            raise InvalidArgumentError("n_r and n_t must be at least 1")
        if self.trials < 1 or self.chunk_size < 1:
            raise InvalidArgumentError("trials and chunk_size must be positive")
        if not 0 <= self.seed < 1 << 64:
            raise InvalidArgumentError("seed must be an unsigned 64-bit integer")
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidArgumentError(f"rho must lie in [0, 1], got {self.rho}")
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidArgumentError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.z > 0:
            raise InvalidArgumentError("z must be positive")
        beta = _frozen_vector(self.beta, self.ell, "beta")
        power = _frozen_vector(self.power, self.ell, "power")
        if np.any(beta <= 0) or np.any(power <= 0):
            raise InvalidArgumentError("all beta and power entries must be positive")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "power", power)

    def alpha(self) -> float:
        return self.k / self.ell

    def replace(self, **changes) -> "SystemConfig":
        fields = {name: getattr(self, name) for name in self.__dataclass_fields__}
        if "ell" in changes and "beta" not in changes and np.all(self.beta == self.beta[0]):
            fields["beta"] = float(self.beta[0])
        if "ell" in changes and "power" not in changes and np.all(self.power == self.power[0]):
            fields["power"] = float(self.power[0])
        fields.update(changes)
        return SystemConfig(**fields)

    def check_users(self, users: Iterable[int]) -> tuple[int, ...]:
        """Validate a user set and return it as a sorted tuple."""
        out = canonical_set(users)
        if out and (out[0] < 1 or out[-1] > self.ell):
            raise InvalidArgumentError(f"user indices must lie in 1..{self.ell}, got {out}")
        return out

    def gain_scale(self, users: Sequence[int]) -> np.ndarray:
        """Per-user ``beta_k p_k / N_T`` for isotropic input covariance."""
        idx = np.asarray(users, dtype=int) - 1
        return self.beta[idx] * self.power[idx] / self.n_t

    def received_power(self, users: Sequence[int]) -> float:
        idx = np.asarray(users, dtype=int) - 1
        return float(np.sum(self.beta[idx] * self.power[idx]))

    def equal_users(self) -> bool:
        bp = self.beta * self.power
        return bool(np.all(bp == bp[0]))

    def __eq__(self, other):
        if not isinstance(other, SystemConfig):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in self.__dataclass_fields__
        )

    __hash__ = None


def canonical_set(users: Iterable[int]) -> tuple[int, ...]:
    out = tuple(sorted({int(u) for u in users}))
    return out


@dataclass(frozen=True)
class CovarianceSpec:
    """Input covariance for every user; only the isotropic mode is supported."""

    power: np.ndarray
    n_t: int
    mode: str = "isotropic"

    def __post_init__(self):
        if self.mode != "isotropic":
            raise InvalidArgumentError(f"unsupported covariance mode {self.mode!r}")

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "CovarianceSpec":
        return cls(cfg.power, cfg.n_t)

    def matrix(self, user: int) -> np.ndarray:
        """``Q_k = (p_k / N_T) I``, so that ``Tr(Q_k) = p_k``."""
        return np.eye(self.n_t) * (self.power[user - 1] / self.n_t)

    def scale(self, users: Sequence[int]) -> np.ndarray:
        idx = np.asarray(users, dtype=int) - 1
        return self.power[idx] / self.n_t


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Channel matrices ``H_k`` for ``users``.

    ``gains`` has shape ``(K, N_R, N_T)`` for one channel use or
    ``(uses, K, N_R, N_T)`` for a block of uses.
    """

    users: tuple[int, ...]
    gains: np.ndarray

    def __post_init__(self):
        if self.gains.ndim not in (3, 4) or self.gains.shape[-3] != len(self.users):
            raise InvalidArgumentError(
                f"gains shape {self.gains.shape} does not match {len(self.users)} users"
            )

    def positions(self, users: Iterable[int]) -> np.ndarray:
        lookup = {u: i for i, u in enumerate(self.users)}
        try:
            return np.array([lookup[u] for u in users], dtype=int)
        except KeyError as exc:
            raise InvalidArgumentError(f"user {exc.args[0]} has no channel in this realization") from None

    def select(self, users: Sequence[int]) -> np.ndarray:
        return self.gains[..., self.positions(users), :, :]


@dataclass(frozen=True)
class ActivityScenario:
    """Ground-truth active set and a decoded set, with the error decomposition."""

    truth: tuple[int, ...]
    decoded: tuple[int, ...]
    a_eq: tuple[int, ...] = field(init=False)
    a_md: tuple[int, ...] = field(init=False)
    a_fa: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        truth, decoded = canonical_set(self.truth), canonical_set(self.decoded)
        object.__setattr__(self, "truth", truth)
        object.__setattr__(self, "decoded", decoded)
        t, d = set(truth), set(decoded)
        object.__setattr__(self, "a_eq", canonical_set(t & d))
        object.__setattr__(self, "a_md", canonical_set(t - d))
        object.__setattr__(self, "a_fa", canonical_set(d - t))

    @classmethod
    def from_partition(cls, a_eq: Iterable[int], a_md: Iterable[int]) -> "ActivityScenario":
        """Scenario whose decoder found ``a_eq`` and missed ``a_md`` (no false alarms)."""
        a_eq, a_md = canonical_set(a_eq), canonical_set(a_md)
        if set(a_eq) & set(a_md):
            raise InvalidArgumentError("a_eq and a_md must be disjoint")
        return cls(a_eq + a_md, a_eq)


def gram(gains: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """``sum_k scale_k H_k H_k^H`` over the user axis of ``(..., K, N_R, N_T)`` gains."""
    g = gains * np.sqrt(scale)[:, None, None]
    n_r = g.shape[-2]
    flat = np.moveaxis(g, -3, -2).reshape(g.shape[:-3] + (n_r, -1))
    return flat @ np.conj(np.swapaxes(flat, -1, -2))


def draw_gains(rng: np.random.Generator, shape: tuple, beta: np.ndarray, n_r: int, n_t: int) -> np.ndarray:
    """Rayleigh gains of shape ``shape + (K, N_R, N_T)`` with per-user variance ``beta``."""
    a = complex_normal(rng, tuple(shape) + (len(beta), n_r, n_t))
    return a * np.sqrt(beta)[:, None, None]


def sample_activity(cfg: SystemConfig, stream) -> tuple[int, ...]:
    """Bernoulli(k/ell) activity, independently per user."""
    rng = as_generator(stream)
    active = rng.random(cfg.ell) < cfg.alpha()
    return tuple(int(i) + 1 for i in np.flatnonzero(active))


def sample_uniform_active_set(cfg: SystemConfig, rng: np.random.Generator) -> tuple[int, ...]:
    """Uniformly random active set of exactly ``k`` users."""
    return canonical_set(rng.choice(cfg.ell, size=cfg.k, replace=False) + 1)


def sample_channel(cfg: SystemConfig, users: Iterable[int], stream, uses: int | None = None) -> ChannelRealization:
    """Draw ``H_k`` for ``users``; one use, or ``uses`` i.i.d. uses stacked on axis 0."""
    users = cfg.check_users(users)
    rng = as_generator(stream)
    idx = np.asarray(users, dtype=int) - 1
    shape = () if uses is None else (int(uses),)
    return ChannelRealization(users, draw_gains(rng, shape, cfg.beta[idx], cfg.n_r, cfg.n_t))


def sample_signatures(cfg: SystemConfig, users: Iterable[int], n0: int, stream) -> np.ndarray:
    """Signature symbols ``s_k(i) ~ CN(0, Q_k)`` with shape ``(n0, K, N_T)``."""
    users = cfg.check_users(users)
    rng = as_generator(stream)
    s = complex_normal(rng, (int(n0), len(users), cfg.n_t))
    return s * np.sqrt(cfg.power[np.asarray(users, dtype=int) - 1] / cfg.n_t)[:, None]


def _stack_channels(channels) -> ChannelRealization:
    if isinstance(channels, ChannelRealization):
        if channels.gains.ndim != 4:
            raise InvalidArgumentError("a block realization needs a leading channel-use axis")
        return channels
    channels = list(channels)
    if not channels:
        raise InvalidArgumentError("empty channel sequence")
    users = channels[0].users
    if any(c.users != users or c.gains.ndim != 3 for c in channels):
        raise InvalidArgumentError("channel realizations must share one user list and be single-use")
    return ChannelRealization(users, np.stack([c.gains for c in channels]))


def contributions(channels: ChannelRealization, signatures: np.ndarray) -> np.ndarray:
    """Per-user received contributions ``H_k(i) s_k(i)``, shape ``(n0, K, N_R)``."""
    if signatures.shape != channels.gains.shape[:2] + channels.gains.shape[-1:]:
        raise InvalidArgumentError(
            f"signatures shape {signatures.shape} does not match gains {channels.gains.shape}"
        )
    return np.einsum("ukrt,ukt->ukr", channels.gains, signatures)


def synthesize_received(
    cfg: SystemConfig,
    active: Iterable[int],
    channels,
    signatures: np.ndarray,
    stream,
) -> np.ndarray:
    """Received training block ``y(i) = sum_{k in active} H_k(i) s_k(i) + z(i)``, shape ``(N_R, n0)``."""
    block = _stack_channels(channels)
    active = cfg.check_users(active)
    if block.gains.shape[-2:] != (cfg.n_r, cfg.n_t):
        raise InvalidArgumentError("channel dimensions disagree with the configuration")
    n0 = block.gains.shape[0]
    signatures = np.asarray(signatures)
    phi = contributions(block, signatures)
    pos = block.positions(active)
    noise = complex_normal(as_generator(stream), (n0, cfg.n_r))
    y = phi[:, pos, :].sum(axis=1) + noise
    return y.T.copy()
