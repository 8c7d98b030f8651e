"""Run configuration: a flat ``key = value`` file plus command-line overrides."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .channel import SystemConfig
from .errors import ConfigError, InvalidArgumentError

SEED_ENV = "MAL_SEED"
_U64 = (1 << 64) - 1


def parse_int_grid(text: str) -> tuple[int, ...]:
    """``a:b:step`` (inclusive of ``b`` when on the step) or a comma list."""
    text = text.strip()
    if not text:
        return ()
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(1)
            if len(parts) != 3 or parts[2] <= 0:
                raise ValueError
            start, stop, step = parts
            return tuple(range(start, stop + 1, step))
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"bad integer grid {text!r}; use a:b:step or a comma list") from None


def parse_float_list(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        if ":" in text:
            start, stop, step = (float(p) for p in text.split(":"))
            if step <= 0:
                raise ValueError
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            return tuple(float(start + j * step) for j in range(max(count, 0)))
        return tuple(float(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"bad real list {text!r}") from None


def _parse_int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _parse_float(text: str) -> float:
    try:
        return float(text.strip())
    except ValueError:
        raise ConfigError(f"expected a real number, got {text!r}") from None


def _parse_str(text: str) -> str:
    return text.strip()


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_PARSERS = {
    int: _parse_int,
    float: _parse_float,
    str: _parse_str,
    "ints": parse_int_grid,
    "floats": parse_float_list,
}


def _kind(f: dataclasses.Field):
    return f.metadata.get("kind", f.type)


def _opt(kind, default=None, **kw):
    return dataclasses.field(default=default, metadata={"kind": kind, **kw})


@dataclass(frozen=True)
class RunConfig:
    """Every key the commands understand.  ``None`` means "command default"."""

    ell: int = _opt(int, 12)
    k: int = _opt(int, 2)
    n: int = _opt(int, 64)
    n0: int = _opt(int, 4)
    n_r: int = _opt(int, 4)
    n_t: int = _opt(int, 1)
    beta: tuple = _opt("floats", (1.0,))
    power: tuple = _opt("floats", (1.0,))
    epsilon: float = _opt(float, 0.1)
    rho: float = _opt(float, 1.0)
    trials: int = _opt(int, 100_000)
    seed: int | None = _opt(int)
    chunk_size: int = _opt(int, 1024)
    z: float = _opt(float, 1.96)
    workers: int = _opt(int, 1)
    out: str | None = _opt(str)
    budget: int = _opt(int, 10**6)
    # limits
    group_counts: tuple = _opt("ints", ())
    group_log_m: tuple = _opt("floats", ())
    delta1: float = _opt(float, 0.1)
    delta2: float = _opt(float, 0.1)
    gamma: float = _opt(float, 1.0)
    subset_samples: int = _opt(int, 20)
    # detect / concentration
    n0_grid: tuple | None = _opt("ints")
    md_size: int = _opt(int, 2)
    delta_grid: tuple = _opt("floats", (0.0, 0.25, 0.5, 1.0))
    # figures / sic
    n_grid: tuple | None = _opt("ints")
    nr_grid: tuple = _opt("ints", tuple(range(1, 9)))
    k_ratio: float = _opt(float, 0.5)
    rel_tol: float = _opt(float, 0.01)

    @classmethod
    def keys(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_mapping(cls, raw: Mapping[str, str]) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(raw) - set(known))
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
        values = {name: _PARSERS[_kind(known[name])](text) for name, text in raw.items()}
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def with_overrides(self, **changes: Any) -> "RunConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    def serialize(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            lines.append(f"{f.name} = {_fmt(value)}")
        return "\n".join(lines) + "\n"

    def validate(self) -> None:
        for name in ("workers", "budget", "subset_samples", "md_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.seed is not None and not 0 <= self.seed <= _U64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for name in ("beta", "power"):
            if len(getattr(self, name)) not in (1, self.ell):
                raise ConfigError(f"{name} needs one value or ell={self.ell} values")
        if len(self.group_counts) != len(self.group_log_m):
            raise ConfigError("group_counts and group_log_m must have the same length")
        if self.group_counts and sum(self.group_counts) != self.k:
            raise ConfigError(f"group_counts must sum to k={self.k}")
        if not 0 < self.k_ratio <= 1:
            raise ConfigError("k_ratio must lie in (0, 1]")
        if not self.rel_tol > 0:
            raise ConfigError("rel_tol must be positive")
        if any(d < 0 for d in self.delta_grid):
            raise ConfigError("delta_grid entries must be non-negative")
        try:
            self.system()
        except InvalidArgumentError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def scalar_gains(self) -> bool:
        return len(self.beta) == 1 and len(self.power) == 1

    def resolved_seed(self) -> int:
        if self.seed is not None:
            return self.seed
        env = os.environ.get(SEED_ENV)
        if env is None or not env.strip():
            return 0
        seed = _parse_int(env)
        if not 0 <= seed <= _U64:
            raise ConfigError(f"{SEED_ENV} must be an unsigned 64-bit integer")
        return seed

    def system(self, **changes) -> SystemConfig:
        def vec(v):
            return v[0] if len(v) == 1 else np.asarray(v)

        base = dict(
            ell=self.ell, k=self.k, n=self.n, n0=self.n0, n_r=self.n_r, n_t=self.n_t,
            beta=vec(self.beta), power=vec(self.power), epsilon=self.epsilon, rho=self.rho,
            trials=self.trials, seed=self.seed or 0, chunk_size=self.chunk_size, z=self.z,
        )
        base.update(changes)
        return SystemConfig(**base)


def parse_config_text(text: str) -> RunConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return RunConfig.from_mapping(raw)


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text)
