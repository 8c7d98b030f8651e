"""``mal`` command-line interface.

Every command computes its full table before writing anything, so a failed
run never leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import math
import sys
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config, parse_float_list, parse_int_grid
from .detect import error_sweep
from .errors import BudgetExceededError, ConfigError, InvalidArgumentError, NumericalFailureError
from .info import (
    bernstein_tail_bound,
    binary_entropy,
    concentration_constant,
    information_density_samples,
    mutual_information,
)
from .limits import (
    RateAllocation,
    dof,
    finite_threshold_achievable,
    finite_threshold_converse,
    identification_cost_achievable,
    identification_cost_converse,
    limit_report,
    mi_by_size_mc,
)
from .rand import RngStream
from .sic import convergence_verdict, dt_exponent, n_times_c

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_NUMERIC = 0, 2, 3, 4

FIGURE_N_GRID = (4, 8, 16, 32, 64)
SIC_N_GRID = (100, 1000, 10000)
DETECT_N0_GRID = tuple(range(1, 9))
CONCENTRATION_N0_GRID = (8, 32, 128)


def fmt_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.11e}"
    return str(value)


def render_csv(blocks: list[tuple[list[str], list[list]]]) -> str:
    """Header-plus-rows blocks, each line ``\\n``-terminated."""
    lines = []
    for header, rows in blocks:
        lines.append(",".join(header))
        lines.extend(",".join(fmt_cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


class Run:
    """A resolved configuration plus the derived seed and stream."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.seed = cfg.resolved_seed()
        self.stream = RngStream(self.seed)

    def system(self, **changes):
        try:
            return self.cfg.system(seed=self.seed, **changes)
        except InvalidArgumentError as exc:
            raise ConfigError(str(exc)) from None

    def require_scalar_gains(self, command: str):
        if not self.cfg.scalar_gains:
            raise ConfigError(f"{command} varies ell, so beta and power must be single values")


def _grid(values, default, name):
    grid = default if values is None else tuple(values)
    if not grid:
        raise ConfigError(f"{name} is empty")
    if any(v < 1 for v in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError(f"{name} must be positive and strictly ascending")
    return grid


def cmd_limits(run: Run) -> str:
    cfg = run.cfg
    sys_cfg = run.system()
    workers = cfg.workers
    users = range(1, sys_cfg.k + 1)
    mi_full = mutual_information(sys_cfg, users, None, None, run.stream.child("limits", "mi_full"),
                                 workers=workers).mean
    mi_by_size = mi_by_size_mc(sys_cfg, None, run.stream.child("limits"), samples=cfg.subset_samples,
                               workers=workers)
    counts = cfg.group_counts or (sys_cfg.k,)
    log_m = cfg.group_log_m or (1.0,)
    try:
        alloc = RateAllocation.from_groups(counts, log_m)
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from None
    report = limit_report(sys_cfg, alloc, mi_full, mi_by_size)
    i = max(report.argmax_i, 1)
    fin_ach = finite_threshold_achievable(sys_cfg, i, mi_by_size(i), cfg.delta1, cfg.delta2, cfg.gamma)
    fin_conv = finite_threshold_converse(sys_cfg, i, mi_by_size(i), cfg.delta1, cfg.delta2)
    summary = (
        ["n0_ach", "n0_conv", "n0_asym", "argmax_i", "theta", "sum_rhs_nats", "infeasible",
         "mi_full_nats", "n0_finite_ach", "n0_finite_conv", "dof"],
        [[report.n0_achievable, report.n0_converse, report.n0_asymptotic, report.argmax_i, report.theta,
          report.sum_rhs, report.infeasible, mi_full, fin_ach, fin_conv, dof(sys_cfg)]],
    )
    rows = []
    offsets = np.cumsum((0,) + tuple(counts))
    mu, c = alloc.mu, alloc.c(sys_cfg.n)
    for g, start in enumerate(offsets[:-1]):
        r, b = report.rates[start], report.capacities[start]
        rows.append([g + 1, c[start], mu[start], r, b, r / math.log(2), b / math.log(2)])
    table = (["user_group", "c_k", "mu_k", "R_k_nats", "B_k_nats", "R_k_bits", "B_k_bits"], rows)
    return render_csv([summary, table])


def cmd_figures(run: Run) -> str:
    cfg = run.cfg
    run.require_scalar_gains("figures")
    n_grid = _grid(cfg.n_grid, FIGURE_N_GRID, "n_grid")
    nr_grid = _grid(cfg.nr_grid, None, "nr_grid")

    @lru_cache(maxsize=None)
    def mi_full(k: int, n_r: int) -> float:
        probe = run.system(ell=k, k=k, n=1, n0=1, n_r=n_r)
        return mutual_information(probe, range(1, k + 1), None, None,
                                  run.stream.child("figures", k, n_r), workers=cfg.workers).mean

    def row(sweep, n, mode, ell, k, n_r):
        sys_cfg = run.system(ell=ell, k=k, n=n, n0=1, n_r=n_r)
        mi = mi_full(k, n_r)
        penalty = ell * binary_entropy(sys_cfg.alpha())
        return [sweep, n, mode, k, n_r, n * mi - penalty, penalty / (n * mi)]

    rows = []
    for n in n_grid:
        k = max(1, round(cfg.k_ratio * n))
        rows.append(row("A", n, "n", n, k, cfg.n_r))
        rows.append(row("A", n, "n2", n * n, k, cfg.n_r))
    k = max(1, round(cfg.k_ratio * cfg.n))
    for n_r in nr_grid:
        rows.append(row("B", cfg.n, "n", cfg.n, k, n_r))
    header = ["sweep", "n", "ell_mode", "k", "NR", "sum_capacity_nats", "theta"]
    return render_csv([(header, rows)])


def cmd_detect(run: Run) -> str:
    cfg = run.cfg
    sys_cfg = run.system()
    grid = _grid(cfg.n0_grid, DETECT_N0_GRID, "n0_grid")
    mi_by_size = mi_by_size_mc(sys_cfg, None, run.stream.child("detect", "mi"), samples=cfg.subset_samples,
                               workers=cfg.workers)
    ach, _ = identification_cost_achievable(sys_cfg, mi_by_size)
    conv, _ = identification_cost_converse(sys_cfg, mi_by_size)
    sweep = error_sweep(sys_cfg, grid, cfg.trials, run.stream.child("detect", "sweep"),
                        workers=cfg.workers, budget=cfg.budget)
    rows = [[r.n0, r.trials, r.errors, r.pe, r.ci_low, r.ci_high, ach, conv] for r in sweep]
    header = ["n0", "trials", "errors", "pe", "ci_low", "ci_high", "threshold_ach", "threshold_conv"]
    return render_csv([(header, rows)])


def concentration_rows(run: Run) -> list[list]:
    cfg = run.cfg
    sys_cfg = run.system()
    if cfg.md_size > sys_cfg.ell:
        raise ConfigError("md_size exceeds ell")
    grid = _grid(cfg.n0_grid, CONCENTRATION_N0_GRID, "n0_grid")
    if not cfg.delta_grid:
        raise ConfigError("delta_grid is empty")
    users = range(1, cfg.md_size + 1)
    mi = mutual_information(sys_cfg, users, None, None, run.stream.child("conc", "mi"), workers=cfg.workers).mean
    c_hi = concentration_constant(sys_cfg, users, None, run.stream.child("conc", "c"), workers=cfg.workers).ci_high
    rows = []
    for n0 in grid:
        dens = information_density_samples(sys_cfg, users, n0, None, run.stream.child("conc", n0),
                                           workers=cfg.workers)
        dev = np.abs(dens - n0 * mi)
        t = dens.size
        for frac in cfg.delta_grid:
            delta = frac * mi
            p = float(np.count_nonzero(dev >= n0 * delta)) / t
            se = math.sqrt(p * (1 - p) / t)
            bound = bernstein_tail_bound(n0, delta, c_hi)
            rows.append([n0, delta, p, min(1.0, p + cfg.z * se), bound, p <= bound + 3 * se])
    return rows


def cmd_concentration(run: Run) -> str:
    header = ["n0", "delta", "empirical_tail", "tail_ci_high", "bernstein_bound", "dominated"]
    return render_csv([(header, concentration_rows(run))])


def cmd_sic(run: Run) -> str:
    cfg = run.cfg
    run.require_scalar_gains("sic")
    grid = _grid(cfg.n_grid, SIC_N_GRID, "n_grid")
    if len(grid) < 2:
        raise ConfigError("sic needs at least two n values to judge convergence")
    rows = []
    for mode in ("fixed", "linear"):
        values, exps = [], []
        for n in grid:
            sys_cfg = run.system(ell=n, k=n, n=n, n0=1, n_r=cfg.n_r if mode == "fixed" else n)
            values.append(n_times_c(sys_cfg))
            exps.append(dt_exponent(sys_cfg, cfg.epsilon)[0])
        verdict = convergence_verdict(values, cfg.rel_tol)
        rows.extend([n, mode, v, e, verdict] for n, v, e in zip(grid, values, exps))
    return render_csv([(["n", "NR_mode", "nC", "dt_exponent", "verdict"], rows)])


COMMANDS = {
    "limits": cmd_limits,
    "figures": cmd_figures,
    "detect": cmd_detect,
    "concentration": cmd_concentration,
    "sic": cmd_sic,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mal", description="Limits of MIMO massive random access.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    p.add_argument("--out", metavar="PATH", help="CSV destination (default: stdout)")
    p.add_argument("--seed", metavar="U64", help=f"overrides the file; falls back to ${'{'}SEED_ENV{'}'}")
    p.add_argument("--workers", metavar="N", help="threads for Monte Carlo chunks; never changes output")
    p.add_argument("--trials", metavar="N")
    p.add_argument("--n0-grid", metavar="GRID", help="a:b:step or comma list")
    p.add_argument("--n-grid", metavar="GRID")
    p.add_argument("--nr-grid", metavar="GRID")
    p.add_argument("--delta-grid", metavar="LIST", help="deviations as fractions of the mutual information")
    return p


def _overrides(args) -> dict:
    from .config import _parse_int

    out = {
        "out": args.out,
        "seed": None if args.seed is None else _parse_int(args.seed),
        "workers": None if args.workers is None else _parse_int(args.workers),
        "trials": None if args.trials is None else _parse_int(args.trials),
        "n0_grid": None if args.n0_grid is None else parse_int_grid(args.n0_grid),
        "n_grid": None if args.n_grid is None else parse_int_grid(args.n_grid),
        "nr_grid": None if args.nr_grid is None else parse_int_grid(args.nr_grid),
        "delta_grid": None if args.delta_grid is None else parse_float_list(args.delta_grid),
    }
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(**_overrides(args))
        text = COMMANDS[args.command](Run(cfg))
        if cfg.out:
            Path(cfg.out).write_text(text, encoding="utf-8", newline="\n")
        else:
            sys.stdout.write(text)
        return EXIT_OK
    except (ConfigError, InvalidArgumentError) as exc:
        print(f"mal: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceededError as exc:
        print(f"mal: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except NumericalFailureError as exc:
        print(f"mal: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
