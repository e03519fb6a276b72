"""Command-line front end: simulate, continuum, sweep, verify, partition-dump.

Configuration comes from flags, optionally layered over a JSON config
file (flags win).  Output artifacts land in --out (default: the
MATCHMARKET_OUT environment variable, else the working directory) with
deterministic names, so a fixed (config, seed) reproduces files byte
for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .config import DEFAULT_RUNS, DEFAULT_STEPS, Model, RunConfig
from .continuum import continuum_run
from .geometry import build_partition
from .io import (
    default_out_dir,
    emit_continuum_summary,
    emit_partition,
    emit_summary,
    emit_sweep_table,
    emit_timeseries,
    run_batch,
    run_sweep,
)
from .market import Agent, Gender, random_pairing
from .metrics import constraints_satisfied
from .oracles import (
    acceptall_expected_loss,
    cylinder_dependence_check,
    exact_match_probability,
    strip_pair_loss_scan,
)
from .strategies import StrategyKind

STRATEGY_FLAGS = {
    "accept-all": StrategyKind.ACCEPT_ALL,
    "reasonable": StrategyKind.REASONABLE,
    "modified": StrategyKind.MODIFIED_REASONABLE,
}


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON config file; flags override it")
    parser.add_argument("--n", type=int, default=None, help="entrants per step")
    parser.add_argument("--T", type=int, default=None, help="agent lifetime (>= 4)")
    parser.add_argument("--steps", type=int, default=None, help=f"horizon (default {DEFAULT_STEPS})")
    parser.add_argument("--strategy", choices=sorted(STRATEGY_FLAGS), default=None,
                        help="acceptance rule (default modified)")
    parser.add_argument("--seed", type=int, default=None, help="base seed (default 0)")
    parser.add_argument("--runs", type=int, default=None, help=f"repetitions (default {DEFAULT_RUNS})")
    parser.add_argument("--out", type=Path, default=None, help="output directory (default $MATCHMARKET_OUT or cwd)")
    parser.add_argument("--no-timeseries", action="store_true", help="skip per-run CSV emission")


def parse_config(args: argparse.Namespace, model: Model) -> RunConfig:
    """Merge defaults, config-file values, and flags (flags win)."""
    file_values: dict = {}
    if args.config is not None:
        with open(args.config) as handle:
            file_values = json.load(handle)
        unknown = set(file_values) - {"n", "T", "steps", "strategy", "seed", "runs", "out"}
        if unknown:
            raise SystemExit(f"error: unknown config file keys: {sorted(unknown)}")

    def pick(flag, key, default=None):
        if flag is not None:
            return flag
        if key in file_values:
            return file_values[key]
        return default

    n = pick(args.n, "n")
    T = pick(args.T, "T")
    if n is None or T is None:
        raise SystemExit("error: --n and --T are required (flags or config file)")
    strategy = pick(args.strategy, "strategy", "modified")
    if strategy not in STRATEGY_FLAGS:
        raise SystemExit(f"error: unknown strategy {strategy!r}")
    out = pick(args.out, "out")
    try:
        return RunConfig(
            n=int(n),
            T=int(T),
            steps=int(pick(args.steps, "steps", DEFAULT_STEPS)),
            strategy=STRATEGY_FLAGS[strategy],
            seed=int(pick(args.seed, "seed", 0)),
            runs=int(pick(args.runs, "runs", DEFAULT_RUNS)),
            model=model,
            out_dir=Path(out) if out is not None else None,
            write_timeseries=not args.no_timeseries,
        )
    except ValueError as exc:
        raise SystemExit(f"error: {exc}")


def _out_dir(config: RunConfig) -> Path:
    out = config.out_dir if config.out_dir is not None else default_out_dir()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _stem(config: RunConfig) -> str:
    return f"{config.model.value}_{config.strategy.value}_n{config.n}_T{config.T}_steps{config.steps}"


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = parse_config(args, Model.DISCRETE)
    batch = run_batch(config)
    out = _out_dir(config)
    if config.write_timeseries:
        for result in batch.results:
            emit_timeseries(result, out / f"timeseries_{_stem(config)}_seed{result.summary.seed}.csv")
    doc = emit_summary(batch, out / f"summary_{_stem(config)}_seed{config.seed}.json")
    mean = doc["mean"]
    print(
        f"{config.strategy.value} n={config.n} T={config.T} runs={config.runs}: "
        f"population {mean['avg_population']:.1f} (spread {doc['spread_pct']['avg_population']:.1f}%), "
        f"loss/T {mean['loss_over_T']:.2f} (matched-only {mean['loss_matched_over_T']:.2f})"
    )
    return 0


def _cmd_continuum(args: argparse.Namespace) -> int:
    config = parse_config(args, Model.CONTINUUM)
    result = continuum_run(config)
    out = _out_dir(config)
    if config.write_timeseries:
        emit_timeseries(result, out / f"timeseries_{_stem(config)}.csv")
    emit_continuum_summary(result, out / f"summary_{_stem(config)}.json")
    s = result.summary
    converged = f"converged at step {s.converged_step}" if s.converged else "not converged"
    print(
        f"continuum {config.strategy.value} n={config.n} T={config.T}: "
        f"population {s.avg_population:.1f} (final {s.final_population:.1f}), "
        f"loss/T {s.loss_over_T:.2f}, {converged}"
    )
    return 0


def _parse_int_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part]
    except ValueError:
        raise SystemExit(f"error: expected comma-separated integers, got {text!r}")
    if not values:
        raise SystemExit("error: empty value list")
    return values


def _cmd_sweep(args: argparse.Namespace) -> int:
    ns = _parse_int_list(args.n)
    ts = _parse_int_list(args.T)
    args.n, args.T = ns[0], ts[0]
    base = parse_config(args, Model.DISCRETE)
    batches = run_sweep(base, ns, ts)
    out = _out_dir(base)
    stem = f"sweep_{base.strategy.value}_steps{base.steps}_seed{base.seed}"
    emit_sweep_table(batches, out / f"{stem}.csv")
    for b in batches:
        emit_summary(b, out / f"summary_{_stem(b.config)}_seed{b.config.seed}.json")
    for b in batches:
        print(
            f"n={b.config.n} T={b.config.T}: population {b.mean('avg_population'):.1f}, "
            f"loss/T {b.mean('loss_over_T'):.2f}"
        )
    return 0


def _check(label: str, ok: bool, failures: list[str]) -> None:
    print(f"{'PASS' if ok else 'FAIL'}  {label}")
    if not ok:
        failures.append(label)


def _cmd_verify(args: argparse.Namespace) -> int:
    failures: list[str] = []

    ok = True
    for m in range(1, 7):
        for w in range(1, 7):
            for acceptable in range(w + 1):
                if exact_match_probability(m, w, acceptable) != Fraction(acceptable, max(m, w)):
                    ok = False
    _check("match probability == w'/max(m, w) for all m, w <= 6", ok, failures)

    ok = True
    for m in range(1, 5):
        for w in range(1, 5):
            for men_bits in range(1 << m):
                men_subset = tuple(i for i in range(m) if men_bits >> i & 1)
                if not men_subset:
                    continue
                for women_bits in range(1 << w):
                    women_subset = tuple(j for j in range(w) if women_bits >> j & 1)
                    rep = cylinder_dependence_check(m, w, men_subset, women_subset)
                    if not (rep.ok_x and rep.ok_complement):
                        ok = False
    _check("negative cylinder dependence for all subsets with m, w <= 4", ok, failures)

    ok = True
    for T in (1, 2, 10, 100):
        expected = sum(
            max(0, x - y) for x in range(T) for y in range(T)
        )
        if acceptall_expected_loss(T) * T * T != Fraction(T * expected):
            ok = False
    _check("accept-all closed form equals exhaustive double sum", ok, failures)

    for T in (16,) + ((100,) if not args.fast else ()):
        report = strip_pair_loss_scan(T)
        _check(
            f"same-strip loss bound scan at T={T} ({report.pairs_checked} pairs)",
            report.violations == 0,
            failures,
        )

    # 2 men vs 3 women: man 0 should land each woman exactly 1/3 of the time
    rng = np.random.Generator(np.random.PCG64(args.seed))
    trials = args.trials
    men = [Agent(i, Gender.MAN, 16 + i, 0, 0) for i in range(2)]
    women = [Agent(10 + j, Gender.WOMAN, 16 + j, 0, 0) for j in range(3)]
    counts = {w.id: 0 for w in women}
    first_man_pairings = 0
    for _ in range(trials):
        for man, woman in random_pairing(men, women, rng):
            if man is men[0]:
                counts[woman.id] += 1
                first_man_pairings += 1
    ok = first_man_pairings == trials  # the smaller side is always fully paired
    p = 1.0 / 3.0
    sigma = (trials * p * (1 - p)) ** 0.5
    for c in counts.values():
        if abs(c - trials * p) > 3 * sigma:
            ok = False
    _check(f"uniform pairing frequencies within 3 sigma over {trials} trials", ok, failures)

    report = constraints_satisfied(500, 100, 1.0)
    _check("constraint check rejects (n=500, T=100, c=1)", not report.satisfied, failures)

    if failures:
        print(f"{len(failures)} verification check(s) failed")
        return 1
    print("all verification checks passed")
    return 0


def _cmd_partition_dump(args: argparse.Namespace) -> int:
    part = build_partition(args.T)
    if args.out is not None:
        emit_partition(part, args.out)
    else:
        emit_partition(part, sys.stdout)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="matchmarket",
        description="Two-sided matching-market simulator (discrete and continuum).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="seeded discrete runs")
    _add_run_flags(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("continuum", help="deterministic mean-field run")
    _add_run_flags(p)
    p.set_defaults(func=_cmd_continuum)

    p = sub.add_parser("sweep", help="batch runs over an (n, T) grid")
    _add_run_flags(p)
    p.set_defaults(func=_cmd_sweep)
    for action in p._actions:
        if action.dest in ("n", "T"):
            action.type = str
            action.help = "comma-separated list"

    p = sub.add_parser("verify", help="run the exact-oracle sweeps")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fast", action="store_true", help="skip the T=100 pair scan")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("partition-dump", help="write the strip partition as CSV")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=_cmd_partition_dump)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
