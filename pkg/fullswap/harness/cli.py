"""
fullswap command line

    python -m fullswap.harness.cli calibrate --T 1000 --adversary "bernoulli(0.9)"
    python -m fullswap.harness.cli disc-calibrate --T 10000 --eps 0.1 --forecaster plain-bm
    python -m fullswap.harness.cli game --T 2000 --d 2 --adversary self-play
    python -m fullswap.harness.cli decompose --T 500 --loss-class sc-smooth --adversary "quadratic-random(3)"
    python -m fullswap.harness.cli oco-check --T 10000 --trials 50
    python -m fullswap.harness.cli sweep --horizons 1000 10000 --out results
    python -m fullswap.harness.cli report results/calibration_T1000_seed0.csv

A --config file (with --preset naming one of its scenarios) overrides the flags.
"""

import argparse
import logging
import sys
from dataclasses import replace
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from ..errors import FullSwapError, InvalidInputError
from .config import ExperimentConfig, resolve_config
from .rates import fit_rate
from .runner import RegretReport, run_experiment, run_scaled_oco, sweep

logger = logging.getLogger(__name__)

SUBCOMMAND_SCENARIOS = {
    "calibrate": "calibration",
    "disc-calibrate": "discretized-calibration",
    "game": "structured-game",
    "decompose": "swap-decomposition",
    "oco-check": "oco-envelope",
    "sweep": "discretized-calibration",
}

SUBCOMMAND_DEFAULTS = {
    "game": {"adversary": "self-play", "d": 2},
    "decompose": {"adversary": "quadratic-random(0)", "T": 500},
    "oco-check": {"T": 10_000},
}


def setup_logging(run_name: str, level: str = "INFO", log_dir: str = "."):
    """File plus console logging, one timestamped log file per invocation"""
    Path(log_dir).mkdir(parents=True, exist_ok=True)
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(Path(log_dir) / f'{run_name}_{timestamp}.log', encoding='utf-8'),
            logging.StreamHandler()
        ],
        force=True,
    )


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument('--T', type=int, default=None, help='Horizon (default: scenario preset)')
    parser.add_argument('--eps', type=float, default=None, help='Discretization / lattice spacing override')
    parser.add_argument('--d', type=int, default=None, help='Dimension of the action set')
    parser.add_argument('--adversary', type=str, default=None,
                        help='Adversary spec, e.g. "bernoulli(0.5)", "periodic(01)", "adaptive-opposite"')
    parser.add_argument('--seed', type=int, default=None, help='Random seed (default: 0)')
    parser.add_argument('--out', type=str, default=None, help='Output directory (default: results)')
    parser.add_argument('--config', type=str, default=None,
                        help='JSON config file; its values override the flags')
    parser.add_argument('--preset', type=str, default=None,
                        help='Scenario preset name inside --config (default: the subcommand scenario)')
    parser.add_argument('--log-level', type=str, default='INFO',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='Logging level')
    parser.add_argument('--log-dir', type=str, default='.', help='Directory for log files')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Full swap regret experiments',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    sub = parser.add_subparsers(dest='command', required=True)

    _add_common(sub.add_parser('calibrate', help='l2-calibration against a bit adversary'))

    disc = sub.add_parser('disc-calibrate', help='Discretized calibration on an eps-lattice')
    _add_common(disc)
    disc.add_argument('--forecaster', type=str, default=None,
                      choices=['discretized-swap', 'rounded-l2', 'plain-bm'])

    game = sub.add_parser('game', help='Structured game via the full-swap reduction')
    _add_common(game)
    game.add_argument('--game-file', type=str, default=None, help='Game JSON or normal-form CSV')
    game.add_argument('--n-actions', type=int, default=None, help='Actions per player for random games')

    decompose = sub.add_parser('decompose', help='Full swap regret against the per-learner decomposition')
    _add_common(decompose)
    decompose.add_argument('--loss-class', type=str, default=None,
                           choices=['general', 'smooth', 'concave', 'linear', 'strongly-convex', 'sc-smooth'])
    decompose.add_argument('--body', type=str, default=None, choices=['interval', 'box', 'ball'])

    oco = sub.add_parser('oco-check', help='Scaled-regret envelopes of the three OCO schedules')
    _add_common(oco)
    oco.add_argument('--trials', type=int, default=5, help='Sequences per schedule (default: 5)')
    oco.add_argument('--schedules', nargs='+', default=['convex', 'gds', 'gdk'])

    sw = sub.add_parser('sweep', help='Discretized calibration comparison over (algorithm, eps, T)')
    _add_common(sw)
    sw.add_argument('--horizons', nargs='+', type=int, default=[1000, 10000])
    sw.add_argument('--epsilons', nargs='+', type=float, default=None,
                    help='Lattice spacings (default: T^-1/3, T^-1/4, T^-1/5 per horizon)')

    report = sub.add_parser('report', help='Summarize CSV series written by earlier runs')
    report.add_argument('csv_files', nargs='+', help='Series CSV files')
    report.add_argument('--log-level', type=str, default='INFO',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    report.add_argument('--log-dir', type=str, default='.')
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    scenario = SUBCOMMAND_SCENARIOS[args.command]
    flags: Dict = {"scenario": scenario}
    flags.update(SUBCOMMAND_DEFAULTS.get(args.command, {}))
    explicit = {
        "T": args.T, "eps": args.eps, "d": args.d, "adversary": args.adversary,
        "seed": args.seed, "out": args.out,
        "forecaster": getattr(args, 'forecaster', None),
        "game_file": getattr(args, 'game_file', None),
        "n_actions": getattr(args, 'n_actions', None),
        "loss_class": getattr(args, 'loss_class', None),
        "body": getattr(args, 'body', None),
    }
    flags.update({k: v for k, v in explicit.items() if v is not None})
    cfg = resolve_config(flags, args.config, args.preset or scenario)
    if cfg.scenario != scenario:
        cfg = replace(cfg, scenario=scenario)
    return cfg


def print_report(report: RegretReport):
    print("\n" + "=" * 70)
    print(f"RUN SUMMARY: {report.scenario}")
    print("=" * 70)
    for key, value in report.metrics.items():
        if isinstance(value, float):
            print(f"  {key:<32} {value:.6g}")
        elif not isinstance(value, dict):
            print(f"  {key:<32} {value}")
    for name, ok in report.flags.items():
        print(f"  {'✓' if ok else '✗'} {name}")
    if report.outputs:
        print(f"\n  Series: {report.outputs.get('csv')}")
        print(f"  Report: {report.outputs.get('json')}")
    print(f"  Wall clock: {report.wall_clock:.2f}s")
    print("=" * 70)


def run_oco_check(cfg: ExperimentConfig, schedules: List[str], trials: int) -> bool:
    print("\n" + "=" * 70)
    print(f"SCALED REGRET ENVELOPES (T={cfg.T}, {trials} sequences per schedule)")
    print("=" * 70)
    all_ok = True
    for schedule in schedules:
        worst = -np.inf
        for trial in range(trials):
            rng = np.random.default_rng([cfg.seed, trial])
            regrets, bounds = run_scaled_oco(schedule, cfg.T, rng, alpha=cfg.alpha,
                                             lipschitz=cfg.lipschitz, grid_eps=cfg.eps or 0.05)
            worst = max(worst, float(np.max(regrets - bounds)))
        ok = worst <= 1e-6
        all_ok = all_ok and ok
        print(f"  {'✓' if ok else '✗'} {schedule:<8} worst (regret - bound) = {worst:.6g}")
    print("=" * 70)
    return all_ok


def summarize_series(paths: List[str]) -> pd.DataFrame:
    """Final regret, worst envelope ratio and fitted log-log slope per series CSV"""
    records = []
    for path in paths:
        df = pd.read_csv(path)
        df = df.dropna(subset=['cum_regret'])
        if df.empty:
            raise InvalidInputError(f"no regret rows in {path}")
        ratio = np.nan
        if 'bound_envelope' in df.columns and df['bound_envelope'].notna().any():
            envelope = pd.to_numeric(df['bound_envelope'], errors='coerce')
            positive = envelope > 0
            if positive.any():
                ratio = float((df.loc[positive, 'cum_regret'] / envelope[positive]).max())
        slope = np.nan
        tail = df[df['t'] >= max(1, df['t'].max() / 100)]
        try:
            slope = fit_rate(zip(tail['t'], tail['cum_regret'])).slope
        except InvalidInputError:
            pass
        records.append({"file": Path(path).name, "rounds": int(df['t'].max()),
                        "final_regret": float(df['cum_regret'].iloc[-1]),
                        "max_envelope_ratio": ratio, "fitted_slope": slope})
    return pd.DataFrame.from_records(records)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.command, args.log_level, args.log_dir)

    try:
        if args.command == 'report':
            summary = summarize_series(args.csv_files)
            print("\n" + "=" * 70)
            print("SERIES SUMMARY")
            print("=" * 70)
            print(summary.to_string(index=False))
            print("=" * 70)
            return 0

        cfg = config_from_args(args)
        logger.info(f"Configuration hash: {cfg.content_hash()}")

        if args.command == 'oco-check':
            return 0 if run_oco_check(cfg, args.schedules, args.trials) else 1

        if args.command == 'sweep':
            result = sweep(cfg, args.horizons, args.epsilons)
            print("\n" + "=" * 70)
            print("DISCRETIZED CALIBRATION SWEEP")
            print("=" * 70)
            print(pd.DataFrame.from_records(result.rows).to_string(index=False))
            for cell, ok in result.ordering.items():
                print(f"  {'✓' if ok else '✗'} new algorithm below both baselines at {cell}")
            print(f"\n  Results: {result.path}")
            print("=" * 70)
            return 0

        report = run_experiment(cfg)
        print_report(report)
        return 0 if report.passed else 1

    except FullSwapError as e:
        logger.error(f"✗ {type(e).__name__}: {e}")
        return 1
    except KeyboardInterrupt:
        logger.error("Interrupted by user")
        return 1


if __name__ == '__main__':
    sys.exit(main())
