"""
Experiment runner

run_experiment wires one adversary to one learner for a scenario, records
the transcript, measures every regret with the independent evaluators and
writes a CSV series plus a JSON report:

    <out>/<scenario>_T<T>_seed<seed>.csv    t,cum_regret,bound_envelope,delta_T,sum_reg_s
    <out>/<scenario>_T<T>_seed<seed>.json   config echo, content hash, metrics, flags, monitoring

sweep runs the discretized-calibration comparison over (algorithm, eps, T).
"""

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import psutil

from ..calibration import (
    FORECASTERS,
    CalibrationTranscript,
    discretized_calibration_error,
    discretized_swap_regret,
    l2_calibration_error,
    l2_forecaster,
    lattice_steps,
    rounding_excess,
)
from ..errors import ConfigurationError, FullSwapError
from ..games import (
    GameTranscript,
    SelfPlay,
    StructuredGame,
    correlated_eq_gap,
    load_game_json,
    load_normal_form_csv,
    make_game_engine,
    random_structured_game,
    reduce_and_play,
)
from ..geometry import BoxBody, ConvexBody, build_interval_grid, interval, unit_ball
from ..losses import UNIT_INTERVAL, make_calibration_loss
from ..oco import Gdk2Learner, OgdLearner, gdk_bound, gds_bound, ogd_bound
from ..swap_engine import SwapEngine, configure_from_table
from .adversaries import BitAdversary, LossAdversary, ScaledSequenceAdversary, make_adversary
from .config import ExperimentConfig
from .evaluators import (
    FullSwapAccumulator,
    checkpoint_rounds,
    decomposition_eval,
    scaled_regret_series,
)
from .rates import discretized_shape

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "cum_regret", "bound_envelope", "delta_T", "sum_reg_s")
ENVELOPE_SLACK = 1e-6
IDENTITY_TOLERANCE = 1e-9
RUNTIME_BUDGETS = {"calibration": 60.0}
SWEEP_ALGORITHMS = ("discretized-swap", "rounded-l2", "plain-bm")
SWEEP_EXPONENTS = (1.0 / 3.0, 1.0 / 4.0, 1.0 / 5.0)
NONDETERMINISTIC_FIELDS = ("wall_clock", "monitoring", "outputs")


class RunMonitor:
    """Wall-clock, process CPU time and peak RSS of one run"""

    def __init__(self, budget_seconds: Optional[float] = None):
        self.process = psutil.Process()
        self.budget_seconds = budget_seconds
        self.peak_rss = 0
        self.started_at = None
        self._wall_start = 0.0
        self._cpu_start = 0.0
        self.wall_clock = 0.0
        self.cpu_seconds = 0.0

    def _cpu(self) -> float:
        times = self.process.cpu_times()
        return times.user + times.system

    def sample(self):
        self.peak_rss = max(self.peak_rss, self.process.memory_info().rss)

    def __enter__(self) -> "RunMonitor":
        self.started_at = datetime.now().isoformat(timespec="seconds")
        self._wall_start = time.perf_counter()
        self._cpu_start = self._cpu()
        self.sample()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.sample()
        self.wall_clock = time.perf_counter() - self._wall_start
        self.cpu_seconds = self._cpu() - self._cpu_start
        return False

    def to_dict(self) -> Dict:
        info = {
            "started_at": self.started_at,
            "cpu_seconds": round(self.cpu_seconds, 3),
            "peak_rss_mb": round(self.peak_rss / (1024 * 1024), 2),
        }
        if self.budget_seconds is not None:
            info["budget_seconds"] = self.budget_seconds
            info["within_budget"] = self.wall_clock <= self.budget_seconds
        return info


@dataclass
class RegretReport:
    """Everything one run measured"""

    scenario: str
    config: Dict
    config_hash: str
    rows: List[Dict] = field(default_factory=list)
    metrics: Dict = field(default_factory=dict)
    flags: Dict[str, bool] = field(default_factory=dict)
    wall_clock: float = 0.0
    monitoring: Dict = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> Dict:
        return {
            "scenario": self.scenario,
            "config": self.config,
            "config_hash": self.config_hash,
            "metrics": self.metrics,
            "flags": self.flags,
            "rows": self.rows,
            "wall_clock": round(self.wall_clock, 3),
            "monitoring": self.monitoring,
            "outputs": self.outputs,
        }

    def comparable(self) -> Dict:
        """The report without the fields that legitimately differ between identical runs"""
        return {k: v for k, v in self.to_dict().items() if k not in NONDETERMINISTIC_FIELDS}

    def write_csv(self, path) -> str:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                writer.writerow(["" if row.get(c) is None else row[c] for c in CSV_COLUMNS])
        logger.info(f"Regret series saved to: {path}")
        return str(path)

    def write_json(self, path) -> str:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, default=str)
        logger.info(f"Report saved to: {path}")
        return str(path)


def _row(t: int, cum_regret: float, bound_envelope: Optional[float] = None,
         delta_T: Optional[float] = None, sum_reg_s: Optional[float] = None) -> Dict:
    return {"t": int(t), "cum_regret": float(cum_regret),
            "bound_envelope": None if bound_envelope is None else float(bound_envelope),
            "delta_T": None if delta_T is None else float(delta_T),
            "sum_reg_s": None if sum_reg_s is None else float(sum_reg_s)}


def _streams(seed: int) -> Dict[str, np.random.Generator]:
    """Independent generators per component so swapping one leaves the others' draws intact"""
    adversary, game = np.random.SeedSequence(seed).spawn(2)
    return {"adversary": np.random.default_rng(adversary), "game": np.random.default_rng(game)}


def _make_body(cfg: ExperimentConfig) -> ConvexBody:
    if cfg.d == 1 and cfg.body in ("interval", "box"):
        return interval(0.0, 1.0)
    if cfg.body == "ball":
        return unit_ball(cfg.d)
    return BoxBody(np.zeros(cfg.d), np.ones(cfg.d))


def _bit_adversary(cfg: ExperimentConfig, rng: np.random.Generator) -> BitAdversary:
    adversary = make_adversary(cfg.adversary, rng)
    if not isinstance(adversary, BitAdversary):
        raise ConfigurationError(f"scenario '{cfg.scenario}' needs a bit adversary, got '{cfg.adversary}'")
    return adversary


def snap_to_lattice(eps: float) -> float:
    """Largest 1/n not above eps"""
    return 1.0 / max(1, math.ceil(1.0 / eps - 1e-9))


Outcome = Tuple[List[Dict], Dict, Dict[str, bool]]


def _run_calibration(cfg: ExperimentConfig, rngs, monitor: RunMonitor) -> Outcome:
    forecaster = l2_forecaster(cfg.T)
    adversary = _bit_adversary(cfg, rngs["adversary"])
    accumulator = FullSwapAccumulator(UNIT_INTERVAL)
    wanted = set(checkpoint_rounds(cfg.T, cfg.checkpoints))
    rows = []
    for t in range(1, cfg.T + 1):
        forecast = forecaster.next_forecast()
        b = adversary.next_outcome(forecast)
        forecaster.observe(b)
        accumulator.add_round(forecast, make_calibration_loss(b))
        if t in wanted:
            rows.append(_row(t, accumulator.total(), t ** (1.0 / 3.0) * math.log(max(t, 2))))
            monitor.sample()
    cal = l2_calibration_error(forecaster.transcript)
    full_swap = accumulator.total()
    gap = abs(cal - full_swap)
    metrics = {"calibration_error": cal, "full_swap_regret": full_swap, "identity_gap": gap,
               "grid_points": forecaster.engine.size, "adversary": adversary.get_name()}
    flags = {"calibration_identity": gap <= IDENTITY_TOLERANCE * max(1.0, cal)}
    return rows, metrics, flags


def _discretized_run(cfg: ExperimentConfig, rngs, eps: float, monitor: Optional[RunMonitor] = None):
    if cfg.forecaster not in FORECASTERS or cfg.forecaster == "l2-swap":
        raise ConfigurationError(f"'{cfg.forecaster}' does not forecast on a lattice "
                                 f"(use one of {[k for k in FORECASTERS if k != 'l2-swap']})")
    forecaster = FORECASTERS[cfg.forecaster](cfg.T, eps)
    adversary = _bit_adversary(cfg, rngs["adversary"])
    wanted = set(checkpoint_rounds(cfg.T, cfg.checkpoints))
    transcript = forecaster.transcript
    rows = []
    for t in range(1, cfg.T + 1):
        forecast = forecaster.next_forecast()
        forecaster.observe(adversary.next_outcome(forecast))
        if t in wanted:
            prefix = CalibrationTranscript(forecasts=transcript.forecasts[:t],
                                           outcomes=transcript.outcomes[:t], epsilon=eps)
            rows.append(_row(t, discretized_calibration_error(prefix, eps), discretized_shape(eps, t)))
            if monitor is not None:
                monitor.sample()
    return forecaster, rows


def _run_discretized_calibration(cfg: ExperimentConfig, rngs, monitor: RunMonitor) -> Outcome:
    eps = 1.0 / lattice_steps(snap_to_lattice(cfg.eps if cfg.eps is not None else cfg.T ** (-0.2)))
    forecaster, rows = _discretized_run(cfg, rngs, eps, monitor)
    transcript = forecaster.transcript
    metrics = {"epsilon": eps, "forecaster": cfg.forecaster,
               "discretized_calibration_error": discretized_calibration_error(transcript, eps),
               "calibration_error": l2_calibration_error(transcript),
               "envelope_shape": discretized_shape(eps, cfg.T)}
    return rows, metrics, {}


def _load_game(cfg: ExperimentConfig, rng: np.random.Generator) -> StructuredGame:
    if cfg.game_file is None:
        return random_structured_game(rng, cfg.n_actions, cfg.n_actions, cfg.d)
    if cfg.game_file.endswith(".csv"):
        return load_normal_form_csv(cfg.game_file)
    return load_game_json(cfg.game_file)


class _SwapGains:
    """Incremental gains[i, j] = sum_t p_t[i] (u(j, .) - u(i, .))"""

    def __init__(self, n: int):
        self.gains = np.zeros((n, n))

    def add(self, p: np.ndarray, payoffs: np.ndarray):
        self.gains += np.outer(p, payoffs) - (p * payoffs)[:, None]

    def regret(self) -> float:
        return float(np.sum(np.max(self.gains, axis=1)))


def _run_structured_game(cfg: ExperimentConfig, rngs, monitor: RunMonitor) -> Outcome:
    game = _load_game(cfg, rngs["game"])
    self_play = cfg.adversary == "self-play"
    if self_play:
        driver = SelfPlay(game, cfg.T)
        learner, opponent = driver.learner, driver.adversary
        transcript = driver.transcript
    else:
        adversary = make_adversary(cfg.adversary, rngs["adversary"], game=game)
        if adversary.kind != "strategy":
            raise ConfigurationError(f"structured games need 'self-play' or a strategy adversary, "
                                     f"got '{cfg.adversary}'")
        learner = reduce_and_play(game, make_game_engine(game.v, cfg.T,
                                                         opponent_bound=float(np.max(np.linalg.norm(game.w, axis=1)))))
        opponent, transcript = None, GameTranscript()

    learner_fsr = FullSwapAccumulator(learner.body)
    opponent_fsr = FullSwapAccumulator(opponent.body) if opponent is not None else None
    learner_gains = _SwapGains(game.n)
    opponent_gains = _SwapGains(game.n_adversary)
    u_L, u_A = game.learner_utility(), game.adversary_utility()
    wanted = set(checkpoint_rounds(cfg.T, cfg.checkpoints))
    rows = []
    for t in range(1, cfg.T + 1):
        if self_play:
            p, q = driver.step()
        else:
            p = learner.next_strategy()
            q = adversary.next_strategy(p)
            transcript.append(p, q, game)
            learner.observe(q @ game.w)
        learner_fsr.add_round(learner.plays[-1], learner.losses[-1])
        if opponent_fsr is not None:
            opponent_fsr.add_round(opponent.plays[-1], opponent.losses[-1])
        learner_gains.add(p, u_L @ q)
        opponent_gains.add(q, p @ u_A)
        if t in wanted:
            rows.append(_row(t, learner_gains.regret(), learner_fsr.total()))
            monitor.sample()

    swap = learner_gains.regret()
    full_swap = learner_fsr.total()
    learner_gap, opponent_gap = correlated_eq_gap(transcript.joint_distribution(), game)
    metrics = {"learner_swap_regret": swap, "learner_full_swap_regret": full_swap,
               "adversary_swap_regret": opponent_gains.regret(),
               "correlated_gap_learner": learner_gap, "correlated_gap_adversary": opponent_gap,
               "scale": game.scale, "adversary_scale": game.adversary_scale,
               "actions": [game.n, game.n_adversary], "dimension": game.dimension}
    flags = {"reduction_learner": swap <= full_swap + ENVELOPE_SLACK,
             "correlated_gap_learner": learner_gap <= full_swap / cfg.T + ENVELOPE_SLACK}
    if opponent_fsr is not None:
        opponent_full = opponent_fsr.total()
        metrics["adversary_full_swap_regret"] = opponent_full
        flags["reduction_adversary"] = opponent_gains.regret() <= opponent_full + ENVELOPE_SLACK
        flags["correlated_gap_adversary"] = opponent_gap <= opponent_full / cfg.T + ENVELOPE_SLACK
    return rows, metrics, flags


def run_scaled_oco(schedule: str, T: int, rng: np.random.Generator, alpha: float = 1.0,
                   lipschitz: float = 1.0, grid_eps: float = 0.05):
    """Play one adaptive scaled sequence; returns (prefix regrets, prefix bounds)"""
    body = UNIT_INTERVAL
    if schedule == "convex":
        learner = OgdLearner(body, "convex", lipschitz)
        bound_of = lambda G: ogd_bound(lipschitz, G, body.diameter_bound)
        loss_lipschitz = lipschitz
    elif schedule == "gds":
        learner = OgdLearner(body, "gds", alpha, alpha)
        bound_of = lambda G: gds_bound(alpha, alpha, G)
        loss_lipschitz = alpha
    elif schedule == "gdk":
        grid = build_interval_grid(0.0, 1.0, grid_eps)
        learner = Gdk2Learner(grid, alpha, alpha)
        bound_of = lambda G: gdk_bound(alpha, alpha, grid.max_gap(), G)
        loss_lipschitz = alpha
    else:
        raise ConfigurationError(f"unknown schedule '{schedule}'")
    adversary = ScaledSequenceAdversary(schedule, rng, alpha=alpha, lipschitz=loss_lipschitz)
    plays, surrogates, scales = [], [], []
    for _ in range(T):
        x = learner.recommend()
        loss, g = adversary.next_round(x)
        surrogate = learner.surrogate(loss)
        learner.update(surrogate, g)
        plays.append(x)
        surrogates.append(surrogate)
        scales.append(g)
    regrets = scaled_regret_series(plays, surrogates, scales, learner.state.body)
    bounds = np.array([bound_of(G) for G in np.cumsum(scales)])
    return regrets, bounds


def _run_oco_envelope(cfg: ExperimentConfig, rngs, monitor: RunMonitor) -> Outcome:
    regrets, bounds = run_scaled_oco(cfg.schedule, cfg.T, rngs["adversary"], alpha=cfg.alpha,
                                     lipschitz=cfg.lipschitz, grid_eps=cfg.eps or 0.05)
    monitor.sample()
    rows = [_row(t, regrets[t - 1], bounds[t - 1]) for t in checkpoint_rounds(cfg.T, cfg.checkpoints)]
    worst = float(np.max(regrets - bounds))
    metrics = {"schedule": cfg.schedule, "final_regret": float(regrets[-1]),
               "final_bound": float(bounds[-1]), "worst_excess": worst}
    return rows, metrics, {"envelope": worst <= ENVELOPE_SLACK}


def _run_swap_decomposition(cfg: ExperimentConfig, rngs, monitor: RunMonitor) -> Outcome:
    body = _make_body(cfg)
    quadratic = cfg.adversary.startswith("quadratic-random")
    lipschitz = cfg.alpha * body.diameter_bound if quadratic else cfg.lipschitz
    beta = cfg.alpha if quadratic else 0.0
    config = configure_from_table(cfg.loss_class, cfg.d, cfg.T, lipschitz, cfg.alpha)
    if cfg.eps is not None:
        config = replace(config, epsilon=float(cfg.eps))
    engine = SwapEngine.from_config(config, body, lipschitz=lipschitz, alpha=cfg.alpha, record=True)
    adversary = make_adversary(cfg.adversary, rngs["adversary"], body=body, lipschitz=lipschitz,
                               alpha=cfg.alpha)
    if not isinstance(adversary, LossAdversary):
        raise ConfigurationError(f"swap decomposition needs a loss adversary, got '{cfg.adversary}'")
    accumulator = FullSwapAccumulator(body)
    checkpoints = checkpoint_rounds(cfg.T, cfg.checkpoints)
    wanted = set(checkpoints)
    measured = {}
    for t in range(1, cfg.T + 1):
        action = engine.next_action()
        loss = adversary.next_loss(action)
        engine.observe(loss)
        accumulator.add_round(action, loss)
        if t in wanted:
            measured[t] = accumulator.total()
            monitor.sample()
    decomposition = decomposition_eval(engine, lipschitz, beta, checkpoints)
    rows = [_row(t, measured[t], delta_T + reg, delta_T, reg) for t, delta_T, reg in decomposition.series]
    full_swap = measured[cfg.T]
    metrics = {"full_swap_regret": full_swap, "delta": decomposition.delta,
               "delta_T": decomposition.delta_T, "sum_reg_s": decomposition.sum_reg_s,
               "discretization_size": engine.size, "engine": config.to_dict()}
    flags = {"decomposition": all(r["cum_regret"] <= r["bound_envelope"] + ENVELOPE_SLACK for r in rows)}
    return rows, metrics, flags


SCENARIO_RUNNERS: Dict[str, Callable] = {
    "calibration": _run_calibration,
    "discretized-calibration": _run_discretized_calibration,
    "structured-game": _run_structured_game,
    "oco-envelope": _run_oco_envelope,
    "swap-decomposition": _run_swap_decomposition,
}


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RegretReport:
    """Run one scenario and (optionally) write its CSV series and JSON report"""
    logger.info(f"Running {cfg.run_name()} (adversary {cfg.adversary})")
    rngs = _streams(cfg.seed)
    with RunMonitor(RUNTIME_BUDGETS.get(cfg.scenario)) as monitor:
        try:
            rows, metrics, flags = SCENARIO_RUNNERS[cfg.scenario](cfg, rngs, monitor)
        except FullSwapError as e:
            e.args = (f"[{cfg.run_name()}] {e}",)
            raise
    report = RegretReport(scenario=cfg.scenario, config=cfg.to_dict(),
                          config_hash=cfg.content_hash(), rows=rows, metrics=metrics,
                          flags={k: bool(v) for k, v in flags.items()},
                          wall_clock=monitor.wall_clock, monitoring=monitor.to_dict())
    if write:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        report.outputs = {"csv": report.write_csv(out / f"{cfg.run_name()}.csv")}
        report.outputs["json"] = str(out / f"{cfg.run_name()}.json")
        report.write_json(report.outputs["json"])
    logger.info(f"{cfg.run_name()} finished in {monitor.wall_clock:.2f}s; flags {report.flags}")
    return report


@dataclass
class SweepResult:
    """One row per (algorithm, eps, T) plus the per-cell ordering flag"""

    rows: List[Dict] = field(default_factory=list)
    ordering: Dict[str, bool] = field(default_factory=dict)
    path: Optional[str] = None

    @property
    def ordering_holds(self) -> bool:
        return all(self.ordering.values())


SWEEP_COLUMNS = ("algorithm", "eps", "T", "lattice_points", "disc_cal_error", "l2_cal_error",
                 "swap_regret", "rounding_excess", "regret_bound", "envelope_shape")


def sweep(cfg: ExperimentConfig, horizons: Sequence[int], epsilons: Optional[Sequence[float]] = None,
          algorithms: Sequence[str] = SWEEP_ALGORITHMS, write: bool = True) -> SweepResult:
    """Discretized calibration error of each algorithm on each (eps, T) cell"""
    result = SweepResult()
    for T in horizons:
        grid = epsilons if epsilons else [T ** (-e) for e in SWEEP_EXPONENTS]
        for raw_eps in grid:
            eps = snap_to_lattice(raw_eps)
            errors = {}
            for algorithm in algorithms:
                run_cfg = replace(cfg, scenario="discretized-calibration", T=int(T), eps=eps,
                                  forecaster=algorithm, checkpoints=1)
                forecaster, _ = _discretized_run(run_cfg, _streams(cfg.seed), eps)
                transcript = forecaster.transcript
                errors[algorithm] = discretized_calibration_error(transcript, eps)
                engine = getattr(forecaster, "engine", None)
                result.rows.append({
                    "algorithm": algorithm, "eps": eps, "T": int(T),
                    "lattice_points": lattice_steps(eps) + 1,
                    "disc_cal_error": errors[algorithm],
                    "l2_cal_error": l2_calibration_error(transcript),
                    "swap_regret": discretized_swap_regret(transcript, eps),
                    "rounding_excess": rounding_excess(transcript, eps),
                    "regret_bound": engine.regret_bound() if engine is not None else None,
                    "envelope_shape": discretized_shape(eps, T),
                })
                logger.info(f"Sweep {algorithm} eps={eps:.4g} T={T}: {errors[algorithm]:.4g}")
            if "discretized-swap" in errors and len(errors) > 1:
                baselines = [v for k, v in errors.items() if k != "discretized-swap"]
                result.ordering[f"eps={eps:.6g},T={T}"] = errors["discretized-swap"] < min(baselines)
    if write:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"sweep_seed{cfg.seed}.csv"
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(SWEEP_COLUMNS)
            for row in result.rows:
                writer.writerow([row[c] for c in SWEEP_COLUMNS])
        result.path = str(path)
        logger.info(f"Sweep results saved to: {path}")
    return result
