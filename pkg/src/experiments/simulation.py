"""
Monte Carlo coverage experiments on the synthetic test functions
"""

from dataclasses import dataclass, field, asdict
from typing import Any, Callable, Dict, List, Optional, Tuple
import logging
import math
import time

import numpy as np
from joblib import Parallel, delayed

from src.core.errors import InvalidInputError, NoValidModelError, InsufficientDataError
from src.core.honest_trees import SSE_METHODS, SSE_REFIT, Dataset, ForestParams, train_forest
from src.core.random_streams import (
    make_stream, PHASE_DATA, PHASE_FOREST, PHASE_ENSEMBLE, PHASE_INTERVAL, PHASE_PROBE,
    sample_uniform_array, sample_normal_array
)
from src.engines.fiducial import (
    FiducialEnsemble, generate_ensemble, confidence_interval, prediction_interval,
    sigma_interval, point_estimates
)
from src.experiments.progress import SimulationProgress
from src.experiments.sim_functions import active_dimension, evaluate_function

logger = logging.getLogger(__name__)

TARGET_MEAN = "conditional-mean"
TARGET_SIGMA = "sigma"
TARGET_FUTURE = "future-response"
ALL_TARGETS = (TARGET_MEAN, TARGET_SIGMA, TARGET_FUTURE)


@dataclass(frozen=True)
class SimConfig:
    """One simulation configuration"""
    function_name: str = "cosine"
    n: int = 200
    p: int = 2
    sigma: float = 1.0
    reps: int = 200
    level: float = 0.95
    extra_levels: Tuple[float, ...] = ()
    targets: Tuple[str, ...] = (TARGET_MEAN,)
    n_trees: int = 500
    draws: int = 500
    min_node_size: int = 5
    mtry: Optional[int] = None
    max_leaves: Optional[int] = None
    sse: str = SSE_REFIT
    master_seed: int = 0

    def __post_init__(self):
        dim = active_dimension(self.function_name)
        if self.p < dim:
            raise InvalidInputError(f"'{self.function_name}' needs p >= {dim}, got {self.p}")
        if self.n < 8:
            raise InvalidInputError(f"simulation needs n >= 8, got {self.n}")
        if self.reps < 1:
            raise InvalidInputError(f"reps must be >= 1, got {self.reps}")
        if self.sigma < 0:
            raise InvalidInputError(f"noise scale must be non-negative, got {self.sigma}")
        for level in self.levels:
            if not 0.0 < level < 1.0:
                raise InvalidInputError(f"interval level must be in (0, 1), got {level}")
        if self.sse not in SSE_METHODS:
            raise InvalidInputError(f"sse must be one of {SSE_METHODS}, got '{self.sse}'")
        unknown = set(self.targets) - set(ALL_TARGETS)
        if unknown or not self.targets:
            raise InvalidInputError(f"targets must be a non-empty subset of {ALL_TARGETS}, got {self.targets}")

    @property
    def levels(self) -> Tuple[float, ...]:
        return (self.level,) + tuple(l for l in self.extra_levels if l != self.level)

    @property
    def forest_params(self) -> ForestParams:
        return ForestParams(n_trees=self.n_trees, min_node_size=self.min_node_size,
                            mtry=self.mtry, max_leaves=self.max_leaves, sse=self.sse)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["extra_levels"] = list(self.extra_levels)
        data["targets"] = list(self.targets)
        return data


@dataclass
class SimulatedRep:
    """Training data and the probe point of one repetition"""
    train: Dataset
    probe: np.ndarray
    truth: float
    future: float


@dataclass
class CoverageRecord:
    """Coverage of one (target, level) pair over the repetitions"""
    function_name: str
    n: int
    p: int
    target: str
    level: float
    empirical_coverage: float
    mc_stderr: float
    mean_width: float
    reps: int
    reps_ok: int
    failed_reps: int
    runtime_ms: Optional[float] = None  # wall time of the whole configuration, only with timings


@dataclass
class CoverageReport:
    config: Dict[str, Any]
    records: List[CoverageRecord] = field(default_factory=list)
    runtime_s: float = 0.0


@dataclass
class SigmaHistogram:
    """Binned sigma~ sample of one ensemble"""
    edges: List[float]
    counts: List[int]
    mean: float
    std: float
    M: int
    sigma_true: float


@dataclass
class _RepOutcome:
    rep: int
    ok: bool
    error: str = ""
    hits: Dict[Tuple[str, float], bool] = field(default_factory=dict)
    widths: Dict[Tuple[str, float], float] = field(default_factory=dict)


def generate_dataset(config: SimConfig, rep_index: int) -> SimulatedRep:
    """
    Simulate n training rows and one independent probe point

    X ~ U(0,1)^p, y = f(x) + sigma * z. All randomness comes from the
    stream [PHASE_DATA, rep_index] under the configured master seed.
    """
    stream = make_stream(config.master_seed, [PHASE_DATA, rep_index])
    X = sample_uniform_array(stream, 0.0, 1.0, (config.n, config.p))
    noise = sample_normal_array(stream, config.n)
    y = evaluate_function(config.function_name, X) + config.sigma * noise

    probe = sample_uniform_array(stream, 0.0, 1.0, config.p)
    truth = float(evaluate_function(config.function_name, probe)[0])
    future = truth + config.sigma * float(sample_normal_array(stream, 1)[0])
    return SimulatedRep(train=Dataset.from_arrays(X, y), probe=probe, truth=truth, future=future)


def fit_rep_ensemble(config: SimConfig, rep_index: int, train: Dataset, n_jobs: int = 1) -> FiducialEnsemble:
    """Train the forest and draw the ensemble for one repetition"""
    forest = train_forest(train, config.forest_params,
                          make_stream(config.master_seed, [PHASE_FOREST, rep_index]), n_jobs=n_jobs)
    return generate_ensemble(forest, train, config.draws,
                             make_stream(config.master_seed, [PHASE_ENSEMBLE, rep_index]), n_jobs=n_jobs)


def _run_rep(config: SimConfig, rep_index: int) -> _RepOutcome:
    sim = generate_dataset(config, rep_index)
    try:
        ensemble = fit_rep_ensemble(config, rep_index, sim.train)
    except (NoValidModelError, InsufficientDataError) as e:
        return _RepOutcome(rep=rep_index, ok=False, error=str(e))

    outcome = _RepOutcome(rep=rep_index, ok=True)
    for level in config.levels:
        intervals = {}
        if TARGET_MEAN in config.targets:
            intervals[TARGET_MEAN] = (confidence_interval(ensemble, sim.probe, level), sim.truth)
        if TARGET_SIGMA in config.targets:
            intervals[TARGET_SIGMA] = (sigma_interval(ensemble, level), config.sigma)
        if TARGET_FUTURE in config.targets:
            # Same stream key at every level so wider levels nest the narrower ones
            stream = make_stream(config.master_seed, [PHASE_INTERVAL, rep_index])
            intervals[TARGET_FUTURE] = (prediction_interval(ensemble, sim.probe, level, stream), sim.future)
        for target, (interval, value) in intervals.items():
            outcome.hits[(target, level)] = interval.contains(value)
            outcome.widths[(target, level)] = interval.width
    return outcome


def _aggregate(config: SimConfig, outcomes: List[_RepOutcome]) -> List[CoverageRecord]:
    ok = [o for o in outcomes if o.ok]
    failed = len(outcomes) - len(ok)
    records = []
    for target in config.targets:
        for level in config.levels:
            key = (target, level)
            if ok:
                coverage = sum(o.hits[key] for o in ok) / len(ok)
                mean_width = float(np.mean([o.widths[key] for o in ok]))
                stderr = math.sqrt(coverage * (1.0 - coverage) / len(ok))
            else:
                coverage, mean_width, stderr = float("nan"), float("nan"), float("nan")
            records.append(CoverageRecord(
                function_name=config.function_name, n=config.n, p=config.p, target=target,
                level=level, empirical_coverage=coverage, mc_stderr=stderr, mean_width=mean_width,
                reps=len(outcomes), reps_ok=len(ok), failed_reps=failed,
            ))
    return records


def run_coverage_experiment(config: SimConfig,
                            n_jobs: int = 1,
                            progress_callback: Optional[Callable[[SimulationProgress], None]] = None,
                            timings: bool = False) -> CoverageReport:
    """
    Empirical coverage of the fiducial intervals over repeated simulations

    Each repetition simulates data, trains a forest, draws an ensemble and
    checks whether the intervals contain f(x*), sigma and y*. Repetitions
    whose forest has no eligible tree are counted as failed and excluded
    from the coverage denominators.

    Args:
        config: simulation configuration
        n_jobs: joblib workers over repetitions
        progress_callback: optional callable receiving SimulationProgress
        timings: fill runtime_ms on every record

    Returns:
        CoverageReport with one record per (target, level)
    """
    start = time.time()
    progress = SimulationProgress(total_reps=config.reps,
                                  label=f"{config.function_name} n={config.n} p={config.p}")
    logger.info(f"Coverage experiment: {config.to_dict()}")

    outcomes: List[_RepOutcome] = []
    results = Parallel(n_jobs=n_jobs, return_as="generator")(
        delayed(_run_rep)(config, rep) for rep in range(config.reps)
    )
    for outcome in results:
        outcomes.append(outcome)
        progress.current_rep += 1
        if not outcome.ok:
            progress.failed_reps += 1
            logger.warning(f"Repetition {outcome.rep} failed: {outcome.error}")
        if progress_callback:
            progress_callback(progress)

    report = CoverageReport(config=config.to_dict(), records=_aggregate(config, outcomes),
                            runtime_s=time.time() - start)
    if timings:
        for record in report.records:
            record.runtime_ms = report.runtime_s * 1000.0
    for record in report.records:
        logger.info(f"{record.target} @ {record.level:.2f}: coverage {record.empirical_coverage:.3f} "
                    f"(se {record.mc_stderr:.3f}), mean width {record.mean_width:.3f}, "
                    f"{record.failed_reps} failed")
    return report


def sigma_histogram(config: SimConfig, bins: int = 30, n_jobs: int = 1) -> SigmaHistogram:
    """
    Bin the sigma~ sample of a single ensemble (repetition 0)

    Returns:
        SigmaHistogram whose counts sum to the number of draws
    """
    if bins < 1:
        raise InvalidInputError(f"bins must be >= 1, got {bins}")
    sim = generate_dataset(config, 0)
    ensemble = fit_rep_ensemble(config, 0, sim.train, n_jobs=n_jobs)
    sigmas = ensemble.sigma_samples
    counts, edges = np.histogram(sigmas, bins=bins)
    logger.info(f"sigma~ sample: mean {sigmas.mean():.4f}, sd {sigmas.std():.4f} over {sigmas.size} draws")
    return SigmaHistogram(edges=edges.tolist(), counts=counts.astype(int).tolist(),
                          mean=float(sigmas.mean()), std=float(sigmas.std()),
                          M=int(sigmas.size), sigma_true=config.sigma)


def point_estimate_mse(config: SimConfig, n_probes: int = 100, n_jobs: int = 1) -> float:
    """Mean squared error of the fiducial point estimate against f on fresh probe points"""
    sim = generate_dataset(config, 0)
    ensemble = fit_rep_ensemble(config, 0, sim.train, n_jobs=n_jobs)
    stream = make_stream(config.master_seed, [PHASE_PROBE, 0])
    probes = sample_uniform_array(stream, 0.0, 1.0, (n_probes, config.p))
    truth = evaluate_function(config.function_name, probes)
    return float(np.mean((point_estimates(ensemble, probes) - truth) ** 2))
