#!/usr/bin/env python3
"""
Benchmark Runner Service

Repeats an experiment and reports accuracy and sparsity. The two synthetic
experiments generate train/test data from a trial-indexed seed. The real-data
experiment standardizes a given train/test pair and optionally keeps the
top-k ranked genes. It tunes by cross validation, then re-splits the pooled
samples on every trial. Each model is fitted per trial; sparsity is counted on
the truncated weights. Results are written as a TSV table with per-trial rows
followed by mean and standard-error rows.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from config.config_manager import get_config_manager
from services.data_pipeline import (
    SyntheticSpec,
    Variant,
    cv_grid_search,
    gene_rank,
    holdout_grid_search,
    make_split,
    resample_split,
    select_features,
    select_top_k,
    standardize,
)
from services.dataset_io import load_csv
from services.run_logger import RunLogger
from solvers.admm_solver import default_hyperparams, fit
from solvers.core_model import Dataset, RegularizerKind, accuracy, sparsity_metrics, truncate

logger = logging.getLogger(__name__)

class Experiment(Enum):
    EXAMPLE1 = "example1"
    EXAMPLE2 = "example2"
    REAL = "real"

class BenchPhase(Enum):
    """Enumeration of benchmark phases."""
    READY = "Ready"
    PREPARING = "Preparing data"
    TUNING = "Tuning"
    RUNNING_TRIALS = "Running trials"
    SUMMARIZING = "Summarizing"
    COMPLETE = "Complete"
    ERROR = "Error"

class TrialError(RuntimeError):
    """A benchmark trial failed."""

    def __init__(self, trial: int, cause: Exception):
        super().__init__(f"trial {trial} failed: {cause}")
        self.trial = trial
        self.cause = cause

@dataclass
class BenchConfig:
    """Benchmark parameters. For the real experiment n_train 0 means the training file's size."""
    experiment: Experiment
    trials: int
    n_train: int
    n_test: int
    kinds: List[RegularizerKind]
    lambdas: Dict[RegularizerKind, Tuple[float, float]]
    base_seed: int = 2013
    tune: bool = False
    include_time: bool = True
    p: int = 10
    s: int = 0
    rho: float = 0.0
    workers: int = 1
    hp_overrides: Dict[str, float] = field(default_factory=dict)
    strategy: Optional[str] = None
    output: Optional[Path] = None
    train_path: Optional[Path] = None
    test_path: Optional[Path] = None
    label_column: Union[int, str] = -1
    top_k: Optional[int] = None
    folds: int = 3

    def __post_init__(self):
        self.experiment = Experiment(self.experiment)
        if self.trials < 1:
            raise ValueError(f"trials must be at least 1, got {self.trials}")
        if self.experiment is Experiment.REAL:
            if not self.train_path or not self.test_path:
                raise ValueError("the real experiment needs a training and a test file")
            if self.n_train < 0:
                raise ValueError(f"n_train must be non-negative, got {self.n_train}")
            if self.top_k is not None and self.top_k < 1:
                raise ValueError(f"top_k must be at least 1, got {self.top_k}")
            if self.folds < 2:
                raise ValueError(f"folds must be at least 2, got {self.folds}")
        elif self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train and n_test must be positive")
        if not self.kinds:
            raise ValueError("no models requested")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")
        if not self.tune:
            missing = [k.value for k in self.kinds if k not in self.lambdas]
            if missing:
                raise ValueError(f"no lambdas given for {missing}")

    def spec(self, seed: int, n: int) -> SyntheticSpec:
        if self.experiment is Experiment.EXAMPLE1:
            return SyntheticSpec(Variant.FIVE_CLASS, n=n, seed=seed)
        if self.experiment is Experiment.EXAMPLE2:
            return SyntheticSpec(Variant.FOUR_CLASS, n=n, p=self.p, s=self.s, rho=self.rho, seed=seed)
        raise ValueError("the real experiment has no generator")

    @property
    def metric_columns(self) -> List[str]:
        if self.experiment is Experiment.EXAMPLE1:
            return ['CZ', 'IZ', 'NR']
        if self.experiment is Experiment.EXAMPLE2:
            return ['IZ', 'NZ1', 'NZ2', 'NZ3', 'NZ4']
        return ['NZ', 'NR']

    @property
    def columns(self) -> List[str]:
        return ['trial', 'model', 'accuracy', 'se', 'time'] + self.metric_columns

def create_bench_config_from_file(experiment: str,
                                  lambda1: Optional[float] = None,
                                  lambda2: Optional[float] = None,
                                  **overrides) -> BenchConfig:
    """
    Create BenchConfig from the configuration file, then apply overrides.

    lambda1 / lambda2, when given, replace the configured value for every model.
    """
    section = getattr(get_config_manager().benchmark, Experiment(experiment).value)
    values = {
        'experiment': experiment,
        'trials': section.trials,
        'n_train': section.n_train,
        'n_test': section.n_test,
        'kinds': [RegularizerKind.from_name(k) for k in section.kinds],
        'lambdas': {RegularizerKind.from_name(k): tuple(v) for k, v in section.lambdas.items()},
        'base_seed': section.base_seed,
        'tune': section.tune,
        'include_time': section.include_time,
        'p': section.p,
        's': section.s,
        'rho': section.rho,
        'train_path': Path(section.train_path) if section.train_path else None,
        'test_path': Path(section.test_path) if section.test_path else None,
        'label_column': section.label_column,
        'top_k': section.top_k,
        'folds': section.folds
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    if lambda1 is not None or lambda2 is not None:
        lambdas = dict(values['lambdas'])
        for kind in values['kinds']:
            current = lambdas.get(kind, (0.0, 0.0))
            lambdas[kind] = (lambda1 if lambda1 is not None else current[0],
                             lambda2 if lambda2 is not None else current[1])
        values['lambdas'] = lambdas
    return BenchConfig(**values)

@dataclass
class BenchReport:
    """Per-trial rows plus summary statistics."""
    trials: pd.DataFrame
    summary: pd.DataFrame
    lambdas: Dict[str, Tuple[float, float]]
    nonconverged: int = 0

    @property
    def all_converged(self) -> bool:
        return self.nonconverged == 0

@dataclass
class RealData:
    """Standardized (and gene-selected) samples the real-data trials draw from."""
    train: Dataset
    test: Dataset
    n_train: int
    selected: Optional[np.ndarray] = None

def prepare_real_data(config: BenchConfig) -> RealData:
    """
    Load both files and standardize each with its own statistics.

    With top_k set, genes are ranked on the standardized training file and the
    same k columns are kept in both sets.
    """
    train = load_csv(config.train_path, config.label_column)
    test = load_csv(config.test_path, config.label_column)
    if train.p != test.p:
        raise ValueError(f"training file has p={train.p}, test file has p={test.p}")
    J = max(train.J, test.J)
    train = standardize(Dataset(train.features, train.labels, J))
    test = standardize(Dataset(test.features, test.labels, J))

    selected = None
    if config.top_k is not None:
        if config.top_k > train.p:
            raise ValueError(f"top_k={config.top_k} exceeds p={train.p}")
        selected = select_top_k(gene_rank(train), config.top_k)
        train = select_features(train, selected)
        test = select_features(test, selected)

    n_train = config.n_train or train.n
    if n_train >= train.n + test.n:
        raise ValueError(f"n_train={n_train} leaves no test samples out of {train.n + test.n}")
    logger.info(f"Real data: p={train.p}, J={J}, pooled n={train.n + test.n}, "
                f"n_train={n_train}" + (f", top {config.top_k} genes" if selected is not None else ""))
    return RealData(train=train, test=test, n_train=n_train, selected=selected)

class BenchmarkRunner:
    """
    Orchestrates a benchmark run.

    Phases: preparing data (real experiment), tuning (optional), running
    trials, summarizing.
    """

    def __init__(self,
                 config: BenchConfig,
                 phase_callback: Optional[Callable[[BenchPhase], None]] = None,
                 run_logger: Optional[RunLogger] = None):
        """
        Initialize the benchmark runner.

        Args:
            config: Benchmark configuration
            phase_callback: Optional callback for phase changes
            run_logger: Optional run logger for events and detailed records
        """
        self.config = config
        self.phase_callback = phase_callback
        self.run_logger = run_logger
        self.current_phase = BenchPhase.READY
        self.lambdas = dict(config.lambdas)
        self.real_data: Optional[RealData] = None
        cfg = get_config_manager()
        self.metrics_config = cfg.metrics
        self.solver_config = cfg.solver
        self.grid_config = cfg.grid

        logger.debug(f"BenchmarkRunner initialized: {config.experiment.value}, "
                     f"{config.trials} trials, models {[k.value for k in config.kinds]}")

    def _set_phase(self, phase: BenchPhase):
        if self.current_phase != phase:
            old_phase = self.current_phase
            self.current_phase = phase
            logger.info(f"Phase transition: {old_phase.value} → {phase.value}")
            if self.phase_callback:
                try:
                    self.phase_callback(phase)
                except Exception as e:
                    logger.error(f"Phase callback error: {e}")

    def _event(self, level: str, event: str, details: str = ""):
        if self.run_logger:
            self.run_logger.log_system_event(level, 'BenchmarkRunner', event, details)

    def run(self) -> BenchReport:
        """Run every phase and return the report."""
        logger.info("=" * 50)
        logger.info(f"STARTING BENCHMARK {self.config.experiment.value.upper()}")
        logger.info("=" * 50)

        if self.run_logger:
            self.run_logger.start_run(self._config_record())

        try:
            if self.config.experiment is Experiment.REAL:
                self._phase_prepare()
            if self.config.tune:
                self._phase_tune()
            rows = self._phase_trials()
            report = self._phase_summarize(rows)
            self._set_phase(BenchPhase.COMPLETE)
        except Exception as e:
            self._set_phase(BenchPhase.ERROR)
            self._event('ERROR', 'Benchmark error', str(e))
            if self.run_logger:
                self.run_logger.finish_run({'error': str(e)})
            raise

        if self.run_logger:
            for record in report.trials.to_dict(orient='records'):
                self.run_logger.log_trial(record)
            self.run_logger.finish_run({
                'lambdas': report.lambdas,
                'nonconverged': report.nonconverged,
                'summary': report.summary.to_dict(orient='records')
            })

        logger.info("=" * 50)
        logger.info(f"BENCHMARK COMPLETED: {len(report.trials)} rows, "
                    f"{report.nonconverged} non-converged fits")
        logger.info("=" * 50)
        return report

    def _config_record(self) -> Dict[str, Any]:
        record = asdict(self.config)
        record['experiment'] = self.config.experiment.value
        record['kinds'] = [k.value for k in self.config.kinds]
        record['lambdas'] = {k.value: v for k, v in self.config.lambdas.items()}
        return record

    def _hyperparams(self, n: int, p: int, J: int, kind: RegularizerKind):
        lambda1, lambda2 = self.lambdas[kind]
        hp = default_hyperparams(n, p, J, lambda1, lambda2, self.solver_config)
        for name, value in self.config.hp_overrides.items():
            setattr(hp, name, value)
        return hp

    def _phase_prepare(self):
        self._set_phase(BenchPhase.PREPARING)
        self.real_data = prepare_real_data(self.config)
        if self.real_data.selected is not None:
            self._event('INFO', 'Genes selected', f'top {self.config.top_k}')

    def _tuning_grids(self, kind: RegularizerKind):
        # the elastic net searches lambda1 only; group/sup use the smaller tuning grid
        if kind is RegularizerKind.ELASTIC_NET:
            return None, None
        values = self.grid_config.tune_lambda_values
        return values, values

    def _phase_tune(self):
        """
        Choose each model's lambdas once before the trials.

        Synthetic experiments use a hold-out split drawn from base_seed - 1;
        the real experiment uses stratified k-fold CV on the training file.
        """
        self._set_phase(BenchPhase.TUNING)
        config = self.config
        split = None
        if config.experiment is not Experiment.REAL:
            split = make_split(config.spec(config.base_seed - 1, config.n_train), config.n_train)

        for kind in config.kinds:
            grid1, grid2 = self._tuning_grids(kind)
            if split is None:
                result = cv_grid_search(self.real_data.train, kind, grid1, grid2, config.folds,
                                        config.base_seed, self.solver_config,
                                        config.hp_overrides, config.workers)
            else:
                result = holdout_grid_search(split.train, split.test, kind, grid1, grid2,
                                             self.solver_config, config.hp_overrides, config.workers)
            self.lambdas[kind] = result.selected
            self._event('INFO', f'Tuned {kind.value}',
                        f'lambda1={result.lambda1:g}, lambda2={result.lambda2:g}')

    def _trial_data(self, trial: int) -> Tuple[Dataset, Dataset, Optional[np.ndarray]]:
        config = self.config
        if config.experiment is Experiment.REAL:
            train, test = resample_split(self.real_data.train, self.real_data.test,
                                         self.real_data.n_train, seed=config.base_seed + trial)
            return train, test, None
        split = make_split(config.spec(config.base_seed + trial, config.n_train), config.n_test)
        return split.train, split.test, split.relevance_mask

    def _metrics(self, W: np.ndarray, mask: Optional[np.ndarray]) -> Dict[str, int]:
        if mask is None:
            nonzero = W != 0
            return {'NZ': int(nonzero.sum()), 'NR': int(np.any(nonzero, axis=1).sum())}
        metrics = sparsity_metrics(W, mask).as_dict()
        return {name: metrics[name] for name in self.config.metric_columns}

    def run_trial(self, trial: int) -> List[Dict[str, Any]]:
        """Fit every model on the trial's data; one row per model."""
        config = self.config
        train, test, mask = self._trial_data(trial)

        rows = []
        for kind in config.kinds:
            hp = self._hyperparams(train.n, train.p, train.J, kind)
            start = time.perf_counter()
            report = fit(train, hp, kind, strategy=config.strategy, settings=self.solver_config)
            elapsed = time.perf_counter() - start

            W = truncate(report.classifier.W, self.metrics_config.truncate_rel_tol,
                         self.metrics_config.zero_abs_tol)
            row = {
                'trial': trial,
                'model': kind.value,
                'accuracy': accuracy(report.classifier, test),
                'se': 0.0,
                'time': elapsed if config.include_time else 0.0,
                'converged': report.converged,
                'iterations': report.iterations
            }
            row.update(self._metrics(W, mask))
            rows.append(row)
        return rows

    def _safe_trial(self, trial: int) -> List[Dict[str, Any]]:
        try:
            return self.run_trial(trial)
        except Exception as e:
            raise TrialError(trial, e) from e

    def _phase_trials(self) -> List[Dict[str, Any]]:
        self._set_phase(BenchPhase.RUNNING_TRIALS)
        indices = range(self.config.trials)
        if self.config.workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                results = list(pool.map(self._safe_trial, indices))
        else:
            results = [self._safe_trial(i) for i in indices]
        return [row for trial_rows in results for row in trial_rows]

    def _phase_summarize(self, rows: List[Dict[str, Any]]) -> BenchReport:
        self._set_phase(BenchPhase.SUMMARIZING)
        # rows arrive ordered by trial, then by requested model
        trials = pd.DataFrame(rows)

        value_columns = ['accuracy', 'time'] + self.config.metric_columns
        count = self.config.trials
        means = trials.groupby('model', sort=False)[value_columns].mean()
        if count > 1:
            errors = trials.groupby('model', sort=False)[value_columns].std(ddof=1) / math.sqrt(count)
        else:
            errors = means * 0.0

        summary_rows = []
        for kind in self.config.kinds:
            model = kind.value
            mean_row = {'trial': 'mean', 'model': model, 'se': errors.loc[model, 'accuracy']}
            mean_row.update(means.loc[model].to_dict())
            se_row = {'trial': 'se', 'model': model, 'se': errors.loc[model, 'accuracy']}
            se_row.update(errors.loc[model].to_dict())
            summary_rows.extend([mean_row, se_row])
        summary = pd.DataFrame(summary_rows)[self.config.columns]

        nonconverged = int((~trials['converged']).sum())
        if nonconverged:
            logger.warning(f"{nonconverged} fits stopped at maxit")
        return BenchReport(trials=trials, summary=summary,
                           lambdas={k.value: v for k, v in self.lambdas.items()},
                           nonconverged=nonconverged)

def write_report(report: BenchReport, path: Path, columns: List[str]):
    """Tab-separated report: per-trial rows, then mean and se rows per model."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = pd.concat([report.trials[columns], report.summary[columns]], ignore_index=True)
    table.to_csv(path, sep='\t', index=False, float_format='%.6f')
    logger.info(f"Benchmark report written: {path}")

def format_summary(report: BenchReport, columns: List[str]) -> str:
    """'mean(se)' cells, one line per model."""
    metric_columns = [c for c in columns if c not in ('trial', 'model', 'se')]
    lines = ["model\t" + "\t".join(metric_columns)]
    summary = report.summary
    for model in summary['model'].unique():
        mean_row = summary[(summary['model'] == model) & (summary['trial'] == 'mean')].iloc[0]
        se_row = summary[(summary['model'] == model) & (summary['trial'] == 'se')].iloc[0]
        cells = [f"{mean_row[c]:.3f}({se_row[c]:.3f})" for c in metric_columns]
        lines.append(model + "\t" + "\t".join(cells))
    return "\n".join(lines)

def run_benchmark(config: BenchConfig, run_logger: Optional[RunLogger] = None) -> BenchReport:
    """Run the benchmark and write the TSV report when config.output is set."""
    runner = BenchmarkRunner(config, run_logger=run_logger)
    report = runner.run()
    if config.output:
        write_report(report, config.output, config.columns)
    return report
