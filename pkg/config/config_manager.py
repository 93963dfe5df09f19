#!/usr/bin/env python3
"""
Configuration Manager Module

Centralized configuration management for the regularized multiclass SVM solver.
Solver, grid, generator and benchmark defaults are read from one YAML file
and exposed as dataclass sections.
"""

import yaml
import logging
from pathlib import Path
from typing import Dict, Any, List, Optional, Tuple, Union
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

@dataclass
class SolverConfig:
    """ADMM solver defaults."""
    alpha_scale: float
    lambda3: float
    tol: float
    maxit: int
    strategy: str = "auto"
    finite_check_every: int = 100
    rate_window: int = 50

@dataclass
class MetricsConfig:
    """Truncation thresholds used before counting zeros."""
    truncate_rel_tol: float
    zero_abs_tol: float = 0.0
    train_zero_tol: float = 1.0e-4

@dataclass
class GridConfig:
    """Model selection grid."""
    lambda_values: List[float]
    folds: int = 3
    elastic_lambda2: float = 1.0
    # lambda1 x lambda2 grid for group/sup when a benchmark tunes itself
    tune_lambda_values: List[float] = field(default_factory=lambda: [0.0, 0.01, 0.03, 0.05, 0.1, 0.2])

@dataclass
class FiveClassConfig:
    """Five-class generator defaults."""
    n: int
    n_test: int

@dataclass
class FourClassConfig:
    """Four-class generator defaults."""
    n: int
    n_test: int
    p: int
    s: int
    rho: float

@dataclass
class GeneratorConfig:
    """Complete generator configuration."""
    five_class: FiveClassConfig
    four_class: FourClassConfig

@dataclass
class ExperimentConfig:
    """One benchmark experiment."""
    trials: int
    n_train: int
    n_test: int
    kinds: List[str]
    lambdas: Dict[str, Tuple[float, float]]
    tune: bool = False
    base_seed: int = 2013
    include_time: bool = True
    p: int = 10
    s: int = 0
    rho: float = 0.0
    # real-data experiment only
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    label_column: Union[int, str] = -1
    top_k: Optional[int] = None
    folds: int = 3

@dataclass
class LoggingConfig:
    """Logging configuration."""
    level: str = "INFO"
    console_output: bool = True
    directory: str = "data/logs"
    save_detailed_runs: bool = True

@dataclass
class BenchmarkConfig:
    """The two synthetic experiments and the real-data protocol."""
    example1: ExperimentConfig
    example2: ExperimentConfig
    real: ExperimentConfig

class ConfigManager:
    """
    Central configuration manager for the solver.

    Loads configuration from YAML file and provides structured access
    to all defaults with validation and built-in fallbacks.
    """

    def __init__(self, config_file: str = "config/system_config.yaml"):
        """
        Initialize configuration manager.

        Args:
            config_file: Path to configuration YAML file
        """
        self.config_file = Path(config_file)
        self.config_data = {}

        self._load_config()
        self._create_config_objects()

        logger.debug(f"Configuration ready from {self.config_file}")

    def _load_config(self):
        """Read the YAML file, falling back to built-in defaults on any failure."""
        try:
            if not self.config_file.exists():
                raise FileNotFoundError(f"Configuration file not found: {self.config_file}")

            with open(self.config_file, 'r') as f:
                self.config_data = yaml.safe_load(f) or {}

            logger.debug(f"Configuration loaded successfully from {self.config_file}")

        except Exception as e:
            logger.warning(f"Failed to load configuration: {e}")
            logger.warning("Using default configuration values")
            self._load_default_config()

    def _load_default_config(self):
        """Built-in defaults; they mirror the shipped system_config.yaml."""
        self.config_data = {
            'solver': {
                'alpha_scale': 50.0,
                'lambda3': 1.0,
                'tol': 1.0e-5,
                'maxit': 5000,
                'strategy': 'auto',
                'finite_check_every': 100,
                'rate_window': 50
            },
            'metrics': {
                'truncate_rel_tol': 1.0e-3,
                'zero_abs_tol': 0.0,
                'train_zero_tol': 1.0e-4
            },
            'grid': {
                'lambda_values': [0.0, 0.001, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06,
                                  0.07, 0.08, 0.09, 0.1, 0.15, 0.20, 0.25, 0.30],
                'folds': 3,
                'elastic_lambda2': 1.0,
                'tune_lambda_values': [0.0, 0.01, 0.03, 0.05, 0.1, 0.2]
            },
            'generators': {
                'five_class': {'n': 200, 'n_test': 200},
                'four_class': {'n': 100, 'n_test': 100, 'p': 500, 's': 30, 'rho': 0.0}
            },
            'benchmark': {
                'example1': {
                    'trials': 20,
                    'n_train': 200,
                    'n_test': 10000,
                    'kinds': ['elastic', 'group', 'sup'],
                    'lambdas': {'elastic': [0.05, 1.0], 'group': [0.01, 0.1], 'sup': [0.01, 0.3]},
                    'tune': False,
                    'base_seed': 2013,
                    'include_time': True
                },
                'example2': {
                    'trials': 10,
                    'n_train': 100,
                    'n_test': 5000,
                    'p': 500,
                    's': 30,
                    'rho': 0.0,
                    'kinds': ['elastic', 'group', 'sup'],
                    'lambdas': {'elastic': [0.09, 1.0], 'group': [0.03, 0.1], 'sup': [0.03, 0.15]},
                    'tune': False,
                    'base_seed': 2013,
                    'include_time': True
                },
                'real': {
                    'trials': 100,
                    'n_train': 0,
                    'n_test': 0,
                    'kinds': ['elastic', 'group', 'sup'],
                    'lambdas': {'elastic': [0.01, 1.0], 'group': [0.01, 0.05], 'sup': [0.01, 0.1]},
                    'tune': True,
                    'base_seed': 2013,
                    'include_time': True,
                    'train_path': None,
                    'test_path': None,
                    'label_column': -1,
                    'top_k': None,
                    'folds': 3
                }
            },
            'logging': {
                'level': 'INFO',
                'console_output': True,
                'directory': 'data/logs',
                'save_detailed_runs': True
            }
        }

    @staticmethod
    def _experiment(data: Dict[str, Any]) -> ExperimentConfig:
        values = dict(data)
        values['lambdas'] = {kind: (float(pair[0]), float(pair[1]))
                             for kind, pair in values.get('lambdas', {}).items()}
        return ExperimentConfig(**values)

    def _create_config_objects(self):
        """Build the typed sections from config_data."""
        self.solver = SolverConfig(**self.config_data.get('solver', {}))
        self.metrics = MetricsConfig(**self.config_data.get('metrics', {}))
        self.grid = GridConfig(**self.config_data.get('grid', {}))

        gen_data = self.config_data.get('generators', {})
        self.generators = GeneratorConfig(
            five_class=FiveClassConfig(**gen_data.get('five_class', {})),
            four_class=FourClassConfig(**gen_data.get('four_class', {}))
        )

        bench_data = self.config_data.get('benchmark', {})
        self.benchmark = BenchmarkConfig(
            example1=self._experiment(bench_data.get('example1', {})),
            example2=self._experiment(bench_data.get('example2', {})),
            real=self._experiment(bench_data.get('real', {}))
        )

        self.logging = LoggingConfig(**self.config_data.get('logging', {}))

    def validate_config(self) -> Dict[str, list]:
        """Return {'errors': [...], 'warnings': [...]} for out-of-range values."""
        issues = {
            'errors': [],
            'warnings': []
        }

        if self.solver.lambda3 <= 0:
            issues['errors'].append("solver.lambda3 must be positive")
        if self.solver.alpha_scale <= 0:
            issues['errors'].append("solver.alpha_scale must be positive")
        if self.solver.tol <= 0:
            issues['errors'].append("solver.tol must be positive")
        if self.solver.maxit < 1:
            issues['errors'].append("solver.maxit must be at least 1")
        if self.solver.strategy not in ("auto", "direct", "woodbury"):
            issues['errors'].append(f"Unknown solver.strategy: {self.solver.strategy}")

        if self.metrics.truncate_rel_tol < 0:
            issues['errors'].append("metrics.truncate_rel_tol must be non-negative")
        if self.metrics.zero_abs_tol < 0 or self.metrics.train_zero_tol < 0:
            issues['errors'].append("metrics zero tolerances must be non-negative")

        for name in ('lambda_values', 'tune_lambda_values'):
            values = getattr(self.grid, name)
            if not values:
                issues['errors'].append(f"grid.{name} must not be empty")
            if any(v < 0 for v in values):
                issues['errors'].append(f"grid.{name} must be non-negative")
        if self.grid.folds < 2:
            issues['errors'].append("grid.folds must be at least 2")

        four = self.generators.four_class
        if four.s % 2:
            issues['errors'].append("generators.four_class.s must be even")
        if four.p < 3 * four.s // 2:
            issues['errors'].append("generators.four_class.p must be at least 3s/2")
        if not 0 <= four.rho < 1:
            issues['errors'].append("generators.four_class.rho must lie in [0, 1)")

        for name in ('example1', 'example2', 'real'):
            experiment = getattr(self.benchmark, name)
            if experiment.trials < 1:
                issues['errors'].append(f"benchmark.{name}.trials must be at least 1")
            missing = [kind for kind in experiment.kinds if kind not in experiment.lambdas]
            if missing and not experiment.tune:
                issues['errors'].append(f"benchmark.{name} has no lambdas for {missing}")
            if name != 'real' and experiment.n_test < 1000:
                issues['warnings'].append(f"benchmark.{name}.n_test is small; accuracy will be noisy")
        if self.benchmark.real.folds < 2:
            issues['errors'].append("benchmark.real.folds must be at least 2")

        return issues

    def print_config_summary(self):
        """Print the solver, grid and benchmark settings in use."""
        print("=== Regularized MSVM Configuration Summary ===")
        print(f"Config file: {self.config_file}")
        print(f"Solver: alpha = {self.solver.alpha_scale}*J/n, lambda3={self.solver.lambda3}, "
              f"tol={self.solver.tol}, maxit={self.solver.maxit}, strategy={self.solver.strategy}")
        print(f"Truncation: rel_tol={self.metrics.truncate_rel_tol}, "
              f"train abs_tol={self.metrics.train_zero_tol}")
        print(f"Grid: {len(self.grid.lambda_values)} values, {self.grid.folds} folds, "
              f"{len(self.grid.tune_lambda_values)} tuning values")
        for name in ('example1', 'example2'):
            experiment = getattr(self.benchmark, name)
            print(f"{name.capitalize()}: {experiment.trials} trials, "
                  f"n={experiment.n_train}/{experiment.n_test}, p={experiment.p}, "
                  f"lambdas={experiment.lambdas}")
        real = self.benchmark.real
        print(f"Real: {real.trials} trials, top_k={real.top_k}, {real.folds}-fold tuning={real.tune}")
        print(f"Logging: {self.logging.level} -> {self.logging.directory}")
        print("=" * 50)

# Global configuration instance
_config_manager = None

def get_config_manager(config_file: Optional[str] = None) -> ConfigManager:
    """Process-wide ConfigManager, created on first use."""
    global _config_manager
    if _config_manager is None:
        if config_file is None:
            # Try to find config file in common locations
            possible_paths = [
                "config/system_config.yaml",
                "../config/system_config.yaml",
                "system_config.yaml",
                str(Path(__file__).with_name("system_config.yaml"))
            ]

            for path in possible_paths:
                if Path(path).exists():
                    config_file = path
                    break

            if config_file is None:
                config_file = "config/system_config.yaml"  # Will use defaults

        _config_manager = ConfigManager(config_file)

    return _config_manager

def reset_config_manager():
    """Drop the global instance so the next access reloads from disk."""
    global _config_manager
    _config_manager = None
