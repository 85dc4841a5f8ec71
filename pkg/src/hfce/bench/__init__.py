"""Monte-Carlo benchmark harness."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .results import emit_results, read_results
from .runner import ResultRow, SweepPoint, nmse, run_sweep, run_trial
