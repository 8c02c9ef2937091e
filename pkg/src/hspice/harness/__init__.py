"""Experiment harness: stream generation, replay, QoR and configuration."""
from .config import ConfigError, CostModel, ExperimentConfig
from .experiment import Workload, run_experiment, sweep
from .generator import GenerationError, Plant, StreamProfile, generate_stream, write_generated
from .qor import QoRReport, compute_qor
from .replay import ReplayOverflow, ReplayResult, calibrate_virtual, oracle_run, replay_virtual

__all__ = ["ConfigError", "CostModel", "ExperimentConfig", "GenerationError", "Plant", "QoRReport",
           "ReplayOverflow", "ReplayResult", "StreamProfile", "Workload", "calibrate_virtual",
           "compute_qor", "generate_stream", "oracle_run", "replay_virtual", "run_experiment", "sweep",
           "write_generated"]
