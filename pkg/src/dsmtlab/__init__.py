"""Desk-scale laboratory for decentralized stochastic gradient methods.

Core pieces: graph and mixing-matrix construction with accelerated-consensus
parameters (:mod:`dsmtlab.topology`), per-agent objectives and stochastic
gradient oracles (:mod:`dsmtlab.oracles`), the momentum-tracking optimizer
family and its baselines (:mod:`dsmtlab.optimizers`), runtime invariant
probes (:mod:`dsmtlab.diagnostics`), and a config-driven experiment harness
with a CLI (:mod:`dsmtlab.harness`, ``dsmtlab`` entry point).
"""

from .backend import HAVE_EXT, active_backend, run_window
from .diagnostics import (MetricsRecorder, MetricsRow, TransientEstimate,
                          consensus_projector, estimate_transient,
                          lyapunov_probe, running_min)
from .harness import (AlgorithmCurves, AlgorithmSpec, ConfigError,
                      ExperimentConfig, ExperimentResult, HarnessError,
                      build_problem, parse_config, parse_config_file,
                      resolve_algorithms, run_experiment, run_sweep,
                      run_trial, serialize_config, transient_curve,
                      write_csv, write_experiment)
from .oracles import (Dataset, ObjectiveSuite, Partition, generate_synthetic,
                      make_quadratic_suite, partition_heterogeneous,
                      partition_shuffled)
from .optimizers import (VARIANTS, AlgorithmState, DivergenceError,
                         HyperParams, StepContext, init_state,
                         select_params_ncvx, select_params_pl, step)
from .topology import (GraphSpec, LcaOperator, MixingMatrix, build_graph,
                       lca_apply, lca_params, mixing_from_graph, spectral_gap)

__version__ = "0.1.0"

__all__ = [
    "HAVE_EXT", "active_backend", "run_window",
    "MetricsRecorder", "MetricsRow", "TransientEstimate",
    "consensus_projector", "estimate_transient", "lyapunov_probe",
    "running_min",
    "AlgorithmCurves", "AlgorithmSpec", "ConfigError", "ExperimentConfig",
    "ExperimentResult", "HarnessError", "build_problem", "parse_config",
    "parse_config_file", "resolve_algorithms", "run_experiment", "run_sweep",
    "run_trial", "serialize_config", "transient_curve", "write_csv",
    "write_experiment",
    "Dataset", "ObjectiveSuite", "Partition", "generate_synthetic",
    "make_quadratic_suite", "partition_heterogeneous", "partition_shuffled",
    "VARIANTS", "AlgorithmState", "DivergenceError", "HyperParams",
    "StepContext", "init_state", "select_params_ncvx", "select_params_pl",
    "step",
    "GraphSpec", "LcaOperator", "MixingMatrix", "build_graph", "lca_apply",
    "lca_params", "mixing_from_graph", "spectral_gap",
    "__version__",
]
