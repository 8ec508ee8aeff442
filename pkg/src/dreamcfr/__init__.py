"""Regret minimization for two-player zero-sum imperfect-information games.

Monte Carlo counterfactual regret minimization with learned history-value
baselines for variance reduction, deep advantage networks in place of
regret tables, and policy averaging over an archive of past networks.
Includes exact tabular solvers and evaluation tools for the bundled
poker variants (Kuhn, Leduc, and flop hold'em).
"""

from .buffers import (
    CircularBuffer,
    LINEAR,
    ModelArchive,
    ReservoirBuffer,
    UNIFORM,
    archive_sample,
    archive_weights,
    load_archive,
)
from .config import ExperimentConfig, build_config, load_config, parse_config, render_config
from .errors import (
    ConfigError,
    FeasibilityError,
    GameError,
    IllegalActionError,
    InvalidStateError,
    SamplingError,
    TrainingDivergedError,
    WrongNodeError,
)
from .evaluation import (
    TabularPolicy,
    UniformPolicy,
    best_response,
    exploitability,
    expected_values,
    head_to_head,
    variance_probe,
)
from .games import Action, FixedCardsGame, Game, GameState, InfostateKey, make_game
from .harness import RunManifest, run_ablation, run_seeds, run_train
from .nets import MLPParams, forward, load_net, mlp_init, save_net, train
from .sampling import es_traverse, os_traverse
from .tabular import RegretTable, average_policy, build_tree, cfr_iteration, run_cfr
from .trainer import (
    DreamTrainer,
    TrainerConfig,
    archive_average_profile,
    average_policy_at,
    load_checkpoint,
    save_checkpoint,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "CircularBuffer",
    "ConfigError",
    "DreamTrainer",
    "ExperimentConfig",
    "FeasibilityError",
    "FixedCardsGame",
    "Game",
    "GameError",
    "GameState",
    "IllegalActionError",
    "InfostateKey",
    "InvalidStateError",
    "LINEAR",
    "MLPParams",
    "ModelArchive",
    "RegretTable",
    "ReservoirBuffer",
    "RunManifest",
    "SamplingError",
    "TabularPolicy",
    "TrainerConfig",
    "TrainingDivergedError",
    "UNIFORM",
    "UniformPolicy",
    "WrongNodeError",
    "archive_average_profile",
    "archive_sample",
    "archive_weights",
    "average_policy",
    "average_policy_at",
    "best_response",
    "build_config",
    "build_tree",
    "cfr_iteration",
    "es_traverse",
    "exploitability",
    "expected_values",
    "forward",
    "head_to_head",
    "load_archive",
    "load_checkpoint",
    "load_config",
    "load_net",
    "make_game",
    "mlp_init",
    "os_traverse",
    "parse_config",
    "render_config",
    "run_ablation",
    "run_cfr",
    "run_seeds",
    "run_train",
    "save_checkpoint",
    "save_net",
    "train",
    "variance_probe",
    "__version__",
]
