"""Exact mixing-time quantities and bottleneck-sequence bounds for finite
lazy Markov chains."""
from .bottleneck import (
    BottleneckSequence,
    fr_profile_bound,
    greedy_sequence,
    max_score,
    sequence_score,
    tree_lower_bound,
    verify_sequence,
)
from .chain import (
    BudgetExceededError,
    ChainError,
    ChainSpec,
    DisconnectedChainError,
    NumericalError,
    build_chain,
    flow,
    from_matrix,
    measure,
    phi,
    validate_chain,
)
from .families import ExampleSpec, generate
from .game import (
    CrawlerGreedy,
    DasherHull,
    DasherRI,
    GameParams,
    is_beta_adjustment,
    play_game,
    validate_move,
)
from .metrics import exit_frequencies, hitting_times, mixing_time, stop_time
from .rough_isometry import (
    build_at_sets,
    correspondence_stretch,
    kac_check,
    ri_tree_lower_bound,
    robustness_compare,
)
from .scaling import fit_exponent, run_scaling

__all__ = [
    "BottleneckSequence", "BudgetExceededError", "ChainError", "ChainSpec", "CrawlerGreedy",
    "DasherHull", "DasherRI", "DisconnectedChainError", "ExampleSpec", "GameParams",
    "NumericalError", "build_at_sets", "build_chain", "correspondence_stretch", "exit_frequencies",
    "fit_exponent", "flow", "fr_profile_bound", "from_matrix", "generate", "greedy_sequence",
    "hitting_times", "is_beta_adjustment", "kac_check", "max_score", "measure", "mixing_time",
    "phi", "play_game", "ri_tree_lower_bound", "robustness_compare", "run_scaling",
    "sequence_score", "stop_time", "tree_lower_bound", "validate_chain", "validate_move",
    "verify_sequence",
]
__version__ = "0.1.0"
