"""Deterministic simulator for multi-task federated RL under model-poisoning
adversaries: gridworld agents, smoothing-average federation, three attack
models, and the communication-adaptive defense."""

from .attacks import (
    AttackState,
    adaming_share,
    eval_g,
    g_steady_state,
    lambda_for_agents,
    lambda_star,
    opposite_goal_step,
    policy_similarity,
    rand_share,
)
from .comafedrl import CommTable, CrossEvalMatrix, cross_eval, run_comafedrl, update_comm_intervals
from .federation import (
    RoundState,
    RunConfig,
    RunResult,
    SmoothingSchedule,
    aggregate,
    run_mtfedrl,
    smoothing_weights,
)
from .gridworld import (
    CellKind,
    Maze,
    SonarState,
    StepOutcome,
    TerminalKind,
    encode_state,
    generate_maze,
    load_maze_file,
    save_maze_file,
    step,
)
from .metrics import AttackScore, EvalReport, attack_score, evaluate_policy
from .policy import (
    EpisodeTrace,
    LearningConfig,
    PolicyTable,
    action_probabilities,
    load_policy,
    reinforce_update,
    run_episode,
    save_policy,
)

__version__ = "0.1.0"
