"""Model-poisoning threat models for the federated round loop.

All three attacks share one parameter-norm convention: the crafted table is
rescaled so its squared norm matches the attacker's best proxy for the mean
non-adversarial squared norm (the parameter the server last sent back), and
the scaling factor lambda then multiplies that unit. lambda = n-1 is the
strongest setting for the information-cancelling attack.

- rand: fresh i.i.d. Gaussian logits each round; no environment knowledge.
- opposite: learns a return-minimizing policy in its own maze (sign-flipped
  REINFORCE) and shares it.
- adaming: reconstructs the other agents' aggregate from what it sent/received
  last round and shares its negation, cancelling the server's information gain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gridworld import DEFAULT_STEP_LIMIT, Maze
from .policy import AdamState, LearningConfig, PolicyTable, reinforce_update, run_episode

ATTACK_KINDS = ("rand", "opposite", "adaming")


@dataclass
class AttackState:
    """Adversary bookkeeping across rounds.

    prev_shared / prev_received start as zero tables (all agents initialize at
    zero). The information-cancelling attack needs both tables, hence twice the
    memory of the other two. local_policy exists only for the opposite-goal
    attack, which actually trains.
    """

    kind: str
    lam: float
    n: int = 0  # total agent count, for the mean-norm proxy
    sigma: float = 1.0
    prev_shared: np.ndarray | None = None
    prev_received: np.ndarray | None = None
    prev_weights: tuple[float, float] | None = None  # weights that produced prev_received
    local_policy: PolicyTable | None = None
    adam: AdamState | None = None
    rand_table: np.ndarray | None = None  # the maintained Gaussian draw (rand only)
    norm_anchor: float | None = None  # frozen magnitude calibration (rand/opposite)

    def __post_init__(self) -> None:
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")


def make_attack_state(
    kind: str, lam: float, shape: tuple[int, int], sigma: float = 1.0, n: int = 0
) -> AttackState:
    state = AttackState(kind, lam, n=n, sigma=sigma)
    state.prev_shared = np.zeros(shape)
    state.prev_received = np.zeros(shape)
    if kind == "opposite":
        state.local_policy = PolicyTable(np.zeros(shape))
    return state


def rescale_to_norm(table: np.ndarray, norm_sq_target: float) -> np.ndarray:
    """Rescale so ||table||^2 == norm_sq_target; zero input or target gives zeros."""
    norm_sq = float(np.sum(table * table))
    if norm_sq_target <= 0.0 or norm_sq == 0.0:
        return np.zeros_like(table)
    return table * math.sqrt(norm_sq_target / norm_sq)


def honest_sum_estimate(state: AttackState) -> np.ndarray:
    """Reconstruct sum_{j != l} theta_j from the last exchange.

    The received parameter satisfied received = alpha * shared + beta * sum,
    with (alpha, beta) the weights of that round, so the sum is exact. Before
    any exchange (or while beta was 0) there is nothing to reconstruct.
    """
    if state.prev_weights is None:
        return np.zeros_like(state.prev_received)
    alpha, beta = state.prev_weights
    if beta == 0.0:
        return np.zeros_like(state.prev_received)
    return (state.prev_received - alpha * state.prev_shared) / beta


def mean_norm_estimate(state: AttackState) -> float:
    """Norm of the reconstructed honest sum divided by n-1: the adversary's
    view of the typical non-adversarial parameter norm. The echo of its own
    share is removed first, otherwise the estimate would feed back into the
    next share's magnitude and diverge for lambda > 1."""
    if state.n < 2:
        return float(np.linalg.norm(state.prev_received))
    return float(np.linalg.norm(honest_sum_estimate(state))) / (state.n - 1)


def norm_target_for(state: AttackState) -> float:
    """Squared-norm target for the pre-lambda attack table.

    The cancelling attack tracks the live estimate (its table must match the
    honest aggregate it negates). The fixed-direction attacks calibrate once,
    at the first exchange where anything is observable, and keep that
    magnitude: re-calibrating every round against parameters that already
    contain the attack's own additive offset inflates without bound once
    lambda exceeds 1.
    """
    if state.kind == "adaming":
        m = mean_norm_estimate(state)
        return m * m
    if state.norm_anchor is None:
        m = mean_norm_estimate(state)
        if m > 0.0:
            state.norm_anchor = m
        return m * m
    return state.norm_anchor * state.norm_anchor


def gaussian_table(
    rng: np.random.Generator, sigma: float, shape: tuple[int, ...]
) -> np.ndarray:
    """Entry-wise i.i.d. N(0, sigma) draw; the raw material of the rand attack."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return rng.normal(0.0, sigma, size=shape)


def rand_share(
    state: AttackState, rng: np.random.Generator, norm_target: float
) -> np.ndarray:
    """The maintained Gaussian table, rescaled to the norm target, scaled by lambda.

    The random direction is drawn once and kept for the whole run (the attack
    is a fixed random policy, not fresh noise); only its magnitude follows the
    norm convention round by round.
    """
    if state.rand_table is None:
        state.rand_table = gaussian_table(rng, state.sigma, state.prev_received.shape)
    share = state.lam * rescale_to_norm(state.rand_table, norm_target)
    state.prev_shared = share.copy()
    return share


def opposite_goal_step(
    state: AttackState,
    maze: Maze,
    config: LearningConfig,
    rng: np.random.Generator,
    step_limit: int = DEFAULT_STEP_LIMIT,
) -> np.ndarray:
    """One return-minimizing local episode, then share the scaled anti-policy."""
    if state.local_policy is None:
        raise ValueError("opposite-goal attack needs a local policy")
    trace = run_episode(state.local_policy, maze, config, rng, step_limit=step_limit)
    if len(trace) > 0:
        if config.optimizer == "adam" and state.adam is None:
            state.adam = AdamState.for_config(config)
        state.local_policy = reinforce_update(
            state.local_policy, trace, config, sign=-1, adam=state.adam
        )
    share = state.lam * rescale_to_norm(state.local_policy.theta, norm_target_for(state))
    state.prev_shared = share.copy()
    return share


def adaming_share(state: AttackState, weights: tuple[float, float]) -> np.ndarray:
    """Share the scaled, negated estimate of the other agents' last aggregate.

    The parameter received last round satisfies
    received = alpha * shared + beta * sum_{j != l} theta_j, so the sum of the
    non-adversarial shares is recovered exactly as (received - alpha*shared)/beta.
    The share is lambda/(n-1) times its negation: the attack table is the
    (negated) mean honest parameter, which is what pins its norm to the mean
    honest norm, and lambda = n-1 reproduces the full sum so the server's next
    outputs collapse to zero.
    """
    alpha, beta = weights
    if beta == 0.0:
        raise ValueError("degenerate smoothing weights: beta is 0")
    if state.n < 3:
        raise ValueError("the cancelling attack requires n >= 3")
    raw = (alpha * state.prev_shared - state.prev_received) / beta
    share = state.lam * raw / (state.n - 1)
    state.prev_shared = share.copy()
    return share


def _exchange_weights(state: AttackState, weights: tuple[float, float]) -> tuple[float, float]:
    # reconstruct with the weights of the round prev_received was produced under
    return state.prev_weights if state.prev_weights is not None else weights


def produce_share(
    state: AttackState,
    weights: tuple[float, float],
    rng: np.random.Generator,
    maze: Maze,
    config: LearningConfig,
    step_limit: int = DEFAULT_STEP_LIMIT,
) -> np.ndarray:
    """Round dispatch for the adversary slot; updates prev_shared bookkeeping.

    While beta = 0 the adversary's table carries zero aggregation weight, so
    the information-cancelling attack contributes zeros instead of dividing
    by zero.
    """
    if state.kind == "rand":
        return rand_share(state, rng, norm_target_for(state))
    if state.kind == "opposite":
        return opposite_goal_step(state, maze, config, rng, step_limit=step_limit)
    ex = _exchange_weights(state, weights)
    if ex[1] == 0.0 or weights[1] == 0.0:
        share = np.zeros_like(state.prev_shared)
        state.prev_shared = share.copy()
        return share
    return adaming_share(state, ex)


def attack_eval_policy(
    state: AttackState,
    weights: tuple[float, float],
    rng: np.random.Generator,
) -> PolicyTable:
    """The table the adversary would submit right now, without committing
    round bookkeeping; used when the server cross-evaluates policies."""
    if state.kind == "rand":
        if state.rand_table is None:
            state.rand_table = gaussian_table(rng, state.sigma, state.prev_received.shape)
        return PolicyTable(state.lam * rescale_to_norm(state.rand_table, norm_target_for(state)))
    if state.kind == "opposite":
        return PolicyTable(
            state.lam * rescale_to_norm(state.local_policy.theta, norm_target_for(state))
        )
    alpha, beta = _exchange_weights(state, weights)
    if beta == 0.0:
        return PolicyTable(np.zeros_like(state.prev_received))
    raw = (alpha * state.prev_shared - state.prev_received) / beta
    return PolicyTable(state.lam * raw / (state.n - 1))


def eval_g(lam: float, n: int, alpha: float, beta: float) -> float:
    """Residual-information measure of the cancelling attack for given weights.

    0 means the server's outputs retain nothing of the non-adversarial shares
    (perfect attack); 1 means the attack removed nothing.
    """
    if n < 3:
        raise ValueError(f"need n >= 3, got {n}")
    return abs(alpha - beta * lam / (n - 1)) + abs(beta * (1.0 - lam / (n - 1)) * (n - 2))


def g_steady_state(lam: float, n: int) -> float:
    """Closed form of eval_g once the smoothing weights settle at 1/n."""
    if n < 3:
        raise ValueError(f"need n >= 3, got {n}")
    return (n - 1 - lam) / n


def lambda_star(n: int) -> float:
    """Scaling factor minimizing eval_g: the number of non-adversarial agents."""
    if n < 3:
        raise ValueError(f"need n >= 3, got {n}")
    return float(n - 1)


def lambda_for_agents(lambda1: float, n1: int, n2: int) -> float:
    """Scaling factor giving the same attack strength after changing the agent
    count from n1 to n2."""
    if n1 < 3 or n2 < 3:
        raise ValueError(f"need n1, n2 >= 3, got {n1}, {n2}")
    return n2 * (1.0 + lambda1) / n1 - 1.0


def policy_similarity(
    a: PolicyTable, b: PolicyTable, opposite_goal: bool = False
) -> tuple[float, float]:
    """(mean per-state KL divergence, distance between L2-normalized tables).

    With opposite_goal=True the first argument's rows enter the KL as their
    complement (1 - pi), the diagnostic for whether an anti-policy combined
    with a normal policy washes out to uniform.
    """
    if a.theta.shape != b.theta.shape:
        raise ValueError(f"shape mismatch: {a.theta.shape} vs {b.theta.shape}")
    kl_sum = 0.0
    for s in range(a.n_states):
        p = _softmax(a.theta[s])
        q = _softmax(b.theta[s])
        if opposite_goal:
            p = 1.0 - p
        kl_sum += float(np.sum(p * np.log(p / q)))
    mean_kl = kl_sum / a.n_states
    norm_a = float(np.linalg.norm(a.theta))
    norm_b = float(np.linalg.norm(b.theta))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("normalized parameter distance undefined for zero-norm table")
    dist = float(np.linalg.norm(a.theta / norm_a - b.theta / norm_b))
    return mean_kl, dist


def _softmax(row: np.ndarray) -> np.ndarray:
    e = np.exp(row - row.max())
    return e / e.sum()
