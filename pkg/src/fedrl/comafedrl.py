"""Communication-adaptive defense for the federated round loop.

Agents first pre-train alone for `wait_comm` episodes while the server
periodically cross-evaluates everyone's current policy in randomly assigned
peer environments. After the pre-train phase each agent i syncs with the
server only on rounds divisible by its communication interval comm[i];
agents whose cross-evaluated policies score below the reward threshold get
their interval doubled, so a poisoning agent contributes less and less, while
an agent that recovers is reset to the short interval. An adversarial agent
also fakes every evaluation it hosts (always reporting -1), trying to frame
honest agents.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .attacks import AttackState, attack_eval_policy, make_attack_state, produce_share
from .federation import (
    RoundState,
    RunConfig,
    RunResult,
    SmoothingSchedule,
    agent_rng,
    aggregate,
    build_mazes,
    smoothing_weights,
    unified_policy,
)
from .gridworld import Maze, N_ACTIONS, N_SONAR_STATES
from .policy import AdamState, LearningConfig, PolicyTable, reinforce_update, run_episode


@dataclass
class CommTable:
    """Per-agent communication intervals plus the defense constants."""

    comm: list[int]
    base_comm: int = 8
    low_comm: int = 8
    high_comm: int = 32
    wait_comm: int = 600
    r_th: float = 0.0

    def __post_init__(self) -> None:
        if not self.low_comm <= self.base_comm <= self.high_comm:
            raise ValueError("need low_comm <= base_comm <= high_comm")

    @classmethod
    def for_run(cls, config: RunConfig) -> "CommTable":
        return cls(
            comm=[config.base_comm] * config.n,
            base_comm=config.base_comm,
            low_comm=config.low_comm,
            high_comm=config.high_comm,
            wait_comm=config.wait_comm,
            r_th=config.r_th,
        )


@dataclass
class CrossEvalMatrix:
    """Accumulated cross-evaluation rewards: one row per evaluation round,
    one column per evaluated policy, plus the environment assignment log."""

    rows: list[list[float]] = field(default_factory=list)
    assignments: list[list[int]] = field(default_factory=list)

    def append(self, row: list[float], assignment: list[int]) -> None:
        self.rows.append(row)
        self.assignments.append(assignment)

    def clear(self) -> None:
        self.rows.clear()
        self.assignments.clear()

    def column_means(self) -> list[float]:
        return [float(np.mean(col)) for col in zip(*self.rows)]


def cross_eval(
    policies: list[PolicyTable],
    mazes: list[Maze],
    adversary_set: frozenset[int],
    eval_episodes: int,
    rng: np.random.Generator,
    gamma: float = 0.95,
    step_limit: int = 100,
) -> tuple[list[float], list[int]]:
    """One evaluation round: a uniform random permutation assigns every policy
    to exactly one environment; environment i runs policy perm[i] and reports
    the mean cumulative reward into that policy's column. Environments owned
    by adversarial agents report -1 no matter what they evaluated."""
    n = len(policies)
    if n < 2:
        raise ValueError("cross evaluation needs at least 2 agents")
    perm = [int(x) for x in rng.permutation(n)]
    lc = LearningConfig(gamma=gamma, delta=0.0)
    row = [0.0] * n
    for i in range(n):
        j = perm[i]
        if i in adversary_set:
            row[j] = -1.0
            continue
        total = 0.0
        for _ in range(eval_episodes):
            trace = run_episode(policies[j], mazes[i], lc, rng, step_limit=step_limit)
            total += trace.total_reward
        row[j] = total / eval_episodes
    return row, perm


def update_comm_intervals(matrix: CrossEvalMatrix, table: CommTable) -> CommTable:
    """Reward-thresholded interval assignment with doubling.

    Per agent: passing the threshold resets to low_comm; failing doubles an
    already-long interval, or jumps from low_comm to high_comm. The consumed
    rows are cleared so the next decision reflects fresh behavior only.
    """
    if not matrix.rows:
        raise ValueError("cross-evaluation matrix has no rows")
    means = matrix.column_means()
    for i, r_avg in enumerate(means):
        if r_avg >= table.r_th:
            table.comm[i] = table.low_comm
        elif table.comm[i] != table.low_comm:
            table.comm[i] = 2 * table.comm[i]
        else:
            table.comm[i] = table.high_comm
    matrix.clear()
    return table


def run_comafedrl(config: RunConfig) -> RunResult:
    """Train with the communication-adaptive defense; same record/result shape
    as the plain federated loop plus per-round comm/active/cross-eval fields."""
    started = time.perf_counter()
    mazes = build_mazes(config)
    lc = config.learning_config()
    adv_set = config.adversary_set
    n = config.n

    policies = [PolicyTable(np.zeros((N_SONAR_STATES, N_ACTIONS))) for _ in range(n)]
    adams = [AdamState.for_config(lc) if lc.optimizer == "adam" else None for _ in range(n)]
    rngs = [agent_rng(config.seed, i) for i in range(n)]
    eval_rng = np.random.default_rng([config.seed, 3000])
    attack_states: dict[int, AttackState] = {
        l: make_attack_state(
            config.attack, config.lam, policies[l].theta.shape, sigma=config.sigma, n=n
        )
        for l in adv_set
    }

    comm = CommTable.for_run(config)
    matrix = CrossEvalMatrix()
    schedule = SmoothingSchedule(n=n, t=config.t)
    records: list[dict] = []
    rounds_since_eval = 0

    def eval_policy_set(weights: tuple[float, float]) -> list[PolicyTable]:
        return [
            attack_eval_policy(attack_states[i], weights, rngs[i])
            if i in adv_set
            else policies[i]
            for i in range(n)
        ]

    for k in range(1, config.rounds + 1):
        schedule.k = k
        alpha, beta = smoothing_weights(schedule)
        rewards: list[float | None] = [None] * n
        active: list[int] = []
        eval_row = None

        if k <= config.wait_comm:
            # pre-train: everyone learns on local data only
            for i in range(n):
                if i in adv_set:
                    if attack_states[i].kind == "opposite":
                        produce_share(
                            attack_states[i], (alpha, beta), rngs[i], mazes[i], lc,
                            step_limit=config.step_limit,
                        )
                    continue
                trace = run_episode(policies[i], mazes[i], lc, rngs[i], step_limit=config.step_limit)
                policies[i] = reinforce_update(policies[i], trace, lc, adam=adams[i])
                rewards[i] = trace.total_reward
            if k % config.base_comm == 0:
                row, perm = cross_eval(
                    eval_policy_set((alpha, beta)), mazes, adv_set,
                    config.eval_episodes, eval_rng,
                    gamma=config.gamma, step_limit=config.step_limit,
                )
                matrix.append(row, perm)
                eval_row = row
        else:
            if matrix.rows:
                comm = update_comm_intervals(matrix, comm)
            active = [i for i in range(n) if k % comm.comm[i] == 0]
            shares: dict[int, np.ndarray] = {}
            m = len(active)
            beta_subset = (1.0 - alpha) / (m - 1) if m >= 2 else 0.0
            for i in active:
                if i in adv_set:
                    shares[i] = produce_share(
                        attack_states[i], (alpha, beta_subset), rngs[i], mazes[i], lc,
                        step_limit=config.step_limit,
                    )
                else:
                    trace = run_episode(
                        policies[i], mazes[i], lc, rngs[i], step_limit=config.step_limit
                    )
                    policies[i] = reinforce_update(policies[i], trace, lc, adam=adams[i])
                    shares[i] = policies[i].theta
                    rewards[i] = trace.total_reward
            if m >= 2:
                outs = aggregate(
                    RoundState([shares[i] for i in active], adv_set), (alpha, beta_subset)
                )
                for idx, i in enumerate(active):
                    policies[i] = PolicyTable(outs[idx], version=k)
                    if i in adv_set:
                        attack_states[i].prev_received = outs[idx].copy()
                        attack_states[i].prev_weights = (alpha, beta_subset)
            rounds_since_eval += 1
            if m == n or rounds_since_eval >= max(comm.comm):
                row, perm = cross_eval(
                    eval_policy_set((alpha, beta_subset)), mazes, adv_set,
                    config.eval_episodes, eval_rng,
                    gamma=config.gamma, step_limit=config.step_limit,
                )
                matrix.append(row, perm)
                eval_row = row
                rounds_since_eval = 0

        honest_idx = [i for i in range(n) if i not in adv_set]
        mean_theta = np.mean([policies[i].theta for i in honest_idx], axis=0)
        honest_rewards = [rewards[i] for i in honest_idx if rewards[i] is not None]
        records.append(
            {
                "round": k,
                "phase": 1 if k <= config.wait_comm else 2,
                "alpha": alpha,
                "beta": beta,
                "active": active,
                "comm": list(comm.comm),
                "rewards": rewards,
                "mean_reward": float(np.mean(honest_rewards)) if honest_rewards else None,
                "consensus_std": float(np.std(mean_theta)),
                "cross_eval": eval_row,
            }
        )

    return RunResult(
        config=config,
        rounds=records,
        final_policies=policies,
        unified=unified_policy(policies, adv_set),
        mazes=mazes,
        wall_time=time.perf_counter() - started,
    )
