"""Federated round loop: smoothing-average aggregation and parameter exchange.

Every round, each honest agent runs one episode in its own maze, updates its
table locally, and sends it in. The server combines the tables with smoothing
weights (alpha for the agent's own share, beta for every other share,
alpha + (n-1) beta = 1) and sends each agent a personalized combination.
Early rounds weight the agent's own parameter heavily; from the threshold
iteration t onward alpha = beta = 1/n and all agents receive the common mean.
Adversarial slots contribute whatever their attack produces.
"""
from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import attacks
from .attacks import AttackState, make_attack_state, produce_share
from .gridworld import Maze, N_ACTIONS, N_SONAR_STATES, generate_maze, load_maze_file
from .policy import AdamState, LearningConfig, PolicyTable, reinforce_update, run_episode

ATTACK_CHOICES = ("none", "rand", "opposite", "adaming")
DEFENSE_CHOICES = ("fedrl", "comafedrl")


@dataclass
class SmoothingSchedule:
    """Iteration-indexed smoothing weights for n agents with threshold t."""

    n: int
    t: int
    k: int = 1


def smoothing_weights(schedule: SmoothingSchedule) -> tuple[float, float]:
    """(alpha, beta) at round k: alpha = min(1, max(1, t/k)/n), beta = (1-alpha)/(n-1).

    alpha decays from 1 (agents isolated) to 1/n at k = t and stays there, so
    the weights always sum to alpha + (n-1) beta = 1.
    """
    if schedule.n < 2:
        raise ValueError(f"need at least 2 agents, got {schedule.n}")
    if schedule.t < 1 or schedule.k < 1:
        raise ValueError(f"t and k must be >= 1, got t={schedule.t}, k={schedule.k}")
    alpha = min(1.0, max(1.0, schedule.t / schedule.k) / schedule.n)
    beta = (1.0 - alpha) / (schedule.n - 1)
    return alpha, beta


@dataclass
class RoundState:
    """One round's incoming tables (index = agent id) and the adversary set."""

    shared_in: list[np.ndarray]
    adversary_set: frozenset[int] = frozenset()
    shared_out: list[np.ndarray] | None = None


def aggregate(round_state: RoundState, weights: tuple[float, float]) -> list[np.ndarray]:
    """Per-agent smoothing average: out_i = alpha * theta_i + beta * sum_{j != i} theta_j.

    The sums run in agent-index order so results do not depend on any worker
    scheduling. Adversarial shares enter the sum like any other.
    """
    alpha, beta = weights
    tables = round_state.shared_in
    if len(tables) < 2:
        raise ValueError("aggregation needs at least 2 tables")
    shape = tables[0].shape
    for j, tab in enumerate(tables):
        if tab.shape != shape:
            raise ValueError(f"table {j} has shape {tab.shape}, expected {shape}")
    outs = []
    for i in range(len(tables)):
        acc = np.zeros(shape)
        for j in range(len(tables)):
            if j != i:
                acc += tables[j]
        outs.append(alpha * tables[i] + beta * acc)
    round_state.shared_out = outs
    return outs


@dataclass
class RunConfig:
    """Flat configuration for one training run (JSON-serializable)."""

    n: int = 12
    rounds: int = 1000  # episodes per agent (one federation round per episode)
    t: int = 600  # smoothing threshold iteration
    delta: float = 0.2
    gamma: float = 0.95
    seed: int = 0
    attack: str = "none"
    lam: float = 1.0
    sigma: float = 1.0
    adversaries: tuple[int, ...] = (0,)
    defense: str = "fedrl"
    # comafedrl knobs
    base_comm: int = 8
    low_comm: int = 8
    high_comm: int = 32
    wait_comm: int = 600
    r_th: float = 0.0
    eval_episodes: int = 5
    # environment
    maze_seed_base: int | None = None
    maze_files: tuple[str, ...] = ()
    maze_width: int = 10
    maze_height: int = 10
    hell_density: float = 0.12
    step_limit: int = 100
    # policy / evaluation
    optimizer: str = "plain"
    attempts: int = 100

    def __post_init__(self) -> None:
        self.adversaries = tuple(self.adversaries)
        self.maze_files = tuple(self.maze_files)
        self.validate()

    def validate(self) -> None:
        if self.n < 2:
            raise ValueError(f"need at least 2 agents, got {self.n}")
        if self.attack not in ATTACK_CHOICES:
            raise ValueError(f"unknown attack {self.attack!r}")
        if self.defense not in DEFENSE_CHOICES:
            raise ValueError(f"unknown defense {self.defense!r}")
        if self.attack == "adaming" and self.n < 3:
            raise ValueError("the information-cancelling attack requires n >= 3")
        if self.rounds < 1 or self.t < 1:
            raise ValueError("rounds and t must be >= 1")
        if self.attack != "none":
            if not self.adversaries:
                raise ValueError("attack configured but adversary set is empty")
            if len(set(self.adversaries)) != len(self.adversaries):
                raise ValueError("duplicate adversary indices")
            if any(not 0 <= a < self.n for a in self.adversaries):
                raise ValueError("adversary index out of range")
            if len(self.adversaries) >= self.n:
                raise ValueError("adversary set must leave at least one honest agent")
        if self.maze_files and len(self.maze_files) != self.n:
            raise ValueError(
                f"got {len(self.maze_files)} maze files for {self.n} agents"
            )
        if not 0 <= self.hell_density <= 0.4:
            raise ValueError(f"hell_density must be in [0, 0.4], got {self.hell_density}")
        if self.step_limit < 1 or self.attempts < 1 or self.eval_episodes < 1:
            raise ValueError("step_limit, attempts and eval_episodes must be >= 1")
        if not self.low_comm <= self.base_comm <= self.high_comm:
            raise ValueError("need low_comm <= base_comm <= high_comm")

    @property
    def adversary_set(self) -> frozenset[int]:
        return frozenset(self.adversaries) if self.attack != "none" else frozenset()

    def learning_config(self) -> LearningConfig:
        return LearningConfig(gamma=self.gamma, delta=self.delta, optimizer=self.optimizer)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["adversaries"] = list(self.adversaries)
        d["maze_files"] = list(self.maze_files)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def build_mazes(config: RunConfig) -> list[Maze]:
    if config.maze_files:
        return [load_maze_file(p, env_id=i) for i, p in enumerate(config.maze_files)]
    base = config.maze_seed_base if config.maze_seed_base is not None else config.seed * 1000
    return [
        generate_maze(
            base + i,
            width=config.maze_width,
            height=config.maze_height,
            hell_density=config.hell_density,
            env_id=i,
        )
        for i in range(config.n)
    ]


@dataclass
class RunResult:
    config: RunConfig
    rounds: list[dict]
    final_policies: list[PolicyTable]  # per-agent parameter after the last round
    unified: PolicyTable  # mean of the non-adversarial final parameters
    mazes: list[Maze]
    wall_time: float

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for rec in self.rounds:
                fh.write(json.dumps(rec) + "\n")


def agent_rng(seed: int, agent: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1000 + agent])


def unified_policy(policies: list[PolicyTable], adversary_set: frozenset[int]) -> PolicyTable:
    honest = [p.theta for i, p in enumerate(policies) if i not in adversary_set]
    return PolicyTable(np.mean(honest, axis=0), version=max(p.version for p in policies))


def _round_record(
    k: int,
    alpha: float,
    beta: float,
    rewards: list[float | None],
    outs: list[np.ndarray],
    adversary_set: frozenset[int],
    adv_share_norm: float | None,
) -> dict:
    honest_idx = [i for i in range(len(outs)) if i not in adversary_set]
    honest_rewards = [rewards[i] for i in honest_idx if rewards[i] is not None]
    mean_theta = np.mean([outs[i] for i in honest_idx], axis=0)
    spread = max(float(np.linalg.norm(outs[i] - mean_theta)) for i in honest_idx)
    return {
        "round": k,
        "alpha": alpha,
        "beta": beta,
        "rewards": rewards,
        "mean_reward": float(np.mean(honest_rewards)) if honest_rewards else None,
        "param_norm_mean": float(
            np.mean([np.linalg.norm(outs[i]) for i in honest_idx])
        ),
        "consensus_std": float(np.std(mean_theta)),
        "consensus_spread": spread,
        "adv_share_norm": adv_share_norm,
    }


def run_mtfedrl(config: RunConfig) -> RunResult:
    """Train n agents for `rounds` federation rounds (one episode each per round)."""
    started = time.perf_counter()
    mazes = build_mazes(config)
    lc = config.learning_config()
    adv_set = config.adversary_set
    n = config.n

    policies = [PolicyTable(np.zeros((N_SONAR_STATES, N_ACTIONS))) for _ in range(n)]
    adams = [
        AdamState.for_config(lc) if lc.optimizer == "adam" else None for _ in range(n)
    ]
    rngs = [agent_rng(config.seed, i) for i in range(n)]
    attack_states: dict[int, AttackState] = {
        l: make_attack_state(
            config.attack, config.lam, policies[l].theta.shape, sigma=config.sigma, n=n
        )
        for l in adv_set
    }

    schedule = SmoothingSchedule(n=n, t=config.t)
    records: list[dict] = []
    for k in range(1, config.rounds + 1):
        schedule.k = k
        alpha, beta = smoothing_weights(schedule)
        shares: list[np.ndarray] = [None] * n  # type: ignore[list-item]
        rewards: list[float | None] = [None] * n
        adv_share_norm = None
        for i in range(n):
            if i in adv_set:
                share = produce_share(
                    attack_states[i], (alpha, beta), rngs[i], mazes[i], lc,
                    step_limit=config.step_limit,
                )
                shares[i] = share
                adv_share_norm = float(np.linalg.norm(share))
            else:
                trace = run_episode(
                    policies[i], mazes[i], lc, rngs[i], step_limit=config.step_limit
                )
                policies[i] = reinforce_update(policies[i], trace, lc, adam=adams[i])
                shares[i] = policies[i].theta
                rewards[i] = trace.total_reward
        outs = aggregate(RoundState(shares, adv_set), (alpha, beta))
        for i in range(n):
            policies[i] = PolicyTable(outs[i], version=k)
        for l in adv_set:
            attack_states[l].prev_received = outs[l].copy()
            attack_states[l].prev_weights = (alpha, beta)
        records.append(_round_record(k, alpha, beta, rewards, outs, adv_set, adv_share_norm))

    return RunResult(
        config=config,
        rounds=records,
        final_policies=policies,
        unified=unified_policy(policies, adv_set),
        mazes=mazes,
        wall_time=time.perf_counter() - started,
    )
