"""Tabular softmax policies and per-episode policy-gradient updates.

The policy is a dense |S| x |A| table of logits; action probabilities are the
row-wise softmax. Learning accumulates the gradient of
sum_t G_t * log pi(a_t | s_t) over one full episode and applies it once,
scaled by the learning rate (optionally through Adam).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gridworld import (
    DEFAULT_STEP_LIMIT,
    N_ACTIONS,
    N_SONAR_STATES,
    Maze,
    SonarState,
    step,
)

SNAPSHOT_MAGIC = b"FPT1"


@dataclass
class LearningConfig:
    """Local-update hyperparameters shared by all agents in a run.

    gamma/delta of 0 are permitted: they are the degenerate cases used to
    isolate other mechanisms (no discounting memory, frozen learners).
    """

    gamma: float = 0.95
    delta: float = 0.2
    optimizer: str = "plain"  # "plain" | "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.delta < 0.0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if self.optimizer not in ("plain", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class PolicyTable:
    theta: np.ndarray  # (n_states, n_actions) float64 logits
    version: int = 0

    def __post_init__(self) -> None:
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.ndim != 2:
            raise ValueError("theta must be a 2-D table")

    @property
    def n_states(self) -> int:
        return self.theta.shape[0]

    @property
    def n_actions(self) -> int:
        return self.theta.shape[1]

    def copy(self) -> "PolicyTable":
        return PolicyTable(self.theta.copy(), self.version)


def zeros_policy(n_states: int = N_SONAR_STATES, n_actions: int = N_ACTIONS) -> PolicyTable:
    return PolicyTable(np.zeros((n_states, n_actions)))


@dataclass
class AdamState:
    """Per-agent Adam accumulator; `step` returns the update direction."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None

    @classmethod
    def for_config(cls, config: LearningConfig) -> "AdamState":
        return cls(config.adam_beta1, config.adam_beta2, config.adam_eps)

    def step(self, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return m_hat / (np.sqrt(v_hat) + self.eps)


def _row_probabilities(theta: np.ndarray, state_index: int) -> np.ndarray:
    row = theta[state_index]
    if not np.isfinite(row).all():
        raise ValueError(f"non-finite policy parameters at state {state_index}")
    shifted = row - row.max()
    e = np.exp(shifted)
    return e / e.sum()


def action_probabilities(policy: PolicyTable, state: SonarState | int) -> np.ndarray:
    """Softmax action distribution at one state, computed with max-subtraction."""
    idx = state.index if isinstance(state, SonarState) else int(state)
    if not 0 <= idx < policy.n_states:
        raise ValueError(f"state index out of range: {idx}")
    return _row_probabilities(policy.theta, idx)


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    x = rng.random()
    acc = 0.0
    for a in range(len(probs) - 1):
        acc += probs[a]
        if x < acc:
            return a
    return len(probs) - 1


def discounted_returns(rewards: list[float], gamma: float) -> list[float]:
    """G_t = r_t + gamma * G_{t+1}, computed backward from the episode tail."""
    returns = [0.0] * len(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        returns[t] = acc
    return returns


@dataclass
class EpisodeTrace:
    states: list[int]
    actions: list[int]
    rewards: list[float]
    returns: list[float]
    total_reward: float

    @classmethod
    def from_steps(
        cls, states: list[int], actions: list[int], rewards: list[float], gamma: float
    ) -> "EpisodeTrace":
        return cls(states, actions, rewards, discounted_returns(rewards, gamma), sum(rewards))

    def __len__(self) -> int:
        return len(self.states)


def run_episode(
    policy: PolicyTable,
    maze: Maze,
    config: LearningConfig,
    rng: np.random.Generator,
    step_limit: int = DEFAULT_STEP_LIMIT,
    greedy: bool = False,
) -> EpisodeTrace:
    """One episode from the maze source, sampling actions from the policy.

    The episode ends on goal/hell or after `step_limit` moves (the step-limit
    truncation keeps the last movement reward).
    """
    theta = policy.theta
    sonar = maze.sonar_index
    pos = maze.source
    states: list[int] = []
    actions: list[int] = []
    rewards: list[float] = []
    for _ in range(step_limit):
        s = int(sonar[pos])
        probs = _row_probabilities(theta, s)
        a = int(np.argmax(probs)) if greedy else sample_action(probs, rng)
        outcome, pos = step(maze, pos, a)
        states.append(s)
        actions.append(a)
        rewards.append(outcome.reward)
        if outcome.terminal:
            break
    return EpisodeTrace.from_steps(states, actions, rewards, config.gamma)


def episode_objective(theta: np.ndarray, trace: EpisodeTrace) -> float:
    """sum_t G_t * log pi_theta(a_t | s_t); the scalar the update ascends."""
    total = 0.0
    for s, a, g in zip(trace.states, trace.actions, trace.returns):
        total += g * float(np.log(_row_probabilities(theta, s)[a]))
    return total


def episode_gradient(theta: np.ndarray, trace: EpisodeTrace) -> np.ndarray:
    """Analytic gradient of `episode_objective` at theta.

    The softmax log-gradient at (s, a) adds G_t * (1 - pi(a|s)) to the taken
    entry and -G_t * pi(a'|s) to the other entries of row s. All steps are
    evaluated at the same theta because the update is applied once per episode.
    """
    grad = np.zeros_like(theta)
    row_cache: dict[int, np.ndarray] = {}
    for s, a, g in zip(trace.states, trace.actions, trace.returns):
        probs = row_cache.get(s)
        if probs is None:
            probs = _row_probabilities(theta, s)
            row_cache[s] = probs
        grad[s] -= g * probs
        grad[s, a] += g
    return grad


def reinforce_update(
    policy: PolicyTable,
    trace: EpisodeTrace,
    config: LearningConfig,
    sign: int = 1,
    adam: AdamState | None = None,
) -> PolicyTable:
    """Apply one accumulated episode gradient; sign -1 descends instead."""
    if len(trace) == 0:
        raise ValueError("cannot update from an empty trace")
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    grad = sign * episode_gradient(policy.theta, trace)
    if config.optimizer == "adam":
        if adam is None:
            raise ValueError("adam optimizer requires an AdamState")
        update = adam.step(grad)
    else:
        update = grad
    return PolicyTable(policy.theta + config.delta * update, policy.version + 1)


def save_policy(policy: PolicyTable, path: str | Path) -> None:
    """Snapshot format: magic, version, shape header, then row-major float64."""
    header = struct.pack(
        "<4sIII", SNAPSHOT_MAGIC, policy.version, policy.n_states, policy.n_actions
    )
    data = np.ascontiguousarray(policy.theta, dtype="<f8").tobytes()
    Path(path).write_bytes(header + data)


def load_policy(path: str | Path) -> PolicyTable:
    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:4] != SNAPSHOT_MAGIC:
        raise ValueError(f"not a policy snapshot: {path}")
    _, version, n_states, n_actions = struct.unpack("<4sIII", blob[:16])
    expected = 16 + 8 * n_states * n_actions
    if len(blob) != expected:
        raise ValueError(f"truncated policy snapshot: {len(blob)} bytes, expected {expected}")
    theta = np.frombuffer(blob[16:], dtype="<f8").reshape(n_states, n_actions).copy()
    return PolicyTable(theta, version)
