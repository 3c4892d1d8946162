"""Evaluation protocol: win ratio, attack-success probability, consensus stats."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridworld import DEFAULT_STEP_LIMIT, Maze
from .policy import LearningConfig, PolicyTable, run_episode

_EVAL_CONFIG = LearningConfig(gamma=0.95, delta=0.0)


@dataclass
class EvalReport:
    """Goal-reaching statistics of one policy across the non-adversarial mazes."""

    wins: list[int | None]  # per environment; None for adversarial slots
    attempts: int
    per_env_wr: list[float | None]
    wr: float  # mean of per-env win ratios over non-adversarial environments
    consensus_std: float  # population std of the evaluated parameter entries


@dataclass
class AttackScore:
    p_sa: float  # 1 - wr_adv / wr_no_adv (negative means the attack helped)
    wr_adv: float
    wr_no_adv: float

    @property
    def clamped(self) -> float:
        return min(1.0, max(0.0, self.p_sa))


def evaluate_policy(
    policy: PolicyTable,
    mazes: list[Maze],
    adversary_set: frozenset[int] = frozenset(),
    attempts: int = 100,
    rng: np.random.Generator | None = None,
    step_limit: int = DEFAULT_STEP_LIMIT,
    greedy: bool = False,
) -> EvalReport:
    """Run `attempts` sampled episodes per non-adversarial maze and count the
    ones that end on the goal. The policy is never mutated."""
    if attempts < 1:
        raise ValueError(f"attempts must be >= 1, got {attempts}")
    if rng is None:
        rng = np.random.default_rng(0)
    wins: list[int | None] = [None] * len(mazes)
    per_env: list[float | None] = [None] * len(mazes)
    ratios = []
    for i, maze in enumerate(mazes):
        if i in adversary_set:
            continue
        w = 0
        for _ in range(attempts):
            trace = run_episode(
                policy, maze, _EVAL_CONFIG, rng, step_limit=step_limit, greedy=greedy
            )
            if trace.rewards and trace.rewards[-1] == 1.0:
                w += 1
        wins[i] = w
        per_env[i] = w / attempts
        ratios.append(w / attempts)
    if not ratios:
        raise ValueError("no non-adversarial environments to evaluate")
    return EvalReport(
        wins=wins,
        attempts=attempts,
        per_env_wr=per_env,
        wr=float(np.mean(ratios)),
        consensus_std=float(np.std(policy.theta)),
    )


def attack_score(report_adv: EvalReport, report_baseline: EvalReport) -> AttackScore:
    """Probability of successful attack from an attacked/baseline report pair.

    The two reports must come from runs that differ only in the adversary
    configuration (same maze seeds); a zero-WR baseline never learned, so the
    ratio is undefined and the experiment invalid.
    """
    if report_baseline.wr <= 0.0:
        raise ValueError("baseline win ratio is 0; attack score undefined")
    p_sa = 1.0 - report_adv.wr / report_baseline.wr
    return AttackScore(p_sa=p_sa, wr_adv=report_adv.wr, wr_no_adv=report_baseline.wr)
