"""Experiment campaign runner: sweeps, baseline pairing, CSV/JSONL persistence.

A campaign is a cartesian sweep over attack/defense/lambda/delta/n/seed. Every
attacked run is paired with the baseline run that differs only in the attack
fields, which supplies the denominator of the attack-success probability. Runs
are content-addressed by their configuration, so finished runs are never
recomputed and re-running a campaign is idempotent.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .attacks import eval_g
from .comafedrl import run_comafedrl
from .federation import RunConfig, RunResult, run_mtfedrl
from .metrics import attack_score, evaluate_policy

SUMMARY_COLUMNS = [
    "run_id",
    "seed",
    "n",
    "lam",
    "delta",
    "attack",
    "defense",
    "wr_no_adv",
    "wr_adv",
    "p_sa",
    "consensus_std",
    "wall_time",
]

SWEEP_KEYS = ("attack", "defense", "lam", "delta", "n", "seed")


def run_id(config: RunConfig) -> str:
    payload = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha1(payload).hexdigest()[:12]


def pair_key(config: RunConfig) -> tuple:
    """Key identifying the baseline a run is scored against: everything except
    the attack fields."""
    d = config.to_dict()
    for k in ("attack", "lam", "sigma", "adversaries"):
        d.pop(k)
    return tuple(sorted(d.items(), key=lambda kv: kv[0]))


@dataclasses.dataclass
class Campaign:
    runs: list[RunConfig]
    outdir: Path

    @classmethod
    def from_sweep(cls, sweep: dict, outdir: str | Path) -> "Campaign":
        """Expand a sweep mapping into run configs.

        Sweep values for attack/defense/lam/delta/n/seed may be lists; all other
        keys are fixed scalars passed straight into every config. Baselines
        (attack = none) are added automatically for every swept combination, and
        duplicate configurations collapse.
        """
        sweep = dict(sweep)
        lists = {k: _as_list(sweep.pop(k, [_SWEEP_DEFAULTS[k]])) for k in SWEEP_KEYS}
        if "none" not in lists["attack"]:
            lists["attack"] = ["none"] + list(lists["attack"])
        base = sweep  # remaining fixed keys
        configs: dict[str, RunConfig] = {}
        for attack, defense, lam, delta, n, seed in itertools.product(
            *(lists[k] for k in SWEEP_KEYS)
        ):
            d = dict(base)
            d.update(
                attack=attack, defense=defense, lam=lam, delta=delta, n=n, seed=seed
            )
            if attack == "none":
                d["lam"] = 0.0  # collapse baseline duplicates across lambda values
            cfg = RunConfig.from_dict(d)
            configs[run_id(cfg)] = cfg
        runs = sorted(configs.values(), key=_run_order)
        return cls(runs=runs, outdir=Path(outdir))


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


_SWEEP_DEFAULTS = {
    "attack": "none",
    "defense": "fedrl",
    "lam": 1.0,
    "delta": 0.2,
    "n": 12,
    "seed": 0,
}


def _run_order(cfg: RunConfig) -> tuple:
    # baselines first so scoring can stream
    return (cfg.attack != "none", cfg.defense, cfg.attack, cfg.n, cfg.lam, cfg.delta, cfg.seed)


def execute_run(config: RunConfig, outdir: str | Path) -> dict:
    """Run one configuration (or load its stored summary) and persist records."""
    outdir = Path(outdir)
    runs_dir = outdir / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    rid = run_id(config)
    summary_path = runs_dir / f"{rid}.summary.json"
    if summary_path.exists():
        return json.loads(summary_path.read_text())
    runner = run_comafedrl if config.defense == "comafedrl" else run_mtfedrl
    result = runner(config)
    report = evaluate_policy(
        result.unified,
        result.mazes,
        adversary_set=config.adversary_set,
        attempts=config.attempts,
        rng=np.random.default_rng([config.seed, 4000]),
        step_limit=config.step_limit,
    )
    result.write_jsonl(runs_dir / f"{rid}.jsonl")
    summary = {
        "run_id": rid,
        "config": config.to_dict(),
        "wr": report.wr,
        "per_env_wr": report.per_env_wr,
        "consensus_std": report.consensus_std,
        "wall_time": result.wall_time,
    }
    summary_path.write_text(json.dumps(summary, indent=2))
    return summary


def run_campaign(campaign: Campaign, workers: int = 1) -> Path:
    """Execute all runs (skipping finished ones), score attacked runs against
    their seed-matched baselines, and write the summary CSV."""
    campaign.outdir.mkdir(parents=True, exist_ok=True)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(
                pool.map(execute_run, campaign.runs, itertools.repeat(campaign.outdir))
            )
    else:
        summaries = [execute_run(cfg, campaign.outdir) for cfg in campaign.runs]

    by_id = {s["run_id"]: s for s in summaries}
    baselines: dict[tuple, dict] = {}
    for cfg in campaign.runs:
        if cfg.attack == "none":
            baselines[pair_key(cfg)] = by_id[run_id(cfg)]

    rows = []
    for cfg in campaign.runs:
        s = by_id[run_id(cfg)]
        row = {
            "run_id": s["run_id"],
            "seed": cfg.seed,
            "n": cfg.n,
            "lam": cfg.lam,
            "delta": cfg.delta,
            "attack": cfg.attack,
            "defense": cfg.defense,
            "consensus_std": f"{s['consensus_std']:.6f}",
            "wall_time": f"{s['wall_time']:.2f}",
        }
        if cfg.attack == "none":
            row.update(wr_no_adv=f"{s['wr']:.4f}", wr_adv="", p_sa="")
        else:
            baseline = baselines.get(pair_key(cfg))
            if baseline is None:
                raise ValueError(f"no baseline run for attacked config {s['run_id']}")
            p_sa = 1.0 - s["wr"] / baseline["wr"] if baseline["wr"] > 0 else float("nan")
            row.update(
                wr_no_adv=f"{baseline['wr']:.4f}",
                wr_adv=f"{s['wr']:.4f}",
                p_sa=f"{min(1.0, max(0.0, p_sa)):.4f}",
            )
        rows.append(row)

    csv_path = campaign.outdir / "summary.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return csv_path


def emit_analysis_tables(outdir: str | Path) -> list[Path]:
    """CSV grids of the residual-information measure at steady-state weights:
    over n at lambda = 1, and over lambda at n = 100."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []

    path_n = outdir / "g_vs_n.csv"
    with open(path_n, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "lam", "g"])
        for n in range(3, 201):
            writer.writerow([n, 1.0, f"{eval_g(1.0, n, 1/n, 1/n):.6f}"])
    paths.append(path_n)

    path_lam = outdir / "g_vs_lambda.csv"
    n = 100
    with open(path_lam, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "lam", "g"])
        for lam in range(0, n):
            writer.writerow([n, lam, f"{eval_g(float(lam), n, 1/n, 1/n):.6f}"])
    paths.append(path_lam)
    return paths


def load_preset(name: str) -> dict:
    """Sweep definition from the version-controlled preset files."""
    from importlib import resources

    path = resources.files("fedrl").joinpath("presets", f"{name}.json")
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ValueError(f"unknown preset {name!r}") from None
