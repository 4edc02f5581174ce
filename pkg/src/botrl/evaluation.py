"""Paired-seed Monte Carlo benchmarking of leg-2 policies.

Episode ``i`` of every policy runs from seed ``base_seed + i``. The seed is
split into separate scenario, process-noise, measurement-noise, leg-1 coin
and policy streams, so all policies share the geometry, the leg-1 run and
the per-sub-step leg-2 noise.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .env import BearingsOnlyEnv, EpisodeOutcome, RewardParams, reward, write_trace_csv
from .models import ScenarioConfig

BASELINE_REPORT_BETA = 0.5
METRICS = ("d_E", "d_M", "reward")
STATS = ("mean", "std", "min", "max")
EPISODE_COLUMNS = ("policy", "episode", "seed", "action", "d_E", "d_M", "reward", "divergent")


@dataclass(frozen=True)
class EvalConfig:
    episodes: int = 5000
    base_seed: int = 0
    policies: tuple = ("ptb", "ito")
    beta_report: float | None = None
    workers: int = 1

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("need at least one evaluation episode")


@dataclass
class EpisodeRecord:
    episode: int
    seed: int
    action: int
    d_E: float
    d_M: float
    reward: float
    divergent: bool


@dataclass
class MetricStats:
    mean: float
    std: float
    min: float
    max: float

    @classmethod
    def of(cls, values) -> "MetricStats":
        x = np.asarray(values, dtype=float)
        std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
        return cls(float(np.mean(x)), std, float(np.min(x)), float(np.max(x)))


@dataclass
class MetricsSummary:
    episodes: int
    divergences: int
    beta: float
    d_E: MetricStats
    d_M: MetricStats
    reward: MetricStats

    @classmethod
    def from_records(cls, records: list[EpisodeRecord], beta: float) -> "MetricsSummary":
        # sort so the reduction does not depend on record order
        def col(name):
            return np.sort([getattr(r, name) for r in records])
        return cls(len(records), sum(bool(r.divergent) for r in records), beta,
                   MetricStats.of(col("d_E")), MetricStats.of(col("d_M")),
                   MetricStats.of(col("reward")))

    def get(self, metric: str, stat: str) -> float:
        return getattr(getattr(self, metric), stat)


def report_beta(policy, beta_report: float | None) -> float:
    """Beta used for the reported reward: explicit, else the agent's own, else 0.5."""
    if beta_report is not None:
        return beta_report
    own = getattr(policy, "beta", None)
    return BASELINE_REPORT_BETA if own is None else own


def run_episode(policy, seed: int, cfg: ScenarioConfig, beta: float,
                record_trace: bool = False, env: BearingsOnlyEnv | None = None) -> EpisodeOutcome:
    if env is None:
        env = BearingsOnlyEnv(cfg, RewardParams(beta), record_trace=record_trace)
    env.reset(seed)
    return env.step(policy(env.decision_point()))


def _run_chunk(args) -> list[EpisodeRecord]:
    policy, seeds, first_index, cfg, beta = args
    env = BearingsOnlyEnv(cfg, RewardParams(beta), record_trace=False)
    out = []
    for offset, seed in enumerate(seeds):
        o = run_episode(policy, seed, cfg, beta, env=env)
        out.append(EpisodeRecord(first_index + offset, seed, o.action, o.d_E, o.d_M,
                                 o.reward, o.divergent))
    return out


def run_monte_carlo(policy, eval_cfg: EvalConfig, scenario_cfg: ScenarioConfig | None = None,
                    beta: float | None = None) -> tuple[MetricsSummary, list[EpisodeRecord]]:
    """Evaluate one policy over ``eval_cfg.episodes`` paired episodes."""
    cfg = scenario_cfg or ScenarioConfig()
    beta = report_beta(policy, eval_cfg.beta_report if beta is None else beta)
    seeds = [eval_cfg.base_seed + i for i in range(eval_cfg.episodes)]
    workers = max(1, eval_cfg.workers)
    if workers == 1:
        records = _run_chunk((policy, seeds, 0, cfg, beta))
    else:
        size = math.ceil(len(seeds) / workers)
        jobs = [(policy, seeds[i:i + size], i, cfg, beta) for i in range(0, len(seeds), size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = [r for chunk in pool.map(_run_chunk, jobs) for r in chunk]
    return MetricsSummary.from_records(records, beta), records


def reaggregate(records: list[EpisodeRecord], beta: float) -> MetricsSummary:
    return MetricsSummary.from_records(records, beta)


def recompute_rewards(records: list[EpisodeRecord], beta: float) -> list[EpisodeRecord]:
    params = RewardParams(beta)
    return [EpisodeRecord(r.episode, r.seed, r.action, r.d_E, r.d_M,
                          reward(r.d_E, r.d_M, params), r.divergent) for r in records]


# ---------------------------------------------------------------------------
# comparison tables

def _row_names():
    names = [(m, s) for m in METRICS for s in STATS]
    return names + [("divergences", "count")]


def _higher_is_better(metric: str, stat: str) -> bool:
    return metric == "reward" and stat != "std"


@dataclass
class Comparison:
    summaries: dict
    records: dict = field(default_factory=dict)

    @property
    def columns(self) -> list[str]:
        return list(self.summaries)

    def value(self, column: str, metric: str, stat: str) -> float:
        s = self.summaries[column]
        if metric == "divergences":
            return float(s.divergences)
        return s.get(metric, stat)

    def rows(self) -> list[tuple[str, list[float], str]]:
        """``(row label, values per column, best column)`` for every row."""
        out = []
        for metric, stat in _row_names():
            vals = [self.value(c, metric, stat) for c in self.columns]
            pick = np.argmax if _higher_is_better(metric, stat) else np.argmin
            best = self.columns[int(pick(vals))]
            out.append((f"{metric}_{stat}", vals, best))
        return out

    def best(self, metric: str, stat: str) -> str:
        for label, _, best in self.rows():
            if label == f"{metric}_{stat}":
                return best
        raise KeyError(f"{metric}_{stat}")

    def write_summary_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", *self.columns, "best"])
            w.writerow(["episodes", *[self.summaries[c].episodes for c in self.columns], ""])
            w.writerow(["report_beta", *[self.summaries[c].beta for c in self.columns], ""])
            for label, vals, best in self.rows():
                w.writerow([label, *vals, best])
        return path

    def write_episodes_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(EPISODE_COLUMNS)
            for col, records in self.records.items():
                for r in records:
                    w.writerow([col, r.episode, r.seed, r.action, r.d_E, r.d_M, r.reward,
                                int(r.divergent)])
        return path

    def to_text(self) -> str:
        width = max(12, *(len(c) + 2 for c in self.columns))
        lines = ["metric".ljust(16) + "".join(c.rjust(width) for c in self.columns)]
        lines.append("-" * len(lines[0]))
        for label, vals, best in self.rows():
            cells = []
            for c, v in zip(self.columns, vals):
                txt = f"{v:.3f}" if label != "divergences_count" else f"{int(v)}"
                cells.append((("*" if c == best else "") + txt).rjust(width))
            lines.append(label.ljust(16) + "".join(cells))
        lines.append("(* marks the best value in each row)")
        return "\n".join(lines)


def compare(policies: dict, eval_cfg: EvalConfig, scenario_cfg: ScenarioConfig | None = None,
            betas: dict | None = None) -> Comparison:
    """Evaluate each named policy on the same paired seeds."""
    if len(policies) < 2:
        raise ValueError("compare needs at least two policies")
    betas = betas or {}
    summaries, records = {}, {}
    for name, policy in policies.items():
        summaries[name], records[name] = run_monte_carlo(policy, eval_cfg, scenario_cfg,
                                                         beta=betas.get(name))
    return Comparison(summaries, records)


def read_episodes_csv(path: str | Path) -> dict[str, list[EpisodeRecord]]:
    out: dict[str, list[EpisodeRecord]] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out.setdefault(r["policy"], []).append(EpisodeRecord(
                int(r["episode"]), int(r["seed"]), int(r["action"]), float(r["d_E"]),
                float(r["d_M"]), float(r["reward"]), bool(int(r["divergent"]))))
    return out


# ---------------------------------------------------------------------------
# single-episode traces

def demo_episode(policy, seed: int, scenario_cfg: ScenarioConfig | None = None,
                 out_dir: str | Path | None = None, beta: float | None = None,
                 name: str | None = None) -> tuple[EpisodeOutcome, Path | None]:
    """Run one fully traced episode; write ``trace_<policy>_<seed>.csv`` if asked."""
    cfg = scenario_cfg or ScenarioConfig()
    beta = report_beta(policy, beta)
    outcome = run_episode(policy, seed, cfg, beta, record_trace=True)
    path = None
    if out_dir is not None:
        name = name or getattr(policy, "name", "policy")
        path = write_trace_csv(outcome.trace, Path(out_dir) / f"trace_{name}_{seed}.csv")
    return outcome, path


def summary_as_dict(summary: MetricsSummary) -> dict:
    return asdict(summary)
