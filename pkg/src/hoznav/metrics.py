"""Success rate, success weighted by path length and by action efficiency."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Sequence

from .core import CHANGE_ACTIONS
from .simulator import EpisodeRecord

L_MIN = 5
METRICS = ("sr", "spl", "sae")


class EmptySubset(ValueError):
    pass


def _require(records: Sequence[EpisodeRecord]) -> None:
    if len(records) == 0:
        raise EmptySubset("no episodes to evaluate")


def compute_sr(records: Sequence[EpisodeRecord]) -> float:
    _require(records)
    return sum(1.0 for r in records if r.success) / len(records)


def compute_spl(records: Sequence[EpisodeRecord]) -> float:
    _require(records)
    total = 0.0
    for r in records:
        if r.optimal_length is None:
            raise ValueError(f"episode in {r.env_id} lacks an optimal path length")
        if r.success:
            denom = max(r.actual_length, r.optimal_length)
            total += 1.0 if denom == 0 else r.optimal_length / denom
    return total / len(records)


def compute_sae(records: Sequence[EpisodeRecord]) -> float:
    _require(records)
    total = 0.0
    for r in records:
        if not r.success:
            continue
        if not r.actions:
            raise ValueError(f"successful episode in {r.env_id} has no actions")
        total += sum(1 for a in r.actions if a in CHANGE_ACTIONS) / len(r.actions)
    return total / len(records)


def filter_subset(records: Sequence[EpisodeRecord], min_optimal: int = L_MIN) -> list[EpisodeRecord]:
    return [r for r in records if r.optimal_length is not None and r.optimal_length >= min_optimal]


@dataclass
class MetricsReport:
    sr: float
    spl: float
    sae: float
    n_episodes: int
    subset: str = "all"
    variance: dict = field(default_factory=dict)
    trials: int = 1

    def as_dict(self) -> dict:
        return {
            "subset": self.subset,
            "n_episodes": self.n_episodes,
            "trials": self.trials,
            "sr": self.sr,
            "spl": self.spl,
            "sae": self.sae,
            "variance": dict(self.variance),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(d["sr"], d["spl"], d["sae"], d["n_episodes"], d["subset"], dict(d.get("variance", {})),
                   d.get("trials", 1))


def evaluate(records: Sequence[EpisodeRecord], subset: str = "all") -> MetricsReport:
    if subset == "all":
        chosen = list(records)
    elif subset == "L>=5":
        chosen = filter_subset(records)
    else:
        raise ValueError(f"unknown subset {subset!r}")
    if not chosen:
        raise EmptySubset(f"subset {subset} is empty")
    return MetricsReport(compute_sr(chosen), compute_spl(chosen), compute_sae(chosen), len(chosen), subset)


def aggregate_trials(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Mean and sample variance (ddof=1) of each metric across repeated trials."""
    if len(reports) < 2:
        raise ValueError("need at least two trials to aggregate")
    out = {}
    var = {}
    for m in METRICS:
        values = [float(getattr(r, m)) for r in reports]
        out[m] = statistics.fmean(values)
        var[m] = statistics.variance(values)  # exact arithmetic, so identical trials give 0.0
    return MetricsReport(out["sr"], out["spl"], out["sae"], sum(r.n_episodes for r in reports),
                         reports[0].subset, var, len(reports))
