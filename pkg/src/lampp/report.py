"""Run configuration, JSON experiment reports and per-category comparisons."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Mapping

from . import __version__
from .errors import ReportMismatch, ValidationError


@dataclass
class RunConfig:
    subcommand: str
    paths: dict[str, str | None] = field(default_factory=dict)
    seed: int | None = None
    provider: str = "none"  # mock | http | none
    output: str | None = None
    options: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        for name, path in self.paths.items():
            if path is not None and not os.path.exists(path):
                raise ValidationError(f"--{name.replace('_', '-')}: no such file {path!r}")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        return self

    def to_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "paths": self.paths,
            "seed": self.seed,
            "provider": self.provider,
            "output": self.output,
            **self.options,
        }


@dataclass
class ExperimentReport:
    config: dict
    metrics: dict
    diagnostics: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0
    version: str = __version__

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "config": self.config,
            "metrics": self.metrics,
            "diagnostics": self.diagnostics,
            "wall_clock_s": self.wall_clock_s,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class DeltaTable:
    rows: list[tuple[str, float]]  # (category, delta), best first

    @property
    def best(self) -> tuple[str, float]:
        return self.rows[0]

    @property
    def worst(self) -> tuple[str, float]:
        return self.rows[-1]

    def to_dict(self) -> dict:
        return {
            "best": {"category": self.best[0], "delta": self.best[1]},
            "worst": {"category": self.worst[0], "delta": self.worst[1]},
            "deltas": dict(self.rows),
        }


def report_delta(run: Mapping[str, float], baseline: Mapping[str, float]) -> DeltaTable:
    """Per-category ``run - baseline``, sorted from most to least improved.

    Ties keep alphabetical order.
    """
    if set(run) != set(baseline):
        raise ReportMismatch(f"category sets differ: {sorted(set(run) ^ set(baseline))[:5]}")
    if not run:
        raise ReportMismatch("no categories to compare")
    deltas = [(c, run[c] - baseline[c]) for c in sorted(run)]
    deltas.sort(key=lambda cd: -cd[1])
    return DeltaTable(deltas)


def per_category(report: Mapping) -> dict[str, float]:
    try:
        return dict(report["metrics"]["per_category"])
    except KeyError:
        raise ValidationError("report has no metrics.per_category table") from None
