"""Sampling schedules: which nodes are observed at which steps."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import BadSchedule, GraphTrackError
from .graphs import VertexSet


@dataclass(frozen=True, eq=False)
class SamplingSchedule:
    """Either a deterministic list of node sets (one per step) or i.i.d.
    Bernoulli sampling with per-node rates shared across steps."""

    mode: str  # "deterministic" | "bernoulli"
    sets: tuple[VertexSet, ...] | None = None
    rates: np.ndarray | None = None

    def __post_init__(self):
        if self.mode == "deterministic":
            if self.sets is None or self.rates is not None:
                raise BadSchedule("deterministic schedule needs sets and no rates")
            if len(self.sets) == 0:
                raise BadSchedule("deterministic schedule needs at least one step")
        elif self.mode == "bernoulli":
            if self.rates is None or self.sets is not None:
                raise BadSchedule("bernoulli schedule needs rates and no sets")
            r = np.asarray(self.rates, dtype=float)
            if r.ndim != 1 or np.any(~np.isfinite(r)) or np.any(r < 0.0) or np.any(r > 1.0):
                raise BadSchedule("rates must be a 1-D vector in [0, 1]")
            object.__setattr__(self, "rates", r)
        else:
            raise BadSchedule(f"unknown schedule mode {self.mode!r}")

    @classmethod
    def deterministic(cls, sets: Iterable[Iterable[int] | VertexSet]) -> "SamplingSchedule":
        norm = tuple(s if isinstance(s, VertexSet) else VertexSet.of(s) for s in sets)
        return cls(mode="deterministic", sets=norm)

    @classmethod
    def constant(cls, nodes: Iterable[int] | VertexSet, n_steps: int) -> "SamplingSchedule":
        vs = nodes if isinstance(nodes, VertexSet) else VertexSet.of(nodes)
        return cls.deterministic([vs] * n_steps)

    @classmethod
    def full(cls, n_nodes: int, n_steps: int) -> "SamplingSchedule":
        return cls.constant(range(n_nodes), n_steps)

    @classmethod
    def bernoulli(cls, rates: Sequence[float] | np.ndarray) -> "SamplingSchedule":
        return cls(mode="bernoulli", rates=np.asarray(rates, dtype=float))

    @property
    def n_steps(self) -> int | None:
        return len(self.sets) if self.mode == "deterministic" else None

    def set_at(self, t: int) -> VertexSet:
        if self.mode != "deterministic":
            raise BadSchedule("bernoulli schedule has no fixed set; realize it first")
        if not (0 <= t < len(self.sets)):
            raise BadSchedule(f"step {t} outside schedule of length {len(self.sets)}")
        return self.sets[t]

    def check_steps(self, n_steps: int) -> None:
        if self.mode == "deterministic" and len(self.sets) != n_steps:
            raise BadSchedule(f"schedule has {len(self.sets)} steps, need {n_steps}")

    def sample_count(self) -> int:
        if self.mode != "deterministic":
            raise BadSchedule("sample_count defined for deterministic schedules")
        return sum(len(s) for s in self.sets)

    def realize(self, n_steps: int, rng: np.random.Generator) -> "SamplingSchedule":
        """Draw a deterministic schedule from Bernoulli rates (identity for deterministic)."""
        if self.mode == "deterministic":
            self.check_steps(n_steps)
            return self
        draws = rng.random((n_steps, self.rates.size)) < self.rates[None, :]
        return SamplingSchedule.deterministic(
            [np.nonzero(draws[t])[0] for t in range(n_steps)]
        )

    def to_payload(self) -> dict:
        if self.mode == "deterministic":
            return {"mode": "deterministic", "sets": [list(s.indices) for s in self.sets]}
        return {"mode": "bernoulli", "rates": [float(r) for r in self.rates]}

    @classmethod
    def from_payload(cls, payload: dict) -> "SamplingSchedule":
        mode = payload.get("mode")
        if mode == "deterministic":
            return cls.deterministic(payload["sets"])
        if mode == "bernoulli":
            return cls.bernoulli(payload["rates"])
        raise BadSchedule(f"unknown schedule mode {mode!r}")
