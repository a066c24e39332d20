"""Shared domain types: survival datasets, step functions, evaluation horizons."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np


class DataError(ValueError):
    """Input data violates a structural contract (schema, ranges, emptiness)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (non-convergence, singular system, degenerate hazard)."""


CENSORED = 0


class Subject(NamedTuple):
    id: str
    covariates: np.ndarray
    group: int
    time: float
    event: int


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Observed right-censored competing-risks data.

    Parameters
    ----------
    ids : array of str
    covariates : (n, p) float array
    groups : (n,) int array of binary group labels
    times : (n,) non-negative float array
    events : (n,) int array, 0 = censored, 1..n_risks = event cause
    n_risks : int, optional
        Declared number of competing risks. Defaults to the largest observed code.
    """

    ids: np.ndarray
    covariates: np.ndarray
    groups: np.ndarray
    times: np.ndarray
    events: np.ndarray
    n_risks: int = -1

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        events = np.asarray(self.events, dtype=int)
        n = times.shape[0]
        if times.ndim != 1 or n == 0:
            raise DataError("dataset must contain at least one subject")
        x = np.asarray(self.covariates, dtype=float)
        if x.ndim == 1 and x.size == 0:
            x = np.zeros((n, 0))
        x = x.reshape(n, -1) if x.ndim == 1 else x
        if x.shape[0] != n:
            raise DataError(f"covariate rows ({x.shape[0]}) != subjects ({n})")
        ids = np.asarray(self.ids).astype(str)
        groups = np.asarray(self.groups, dtype=int)
        if ids.shape != (n,) or groups.shape != (n,) or events.shape != (n,):
            raise DataError("ids, groups, times and events must have equal length")
        if np.any(~np.isfinite(times)) or np.any(times < 0):
            raise DataError("times must be finite and non-negative")
        if np.any(events < 0):
            raise DataError("event codes must be non-negative")
        n_risks = int(events.max()) if self.n_risks < 0 else int(self.n_risks)
        if np.any(events > n_risks):
            raise DataError(f"event code above declared n_risks={n_risks}")
        for name, value in (("ids", ids), ("covariates", x), ("groups", groups),
                            ("times", times), ("events", events)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "n_risks", n_risks)

    @property
    def n(self) -> int:
        return self.times.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[Subject]:
        for i in range(self.n):
            yield self.subject(i)

    def subject(self, i: int) -> Subject:
        return Subject(self.ids[i], self.covariates[i], int(self.groups[i]),
                       float(self.times[i]), int(self.events[i]))

    def subset(self, index) -> "SurvivalDataset":
        """Rows selected by an integer or boolean index, keeping n_risks."""
        index = np.asarray(index)
        return SurvivalDataset(self.ids[index], self.covariates[index], self.groups[index],
                               self.times[index], self.events[index], self.n_risks)

    def recode(self, cause: int) -> np.ndarray:
        """Event indicator for ``cause`` with every other event treated as censoring."""
        return (self.events == cause).astype(int)

    def equals(self, other: "SurvivalDataset") -> bool:
        return (self.n_risks == other.n_risks
                and np.array_equal(self.ids, other.ids)
                and np.array_equal(self.covariates, other.covariates)
                and np.array_equal(self.groups, other.groups)
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.events, other.events))


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous piecewise-constant function on [0, inf).

    The value on ``[jump_times[k], jump_times[k+1])`` is ``values[k]``; before the
    first jump it is ``initial_value``.
    """

    jump_times: np.ndarray
    values: np.ndarray
    initial_value: float = 0.0

    def __post_init__(self):
        t = np.array(self.jump_times, dtype=float).ravel()
        v = np.array(self.values, dtype=float).ravel()
        if t.shape != v.shape:
            raise ValueError("jump_times and values must have the same length")
        if t.size and (t[0] < 0 or np.any(np.diff(t) <= 0)):
            raise ValueError("jump_times must be strictly increasing and non-negative")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "jump_times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "initial_value", float(self.initial_value))

    def _lookup(self, t, side):
        t = np.asarray(t, dtype=float)
        extended = np.concatenate(([self.initial_value], self.values))
        out = extended[np.searchsorted(self.jump_times, t, side=side)]
        return float(out) if out.ndim == 0 else out

    def __call__(self, t):
        return self._lookup(t, "right")

    def left(self, t):
        return self._lookup(t, "left")

    def equals(self, other: "StepFunction") -> bool:
        return (self.initial_value == other.initial_value
                and np.array_equal(self.jump_times, other.jump_times)
                and np.array_equal(self.values, other.values))


def step_eval(f: StepFunction, t):
    """Right-continuous value of ``f`` at ``t`` (scalar or array)."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    return f(t)


def step_eval_left(f: StepFunction, t):
    """Left limit ``f(t-)``: value attached to the last jump strictly before ``t``."""
    if np.any(np.asarray(t) <= 0):
        raise ValueError("t must be positive")
    return f.left(t)


@dataclass(frozen=True)
class Horizon:
    t: float
    label: str = ""

    def __post_init__(self):
        if not (self.t >= 0):
            raise ValueError(f"horizon must be non-negative, got {self.t}")


def quantile_label(q: float) -> str:
    return f"q{q:g}"


def event_time_quantile(data: SurvivalDataset, q: float) -> Horizon:
    """Lower quantile of the uncensored event times.

    Returns the smallest uncensored time ``t`` such that the fraction of uncensored
    times ``<= t`` is at least ``q``.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    observed = np.sort(data.times[data.events != CENSORED])
    if observed.size == 0:
        raise DataError("no uncensored events")
    k = max(math.ceil(q * observed.size - 1e-12), 1)
    return Horizon(float(observed[k - 1]), quantile_label(q))
