"""Treatment-threshold analysis: who gets treated under a risk rule, and how the
naive and competing-risk models differ in over- and under-treatment."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CENSORED, DataError, Horizon, SurvivalDataset

OUTCOMES = ("event", "competing", "event_free", "censored")


@dataclass(frozen=True)
class DecisionPolicy:
    """Treat when ``age > min_age`` and predicted risk at ``horizon`` is ``>= threshold``.

    ``age_covariate`` is a covariate index or an ``x<k>`` column name; ``None``
    disables the age gate (synthetic data has no age).
    """

    threshold: float = 0.10
    horizon: Horizon = Horizon(10.0, "10-year")
    age_covariate: int | str | None = None
    min_age: float = 40.0

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.min_age < 0:
            raise ValueError("min_age must be non-negative")


def _age(data: SurvivalDataset, column):
    if isinstance(column, str):
        if not (column.startswith("x") and column[1:].isdigit()):
            raise DataError(f"age column {column!r} is not a covariate column")
        column = int(column[1:])
    if not 0 <= column < data.n_covariates:
        raise DataError(f"age column x{column} missing (dataset has {data.n_covariates} covariates)")
    return data.covariates[:, column]


def eligible(data: SurvivalDataset, policy: DecisionPolicy) -> np.ndarray:
    if policy.age_covariate is None:
        return np.ones(data.n, dtype=bool)
    return _age(data, policy.age_covariate) > policy.min_age


def classify(predictions, data: SurvivalDataset, policy: DecisionPolicy) -> np.ndarray:
    """Boolean treatment flags for every subject."""
    predictions = np.asarray(predictions, dtype=float)
    return eligible(data, policy) & (predictions >= policy.threshold)


def outcomes_at(data: SurvivalDataset, horizon: float, cause: int) -> np.ndarray:
    """Outcome label per subject, observed up to ``horizon``."""
    t, d = data.times, data.events
    by_h = t <= horizon
    out = np.full(data.n, "event_free", dtype=object)
    out[by_h & (d == cause)] = "event"
    out[by_h & (d != cause) & (d != CENSORED)] = "competing"
    out[by_h & (d == CENSORED)] = "censored"
    return out


def crosstab(treated, outcome) -> dict:
    """Fractions of the (eligible) population per (treated, outcome) cell."""
    n = treated.size
    tab = {}
    for flag in (True, False):
        for o in OUTCOMES:
            tab[("treated" if flag else "untreated", o)] = (
                float(np.sum((treated == flag) & (outcome == o)) / n) if n else 0.0)
    return tab


@dataclass
class ModelDecisions:
    treated_fraction: float
    overtreatment: float
    undertreatment: float
    table: dict = field(repr=False)


def summarize(treated, outcome) -> ModelDecisions:
    n = treated.size
    if n == 0:
        return ModelDecisions(0.0, 0.0, 0.0, crosstab(treated, outcome))
    over = float(np.sum(treated & (outcome != "event")) / n)
    under = float(np.sum(~treated & (outcome == "event")) / n)
    return ModelDecisions(float(treated.mean()), over, under, crosstab(treated, outcome))


@dataclass
class DecisionReport:
    """Cross-tabs for both models, overall (group ``"all"``) and per group.

    Fractions are over the age-eligible population of each stratum.
    """

    policy: DecisionPolicy
    cause: int
    n_eligible: dict
    competing: dict
    naive: dict

    def differences(self, group="all") -> dict:
        c, nc = self.competing[group], self.naive[group]
        return {"treated_fraction": c.treated_fraction - nc.treated_fraction,
                "overtreatment": c.overtreatment - nc.overtreatment,
                "undertreatment": c.undertreatment - nc.undertreatment}

    def rows(self):
        for model, per_group in (("competing", self.competing), ("non_competing", self.naive)):
            for group, dec in per_group.items():
                for (flag, outcome), frac in dec.table.items():
                    yield {"model": model, "group": group, "treated": flag,
                           "outcome": outcome, "fraction": frac}

    def to_dict(self) -> dict:
        h = self.policy.horizon
        return {
            "denominator": "age-eligible population"
                           if self.policy.age_covariate is not None else "all subjects",
            "policy": {"threshold": self.policy.threshold, "horizon": h.t,
                       "horizon_label": h.label, "age_covariate": self.policy.age_covariate,
                       "min_age": self.policy.min_age},
            "cause": self.cause,
            "n_eligible": self.n_eligible,
            "models": {
                name: {g: {"treated_fraction": d.treated_fraction,
                           "overtreatment": d.overtreatment,
                           "undertreatment": d.undertreatment} for g, d in per.items()}
                for name, per in (("competing", self.competing), ("non_competing", self.naive))
            },
            "differences": {g: self.differences(g) for g in self.competing},
        }


def decision_report(model_c, model_nc, data: SurvivalDataset, policy: DecisionPolicy,
                    grouping=None, cause: int | None = None) -> DecisionReport:
    cause = model_c.cause if cause is None else cause
    if model_nc.cause != cause or model_c.cause != cause:
        raise ValueError("both models must target the same cause")
    h = policy.horizon.t
    mask = eligible(data, policy)
    outcome = outcomes_at(data, h, cause)
    treated_c = classify(model_c.cif(data.covariates, h), data, policy)
    treated_nc = classify(model_nc.cif(data.covariates, h), data, policy)

    strata = {"all": mask}
    if grouping is not None:
        grouping = np.asarray(grouping)
        for lab in np.unique(grouping):
            strata[str(lab)] = mask & (grouping == lab)
    n_eligible, comp, naive = {}, {}, {}
    for name, m in strata.items():
        n_eligible[name] = int(m.sum())
        comp[name] = summarize(treated_c[m], outcome[m])
        naive[name] = summarize(treated_nc[m], outcome[m])
    return DecisionReport(policy, cause, n_eligible, comp, naive)
