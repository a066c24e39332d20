"""Time-dependent Brier score and concordance index with IPCW competing-risk correction,
plus group-stratified comparisons of two models."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CENSORED, DataError, Horizon, NumericalError, StepFunction, SurvivalDataset
from .estimators import censoring_survival

PAIR_BLOCK = 512


def _check_predictions(predictions, data):
    predictions = np.asarray(predictions, dtype=float)
    if predictions.shape != (data.n,):
        raise ValueError(f"expected {data.n} predictions, got shape {predictions.shape}")
    return predictions


def _left(censoring: StepFunction, t):
    t = np.asarray(t, dtype=float)
    return censoring.left(t)


def td_brier(predictions, data: SurvivalDataset, horizon: float, cause: int = 1,
             censoring: StepFunction | None = None) -> float:
    """IPCW Brier score of predicted CIFs at ``horizon``.

    Subjects with an event by ``horizon`` are weighted ``1/G(T_i-)``, subjects still
    under observation ``1/G(horizon)``; those censored before ``horizon`` get 0.
    """
    p = _check_predictions(predictions, data)
    g = censoring_survival(data) if censoring is None else censoring
    t, d = data.times, data.events
    had_event = (t <= horizon) & (d != CENSORED)
    beyond = t > horizon
    g_own = _left(g, t[had_event])
    g_h = g(horizon)
    if np.any(g_own <= 0) or (beyond.any() and g_h <= 0):
        raise NumericalError("censoring support exhausted before horizon")
    w = np.zeros(data.n)
    w[had_event] = 1.0 / g_own
    w[beyond] = 1.0 / g_h if beyond.any() else 0.0
    outcome = (had_event & (d == cause)).astype(float)
    return float(np.mean(w * (outcome - p) ** 2))


def td_c_index(predictions, data: SurvivalDataset, horizon: float, cause: int = 1,
               censoring: StepFunction | None = None) -> float:
    """IPCW cause-specific concordance at ``horizon``.

    Cases are subjects with a ``cause`` event by ``horizon``. Controls are subjects
    with a later observed time (weight ``1/G(T_i-)^2``) or an earlier-or-equal
    competing event (weight ``1/(G(T_i-) G(T_j-))``). Prediction ties count 0.5.
    """
    p = _check_predictions(predictions, data)
    g = censoring_survival(data) if censoring is None else censoring
    t, d = data.times, data.events
    cases = np.flatnonzero((d == cause) & (t <= horizon))
    if cases.size == 0:
        raise DataError(f"no cause-{cause} events before the horizon")
    g_left = np.ones(data.n)
    positive = t > 0
    g_left[positive] = g.left(t[positive])
    competing = (d != CENSORED) & (d != cause)

    num = 0.0
    den = 0.0
    for start in range(0, cases.size, PAIR_BLOCK):
        i = cases[start:start + PAIR_BLOCK]
        ti, pi, gi = t[i][:, None], p[i][:, None], g_left[i][:, None]
        if np.any(gi <= 0):
            raise NumericalError("censoring support exhausted before horizon")
        later = t[None, :] > ti
        prior_competing = (t[None, :] <= ti) & competing[None, :]
        weight = later / gi ** 2 + prior_competing / (gi * np.where(g_left > 0, g_left, np.inf)[None, :])
        score = np.where(pi > p[None, :], 1.0, np.where(pi == p[None, :], 0.5, 0.0))
        num += float(np.sum(weight * score))
        den += float(np.sum(weight))
    if den == 0:
        raise DataError("no comparable pairs")
    return num / den


@dataclass
class EvalReport:
    """Metrics of one model at one horizon, overall and per group."""

    model: str
    horizon: Horizon
    td_brier: float
    td_ci: float
    group_brier: dict = field(default_factory=dict)
    group_ci: dict = field(default_factory=dict)

    def rows(self):
        yield {"model": self.model, "horizon": self.horizon.label, "t": self.horizon.t,
               "group": "all", "td_brier": self.td_brier, "td_ci": self.td_ci}
        for g in sorted(self.group_brier):
            yield {"model": self.model, "horizon": self.horizon.label, "t": self.horizon.t,
                   "group": str(g), "td_brier": self.group_brier[g], "td_ci": self.group_ci[g]}


@dataclass
class GroupComparison:
    """Competing minus non-competing metric per group, and the change in the
    between-group gap ``|delta_C| - |delta_NC|`` (delta = group 1 minus group 0)."""

    horizon: Horizon
    competing: EvalReport
    naive: EvalReport
    brier_diff: dict
    ci_diff: dict
    brier_gap_change: float
    ci_gap_change: float

    def rows(self):
        base = {"horizon": self.horizon.label, "t": self.horizon.t}
        for g in sorted(self.brier_diff):
            yield {**base, "group": str(g), "td_brier_diff": self.brier_diff[g],
                   "td_ci_diff": self.ci_diff[g]}
        yield {**base, "group": "gap_change", "td_brier_diff": self.brier_gap_change,
               "td_ci_diff": self.ci_gap_change}

    def to_dict(self):
        return {"horizon": {"label": self.horizon.label, "t": self.horizon.t},
                "competing": list(self.competing.rows()),
                "non_competing": list(self.naive.rows()),
                "differences": list(self.rows())}


def gap_change(competing_scores: dict, naive_scores: dict, group: int = 1) -> float:
    """``|delta_C| - |delta_NC|`` from the four group-level scores."""
    other = [k for k in competing_scores if k != group]
    if len(other) != 1:
        raise ValueError("gap change needs exactly two groups")
    o = other[0]
    delta_c = competing_scores[group] - competing_scores[o]
    delta_nc = naive_scores[group] - naive_scores[o]
    return abs(delta_c) - abs(delta_nc)


def evaluate_model(name, model, data: SurvivalDataset, horizon: Horizon, cause: int,
                   grouping=None, censoring: StepFunction | None = None) -> EvalReport:
    g = censoring_survival(data) if censoring is None else censoring
    pred = np.asarray(model.cif(data.covariates, horizon.t), dtype=float)
    report = EvalReport(name, horizon, td_brier(pred, data, horizon.t, cause, g),
                        td_c_index(pred, data, horizon.t, cause, g))
    if grouping is not None:
        grouping = np.asarray(grouping)
        labels = np.unique(grouping)
        if labels.size != 2:
            raise DataError("empty group: grouping must split the data into two non-empty groups")
        for lab in labels:
            mask = grouping == lab
            sub = data.subset(mask)
            report.group_brier[int(lab)] = td_brier(pred[mask], sub, horizon.t, cause, g)
            report.group_ci[int(lab)] = td_c_index(pred[mask], sub, horizon.t, cause, g)
    return report


def group_metric_diff(model_c, model_nc, data: SurvivalDataset, horizons, cause: int,
                      grouping) -> list[GroupComparison]:
    """Per-horizon group metric differences between a competing-risk model and its
    naive counterpart. Censoring weights come from the whole evaluation set."""
    g = censoring_survival(data)
    out = []
    for h in horizons:
        rc = evaluate_model(model_c.kind, model_c, data, h, cause, grouping, g)
        rn = evaluate_model(model_nc.kind, model_nc, data, h, cause, grouping, g)
        out.append(GroupComparison(
            h, rc, rn,
            {k: rc.group_brier[k] - rn.group_brier[k] for k in rc.group_brier},
            {k: rc.group_ci[k] - rn.group_ci[k] for k in rc.group_ci},
            gap_change(rc.group_brier, rn.group_brier),
            gap_change(rc.group_ci, rn.group_ci),
        ))
    return out
