"""Naive and competing-risk-aware estimators.

Naive estimators recode every event other than the target cause as censoring
(Kaplan-Meier, Cox). Competing-risk estimators keep them apart (Aalen-Johansen,
Fine-Gray). Cox and Fine-Gray share one Breslow-ties Newton-Raphson engine; Fine-Gray
only differs by retaining competing-event subjects in the risk set with IPCW weights.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import CENSORED, NumericalError, StepFunction, SurvivalDataset

GRADIENT_TOL = 1e-8
MAX_ITER = 100
MAX_HALVINGS = 60


class ConvergenceError(NumericalError):
    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class CollinearityError(NumericalError):
    pass


@dataclass(frozen=True)
class Convergence:
    iterations: int
    gradient_norm: float
    loglik_trace: tuple = ()


@dataclass(frozen=True, eq=False)
class FittedCox:
    beta: np.ndarray
    baseline_cumhaz: StepFunction
    cause: int
    convergence: Convergence = Convergence(0, 0.0)

    kind = "cox"

    def cif(self, x, t):
        return predict_cox_cif(self, x, t)


@dataclass(frozen=True, eq=False)
class FittedFineGray:
    beta: np.ndarray
    baseline_cum_subhaz: StepFunction
    cause: int
    censoring_survival: StepFunction
    convergence: Convergence = Convergence(0, 0.0)
    fit_warnings: tuple = ()

    kind = "finegray"

    def cif(self, x, t):
        return predict_fg_cif(self, x, t)


@dataclass(frozen=True, eq=False)
class FittedNonparametric:
    """Covariate-free CIF estimate: ``km`` (naive, ``1 - S``) or ``aj`` (Aalen-Johansen)."""

    kind: str
    cause: int
    cif_curve: StepFunction = field(repr=False)

    def cif(self, x, t):
        x = np.asarray(x, dtype=float)
        value = self.cif_curve(np.asarray(t, dtype=float))
        if x.ndim == 2:
            return np.broadcast_to(value, np.broadcast_shapes((x.shape[0],), np.shape(value))).copy()
        return value


# --- nonparametric -------------------------------------------------------

def _product_limit(times, is_event):
    """Product-limit survival over the distinct times carrying at least one event."""
    times = np.asarray(times, dtype=float)
    is_event = np.asarray(is_event, dtype=bool)
    uniq, d = _event_counts(times, is_event)
    if uniq.size == 0:
        return StepFunction([], [], 1.0)
    at_risk = _at_risk(times, uniq)
    return StepFunction(uniq, np.cumprod((at_risk - d) / at_risk), 1.0)


def _event_counts(times, is_event):
    uniq, counts = np.unique(times[is_event], return_counts=True)
    return uniq, counts.astype(float)


def _at_risk(times, at):
    srt = np.sort(times)
    return (srt.size - np.searchsorted(srt, at, side="left")).astype(float)


def kaplan_meier(data: SurvivalDataset, cause: int) -> StepFunction:
    """Survival of the recoded single event (other causes treated as censoring)."""
    return _product_limit(data.times, data.events == cause)


def censoring_survival(data: SurvivalDataset) -> StepFunction:
    """Reverse Kaplan-Meier estimate of the censoring survival function G."""
    return _product_limit(data.times, data.events == CENSORED)


def aalen_johansen(data: SurvivalDataset, cause: int) -> StepFunction:
    """Nonparametric cumulative incidence of ``cause`` under competing risks."""
    times, events = data.times, data.events
    uniq, d_all = _event_counts(times, events != CENSORED)
    if uniq.size == 0:
        return StepFunction([], [], 0.0)
    n_k = _at_risk(times, uniq)
    surv = np.cumprod((n_k - d_all) / n_k)
    surv_before = np.concatenate(([1.0], surv[:-1]))
    cause_times, d_cause = _event_counts(times, events == cause)
    d_r = np.zeros_like(d_all)
    d_r[np.searchsorted(uniq, cause_times)] = d_cause
    return StepFunction(uniq, np.cumsum(surv_before * d_r / n_k), 0.0)


def all_cause_km(data: SurvivalDataset) -> StepFunction:
    return _product_limit(data.times, data.events != CENSORED)


def fit_nonparametric(data: SurvivalDataset, kind: str, cause: int) -> FittedNonparametric:
    if kind == "km":
        s = kaplan_meier(data, cause)
        curve = StepFunction(s.jump_times, 1.0 - s.values, 0.0)
    elif kind == "aj":
        curve = aalen_johansen(data, cause)
    else:
        raise ValueError(f"unknown nonparametric estimator {kind!r}")
    return FittedNonparametric(kind, cause, curve)


# --- partial likelihood engine -------------------------------------------

class _RiskSets:
    """Breslow-ties (weighted) partial likelihood for a fixed design.

    Subjects with ``T_j >= t_k`` are at risk at event time ``t_k`` with weight 1.
    Subjects flagged ``retained`` (competing events under Fine-Gray) stay at risk
    after ``T_j`` with weight ``G(t_k-) / G(T_j-)``.
    """

    def __init__(self, x, times, is_event, retained=None, censoring=None):
        self.x = np.asarray(x, dtype=float)
        n, p = self.x.shape
        times = np.asarray(times, dtype=float)
        is_event = np.asarray(is_event, dtype=bool)

        self.event_times, self.d = _event_counts(times, is_event)
        if self.event_times.size == 0:
            raise NumericalError("no events of the target cause")
        self.event_index = np.flatnonzero(is_event)
        # event -> position of its time in event_times, for per-time residual sums
        self.event_slot = np.searchsorted(self.event_times, times[self.event_index])

        self.order = np.argsort(times, kind="stable")
        self.start = np.searchsorted(times[self.order], self.event_times, side="left")

        self.warnings = []
        retained = np.zeros(n, bool) if retained is None else np.asarray(retained, bool)
        self.has_retained = bool(retained.any())
        if self.has_retained:
            g_left_event = censoring.left(self.event_times)
            g_left_own = censoring.left(times[retained])
            if np.any(g_left_event <= 0) or np.any(g_left_own <= 0):
                self.warnings.append(
                    "censoring survival reached 0; weights truncated at last time with G > 0")
            own = np.flatnonzero(retained)
            ret_order = np.argsort(times[own], kind="stable")
            self.ret_index = own[ret_order]
            safe_own = g_left_own[ret_order]
            self.ret_inv_g = np.where(safe_own > 0, 1.0 / np.where(safe_own > 0, safe_own, 1), 0)
            self.ret_count = np.searchsorted(times[self.ret_index], self.event_times, side="left")
            self.g_left_event = np.where(g_left_event > 0, g_left_event, 0.0)

    def _sums(self, eta, order2=True):
        """Weighted S0, S1, S2 at each event time, with ``exp`` shifted by ``max(eta)``."""
        shift = eta.max() if eta.size else 0.0
        r = np.exp(eta - shift)
        x = self.x
        rx = r[:, None] * x
        rxx = rx[:, :, None] * x[:, None, :] if order2 else None

        def tail(v):
            v = v[self.order]
            c = np.cumsum(v[::-1], axis=0)[::-1]
            c = np.concatenate((c, np.zeros((1,) + v.shape[1:])), axis=0)
            return c[self.start]

        s0, s1 = tail(r), tail(rx)
        s2 = tail(rxx) if order2 else None
        if self.has_retained:
            def head(v):
                v = v[self.ret_index] * self.ret_inv_g.reshape((-1,) + (1,) * (v.ndim - 1))
                c = np.concatenate((np.zeros((1,) + v.shape[1:]), np.cumsum(v, axis=0)), axis=0)
                scale = self.g_left_event.reshape((-1,) + (1,) * (v.ndim - 1))
                return c[self.ret_count] * scale

            s0 = s0 + head(r)
            s1 = s1 + head(rx)
            if order2:
                s2 = s2 + head(rxx)
        return shift, s0, s1, s2

    def evaluate(self, beta, order2=True):
        """Log partial likelihood, gradient and Hessian at ``beta``."""
        eta = self.x @ beta
        shift, s0, s1, s2 = self._sums(eta, order2)
        slot = self.event_slot
        # per-event residuals keep the sums free of large cancelling totals
        ll = np.sum(eta[self.event_index] - np.log(s0[slot]) - shift)
        mean = s1 / s0[:, None]
        grad = np.sum(self.x[self.event_index] - mean[slot], axis=0)
        if not order2:
            return ll, grad, None
        cov = s2 / s0[:, None, None] - mean[:, :, None] * mean[:, None, :]
        hess = -np.tensordot(self.d, cov, axes=1)
        return ll, grad, hess

    def breslow(self, beta):
        """Cumulative baseline (sub)hazard at the event times for linear predictor ``x @ beta``."""
        eta = self.x @ beta
        shift, s0, _, _ = self._sums(eta, order2=False)
        return np.cumsum(self.d / s0) * np.exp(-shift)


def loglik_slack(ll):
    """Rounding-level tolerance when comparing log partial likelihoods."""
    return 64 * np.finfo(float).eps * (abs(ll) + 1.0)


def _newton(risk: _RiskSets, p: int, scale: np.ndarray, tol=GRADIENT_TOL, max_iter=MAX_ITER):
    """Maximise the partial likelihood from ``beta = 0`` with step halving.

    Convergence is tested on the gradient with respect to the unstandardised
    coefficients, i.e. ``grad * scale``.
    """
    beta = np.zeros(p)
    ll, grad, hess = risk.evaluate(beta)
    trace = [(0, ll, float(np.max(np.abs(grad * scale), initial=0.0)))]
    for it in range(1, max_iter + 1):
        gnorm = float(np.max(np.abs(grad * scale), initial=0.0))
        if gnorm < tol:
            return beta, Convergence(it - 1, gnorm, tuple(ll for _, ll, _ in trace))
        try:
            chol = np.linalg.cholesky(-hess)
        except np.linalg.LinAlgError:
            raise CollinearityError("collinear covariates: information matrix is singular")
        if np.linalg.cond(chol) ** 2 > 1e14:
            raise CollinearityError("collinear covariates: information matrix is singular")
        step = np.linalg.solve(-hess, grad)
        size = 1.0
        for _ in range(MAX_HALVINGS):
            cand = beta + size * step
            ll_c, grad_c, hess_c = risk.evaluate(cand)
            if np.isfinite(ll_c) and ll_c >= ll - loglik_slack(ll):
                break
            size /= 2
        else:
            # no ascent left at floating-point resolution
            if gnorm < 1e3 * tol:
                return beta, Convergence(it - 1, gnorm, tuple(ll for _, ll, _ in trace))
            raise ConvergenceError(f"line search failed at iteration {it} "
                                   f"(gradient max-norm {gnorm:.3g})", trace)
        beta, ll, grad, hess = cand, ll_c, grad_c, hess_c
        trace.append((it, ll, float(np.max(np.abs(grad * scale)))))
    gnorm = float(np.max(np.abs(grad * scale), initial=0.0))
    if gnorm < tol:
        return beta, Convergence(max_iter, gnorm, tuple(ll for _, ll, _ in trace))
    raise ConvergenceError(f"no convergence within {max_iter} iterations "
                           f"(gradient max-norm {gnorm:.3g})", trace)


def _standardize(x):
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    if x.shape[1] and np.any(sd <= 1e-12 * np.maximum(1.0, np.abs(mean))):
        raise CollinearityError("collinear covariates: constant covariate column")
    return (x - mean) / sd, mean, sd


def _fit(data: SurvivalDataset, cause: int, fine_gray: bool):
    is_event = data.events == cause
    if not is_event.any():
        raise NumericalError(f"no events of cause {cause}")
    x = data.covariates
    p = x.shape[1]
    z, mean, sd = _standardize(x) if p else (x, np.zeros(0), np.ones(0))
    censoring = retained = None
    if fine_gray:
        censoring = censoring_survival(data)
        retained = (data.events != CENSORED) & ~is_event
    risk = _RiskSets(z, data.times, is_event, retained, censoring)
    if p:
        beta_std, conv = _newton(risk, p, sd)
    else:
        beta_std, conv = np.zeros(0), Convergence(0, 0.0)
    beta = beta_std / sd
    cum = risk.breslow(beta_std) * np.exp(-mean @ beta)
    baseline = StepFunction(risk.event_times, cum, 0.0)
    for w in risk.warnings:
        warnings.warn(w, RuntimeWarning, stacklevel=3)
    return beta, baseline, conv, censoring, tuple(risk.warnings)


def fit_cox(data: SurvivalDataset, cause: int) -> FittedCox:
    """Cox model for ``cause`` with competing events recoded as censoring."""
    beta, baseline, conv, _, _ = _fit(data, cause, fine_gray=False)
    return FittedCox(beta, baseline, cause, conv)


def fit_fine_gray(data: SurvivalDataset, cause: int) -> FittedFineGray:
    """Fine-Gray subdistribution hazard model for ``cause`` (IPCW risk sets)."""
    beta, baseline, conv, censoring, warns = _fit(data, cause, fine_gray=True)
    return FittedFineGray(beta, baseline, cause, censoring, conv, warns)


def partial_likelihood(data: SurvivalDataset, cause: int, beta, fine_gray: bool = False,
                       censoring: StepFunction | None = None):
    """``(loglik, gradient, hessian)`` of the (weighted) Breslow partial likelihood,
    on the raw covariate scale."""
    is_event = data.events == cause
    retained = None
    if fine_gray:
        censoring = censoring_survival(data) if censoring is None else censoring
        retained = (data.events != CENSORED) & ~is_event
    risk = _RiskSets(data.covariates, data.times, is_event, retained, censoring)
    return risk.evaluate(np.asarray(beta, dtype=float))


# --- prediction ----------------------------------------------------------

def _cif_from_cumhaz(beta, baseline: StepFunction, x, t):
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    risk = np.exp(x @ beta) if beta.size else np.ones(x.shape[:-1] if x.ndim else ())
    out = -np.expm1(-baseline(t) * risk)
    return float(out) if np.ndim(out) == 0 else out


def predict_cox_cif(model: FittedCox, x, t):
    """Naive CIF ``1 - exp(-H0(t) exp(beta.x))``; ``x`` is one vector or an (n, p) matrix."""
    return _cif_from_cumhaz(model.beta, model.baseline_cumhaz, x, t)


def predict_fg_cif(model: FittedFineGray, x, t):
    """Competing-risk CIF ``1 - exp(-H_r0(t) exp(beta.x))``."""
    return _cif_from_cumhaz(model.beta, model.baseline_cum_subhaz, x, t)


def predict_cif(model, x, t):
    return model.cif(x, t)


ESTIMATORS = ("cox", "finegray", "km", "aj")
COMPETING = {"cox": False, "km": False, "finegray": True, "aj": True}


def fit_model(kind: str, data: SurvivalDataset, cause: int):
    if kind == "cox":
        return fit_cox(data, cause)
    if kind == "finegray":
        return fit_fine_gray(data, cause)
    if kind in ("km", "aj"):
        return fit_nonparametric(data, kind, cause)
    raise ValueError(f"unknown model {kind!r}; expected one of {', '.join(ESTIMATORS)}")
