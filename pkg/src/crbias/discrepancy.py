"""Relative cumulative incidence discrepancy between naive and competing-risk CIFs.

``L = (F_nc - F_c) / max(F_nc, F_c)``. With the true distributions this equals
``P(D' != r | T_r < t, x)``, the chance that a competing event precedes the latent
event of interest; it is computed here both in closed form and by quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DataError, Horizon, NumericalError, SurvivalDataset
from .sim import GroundTruth, gompertz_cumhaz, inverse_cumhaz, true_cif, true_marginal

QUAD_NODES = 64
QUAD_TOL = 1e-8
QUAD_MAX_NODES = 2 ** 15
# Beyond cumulative hazard 40 the remaining latent-time mass is below exp(-40).
TAIL_CUMHAZ = 40.0
BOOTSTRAP_RESAMPLES = 1000


def relative_discrepancy(f_nc, f_c):
    """``(f_nc - f_c) / max(f_nc, f_c)``, with 0 where both are 0."""
    f_nc = np.asarray(f_nc, dtype=float)
    f_c = np.asarray(f_c, dtype=float)
    top = np.maximum(f_nc, f_c)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(top > 0, (f_nc - f_c) / np.where(top > 0, top, 1.0), 0.0)
    return float(out) if out.ndim == 0 else out


def empirical_discrepancy(model_nc, model_c, data: SurvivalDataset, horizon: Horizon,
                          cause: int = 1):
    """Per-subject discrepancy between two fitted models at ``horizon``; returns
    ``(values, mean)``."""
    for m in (model_nc, model_c):
        if m.cause != cause:
            raise ValueError(f"model targets cause {m.cause}, expected {cause}")
    f_nc = model_nc.cif(data.covariates, horizon.t)
    f_c = model_c.cif(data.covariates, horizon.t)
    values = relative_discrepancy(f_nc, f_c)
    return values, float(np.mean(values))


def closed_form_discrepancy(truth: GroundTruth, t, cause: int = 1):
    """Discrepancy of the true marginal against the true CIF."""
    return relative_discrepancy(true_marginal(truth, cause, t), true_cif(truth, cause, t))


def _gauss_legendre(n):
    return np.polynomial.legendre.leggauss(n)


def _integrate(integrand, upper, n):
    x, w = _gauss_legendre(n)
    half = upper / 2.0
    s = half[None, :] * (x[:, None] + 1.0)
    return half * (w @ integrand(s))


def theoretical_discrepancy(truth: GroundTruth, t: float, nodes: int = QUAD_NODES,
                            tol: float = QUAD_TOL, max_nodes: int = QUAD_MAX_NODES):
    """``P(T2 < T1 | T1 < t)`` per subject, with independent latent Gompertz times.

    Numerator ``int_0^t F2(s) f1(s) ds`` by Gauss-Legendre quadrature, doubling the
    node count until successive estimates agree to ``tol``; denominator ``F1(t)``.
    """
    if t <= 0:
        raise ValueError("horizon must be positive")
    w1 = np.atleast_1d(np.asarray(truth.w1, dtype=float))
    w2 = np.atleast_1d(np.asarray(truth.w2, dtype=float))
    ws = np.atleast_1d(np.asarray(truth.ws, dtype=float))
    out = np.zeros(w1.shape)
    live = (w1 > 0) & (w2 > 0)
    if not live.any():
        return out if np.ndim(truth.w1) else float(out[0])
    w1, w2, ws = w1[live], w2[live], ws[live]

    upper = np.minimum(t, inverse_cumhaz(w1, ws, TAIL_CUMHAZ))

    def integrand(s, k=slice(None)):
        h1 = gompertz_cumhaz(w1[k], ws[k], s)
        h2 = gompertz_cumhaz(w2[k], ws[k], s)
        log_f1 = np.log(w1[k]) + ws[k] * s - h1
        return -np.expm1(-h2) * np.exp(log_f1)

    n = nodes
    prev = _integrate(integrand, upper, n)
    pending = np.arange(w1.size)
    while True:
        n *= 2
        if n > max_nodes:
            raise NumericalError(f"quadrature did not converge with {max_nodes} nodes")
        cur = _integrate(lambda s: integrand(s, pending), upper[pending], n)
        done = np.abs(cur - prev[pending]) < tol
        prev[pending] = cur
        pending = pending[~done]
        if pending.size == 0:
            break

    denom = -np.expm1(-gompertz_cumhaz(w1, ws, t))
    value = np.where(denom > 0, prev / np.where(denom > 0, denom, 1.0), 0.0)
    out[live] = np.clip(value, 0.0, 1.0)
    return out if np.ndim(truth.w1) else float(out[0])


def theorem1_check(truth: GroundTruth, t: float, mc_samples: int = 100_000,
                   rng: np.random.Generator | None = None):
    """Compare the closed-form discrepancy with a brute-force latent-pair estimate
    of ``P(D' != 1 | T1 < t)``.

    Returns ``(lhs, rhs, |lhs - rhs|)`` as arrays over the truth rows.
    """
    if mc_samples < 10_000:
        raise ValueError("mc_samples must be at least 10,000")
    rng = np.random.default_rng() if rng is None else rng
    lhs = np.atleast_1d(closed_form_discrepancy(truth, t, cause=1))
    w1 = np.atleast_1d(truth.w1)
    w2 = np.atleast_1d(truth.w2)
    ws = np.atleast_1d(truth.ws)
    rhs = np.empty_like(lhs)
    for i in range(lhs.size):
        e1 = rng.standard_exponential(mc_samples)
        e2 = rng.standard_exponential(mc_samples)
        t1 = inverse_cumhaz(w1[i], ws[i], e1) if w1[i] > 0 else np.full(mc_samples, np.inf)
        t2 = inverse_cumhaz(w2[i], ws[i], e2) if w2[i] > 0 else np.full(mc_samples, np.inf)
        hit = t1 < t
        rhs[i] = np.mean(t2[hit] < t1[hit]) if hit.any() else np.nan
    return lhs, rhs, np.abs(lhs - rhs)


def group_discrepancy(values, groups):
    """Group means ``L_g`` and gaps ``L_g - L_not_g`` for each label in ``groups``."""
    values = np.asarray(values, dtype=float)
    groups = np.asarray(groups)
    if values.shape != groups.shape:
        raise ValueError("values and groups must be aligned")
    labels = np.unique(groups)
    if labels.size < 2:
        raise DataError("empty group: need two non-empty groups")
    means, gaps = {}, {}
    for g in labels:
        means[int(g)] = float(np.mean(values[groups == g]))
    for g in labels:
        gaps[int(g)] = means[int(g)] - float(np.mean(values[groups != g]))
    return means, gaps


@dataclass
class DiscrepancyReport:
    """Empirical vs. theoretical discrepancy at one horizon for one replication."""

    horizon: Horizon
    cause: int
    empirical_L: np.ndarray = field(repr=False)
    theoretical_L: np.ndarray = field(repr=False)
    groups: np.ndarray = field(repr=False)
    replication: int | None = None

    def __post_init__(self):
        self.empirical_mean = float(np.mean(self.empirical_L))
        self.theoretical_mean = float(np.mean(self.theoretical_L))
        self.empirical_group, self.empirical_gap = group_discrepancy(self.empirical_L, self.groups)
        self.theoretical_group, self.theoretical_gap = group_discrepancy(self.theoretical_L,
                                                                         self.groups)

    def to_dict(self) -> dict:
        return {
            "replication": self.replication,
            "horizon": {"label": self.horizon.label, "t": self.horizon.t},
            "cause": self.cause,
            "n": int(self.empirical_L.size),
            "empirical_L": self.empirical_mean,
            "theoretical_L": self.theoretical_mean,
            "empirical_group_L": {str(k): v for k, v in self.empirical_group.items()},
            "theoretical_group_L": {str(k): v for k, v in self.theoretical_group.items()},
            "empirical_gap": {str(k): v for k, v in self.empirical_gap.items()},
            "theoretical_gap": {str(k): v for k, v in self.theoretical_gap.items()},
        }


def rmse(theoretical, empirical) -> float:
    err = np.asarray(empirical, dtype=float) - np.asarray(theoretical, dtype=float)
    return float(np.sqrt(np.mean(err ** 2)))


def bootstrap_rmse(theoretical, empirical, n_boot: int = BOOTSTRAP_RESAMPLES, seed: int = 0):
    """RMSE and its bootstrap standard deviation over resampled replications."""
    theoretical = np.asarray(theoretical, dtype=float)
    empirical = np.asarray(empirical, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, theoretical.size, size=(n_boot, theoretical.size))
    err2 = (empirical - theoretical) ** 2
    boot = np.sqrt(err2[idx].mean(axis=1))
    # identical resamples: report an exact 0 rather than summation round-off
    sd = 0.0 if np.ptp(boot) == 0 else float(boot.std(ddof=1))
    return rmse(theoretical, empirical), sd


def ols_slope(x, y) -> float:
    """Least-squares slope of ``y`` on ``x`` (with intercept)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x - x.mean()
    denom = float(dx @ dx)
    return float(dx @ (y - y.mean()) / denom) if denom > 0 else float("nan")


@dataclass
class StudySummary:
    label: str
    rmse_L: float
    sd_L: float
    rmse_gap: float
    sd_gap: float
    slope_L: float
    slope_gap: float
    pairs_L: list = field(default_factory=list)
    pairs_gap: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "horizon": self.label,
            "rmse_L1": self.rmse_L, "sd_L1": self.sd_L,
            "rmse_gap": self.rmse_gap, "sd_gap": self.sd_gap,
            "ols_slope_L1": self.slope_L, "ols_slope_gap": self.slope_gap,
            "pairs_L1": [list(p) for p in self.pairs_L],
            "pairs_gap": [list(p) for p in self.pairs_gap],
        }


def study_summary(reports, gap_group: int = 1, n_boot: int = BOOTSTRAP_RESAMPLES,
                  seed: int = 0) -> StudySummary:
    """Cross-replication RMSE (bootstrap SD) between empirical and theoretical means.

    ``reports`` are the per-replication reports for a single horizon label.
    """
    reports = list(reports)
    if len(reports) < 2:
        raise ValueError("study summary needs at least two replications")
    labels = {r.horizon.label for r in reports}
    if len(labels) != 1:
        raise ValueError(f"reports mix horizons: {sorted(labels)}")
    th_l = [r.theoretical_mean for r in reports]
    em_l = [r.empirical_mean for r in reports]
    th_g = [r.theoretical_gap[gap_group] for r in reports]
    em_g = [r.empirical_gap[gap_group] for r in reports]
    rmse_l, sd_l = bootstrap_rmse(th_l, em_l, n_boot, seed)
    rmse_g, sd_g = bootstrap_rmse(th_g, em_g, n_boot, seed)
    return StudySummary(labels.pop(), rmse_l, sd_l, rmse_g, sd_g,
                        ols_slope(th_l, em_l), ols_slope(th_g, em_g),
                        list(zip(th_l, em_l)), list(zip(th_g, em_g)))
