"""Synthetic competing-risks populations with known ground truth.

Two causes share a Gompertz shape per subject, so the all-cause time is Gompertz
with the summed scale and the cause label is a Bernoulli draw independent of the
time. Censoring has a constant, covariate-dependent hazard.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import NumericalError, SurvivalDataset

MAX_RESAMPLES = 100

TRUTH_COLUMNS = ("w1", "w2", "ws", "wc", "latent_time", "latent_cause", "censor_time")

# Half-open 0-based covariate slices feeding the scale/shape transforms.
LOW = slice(1, 5)
HIGH = slice(5, 10)


@dataclass(frozen=True)
class SimConfig:
    n: int = 30_000
    p: int = 10
    sigma_k: float = 1.0
    sigma_phi: float = 1.0
    sigma_z: float = 1.0
    group_center: tuple[float, float] = (1.5, 1.5)
    group_prob: float = 0.5
    seed: int = 0
    replications: int = 25

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.p < 10:
            raise ValueError("p must be >= 10: the transforms read covariates 1..9")
        if min(self.sigma_k, self.sigma_phi, self.sigma_z) < 0:
            raise ValueError("standard deviations must be non-negative")
        if not 0.0 <= self.group_prob <= 1.0:
            raise ValueError("group_prob must be a probability")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        object.__setattr__(self, "group_center", tuple(float(c) for c in self.group_center))


@dataclass(frozen=True)
class GompertzParams:
    """Hazard ``scale * exp(shape * t)``."""

    scale: float
    shape: float = 0.0


@dataclass(frozen=True)
class GroupCoefficients:
    kappa1: np.ndarray
    kappa2: np.ndarray
    phi: np.ndarray
    zeta: np.ndarray


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Per-subject latent parameters and draws, aligned with a dataset by row."""

    ids: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    ws: np.ndarray
    wc: np.ndarray
    latent_time: np.ndarray
    latent_cause: np.ndarray
    censor_time: np.ndarray

    def __len__(self):
        return self.w1.shape[0]

    def row(self, i: int) -> "GroundTruth":
        return self.subset([i])

    def subset(self, index) -> "GroundTruth":
        index = np.asarray(index)
        return GroundTruth(*(np.asarray(getattr(self, f))[index]
                             for f in ("ids",) + TRUTH_COLUMNS))

    def observed(self) -> tuple[np.ndarray, np.ndarray]:
        """Observed (time, event): the earlier of latent event and censoring."""
        event_first = self.latent_time <= self.censor_time
        time = np.where(event_first, self.latent_time, self.censor_time)
        event = np.where(event_first, self.latent_cause, 0).astype(int)
        return time, event


# --- Gompertz primitives -------------------------------------------------

def _relative_expm1(x):
    """``expm1(x) / x`` with the removable singularity at 0 filled in."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-10
    safe = np.where(small, 1.0, x)
    with np.errstate(over="ignore"):
        return np.where(small, 1.0 + x / 2, np.expm1(safe) / safe)


def _relative_log1p(x):
    """``log1p(x) / x`` with the removable singularity at 0 filled in."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-10
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x / 2, np.log1p(safe) / safe)


def _unwrap(a):
    return float(a) if np.ndim(a) == 0 else a


def gompertz_cumhaz(scale, shape, t):
    """Cumulative hazard ``scale * (exp(shape*t) - 1) / shape`` (``scale*t`` at shape 0)."""
    scale, shape, t = (np.asarray(v, dtype=float) for v in (scale, shape, t))
    return _unwrap(scale * t * _relative_expm1(shape * t))


def gompertz_cdf(params: GompertzParams, t):
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    return _unwrap(-np.expm1(-np.asarray(gompertz_cumhaz(params.scale, params.shape, t))))


def gompertz_pdf(params: GompertzParams, t):
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    t = np.asarray(t, dtype=float)
    h = gompertz_cumhaz(params.scale, params.shape, t)
    with np.errstate(over="ignore", invalid="ignore"):
        log_pdf = np.log(params.scale) + params.shape * t - h
    return _unwrap(np.exp(log_pdf))


def inverse_cumhaz(scale, shape, target):
    """Time ``T`` with ``H(T) = target`` for Gompertz(scale, shape); vectorised."""
    scale, shape, target = (np.asarray(v, dtype=float) for v in (scale, shape, target))
    if np.any(scale <= 0):
        raise NumericalError("degenerate hazard: scale must be positive")
    base = target / scale
    return _unwrap(base * _relative_log1p(shape * base))


def sample_gompertz(params: GompertzParams, u):
    """Inverse-cumulative-hazard draw: solves ``H(T) = -ln(u)``."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("u must lie in (0, 1)")
    if params.scale <= 0:
        raise NumericalError("degenerate hazard: scale must be positive")
    return inverse_cumhaz(params.scale, params.shape, -np.log(u))


# --- generator -----------------------------------------------------------

def replication_rng(seed: int, replication_index: int) -> np.random.Generator:
    """Independent stream keyed by (seed, replication index)."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replication_index),))
    return np.random.Generator(np.random.PCG64(seq))


def make_coefficients(config: SimConfig, rng: np.random.Generator) -> dict[int, GroupCoefficients]:
    """Group-specific coefficient draws; ``zeta`` is shared across groups."""
    p = config.p
    zeta = rng.normal(0.0, config.sigma_z, size=HIGH.stop - HIGH.start)
    out = {}
    for g in (0, 1):
        out[g] = GroupCoefficients(
            kappa1=rng.normal(0.0, config.sigma_k, size=p),
            kappa2=rng.normal(0.0, config.sigma_k, size=p),
            phi=rng.normal(0.0, config.sigma_phi, size=HIGH.stop - HIGH.start),
            zeta=zeta,
        )
    return out


def gen_covariates(config: SimConfig, rng: np.random.Generator, n: int | None = None):
    """Return ``(groups, X)``; group 1 is centred at ``+c`` and group 0 at ``-c``
    on covariates 0 and 1, all other covariates are standard normal."""
    n = config.n if n is None else n
    groups = (rng.random(n) < config.group_prob).astype(int)
    x = rng.standard_normal((n, config.p))
    center = np.asarray(config.group_center)
    x[:, :2] += np.where(groups[:, None] == 1, center, -center)
    return groups, x


def transforms(x, coeffs: GroupCoefficients):
    """Map covariates to ``(w1, w2, ws, wc)``: cause scales, shared shape, censoring rate.

    Accepts a single vector or an ``(n, p)`` matrix.
    """
    x = np.asarray(x, dtype=float)
    k1, k2 = np.asarray(coeffs.kappa1), np.asarray(coeffs.kappa2)
    lo, hi = x[..., LOW], x[..., HIGH]
    w1 = np.abs((hi @ k1[HIGH]) ** 2 + lo @ k1[LOW])
    w2 = np.abs((lo @ k2[LOW]) ** 2 + hi @ k2[HIGH])
    ws = np.abs(hi @ np.asarray(coeffs.phi))
    wc = (hi @ np.asarray(coeffs.zeta)) ** 2
    return tuple(_unwrap(w) for w in (w1, w2, ws, wc))


def gen_events(w1, w2, ws, rng: np.random.Generator):
    """Latent first-event time and cause (vectorised over subjects)."""
    w1, w2, ws = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (w1, w2, ws))
    total = w1 + w2
    if np.any(total <= 0):
        raise NumericalError("degenerate subject: w1 + w2 = 0")
    u = 1.0 - rng.random(total.shape)  # (0, 1]
    times = inverse_cumhaz(total, ws, -np.log(u))
    cause = np.where(rng.random(total.shape) * total < w1, 1, 2)
    return np.atleast_1d(times), cause


def censoring_time(wc, u):
    """Inverse draw ``-ln(u) / wc`` from a constant hazard; ``wc == 0`` gives ``inf``."""
    wc = np.asarray(wc, dtype=float)
    if np.any(wc < 0):
        raise ValueError("censoring rate must be non-negative")
    e = -np.log(np.asarray(u, dtype=float))
    return _unwrap(np.where(wc > 0, e / np.where(wc > 0, wc, 1.0), np.inf))


def gen_censoring(wc, rng: np.random.Generator):
    """Censoring times under constant hazard ``wc`` (vectorised over subjects)."""
    wc = np.atleast_1d(np.asarray(wc, dtype=float))
    return np.atleast_1d(censoring_time(wc, 1.0 - rng.random(wc.shape)))


def _subject_transforms(x, groups, coeffs):
    w = np.empty((4, x.shape[0]))
    for g, c in coeffs.items():
        mask = groups == g
        if mask.any():
            w[:, mask] = np.vstack(transforms(x[mask], c))
    return w


def generate_replication(config: SimConfig, replication_index: int = 0):
    """Draw one synthetic population; returns ``(SurvivalDataset, GroundTruth)``.

    Deterministic in ``(config.seed, replication_index)``. Subjects with no event
    hazard have their covariates redrawn (at most ``MAX_RESAMPLES`` times).
    """
    rng = replication_rng(config.seed, replication_index)
    coeffs = make_coefficients(config, rng)
    groups, x = gen_covariates(config, rng)
    w1, w2, ws, wc = _subject_transforms(x, groups, coeffs)
    for _ in range(MAX_RESAMPLES):
        bad = np.flatnonzero(w1 + w2 <= 0)
        if bad.size == 0:
            break
        g_new, x_new = gen_covariates(config, rng, n=bad.size)
        groups[bad], x[bad] = g_new, x_new
        w1[bad], w2[bad], ws[bad], wc[bad] = _subject_transforms(x_new, g_new, coeffs)
    else:
        if np.any(w1 + w2 <= 0):
            raise NumericalError(
                f"degenerate subject: w1 + w2 = 0 after {MAX_RESAMPLES} resamples")

    latent_time, latent_cause = gen_events(w1, w2, ws, rng)
    censor_time = gen_censoring(wc, rng)
    width = len(str(config.n - 1))
    ids = np.array([f"{i:0{width}d}" for i in range(config.n)])
    truth = GroundTruth(ids, w1, w2, ws, wc, latent_time, latent_cause, censor_time)
    time, event = truth.observed()
    data = SurvivalDataset(ids, x, groups, time, event, n_risks=2)
    return data, truth


# --- closed-form truth ---------------------------------------------------

def _weights(truth, cause):
    if cause not in (1, 2):
        raise ValueError("cause must be 1 or 2")
    return truth.w1 if cause == 1 else truth.w2


def _times(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    return t


def true_cif(truth: GroundTruth, cause: int, t):
    """Cumulative incidence ``P(T' < t, D' = cause)`` per subject."""
    t = _times(t)
    w = np.asarray(_weights(truth, cause), dtype=float)
    total = np.asarray(truth.w1, dtype=float) + np.asarray(truth.w2, dtype=float)
    h_all = gompertz_cumhaz(total, truth.ws, t)
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(total > 0, w / np.where(total > 0, total, 1.0), 0.0)
    return _unwrap(share * -np.expm1(-np.asarray(h_all)))


def true_marginal(truth: GroundTruth, cause: int, t):
    """Latent-time CDF ``P(T_cause < t)`` under the cause-specific hazard alone."""
    t = _times(t)
    w = np.asarray(_weights(truth, cause), dtype=float)
    return _unwrap(-np.expm1(-np.asarray(gompertz_cumhaz(w, truth.ws, t))))


def true_survival(truth: GroundTruth, t):
    """All-cause event-free probability ``P(T' >= t)``."""
    t = _times(t)
    total = np.asarray(truth.w1, dtype=float) + np.asarray(truth.w2, dtype=float)
    return _unwrap(np.exp(-np.asarray(gompertz_cumhaz(total, truth.ws, t))))


def truth_from_params(w1, w2, ws, wc=0.0) -> GroundTruth:
    """Ground-truth rows from bare hazard parameters (no latent draws)."""
    w1, w2, ws, wc = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float))
                                           for v in (w1, w2, ws, wc)))
    n = w1.shape[0]
    nan = np.full(n, np.nan)
    return GroundTruth(np.arange(n).astype(str), w1.copy(), w2.copy(), ws.copy(), wc.copy(),
                       nan, np.zeros(n, dtype=int), nan.copy())
