"""Local randomization inference near the cutoff.

Inside a window W around the cutoff, treatment assignment is modeled as
a randomized experiment: fixed-margins (uniform over assignments with
the observed number treated) or Bernoulli coin flips.  This module
provides data-driven window selection via covariate balance, the
difference-in-means estimator with framework-specific weights,
Fisherian sharp-null permutation p-values (exhaustive when the
assignment space is small, Monte Carlo otherwise), test-inversion
confidence intervals, and Neyman/super-population large-sample
intervals.

Permutation statistics are computed from per-assignment subset sums, and
the observed assignment's statistic goes through the identical code
path, so exhaustive p-values are exact rationals and ties at the
observed value count as extreme by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, islice
from math import comb

import numpy as np

from .errors import (
    EmptyGroup,
    MissingTreatmentColumn,
    NoCovariates,
    NoFeasibleWindow,
    TooFewObservations,
    WeakFirstStage,
)
from .rng import substream
from .sample import RdSample

WEAK_FIRST_STAGE_THRESHOLD = 0.05

FRAMEWORKS = ("fisher", "neyman", "superpop")


# --------------------------------------------------------------------
# Windows and assignment models
# --------------------------------------------------------------------


@dataclass(frozen=True)
class Window:
    """Estimation window [lower, upper] containing the cutoff."""

    lower: float
    upper: float
    n_w: int
    n_plus: int
    n_minus: int


@dataclass(frozen=True)
class FixedMargins:
    """Uniform distribution over assignments with the observed margins."""


@dataclass(frozen=True)
class Bernoulli:
    """Independent coin-flip assignment with known probability."""

    prob: float

    def __post_init__(self):
        if not 0.0 < self.prob < 1.0:
            raise ValueError("assignment probability must be in (0, 1)")


def make_window(sample: RdSample, w_left: float,
                w_right: float | None = None) -> Window:
    """Window [c - w_left, c + w_right] on the (centered) score."""
    if w_right is None:
        w_right = w_left
    if w_left < 0 or w_right < 0 or (w_left == 0 and w_right == 0):
        raise ValueError("window half-widths must be non-negative, not both zero")
    xc = sample.centered_score()
    inside = (xc >= -w_left) & (xc <= w_right)
    plus = inside & (xc >= 0)
    c = sample.cutoff
    return Window(lower=float(c - w_left), upper=float(c + w_right),
                  n_w=int(inside.sum()), n_plus=int(plus.sum()),
                  n_minus=int(inside.sum() - plus.sum()))


def window_mask(sample: RdSample, window: Window) -> np.ndarray:
    xc = sample.centered_score()
    c = sample.cutoff
    return (xc >= window.lower - c) & (xc <= window.upper - c)


def _window_arrays(sample: RdSample, window: Window, outcome=None):
    mask = window_mask(sample, window)
    xc = sample.centered_score()[mask]
    t = (xc >= 0).astype(np.int8)
    y = (sample.outcome if outcome is None else np.asarray(outcome, float))[mask]
    d = None if sample.received is None else sample.received[mask].astype(float)
    return y, t, d


# --------------------------------------------------------------------
# Difference in means with framework weights
# --------------------------------------------------------------------


@dataclass(frozen=True)
class LocRandEstimate:
    """Window-level difference-in-means (sharp) or ratio (fuzzy)."""

    tau_hat: float
    ybar_plus: float
    ybar_minus: float
    framework: str
    dbar_plus: float | None = None
    dbar_minus: float | None = None


def _framework_means(values, t, model, framework):
    """Side means (1/N) sum omega_i/P * T_i * values_i per the framework.

    Fixed-margins and super-population weights both reduce to plain
    group means; Bernoulli under the Neyman/Fisher frameworks gives the
    Horvitz-Thompson form with the known probability.
    """
    n = values.shape[0]
    plus = t == 1
    n_plus = int(plus.sum())
    n_minus = n - n_plus
    if n_plus == 0 or n_minus == 0:
        raise EmptyGroup(
            f"window has {n_plus} treated and {n_minus} control units")
    if framework not in FRAMEWORKS:
        raise ValueError(f"unknown framework {framework!r}")
    if isinstance(model, Bernoulli) and framework in ("fisher", "neyman"):
        p = model.prob
        return (float(values[plus].sum() / (n * p)),
                float(values[~plus].sum() / (n * (1.0 - p))))
    return float(values[plus].mean()), float(values[~plus].mean())


def diff_in_means(sample: RdSample, window: Window,
                  model=FixedMargins(), framework: str = "neyman",
                  outcome=None) -> LocRandEstimate:
    """Sharp window estimator: weighted side means of the outcome."""
    y, t, d = _window_arrays(sample, window, outcome)
    ybar_plus, ybar_minus = _framework_means(y, t, model, framework)
    dbar_plus = dbar_minus = None
    if d is not None:
        dbar_plus, dbar_minus = _framework_means(d, t, model, framework)
    return LocRandEstimate(tau_hat=ybar_plus - ybar_minus,
                           ybar_plus=ybar_plus, ybar_minus=ybar_minus,
                           framework=framework, dbar_plus=dbar_plus,
                           dbar_minus=dbar_minus)


def fuzzy_locrand(sample: RdSample, window: Window,
                  model=FixedMargins(), framework: str = "neyman",
                  ) -> LocRandEstimate:
    """Fuzzy window estimator: outcome contrast over receipt contrast."""
    if sample.received is None:
        raise MissingTreatmentColumn(
            "fuzzy estimation requires a received-treatment column")
    est = diff_in_means(sample, window, model, framework)
    first_stage = est.dbar_plus - est.dbar_minus
    if abs(first_stage) < WEAK_FIRST_STAGE_THRESHOLD:
        raise WeakFirstStage(
            f"receipt contrast {first_stage:.4g} is below the "
            f"{WEAK_FIRST_STAGE_THRESHOLD} threshold")
    return LocRandEstimate(
        tau_hat=(est.ybar_plus - est.ybar_minus) / first_stage,
        ybar_plus=est.ybar_plus, ybar_minus=est.ybar_minus,
        framework=framework, dbar_plus=est.dbar_plus,
        dbar_minus=est.dbar_minus)


# --------------------------------------------------------------------
# Fisherian permutation inference
# --------------------------------------------------------------------


@dataclass(frozen=True)
class FisherResult:
    """Sharp-null permutation test output."""

    p_value: float
    exact: bool
    draws: int
    statistic_observed: float
    statistic: str
    extreme_count: float
    total: int
    ci: tuple[float, float] | None = None


@dataclass(frozen=True)
class _Ensemble:
    """Per-assignment subset aggregates over the permutation ensemble.

    For each assignment r: n1[r] treated units, sY[r] = sum of outcomes
    over the treated set, m[r] = overlap with the observed treated set,
    sTY[r] = sum of T_obs*Y over the treated set, sY2[r] = sum of Y^2.
    The observed assignment occupies a dedicated row computed by the
    same vectorized expressions, keeping float results bit-comparable.
    ``weights`` is None for uniform (fixed-margins) ensembles.
    """

    n1: np.ndarray
    sY: np.ndarray
    sY2: np.ndarray
    m: np.ndarray
    sTY: np.ndarray
    obs: dict
    weights: np.ndarray | None
    exact: bool
    draws: int
    total: int
    n: int
    tot_y: float
    tot_y2: float
    n_plus_obs: int


def _aggregate_rows(idx, y, t, ty, y2):
    """Subset aggregates for an index matrix of treated sets."""
    return (y[idx].sum(axis=1), t[idx].sum(axis=1),
            ty[idx].sum(axis=1), y2[idx].sum(axis=1))


def _build_ensemble(y, t, model, max_exhaustive, draws, seed) -> _Ensemble:
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    n = y.shape[0]
    n_plus = int(t.sum())
    if n_plus == 0 or n_plus == n:
        raise EmptyGroup(f"window has {n_plus} treated of {n} units")
    ty = t * y
    y2 = y * y
    obs_idx = np.flatnonzero(t == 1)[None, :]
    o_sY, o_m, o_sTY, o_sY2 = _aggregate_rows(obs_idx, y, t, ty, y2)
    obs = {"n1": float(n_plus), "sY": float(o_sY[0]), "m": float(o_m[0]),
           "sTY": float(o_sTY[0]), "sY2": float(o_sY2[0])}

    if isinstance(model, FixedMargins):
        total = comb(n, n_plus)
        if total <= max_exhaustive:
            sY, n1, m, sTY, sY2 = _exhaustive_fixed(y, t, ty, y2, n, n_plus)
            return _Ensemble(n1=n1, sY=sY, sY2=sY2, m=m, sTY=sTY, obs=obs,
                             weights=None, exact=True, draws=0, total=total,
                             n=n, tot_y=float(y.sum()), tot_y2=float(y2.sum()),
                             n_plus_obs=n_plus)
        rng = substream(seed)
        u = rng.random((draws, n))
        idx = np.sort(np.argpartition(u, n_plus - 1, axis=1)[:, :n_plus], axis=1)
        sY, m, sTY, sY2 = _aggregate_rows(idx, y, t, ty, y2)
        n1 = np.full(draws, float(n_plus))
        return _Ensemble(n1=n1, sY=sY, sY2=sY2, m=m, sTY=sTY, obs=obs,
                         weights=None, exact=False, draws=draws, total=draws,
                         n=n, tot_y=float(y.sum()), tot_y2=float(y2.sum()),
                         n_plus_obs=n_plus)

    if isinstance(model, Bernoulli):
        p = model.prob
        if 2 ** n <= max_exhaustive:
            codes = np.arange(1, 2 ** n - 1, dtype=np.int64)
            bits = ((codes[:, None] >> np.arange(n)) & 1).astype(float)
            n1 = bits.sum(axis=1)
            sY = bits @ y
            m = bits @ t
            sTY = bits @ ty
            sY2 = bits @ y2
            weights = p ** n1 * (1.0 - p) ** (n - n1)
            return _Ensemble(n1=n1, sY=sY, sY2=sY2, m=m, sTY=sTY, obs=obs,
                             weights=weights, exact=True, draws=0,
                             total=int(codes.size), n=n, tot_y=float(y.sum()),
                             tot_y2=float(y2.sum()), n_plus_obs=n_plus)
        rng = substream(seed)
        mat = (rng.random((draws, n)) < p).astype(float)
        # Condition on non-degenerate assignments: redraw rows where one
        # group is empty (the statistic is undefined there).
        while True:
            row_n1 = mat.sum(axis=1)
            bad = (row_n1 == 0) | (row_n1 == n)
            if not bad.any():
                break
            mat[bad] = (rng.random((int(bad.sum()), n)) < p).astype(float)
        n1 = mat.sum(axis=1)
        sY = mat @ y
        m = mat @ t
        sTY = mat @ ty
        sY2 = mat @ y2
        return _Ensemble(n1=n1, sY=sY, sY2=sY2, m=m, sTY=sTY, obs=obs,
                         weights=None, exact=False, draws=draws, total=draws,
                         n=n, tot_y=float(y.sum()), tot_y2=float(y2.sum()),
                         n_plus_obs=n_plus)

    raise ValueError(f"unknown assignment model {model!r}")


def _exhaustive_fixed(y, t, ty, y2, n, n_plus, chunk=50000):
    """All C(n, n_plus) treated sets; enumerate the smaller of set or
    complement and flip aggregates when the complement was enumerated."""
    k = min(n_plus, n - n_plus)
    flip = k != n_plus
    it = combinations(range(n), k)
    parts = []
    while True:
        block = list(islice(it, chunk))
        if not block:
            break
        idx = np.asarray(block, dtype=np.intp)
        parts.append(_aggregate_rows(idx, y, t, ty, y2))
    sY = np.concatenate([p[0] for p in parts])
    m = np.concatenate([p[1] for p in parts])
    sTY = np.concatenate([p[2] for p in parts])
    sY2 = np.concatenate([p[3] for p in parts])
    if flip:
        sY = y.sum() - sY
        m = t.sum() - m
        sTY = ty.sum() - sTY
        sY2 = y2.sum() - sY2
    n1 = np.full(sY.shape[0], float(n_plus))
    return sY, n1, m, sTY, sY2


def _statistics(ens: _Ensemble, statistic: str, tau0: float = 0.0):
    """Statistic for every ensemble row and for the observed assignment,
    on outcomes adjusted by tau0 (Y - tau0*T_obs)."""

    def compute(n1, sY, m, sTY, sY2):
        tot_y = ens.tot_y - tau0 * ens.n_plus_obs
        s_plus = sY - tau0 * m
        n0 = ens.n - n1
        mean_p = s_plus / n1
        mean_m = (tot_y - s_plus) / n0
        diff = mean_p - mean_m
        if statistic == "diff_means":
            return diff
        if statistic == "studentized":
            tot_y2 = ens.tot_y2 - 2.0 * tau0 * ens.obs["sTY"] \
                + tau0 * tau0 * ens.n_plus_obs
            s2_plus_sum = sY2 - 2.0 * tau0 * sTY + tau0 * tau0 * m
            s2_minus_sum = tot_y2 - s2_plus_sum
            with np.errstate(invalid="ignore", divide="ignore"):
                var_p = (s2_plus_sum - n1 * mean_p * mean_p) / (n1 - 1.0)
                var_m = (s2_minus_sum - n0 * mean_m * mean_m) / (n0 - 1.0)
                se = np.sqrt(np.maximum(var_p, 0.0) / n1
                             + np.maximum(var_m, 0.0) / n0)
                out = diff / se
            return np.where(se > 0, out,
                            np.where(diff == 0.0, 0.0,
                                     np.sign(diff) * np.inf))
        raise ValueError(f"unknown statistic {statistic!r}")

    stats = compute(ens.n1, ens.sY, ens.m, ens.sTY, ens.sY2)
    obs = compute(np.asarray([ens.obs["n1"]]), np.asarray([ens.obs["sY"]]),
                  np.asarray([ens.obs["m"]]), np.asarray([ens.obs["sTY"]]),
                  np.asarray([ens.obs["sY2"]]))
    return stats, float(obs[0])


def _pvalue_from(ens: _Ensemble, stats, s_obs):
    extreme = np.abs(stats) >= abs(s_obs)
    if ens.exact:
        if ens.weights is None:
            count = float(np.count_nonzero(extreme))
            return count / ens.total, count
        w = ens.weights
        count = float(w[extreme].sum())
        return count / float(w.sum()), count
    count = float(np.count_nonzero(extreme))
    return (count + 1.0) / (ens.draws + 1.0), count


def fisher_pvalue(sample: RdSample, window: Window, model=FixedMargins(),
                  statistic: str = "diff_means",
                  max_exhaustive: int = 200000, draws: int = 9999,
                  seed: int = 0, outcome=None) -> FisherResult:
    """Sharp-null permutation p-value within the window.

    Exhaustive enumeration when the assignment space is at most
    ``max_exhaustive`` (exact, a rational count over the total);
    otherwise Monte Carlo with the add-one estimator
    (count+1)/(draws+1).  Two-sided: assignments with |S| at or beyond
    the observed |S| count as extreme, ties included.
    """
    y, t, _ = _window_arrays(sample, window, outcome)
    if statistic == "studentized" and (window.n_plus < 2 or window.n_minus < 2):
        raise TooFewObservations(
            "studentized statistic needs at least 2 units per group")
    ens = _build_ensemble(y, t, model, max_exhaustive, draws, seed)
    stats, s_obs = _statistics(ens, statistic)
    p, count = _pvalue_from(ens, stats, s_obs)
    return FisherResult(p_value=float(p), exact=ens.exact,
                        draws=ens.draws, statistic_observed=s_obs,
                        statistic=statistic, extreme_count=count,
                        total=ens.total)


@dataclass(frozen=True)
class FisherCi:
    """Test-inversion confidence set under the constant-effect model."""

    lower: float | None
    upper: float | None
    alpha: float
    grid: np.ndarray
    p_values: np.ndarray
    convex: bool
    empty: bool


def fisher_ci(sample: RdSample, window: Window, model=FixedMargins(),
              statistic: str = "diff_means", tau_grid=None,
              alpha: float = 0.05, max_exhaustive: int = 200000,
              draws: int = 9999, seed: int = 0) -> FisherCi:
    """Invert the permutation test over a grid of constant effects.

    For each tau0, outcomes are adjusted to Y - tau0*T and the sharp
    null retested; accepted values (p >= alpha) form the confidence
    set.  The permutation ensemble is built once and reused across the
    grid, so the whole inversion costs one enumeration plus O(grid x
    draws) arithmetic.  A non-interval acceptance region is flagged
    rather than hidden.
    """
    y, t, _ = _window_arrays(sample, window)
    if tau_grid is None:
        est = diff_in_means(sample, window, model, framework="fisher")
        se = _plain_neyman_se(y, t)
        span = 5.0 * se if se > 0 else max(1.0, abs(est.tau_hat))
        tau_grid = np.linspace(est.tau_hat - span, est.tau_hat + span, 201)
    tau_grid = np.asarray(tau_grid, dtype=float)
    ens = _build_ensemble(y, t, model, max_exhaustive, draws, seed)
    pvals = np.empty(tau_grid.size)
    for i, tau0 in enumerate(tau_grid):
        stats, s_obs = _statistics(ens, statistic, tau0=float(tau0))
        pvals[i], _ = _pvalue_from(ens, stats, s_obs)
    accepted = np.flatnonzero(pvals >= alpha)
    if accepted.size == 0:
        return FisherCi(lower=None, upper=None, alpha=alpha, grid=tau_grid,
                        p_values=pvals, convex=True, empty=True)
    convex = bool(np.all(np.diff(accepted) == 1))
    return FisherCi(lower=float(tau_grid[accepted[0]]),
                    upper=float(tau_grid[accepted[-1]]),
                    alpha=alpha, grid=tau_grid, p_values=pvals,
                    convex=convex, empty=False)


def _plain_neyman_se(y, t):
    plus = t == 1
    n_plus = int(plus.sum())
    n_minus = y.shape[0] - n_plus
    if n_plus < 2 or n_minus < 2:
        return 0.0
    var_p = float(np.var(y[plus], ddof=1))
    var_m = float(np.var(y[~plus], ddof=1))
    return float(np.sqrt(var_p / n_plus + var_m / n_minus))


# --------------------------------------------------------------------
# Neyman / super-population large-sample inference
# --------------------------------------------------------------------


@dataclass(frozen=True)
class NeymanResult:
    """Difference in means with a normal-approximation interval."""

    estimate: LocRandEstimate
    se: float
    ci: tuple[float, float]
    alpha: float
    degenerate_variance: bool


def neyman_ci(sample: RdSample, window: Window, framework: str = "neyman",
              alpha: float = 0.05, model=FixedMargins()) -> NeymanResult:
    """tau_hat with the conservative variance s2+/N+ + s2-/N-.

    A zero group variance leaves only the other group's contribution in
    the half-width; the result is flagged rather than rejected.
    """
    from scipy.stats import norm

    y, t, _ = _window_arrays(sample, window)
    plus = t == 1
    n_plus = int(plus.sum())
    n_minus = y.shape[0] - n_plus
    if n_plus < 2 or n_minus < 2:
        raise TooFewObservations(
            f"need at least 2 units per group, got {n_plus} and {n_minus}")
    est = diff_in_means(sample, window, model, framework)
    var_p = float(np.var(y[plus], ddof=1))
    var_m = float(np.var(y[~plus], ddof=1))
    se = float(np.sqrt(var_p / n_plus + var_m / n_minus))
    z = float(norm.ppf(1.0 - alpha / 2.0))
    return NeymanResult(estimate=est, se=se,
                        ci=(est.tau_hat - z * se, est.tau_hat + z * se),
                        alpha=alpha,
                        degenerate_variance=(var_p == 0.0 or var_m == 0.0))


# --------------------------------------------------------------------
# Window selection by covariate balance
# --------------------------------------------------------------------


@dataclass(frozen=True)
class BalanceTraceRow:
    """One candidate's balance evidence (audit record)."""

    w_left: float
    w_right: float
    n_w: int
    n_plus: int
    n_minus: int
    feasible: bool
    p_values: tuple[tuple[str, float], ...]
    min_p: float | None
    passed: bool


@dataclass(frozen=True)
class WindowSelection:
    """Selected window plus the full balance trace."""

    window: Window
    w_left: float
    w_right: float
    alpha: float
    no_balanced_window: bool
    trace: tuple[BalanceTraceRow, ...]


def _as_pair(candidate):
    if isinstance(candidate, (tuple, list)):
        w_left, w_right = candidate
        return float(w_left), float(w_right)
    return float(candidate), float(candidate)


def select_window(sample: RdSample, covariates=None, candidates=None,
                  alpha: float = 0.15, model=FixedMargins(),
                  statistic: str = "diff_means",
                  max_exhaustive: int = 2000, draws: int = 999,
                  seed: int = 0) -> WindowSelection:
    """Pick the largest window with covariate balance at level alpha.

    Candidates are half-widths (or (left, right) pairs) in ascending
    order.  A candidate is feasible when it holds at least 2 units per
    side with non-missing covariate values.  The selected window is the
    largest feasible candidate such that every feasible candidate up to
    and including it has minimum balance p-value >= alpha across the
    covariates.  When even the smallest feasible candidate is
    imbalanced, it is returned flagged ``no_balanced_window`` so the
    caller sees the most defensible window alongside the full trace.
    """
    names = list(covariates) if covariates is not None \
        else sorted(sample.covariates)
    if not names:
        raise NoCovariates("window selection requires at least one covariate")
    for name in names:
        if name not in sample.covariates:
            raise NoCovariates(f"covariate {name!r} not present in sample")
    if candidates is None or len(list(candidates)) == 0:
        raise NoFeasibleWindow("no candidate windows supplied")
    pairs = [_as_pair(cand) for cand in candidates]
    widths = [left + right for left, right in pairs]
    if any(b < a for a, b in zip(widths, widths[1:])):
        raise ValueError("candidate windows must be ascending")

    xc = sample.centered_score()
    trace = []
    feasible_rows = []
    for idx, (w_left, w_right) in enumerate(pairs):
        win = make_window(sample, w_left, w_right)
        inside = (xc >= -w_left) & (xc <= w_right)
        feasible = win.n_plus >= 2 and win.n_minus >= 2
        p_values = []
        if feasible:
            for j, name in enumerate(names):
                z = sample.covariates[name]
                ok = inside & np.isfinite(z)
                t = (xc[ok] >= 0).astype(np.int8)
                if int(t.sum()) < 2 or int((1 - t).sum()) < 2:
                    feasible = False
                    break
                ens = _build_ensemble(z[ok], t, model, max_exhaustive,
                                      draws, int(substream(seed, idx, j)
                                                 .integers(0, 2 ** 31)))
                stats, s_obs = _statistics(ens, statistic)
                p, _ = _pvalue_from(ens, stats, s_obs)
                p_values.append((name, float(p)))
        min_p = min(p for _, p in p_values) if p_values else None
        passed = bool(feasible and min_p is not None and min_p >= alpha)
        row = BalanceTraceRow(w_left=w_left, w_right=w_right, n_w=win.n_w,
                              n_plus=win.n_plus, n_minus=win.n_minus,
                              feasible=feasible,
                              p_values=tuple(p_values), min_p=min_p,
                              passed=passed)
        trace.append(row)
        if feasible:
            feasible_rows.append(row)

    if not feasible_rows:
        raise NoFeasibleWindow(
            "no candidate window holds 2 units per side with covariate data")

    selected = None
    for row in feasible_rows:
        if row.passed:
            selected = row
        else:
            break
    if selected is None:
        fallback = feasible_rows[0]
        return WindowSelection(
            window=make_window(sample, fallback.w_left, fallback.w_right),
            w_left=fallback.w_left, w_right=fallback.w_right, alpha=alpha,
            no_balanced_window=True, trace=tuple(trace))
    return WindowSelection(
        window=make_window(sample, selected.w_left, selected.w_right),
        w_left=selected.w_left, w_right=selected.w_right, alpha=alpha,
        no_balanced_window=False, trace=tuple(trace))
