"""Per-mode measures, run-length Gaussian mixtures and timescale reconstruction."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from .emd import IMFSet, find_extrema
from .stats import spearman, stars
from .validation import check_series

logger = logging.getLogger(__name__)

TIMESCALES = ("STC", "MTC", "LTC")
_LOG_2PI = math.log(2.0 * math.pi)


def mean_period(mode) -> float:
    """Samples per local maximum; NaN when the mode has no maximum."""
    x = check_series(mode, name="mode")
    n = find_extrema(x)[0].size if x.size >= 3 else 0
    return x.size / n if n else math.nan


def run_length_number(mode) -> int:
    """Number of maximal same-sign runs of ``mode - mean(mode)``.

    Values exactly at the mean carry the sign of the preceding sample.
    """
    x = check_series(mode, name="mode")
    s = np.sign(x - x.mean())
    nz = np.flatnonzero(s)
    if nz.size == 0:
        return 1
    # leading zeros join the first signed run
    filled = s[nz[np.maximum(np.searchsorted(nz, np.arange(x.size), side="right") - 1, 0)]]
    return int(1 + np.count_nonzero(filled[1:] != filled[:-1]))


def variance_share(mode, original) -> float:
    m = check_series(mode, name="mode")
    x = check_series(original, name="original")
    if m.size != x.size:
        raise ValueError(f"length mismatch: {m.size} != {x.size}")
    v = np.var(x)
    if v <= 0:
        raise ValueError("original series has zero variance")
    return float(np.var(m) / v)


@dataclass(frozen=True)
class ModeMeasures:
    """Measures of every mode and the residue of one decomposition."""

    names: list
    mean_period: np.ndarray
    correlation: np.ndarray
    pvalue: np.ndarray
    variance_share: np.ndarray
    run_length: np.ndarray

    def to_frame(self, groups=None) -> pd.DataFrame:
        n = len(self.names)
        frame = pd.DataFrame(
            {
                "mean_period": self.mean_period,
                "correlation": self.correlation,
                "significance": [stars(p) for p in self.pvalue],
                "importance_pct": 100.0 * self.variance_share,
                "run_length": self.run_length.astype(float),
                "group": list(groups) + [""] * (n - len(groups)) if groups is not None else [""] * n,
            },
            index=pd.Index(self.names, name="mode"),
        )
        # the residue has no mean period or run-length entry
        frame.loc["Residue", ["mean_period", "run_length"]] = math.nan
        return frame


def mode_measures(imfset: IMFSet, original) -> ModeMeasures:
    x = check_series(original, min_length=imfset.length, name="original")
    rows = list(imfset.modes) + [imfset.residue]
    names = [f"IMF{i + 1}" for i in range(imfset.n_modes)] + ["Residue"]
    rho, pv = [], []
    for r in rows:
        try:
            res = spearman(r, x)
            rho.append(res.rho)
            pv.append(res.pvalue)
        except ValueError:
            rho.append(math.nan)
            pv.append(math.nan)
    return ModeMeasures(
        names=names,
        mean_period=np.array([mean_period(r) for r in rows]),
        correlation=np.array(rho),
        pvalue=np.array(pv),
        variance_share=np.array([variance_share(r, x) for r in rows]),
        run_length=np.array([run_length_number(r) for r in rows], dtype=int),
    )


# -- one-dimensional Gaussian mixture ---------------------------------------


def _log_density(x, weights, means, variances):
    # (n, k) log of weight_j * N(x_i | mean_j, var_j)
    d = x[:, None] - means[None, :]
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    return logw - 0.5 * (_LOG_2PI + np.log(variances) + d * d / variances)


def _kmeanspp(x, k, rng):
    centers = [x[rng.integers(x.size)]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(x.size)])
        else:
            centers.append(x[rng.choice(x.size, p=d2 / total)])
    return np.sort(np.array(centers))


def _hard_init(x, centers, floor):
    lab = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
    k = centers.size
    w = np.array([np.mean(lab == j) for j in range(k)])
    mu = centers.astype(float).copy()
    var = np.full(k, max(np.var(x), floor))
    for j in range(k):
        members = x[lab == j]
        if members.size:
            mu[j] = members.mean()
            var[j] = max(members.var(), floor)
    w = np.where(w > 0, w, 1.0 / x.size)
    return w / w.sum(), mu, var


def _em(x, weights, means, variances, floor, tol, max_iter):
    history = []
    for _ in range(max_iter):
        logp = _log_density(x, weights, means, variances)
        norm = logsumexp(logp, axis=1)
        ll = float(norm.sum())
        resp = np.exp(logp - norm[:, None])
        history.append(ll)
        if len(history) > 1 and history[-1] - history[-2] < tol:
            break
        nk = resp.sum(axis=0)
        live = nk > 0
        weights = nk / x.size
        means = np.where(live, (resp * x[:, None]).sum(axis=0) / np.where(live, nk, 1.0), means)
        d = x[:, None] - means[None, :]
        variances = np.where(live, (resp * d * d).sum(axis=0) / np.where(live, nk, 1.0), variances)
        variances = np.maximum(variances, floor)
    else:
        logp = _log_density(x, weights, means, variances)
        norm = logsumexp(logp, axis=1)
        history.append(float(norm.sum()))
        resp = np.exp(logp - norm[:, None])
    return weights, means, variances, resp, history


class GaussianMixture1D(BaseEstimator):
    """Maximum-likelihood mixture of ``n_components`` univariate Gaussians.

    The best of ``n_init`` EM runs is kept. Run 0 starts from a quantile
    partition, later runs from seeded k-means++ centers. Variances are
    floored at ``reg_variance * var(values)``.
    """

    def __init__(self, n_components=3, n_init=10, tol=1e-10, max_iter=500, reg_variance=1e-6, random_state=0):
        self.n_components = n_components
        self.n_init = n_init
        self.tol = tol
        self.max_iter = max_iter
        self.reg_variance = reg_variance
        self.random_state = random_state

    def fit(self, X, y=None):
        x = check_series(X, name="values")
        k = int(self.n_components)
        if k < 1:
            raise ValueError("n_components must be at least 1")
        if k > x.size:
            raise ValueError(f"n_components={k} exceeds the number of values ({x.size})")
        spread = np.var(x)
        floor = self.reg_variance * spread if spread > 0 else self.reg_variance
        rng = np.random.default_rng(self.random_state)
        best = None
        for run in range(max(1, int(self.n_init))):
            if run == 0:
                centers = np.quantile(x, (np.arange(k) + 0.5) / k)
            else:
                centers = _kmeanspp(x, k, rng)
            fit = _em(x, *_hard_init(x, centers, floor), floor, self.tol, self.max_iter)
            if best is None or fit[4][-1] > best[4][-1] + 1e-12:
                best = fit
        w, mu, var, resp, hist = best
        order = np.argsort(mu, kind="stable")
        self.weights_ = w[order]
        self.means_ = mu[order]
        self.variances_ = var[order]
        self.responsibilities_ = resp[:, order]
        self.log_likelihood_ = hist[-1]
        self.log_likelihood_history_ = np.array(hist)
        self.variance_floor_ = floor
        return self

    def predict_proba(self, X):
        x = check_series(X, name="values")
        logp = _log_density(x, self.weights_, self.means_, self.variances_)
        return np.exp(logp - logsumexp(logp, axis=1)[:, None])

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def score(self, X, y=None):
        x = check_series(X, name="values")
        return float(logsumexp(_log_density(x, self.weights_, self.means_, self.variances_), axis=1).mean())


def gmm_fit_1d(values, k=3, restarts=10, seed=0) -> GaussianMixture1D:
    return GaussianMixture1D(n_components=k, n_init=restarts, random_state=seed).fit(values)


# -- components ---------------------------------------------------------------


def component_names(k):
    return list(TIMESCALES) if k == 3 else [f"C{j + 1}" for j in range(k)]


@dataclass(frozen=True)
class ComponentSet:
    """Timescale components of one series with their mode membership."""

    components: dict
    membership: list
    residue: np.ndarray
    residue_in_last: bool
    method: str = "gmm"
    run_lengths: np.ndarray = field(default=None)

    @property
    def names(self):
        return list(self.components)

    def __getitem__(self, name):
        return self.components[name]

    def total(self):
        out = np.sum(list(self.components.values()), axis=0)
        return out if self.residue_in_last else out + self.residue

    def to_frame(self, dates=None) -> pd.DataFrame:
        frame = pd.DataFrame(self.components)
        if dates is not None:
            frame.index = pd.DatetimeIndex(dates, name="date")
        else:
            frame.index.name = "t"
        return frame

    def to_csv(self, path, dates=None):
        self.to_frame(dates).to_csv(path, float_format="%.17g")


def _contiguous(labels, k):
    # boundary g is the first mode whose label reaches group g
    n = labels.size
    bounds = []
    for g in range(1, k):
        hit = np.flatnonzero(labels >= g)
        bounds.append(hit[0] if hit.size else n)
    bounds = np.maximum.accumulate(np.array(bounds, dtype=int)) if bounds else np.array([], dtype=int)
    return np.searchsorted(bounds, np.arange(n), side="right")


def _quantile_groups(v, k):
    # rank modes by descending value and cut into k near-equal contiguous blocks
    order = np.argsort(-v, kind="stable")
    groups = np.empty(v.size, dtype=int)
    groups[order] = np.minimum((np.arange(v.size) * k) // v.size, k - 1)
    return groups


def classify_run_lengths(run_lengths, k=3, scale="log", restarts=10, seed=0):
    """Group indices (0 = shortest timescale) and the method used."""
    rl = np.asarray(run_lengths, dtype=float)
    if rl.ndim != 1 or rl.size == 0:
        raise ValueError("need a nonempty 1-D run-length vector")
    if k > rl.size:
        raise ValueError(f"k={k} exceeds the number of modes ({rl.size})")
    if scale == "log":
        v = np.log(rl)
    elif scale == "raw":
        v = rl.copy()
    else:
        raise ValueError(f"unknown scale {scale!r}; expected 'log' or 'raw'")
    if k == 1:
        return np.zeros(rl.size, dtype=int), "gmm"
    gmm = gmm_fit_1d(v, k=k, restarts=restarts, seed=seed)
    # means sorted ascending, so larger cluster index = higher run-length
    rank = (k - 1) - np.argmax(gmm.responsibilities_, axis=1)
    groups = _contiguous(rank, k)
    if np.unique(groups).size < k:
        logger.warning("degenerate run-length clustering; using quantile thresholds")
        return _contiguous(_quantile_groups(v, k), k), "quantile"
    return groups, "gmm"


def classify_components(imfset: IMFSet, k=3, scale="log", restarts=10, seed=0, residue_to_last=True) -> ComponentSet:
    """Sum clustered modes into ``k`` timescale components.

    With ``residue_to_last`` the residue joins the last component when
    ``k > 1``; a single component is always the sum of the modes.
    """
    if imfset.n_modes < k:
        raise ValueError(f"decomposition has {imfset.n_modes} modes, fewer than k={k}")
    rl = np.array([run_length_number(m) for m in imfset.modes])
    groups, method = classify_run_lengths(rl, k=k, scale=scale, restarts=restarts, seed=seed)
    names = component_names(k)
    comps = {}
    for g, name in enumerate(names):
        members = imfset.modes[groups == g]
        comps[name] = members.sum(axis=0) if members.size else np.zeros(imfset.length)
    residue_to_last = bool(residue_to_last) and k > 1
    if residue_to_last:
        comps[names[-1]] = comps[names[-1]] + imfset.residue
    return ComponentSet(
        components=comps,
        membership=[names[g] for g in groups],
        residue=imfset.residue.copy(),
        residue_in_last=residue_to_last,
        method=method,
        run_lengths=rl,
    )


def is_weakly_decreasing(values):
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) <= 0))
