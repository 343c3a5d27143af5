"""Descriptive statistics, normality, unit-root and rank-correlation tests."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
from scipy import stats as sps

from .validation import check_series

# MacKinnon response-surface coefficients, constant-only ADF regression;
# critical value = b0 + b1/n + b2/n^2 + b3/n^3
_ADF_CRIT = {
    0.01: (-3.43035, -6.5393, -16.786, -79.433),
    0.05: (-2.86154, -2.8903, -4.234, -40.040),
    0.10: (-2.56677, -1.5384, -2.809, 0.0),
}

TABLE1_ROWS = ("Max", "Min", "Mean", "Std. Dev.", "Skew.", "Kurt.", "Jarque-Bera", "ADF")


def stars(pvalue):
    """Significance stars: *** at 1%, ** at 5%, * at 10%."""
    if pvalue is None or not np.isfinite(pvalue):
        return ""
    return "***" if pvalue < 0.01 else "**" if pvalue < 0.05 else "*" if pvalue < 0.10 else ""


@dataclass(frozen=True)
class StatsRow:
    max: float
    min: float
    mean: float
    std: float
    skewness: float
    kurtosis: float
    jb: float
    jb_pvalue: float
    jb_significant: bool
    adf: float
    adf_significant: bool

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ADFResult:
    statistic: float
    lags: int
    nobs: int
    critical_values: dict
    significant_1pct: bool
    significant_5pct: bool

    def __iter__(self):
        # unpacks as (statistic, significant_at_1pct)
        return iter((self.statistic, self.significant_1pct))


@dataclass(frozen=True)
class SpearmanResult:
    rho: float
    pvalue: float
    significant_5pct: bool
    significant_1pct: bool

    def __iter__(self):
        return iter((self.rho, self.significant_5pct, self.significant_1pct))


def moments(x):
    """Mean, sample std, skewness and raw kurtosis (normal = 3)."""
    x = check_series(x)
    mean = x.mean()
    d = x - mean
    m2 = np.mean(d * d)
    std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    if m2 <= 0.0 or m2 < (np.finfo(float).eps * max(abs(mean), 1.0)) ** 2:
        return float(mean), std, math.nan, math.nan
    skew = np.mean(d**3) / m2**1.5
    kurt = np.mean(d**4) / m2**2
    return float(mean), std, float(skew), float(kurt)


def jarque_bera(x):
    """Return (JB, p-value) with JB = n/6 (S^2 + (K-3)^2/4)."""
    x = check_series(x)
    _, _, s, k = moments(x)
    if not np.isfinite(s):
        return math.nan, math.nan
    jb = x.size / 6.0 * (s * s + (k - 3.0) ** 2 / 4.0)
    return float(jb), float(sps.chi2.sf(jb, 2))


def schwert_lags(n):
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def adf_critical_values(nobs):
    return {p: b0 + b1 / nobs + b2 / nobs**2 + b3 / nobs**3 for p, (b0, b1, b2, b3) in _ADF_CRIT.items()}


def adf_test(x, lag_policy="schwert") -> ADFResult:
    """Constant-only augmented Dickey-Fuller test.

    ``lag_policy`` is ``"schwert"`` for floor(12 (n/100)^(1/4)) lags or a
    non-negative integer.
    """
    x = check_series(x, min_length=12)
    n = x.size
    lags = schwert_lags(n) if lag_policy == "schwert" else int(lag_policy)
    if lags < 0:
        raise ValueError("lag order must be non-negative")
    if n <= lags + 10:
        raise ValueError(f"series of length {n} too short for {lags} ADF lags")
    dx = np.diff(x)
    rows = dx.size - lags
    y = dx[lags:]
    cols = [np.ones(rows), x[lags:-1]]
    cols += [dx[lags - i : dx.size - i] for i in range(1, lags + 1)]
    Z = np.column_stack(cols)
    coef, _, rank, _ = np.linalg.lstsq(Z, y, rcond=None)
    if rank < Z.shape[1]:
        raise ValueError("singular ADF regression (constant or degenerate series)")
    resid = y - Z @ coef
    dof = rows - Z.shape[1]
    s2 = resid @ resid / dof
    cov = s2 * np.linalg.inv(Z.T @ Z)
    if not cov[1, 1] > 0:
        raise ValueError("singular ADF regression (zero residual variance)")
    stat = float(coef[1] / math.sqrt(cov[1, 1]))
    crit = adf_critical_values(rows)
    return ADFResult(stat, lags, rows, crit, stat < crit[0.01], stat < crit[0.05])


def describe(x, adf_lags="schwert") -> StatsRow:
    x = check_series(x, min_length=8)
    mean, std, skew, kurt = moments(x)
    jb, jbp = jarque_bera(x)
    try:
        adf = adf_test(x, adf_lags)
        adf_stat, adf_sig = adf.statistic, adf.significant_1pct
    except ValueError:
        adf_stat, adf_sig = math.nan, False
    return StatsRow(
        max=float(x.max()),
        min=float(x.min()),
        mean=mean,
        std=std,
        skewness=skew,
        kurtosis=kurt,
        jb=jb,
        jb_pvalue=jbp,
        jb_significant=bool(np.isfinite(jbp) and jbp < 0.01),
        adf=adf_stat,
        adf_significant=bool(adf_sig),
    )


def spearman(x, y) -> SpearmanResult:
    """Rank correlation with average ranks for ties and a t-approximation test."""
    x = check_series(x, min_length=3, name="x")
    y = check_series(y, min_length=3, name="y")
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} != {y.size}")
    rx = sps.rankdata(x) - (x.size + 1) / 2.0
    ry = sps.rankdata(y) - (y.size + 1) / 2.0
    sxx, syy = rx @ rx, ry @ ry
    if sxx == 0 or syy == 0:
        raise ValueError("zero rank variance")
    rho = float(np.clip(rx @ ry / math.sqrt(sxx * syy), -1.0, 1.0))
    dof = x.size - 2
    if abs(rho) >= 1.0:
        p = 0.0
    elif dof <= 0:
        p = 1.0
    else:
        t = rho * math.sqrt(dof / (1.0 - rho * rho))
        p = float(2.0 * sps.t.sf(abs(t), dof))
    return SpearmanResult(rho, p, p < 0.05, p < 0.01)


def _table(records):
    keys = ("max", "min", "mean", "std", "skewness", "kurtosis", "jb", "adf")
    table = pd.DataFrame({name: [r[k] for k in keys] for name, r in records.items()}, index=list(TABLE1_ROWS))
    table.index.name = "statistic"
    return table


def describe_table(returns: pd.DataFrame, adf_lags="schwert") -> pd.DataFrame:
    """One column per series, rows in the descriptive-statistics layout."""
    return _table(stats_records(returns, adf_lags))


def stats_records(returns: pd.DataFrame, adf_lags="schwert") -> dict:
    return {name: describe(returns[name].to_numpy(dtype=float), adf_lags).as_dict() for name in returns.columns}


def write_stats(returns: pd.DataFrame, csv_path=None, json_path=None, adf_lags="schwert"):
    records = stats_records(returns, adf_lags)
    table = _table(records)
    if csv_path is not None:
        table.to_csv(csv_path, float_format="%.17g")
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(records, fh, indent=2, sort_keys=True, allow_nan=True)
    return table
