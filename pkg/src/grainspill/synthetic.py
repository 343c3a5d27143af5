"""Seeded synthetic price and factor panels shaped like the grain data."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

GRAINS = {"W": "Wheat", "M": "Maize", "S": "Soybean", "R": "Rice"}
MARKETS = {"F": "Futures", "S": "Spot"}
SERIES = tuple(g + m for g in GRAINS for m in MARKETS)
DAILY_FACTORS = ("BDI", "GPR")
MONTHLY_FACTORS = ("ARMI", "FPI", "EPI", "EPU", "CPU", "GND")
ANNUAL_FACTORS = ("PROD", "IMP", "CONS", "ES")

FIXTURE_CONFIG = """\
[data]
prices = prices.csv
factors = factors_daily.csv:daily, factors_monthly.csv:monthly, factors_annual.csv:annual

[decompose]
ensemble = {ensemble}
noise = 0.2

[reconstruct]
k = 3
scale = log
restarts = 10

[connect]
mode = r2
window = 252
step = {step}

[network]
threshold = 0

[forest]
n_estimators = 10, 30
max_depth = 4, 8
max_features = sqrt
min_leaf = 2
ratio = 0.8
split = random
cv = 3

[run]
seed = {seed}
output = out
"""


def _ar1(rng, n, phi, scale=1.0):
    e = rng.standard_normal(n) * scale
    out = np.empty(n)
    out[0] = e[0] / np.sqrt(1 - phi * phi)
    for t in range(1, n):
        out[t] = phi * out[t - 1] + e[t]
    return out


def simulate_returns(T=3000, seed=0) -> np.ndarray:
    """(T, 8) percent returns: shared global, grain and slow components with stochastic volatility."""
    rng = np.random.default_rng(seed)
    vol = np.exp(0.35 * _ar1(rng, T, 0.98, np.sqrt(1 - 0.98**2)))
    glob = rng.standard_normal(T)
    slow = _ar1(rng, T, 0.97, 0.25)
    out = np.empty((T, len(SERIES)))
    loadings = {"W": 0.6, "M": 0.7, "S": 0.7, "R": 0.1}
    for gi, g in enumerate(GRAINS):
        grain = rng.standard_normal(T)
        grain_slow = _ar1(rng, T, 0.95, 0.3)
        for mi, m in enumerate(MARKETS):
            idio = rng.standard_normal(T)
            scale = 1.6 if m == "F" else 0.9
            base = loadings[g] * glob + 0.8 * grain + 0.6 * idio
            trend = loadings[g] * slow + 0.5 * grain_slow
            out[:, gi * 2 + mi] = scale * vol * base + 0.3 * trend
    return out


def simulate_prices(T=3000, seed=0, start="2000-01-03") -> pd.DataFrame:
    r = simulate_returns(T, seed)
    dates = pd.bdate_range(start, periods=T + 1, name="date")
    logp = np.vstack([np.zeros(len(SERIES)), np.cumsum(r / 100.0, axis=0)]) + np.log(100.0)
    return pd.DataFrame(np.exp(logp), index=dates, columns=list(SERIES))


def simulate_factors(dates: pd.DatetimeIndex, seed=0):
    rng = np.random.default_rng([seed, 7])
    daily = pd.DataFrame(
        {
            "BDI": 1500.0 * np.exp(np.cumsum(0.02 * rng.standard_normal(len(dates)))),
            "GPR": 100.0 + 20.0 * _ar1(rng, len(dates), 0.99, np.sqrt(1 - 0.99**2)),
        },
        index=dates,
    )
    months = pd.date_range(dates[0] - pd.offsets.MonthBegin(1), dates[-1], freq="MS", name="date")
    monthly = pd.DataFrame(
        {n: 100.0 + 10.0 * _ar1(rng, len(months), 0.9, np.sqrt(1 - 0.81)) for n in MONTHLY_FACTORS},
        index=months,
    )
    years = pd.date_range(f"{dates[0].year}-01-01", dates[-1], freq="YS", name="date")
    annual = pd.DataFrame(
        {n: 1000.0 + 50.0 * np.cumsum(rng.standard_normal(len(years))) for n in ANNUAL_FACTORS},
        index=years,
    )
    return daily, monthly, annual


def write_fixture(directory, T=3000, seed=0, ensemble=25, step=5) -> Path:
    """Write prices, factor CSVs and a run config; return the config path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    prices = simulate_prices(T, seed)
    daily, monthly, annual = simulate_factors(prices.index, seed)
    fmt = "%.10f"
    prices.to_csv(d / "prices.csv", float_format=fmt, date_format="%Y-%m-%d")
    daily.to_csv(d / "factors_daily.csv", float_format=fmt, date_format="%Y-%m-%d")
    monthly.to_csv(d / "factors_monthly.csv", float_format=fmt, date_format="%Y-%m-%d")
    annual.to_csv(d / "factors_annual.csv", float_format=fmt, date_format="%Y-%m-%d")
    cfg = d / "config.ini"
    cfg.write_text(FIXTURE_CONFIG.format(ensemble=ensemble, step=step, seed=seed), encoding="utf-8")
    return cfg
