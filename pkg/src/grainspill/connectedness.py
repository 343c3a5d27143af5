"""VAR/GFEVD and R²-decomposed connectedness tables, static and rolling."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator

from .validation import check_panel

logger = logging.getLogger(__name__)

RIDGE = 1e-10


@dataclass(frozen=True)
class VarModel:
    p: int
    coefs: np.ndarray  # (p, k, k); coefs[l] multiplies y[t-l-1]
    intercept: np.ndarray
    sigma: np.ndarray

    @property
    def k(self):
        return self.sigma.shape[0]


def _lag_matrix(Y, p):
    T = Y.shape[0]
    return np.hstack([Y[p - lag : T - lag] for lag in range(1, p + 1)]) if p else np.empty((T, 0))


def fit_var(Y, p=1) -> VarModel:
    """Equation-by-equation least squares with an intercept."""
    Y = check_panel(Y, min_columns=1)
    T, k = Y.shape
    if p < 0:
        raise ValueError("lag order must be non-negative")
    if T <= k * p + 10:
        raise ValueError(f"need T > k*p + 10 observations, got T={T}, k={k}, p={p}")
    Z = np.hstack([np.ones((T - p, 1)), _lag_matrix(Y, p)])
    target = Y[p:]
    coef, _, rank, _ = np.linalg.lstsq(Z, target, rcond=None)
    if rank < Z.shape[1]:
        raise ValueError("singular VAR regressor matrix")
    resid = target - Z @ coef
    sigma = resid.T @ resid / (Z.shape[0] - Z.shape[1])
    B = coef[1:].reshape(p, k, k).transpose(0, 2, 1) if p else np.zeros((0, k, k))
    return VarModel(p, B, coef[0].copy(), (sigma + sigma.T) / 2.0)


def vma_coeffs(var: VarModel, H) -> np.ndarray:
    """Moving-average matrices A_0..A_{H-1}, A_0 = I."""
    if H < 1:
        raise ValueError("horizon must be at least 1")
    k = var.k
    A = np.zeros((H, k, k))
    A[0] = np.eye(k)
    for h in range(1, H):
        for lag in range(1, min(var.p, h) + 1):
            A[h] += var.coefs[lag - 1] @ A[h - lag]
    return A


def gfevd(var: VarModel, H=10) -> np.ndarray:
    """Unnormalized generalized forecast-error variance decomposition."""
    s = var.sigma
    d = np.diag(s)
    if np.any(d <= 0):
        raise ValueError("residual covariance has a nonpositive diagonal entry")
    A = vma_coeffs(var, H)
    AS = A @ s  # (H, k, k)
    num = np.sum(AS**2, axis=0) / d[None, :]
    den = np.einsum("hij,jk,hik->i", A, s, A)
    return num / den[:, None]


def r2_bivariate(cov) -> np.ndarray:
    c = np.asarray(cov, dtype=float)
    d = np.diag(c)
    if np.any(d <= 0):
        raise ValueError("zero variance in covariance matrix")
    s = np.sqrt(d)
    r = c / np.outer(s, s)
    out = r * r
    np.fill_diagonal(out, 1.0)
    return (out + out.T) / 2.0


def _sym_sqrt(R):
    """Symmetric square root of a (..., m, m) stack of PD matrices."""
    lam, V = np.linalg.eigh(R)
    if np.any(lam < -1e-8):
        raise ValueError("predictor correlation matrix is not positive semidefinite")
    # sign convention: largest-magnitude entry of each eigenvector positive
    idx = np.argmax(np.abs(V), axis=-2)
    sign = np.sign(np.take_along_axis(V, idx[..., None, :], axis=-2))
    V = V * np.where(sign == 0, 1.0, sign)
    # directions with eigenvalue below RIDGE carry no information and are
    # dropped, so collinear predictors give the minimum-norm OLS fit
    keep = lam >= RIDGE
    sq = np.where(keep, np.sqrt(np.maximum(lam, 0.0)), 0.0)
    inv = np.where(keep, 1.0 / np.where(keep, sq, 1.0), 0.0)
    Vt = np.swapaxes(V, -1, -2)
    return (V * sq[..., None, :]) @ Vt, (V * inv[..., None, :]) @ Vt


def genizi_weights(Rxx, ryx):
    """Per-predictor contributions for a (..., m, m) stack; sums to the OLS R²."""
    root, inv_root = _sym_sqrt(np.asarray(Rxx, dtype=float))
    w = np.einsum("...ij,...j->...i", inv_root, np.asarray(ryx, dtype=float))
    return np.einsum("...jm,...m->...j", root**2, w**2)


def genizi_decompose(corr, target) -> np.ndarray:
    """Contributions of every variable to target's R²; the target entry is 0."""
    R = np.asarray(corr, dtype=float)
    k = R.shape[0]
    if R.shape != (k, k):
        raise ValueError("correlation matrix must be square")
    others = np.array([j for j in range(k) if j != target])
    out = np.zeros(k)
    out[others] = genizi_weights(R[np.ix_(others, others)], R[others, target])
    return out


def _correlation(Y):
    Y = Y - Y.mean(axis=0)
    s = np.sqrt(np.sum(Y * Y, axis=0))
    if np.any(s == 0):
        raise ValueError("a series has zero variance")
    Z = Y / s
    R = Z.T @ Z
    np.fill_diagonal(R, 1.0)
    return (R + R.T) / 2.0


def _table_from_corr(R):
    k = R.shape[0]
    G = np.zeros((k, k))
    for i in range(k):
        G[i] = genizi_decompose(R, i)
    return G


def _lagged_design(Y, lags):
    # all variables at lags 0..lags; column l * k + j holds y_j[t - l]
    T = Y.shape[0]
    return np.hstack([Y[lags - l : T - l] for l in range(lags + 1)])


def _lagged_table(Y, lags):
    # k(lags + 1) - 1 predictors per target: every lagged column except the
    # target itself at lag 0; its own-lag share lands on the dropped diagonal
    k = Y.shape[1]
    R = _correlation(_lagged_design(Y, lags))
    G = np.zeros((k, k))
    for i in range(k):
        cols = [l * k + j for l in range(lags + 1) for j in range(k) if (l, j) != (0, i)]
        owner = np.array([c % k for c in cols])
        contrib = genizi_weights(R[np.ix_(cols, cols)], R[cols, i])
        np.add.at(G[i], owner, contrib)
    return G


@dataclass(frozen=True)
class ConnectednessTable:
    """Directional spillover table in percent. ``matrix[i, j]`` is j's share of i."""

    labels: list
    matrix: np.ndarray

    @classmethod
    def from_matrix(cls, labels, share):
        m = 100.0 * np.asarray(share, dtype=float)
        np.fill_diagonal(m, 0.0)
        return cls(list(labels), m)

    @property
    def k(self):
        return len(self.labels)

    @property
    def from_(self):
        return self.matrix.sum(axis=1)

    @property
    def to(self):
        return self.matrix.sum(axis=0)

    @property
    def net(self):
        return self.to - self.from_

    @property
    def npdc(self):
        return self.matrix - self.matrix.T

    @property
    def r2(self):
        return self.from_ / 100.0

    @property
    def tci(self):
        return float(self.from_.mean())

    def check(self, tol=1e-9):
        f = self.from_
        if np.any(f < -tol) or np.any(f > 100.0 + tol):
            raise AssertionError("FROM outside [0, 100]")
        if np.max(np.abs(self.npdc + self.npdc.T), initial=0.0) > tol:
            raise AssertionError("NPDC not antisymmetric")
        if abs(self.net.sum()) > tol:
            raise AssertionError("NET does not sum to zero")
        return True

    def to_frame(self) -> pd.DataFrame:
        """The k x k block with a FROM column and TO / NET rows; TCI in the corner."""
        body = pd.DataFrame(self.matrix, index=self.labels, columns=self.labels)
        body["FROM"] = self.from_
        margins = pd.DataFrame([self.to, self.net], index=["TO", "NET"], columns=self.labels)
        margins["FROM"] = [np.nan, self.tci]
        frame = pd.concat([body, margins])
        frame.index.name = "to_from"
        return frame

    def to_csv(self, path):
        self.to_frame().to_csv(path, float_format="%.17g")

    @classmethod
    def from_frame(cls, frame: pd.DataFrame):
        labels = [c for c in frame.columns if c != "FROM"]
        block = frame.loc[[str(l) for l in labels], labels].to_numpy(dtype=float)
        return cls(labels, block)

    @classmethod
    def read_csv(cls, path):
        return cls.from_frame(pd.read_csv(path, index_col=0, float_precision="round_trip"))

    def matrix_frame(self):
        return pd.DataFrame(self.matrix, index=self.labels, columns=self.labels)


def connectedness_table(panel, labels=None, lags=0, method="r2", horizon=10, var_lags=1) -> ConnectednessTable:
    """Static connectedness of a (T, k) panel.

    ``method="r2"`` uses the R² decomposition with contemporaneous (and
    optionally ``lags`` lagged) predictors. ``method="gfevd"`` uses the
    row-normalized generalized FEVD of a VAR(``var_lags``).
    """
    if isinstance(panel, pd.DataFrame):
        labels = list(panel.columns) if labels is None else labels
    Y = check_panel(panel)
    labels = list(labels) if labels is not None else [f"y{j + 1}" for j in range(Y.shape[1])]
    if method == "r2":
        G = _table_from_corr(_correlation(Y)) if lags == 0 else _lagged_table(Y, lags)
    elif method == "gfevd":
        phi = gfevd(fit_var(Y, var_lags), horizon)
        G = phi / phi.sum(axis=1, keepdims=True)
    else:
        raise ValueError(f"unknown method {method!r}; expected 'r2' or 'gfevd'")
    return ConnectednessTable.from_matrix(labels, G)


@dataclass(frozen=True)
class RollingConnectedness:
    labels: list
    dates: pd.Index
    matrices: np.ndarray  # (n_windows, k, k), percent
    skipped: pd.Index
    window: int

    def __len__(self):
        return len(self.dates)

    def table(self, i) -> ConnectednessTable:
        return ConnectednessTable(self.labels, self.matrices[i])

    def tables(self):
        return [self.table(i) for i in range(len(self))]

    @property
    def tci(self) -> pd.Series:
        return pd.Series(self.matrices.sum(axis=2).mean(axis=1), index=self.dates, name="TCI")

    def series(self, metric):
        m = self.matrices
        data = {
            "FROM": m.sum(axis=2),
            "TO": m.sum(axis=1),
            "NET": m.sum(axis=1) - m.sum(axis=2),
        }[metric]
        return pd.DataFrame(data, index=self.dates, columns=self.labels)

    def to_long_frame(self) -> pd.DataFrame:
        """Long format: date, metric, from, to, value."""
        k = len(self.labels)
        n = len(self.dates)
        dates = np.asarray(self.dates)
        labels = np.array(self.labels, dtype=object)
        parts = [pd.DataFrame({"date": dates, "metric": "TCI", "from": "", "to": "", "value": self.tci.to_numpy()})]
        for metric, frame in (("TO", self.series("TO")), ("FROM", self.series("FROM")), ("NET", self.series("NET"))):
            vals = frame.to_numpy()
            src = np.tile(labels, n) if metric in ("TO", "NET") else np.full(n * k, "", dtype=object)
            dst = np.tile(labels, n) if metric == "FROM" else np.full(n * k, "", dtype=object)
            parts.append(
                pd.DataFrame({"date": np.repeat(dates, k), "metric": metric, "from": src, "to": dst, "value": vals.ravel()})
            )
        npdc = self.matrices - np.swapaxes(self.matrices, 1, 2)
        iu, ju = np.triu_indices(k, 1)
        # NPDC[i, j] > 0 means j transmits to i on net
        parts.append(
            pd.DataFrame(
                {
                    "date": np.repeat(dates, iu.size),
                    "metric": "NPDC",
                    "from": np.tile(labels[ju], n),
                    "to": np.tile(labels[iu], n),
                    "value": npdc[:, iu, ju].ravel(),
                }
            )
        )
        return pd.concat(parts, ignore_index=True)

    def to_csv(self, path):
        frame = self.to_long_frame()
        if isinstance(self.dates, pd.DatetimeIndex):
            frame["date"] = pd.DatetimeIndex(frame["date"]).strftime("%Y-%m-%d")
        frame.to_csv(path, index=False, float_format="%.17g")


def _window_matrices(Y, ends, window):
    k = Y.shape[1]
    corr = np.empty((len(ends), k, k))
    for n, e in enumerate(ends):
        corr[n] = _correlation(Y[e - window + 1 : e + 1])
    G = np.zeros((len(ends), k, k))
    for i in range(k):
        others = np.array([j for j in range(k) if j != i])
        G[:, i, others] = genizi_weights(corr[:, others][:, :, others], corr[:, others, i])
    return 100.0 * G


def rolling_connectedness(
    panel, window=252, step=1, labels=None, dates=None, n_jobs=1, method="r2", horizon=10, var_lags=1
) -> RollingConnectedness:
    """One table per window end, in date order."""
    if isinstance(panel, pd.DataFrame):
        labels = list(panel.columns) if labels is None else labels
        dates = panel.index if dates is None else dates
    Y = check_panel(panel)
    T, k = Y.shape
    if window > T:
        raise ValueError(f"window {window} is longer than the data (T={T})")
    if window < 3 or step < 1:
        raise ValueError("window must be at least 3 and step at least 1")
    labels = list(labels) if labels is not None else [f"y{j + 1}" for j in range(k)]
    dates = pd.Index(dates) if dates is not None else pd.RangeIndex(T)
    ends = np.arange(window - 1, T, step)
    # windows holding a constant series are skipped
    csum = np.vstack([np.zeros(k), np.cumsum(np.diff(Y, axis=0) != 0, axis=0)])
    moving = csum[ends] - csum[ends - window + 1]
    ok = np.all(moving > 0, axis=1)
    if not ok.all():
        logger.warning("skipping %d windows with a zero-variance series", int((~ok).sum()))
    good = ends[ok]
    if method != "r2":
        mats = [
            connectedness_table(Y[e - window + 1 : e + 1], labels, method=method, horizon=horizon, var_lags=var_lags).matrix
            for e in good
        ]
        matrices = np.array(mats).reshape(len(good), k, k)
        return RollingConnectedness(labels, dates[good], matrices, dates[ends[~ok]], window)
    chunks = np.array_split(good, max(1, min(int(n_jobs), len(good)))) if len(good) else []
    if n_jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=int(n_jobs)) as pool:
            mats = list(pool.map(lambda c: _window_matrices(Y, c, window), chunks))
    else:
        mats = [_window_matrices(Y, c, window) for c in chunks]
    matrices = np.concatenate(mats) if mats else np.zeros((0, k, k))
    return RollingConnectedness(labels, dates[good], matrices, dates[ends[~ok]], window)


def average_connectedness(tables) -> ConnectednessTable:
    """Elementwise mean of a nonempty sequence of tables."""
    if isinstance(tables, RollingConnectedness):
        if len(tables) == 0:
            raise ValueError("no windows to average")
        return ConnectednessTable(tables.labels, tables.matrices.mean(axis=0))
    tables = list(tables)
    if not tables:
        raise ValueError("no tables to average")
    return ConnectednessTable(tables[0].labels, np.mean([t.matrix for t in tables], axis=0))


class R2Connectedness(BaseEstimator):
    """Estimator wrapper; ``window=None`` gives a static table, otherwise rolling."""

    def __init__(self, method="r2", lags=0, window=None, step=1, horizon=10, var_lags=1, n_jobs=1):
        self.method = method
        self.lags = lags
        self.window = window
        self.step = step
        self.horizon = horizon
        self.var_lags = var_lags
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        labels = list(X.columns) if isinstance(X, pd.DataFrame) else None
        if self.window is None:
            self.table_ = connectedness_table(
                X, labels, lags=self.lags, method=self.method, horizon=self.horizon, var_lags=self.var_lags
            )
        else:
            if self.lags:
                raise ValueError("rolling windows use contemporaneous predictors only")
            self.rolling_ = rolling_connectedness(
                X, self.window, self.step, labels=labels, n_jobs=self.n_jobs,
                method=self.method, horizon=self.horizon, var_lags=self.var_lags,
            )
            self.table_ = average_connectedness(self.rolling_)
        self.tci_ = self.table_.tci
        return self
