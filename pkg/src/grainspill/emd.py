"""Empirical mode decomposition and the ICEEMDAN noise-assisted ensemble.

The sifting core follows Huang's procedure with natural cubic-spline
envelopes and Rilling-style mirrored extrema at both ends. ``iceemdan``
builds each mode as the difference of successive ensemble local means,
so the decomposition is additive by construction.
"""

from __future__ import annotations

import functools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from scipy.linalg.lapack import dgtsv
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import check_series

MIN_LENGTH = 16
# hard stop for pathological inputs; natural termination happens far earlier
_MODE_LIMIT = 64


class MonotonicResidue(ValueError):
    """Raised when a signal has too few extrema to build envelopes."""


@dataclass(frozen=True)
class SiftConfig:
    sd_threshold: float = 0.2
    max_iter: int = 50
    s_number: int | None = None
    n_mirror: int = 2

    def __post_init__(self):
        if self.sd_threshold <= 0:
            raise ValueError("sd_threshold must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.s_number is not None and self.s_number < 1:
            raise ValueError("s_number must be >= 1")
        if self.n_mirror < 1:
            raise ValueError("n_mirror must be >= 1")


@dataclass(frozen=True)
class EnsembleConfig:
    n_ensemble: int = 100
    noise_scale: float = 0.2
    seed: int = 0
    max_modes: int | None = None

    def __post_init__(self):
        if self.n_ensemble < 1:
            raise ValueError("n_ensemble must be >= 1")
        if self.noise_scale <= 0:
            raise ValueError("noise_scale must be > 0")


@dataclass(frozen=True)
class IMFSet:
    """Modes (high frequency first) plus residue of one series."""

    modes: np.ndarray  # shape (n_modes, T)
    residue: np.ndarray
    config: dict = field(default_factory=dict)

    @property
    def n_modes(self) -> int:
        return self.modes.shape[0]

    @property
    def length(self) -> int:
        return self.residue.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.modes.sum(axis=0) + self.residue

    def reconstruction_error(self, x) -> float:
        return float(np.max(np.abs(np.asarray(x, dtype=float) - self.reconstruct())))

    def to_frame(self, index=None) -> pd.DataFrame:
        cols = {f"imf{n + 1}": self.modes[n] for n in range(self.n_modes)}
        cols["residue"] = self.residue
        return pd.DataFrame(cols, index=index)

    def to_csv(self, path, dates=None):
        frame = self.to_frame(index=pd.Index(dates, name="date") if dates is not None else None)
        frame.to_csv(path, index=dates is not None, float_format="%.17g")

    def to_json(self, path, dates=None):
        payload = {
            "config": self.config,
            "dates": [str(d) for d in dates] if dates is not None else None,
            "modes": self.modes.tolist(),
            "residue": self.residue.tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def from_json(cls, path) -> "IMFSet":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        modes = np.asarray(payload["modes"], dtype=float)
        residue = np.asarray(payload["residue"], dtype=float)
        return cls(modes.reshape(-1, residue.shape[0]), residue, payload.get("config", {}))


def find_extrema(x):
    """Indices of strict local maxima and minima.

    A flat plateau bounded by a rise and a fall counts once, at its
    midpoint. Plateaus touching either end are not extrema.
    """
    x = np.asarray(x, dtype=float)
    d = np.diff(x)
    nz = np.flatnonzero(d != 0)
    if nz.size < 2:
        empty = np.array([], dtype=np.intp)
        return empty, empty
    s = np.sign(d[nz])
    change = np.flatnonzero(s[:-1] != s[1:])
    idx = (nz[change] + 1 + nz[change + 1]) // 2
    is_max = s[change] > 0
    return idx[is_max], idx[~is_max]


def count_extrema(x) -> int:
    imax, imin = find_extrema(x)
    return imax.size + imin.size


def count_zero_crossings(x) -> int:
    s = np.sign(np.asarray(x, dtype=float))
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def _mirror(x, imax, imin, n):
    """Extend extrema sets past both ends by reflection (Rilling et al.)."""
    last = x.size - 1
    nmax, nmin = imax.size, imin.size

    # left end
    if imax[0] < imin[0]:
        if x[0] > x[imin[0]]:
            lmax, lmin, lsym = imax[1:n + 1][::-1], imin[:n][::-1], imax[0]
        else:
            lmax, lmin, lsym = imax[:n][::-1], np.r_[imin[:n - 1][::-1], 0], 0
    else:
        if x[0] < x[imax[0]]:
            lmax, lmin, lsym = imax[:n][::-1], imin[1:n + 1][::-1], imin[0]
        else:
            lmax, lmin, lsym = np.r_[imax[:n - 1][::-1], 0], imin[:n][::-1], 0

    # right end
    if imax[-1] < imin[-1]:
        if x[-1] < x[imax[-1]]:
            rmax = imax[max(nmax - n, 0):][::-1]
            rmin = imin[max(nmin - n - 1, 0):nmin - 1][::-1]
            rsym = imin[-1]
        else:
            rmax = np.r_[last, imax[max(nmax - n + 1, 0):][::-1]]
            rmin = imin[max(nmin - n, 0):][::-1]
            rsym = last
    else:
        if x[-1] > x[imin[-1]]:
            rmax = imax[max(nmax - n - 1, 0):nmax - 1][::-1]
            rmin = imin[max(nmin - n, 0):][::-1]
            rsym = imax[-1]
        else:
            rmax = imax[max(nmax - n, 0):][::-1]
            rmin = np.r_[last, imin[max(nmin - n + 1, 0):][::-1]]
            rsym = last
    lmax, lmin, rmax, rmin = (np.asarray(a, dtype=np.intp) for a in (lmax, lmin, rmax, rmin))

    tlmax, tlmin = 2 * lsym - lmax, 2 * lsym - lmin
    if lsym != 0 and (_first(tlmin) > 0 or _first(tlmax) > 0):
        if lsym == imax[0]:
            lmax = imax[:n][::-1]
        else:
            lmin = imin[:n][::-1]
        lsym = 0
        tlmax, tlmin = -lmax, -lmin

    trmax, trmin = 2 * rsym - rmax, 2 * rsym - rmin
    if rsym != last and (_last(trmin) < last or _last(trmax) < last):
        if rsym == imax[-1]:
            rmax = imax[max(nmax - n, 0):][::-1]
        else:
            rmin = imin[max(nmin - n, 0):][::-1]
        rsym = last
        trmax, trmin = 2 * last - rmax, 2 * last - rmin

    tmax = np.concatenate([tlmax, imax, trmax])
    zmax = np.concatenate([x[lmax], x[imax], x[rmax]])
    tmin = np.concatenate([tlmin, imin, trmin])
    zmin = np.concatenate([x[lmin], x[imin], x[rmin]])
    return tmax, zmax, tmin, zmin


def _first(a):
    return a[0] if a.size else np.inf


def _last(a):
    return a[-1] if a.size else -np.inf


def natural_cubic_spline(t, z, length: int) -> np.ndarray:
    """Natural cubic spline through knots ``(t, z)`` sampled at ``0..length-1``.

    ``t`` must be strictly increasing. Samples outside the knot range use
    the end polynomial pieces.
    """
    n = t.size
    h = np.diff(t)
    slope = np.diff(z) / h
    m = np.zeros(n)
    if n == 3:
        m[1] = 3.0 * (slope[1] - slope[0]) / (h[0] + h[1])
    elif n > 3:
        rhs = 6.0 * np.diff(slope)
        _, _, _, sol, info = dgtsv(h[1:-1], 2.0 * (h[:-1] + h[1:]), h[1:-1], rhs)
        if info != 0:
            raise np.linalg.LinAlgError(f"spline system is singular (info={info})")
        m[1:-1] = sol
    coef = np.empty((4, n - 1))
    coef[0] = (m[1:] - m[:-1]) / (6.0 * h)
    coef[1] = 0.5 * m[:-1]
    coef[2] = slope - h * (2.0 * m[:-1] + m[1:]) / 6.0
    coef[3] = z[:-1]
    # sample k falls in piece j when t[j] <= k < t[j+1]
    edges = np.empty(n, dtype=np.intp)
    edges[1:-1] = np.clip(np.ceil(t[1:-1]), 0, length)
    edges[0], edges[-1] = 0, length
    counts = np.diff(edges)
    c = np.repeat(coef, counts, axis=1)
    dx = np.arange(length, dtype=float) - np.repeat(t[:-1], counts)
    return ((c[0] * dx + c[1]) * dx + c[2]) * dx + c[3]


def _spline(t, z, length):
    order = np.argsort(t, kind="stable")
    t, z = t[order].astype(float), z[order]
    keep = np.r_[True, np.diff(t) > 0]
    t, z = t[keep], z[keep]
    if t.size < 2:
        raise MonotonicResidue("envelope needs at least two knots")
    return natural_cubic_spline(t, z, length)


def envelope_mean(x, n_mirror: int = 2, extrema=None) -> np.ndarray:
    """Pointwise mean of the upper and lower cubic-spline envelopes.

    ``extrema`` may pass precomputed ``find_extrema(x)`` output.
    """
    x = np.asarray(x, dtype=float)
    imax, imin = find_extrema(x) if extrema is None else extrema
    if imax.size + imin.size < 3 or imax.size == 0 or imin.size == 0:
        raise MonotonicResidue("monotonic residue: too few extrema for envelopes")
    tmax, zmax, tmin, zmin = _mirror(x, imax, imin, n_mirror)
    upper = _spline(tmax, zmax, x.size)
    lower = _spline(tmin, zmin, x.size)
    return 0.5 * (upper + lower)


def is_imf(x) -> bool:
    return abs(count_extrema(x) - count_zero_crossings(x)) <= 1


def sift(x, cfg: SiftConfig | None = None, return_n_iter: bool = False):
    """Extract one intrinsic mode by repeated envelope-mean subtraction.

    Stops once the candidate meets the extrema/zero-crossing condition and
    either the Cauchy SD ratio drops below ``cfg.sd_threshold`` or, when
    ``cfg.s_number`` is set, the condition has held with an unchanged
    extrema count for that many consecutive rounds. ``cfg.max_iter`` caps
    the loop regardless.
    """
    cfg = cfg or SiftConfig()
    h = np.asarray(x, dtype=float).copy()
    extrema = find_extrema(h)
    n_iter = 0
    streak = 0
    prev_counts = None
    while n_iter < cfg.max_iter:
        try:
            m = envelope_mean(h, cfg.n_mirror, extrema)
        except MonotonicResidue:
            if n_iter == 0:
                raise
            break
        h_new = h - m
        n_iter += 1
        extrema = find_extrema(h_new)
        counts = (extrema[0].size + extrema[1].size, count_zero_crossings(h_new))
        imf_ok = abs(counts[0] - counts[1]) <= 1
        if cfg.s_number is not None:
            streak = streak + 1 if imf_ok and counts == prev_counts else (1 if imf_ok else 0)
            done = streak >= cfg.s_number
        else:
            denom = np.dot(h, h)
            sd = np.dot(m, m) / denom if denom > 0 else 0.0
            done = imf_ok and sd < cfg.sd_threshold
        prev_counts = counts
        h = h_new
        if done:
            break
    return (h, n_iter) if return_n_iter else h


def emd(x, cfg: SiftConfig | None = None, max_modes: int | None = None, amplitude_tol: float = 1e-10) -> IMFSet:
    """Plain EMD. Modes are extracted until the residue has < 3 extrema."""
    cfg = cfg or SiftConfig()
    x = check_series(x, min_length=MIN_LENGTH, name="x")
    return _emd(x, cfg, max_modes, amplitude_tol)


def _emd(x, cfg, max_modes, amplitude_tol=1e-10):
    limit = _MODE_LIMIT if max_modes is None else max_modes
    scale = np.max(np.abs(x))
    r = x.copy()
    modes = []
    while len(modes) < limit:
        if count_extrema(r) < 3 or np.max(np.abs(r)) <= amplitude_tol * scale:
            break
        try:
            c = sift(r, cfg)
        except MonotonicResidue:
            break
        modes.append(c)
        r = r - c
    arr = np.array(modes).reshape(len(modes), x.size)
    config = {"method": "emd", "sift": asdict(cfg), "max_modes": max_modes}
    return IMFSet(arr, r, config)


def local_mean(x, cfg: SiftConfig) -> np.ndarray:
    """The local-mean operator: signal minus its first sifted mode."""
    try:
        return x - sift(x, cfg)
    except MonotonicResidue:
        return x.copy()


@functools.lru_cache(maxsize=4)
def _noise_bank(length: int, n_ensemble: int, seed: int, cfg: SiftConfig, max_modes: int | None):
    bank = []
    for i in range(n_ensemble):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        w = rng.standard_normal(length)
        modes = _emd(w, cfg, max_modes).modes
        modes.setflags(write=False)
        bank.append(modes)
    return tuple(bank)


def noise_bank(length, ens_cfg: EnsembleConfig, sift_cfg: SiftConfig | None = None):
    """EMD modes of the seeded white-noise realizations, cached per config."""
    sift_cfg = sift_cfg or SiftConfig()
    return _noise_bank(int(length), ens_cfg.n_ensemble, int(ens_cfg.seed), sift_cfg, ens_cfg.max_modes)


def iceemdan(x, sift_cfg: SiftConfig | None = None, ens_cfg: EnsembleConfig | None = None, n_jobs: int = 1) -> IMFSet:
    """Improved complete ensemble EMD with adaptive noise.

    Stage ``n`` perturbs the running residue ``u`` with the ``n``-th EMD
    mode of each noise realization, scaled by ``noise_scale * std(u)``
    (``std(x)`` at the first stage), and replaces ``u`` with the ensemble
    average of the local means. Each mode is the drop in ``u``.
    """
    sift_cfg = sift_cfg or SiftConfig()
    ens_cfg = ens_cfg or EnsembleConfig()
    x = check_series(x, min_length=MIN_LENGTH, name="x")
    bank = noise_bank(x.size, ens_cfg, sift_cfg)
    limit = _MODE_LIMIT if ens_cfg.max_modes is None else ens_cfg.max_modes
    pool = ThreadPoolExecutor(max_workers=n_jobs) if n_jobs and n_jobs > 1 else None

    def ensemble_mean(u, stage, beta):
        def one(i):
            noise_modes = bank[i]
            if stage < noise_modes.shape[0]:
                return local_mean(u + beta * noise_modes[stage], sift_cfg)
            return local_mean(u, sift_cfg)

        members = list(pool.map(one, range(len(bank)))) if pool else [one(i) for i in range(len(bank))]
        # fixed-order reduction keeps results independent of scheduling
        return np.stack(members).mean(axis=0)

    modes = []
    u = x
    try:
        while len(modes) < limit and count_extrema(u) >= 3:
            beta = ens_cfg.noise_scale * np.std(u)
            u_next = ensemble_mean(u, len(modes), beta)
            modes.append(u - u_next)
            u = u_next
    finally:
        if pool:
            pool.shutdown()

    arr = np.array(modes).reshape(len(modes), x.size)
    config = {"method": "iceemdan", "sift": asdict(sift_cfg), "ensemble": asdict(ens_cfg)}
    return IMFSet(arr, u.copy(), config)


class EMD(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit_transform(x)`` returns a (T, n_modes + 1) array."""

    def __init__(self, sd_threshold=0.2, max_iter=50, s_number=None, n_mirror=2, max_modes=None):
        self.sd_threshold = sd_threshold
        self.max_iter = max_iter
        self.s_number = s_number
        self.n_mirror = n_mirror
        self.max_modes = max_modes

    def _sift_cfg(self):
        return SiftConfig(self.sd_threshold, self.max_iter, self.s_number, self.n_mirror)

    def decompose(self, x) -> IMFSet:
        return emd(x, self._sift_cfg(), self.max_modes)

    def fit(self, X, y=None):
        self.imfset_ = self.decompose(X)
        self.n_modes_ = self.imfset_.n_modes
        return self

    def transform(self, X):
        imfs = self.decompose(X)
        return np.column_stack([imfs.modes.T, imfs.residue])

    def fit_transform(self, X, y=None, **fit_params):
        self.fit(X)
        return np.column_stack([self.imfset_.modes.T, self.imfset_.residue])


class ICEEMDAN(EMD):
    def __init__(self, n_ensemble=100, noise_scale=0.2, seed=0, sd_threshold=0.2, max_iter=50,
                 s_number=None, n_mirror=2, max_modes=None, n_jobs=1):
        super().__init__(sd_threshold, max_iter, s_number, n_mirror, max_modes)
        self.n_ensemble = n_ensemble
        self.noise_scale = noise_scale
        self.seed = seed
        self.n_jobs = n_jobs

    def decompose(self, x) -> IMFSet:
        ens = EnsembleConfig(self.n_ensemble, self.noise_scale, self.seed, self.max_modes)
        return iceemdan(x, self._sift_cfg(), ens, n_jobs=self.n_jobs)
