import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from grainspill.emd import EnsembleConfig, IMFSet, iceemdan
from grainspill.reconstruct import (
    GaussianMixture1D,
    classify_components,
    classify_run_lengths,
    component_names,
    gmm_fit_1d,
    is_weakly_decreasing,
    mean_period,
    mode_measures,
    run_length_number,
    variance_share,
)

WHEAT_RL = [4155, 2173, 1144, 596, 283, 163, 86, 40, 17, 7, 3]


# -- per-mode measures ---------------------------------------------------------


def test_mean_period_ten_peaks():
    t = np.arange(100)
    assert mean_period(np.sin(2 * np.pi * (t + 0.5) / 10)) == 10.0


def test_mean_period_constant_undefined():
    assert math.isnan(mean_period(np.ones(50)))


def test_run_lengths():
    assert run_length_number(np.tile([1.0, -1.0], 5)) == 10
    assert run_length_number(np.r_[np.ones(5), -np.ones(5)]) == 2
    assert run_length_number(np.ones(7)) == 1


def test_run_length_uses_deviation_from_mean():
    # all positive, but below/above the mean alternates in two blocks
    assert run_length_number(np.r_[np.full(5, 1.0), np.full(5, 3.0)]) == 2


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=60))
def test_run_length_brute_force(values):
    x = np.asarray(values)
    d = x - x.mean()
    signs = []
    for v in d:
        s = 1 if v > 0 else -1 if v < 0 else 0
        signs.append(s if s != 0 else (signs[-1] if signs else 0))
    first = next((s for s in signs if s != 0), 0)
    signs = [s if s != 0 else first for s in signs]
    expected = 1 + sum(a != b for a, b in zip(signs, signs[1:]))
    assert run_length_number(x) == expected


def test_variance_share():
    x = np.random.default_rng(0).standard_normal(100)
    assert variance_share(x, x) == 1.0
    assert variance_share(np.zeros(100), x) == 0.0
    with pytest.raises(ValueError):
        variance_share(np.zeros(5), np.ones(5))


def test_mode_measures_frame():
    x = np.random.default_rng(1).standard_normal(400)
    imf = iceemdan(x, ens_cfg=EnsembleConfig(n_ensemble=5, seed=0))
    m = mode_measures(imf, x)
    frame = m.to_frame()
    assert list(frame.index) == [f"IMF{i + 1}" for i in range(imf.n_modes)] + ["Residue"]
    assert list(frame.columns) == ["mean_period", "correlation", "significance", "importance_pct", "run_length", "group"]
    assert math.isnan(frame.loc["Residue", "mean_period"]) and math.isnan(frame.loc["Residue", "run_length"])
    assert frame.loc["IMF1", "correlation"] == pytest.approx(sps.spearmanr(imf.modes[0], x).statistic)
    assert frame.loc["IMF1", "importance_pct"] == pytest.approx(100 * np.var(imf.modes[0]) / np.var(x))
    # noise modes slow down
    assert m.mean_period[0] < m.mean_period[2]


# -- Gaussian mixture ----------------------------------------------------------


def test_gmm_recovers_three_clusters():
    rng = np.random.default_rng(2)
    truth = np.repeat([0, 1, 2], 100)
    x = rng.normal(10.0 * truth, 0.5)
    g = GaussianMixture1D(n_components=3, random_state=0).fit(x)
    assert np.max(np.abs(g.means_ - [0.0, 10.0, 20.0])) <= 0.3
    assert np.mean(g.predict(x) == truth) >= 0.99
    assert np.allclose(g.weights_, 1 / 3, atol=0.01)
    assert np.allclose(g.predict_proba(x).sum(axis=1), 1.0)


def test_gmm_single_component_closed_form():
    x = np.random.default_rng(3).gamma(2.0, size=200)
    g = gmm_fit_1d(x, k=1)
    assert g.means_[0] == pytest.approx(x.mean(), rel=1e-12)
    assert g.variances_[0] == pytest.approx(x.var(), rel=1e-12)
    assert g.score(x) == pytest.approx(np.mean(sps.norm.logpdf(x, x.mean(), x.std())), rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 4))
def test_em_log_likelihood_non_decreasing(seed, k):
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.normal(3 * j, 1 + j, 30) for j in range(k)])
    g = GaussianMixture1D(n_components=k, n_init=3, random_state=seed).fit(x)
    assert np.all(np.diff(g.log_likelihood_history_) >= -1e-9)


def test_gmm_seed_determinism_and_errors():
    x = np.log(WHEAT_RL)
    a, b = gmm_fit_1d(x, seed=4), gmm_fit_1d(x, seed=4)
    assert np.array_equal(a.means_, b.means_)
    with pytest.raises(ValueError):
        gmm_fit_1d(x[:2], k=3)
    with pytest.raises(ValueError):
        GaussianMixture1D(n_components=0).fit(x)


def test_gmm_variance_floor_holds():
    x = np.r_[np.zeros(10), np.ones(10)]
    g = gmm_fit_1d(x, k=3)
    assert np.all(g.variances_ >= g.variance_floor_)


# -- classification ------------------------------------------------------------


def test_wheat_run_lengths_give_contiguous_ordered_groups():
    groups, method = classify_run_lengths(WHEAT_RL)
    assert method == "gmm"
    assert set(groups) == {0, 1, 2}
    assert is_weakly_decreasing(-groups)
    assert groups[0] == 0 and groups[-1] == 2


def test_classification_scale_option():
    g_raw, _ = classify_run_lengths(WHEAT_RL, scale="raw")
    assert is_weakly_decreasing(-g_raw)
    with pytest.raises(ValueError):
        classify_run_lengths(WHEAT_RL, scale="sqrt")
    with pytest.raises(ValueError):
        classify_run_lengths([5, 3], k=3)


def test_degenerate_run_lengths_fall_back_to_quantiles():
    groups, method = classify_run_lengths([10, 10, 10, 10, 10, 10])
    assert method == "quantile"
    assert groups.tolist() == [0, 0, 1, 1, 2, 2]


@pytest.fixture(scope="module")
def decomposition():
    x = np.random.default_rng(5).standard_normal(1500).cumsum() * 0.05 + np.random.default_rng(6).standard_normal(1500)
    return x, iceemdan(x, ens_cfg=EnsembleConfig(n_ensemble=8, seed=1))


def test_components_sum_to_series(decomposition):
    x, imf = decomposition
    comps = classify_components(imf)
    assert comps.names == ["STC", "MTC", "LTC"]
    total = comps["STC"] + comps["MTC"] + comps["LTC"]
    assert np.max(np.abs(total - x)) <= 1e-8
    assert np.max(np.abs(comps.total() - x)) <= 1e-8
    assert comps.membership[0] == "STC" and comps.membership[-1] == "LTC"


def test_single_component_is_modes_sum(decomposition):
    x, imf = decomposition
    comps = classify_components(imf, k=1)
    assert comps.names == ["C1"]
    assert np.max(np.abs(comps["C1"] - (x - imf.residue))) <= 1e-8
    assert np.max(np.abs(comps.total() - x)) <= 1e-8


def test_residue_kept_apart(decomposition):
    x, imf = decomposition
    comps = classify_components(imf, residue_to_last=False)
    assert np.max(np.abs(sum(comps.components.values()) + imf.residue - x)) <= 1e-8


def test_too_few_modes():
    imf = IMFSet(np.ones((2, 10)), np.zeros(10))
    with pytest.raises(ValueError):
        classify_components(imf, k=3)


def test_component_names_and_frame(decomposition, tmp_path):
    assert component_names(3) == ["STC", "MTC", "LTC"]
    assert component_names(4) == ["C1", "C2", "C3", "C4"]
    _, imf = decomposition
    comps = classify_components(imf)
    comps.to_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "t,STC,MTC,LTC"
