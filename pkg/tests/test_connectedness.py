import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grainspill.connectedness import (
    ConnectednessTable,
    R2Connectedness,
    VarModel,
    average_connectedness,
    connectedness_table,
    fit_var,
    genizi_decompose,
    genizi_weights,
    gfevd,
    r2_bivariate,
    rolling_connectedness,
    vma_coeffs,
)


def random_corr(rng, k):
    A = rng.standard_normal((k, k + 3))
    C = A @ A.T
    d = np.sqrt(np.diag(C))
    return C / np.outer(d, d)


def ols_r2(R, target):
    others = [j for j in range(R.shape[0]) if j != target]
    r = R[others, target]
    return float(r @ np.linalg.solve(R[np.ix_(others, others)], r))


def panel(T, k, seed, rho=0.0):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((T, 1))
    return np.sqrt(rho) * f + np.sqrt(1 - rho) * rng.standard_normal((T, k))


# -- VAR ------------------------------------------------------------------------


def test_var_recovers_known_coefficients():
    rng = np.random.default_rng(0)
    B = np.array([[0.5, 0.1, 0.0], [-0.2, 0.3, 0.1], [0.0, 0.2, -0.4]])
    Y = np.zeros((5000, 3))
    for t in range(1, 5000):
        Y[t] = B @ Y[t - 1] + rng.standard_normal(3)
    var = fit_var(Y, 1)
    assert np.max(np.abs(var.coefs[0] - B)) < 0.05


def test_var_white_noise_coefficients_small():
    var = fit_var(np.random.default_rng(1).standard_normal((5000, 3)), 1)
    assert np.max(np.abs(var.coefs)) < 0.05


def test_var_p0_is_sample_covariance():
    Y = np.random.default_rng(2).standard_normal((200, 3))
    var = fit_var(Y, 0)
    assert var.coefs.shape == (0, 3, 3)
    assert np.allclose(var.intercept, Y.mean(axis=0))
    assert np.allclose(var.sigma, np.cov(Y.T, ddof=1))


def test_var_too_short():
    with pytest.raises(ValueError):
        fit_var(np.random.default_rng(3).standard_normal((12, 3)), 2)


def test_vma_identity_and_powers():
    rng = np.random.default_rng(4)
    B = 0.3 * rng.standard_normal((3, 3))
    var = VarModel(1, B[None], np.zeros(3), np.eye(3))
    A = vma_coeffs(var, 6)
    assert np.array_equal(A[0], np.eye(3))
    for h in range(1, 6):
        assert np.allclose(A[h], np.linalg.matrix_power(B, h))
    zero = VarModel(2, np.zeros((2, 3, 3)), np.zeros(3), np.eye(3))
    assert np.all(vma_coeffs(zero, 4)[1:] == 0)


def test_vma_p2_recursion():
    rng = np.random.default_rng(5)
    B1, B2 = 0.3 * rng.standard_normal((2, 2, 2))
    A = vma_coeffs(VarModel(2, np.stack([B1, B2]), np.zeros(2), np.eye(2)), 4)
    assert np.allclose(A[2], B1 @ B1 + B2)
    assert np.allclose(A[3], B1 @ A[2] + B2 @ B1)


# -- GFEVD and bivariate R² --------------------------------------------------------


def test_gfevd_diagonal_sigma_is_identity():
    var = VarModel(1, np.zeros((1, 3, 3)), np.zeros(3), np.diag([1.0, 2.0, 3.0]))
    assert np.allclose(gfevd(var, 1), np.eye(3))


@pytest.mark.parametrize("rho", [0.0, 0.3, 0.6, -0.8])
def test_gfevd_two_variables_off_diagonal_rho_squared(rho):
    s = np.array([[1.0, rho], [rho, 1.0]])
    phi = gfevd(VarModel(1, np.zeros((1, 2, 2)), np.zeros(2), s), 1)
    assert phi[0, 1] == pytest.approx(rho**2) and phi[1, 0] == pytest.approx(rho**2)
    assert np.allclose(np.diag(phi), 1.0)


def test_gfevd_under_random_walk_is_bivariate_r2():
    rng = np.random.default_rng(6)
    s = random_corr(rng, 4) * np.outer([1, 2, 0.5, 3], [1, 2, 0.5, 3])
    var = VarModel(1, np.eye(4)[None], np.zeros(4), s)
    assert np.allclose(gfevd(var, 1), r2_bivariate(s))


def test_gfevd_matches_sums_by_hand():
    rng = np.random.default_rng(7)
    s = random_corr(rng, 3) * 2.0
    B = 0.4 * rng.standard_normal((1, 3, 3))
    var = VarModel(1, B, np.zeros(3), s)
    H = 5
    A = [np.linalg.matrix_power(B[0], h) for h in range(H)]
    expected = np.zeros((3, 3))
    for i in range(3):
        den = sum(A[h][i] @ s @ A[h][i] for h in range(H))
        for j in range(3):
            expected[i, j] = sum((A[h][i] @ s[:, j]) ** 2 for h in range(H)) / s[j, j] / den
    assert np.allclose(gfevd(var, H), expected, rtol=1e-12)


def test_r2_bivariate_properties():
    assert np.allclose(r2_bivariate(np.eye(3)), np.eye(3))
    assert np.allclose(r2_bivariate(np.ones((2, 2))), np.ones((2, 2)))
    R = r2_bivariate(np.cov(np.random.default_rng(8).standard_normal((5, 100))))
    assert np.allclose(np.diag(R), 1.0) and np.array_equal(R, R.T)


# -- Genizi decomposition -----------------------------------------------------------


def test_uncorrelated_predictors_give_squared_correlations():
    R = np.eye(4)
    R[0, 1:] = R[1:, 0] = [0.3, -0.2, 0.4]
    c = genizi_decompose(R, 0)
    assert c[0] == 0.0
    assert np.allclose(c[1:], [0.09, 0.04, 0.16])


def test_single_predictor():
    R = np.array([[1.0, 0.7], [0.7, 1.0]])
    assert np.allclose(genizi_decompose(R, 0), [0.0, 0.49])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(3, 8))
def test_contributions_sum_to_ols_r2(seed, k):
    rng = np.random.default_rng(seed)
    R = random_corr(rng, k)
    for target in range(k):
        c = genizi_decompose(R, target)
        assert np.all(c >= -1e-12)
        assert abs(c.sum() - ols_r2(R, target)) <= 1e-10


def test_contributions_invariant_to_predictor_order():
    rng = np.random.default_rng(9)
    R = random_corr(rng, 5)
    perm = np.array([0, 3, 1, 4, 2])
    a = genizi_decompose(R, 0)
    b = genizi_decompose(R[np.ix_(perm, perm)], 0)
    assert np.allclose(a[perm], b)


def test_genizi_weights_rejects_indefinite():
    with pytest.raises(ValueError):
        genizi_weights(np.array([[1.0, 2.0], [2.0, 1.0]]), np.array([0.1, 0.1]))


# -- tables ------------------------------------------------------------------------


def test_independent_series_low_tci():
    t = connectedness_table(panel(5000, 8, 10))
    assert t.tci < 2.0
    t.check()


def test_common_factor_high_tci():
    rng = np.random.default_rng(11)
    f = rng.standard_normal((5000, 1))
    t = connectedness_table(f + 0.1 * rng.standard_normal((5000, 8)))
    assert t.tci > 90.0


def test_identical_series_tci_100():
    x = np.random.default_rng(12).standard_normal((500, 1))
    t = connectedness_table(np.repeat(x, 4, axis=1))
    assert t.tci == pytest.approx(100.0, abs=1e-9)
    assert np.allclose(t.from_, 100.0, atol=1e-9)


def test_table_margins_by_hand():
    m = np.array([[0.0, 10.0, 5.0], [2.0, 0.0, 3.0], [1.0, 4.0, 0.0]])
    t = ConnectednessTable(["a", "b", "c"], m)
    assert t.from_.tolist() == [15.0, 5.0, 5.0]
    assert t.to.tolist() == [3.0, 14.0, 8.0]
    assert t.net.tolist() == [-12.0, 9.0, 3.0]
    assert t.tci == pytest.approx(25.0 / 3)
    assert t.npdc[0, 1] == 8.0 and t.npdc[1, 0] == -8.0


def test_from_equals_r2_times_100():
    Y = panel(800, 5, 13, rho=0.4)
    t = connectedness_table(Y)
    R = np.corrcoef(Y.T)
    assert np.allclose(t.r2, [ols_r2(R, i) for i in range(5)], atol=1e-10)


def test_frame_layout_and_round_trip(tmp_path):
    t = connectedness_table(pd.DataFrame(panel(400, 3, 14, 0.5), columns=["A", "B", "C"]))
    frame = t.to_frame()
    assert list(frame.index) == ["A", "B", "C", "TO", "NET"]
    assert list(frame.columns) == ["A", "B", "C", "FROM"]
    assert frame.loc["NET", "FROM"] == pytest.approx(t.tci)
    t.to_csv(tmp_path / "t.csv")
    back = ConnectednessTable.read_csv(tmp_path / "t.csv")
    assert back.labels == t.labels and np.array_equal(back.matrix, t.matrix)


def test_lagged_predictors():
    rng = np.random.default_rng(15)
    e = rng.standard_normal((3000, 2))
    Y = e.copy()
    Y[1:, 0] += 0.8 * e[:-1, 1]
    static = connectedness_table(Y)
    lagged = connectedness_table(Y, lags=1)
    assert static.matrix[0, 1] < 2.0
    assert lagged.matrix[0, 1] > 30.0
    lagged.check()


def test_lagged_contributions_sum_to_full_regression_r2():
    from grainspill.connectedness import _lagged_table

    rng = np.random.default_rng(23)
    Y = np.zeros((2000, 3))
    e = rng.standard_normal((2000, 3))
    for t in range(1, 2000):
        Y[t] = 0.6 * Y[t - 1] + e[t] + 0.3 * e[t, [1, 2, 0]]
    G = _lagged_table(Y, 2)
    for i in range(3):
        design = np.hstack([Y[2 - l : 2000 - l] for l in range(3)])
        X = np.delete(design, i, axis=1)
        X = np.column_stack([np.ones(len(X)), X])
        y = design[:, i]
        resid = y - X @ np.linalg.lstsq(X, y, rcond=None)[0]
        r2 = 1 - resid @ resid / np.sum((y - y.mean()) ** 2)
        assert G[i].sum() == pytest.approx(r2, abs=1e-10)


def test_own_lags_are_not_spillover():
    rng = np.random.default_rng(24)
    Y = rng.standard_normal((3000, 2))
    for t in range(1, 3000):
        Y[t, 0] += 0.9 * Y[t - 1, 0]
    t = connectedness_table(Y, lags=1)
    assert t.matrix[0, 1] < 1.0 and t.matrix[1, 0] < 1.0


def test_gfevd_method_rows_normalized():
    t = connectedness_table(panel(1000, 4, 16, 0.5), method="gfevd", horizon=10)
    assert np.all(t.from_ < 100.0) and t.tci > 10.0
    with pytest.raises(ValueError):
        connectedness_table(panel(100, 3, 0), method="spill")


# -- rolling -------------------------------------------------------------------------


def test_rolling_window_equal_to_length_is_static():
    Y = panel(300, 4, 17, 0.3)
    roll = rolling_connectedness(Y, window=300)
    assert len(roll) == 1
    assert np.allclose(roll.table(0).matrix, connectedness_table(Y).matrix, atol=1e-10)


def test_rolling_flat_under_constant_structure():
    roll = rolling_connectedness(panel(3000, 6, 18, 0.5), window=252, step=10)
    assert roll.tci.std() < 3.0


def test_rolling_dates_threads_and_long_format(tmp_path):
    dates = pd.bdate_range("2020-01-01", periods=400)
    frame = pd.DataFrame(panel(400, 3, 19, 0.4), index=dates, columns=["A", "B", "C"])
    one = rolling_connectedness(frame, window=100, step=7)
    many = rolling_connectedness(frame, window=100, step=7, n_jobs=4)
    assert np.array_equal(one.matrices, many.matrices)
    assert one.dates[0] == dates[99] and one.dates[1] == dates[106]
    long = one.to_long_frame()
    assert set(long["metric"]) == {"TCI", "TO", "FROM", "NET", "NPDC"}
    assert (long["metric"] == "NPDC").sum() == 3 * len(one)
    first = long[(long["metric"] == "NPDC") & (long["date"] == one.dates[0])].iloc[0]
    assert first["value"] == pytest.approx(one.table(0).npdc[0, 1])
    one.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().startswith("date,metric,from,to,value\n2020-05-19")


def test_rolling_skips_constant_windows():
    Y = panel(300, 3, 20)
    Y[:150, 2] = 1.0
    roll = rolling_connectedness(Y, window=100, step=10)
    assert len(roll.skipped) > 0 and np.all(np.asarray(roll.dates) >= 149)


def test_rolling_errors():
    with pytest.raises(ValueError, match="window 500.*T=300"):
        rolling_connectedness(panel(300, 3, 0), window=500)


def test_average_of_windows():
    t = connectedness_table(panel(300, 3, 21, 0.5))
    assert np.array_equal(average_connectedness([t]).matrix, t.matrix)
    assert np.allclose(average_connectedness([t, t]).matrix, t.matrix)
    with pytest.raises(ValueError):
        average_connectedness([])


def test_estimator_static_and_rolling():
    Y = pd.DataFrame(panel(600, 3, 22, 0.5), columns=list("xyz"))
    static = R2Connectedness().fit(Y)
    assert static.table_.labels == ["x", "y", "z"]
    rolling = R2Connectedness(window=200, step=50).fit(Y)
    assert np.allclose(rolling.table_.matrix, rolling.rolling_.matrices.mean(axis=0))
    assert rolling.get_params()["window"] == 200
