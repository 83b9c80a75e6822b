import numpy as np
import pandas as pd
import pytest

from models.linreg import RidgeModel, fit_ridge, load_ridge, predict_ridge, save_ridge, solve_ridge
from utils.errors import ChecksumError, MissingFeatureError, SingularSystemError
from utils.features import FeatureMatrix, Provenance


def test_matches_normal_equations_without_standardizing():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 4))
    y = X @ np.array([1.0, -2.0, 0.5, 3.0]) + 7.0 + 0.1 * rng.normal(size=200)
    weights, intercept = solve_ridge(X, y, l2=2.5, standardize=False)

    Xc, yc = X - X.mean(axis=0), y - y.mean()
    expected = np.linalg.solve(Xc.T @ Xc + 2.5 * np.eye(4), Xc.T @ yc)
    np.testing.assert_allclose(weights, expected, rtol=1e-10)
    assert intercept == pytest.approx(y.mean() - X.mean(axis=0) @ expected)


def test_zero_penalty_is_least_squares():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(100, 3))
    y = X @ np.array([2.0, 0.0, -1.0]) + 4.0
    weights, intercept = solve_ridge(X, y, l2=0.0)
    np.testing.assert_allclose(weights, [2.0, 0.0, -1.0], atol=1e-9)
    assert intercept == pytest.approx(4.0)


def test_singular_design_without_penalty():
    X = np.column_stack([np.arange(10.0), 2 * np.arange(10.0)])
    with pytest.raises(SingularSystemError):
        solve_ridge(X, np.arange(10.0), l2=0.0)


def test_constant_column_gets_zero_weight():
    X = np.column_stack([np.arange(10.0), np.ones(10)])
    weights, _ = solve_ridge(X, np.arange(10.0), l2=1.0)
    assert weights[1] == 0.0


def test_fit_and_persist(tmp_path):
    rng = np.random.default_rng(2)
    index = pd.date_range('2025-01-01', periods=48, freq='60min')
    frame = pd.DataFrame({'a': rng.normal(size=48), 'b': rng.normal(size=48)}, index=index)
    frame.iloc[3, 0] = np.nan
    target = pd.Series(2 * frame['b'].to_numpy() + 1, index=index)
    fm = FeatureMatrix(frame, {'a': Provenance.FUTURE_AVAILABLE, 'b': Provenance.FORECASTED_FEATURE}, target)

    model = fit_ridge(fm, l2=1e-8)
    assert model.feature_names == ('a', 'b')
    path = str(tmp_path / 'model.ridge')
    save_ridge(model, path)
    loaded = load_ridge(path)
    np.testing.assert_array_equal(loaded.weights, model.weights)
    np.testing.assert_allclose(predict_ridge(loaded, np.nan_to_num(fm.matrix())), target.to_numpy(), atol=1e-6)

    with open(path, 'a', encoding='utf-8') as f:
        f.write('\n')
    with pytest.raises(ChecksumError):
        load_ridge(path)


def noisy_design(n=50, p=5, seed=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p)) * rng.uniform(0.5, 20, p) + rng.uniform(-10, 10, p)
    y = X @ rng.normal(size=p) + 3.0 + rng.normal(size=n)
    return X, y


def matrix_of(X, names=None):
    names = names or [f"x{j}" for j in range(X.shape[1])]
    index = pd.date_range('2025-01-01', periods=X.shape[0], freq='60min')
    frame = pd.DataFrame(X, index=index, columns=names)
    return FeatureMatrix(frame, {c: Provenance.FUTURE_AVAILABLE for c in names}, pd.Series(0.0, index=index))


def test_exact_line_is_recovered():
    x = np.arange(10.0)[:, None]
    weights, intercept = solve_ridge(x, 2 * x[:, 0], l2=0.0)
    assert abs(weights[0] - 2.0) < 1e-10
    assert abs(intercept) < 1e-10


def test_huge_penalty_shrinks_to_the_mean():
    X, y = noisy_design()
    weights, intercept = solve_ridge(X, y, l2=1e12)
    model = RidgeModel(weights, intercept, 1e12, tuple(f"x{j}" for j in range(5)))
    assert np.all(np.abs(weights) < 1e-6)
    np.testing.assert_allclose(predict_ridge(model, X), np.full(50, y.mean()), atol=1e-6)


def test_standardized_solution_matches_normal_equations():
    X, y = noisy_design()
    weights, intercept = solve_ridge(X, y, l2=1.0)

    mean, std = X.mean(axis=0), X.std(axis=0)
    Z = (X - mean) / std
    coef = np.linalg.solve(Z.T @ Z + np.eye(5), Z.T @ (y - y.mean()))
    np.testing.assert_allclose(weights, coef / std, rtol=1e-8, atol=1e-12)
    assert intercept == pytest.approx(y.mean() - mean @ (coef / std), rel=1e-8)


def test_duplicated_rows_with_doubled_penalty():
    X, y = noisy_design()
    once = solve_ridge(X, y, l2=1.0)
    twice = solve_ridge(np.vstack([X, X]), np.concatenate([y, y]), l2=2.0)
    np.testing.assert_allclose(twice[0], once[0], rtol=1e-9, atol=1e-12)
    assert twice[1] == pytest.approx(once[1], rel=1e-9, abs=1e-9)


def test_least_squares_residuals_are_orthogonal_to_the_features():
    X, y = noisy_design(n=200)
    weights, intercept = solve_ridge(X, y, l2=0.0)
    residuals = y - X @ weights - intercept
    assert abs(residuals.sum()) < 1e-8
    np.testing.assert_allclose(X.T @ residuals, np.zeros(5), atol=1e-8)


def test_predictions_are_affine():
    X, y = noisy_design()
    model = RidgeModel(*solve_ridge(X, y, l2=1.0), 1.0, tuple(f"x{j}" for j in range(5)))
    x1, x2, a = X[:10], X[10:20], 0.3
    mixed = predict_ridge(model, a * x1 + (1 - a) * x2)
    expected = a * predict_ridge(model, x1) + (1 - a) * predict_ridge(model, x2)
    np.testing.assert_allclose(mixed, expected, rtol=1e-10, atol=1e-10)


def test_zero_weights_predict_the_intercept():
    model = RidgeModel(np.zeros(2), 4.5, 1.0, ('a', 'b'))
    np.testing.assert_array_equal(predict_ridge(model, np.array([[1.0, 2.0], [-3.0, 8.0]])), [4.5, 4.5])
    single = RidgeModel(np.array([3.0]), -1.0, 1.0, ('a',))
    assert predict_ridge(single, np.array([[0.0]]))[0] == -1.0


def test_prediction_needs_every_fitted_feature():
    X, y = noisy_design()
    model = RidgeModel(*solve_ridge(X, y, l2=1.0), 1.0, tuple(f"x{j}" for j in range(5)))
    with pytest.raises(MissingFeatureError, match='x4'):
        predict_ridge(model, matrix_of(X[:, :4]))
    with pytest.raises(MissingFeatureError):
        predict_ridge(model, X[:, :4])


def test_extra_columns_are_ignored():
    X, y = noisy_design()
    model = RidgeModel(*solve_ridge(X, y, l2=1.0), 1.0, tuple(f"x{j}" for j in range(5)))
    wider = matrix_of(np.column_stack([X[:, ::-1], np.ones(50)]), ['x4', 'x3', 'x2', 'x1', 'x0', 'extra'])
    np.testing.assert_allclose(predict_ridge(model, wider), predict_ridge(model, X), rtol=1e-12)
