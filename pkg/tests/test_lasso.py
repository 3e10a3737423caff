"""Coordinate-descent solver correctness and the selection stage built on it."""

import numpy as np
import pytest

from tbmcast.dataset import FeatureSchema, SplitSpec
from tbmcast.errors import NumericError, ValidationError
from tbmcast.lasso import (
    DEFAULT_THRESHOLD,
    LassoModel,
    TargetSelection,
    choose_lambda,
    fit_lasso,
    kkt_max_violation,
    lambda_grid,
    lambda_max,
    lasso_path,
    objective_value,
    read_selection_csv,
    run_feature_selection,
    select_features,
    soft_threshold,
    union_features,
    write_selection_csv,
)
from tbmcast.synthetic import default_spec, generate_series

from oracles import prox_lasso


def random_problem(seed, n=40, p=6, rho=0.0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    if rho:
        X += rho * rng.normal(size=(n, 1))  # common factor -> correlated columns
    beta = rng.normal(size=p)
    y = X @ beta + 0.5 * rng.normal(size=n)
    return X, y


# ---------------------------------------------------------------------------
# scalar pieces


def test_soft_threshold_closed_form():
    assert soft_threshold(2.0, 0.5) == 1.5
    assert soft_threshold(-2.0, 0.5) == -1.5
    assert soft_threshold(0.3, 0.5) == 0.0
    assert soft_threshold(-0.3, 0.5) == 0.0
    assert soft_threshold(0.5, 0.5) == 0.0  # boundary collapses to zero


def test_single_coordinate_solution_is_the_thresholded_correlation():
    # unit-norm centered design, x'y = 2, lam = 0.5 -> beta = 1.5 exactly;
    # every value below is a dyadic rational so the arithmetic is exact
    x = np.array([[-0.5], [0.5], [-0.5], [0.5]])
    y = np.array([-1.0, 1.0, -1.0, 1.0])
    assert float(x[:, 0] @ x[:, 0]) == 1.0 and float(x[:, 0] @ y) == 2.0
    model = fit_lasso(x, y, 0.5, standardize=False)
    assert model.beta[0] == 1.5
    assert model.beta0 == 0.0


# ---------------------------------------------------------------------------
# solver vs closed forms


def test_unpenalized_fit_matches_least_squares():
    X, y = random_problem(0)
    model = fit_lasso(X, y, 0.0)
    design = np.column_stack([X, np.ones(len(y))])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    np.testing.assert_allclose(model.beta_original, coef[:-1], atol=1e-6)
    assert abs(model.beta0 - coef[-1]) < 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_lambda_max_zeroes_every_coefficient_exactly(seed):
    X, y = random_problem(seed, n=25, p=7, rho=0.6)
    lmax = lambda_max(X, y)
    for lam in (lmax, lmax * 1.5, lmax * 10.0):
        model = fit_lasso(X, y, lam)
        assert np.count_nonzero(model.beta) == 0
        assert model.beta0 == pytest.approx(float(y.mean()), abs=0.0)
    just_below = fit_lasso(X, y, lmax * 0.999)
    assert np.count_nonzero(just_below.beta) >= 1


def test_penalty_shrinks_toward_zero_monotonically():
    X, y = random_problem(3)
    norms = [
        float(np.abs(fit_lasso(X, y, lam).beta).sum())
        for lam in (0.0, 1.0, 5.0, 20.0, 100.0)
    ]
    assert all(a >= b - 1e-12 for a, b in zip(norms, norms[1:]))


# ---------------------------------------------------------------------------
# solver vs an independent solver


def test_matches_proximal_gradient_reference():
    rng = np.random.default_rng(42)
    X = rng.normal(size=(20, 3))
    y = X @ np.array([1.0, 0.0, -2.0]) + 0.3 * rng.normal(size=20)
    model = fit_lasso(X, y, 0.7)
    reference = prox_lasso(X, y, 0.7, n_iter=300_000)
    np.testing.assert_allclose(model.beta, reference, atol=1e-5)


def test_kkt_conditions_hold_at_the_reported_solution():
    for seed in range(5):
        X, y = random_problem(seed, n=30, p=8, rho=0.4)
        for lam in (0.5, 3.0, 12.0):
            model = fit_lasso(X, y, lam, tol=1e-8)
            assert model.converged
            assert kkt_max_violation(model, X, y) <= 10 * 1e-8 * len(y)


def test_objective_never_increases_with_more_sweeps():
    X, y = random_problem(9, n=30, p=6, rho=0.5)
    values = [
        objective_value(fit_lasso(X, y, 2.0, max_iter=k), X, y)
        for k in range(1, 10)
    ]
    assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))


def test_warm_start_agrees_with_cold_start():
    X, y = random_problem(5)
    grid = lambda_grid(lambda_max(X, y), 8)
    path = lasso_path(X, y, grid)
    cold = fit_lasso(X, y, float(grid[-1]))
    np.testing.assert_allclose(path[-1].beta, cold.beta, atol=1e-8)


def test_support_grows_as_lambda_decreases():
    X, y = random_problem(7, n=60, p=6)
    grid = lambda_grid(lambda_max(X, y), 20)
    sizes = [int(np.count_nonzero(m.beta)) for m in lasso_path(X, y, grid)]
    assert sizes[0] == 0
    assert all(a <= b for a, b in zip(sizes, sizes[1:]))
    assert sizes[-1] > 0


def test_predict_is_affine_in_the_original_units():
    X, y = random_problem(12)
    model = fit_lasso(X, y, 1.0)
    preds = model.predict(X)
    np.testing.assert_allclose(preds, X @ model.beta_original + model.beta0)


# ---------------------------------------------------------------------------
# input validation


def test_fit_rejects_bad_inputs():
    with pytest.raises(ValidationError):
        fit_lasso(np.zeros((3, 2)), np.zeros(3), -1.0)
    with pytest.raises(ValidationError):
        fit_lasso(np.zeros((3, 2)), np.zeros(4), 1.0)
    with pytest.raises(ValidationError):
        fit_lasso(np.zeros((1, 2)), np.zeros(1), 1.0)
    with pytest.raises(NumericError):
        fit_lasso(np.array([[1.0, np.nan], [0.0, 1.0]]), np.zeros(2), 1.0)
    with pytest.raises(NumericError):
        fit_lasso(np.ones((3, 2)), np.array([1.0, np.inf, 0.0]), 1.0)


def test_constant_column_gets_zero_weight():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(30, 3))
    X[:, 1] = 4.2
    y = X[:, 0] + rng.normal(size=30) * 0.1
    model = fit_lasso(X, y, 0.5)
    assert model.beta[1] == 0.0


# ---------------------------------------------------------------------------
# lambda choice


def test_lambda_grid_spans_three_decades():
    grid = lambda_grid(10.0, 50)
    assert len(grid) == 50
    assert grid[0] == pytest.approx(10.0)
    assert grid[-1] == pytest.approx(0.01)
    assert np.all(np.diff(grid) < 0)


def test_choose_lambda_returns_a_grid_value():
    X, y = random_problem(2, n=50, p=5)
    lam, grid, errors = choose_lambda(X, y, n_lambdas=25)
    assert lam in set(float(g) for g in grid)
    assert errors.shape == (25,)
    assert np.isfinite(errors).all()


def test_choose_lambda_prefers_the_sparse_end_of_flat_regions():
    # strong 2-sparse signal: everything from the flat minimum region works,
    # so the pick must be the largest qualifying lam, not the raw argmin
    rng = np.random.default_rng(6)
    X = rng.normal(size=(120, 8))
    y = 3.0 * X[:, 1] - 2.0 * X[:, 5] + 0.05 * rng.normal(size=120)
    lam, grid, errors = choose_lambda(X, y)
    chosen_idx = list(grid).index(lam)
    assert chosen_idx <= int(np.argmin(errors))


def test_choose_lambda_needs_enough_rows():
    with pytest.raises(ValidationError):
        choose_lambda(np.zeros((2, 2)), np.zeros(2))


# ---------------------------------------------------------------------------
# thresholded selection


def selection_schema():
    return FeatureSchema(names=("s0", "s1", "s2"), target_indices=(0,))


def test_selection_drops_sub_threshold_coefficients():
    model = LassoModel(
        beta=np.array([29.912, 0.0005, -9.126]),
        beta0=0.0,
        lam=1.0,
        mean=np.zeros(3),
        scale=np.ones(3),
        beta_original=np.array([29.912, 0.0005, -9.126]),
        converged=True,
        n_sweeps=1,
    )
    indices, report = select_features(model, 1e-3, selection_schema())
    assert indices == (0, 2)
    assert [name for name, _ in report] == ["s0", "s2"]  # descending magnitude
    assert report[0][1] == pytest.approx(29.912)


def test_selection_maps_design_columns_back_to_schema_indices():
    model = LassoModel(
        beta=np.array([0.0, 2.0]),
        beta0=0.0,
        lam=1.0,
        mean=np.zeros(2),
        scale=np.ones(2),
        beta_original=np.array([0.0, 2.0]),
        converged=True,
        n_sweeps=1,
    )
    schema = FeatureSchema(names=("a", "b", "c", "d"), target_indices=(0,))
    indices, report = select_features(model, 1e-3, schema, columns=(1, 3))
    assert indices == (3,)
    assert report == [("d", 2.0)]
    with pytest.raises(ValidationError):
        select_features(model, 1e-3, schema, columns=(1, 2, 3))


def test_input_indices_always_contain_the_target():
    sel = TargetSelection(
        target_key="torque", target_index=5, retained=(2, 9),
        coefficients=(1.0, -1.0), standardized=(1.0, -1.0),
    )
    assert sel.input_indices() == (2, 5, 9)
    empty = TargetSelection("torque", 5, (), (), ())
    assert empty.input_indices() == (5,)


def test_union_merges_and_keeps_targets():
    a = TargetSelection("torque", 0, (3, 4), (1.0, 1.0), (1.0, 1.0))
    b = TargetSelection("thrust", 1, (4, 6), (1.0, 1.0), (1.0, 1.0))
    union = union_features({"torque": a, "thrust": b}, (0, 1, 2))
    assert union == (0, 1, 2, 3, 4, 6)


# ---------------------------------------------------------------------------
# the full selection stage


@pytest.fixture(scope="module")
def small_synthetic():
    spec = default_spec(seed=1, n_features=44, length=1000)
    series, supports = generate_series(spec)
    return series, supports, SplitSpec(train_end=900, total=1000)


def test_run_feature_selection_excludes_the_target_itself(small_synthetic):
    series, _, split = small_synthetic
    selection = run_feature_selection(series, split)
    for key, sel in selection.per_target.items():
        assert sel.target_index not in sel.retained
        assert sel.target_index in sel.input_indices()
        assert len(sel.retained) == len(sel.coefficients)
    targets = series.schema.target_indices
    assert set(targets) <= set(selection.union)
    assert selection.union == tuple(sorted(selection.union))


def test_run_feature_selection_with_huge_lambda_keeps_only_targets(small_synthetic):
    series, _, split = small_synthetic
    selection = run_feature_selection(series, split, lam=1e12)
    for sel in selection.per_target.values():
        assert sel.retained == ()
        assert sel.input_indices() == (sel.target_index,)
    assert selection.union == tuple(sorted(series.schema.target_indices))


def test_run_feature_selection_recovers_a_known_support(small_synthetic):
    series, supports, split = small_synthetic
    selection = run_feature_selection(series, split)
    for key, sel in selection.per_target.items():
        assert set(sel.retained) == set(supports[key])


def test_selection_csv_round_trip(tmp_path, small_synthetic):
    series, _, split = small_synthetic
    selection = run_feature_selection(series, split, lam=None)
    path = tmp_path / "selection.csv"
    write_selection_csv(selection, series.schema, path)
    loaded = read_selection_csv(path, series.schema)
    for key, sel in selection.per_target.items():
        other = loaded.per_target[key]
        assert other.retained == sel.retained
        assert other.coefficients == sel.coefficients  # repr round-trips exactly
    assert loaded.union == selection.union


def test_selection_csv_rejects_foreign_headers(tmp_path, small_synthetic):
    series, _, _ = small_synthetic
    path = tmp_path / "bad.csv"
    path.write_text("feature,a,b,c\n")
    with pytest.raises(ValidationError):
        read_selection_csv(path, series.schema)


def test_default_threshold_value():
    assert DEFAULT_THRESHOLD == 1e-3
