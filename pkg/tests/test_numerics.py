import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cellgw.numerics import (
    BracketError,
    ConvergenceError,
    SingularMatrixError,
    find_root_bracketed,
    power_iteration,
    solve_linear,
)

from oracles import char_poly, dominant_root


@pytest.mark.parametrize(
    "A, b, expected",
    [
        (np.eye(3), [1, 2, 3], [1, 2, 3]),
        ([[2, 0], [0, 4]], [2, 8], [1, 2]),
        ([[1, -0.25], [0, 1]], [0.5, 0], [0.5, 0]),
    ],
)
def test_solve_linear_examples(A, b, expected):
    np.testing.assert_allclose(solve_linear(A, b), expected, atol=1e-14)


def test_solve_linear_needs_pivoting():
    A = [[0.0, 1.0], [1.0, 0.0]]
    np.testing.assert_allclose(solve_linear(A, [3, 4]), [4, 3])


def test_solve_linear_does_not_modify_inputs():
    A = np.array([[4.0, 1.0], [2.0, 3.0]])
    b = np.array([1.0, 2.0])
    solve_linear(A, b)
    np.testing.assert_array_equal(A, [[4.0, 1.0], [2.0, 3.0]])
    np.testing.assert_array_equal(b, [1.0, 2.0])


def test_solve_linear_singular():
    with pytest.raises(SingularMatrixError):
        solve_linear([[1, 2], [2, 4]], [1, 2])


def test_solve_linear_shape_errors():
    with pytest.raises(ValueError):
        solve_linear([[1, 2, 3]], [1])
    with pytest.raises(ValueError):
        solve_linear(np.eye(2), [1, 2, 3])


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1, 12).flatmap(
        lambda k: st.tuples(
            arrays(float, (k, k), elements=st.floats(-1, 1)),
            arrays(float, k, elements=st.floats(-100, 100)),
        )
    )
)
def test_solve_linear_residual_diagonally_dominant(data):
    A, b = data
    A = A + np.diag(np.abs(A).sum(axis=1) + 0.5)
    x = solve_linear(A, b)
    assert np.abs(A @ x - b).max() <= 1e-9 * (1 + np.abs(b).max())


def test_power_iteration_examples():
    assert power_iteration([[0.5]]).value == pytest.approx(0.5, abs=1e-12)
    pair = power_iteration([[2, 0], [0, 1]])
    assert pair.value == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(pair.right, [1, 0], atol=1e-10)
    pair = power_iteration([[1, 1], [1, 1]])
    assert pair.value == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(pair.right / pair.right[0], [1, 1], atol=1e-10)


def test_power_iteration_rejects_negative_entries():
    with pytest.raises(ValueError):
        power_iteration([[1, -1], [0, 1]])


def test_power_iteration_nonconvergence_for_periodic_matrix():
    with pytest.raises(ConvergenceError) as info:
        power_iteration([[0, 2], [1, 0]], max_iter=500)
    assert info.value.residual > 0


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 4).flatmap(lambda k: arrays(float, (k, k), elements=st.floats(0.05, 3.0))))
def test_power_iteration_matches_characteristic_polynomial(A):
    pair = power_iteration(A)
    assert pair.value == pytest.approx(dominant_root(A), abs=1e-8)
    assert np.abs(A @ pair.right - pair.value * pair.right).max() <= 1e-10
    assert np.abs(pair.left @ A - pair.value * pair.left).max() <= 1e-10
    assert np.all(pair.left >= 0) and np.all(pair.right >= 0)


def test_char_poly_oracle_on_known_matrix():
    # (x-1)(x-3) = x^2 - 4x + 3
    np.testing.assert_allclose(char_poly([[2, 1], [1, 2]]), [1, -4, 3])


def test_find_root_examples():
    assert find_root_bracketed(lambda y: y - 0.5, 0, 1) == pytest.approx(0.5, abs=1e-12)
    assert find_root_bracketed(lambda y: y * y - 2, 1, 2) == pytest.approx(1.414213562, abs=1e-9)
    y1 = find_root_bracketed(lambda y: y - y**3 - 0.3, 0, 1 / np.sqrt(3))
    assert int(np.ceil(100 * y1)) - 15 == 19


def test_find_root_invalid_bracket():
    with pytest.raises(BracketError):
        find_root_bracketed(lambda y: y * y + 1, -1, 1)


@given(st.floats(-50, 50), st.floats(0.1, 10))
def test_find_root_keeps_sign_change(c, width):
    root = find_root_bracketed(lambda y: y - c, c - width, c + width * 0.7)
    assert abs(root - c) < 1e-9
