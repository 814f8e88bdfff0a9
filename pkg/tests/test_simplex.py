import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from reference import qp_projection
from rlpin.simplex import (
    as_simplex_point,
    is_simplex_point,
    nearest_vertex_distance,
    perturb,
    project_to_simplex,
    sample_index,
    sample_rows,
    vertex_distance,
)

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
vectors = st.integers(1, 10).flatmap(lambda m: arrays(np.float64, m, elements=finite))


@pytest.mark.parametrize(
    "v, expected",
    [
        ((0.3, 0.7), (0.3, 0.7)),
        ((0.6, 0.6), (0.5, 0.5)),
        ((1.5, -0.5), (1.0, 0.0)),
    ],
)
def test_projection_examples(v, expected):
    np.testing.assert_allclose(project_to_simplex(v), expected, atol=1e-15)


def test_projection_of_member_is_exact_identity():
    x = np.array([0.2, 0.5, 0.3])
    assert np.array_equal(project_to_simplex(x), x)


@pytest.mark.parametrize("bad", [[], [np.nan, 1.0], [np.inf, 0.0]])
def test_projection_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        project_to_simplex(bad)


def test_projection_rowwise_matches_single():
    rng = np.random.default_rng(3)
    V = rng.uniform(-2, 2, size=(20, 5))
    P = project_to_simplex(V)
    for v, p in zip(V, P):
        np.testing.assert_array_equal(p, project_to_simplex(v))


@given(vectors)
def test_projection_is_idempotent(v):
    p = project_to_simplex(v)
    assert np.array_equal(project_to_simplex(p), p)


@given(vectors)
def test_projection_lands_on_simplex(v):
    p = project_to_simplex(v)
    assert p.min() >= 0.0
    assert abs(p.sum() - 1.0) <= 1e-12


@given(vectors)
@settings(max_examples=200)
def test_projection_matches_active_set_oracle(v):
    np.testing.assert_allclose(project_to_simplex(v), qp_projection(v), atol=1e-9, rtol=0)


def test_perturb_examples():
    np.testing.assert_allclose(perturb([1.0, 0.0], 0.1), [0.95, 0.05])
    np.testing.assert_array_equal(perturb([0.2, 0.5, 0.3], 0.0), [0.2, 0.5, 0.3])
    np.testing.assert_allclose(perturb([0.5, 0.5], 0.4), [0.5, 0.5])


@pytest.mark.parametrize("lam", [-0.1, 1.5])
def test_perturb_rejects_lambda_out_of_range(lam):
    with pytest.raises(ValueError):
        perturb([0.5, 0.5], lam)


@given(
    st.integers(1, 8).flatmap(lambda m: arrays(np.float64, m, elements=st.floats(0, 1))),
    st.floats(0, 1),
)
def test_perturb_floor_and_sum(raw, lam):
    if raw.sum() == 0:
        raw = np.ones_like(raw)
    x = raw / raw.sum()
    s = perturb(x, lam)
    assert s.min() >= lam / x.size - 1e-15
    assert abs(s.sum() - 1.0) <= 1e-12


def test_sample_index_vertex_is_deterministic():
    rng = np.random.default_rng(0)
    assert {sample_index([0.0, 1.0, 0.0], rng) for _ in range(1000)} == {1}


@pytest.mark.parametrize("p", [[0.5, 0.5], [1 / 3, 1 / 3, 1 / 3]])
def test_sample_index_frequencies(p):
    # 1e5 draws: binomial sd <= 0.0016, so 0.01 is > 6 sd (two-sided p < 1e-6 per index).
    rng = np.random.default_rng(12345)
    draws = np.array([sample_index(p, rng) for _ in range(100_000)])
    freq = np.bincount(draws, minlength=len(p)) / draws.size
    np.testing.assert_allclose(freq, p, atol=0.01)


def test_sample_index_reproducible():
    a = [sample_index([0.2, 0.3, 0.5], np.random.default_rng(9)) for _ in range(1)]
    r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
    s1 = [sample_index([0.2, 0.3, 0.5], r1) for _ in range(200)]
    s2 = [sample_index([0.2, 0.3, 0.5], r2) for _ in range(200)]
    assert s1 == s2 and s1[0] == a[0]


def test_sample_rows_never_picks_zero_mass_tail():
    P = np.array([[0.1, 0.2, 0.7 - 1e-17, 0.0]])
    for u in (0.0, 0.5, np.nextafter(1.0, 0.0)):
        assert sample_rows(P, np.array([u]))[0] < 3


def test_vertex_distance_examples():
    assert vertex_distance([[1.0, 0.0], [0.0, 1.0]], (0, 1)) == 0.0
    assert vertex_distance([[0.9, 0.1]], (0,)) == pytest.approx(0.1)
    assert vertex_distance([[0.9, 0.1], [0.3, 0.7]], (0, 1)) == pytest.approx(0.3)


def test_vertex_distance_dimension_mismatch():
    with pytest.raises(ValueError):
        vertex_distance([[0.5, 0.5]], (0, 1))
    with pytest.raises(ValueError):
        vertex_distance([[0.5, 0.5]], (2,))


def test_nearest_vertex_distance_agrees_with_loop():
    rng = np.random.default_rng(1)
    X = rng.dirichlet(np.ones(3), size=4)
    profiles = rng.integers(0, 3, size=(10, 4))
    expected = min(vertex_distance(X, p) for p in profiles)
    assert nearest_vertex_distance(X, profiles) == pytest.approx(expected, abs=1e-15)


def test_as_simplex_point_validation():
    assert is_simplex_point([0.25, 0.75])
    assert not is_simplex_point([0.5, 0.6])
    assert not is_simplex_point([-0.1, 1.1])
    with pytest.raises(ValueError):
        as_simplex_point([])
