import itertools
import json

import numpy as np
import pytest

from reference import brute_drift, brute_expected_payoff, brute_nash, brute_utility
from rlpin.errors import GameTooLargeError
from rlpin.game import GameSpec, Platform
from rlpin.oracle import (
    enumerate_pure_nash,
    expected_payoff_vector,
    is_stationary,
    mean_field_drift,
    pure_profile_strategies,
    utility_table,
)
from rlpin.simplex import perturb

UNIT2 = Platform((1.0, 1.0))
UNIT3 = Platform((1.0, 1.0, 1.0))
ANTI = GameSpec(UNIT2, (1.0, 1.0))
EXP1 = GameSpec(UNIT3, (1.0, 1.0, 0.5, 1.0), gamma=0.04)


def random_small_game(rng):
    n, m = int(rng.integers(1, 5)), int(rng.integers(1, 4))
    return GameSpec(
        Platform((1.0,) * m, tuple(rng.uniform(0, 0.5, size=m))),
        tuple(rng.uniform(0.25, 1.0, size=n)),
        gamma=float(rng.choice([0.0, 0.02, 0.04])),
    )


def test_anticoordination_nash():
    rep = enumerate_pure_nash(ANTI)
    assert rep.pure_nash == {(0, 1), (1, 0)}
    assert rep.efficient == {(0, 1), (1, 0)}
    assert rep.strict_nash == {(0, 1), (1, 0)}
    assert rep.f_values[(0, 1)] == 1.0 and rep.f_values[(0, 0)] == 0.5


def test_single_agent_nash_is_argmax():
    g = GameSpec(Platform((1.0, 2.0, 2.0), (0.0, 0.5, 0.0)), (1.5,))
    rep = enumerate_pure_nash(g)
    assert rep.pure_nash == rep.efficient == {(2,)}


def test_experiment1_efficient_structure():
    rep = enumerate_pure_nash(EXP1)
    nash, eff = brute_nash(EXP1)
    assert rep.pure_nash == nash and rep.efficient == eff
    assert len(rep.efficient) == 18
    for p in rep.efficient:
        unit = (p[0], p[1], p[3])
        assert len(set(unit)) == 3  # three unit-demand threads on distinct CPUs
    # the half-demand thread is indifferent, so no equilibrium is strict
    assert rep.strict_nash == set()


@pytest.mark.parametrize("seed", range(10))
def test_nash_matches_brute_force_on_random_games(seed):
    g = random_small_game(np.random.default_rng(seed))
    rep = enumerate_pure_nash(g)
    nash, eff = brute_nash(g)
    assert rep.pure_nash == nash
    assert rep.efficient == eff
    assert rep.efficient <= rep.pure_nash


def test_nash_invariant_under_relabeling():
    g = GameSpec(UNIT3, (1.0, 0.5, 0.75, 1.0), gamma=0.02)
    perm = (2, 0, 3, 1)
    h = GameSpec(UNIT3, tuple(g.demands[i] for i in perm), gamma=0.02)
    rg, rh = enumerate_pure_nash(g), enumerate_pure_nash(h)
    relabel = {tuple(p[i] for i in perm) for p in rg.pure_nash}
    assert relabel == rh.pure_nash


def test_enumeration_cap():
    big = GameSpec(Platform((1.0,) * 4), (1.0,) * 11)
    with pytest.raises(GameTooLargeError):
        enumerate_pure_nash(big)
    with pytest.raises(GameTooLargeError):
        mean_field_drift(np.full((11, 4), 0.25), big, 0.0)


def test_report_json_is_one_based_and_sorted():
    d = json.loads(enumerate_pure_nash(ANTI).to_json())
    assert d["pure_nash"] == [[1, 2], [2, 1]]
    assert d["f_values"]["1,1"] == 0.5
    assert d["n_profiles"] == 4


def test_expected_payoff_at_vertices():
    prof = (0, 2, 1, 1)
    sigma = pure_profile_strategies(prof, 3)
    for i in range(4):
        vec = expected_payoff_vector(sigma, EXP1, i)
        for j in range(3):
            q = prof[:i] + (j,) + prof[i + 1 :]
            assert vec[j] == pytest.approx(brute_utility(q, EXP1), abs=1e-14)


def test_expected_payoff_single_agent():
    g = GameSpec(Platform((1.0, 0.5)), (1.0,))
    np.testing.assert_allclose(expected_payoff_vector([[0.3, 0.7]], g, 0), [1.0, 0.5])


def test_expected_payoff_uniform_opponent():
    sigma = [[0.9, 0.1], [0.5, 0.5]]
    vec = expected_payoff_vector(sigma, ANTI, 0)
    # each CPU: half the time alone (1.0), half shared (0.5)
    np.testing.assert_allclose(vec, [0.75, 0.75])
    rng = np.random.default_rng(0)
    opp = rng.integers(0, 2, size=200_000)
    mc = [np.mean(np.where(opp == j, 0.5, 1.0)) for j in range(2)]
    np.testing.assert_allclose(vec, mc, atol=0.005)


def test_expected_payoff_matches_brute_force():
    rng = np.random.default_rng(11)
    sigma = rng.dirichlet(np.ones(3), size=4)
    for i in range(4):
        np.testing.assert_allclose(
            expected_payoff_vector(sigma, EXP1, i), brute_expected_payoff(sigma, EXP1, i), atol=1e-13
        )


def test_drift_zero_at_vertices_without_perturbation():
    for prof in itertools.product(range(3), repeat=4):
        rep = mean_field_drift(pure_profile_strategies(prof, 3), EXP1, 0.0)
        assert rep.sup_norm == 0.0


def test_drift_single_agent_two_cpus():
    g = GameSpec(Platform((1.0, 0.6)), (1.0,))
    u1, u2 = 1.0, 0.6
    rep = mean_field_drift([[0.5, 0.5]], g, 0.0)
    expected = 0.25 * (u1 - u2) * np.array([1.0, -1.0])
    np.testing.assert_allclose(rep.drift[0], expected, atol=1e-15)


def test_drift_matches_brute_force():
    rng = np.random.default_rng(5)
    for lam in (0.0, 0.005, 0.3):
        x = rng.dirichlet(np.ones(3), size=4)
        np.testing.assert_allclose(mean_field_drift(x, EXP1, lam).drift, brute_drift(x, EXP1, lam), atol=1e-13)


def test_drift_is_tangent_to_simplex():
    rng = np.random.default_rng(8)
    for _ in range(20):
        g = random_small_game(rng)
        x = rng.dirichlet(np.ones(g.n_cpus), size=g.n_agents)
        d = mean_field_drift(x, g, float(rng.uniform(0, 0.1))).drift
        assert np.abs(d.sum(axis=1)).max() <= 1e-12


def test_drift_bound_at_efficient_profile():
    u_max = utility_table(EXP1).max()
    lam = 0.005
    for prof in enumerate_pure_nash(EXP1).efficient:
        rep = mean_field_drift(pure_profile_strategies(prof, 3), EXP1, lam)
        assert rep.sup_norm <= 2 * lam * u_max


def test_is_stationary_examples():
    assert is_stationary(pure_profile_strategies((0, 0), 2), ANTI, 0.0, 1e-12)
    x = [[0.7, 0.3], [0.5, 0.5]]
    # agent 2 sees payoffs (0.65, 0.85): strictly better to move to CPU 2
    assert not is_stationary(x, ANTI, 0.0, 1e-6)
    lam = 0.005
    u_max = 1.0
    vertex = pure_profile_strategies((0, 1), 2)
    assert is_stationary(vertex, ANTI, lam, 3 * lam * u_max)
    assert is_stationary(perturb(vertex, lam), ANTI, lam, 3 * lam * u_max)
