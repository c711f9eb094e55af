import itertools

import numpy as np
import pytest

from gpnqap.errors import DimensionMismatch, NonPositiveBest, NotAPermutation
from gpnqap.instances import (GeneratorConfig, QapInstance, Source, TspInstance, generate_qap,
                              generate_tsp_matrix, load_bundled, tsp_to_qap)
from gpnqap.solver import (MatrixTspGpn, TwoStageGpn, decode_qap_batch, evaluate_qap_cost,
                           evaluate_tour, gap_percent, minmax, solve_matrix_tsp, solve_qap)

from oracles import brute_qap, brute_tsp, qap_cost_loops, tour_loops

SMALL = dict(hidden_dim=16, layers=2)


def tsp_model(seed=0, lstm=False):
    return MatrixTspGpn(use_lstm=lstm, rng=np.random.default_rng(seed), **SMALL)


def qap_model(seed=0):
    return TwoStageGpn(rng=np.random.default_rng(seed), **SMALL)


def test_objectives():
    q = generate_qap(GeneratorConfig(5, seed=1))
    perm = np.array([2, 4, 3, 1, 0])
    assert evaluate_qap_cost(q, perm) == pytest.approx(qap_cost_loops(q.dist, q.flow, perm))
    ident = evaluate_qap_cost(q, np.arange(5))
    assert ident == pytest.approx(sum(q.dist[i, j] * q.flow[i, j] for i in range(5) for j in range(5)
                                      if i != j))
    t = generate_tsp_matrix(GeneratorConfig(6, seed=2))
    assert evaluate_tour(t, np.arange(6)) == pytest.approx(tour_loops(t.dist, range(6)))
    with pytest.raises(NotAPermutation):
        evaluate_qap_cost(q, [0, 0, 1, 2, 3])
    with pytest.raises(NotAPermutation):
        evaluate_tour(t, [0, 1, 2])
    with pytest.raises(NotAPermutation):
        evaluate_tour(t, np.arange(6) + 0.0)


def test_figure_two_semantics():
    # 1-based solution [2,4,3,1]: factory 1 -> location 2, factory 2 -> location 4, ...
    perm = np.array([2, 4, 3, 1]) - 1
    q = QapInstance("f", np.arange(16.0).reshape(4, 4), np.eye(4))
    assert evaluate_qap_cost(q, perm) == sum(q.dist[perm[i], perm[i]] for i in range(4))


def test_gap_percent():
    assert round(gap_percent(596.8, 538), 2) == 10.93
    assert round(gap_percent(712.0, 538), 2) == 32.34
    assert gap_percent(7.5, 7.5) == 0.0
    with pytest.raises(NonPositiveBest):
        gap_percent(1.0, 0.0)


def test_minmax():
    v = np.array([[3.0, 1.0, 5.0, 9.0]])
    m = np.array([[False, False, False, True]])
    np.testing.assert_array_equal(minmax(v, m), [[0.5, 0.0, 1.0, 0.0]])
    np.testing.assert_array_equal(minmax(np.full((1, 3), 4.0)), [[0, 0, 0]])
    f = np.stack([v[0], -v[0]], axis=-1)[None]
    out = minmax(f)
    np.testing.assert_allclose(out[0, :, 0], [0.25, 0, 0.5, 1])
    np.testing.assert_allclose(out[0, :, 1], [0.75, 1, 0.5, 0])


def test_tsp_two_cities_and_uniform_model():
    t = TspInstance("two", [[0, 3], [4, 0]], Source.EXPLICIT_MATRIX)
    sol = solve_matrix_tsp(tsp_model(), t)
    assert sol.one_based() == [1, 2] and sol.cost == 7.0
    m = tsp_model(1)
    m.params["v"].data[:] = 0.0
    t = generate_tsp_matrix(GeneratorConfig(8, seed=3))
    assert solve_matrix_tsp(m, t).one_based() == list(range(1, 9))
    with pytest.raises(DimensionMismatch):
        solve_matrix_tsp(m, TspInstance("one", [[0.0]], Source.EXPLICIT_MATRIX))


@pytest.mark.parametrize("lstm", [False, True])
def test_tsp_greedy_not_below_optimum(lstm):
    t = generate_tsp_matrix(GeneratorConfig(7, seed=4))
    sol = solve_matrix_tsp(tsp_model(2, lstm), t)
    assert sol.perm[0] == 0
    assert sol.cost >= brute_tsp(t.dist) - 1e-12
    assert sol.cost == evaluate_tour(t, sol.perm)
    assert np.isfinite(sol.log_prob_sum) and sol.log_prob_sum <= 0


def test_qap_two_and_tiny():
    q = generate_qap(GeneratorConfig(2, seed=0))
    sol = solve_qap(qap_model(), q)
    assert sorted(sol.perm) == [0, 1]
    assert sol.cost == evaluate_qap_cost(q, sol.perm)
    one = QapInstance("one", [[2.0]], [[3.0]])
    assert solve_qap(qap_model(), one).cost == 6.0


def test_qap_sampled_decodes_bracket_optimum():
    q = QapInstance("r6", *(np.random.default_rng(5).uniform(0, 1, (2, 6, 6))))
    opt = brute_qap(q.dist, q.flow)
    model = qap_model(3)
    rng = np.random.default_rng(0)
    perms, logp, first = decode_qap_batch(model, np.repeat(q.dist[None], 256, 0),
                                          np.repeat(q.flow[None], 256, 0), "sample", rng)
    costs = [evaluate_qap_cost(q, p) for p in perms]
    assert min(costs) >= opt - 1e-12
    assert all(sorted(p) == list(range(6)) for p in perms)
    assert (perms[np.arange(256), first[:, 0]] == first[:, 1]).all()
    assert np.isfinite(logp.data).all()


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_qap_on_reduced_tsp_matches_tour(n):
    t = generate_tsp_matrix(GeneratorConfig(n, seed=n))
    sol = solve_qap(qap_model(n), tsp_to_qap(t))
    assert sol.cost == pytest.approx(evaluate_tour(t, sol.perm), rel=1e-12)


def test_greedy_deterministic_and_scale_invariant():
    q = load_bundled("had12")
    m = qap_model(7)
    a, b = solve_qap(m, q), solve_qap(m, q)
    assert np.array_equal(a.perm, b.perm) and a.cost == b.cost
    scaled = QapInstance("s", q.dist * 3.5, q.flow)
    c = solve_qap(m, scaled)
    assert np.array_equal(c.perm, a.perm) and c.cost == pytest.approx(3.5 * a.cost)
    t = generate_tsp_matrix(GeneratorConfig(10, seed=8))
    tm = tsp_model(9)
    t2 = TspInstance("s", t.dist * 7.0, Source.EXPLICIT_MATRIX)
    assert np.array_equal(solve_matrix_tsp(tm, t).perm, solve_matrix_tsp(tm, t2).perm)


def test_batch_decode_matches_single():
    qs = [generate_qap(GeneratorConfig(6, seed=s)) for s in range(4)]
    model = qap_model(11)
    perms, _, _ = decode_qap_batch(model, np.stack([q.dist for q in qs]),
                                   np.stack([q.flow for q in qs]))
    for q, p in zip(qs, perms):
        assert np.array_equal(solve_qap(model, q).perm, p)


def test_log_prob_sum_reproducible_from_seed():
    q = generate_qap(GeneratorConfig(4, seed=12))
    model = qap_model(13)
    sol = solve_qap(model, q)
    assert sol.log_prob_sum <= 0
    n2 = TwoStageGpn(rng=np.random.default_rng(13), **SMALL)
    assert solve_qap(n2, q).log_prob_sum == sol.log_prob_sum


def test_exhaustive_small_tsp_brute_force_agreement():
    t = generate_tsp_matrix(GeneratorConfig(5, seed=14))
    best = min(evaluate_tour(t, np.array((0,) + p)) for p in itertools.permutations(range(1, 5)))
    assert best == pytest.approx(brute_tsp(t.dist))
