import itertools

import numpy as np
import pytest
from _fixtures import random_vector
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from bomtsp.errors import InputError
from bomtsp.harness import fixture_instance
from bomtsp.instance_io import bundled, load_instance
from bomtsp.oracles import min_cut_enumeration
from bomtsp.subtour_lp import (EdgeVector, cut_value, scale_to_tree_polytope, separate_subtour,
                               solve_subtour, stoer_wagner, subtour_violation, violated_cuts)


def points_costs(rng, n):
    p = rng.random((n, 2)) * 100
    return np.linalg.norm(p[:, None] - p[None], axis=2)


def full_subtour_lp(costs):
    """Subtour LP with every cut row written out (n <= 9)."""
    n = len(costs)
    edges = list(itertools.combinations(range(n), 2))
    c = np.array([costs[u, v] for u, v in edges])
    A_eq = np.zeros((n, len(edges)))
    for k, (u, v) in enumerate(edges):
        A_eq[u, k] = A_eq[v, k] = 1
    rows = []
    for r in range(2, n - 1):
        for S in itertools.combinations(range(1, n), r):
            s = set(S)
            rows.append([-1.0 if (u in s) != (v in s) else 0.0 for u, v in edges])
    res = linprog(c, A_ub=np.array(rows), b_ub=-2 * np.ones(len(rows)), A_eq=A_eq,
                  b_eq=2 * np.ones(n), bounds=(0, 1), method="highs")
    assert res.status == 0
    return res.fun


class TestEdgeVector:
    def test_normalized_and_sorted(self):
        x = EdgeVector(3, [(2, 1), (0, 1)], [0.5, 1.0])
        assert [tuple(e) for e in x.edges] == [(0, 1), (1, 2)]
        np.testing.assert_array_equal(x.values, [1.0, 0.5])

    @pytest.mark.parametrize("edges,values", [([(0, 0)], [1.0]), ([(0, 1), (1, 0)], [1, 1]),
                                              ([(0, 1)], [np.nan]), ([(0, 5)], [1.0])])
    def test_rejects_bad_input(self, edges, values):
        with pytest.raises((InputError, ValueError)):
            EdgeVector(3, edges, values)

    def test_text_roundtrip(self):
        x = EdgeVector(4, [(0, 1), (2, 3), (1, 2)], [0.5, 1 / 3, 2 / 3])
        y = EdgeVector.from_text(x.to_text(), 4)
        np.testing.assert_array_equal(x.edges, y.edges)
        np.testing.assert_array_equal(x.values, y.values)

    def test_degrees_and_cost(self):
        x = EdgeVector(3, [(0, 1), (1, 2), (0, 2)], [1, 1, 1])
        np.testing.assert_array_equal(x.degrees(), [2, 2, 2])
        c = np.array([[0, 3, 4], [3, 0, 5], [4, 5, 0]], dtype=float)
        assert x.cost(c) == 12


class TestSeparation:
    def test_two_triangles(self):
        x = EdgeVector(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)], [1.0] * 6)
        side = separate_subtour(x)
        assert sorted(side) in ([0, 1, 2], [3, 4, 5])
        assert cut_value(x, side) == 0

    def test_hamiltonian_cycle(self):
        n = 7
        x = EdgeVector(n, [(i, (i + 1) % n) for i in range(n)], [1.0] * n)
        assert separate_subtour(x) is None
        assert violated_cuts(x) == []

    def test_random_vectors_against_enumeration(self):
        rng = np.random.default_rng(5)
        violated = 0
        for _ in range(50):
            x = random_vector(rng)
            ref, _ = min_cut_enumeration(8, x.as_dict())
            val, side, _ = stoer_wagner(x.dense())
            assert val == pytest.approx(ref, abs=1e-12)
            assert cut_value(x, side) == pytest.approx(ref, abs=1e-12)
            found = separate_subtour(x)
            if ref < 2 - 1e-6:
                violated += 1
                assert found is not None and cut_value(x, found) < 2 - 1e-6
            else:
                assert found is None
        assert 5 < violated < 50

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(3, 9))
    def test_every_reported_cut_is_violated(self, seed, n):
        x = random_vector(np.random.default_rng(seed), n)
        for side in violated_cuts(x):
            assert 0 < len(side) < n
            assert cut_value(x, side) < 2 - 1e-6


class TestSolve:
    def test_unit_square(self):
        sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        c = np.linalg.norm(sq[:, None] - sq[None], axis=2)
        x = solve_subtour(c)
        assert x.cost(c) == pytest.approx(4.0)
        assert x.as_dict() == pytest.approx({(0, 1): 1, (1, 2): 1, (2, 3): 1, (0, 3): 1})

    def test_one_tree_fixture(self):
        costs, xf = fixture_instance()
        x = solve_subtour(costs)
        assert x.cost(costs) == pytest.approx(4.0)
        assert xf.cost(costs) == pytest.approx(4.0)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_full_formulation(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 10))
        c = points_costs(rng, n)
        x = solve_subtour(c, k=3)
        assert x.cost(c) == pytest.approx(full_subtour_lp(c), rel=1e-7)
        np.testing.assert_allclose(x.degrees(), 2, atol=1e-7)
        assert subtour_violation(x) <= 1e-6

    def test_own_simplex_agrees_with_highs(self):
        c = points_costs(np.random.default_rng(42), 12)
        a = solve_subtour(c, method="simplex")
        b = solve_subtour(c, method="highs")
        assert a.cost(c) == pytest.approx(b.cost(c), rel=1e-9)

    def test_pricing_reaches_edges_outside_candidates(self):
        c = points_costs(np.random.default_rng(3), 30)
        stats = {}
        x = solve_subtour(c, k=2, stats=stats)
        ref = solve_subtour(c, k=29)
        assert x.cost(c) == pytest.approx(ref.cost(c), rel=1e-9)
        assert stats["priced_edges"] > 0

    @pytest.mark.parametrize("name,bound", [("eil51", 422.5), ("berlin52", 7542.0)])
    def test_known_bounds(self, name, bound):
        inst = load_instance(bundled(name))
        x = solve_subtour(inst)
        assert x.cost(inst.costs()) == pytest.approx(bound, abs=1e-6)

    def test_integral_optimum_is_a_tour(self):
        # points on a convex curve: the LP optimum is the hull tour
        t = np.linspace(0, 2 * np.pi, 9, endpoint=False)
        p = np.c_[np.cos(t), np.sin(t)]
        c = np.linalg.norm(p[:, None] - p[None], axis=2)
        x = solve_subtour(c).support()
        assert np.allclose(x.values, 1.0)
        assert len(x) == 9
        assert separate_subtour(x) is None


class TestTreeScaling:
    def test_triangle(self):
        z = scale_to_tree_polytope(EdgeVector(3, [(0, 1), (1, 2), (0, 2)], [1, 1, 1]))
        np.testing.assert_allclose(z.values, [2 / 3] * 3)

    def test_four_cycle(self):
        z = scale_to_tree_polytope(EdgeVector(4, [(0, 1), (1, 2), (2, 3), (0, 3)], [1] * 4))
        np.testing.assert_allclose(z.values, 0.75)
        assert z.values.sum() == pytest.approx(3)

    def test_small_sets_satisfy_tree_constraints(self):
        c = points_costs(np.random.default_rng(10), 10)
        z = scale_to_tree_polytope(solve_subtour(c))
        d = z.as_dict()
        assert sum(d.values()) == pytest.approx(9)
        for r in range(2, 6):
            for S in itertools.combinations(range(10), r):
                inside = sum(v for (a, b), v in d.items() if a in S and b in S)
                assert inside <= r - 1 + 1e-9
