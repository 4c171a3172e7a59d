import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bomtsp.christofides import (Tour, Tree, christofides_from_tree, christofides_run, eulerian_circuit,
                                 min_weight_perfect_matching, minimum_spanning_tree, run_standard, shortcut,
                                 shortcut_plain, tour_cost, tour_from_text, tour_to_text)
from bomtsp.errors import InputError
from bomtsp.instance_io import bundled, load_graph_edges, load_instance
from bomtsp.oracles import matching_brute_force, mst_brute_force, tsp_brute_force

SQUARE = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)


def dist(p):
    return np.linalg.norm(p[:, None] - p[None], axis=2)


def random_tree(rng, n):
    edges = [(int(rng.integers(0, v)), v) for v in range(1, n)]
    perm = rng.permutation(n)
    return Tree(n, [(perm[u], perm[v]) for u, v in edges])


def walk_edges(walk):
    return Counter(tuple(sorted(e)) for e in zip(walk, walk[1:]))


class TestTree:
    def test_rejects_cycle_and_wrong_size(self):
        with pytest.raises(ValueError):
            Tree(3, [(0, 1), (1, 0)])
        with pytest.raises(ValueError):
            Tree(4, [(0, 1), (1, 2)])
        with pytest.raises(ValueError):
            Tree(3, [(0, 1), (1, 3)])

    def test_degrees_and_odd(self):
        t = Tree(4, [(0, 1), (0, 2), (0, 3)])
        np.testing.assert_array_equal(t.degrees(), [3, 1, 1, 1])
        assert t.odd_vertices() == [0, 1, 2, 3]


class TestMst:
    def test_pythagorean_triangle(self):
        c = dist(np.array([[0, 0], [3, 0], [0, 4]], dtype=float))
        t = minimum_spanning_tree(c)
        assert set(t.edges) == {(0, 1), (0, 2)}
        assert t.cost(c) == 7

    def test_graph_tree_cost(self):
        inst = load_instance(bundled("karate"))
        for seed in range(3):
            t = minimum_spanning_tree(inst, perturb_seed=seed)
            assert t.cost(inst.costs()) == inst.n - 1

    def test_graph_perturbation_depends_on_seed(self):
        inst = load_instance(bundled("grid8x10"))
        trees = {minimum_spanning_tree(inst, perturb_seed=s).edges for s in range(4)}
        assert len(trees) > 1
        assert minimum_spanning_tree(inst).edges == minimum_spanning_tree(inst, 0).edges

    @pytest.mark.parametrize("seed", range(10))
    def test_against_cayley_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 8))
        c = dist(rng.random((n, 2)))
        assert minimum_spanning_tree(c).cost(c) == pytest.approx(mst_brute_force(c), abs=1e-12)


class TestMatching:
    def test_line(self):
        c = np.abs(np.subtract.outer([0.0, 1, 3, 6], [0.0, 1, 3, 6]))
        m = min_weight_perfect_matching(c, [0, 1, 2, 3])
        assert m.pairs == ((0, 1), (2, 3)) and m.cost == 4

    def test_subset_labels(self):
        c = dist(np.random.default_rng(0).random((12, 2)))
        verts = [11, 2, 7, 5]
        m = min_weight_perfect_matching(c, verts)
        assert sorted(v for p in m.pairs for v in p) == sorted(verts)
        assert m.cost == pytest.approx(matching_brute_force(c, verts))

    def test_random_eight_points(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            c = dist(rng.random((8, 2)))
            assert min_weight_perfect_matching(c, range(8)).cost == pytest.approx(matching_brute_force(c, range(8)))

    def test_errors(self):
        c = np.zeros((4, 4))
        with pytest.raises(InputError):
            min_weight_perfect_matching(c, [0, 1, 2])
        with pytest.raises(InputError):
            min_weight_perfect_matching(c, [0, 0])


class TestEuler:
    def test_four_cycle(self):
        walk = eulerian_circuit([(0, 1), (1, 2), (2, 3), (3, 0)], start=0)
        assert walk[0] == walk[-1] == 0
        assert walk_edges(walk) == Counter({(0, 1): 1, (1, 2): 1, (2, 3): 1, (0, 3): 1})

    def test_doubled_edge(self):
        assert eulerian_circuit([(0, 1), (0, 1)], start=0) == [0, 1, 0]

    def test_errors(self):
        with pytest.raises(InputError):
            eulerian_circuit([(0, 1)])
        with pytest.raises(InputError):
            eulerian_circuit([(0, 1), (0, 1), (2, 3), (2, 3)])
        with pytest.raises(InputError):
            eulerian_circuit([])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_tree_plus_matching_union(self, seed):
        rng = np.random.default_rng(seed)
        n = 12
        c = dist(rng.random((n, 2)))
        t = random_tree(rng, n)
        m = min_weight_perfect_matching(c, t.odd_vertices())
        edges = list(t.edges) + list(m.pairs)
        walk = eulerian_circuit(edges, start=0)
        assert walk[0] == walk[-1] == 0
        assert walk_edges(walk) == Counter(tuple(sorted(e)) for e in edges)


class TestShortcut:
    def test_no_repeats_is_identity(self):
        c = dist(np.random.default_rng(1).random((5, 2)))
        walk = [2, 0, 4, 1, 3, 2]
        t = shortcut(walk, c)
        assert t.order == [2, 0, 4, 1, 3]
        assert t.cost == pytest.approx(tour_cost([2, 0, 4, 1, 3], c))

    def test_star_walk_not_longer(self):
        c = dist(np.array([[0, 0], [1, 0], [0, 1]], dtype=float))
        walk = [0, 1, 0, 2, 0]
        walk_cost = sum(c[a, b] for a, b in zip(walk, walk[1:]))
        assert shortcut(walk, c).cost <= walk_cost + 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_never_worse_than_plain(self, seed):
        rng = np.random.default_rng(seed)
        n = 10
        c = dist(rng.random((n, 2)))
        t = random_tree(rng, n)
        m = min_weight_perfect_matching(c, t.odd_vertices())
        walk = eulerian_circuit(list(t.edges) + list(m.pairs), start=int(rng.integers(n)))
        tour = shortcut(walk, c)
        tour.validate(n, c)
        assert tour.cost <= shortcut_plain(walk, c).cost + 1e-12
        walk_cost = sum(c[a, b] for a, b in zip(walk, walk[1:]))
        assert tour.cost <= walk_cost + 1e-12


class TestChristofides:
    def test_square_path_tree(self):
        c = dist(SQUARE)
        t = Tree(4, [(0, 1), (1, 2), (2, 3)])
        run = christofides_run(c, t)
        assert run.tour.cost == pytest.approx(4.0)
        assert run.tour.cost == pytest.approx(tsp_brute_force(c))
        assert run.matching.pairs == ((0, 3),)

    def test_three_point_star(self):
        c = dist(np.array([[0, 0], [1, 0], [0, 1]], dtype=float))
        run = christofides_run(c, Tree(3, [(0, 1), (0, 2)]))
        assert run.matching.pairs == ((1, 2),)
        assert sorted(run.tour.order) == [0, 1, 2]

    @pytest.mark.parametrize("seed", range(5))
    def test_hamiltonian_path_tree(self, seed):
        rng = np.random.default_rng(seed)
        perm = rng.permutation(9)
        c = dist(rng.random((9, 2)))
        run = christofides_run(c, Tree(9, list(zip(perm, perm[1:]))))
        assert run.n_odd == 2
        assert run.matching.pairs == (tuple(sorted((int(perm[0]), int(perm[-1])))),)

    def test_three_vertex_instance(self):
        c = dist(np.array([[0, 0], [3, 0], [0, 4]], dtype=float))
        assert run_standard(c).cost == 12

    def test_unit_square(self):
        assert run_standard(dist(SQUARE)).cost == pytest.approx(4.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(4, 9))
    def test_within_three_halves(self, seed, n):
        rng = np.random.default_rng(seed)
        c = dist(rng.random((n, 2)))
        tour = run_standard(c)
        tour.validate(n, c)
        assert tour.cost <= 1.5 * tsp_brute_force(c) + 1e-9

    def test_tree_size_mismatch(self):
        with pytest.raises(InputError):
            christofides_from_tree(np.zeros((4, 4)), Tree(3, [(0, 1), (1, 2)]))

    def test_graph_instance_tour(self):
        inst = load_graph_edges("".join(f"{i} {(i + 1) % 12}\n" for i in range(12)) + "0 6\n")
        tour = run_standard(inst)
        tour.validate(inst.n, inst.costs())
        assert tour.cost >= 12

    def test_text_roundtrip(self):
        t = Tour([2, 0, 1], 7.25)
        back = tour_from_text(tour_to_text(t))
        assert back == t
        with pytest.raises(InputError):
            tour_from_text("0\n1\n")


def test_bundled_standard_errors_reasonable():
    # Euclidean TSPLIB averages near 10% above optimal
    errs = []
    for name in ["eil51", "berlin52", "st70", "eil76", "kroA100"]:
        inst = load_instance(bundled(name))
        tour = run_standard(inst)
        tour.validate(inst.n, inst.costs())
        errs.append(tour.cost / inst.known_optimum - 1)
    assert all(e >= 0 for e in errs)
    assert 0.02 < np.mean(errs) < 0.2


def test_all_trees_of_small_instance():
    c = dist(np.random.default_rng(0).random((5, 2)))
    opt = tsp_brute_force(c)
    for edges in itertools.combinations(itertools.combinations(range(5), 2), 4):
        try:
            t = Tree(5, edges)
        except ValueError:
            continue
        run = christofides_run(c, t)
        assert run.tour.cost >= opt - 1e-12
        assert run.tour.cost <= run.tree_cost + run.matching.cost + 1e-12
