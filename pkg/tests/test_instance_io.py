import itertools
from collections import deque

import mpmath
import networkx as nx
import numpy as np
import pytest

from bomtsp.errors import InputError
from bomtsp.instance_io import (Instance, all_pairs_costs, bundled, bundled_names, graph_edges,
                                load_graph_edges, load_instance, parse_tsplib, read_tour_file,
                                triangle_violations, write_tsplib)


def euc(points, ewt="EUC_2D", name="t"):
    lines = [f"NAME : {name}", "TYPE : TSP", f"DIMENSION : {len(points)}",
             f"EDGE_WEIGHT_TYPE : {ewt}", "NODE_COORD_SECTION"]
    lines += [f"{i + 1} {x} {y}" for i, (x, y) in enumerate(points)]
    return "\n".join(lines + ["EOF"]) + "\n"


def geo_oracle(a, b):
    """TSPLIB GEO distance evaluated with 50-digit arithmetic."""
    mpmath.mp.dps = 50
    pi = mpmath.mpf("3.141592")

    def rad(v):
        v = mpmath.mpf(str(v))
        deg = mpmath.floor(v) if v >= 0 else mpmath.ceil(v)
        return pi * (deg + 5 * (v - deg) / 3) / 180

    la, lo = rad(a[0]), rad(a[1])
    lb, lob = rad(b[0]), rad(b[1])
    q1, q2, q3 = mpmath.cos(lo - lob), mpmath.cos(la - lb), mpmath.cos(la + lb)
    d = mpmath.mpf("6378.388") * mpmath.acos(((1 + q1) * q2 - (1 - q1) * q3) / 2) + 1
    return int(mpmath.floor(d))


class TestParseTsplib:
    def test_pythagorean_triangle(self):
        inst = parse_tsplib(euc([(0, 0), (3, 0), (0, 4)]))
        assert inst.kind == "euclid2d" and inst.n == 3
        np.testing.assert_array_equal(inst.costs(), [[0, 3, 4], [3, 0, 5], [4, 5, 0]])

    def test_att_rejected(self):
        with pytest.raises(InputError, match="unsupported edge-weight type"):
            parse_tsplib(euc([(0, 0), (1, 1)], ewt="ATT"))

    def test_missing_dimension(self):
        with pytest.raises(InputError):
            parse_tsplib("NAME : x\nTYPE : TSP\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\nEOF\n")

    def test_non_tsp_type(self):
        with pytest.raises(InputError, match="problem type"):
            parse_tsplib("NAME : x\nTYPE : ATSP\nDIMENSION : 2\nEOF\n")

    def test_rounding_is_nint(self):
        inst = parse_tsplib(euc([(0, 0), (1, 1), (0, 2.5)]))
        # sqrt(2) -> 1, 2.5 -> 3 (round half up), sqrt(1 + 2.25) -> 2
        np.testing.assert_array_equal(inst.costs()[0], [0, 1, 3])
        assert inst.cost(1, 2) == 2

    @pytest.mark.parametrize("pair", [((16.47, 96.10), (16.47, 94.44)),
                                      ((20.09, 92.54), (-33.55, 151.10)),
                                      ((-12.30, -77.02), (48.51, 2.21)),
                                      ((0.0, 0.0), (0.59, -179.59))])
    def test_geo_matches_high_precision(self, pair):
        a, b = pair
        text = euc([a, b], ewt="GEO")
        inst = parse_tsplib(text)
        assert inst.kind == "geo"
        assert inst.cost(0, 1) == geo_oracle(a, b)

    def test_geo_bundled_instance(self):
        inst = load_instance(bundled("burma14"))
        c = inst.costs()
        for i, j in [(0, 1), (3, 11), (5, 13)]:
            assert c[i, j] == geo_oracle(inst.coords[i], inst.coords[j])

    @pytest.mark.parametrize("fmt", ["UPPER_ROW", "LOWER_ROW", "UPPER_DIAG_ROW", "LOWER_DIAG_ROW"])
    def test_explicit_formats_roundtrip_full_matrix(self, fmt):
        rng = np.random.default_rng(3)
        n = 7
        m = rng.integers(1, 50, (n, n))
        m = np.triu(m, 1) + np.triu(m, 1).T
        vals = []
        for i in range(n):
            cols = {"UPPER_ROW": range(i + 1, n), "LOWER_ROW": range(i),
                    "UPPER_DIAG_ROW": range(i, n), "LOWER_DIAG_ROW": range(i + 1)}[fmt]
            vals += [m[i, j] for j in cols]
        text = (f"NAME : e\nTYPE : TSP\nDIMENSION : {n}\nEDGE_WEIGHT_TYPE : EXPLICIT\n"
                f"EDGE_WEIGHT_FORMAT : {fmt}\nEDGE_WEIGHT_SECTION\n" + " ".join(map(str, vals)) + "\nEOF\n")
        inst = parse_tsplib(text)
        np.testing.assert_array_equal(inst.costs(), m)
        again = parse_tsplib(write_tsplib(inst))
        np.testing.assert_array_equal(again.costs(), m)

    def test_explicit_wrong_count(self):
        text = ("NAME : e\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EXPLICIT\n"
                "EDGE_WEIGHT_FORMAT : UPPER_ROW\nEDGE_WEIGHT_SECTION\n1 2\nEOF\n")
        with pytest.raises(InputError, match="needs 3"):
            parse_tsplib(text)

    def test_non_metric_explicit_is_flagged(self):
        text = ("NAME : e\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EXPLICIT\n"
                "EDGE_WEIGHT_FORMAT : UPPER_ROW\nEDGE_WEIGHT_SECTION\n1 10 1\nEOF\n")
        inst = parse_tsplib(text)
        assert inst.metric_violations > 0

    def test_coordinate_roundtrip(self):
        inst = load_instance(bundled("eil51"))
        again = parse_tsplib(write_tsplib(inst))
        np.testing.assert_array_equal(again.costs(), inst.costs())


class TestBundled:
    def test_names(self):
        assert "eil51" in bundled_names("tsplib")
        assert "karate" in bundled_names("graphs")
        with pytest.raises(InputError):
            bundled("no-such-instance")

    @pytest.mark.parametrize("name", ["eil51", "berlin52", "kroA100", "gr24", "fri26", "bays29", "ch130"])
    def test_optimal_tour_matches_sidecar(self, name):
        path = bundled(name)
        inst = load_instance(path)
        order = read_tour_file(path.with_suffix(".opt.tour").read_text())
        assert sorted(order) == list(range(inst.n))
        c = inst.costs()
        cost = sum(c[order[i], order[(i + 1) % inst.n]] for i in range(inst.n))
        assert cost == inst.known_optimum

    def test_all_bundled_load(self):
        for name in bundled_names():
            inst = load_instance(bundled(name))
            assert inst.known_optimum is not None
            assert inst.n >= 3


def bfs_costs(n, edges):
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    out = np.full((n, n), np.inf)
    for s in range(n):
        out[s, s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if out[s, v] == np.inf:
                    out[s, v] = out[s, u] + 1
                    q.append(v)
    return out


class TestGraphs:
    def test_largest_component_kept(self):
        inst = load_graph_edges("a_b\n".replace("a_b", "1 2") + "2 3\n4 5\n")
        assert inst.n == 3 and inst.labels == [1, 2, 3]
        assert inst.cost(0, 2) == 2

    def test_single_edge(self):
        inst = load_graph_edges("7 9\n")
        assert inst.n == 2
        np.testing.assert_array_equal(inst.costs(), [[0, 1], [1, 0]])

    def test_path_costs(self):
        inst = load_graph_edges("1 2\n2 3\n")
        np.testing.assert_array_equal(inst.costs(), [[0, 1, 2], [1, 0, 1], [2, 1, 0]])

    def test_loops_and_duplicates_dropped(self):
        inst = load_graph_edges("1 1\n1 2\n2 1\n2 3\n# comment\n")
        assert graph_edges(inst) == [(0, 1), (1, 2)]

    def test_bad_lines(self):
        with pytest.raises(InputError):
            load_graph_edges("1\n")
        with pytest.raises(InputError):
            load_graph_edges("a b\n")
        with pytest.raises(InputError):
            load_graph_edges("# nothing\n")

    @pytest.mark.parametrize("seed", range(5))
    def test_random_graph_matches_bfs(self, seed):
        g = nx.connected_watts_strogatz_graph(10, 3, 0.5, seed=seed)
        text = "".join(f"{u} {v}\n" for u, v in g.edges)
        inst = load_graph_edges(text)
        np.testing.assert_array_equal(inst.costs(), bfs_costs(10, list(g.edges)))

    def test_graph_costs_are_metric(self):
        inst = load_instance(bundled("karate"))
        assert triangle_violations(inst.costs()) == 0


class TestCosts:
    def test_instance_requires_own_field(self):
        with pytest.raises(InputError):
            Instance("x", 2, "euclid2d", matrix=np.zeros((2, 2)))

    def test_dense_limit(self):
        inst = parse_tsplib(euc([(i, 0) for i in range(5)]))
        with pytest.raises(InputError):
            all_pairs_costs(inst, limit=4)

    def test_triangle_violation_count(self):
        c = np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], dtype=float)
        # c[0,2] > c[0,1] + c[1,2] in both orientations
        assert triangle_violations(c) == 2

    def test_symmetric_zero_diagonal(self):
        inst = load_instance(bundled("gr17"))
        c = inst.costs()
        np.testing.assert_array_equal(c, c.T)
        assert np.all(np.diag(c) == 0)
        assert all(c[i, j] > 0 for i, j in itertools.combinations(range(inst.n), 2))
