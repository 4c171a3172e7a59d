"""Regenerate the bundled graph-TSP instances and their optimal tour lengths.

Real social networks shipped with networkx plus a few seeded random graphs.
Optima: a tour whose cost meets the rounded-up Subtour LP bound is optimal
(costs are integral); otherwise the integer program decides.

    python tools/make_graphs.py
"""

import math

import networkx as nx
import numpy as np

from bomtsp.christofides import minimum_spanning_tree, christofides_run
from bomtsp.harness import solve_tsp_milp
from bomtsp.instance_io import DATA_DIR, load_graph_edges
from bomtsp.sampling import WalkSampler, best_of_many, compute_gamma
from bomtsp.subtour_lp import scale_to_tree_polytope, solve_subtour

GRAPHS = {
    "karate": ("networkx karate_club_graph", lambda: nx.karate_club_graph()),
    "lesmis": ("networkx les_miserables_graph", lambda: nx.les_miserables_graph()),
    "davis": ("networkx davis_southern_women_graph", lambda: nx.davis_southern_women_graph()),
    "florentine": ("networkx florentine_families_graph", lambda: nx.florentine_families_graph()),
    "dodecahedron": ("networkx dodecahedral_graph", lambda: nx.dodecahedral_graph()),
    "tutte": ("networkx tutte_graph", lambda: nx.tutte_graph()),
    "grid8x10": ("networkx grid_2d_graph(8, 10)", lambda: nx.grid_2d_graph(8, 10)),
    "cubic60": ("networkx random_regular_graph(3, 60, seed=1)", lambda: nx.random_regular_graph(3, 60, seed=1)),
    "geo80": ("networkx random_geometric_graph(80, 0.2, seed=1)", lambda: nx.random_geometric_graph(80, 0.2, seed=1)),
    "gnp60": ("networkx gnp_random_graph(60, 0.08, seed=1)", lambda: nx.gnp_random_graph(60, 0.08, seed=1)),
    "ba80": ("networkx barabasi_albert_graph(80, 2, seed=1)", lambda: nx.barabasi_albert_graph(80, 2, seed=1)),
    "plc100": ("networkx powerlaw_cluster_graph(100, 2, 0.3, seed=1)",
               lambda: nx.powerlaw_cluster_graph(100, 2, 0.3, seed=1)),
    "ws100": ("networkx connected_watts_strogatz_graph(100, 4, 0.1, seed=1)",
              lambda: nx.connected_watts_strogatz_graph(100, 4, 0.1, seed=1)),
}


def main():
    out = DATA_DIR / "graphs"
    out.mkdir(parents=True, exist_ok=True)
    for name, (source, make) in GRAPHS.items():
        G = nx.convert_node_labels_to_integers(make(), ordering="sorted" if name == "grid8x10" else "default")
        text = f"# {source}\n" + "".join(f"{u} {v}\n" for u, v in sorted(G.edges()))
        inst = load_graph_edges(text, name)
        stats = {}
        x = solve_subtour(inst, stats=stats)
        lower = math.ceil(stats["objective"] - 1e-6)
        _, st = best_of_many(inst, WalkSampler(compute_gamma(scale_to_tree_polytope(x))), 300, seed=0)
        upper = min(st.best_cost, christofides_run(inst, minimum_spanning_tree(inst)).tour.cost)
        if upper > lower:
            upper = solve_tsp_milp(inst.costs(), stats["cut_sets"])[0]
            how = "integer program"
        else:
            how = "meets LP bound"
        (out / f"{name}.edges").write_text(text)
        (out / f"{name}.opt").write_text(f"{int(round(upper))}\n")
        print(f"{name}: n={inst.n} lp={stats['objective']:.3f} opt={upper:.0f} ({how})")


if __name__ == "__main__":
    main()
