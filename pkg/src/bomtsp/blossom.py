"""Weighted general matching by Edmonds' primal-dual blossom algorithm.

Dense O(n^3) formulation: vertices are 1..n, blossoms take the ids n+1..2n,
and ``g`` keeps for every pair of (super)vertices the cheapest underlying
original edge. Dual labels are kept doubled on blossoms so that integral
weights stay integral throughout.
"""

from __future__ import annotations

from collections import deque

import numpy as np


class _MaxWeightMatching:
    def __init__(self, w: np.ndarray, eps: float):
        n = len(w)
        self.n = n
        self.eps = eps
        size = 2 * n + 1
        self.gu = [[0] * size for _ in range(size)]
        self.gv = [[0] * size for _ in range(size)]
        self.gw = [[0.0] * size for _ in range(size)]
        for u in range(1, n + 1):
            ru, rv, rw = self.gu[u], self.gv[u], self.gw[u]
            row = w[u - 1]
            for v in range(1, n + 1):
                ru[v] = u
                rv[v] = v
                rw[v] = float(row[v - 1]) if u != v else 0.0
        self.lab = [0.0] * size
        self.match = [0] * size
        self.slack = [0] * size
        self.st = [0] * size
        self.pa = [0] * size
        self.S = [-1] * size
        self.vis = [0] * size
        self.flower = [[] for _ in range(size)]
        self.flower_from = [[0] * (n + 1) for _ in range(size)]
        self.n_x = n
        self.stamp = 0
        self.q: deque[int] = deque()

    def delta(self, u: int, v: int) -> float:
        return self.lab[self.gu[u][v]] + self.lab[self.gv[u][v]] - 2.0 * self.gw[u][v]

    def update_slack(self, u: int, x: int):
        if not self.slack[x] or self.delta(u, x) < self.delta(self.slack[x], x):
            self.slack[x] = u

    def set_slack(self, x: int):
        self.slack[x] = 0
        st, S, gwx = self.st, self.S, None
        for u in range(1, self.n + 1):
            if self.gw[u][x] > 0 and st[u] != x and S[st[u]] == 0:
                self.update_slack(u, x)

    def q_push(self, x: int):
        if x <= self.n:
            self.q.append(x)
        else:
            for y in self.flower[x]:
                self.q_push(y)

    def set_st(self, x: int, b: int):
        self.st[x] = b
        if x > self.n:
            for y in self.flower[x]:
                self.set_st(y, b)

    def get_pr(self, b: int, xr: int) -> int:
        fl = self.flower[b]
        pr = fl.index(xr)
        if pr % 2 == 1:
            fl[1:] = fl[1:][::-1]
            return len(fl) - pr
        return pr

    def set_match(self, u: int, v: int):
        self.match[u] = self.gv[u][v]
        if u <= self.n:
            return
        xr = self.flower_from[u][self.gu[u][v]]
        pr = self.get_pr(u, xr)
        fl = self.flower[u]
        for i in range(pr):
            self.set_match(fl[i], fl[i ^ 1])
        self.set_match(xr, v)
        self.flower[u] = fl[pr:] + fl[:pr]

    def augment(self, u: int, v: int):
        while True:
            xnv = self.st[self.match[u]]
            self.set_match(u, v)
            if not xnv:
                return
            self.set_match(xnv, self.st[self.pa[xnv]])
            u, v = self.st[self.pa[xnv]], xnv

    def get_lca(self, u: int, v: int) -> int:
        self.stamp += 1
        t = self.stamp
        while u or v:
            if u == 0:
                u, v = v, u
                continue
            if self.vis[u] == t:
                return u
            self.vis[u] = t
            u = self.st[self.match[u]]
            if u:
                u = self.st[self.pa[u]]
            u, v = v, u
        return 0

    def add_blossom(self, u: int, lca: int, v: int):
        n = self.n
        b = n + 1
        while b <= self.n_x and self.st[b]:
            b += 1
        if b > self.n_x:
            self.n_x += 1
        self.lab[b] = 0.0
        self.S[b] = 0
        self.match[b] = self.match[lca]
        fl = [lca]
        x = u
        while x != lca:
            fl.append(x)
            y = self.st[self.match[x]]
            fl.append(y)
            self.q_push(y)
            x = self.st[self.pa[y]]
        fl[1:] = fl[1:][::-1]
        x = v
        while x != lca:
            fl.append(x)
            y = self.st[self.match[x]]
            fl.append(y)
            self.q_push(y)
            x = self.st[self.pa[y]]
        self.flower[b] = fl
        self.set_st(b, b)
        gu, gv, gw = self.gu, self.gv, self.gw
        for x in range(1, self.n_x + 1):
            gw[b][x] = gw[x][b] = 0.0
        ffb = self.flower_from[b]
        for x in range(1, n + 1):
            ffb[x] = 0
        for xs in fl:
            for x in range(1, self.n_x + 1):
                if gw[b][x] == 0 or self.delta(xs, x) < self.delta(b, x):
                    gu[b][x], gv[b][x], gw[b][x] = gu[xs][x], gv[xs][x], gw[xs][x]
                    gu[x][b], gv[x][b], gw[x][b] = gu[x][xs], gv[x][xs], gw[x][xs]
            ffx = self.flower_from[xs]
            for x in range(1, n + 1):
                if ffx[x]:
                    ffb[x] = xs
        self.set_slack(b)

    def expand_blossom(self, b: int):
        fl = self.flower[b]
        for x in fl:
            self.set_st(x, x)
        xr = self.flower_from[b][self.gu[b][self.pa[b]]]
        pr = self.get_pr(b, xr)
        fl = self.flower[b]
        for i in range(0, pr, 2):
            xs, xns = fl[i], fl[i + 1]
            self.pa[xs] = self.gu[xns][xs]
            self.S[xs] = 1
            self.S[xns] = 0
            self.slack[xs] = 0
            self.set_slack(xns)
            self.q_push(xns)
        self.S[xr] = 1
        self.pa[xr] = self.pa[b]
        for i in range(pr + 1, len(fl)):
            xs = fl[i]
            self.S[xs] = -1
            self.set_slack(xs)
        self.st[b] = 0

    def on_found_edge(self, eu: int, ev: int) -> bool:
        u, v = self.st[eu], self.st[ev]
        if self.S[v] == -1:
            self.pa[v] = eu
            self.S[v] = 1
            nu = self.st[self.match[v]]
            self.slack[v] = self.slack[nu] = 0
            self.S[nu] = 0
            self.q_push(nu)
        elif self.S[v] == 0:
            lca = self.get_lca(u, v)
            if not lca:
                self.augment(u, v)
                self.augment(v, u)
                return True
            self.add_blossom(u, lca, v)
        return False

    def stage(self) -> bool:
        n, st, S, eps = self.n, self.st, self.S, self.eps
        for i in range(len(S)):
            S[i] = -1
            self.slack[i] = 0
        self.q.clear()
        for x in range(1, self.n_x + 1):
            if st[x] == x and not self.match[x]:
                self.pa[x] = 0
                S[x] = 0
                self.q_push(x)
        if not self.q:
            return False
        lab = self.lab
        while True:
            while self.q:
                u = self.q.popleft()
                if S[st[u]] == 1:
                    continue
                gwu = self.gw[u]
                for v in range(1, n + 1):
                    if gwu[v] > 0 and st[u] != st[v]:
                        if self.delta(u, v) <= eps:
                            if self.on_found_edge(self.gu[u][v], self.gv[u][v]):
                                return True
                        else:
                            self.update_slack(u, st[v])
            d = float("inf")
            for b in range(n + 1, self.n_x + 1):
                if st[b] == b and S[b] == 1:
                    d = min(d, lab[b] / 2)
            for x in range(1, self.n_x + 1):
                if st[x] == x and self.slack[x]:
                    if S[x] == -1:
                        d = min(d, self.delta(self.slack[x], x))
                    elif S[x] == 0:
                        d = min(d, self.delta(self.slack[x], x) / 2)
            for u in range(1, n + 1):
                if S[st[u]] == 0:
                    if lab[u] <= d:
                        return False
                    lab[u] -= d
                elif S[st[u]] == 1:
                    lab[u] += d
            for b in range(n + 1, self.n_x + 1):
                if st[b] == b:
                    if S[b] == 0:
                        lab[b] += 2 * d
                    elif S[b] == 1:
                        lab[b] -= 2 * d
            self.q.clear()
            for x in range(1, self.n_x + 1):
                sx = self.slack[x]
                if st[x] == x and sx and st[sx] != x and self.delta(sx, x) <= eps:
                    if self.on_found_edge(self.gu[sx][x], self.gv[sx][x]):
                        return True
            for b in range(n + 1, self.n_x + 1):
                if st[b] == b and S[b] == 1 and lab[b] <= eps:
                    self.expand_blossom(b)

    def solve(self) -> list[int]:
        n = self.n
        w_max = 0.0
        for u in range(1, n + 1):
            self.st[u] = u
            self.flower[u] = []
            self.flower_from[u][u] = u
            w_max = max(w_max, max(self.gw[u][1:n + 1]))
        for u in range(1, n + 1):
            self.lab[u] = w_max
        while self.stage():
            pass
        return [self.match[u] - 1 for u in range(1, n + 1)]


def max_weight_matching(w: np.ndarray, eps: float | None = None) -> list[int]:
    """Maximum weight matching of a dense symmetric weight matrix.

    Entries ``<= 0`` mean "no edge". Returns ``mate`` with ``mate[u] == -1``
    for exposed vertices.
    """
    w = np.asarray(w, dtype=float)
    if len(w) == 0:
        return []
    if eps is None:
        integral = np.all(w == np.round(w))
        eps = 0.0 if integral else 1e-10 * max(1.0, float(np.abs(w).max()))
    return _MaxWeightMatching(w, eps).solve()


def min_weight_perfect_matching_dense(c: np.ndarray) -> list[tuple[int, int]]:
    """Minimum cost perfect matching of a complete graph given by ``c``.

    Returned pairs ``(i, j)`` are row indices of ``c`` with ``i < j``.
    """
    c = np.asarray(c, dtype=float)
    k = len(c)
    if k % 2:
        raise ValueError("perfect matching needs an even number of vertices")
    if k == 0:
        return []
    lo, hi = float(c.min()), float(c.max())
    c = c - lo
    # any perfect matching then outweighs every matching with fewer edges
    big = (hi - lo) * (k // 2) + 1.0
    w = big - c
    np.fill_diagonal(w, 0.0)
    mate = max_weight_matching(w)
    if any(m < 0 for m in mate):
        raise RuntimeError("blossom matching returned a non-perfect matching")
    return sorted((i, m) for i, m in enumerate(mate) if i < m)
