"""TSP instances: TSPLIB parsing, unweighted graph files and the metric oracle.

Supported TSPLIB subset: ``TYPE: TSP`` with ``EDGE_WEIGHT_TYPE`` one of
``EUC_2D``, ``CEIL_2D``, ``GEO`` or ``EXPLICIT`` (formats ``FULL_MATRIX``,
``UPPER_ROW``, ``LOWER_ROW``, ``UPPER_DIAG_ROW``, ``LOWER_DIAG_ROW``).
Distances follow the TSPLIB rounding rules so that published optima stay
valid reference values.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from bomtsp.errors import InputError

log = logging.getLogger(__name__)

KINDS = ("euclid2d", "geo", "explicit", "graph")
DENSE_LIMIT = 5000

_EXPLICIT_FORMATS = (
    "FULL_MATRIX", "UPPER_ROW", "LOWER_ROW", "UPPER_DIAG_ROW", "LOWER_DIAG_ROW",
)
_KEYWORD = re.compile(r"^[A-Z][A-Z0-9_]*$")

# TSPLIB reference constants for GEO distances
_GEO_PI = 3.141592
_GEO_RADIUS = 6378.388


@dataclass
class Instance:
    """A symmetric TSP instance with a complete metric.

    Exactly one of ``coords``, ``matrix`` and ``adjacency`` is populated,
    according to ``kind``. Vertices are ``0..n-1``; ``labels`` keeps the
    labels found in the input file.
    """

    name: str
    n: int
    kind: str
    coords: np.ndarray | None = None
    matrix: np.ndarray | None = None
    adjacency: list[list[int]] | None = None
    known_optimum: float | None = None
    edge_weight_type: str = ""
    labels: list = field(default_factory=list)
    metric_violations: int = 0
    _costs: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown instance kind {self.kind!r}")
        populated = [a is not None for a in (self.coords, self.matrix, self.adjacency)]
        expected = {"euclid2d": 0, "geo": 0, "explicit": 1, "graph": 2}[self.kind]
        if sum(populated) != 1 or not populated[expected]:
            raise InputError(f"instance kind {self.kind} needs exactly its own data field")
        if not self.labels:
            self.labels = list(range(1, self.n + 1))

    @property
    def is_graph(self) -> bool:
        return self.kind == "graph"

    def cost(self, i: int, j: int) -> float:
        """Metric oracle: cost of travelling between vertices ``i`` and ``j``."""
        if self._costs is not None:
            return float(self._costs[i, j])
        if i == j:
            return 0.0
        if self.kind == "explicit":
            return float(self.matrix[i, j])
        if self.kind == "graph":
            return float(self.costs()[i, j])
        row = _coord_costs(self.coords[[i]], self.coords[[j]], self.edge_weight_type)
        return float(row[0, 0])

    def costs(self) -> np.ndarray:
        """Dense ``n x n`` cost table (cached)."""
        if self._costs is None:
            self._costs = all_pairs_costs(self)
        return self._costs


def _coord_costs(a: np.ndarray, b: np.ndarray, ewt: str) -> np.ndarray:
    if ewt == "GEO":
        return _geo_costs(a, b)
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))
    if ewt == "EUC_2D":
        return np.floor(d + 0.5)
    if ewt == "CEIL_2D":
        return np.ceil(d)
    raise InputError(f"unsupported edge-weight type: {ewt}")


def geo_radians(value: np.ndarray) -> np.ndarray:
    """TSPLIB conversion of a DDD.MM coordinate to radians."""
    deg = np.trunc(value)
    minutes = value - deg
    return _GEO_PI * (deg + 5.0 * minutes / 3.0) / 180.0


def _geo_costs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    lat_a, lon_a = geo_radians(a[:, 0])[:, None], geo_radians(a[:, 1])[:, None]
    lat_b, lon_b = geo_radians(b[:, 0])[None, :], geo_radians(b[:, 1])[None, :]
    q1 = np.cos(lon_a - lon_b)
    q2 = np.cos(lat_a - lat_b)
    q3 = np.cos(lat_a + lat_b)
    arg = np.clip(0.5 * ((1.0 + q1) * q2 - (1.0 - q1) * q3), -1.0, 1.0)
    return np.trunc(_GEO_RADIUS * np.arccos(arg) + 1.0)


def all_pairs_costs(inst: Instance, limit: int = DENSE_LIMIT) -> np.ndarray:
    """Dense symmetric cost table with zero diagonal."""
    if inst.n > limit:
        raise InputError(f"instance {inst.name} has n={inst.n} > dense limit {limit}")
    if inst.kind == "explicit":
        c = np.array(inst.matrix, dtype=float)
    elif inst.kind == "graph":
        rows, cols = [], []
        for u, nbrs in enumerate(inst.adjacency):
            rows.extend([u] * len(nbrs))
            cols.extend(nbrs)
        g = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(inst.n, inst.n))
        c = shortest_path(g, directed=False, unweighted=True)
        if not np.isfinite(c).all():
            raise InputError(f"graph instance {inst.name} is disconnected")
    else:
        c = _coord_costs(inst.coords, inst.coords, inst.edge_weight_type)
    np.fill_diagonal(c, 0.0)
    return c


def triangle_violations(costs: np.ndarray, tol: float = 1e-9) -> int:
    """Number of ordered triples (i, k, j) with c[i,j] > c[i,k] + c[k,j]."""
    n = len(costs)
    count = 0
    for k in range(n):
        via = costs[:, k][:, None] + costs[k, :][None, :]
        count += int((costs > via + tol).sum())
    return count


# ---------------------------------------------------------------- TSPLIB ---


def _split_header(line: str) -> tuple[str, str] | None:
    if ":" in line:
        key, _, value = line.partition(":")
        return key.strip().upper(), value.strip()
    return None


def parse_tsplib(text: str, known_optimum: float | None = None) -> Instance:
    """Parse the contents of a TSPLIB ``.tsp`` file."""
    header: dict[str, str] = {}
    lines = text.splitlines()
    i = 0
    coord_lines: list[str] | None = None
    weight_tokens: list[str] | None = None
    while i < len(lines):
        raw = lines[i].strip()
        i += 1
        if not raw:
            continue
        word = raw.split()[0].rstrip(":").upper()
        if word == "EOF":
            break
        if word == "NODE_COORD_SECTION":
            coord_lines = []
            while i < len(lines) and not _is_section_end(lines[i]):
                if lines[i].strip():
                    coord_lines.append(lines[i])
                i += 1
            continue
        if word == "EDGE_WEIGHT_SECTION":
            weight_tokens = []
            while i < len(lines) and not _is_section_end(lines[i]):
                weight_tokens.extend(lines[i].split())
                i += 1
            continue
        if word in ("DISPLAY_DATA_SECTION", "FIXED_EDGES_SECTION", "TOUR_SECTION"):
            while i < len(lines) and not _is_section_end(lines[i]):
                i += 1
            continue
        kv = _split_header(raw)
        if kv is None:
            raise InputError(f"unexpected line in TSPLIB header: {raw!r}")
        header[kv[0]] = kv[1]

    ptype = header.get("TYPE", "TSP").split()[0].upper()
    if ptype != "TSP":
        raise InputError(f"unsupported problem type: {ptype}")
    try:
        n = int(header["DIMENSION"])
    except (KeyError, ValueError) as exc:
        raise InputError("missing or invalid DIMENSION") from exc
    if n < 1:
        raise InputError("DIMENSION must be positive")
    ewt = header.get("EDGE_WEIGHT_TYPE", "").upper()
    name = header.get("NAME", "unnamed").split()[0] if header.get("NAME") else "unnamed"

    if ewt in ("EUC_2D", "CEIL_2D", "GEO"):
        if coord_lines is None:
            raise InputError("missing NODE_COORD_SECTION")
        labels, coords = _parse_coords(coord_lines, n)
        kind = "geo" if ewt == "GEO" else "euclid2d"
        return Instance(name, n, kind, coords=coords, known_optimum=known_optimum,
                        edge_weight_type=ewt, labels=labels)
    if ewt == "EXPLICIT":
        fmt = header.get("EDGE_WEIGHT_FORMAT", "").upper()
        if fmt not in _EXPLICIT_FORMATS:
            raise InputError(f"unsupported edge-weight format: {fmt or '(missing)'}")
        if weight_tokens is None:
            raise InputError("missing EDGE_WEIGHT_SECTION")
        matrix = _explicit_matrix(weight_tokens, n, fmt)
        inst = Instance(name, n, "explicit", matrix=matrix, known_optimum=known_optimum,
                        edge_weight_type=ewt)
        inst.metric_violations = triangle_violations(matrix)
        if inst.metric_violations:
            log.warning("instance %s violates the triangle inequality on %d triples",
                        name, inst.metric_violations)
        return inst
    raise InputError(f"unsupported edge-weight type: {ewt or '(missing)'}")


def _is_section_end(line: str) -> bool:
    tokens = line.split()
    if not tokens:
        return False
    head = tokens[0].rstrip(":").upper()
    return head == "EOF" or (head.endswith("_SECTION")) or (
        ":" in line and _KEYWORD.match(line.split(":")[0].strip() or "-") is not None)


def _number(tok: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise InputError(f"non-numeric token {tok!r}") from None


def _parse_coords(coord_lines: list[str], n: int) -> tuple[list, np.ndarray]:
    if len(coord_lines) != n:
        raise InputError(f"NODE_COORD_SECTION has {len(coord_lines)} entries, DIMENSION is {n}")
    labels, coords = [], np.empty((n, 2))
    for k, line in enumerate(coord_lines):
        parts = line.split()
        if len(parts) != 3:
            raise InputError(f"malformed coordinate line: {line.strip()!r}")
        labels.append(int(_number(parts[0])))
        coords[k] = _number(parts[1]), _number(parts[2])
    return labels, coords


def _explicit_matrix(tokens: list[str], n: int, fmt: str) -> np.ndarray:
    values = [_number(t) for t in tokens]
    expected = {
        "FULL_MATRIX": n * n,
        "UPPER_ROW": n * (n - 1) // 2,
        "LOWER_ROW": n * (n - 1) // 2,
        "UPPER_DIAG_ROW": n * (n + 1) // 2,
        "LOWER_DIAG_ROW": n * (n + 1) // 2,
    }[fmt]
    if len(values) != expected:
        raise InputError(f"EDGE_WEIGHT_SECTION has {len(values)} values, "
                         f"{fmt} with DIMENSION {n} needs {expected}")
    m = np.zeros((n, n))
    it = iter(values)
    if fmt == "FULL_MATRIX":
        m = np.array(values, dtype=float).reshape(n, n)
        if not np.allclose(m, m.T):
            raise InputError("FULL_MATRIX is not symmetric")
    else:
        for i in range(n):
            if fmt == "UPPER_ROW":
                cols = range(i + 1, n)
            elif fmt == "LOWER_ROW":
                cols = range(0, i)
            elif fmt == "UPPER_DIAG_ROW":
                cols = range(i, n)
            else:
                cols = range(0, i + 1)
            for j in cols:
                m[i, j] = m[j, i] = next(it)
    if np.any(np.diag(m) != 0):
        raise InputError("explicit matrix has a nonzero diagonal")
    if np.any(m < 0):
        raise InputError("explicit matrix has negative entries")
    return m


def write_tsplib(inst: Instance) -> str:
    """Render an instance as TSPLIB text.

    Coordinate instances keep their edge-weight type; every other kind is
    written as an ``EXPLICIT`` ``FULL_MATRIX``.
    """
    out = [f"NAME : {inst.name}", "TYPE : TSP", f"DIMENSION : {inst.n}"]
    if inst.coords is not None:
        out.append(f"EDGE_WEIGHT_TYPE : {inst.edge_weight_type}")
        out.append("NODE_COORD_SECTION")
        for lab, (x, y) in zip(inst.labels, inst.coords):
            out.append(f"{lab} {_fmt_num(x)} {_fmt_num(y)}")
    else:
        out += ["EDGE_WEIGHT_TYPE : EXPLICIT", "EDGE_WEIGHT_FORMAT : FULL_MATRIX",
                "EDGE_WEIGHT_SECTION"]
        for row in inst.costs():
            out.append(" ".join(_fmt_num(v) for v in row))
    out.append("EOF")
    return "\n".join(out) + "\n"


def _fmt_num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


# ----------------------------------------------------------------- graphs ---


def load_graph_edges(text: str, name: str = "graph",
                     known_optimum: float | None = None) -> Instance:
    """Build a graph-TSP instance from whitespace-separated ``u v`` lines.

    Self-loops and duplicate edges are dropped and only the largest connected
    component is kept (ties go to the component with the smallest label).
    """
    edges: set[tuple[int, int]] = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 2:
            raise InputError(f"line {lineno}: expected 'u v', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise InputError(f"line {lineno}: non-integer vertex in {line!r}") from None
        if u != v:
            edges.add((min(u, v), max(u, v)))
    if not edges:
        raise InputError("graph has no edges")
    labels = sorted({u for e in edges for u in e})
    index = {lab: k for k, lab in enumerate(labels)}
    rows = [index[u] for u, _ in edges]
    cols = [index[v] for _, v in edges]
    g = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(labels),) * 2)
    ncomp, comp = connected_components(g, directed=False)
    sizes = np.bincount(comp, minlength=ncomp)
    # np.argmax picks the first maximal component, i.e. the one holding the smallest label
    keep = np.flatnonzero(comp == int(np.argmax(sizes)))
    new_index = {int(old): k for k, old in enumerate(keep)}
    adjacency: list[list[int]] = [[] for _ in keep]
    for u, v in zip(rows, cols):
        if u in new_index and v in new_index:
            adjacency[new_index[u]].append(new_index[v])
            adjacency[new_index[v]].append(new_index[u])
    for nbrs in adjacency:
        nbrs.sort()
    return Instance(name, len(keep), "graph", adjacency=adjacency,
                    known_optimum=known_optimum, edge_weight_type="GRAPH",
                    labels=[labels[k] for k in keep])


def graph_edges(inst: Instance) -> list[tuple[int, int]]:
    """Edges of a graph instance as ``(u, v)`` pairs with ``u < v``."""
    return [(u, v) for u, nbrs in enumerate(inst.adjacency) for v in nbrs if u < v]


def read_optimum(path: str | Path) -> float | None:
    """Value stored in the ``<name>.opt`` sidecar next to ``path``, if any."""
    p = Path(path)
    side = p.with_suffix(".opt")
    if not side.exists():
        return None
    tokens = side.read_text().split()
    if len(tokens) != 1:
        raise InputError(f"{side}: expected a single optimum value")
    value = _number(tokens[0])
    return int(value) if value.is_integer() else value


def load_instance(path: str | Path) -> Instance:
    """Load a ``.tsp`` file or a graph edge list, picking up an ``.opt`` sidecar."""
    p = Path(path)
    if not p.exists():
        raise InputError(f"no such instance file: {p}")
    opt = read_optimum(p)
    text = p.read_text()
    if p.suffix.lower() == ".tsp":
        return parse_tsplib(text, known_optimum=opt)
    return load_graph_edges(text, name=p.stem, known_optimum=opt)


def read_tour_file(text: str) -> list[int]:
    """Zero-based vertex order from a TSPLIB ``TOUR_SECTION``."""
    tokens = text.split()
    try:
        start = [t.upper() for t in tokens].index("TOUR_SECTION") + 1
    except ValueError:
        raise InputError("missing TOUR_SECTION") from None
    order = []
    for tok in tokens[start:]:
        v = int(_number(tok))
        if v == -1:
            break
        order.append(v - 1)
    return order


DATA_DIR = Path(__file__).parent / "data"


def bundled(name: str) -> Path:
    """Path of a bundled instance by name (TSPLIB first, then graphs)."""
    for sub, suffix in (("tsplib", ".tsp"), ("graphs", ".edges")):
        p = DATA_DIR / sub / f"{name}{suffix}"
        if p.exists():
            return p
    raise InputError(f"no bundled instance named {name!r}")


def bundled_names(kind: str | None = None) -> list[str]:
    """Names of bundled instances; ``kind`` is 'tsplib' or 'graphs'."""
    subs = [kind] if kind else ["tsplib", "graphs"]
    names = []
    for sub in subs:
        suffix = ".tsp" if sub == "tsplib" else ".edges"
        names += sorted(p.stem for p in (DATA_DIR / sub).glob(f"*{suffix}"))
    return names
