"""Directed, partially directed, and completed partially directed graphs.

Vertices are the integers 1..p. A directed edge (j, i) means j -> i. All
graph values are immutable after construction and safe to share between
threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping

from .exceptions import InvalidInputError

Edge = tuple[int, int]


def _normalize_pair(a: int, b: int) -> Edge:
    return (a, b) if a < b else (b, a)


def is_acyclic(p: int, edges: Iterable[Edge]) -> bool:
    """Return True iff the directed edge set over vertices 1..p has a topological order.

    Total function: never raises for in-range edges (Kahn's algorithm).
    """
    edges = list(edges)
    out: dict[int, list[int]] = {v: [] for v in range(1, p + 1)}
    indeg = {v: 0 for v in range(1, p + 1)}
    for j, i in edges:
        out[j].append(i)
        indeg[i] += 1
    stack = [v for v in range(1, p + 1) if indeg[v] == 0]
    seen = 0
    while stack:
        v = stack.pop()
        seen += 1
        for w in out[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                stack.append(w)
    return seen == p


def _check_edges(p: int, edges: Iterable[Edge], what: str) -> None:
    for j, i in edges:
        if not (1 <= j <= p and 1 <= i <= p):
            raise InvalidInputError(f"{what} edge ({j}, {i}) outside vertex range 1..{p}")
        if j == i:
            raise InvalidInputError(f"{what} self-loop at vertex {j}")


@dataclass(frozen=True)
class Dag:
    """Acyclic digraph over vertices 1..p.

    edges holds ordered pairs (j, i) meaning j -> i. Construction rejects
    self-loops, out-of-range vertices, and directed cycles.
    """

    p: int
    edges: frozenset[Edge]

    def __init__(self, p: int, edges: Iterable[Edge] = ()):
        if p < 1:
            raise InvalidInputError(f"vertex count must be positive, got {p}")
        edge_set = frozenset((int(j), int(i)) for j, i in edges)
        _check_edges(p, edge_set, "directed")
        if not is_acyclic(p, edge_set):
            raise InvalidInputError("cycle detected in directed edge set")
        object.__setattr__(self, "p", int(p))
        object.__setattr__(self, "edges", edge_set)

    def parents(self, i: int) -> frozenset[int]:
        return frozenset(j for j, k in self.edges if k == i)

    def skeleton_pairs(self) -> frozenset[Edge]:
        return frozenset(_normalize_pair(j, i) for j, i in self.edges)

    def relabel(self, perm: Mapping[int, int]) -> "Dag":
        """Apply a vertex permutation (old label -> new label)."""
        return Dag(self.p, ((perm[j], perm[i]) for j, i in self.edges))


@dataclass(frozen=True)
class Pdag:
    """Partially directed graph: disjoint directed and undirected edge sets.

    Undirected pairs are stored normalized with the smaller vertex first.
    """

    p: int
    directed: frozenset[Edge]
    undirected: frozenset[Edge]

    def __init__(self, p: int, directed: Iterable[Edge] = (), undirected: Iterable[Edge] = ()):
        if p < 1:
            raise InvalidInputError(f"vertex count must be positive, got {p}")
        d = frozenset((int(j), int(i)) for j, i in directed)
        u = frozenset(_normalize_pair(int(a), int(b)) for a, b in undirected)
        _check_edges(p, d, "directed")
        _check_edges(p, u, "undirected")
        d_pairs = {_normalize_pair(j, i) for j, i in d}
        if len(d_pairs) != len(d):
            raise InvalidInputError("directed edge set contains a 2-cycle")
        if d_pairs & u:
            raise InvalidInputError("directed and undirected edges overlap as vertex pairs")
        object.__setattr__(self, "p", int(p))
        object.__setattr__(self, "directed", d)
        object.__setattr__(self, "undirected", u)

    def skeleton_pairs(self) -> frozenset[Edge]:
        return frozenset(_normalize_pair(j, i) for j, i in self.directed) | self.undirected

    def relabel(self, perm: Mapping[int, int]) -> "Pdag":
        return type(self)(
            self.p,
            ((perm[j], perm[i]) for j, i in self.directed),
            ((perm[a], perm[b]) for a, b in self.undirected),
        )


class Cpdag(Pdag):
    """Canonical representative of a Markov equivalence class.

    Produced by dag_to_cpdag (always valid) or by the sample learner, whose
    output is the Meek closure of its estimated v-structures. Use validate()
    to check closure and acyclicity of the directed part explicitly.
    """

    def validate(self) -> None:
        closed = apply_meek_rules(Pdag(self.p, self.directed, self.undirected))
        if closed.directed != self.directed:
            raise InvalidInputError("graph is not closed under the Meek rules")
        if not is_acyclic(self.p, self.directed):
            raise InvalidInputError("directed part of CPDAG contains a cycle")


class _MutablePdag:
    """Working adjacency used by the orientation rules.

    und[v]: undirected neighbors; pa[v]/ch[v]: directed in/out neighbors;
    adj[v]: all neighbors regardless of mark.
    """

    def __init__(self, g: Pdag):
        self.p = g.p
        self.und = {v: set() for v in range(1, g.p + 1)}
        self.pa = {v: set() for v in range(1, g.p + 1)}
        self.ch = {v: set() for v in range(1, g.p + 1)}
        for a, b in g.undirected:
            self.und[a].add(b)
            self.und[b].add(a)
        for j, i in g.directed:
            self.ch[j].add(i)
            self.pa[i].add(j)

    def adjacent(self, a: int, b: int) -> bool:
        return b in self.und[a] or b in self.pa[a] or b in self.ch[a]

    def orient(self, a: int, b: int) -> None:
        self.und[a].discard(b)
        self.und[b].discard(a)
        self.ch[a].add(b)
        self.pa[b].add(a)

    def freeze(self) -> Pdag:
        directed = {(j, i) for j in range(1, self.p + 1) for i in self.ch[j]}
        undirected = {
            _normalize_pair(a, b)
            for a in range(1, self.p + 1)
            for b in self.und[a]
        }
        return Pdag(self.p, directed, undirected)


def _forced_orientation(g: _MutablePdag, x: int, y: int) -> bool:
    """True if the undirected edge x - y must be oriented x -> y.

    Rule 1: some a -> x with a, y nonadjacent (avoid a new collider at x).
    Rule 2: some chain x -> c -> y (avoid a directed cycle).
    Rule 3: nonadjacent c, d with x - c -> y and x - d -> y.
    Rule 4: some x - c -> d -> y with d adjacent to x and c, y nonadjacent.
    """
    for a in g.pa[x]:
        if a != y and not g.adjacent(a, y):
            return True
    if g.ch[x] & g.pa[y]:
        return True
    into_y = g.und[x] & g.pa[y]
    for c, d in combinations(sorted(into_y), 2):
        if not g.adjacent(c, d):
            return True
    for c in sorted(g.und[x]):
        if c == y or g.adjacent(c, y):
            continue
        for d in g.ch[c] & g.pa[y]:
            if d != x and g.adjacent(x, d):
                return True
    return False


def apply_meek_rules(g: Pdag) -> Pdag:
    """Close a PDAG under Meek orientation rules R1-R4.

    Idempotent and monotone: directed edges are only ever added, never
    removed or reversed.
    """
    work = _MutablePdag(g)
    changed = True
    while changed:
        changed = False
        pairs = sorted(
            _normalize_pair(a, b) for a in range(1, g.p + 1) for b in work.und[a]
        )
        for a, b in pairs:
            if b not in work.und[a]:
                continue
            if _forced_orientation(work, a, b):
                work.orient(a, b)
                changed = True
            elif _forced_orientation(work, b, a):
                work.orient(b, a)
                changed = True
    return work.freeze()


def v_structures(dag: Dag) -> frozenset[tuple[int, int, int]]:
    """Colliders a -> k <- b with a, b nonadjacent, reported as (a, k, b), a < b."""
    adj = dag.skeleton_pairs()
    parents: dict[int, list[int]] = {v: [] for v in range(1, dag.p + 1)}
    for j, i in dag.edges:
        parents[i].append(j)
    out = set()
    for k in range(1, dag.p + 1):
        for a, b in combinations(sorted(parents[k]), 2):
            if _normalize_pair(a, b) not in adj:
                out.add((a, k, b))
    return frozenset(out)


def dag_to_cpdag(dag: Dag) -> Cpdag:
    """Completed partially directed graph of the DAG's Markov equivalence class.

    An edge keeps its orientation iff it is a collider edge or that
    orientation is shared by every member of the class (Meek closure of the
    v-structure pattern).
    """
    vs = v_structures(dag)
    keep = set()
    for a, k, b in vs:
        keep.add((a, k))
        keep.add((b, k))
    undirected = [
        _normalize_pair(j, i) for j, i in dag.edges if (j, i) not in keep
    ]
    closed = apply_meek_rules(Pdag(dag.p, keep, undirected))
    return Cpdag(dag.p, closed.directed, closed.undirected)


# --- graph text format ------------------------------------------------------
#
# First non-comment line: p. Then one edge per line, "j -> i" (directed) or
# "j -- i" (undirected). Lines starting with '#' are comments.


def format_graph(g: Dag | Pdag) -> str:
    lines = [str(g.p)]
    if isinstance(g, Dag):
        directed, undirected = sorted(g.edges), []
    else:
        directed, undirected = sorted(g.directed), sorted(g.undirected)
    lines += [f"{j} -> {i}" for j, i in directed]
    lines += [f"{a} -- {b}" for a, b in undirected]
    return "\n".join(lines) + "\n"


def _graph_lines(text: str):
    for raw in text.splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            yield line


def parse_pdag(text: str) -> Pdag:
    """Parse the text format into a Pdag. Raises InvalidInputError on bad syntax."""
    lines = list(_graph_lines(text))
    if not lines:
        raise InvalidInputError("empty graph text")
    try:
        p = int(lines[0])
    except ValueError as exc:
        raise InvalidInputError(f"first line must be the vertex count: {lines[0]!r}") from exc
    directed, undirected = [], []
    for line in lines[1:]:
        parts = line.split()
        if len(parts) != 3 or parts[1] not in ("->", "--"):
            raise InvalidInputError(f"bad edge line: {line!r}")
        try:
            a, b = int(parts[0]), int(parts[2])
        except ValueError as exc:
            raise InvalidInputError(f"bad vertex in line: {line!r}") from exc
        (directed if parts[1] == "->" else undirected).append((a, b))
    return Pdag(p, directed, undirected)


def parse_dag(text: str) -> Dag:
    """Parse the text format into a Dag; undirected lines are rejected."""
    g = parse_pdag(text)
    if g.undirected:
        raise InvalidInputError("expected a fully directed graph")
    return Dag(g.p, g.directed)


def parse_cpdag(text: str) -> Cpdag:
    g = parse_pdag(text)
    return Cpdag(g.p, g.directed, g.undirected)
