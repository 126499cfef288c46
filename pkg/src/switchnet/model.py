"""Network topology: queues, routes, interference graphs and capacity polytopes.

Queues are integer-indexed 0..J-1.  A route is an ordered sequence of distinct
queues with a Poisson arrival rate.  Capacity is described either by a
nonnegative pool matrix A (one row per pool, ``A s <= 1`` feasible), by an
interference graph whose maximal cliques become the pools, or by an explicit
list of integer schedules.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np


class NetworkValidationError(ValueError):
    """A network description violates a structural requirement."""


class CapExceededError(RuntimeError):
    """An enumeration size cap was exceeded."""


# -------------------- basic types --------------------


@dataclass(frozen=True)
class Route:
    """One traffic class: identifier, ordered queue path, arrival rate."""

    id: str
    path: tuple[int, ...]
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(int(j) for j in self.path))
        if len(self.path) == 0:
            raise NetworkValidationError(f"route {self.id!r}: empty path")
        if len(set(self.path)) != len(self.path):
            raise NetworkValidationError(
                f"route {self.id!r}: queues on a route must be distinct"
            )
        if not (self.rate > 0.0):
            raise NetworkValidationError(
                f"route {self.id!r}: rate must be strictly positive, got {self.rate}"
            )


@dataclass(frozen=True)
class InterferenceGraph:
    """Undirected conflict graph on queues: an edge means 'cannot serve together'."""

    n: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if self.n <= 0:
            raise NetworkValidationError("interference graph needs at least one vertex")
        norm = set()
        for e in self.edges:
            u, v = int(e[0]), int(e[1])
            if u == v:
                raise NetworkValidationError(f"self-loop on vertex {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise NetworkValidationError(f"edge {e} out of range for n={self.n}")
            norm.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_edges(cls, n: int, pairs) -> "InterferenceGraph":
        return cls(n=n, edges=frozenset((int(u), int(v)) for u, v in pairs))

    def adjacent(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.edges

    def neighbors(self, v: int) -> set[int]:
        out = set()
        for a, b in self.edges:
            if a == v:
                out.add(b)
            elif b == v:
                out.add(a)
        return out

    def complement(self) -> "InterferenceGraph":
        comp = [
            (u, v)
            for u in range(self.n)
            for v in range(u + 1, self.n)
            if (u, v) not in self.edges
        ]
        return InterferenceGraph.from_edges(self.n, comp)


@dataclass(frozen=True)
class CapacityPolytope:
    """Feasible rate region {s >= 0 : matrix @ s <= 1}, one row per pool."""

    matrix: np.ndarray
    pool_labels: tuple[str, ...] = ()

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
            raise NetworkValidationError("pool matrix must be 2-d and nonempty")
        if np.any(a < 0):
            raise NetworkValidationError("pool matrix entries must be nonnegative")
        if np.any(a.sum(axis=0) == 0):
            dead = np.flatnonzero(a.sum(axis=0) == 0).tolist()
            raise NetworkValidationError(
                f"queues {dead} belong to no pool (zero column in pool matrix)"
            )
        if np.linalg.matrix_rank(a, tol=1e-9) < a.shape[0]:
            warnings.warn("pool matrix is not full row rank", stacklevel=2)
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)
        labels = self.pool_labels
        if not labels:
            labels = tuple(f"pool{l}" for l in range(a.shape[0]))
        if len(labels) != a.shape[0]:
            raise NetworkValidationError("pool_labels length must match pool count")
        object.__setattr__(self, "pool_labels", tuple(labels))

    @property
    def n_pools(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_queues(self) -> int:
        return self.matrix.shape[1]

    def members(self, l: int) -> list[int]:
        return np.flatnonzero(self.matrix[l] > 0).tolist()

    def pools_of(self, j: int) -> list[int]:
        return np.flatnonzero(self.matrix[:, j] > 0).tolist()


@dataclass(frozen=True)
class NetworkSpec:
    """Queues plus routes plus a capacity description.

    ``capacity`` is a CapacityPolytope, an InterferenceGraph, or an explicit
    integer schedule array of shape (n_schedules, n_queues).
    """

    n_queues: int
    routes: tuple[Route, ...]
    capacity: object
    queue_labels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.n_queues <= 0:
            raise NetworkValidationError("need at least one queue")
        object.__setattr__(self, "routes", tuple(self.routes))
        seen = set()
        for r in self.routes:
            if r.id in seen:
                raise NetworkValidationError(f"duplicate route id {r.id!r}")
            seen.add(r.id)
            for j in r.path:
                if not (0 <= j < self.n_queues):
                    raise NetworkValidationError(
                        f"route {r.id!r} references queue {j}, valid range is 0..{self.n_queues - 1}"
                    )
        labels = self.queue_labels
        if not labels:
            labels = tuple(f"q{j}" for j in range(self.n_queues))
        if len(labels) != self.n_queues:
            raise NetworkValidationError("queue_labels length must match n_queues")
        object.__setattr__(self, "queue_labels", tuple(labels))
        cap = self.capacity
        if isinstance(cap, CapacityPolytope):
            if cap.n_queues != self.n_queues:
                raise NetworkValidationError(
                    f"pool matrix has {cap.n_queues} columns, network has {self.n_queues} queues"
                )
        elif isinstance(cap, InterferenceGraph):
            if cap.n != self.n_queues:
                raise NetworkValidationError(
                    f"interference graph has {cap.n} vertices, network has {self.n_queues} queues"
                )
        else:
            s = np.asarray(cap, dtype=int)
            if s.ndim != 2 or s.shape[1] != self.n_queues:
                raise NetworkValidationError(
                    "schedule list must be a 2-d array with one column per queue"
                )
            if np.any(s < 0):
                raise NetworkValidationError("schedules must be nonnegative integer vectors")
            object.__setattr__(self, "capacity", s)

    @property
    def n_routes(self) -> int:
        return len(self.routes)

    def rates(self) -> np.ndarray:
        return np.array([r.rate for r in self.routes], dtype=float)

    def capacity_polytope(self) -> CapacityPolytope:
        """Resolve the capacity description to a pool matrix."""
        cap = self.capacity
        if isinstance(cap, CapacityPolytope):
            return cap
        if isinstance(cap, InterferenceGraph):
            return cliques_to_polytope(cap)
        raise NetworkValidationError(
            "deriving pool constraints from an explicit schedule list is not supported; "
            "supply a pool matrix or an interference graph"
        )

    def schedule_list(self, max_vertices: int = 24) -> np.ndarray:
        cap = self.capacity
        if isinstance(cap, InterferenceGraph):
            return enumerate_schedules(cap, max_vertices=max_vertices)
        if isinstance(cap, CapacityPolytope):
            raise NetworkValidationError(
                "schedule enumeration needs an interference graph or an explicit "
                "schedule list; a bare pool matrix does not determine the schedules"
            )
        return np.asarray(cap, dtype=int)


@dataclass(frozen=True)
class LoadProfile:
    """Per-queue and per-pool loads induced by the route rates."""

    queue_loads: np.ndarray
    pool_loads: np.ndarray
    admissible: bool


# -------------------- operations --------------------


def compute_loads(spec: NetworkSpec, polytope: CapacityPolytope) -> LoadProfile:
    """Per-queue load a_j = sum of rates of routes through j; per-pool load
    a_l = sum_j A[l,j] a_j.  Admissible iff every pool load is < 1."""
    if polytope.n_queues != spec.n_queues:
        raise NetworkValidationError(
            f"dimension mismatch: polytope has {polytope.n_queues} queues, spec has {spec.n_queues}"
        )
    a_q = np.zeros(spec.n_queues)
    for r in spec.routes:
        for j in r.path:
            a_q[j] += r.rate
    a_p = polytope.matrix @ a_q
    ok = bool(np.all(a_p < 1.0))
    return LoadProfile(queue_loads=a_q, pool_loads=a_p, admissible=ok)


def _bron_kerbosch(adj: list[set[int]], r: set, p: set, x: set, out: list):
    # pivot variant; output order is normalised by the caller
    if not p and not x:
        out.append(frozenset(r))
        return
    pivot = max(p | x, key=lambda v: len(adj[v] & p))
    for v in sorted(p - adj[pivot]):
        _bron_kerbosch(adj, r | {v}, p & adj[v], x & adj[v], out)
        p = p - {v}
        x = x | {v}


def cliques_to_polytope(graph: InterferenceGraph) -> CapacityPolytope:
    """Pool matrix with one 0/1 row per maximal clique of the graph.

    Rows are ordered by their sorted vertex lists, so the result is
    deterministic.  Isolated vertices yield singleton rows.
    """
    n = graph.n
    adj = [graph.neighbors(v) for v in range(n)]
    found: list[frozenset] = []
    _bron_kerbosch(adj, set(), set(range(n)), set(), found)
    cliques = sorted(tuple(sorted(c)) for c in set(found))
    a = np.zeros((len(cliques), n))
    labels = []
    for i, c in enumerate(cliques):
        a[i, list(c)] = 1.0
        labels.append("+".join(str(v) for v in c))
    return CapacityPolytope(matrix=a, pool_labels=tuple(labels))


def enumerate_schedules(graph: InterferenceGraph, max_vertices: int = 24) -> np.ndarray:
    """All independent sets of the graph as 0/1 rows, lexicographically sorted.

    Includes the empty schedule.  Raises CapExceededError beyond
    ``max_vertices`` vertices because the list can grow exponentially.
    """
    n = graph.n
    if n > max_vertices:
        raise CapExceededError(
            f"schedule enumeration capped at {max_vertices} vertices, graph has {n}"
        )
    adj_mask = [0] * n
    for u, v in graph.edges:
        adj_mask[u] |= 1 << v
        adj_mask[v] |= 1 << u
    rows: list[list[int]] = []

    def rec(v: int, mask: int, row: list[int]):
        if v == n:
            rows.append(row.copy())
            return
        row.append(0)
        rec(v + 1, mask, row)
        row.pop()
        if not (mask & (1 << v)):
            row.append(1)
            rec(v + 1, mask | adj_mask[v], row)
            row.pop()

    rec(0, 0, [])
    return np.array(sorted(rows), dtype=int)


def _has_induced_odd_hole(graph: InterferenceGraph) -> bool:
    # scan all odd vertex subsets of size >= 5 for an induced chordless cycle;
    # a connected 2-regular induced subgraph is exactly such a cycle
    n = graph.n
    adj_mask = [0] * n
    for u, v in graph.edges:
        adj_mask[u] |= 1 << v
        adj_mask[v] |= 1 << u
    verts = range(n)
    for k in range(5, n + 1, 2):
        for subset in itertools.combinations(verts, k):
            mask = 0
            for v in subset:
                mask |= 1 << v
            ok = True
            for v in subset:
                if bin(adj_mask[v] & mask).count("1") != 2:
                    ok = False
                    break
            if not ok:
                continue
            # connectivity over the induced subgraph
            seen = 1 << subset[0]
            stack = [subset[0]]
            while stack:
                v = stack.pop()
                rest = adj_mask[v] & mask & ~seen
                while rest:
                    b = rest & -rest
                    seen |= b
                    stack.append(b.bit_length() - 1)
                    rest ^= b
            if seen == mask:
                return True
    return False


def is_perfect(graph: InterferenceGraph, max_vertices: int = 16) -> bool:
    """Exact perfection test: no induced odd cycle of length >= 5 in the graph
    or in its complement.  Brute force, capped at ``max_vertices``."""
    if graph.n > max_vertices:
        raise CapExceededError(
            f"perfection test capped at {max_vertices} vertices, graph has {graph.n}"
        )
    if _has_induced_odd_hole(graph):
        return False
    return not _has_induced_odd_hole(graph.complement())
