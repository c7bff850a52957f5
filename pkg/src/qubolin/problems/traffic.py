"""Route choice on a synthetic grid road network.

Cars pick one of ``n_routes`` candidate routes; the cost is
``1/2 sum_e x_e**2`` where ``x_e`` counts the cars whose chosen route uses
road segment ``e``.  Variable ``(mu, i)`` (route ``mu`` of car ``i``) has
index ``i * n_routes + mu``, so each car's one-hot group is contiguous.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np
import scipy.sparse as sp

from ..model import (
    BINARY,
    ConstrainedProblem,
    LinearConstraint,
    ModelError,
    MultiplierState,
    QuadraticObjective,
    build_effective,
    residual,
)
from ..samplers import exact_field_minimize

MAX_OD_ATTEMPTS = 100


@dataclass(frozen=True, eq=False)
class TrafficInstance:
    n_cars: int
    n_routes: int
    segment_count: int
    # occupancy triplets: segment e is used by route mu of car i
    occ_e: np.ndarray
    occ_mu: np.ndarray
    occ_i: np.ndarray
    route_lengths: np.ndarray  # (n_routes, n_cars)
    routes: tuple = ()  # per car, per route: node path (for reports)

    @property
    def n_vars(self) -> int:
        return self.n_cars * self.n_routes

    def var(self, mu, i):
        return np.asarray(i) * self.n_routes + np.asarray(mu)

    @property
    def occupancy(self) -> sp.csr_matrix:
        """Segment-by-variable 0/1 matrix ``S``."""
        return sp.csr_matrix(
            (np.ones(self.occ_e.size), (self.occ_e, self.var(self.occ_mu, self.occ_i))),
            shape=(self.segment_count, self.n_vars),
        )

    def loads(self, q) -> np.ndarray:
        return np.asarray(self.occupancy @ np.asarray(q, dtype=np.float64)).ravel()

    def cost(self, q) -> float:
        x = self.loads(q)
        return 0.5 * float(x @ x)

    def assignment(self, routes_per_car) -> np.ndarray:
        q = np.zeros(self.n_vars, dtype=np.int8)
        q[self.var(np.asarray(routes_per_car), np.arange(self.n_cars))] = 1
        return q

    def onehot_constraints(self):
        return tuple(
            LinearConstraint.onehot(range(i * self.n_routes, (i + 1) * self.n_routes)) for i in range(self.n_cars)
        )

    def to_dict(self) -> dict:
        return {
            "n_cars": self.n_cars,
            "n_routes": self.n_routes,
            "segment_count": self.segment_count,
            "occupancy": {"e": self.occ_e.tolist(), "mu": self.occ_mu.tolist(), "i": self.occ_i.tolist()},
            "route_lengths": self.route_lengths.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrafficInstance":
        occ = d["occupancy"]
        return cls(
            d["n_cars"], d["n_routes"], d["segment_count"],
            np.asarray(occ["e"], dtype=np.int64), np.asarray(occ["mu"], dtype=np.int64),
            np.asarray(occ["i"], dtype=np.int64), np.asarray(d["route_lengths"], dtype=np.float64),
        )


def instance_from_routes(n_cars: int, n_routes: int, segment_count: int, routes_segments) -> TrafficInstance:
    """Build an instance from explicit segment lists: ``routes_segments[i][mu]`` is an iterable of segment ids."""
    e, mu, i = [], [], []
    lengths = np.zeros((n_routes, n_cars))
    for car in range(n_cars):
        for r in range(n_routes):
            segs = sorted(set(routes_segments[car][r]))
            if not segs:
                raise ModelError(f"route {r} of car {car} uses no segment")
            if max(segs) >= segment_count or min(segs) < 0:
                raise ModelError("segment index out of range")
            e += segs
            mu += [r] * len(segs)
            i += [car] * len(segs)
            lengths[r, car] = len(segs)
    return TrafficInstance(n_cars, n_routes, segment_count, np.array(e, dtype=np.int64),
                           np.array(mu, dtype=np.int64), np.array(i, dtype=np.int64), lengths)


def _candidate_routes(G, edge_id, o, d, n_routes, rng):
    routes = [nx.shortest_path(G, o, d, weight="w")]
    for _ in range(1, n_routes):
        path = routes[0]
        for attempt in range(20):
            for a, b in G.edges:
                G.edges[a, b]["p"] = 1.0 + (0.5 + attempt * 0.5) * rng.random()
            for r in routes:
                for a, b in zip(r, r[1:]):
                    G.edges[a, b]["p"] *= 1.5 + rng.random()
            path = nx.shortest_path(G, o, d, weight="p")
            if path not in routes:
                break
        routes.append(path)
    return [[edge_id[frozenset(ab)] for ab in zip(r, r[1:])] for r in routes], routes


def traffic_problem(t: TrafficInstance) -> ConstrainedProblem:
    """Quadratic form: ``f0 = 1/2 q^T S^T S q`` plus hard one-hot groups per car."""
    S = t.occupancy
    G = (S.T @ S).tocoo()
    lin = 0.5 * np.asarray((S.T @ S).diagonal()).ravel()
    up = G.row < G.col
    base = QuadraticObjective.build(t.n_vars, lin, (G.row[up], G.col[up], G.data[up]))
    return ConstrainedProblem(t.n_vars, base, t.onehot_constraints(), BINARY, "traffic")


def linearize_traffic(t: TrafficInstance) -> ConstrainedProblem:
    """Segment-multiplier form: one unit-weight soft constraint ``x_e = 0`` per used segment.

    Its penalty form ``1/2 sum_e x_e**2`` equals the traffic cost, and the
    multiplier update with the finite-weight residual drives ``nu_e`` toward
    ``-<x_e>``, making each route's field its expected congestion.
    """
    S = t.occupancy
    used = np.flatnonzero(np.diff(S.indptr))
    cons = [LinearConstraint.build(dict(zip(S[e].indices.tolist(), [1.0] * S[e].nnz)), 0.0, penalty_weight=1.0)
            for e in used]
    cons += list(t.onehot_constraints())
    return ConstrainedProblem(t.n_vars, QuadraticObjective.build(t.n_vars), tuple(cons), BINARY, "traffic")


def gen_traffic(grid_w: int, grid_h: int, n_cars: int, n_routes: int, seed: int = 0):
    """Random origin/destination pairs on a unit-length grid and candidate routes per car.

    The first candidate is a shortest path; the others are shortest paths
    under randomly inflated edge weights (earlier routes inflated more).
    Returns ``(instance, quadratic-form problem)``.
    """
    if n_routes < 2:
        raise ModelError("need at least 2 routes per car")
    if grid_w * grid_h < 2:
        raise ModelError("grid needs at least two nodes")
    rng = np.random.default_rng(seed)
    G = nx.grid_2d_graph(grid_w, grid_h)
    nx.set_edge_attributes(G, 1.0, "w")
    edge_id = {frozenset(e): k for k, e in enumerate(sorted(G.edges))}
    nodes = sorted(G.nodes)
    segs, paths = [], []
    for _ in range(n_cars):
        for _attempt in range(MAX_OD_ATTEMPTS):
            a, b = rng.choice(len(nodes), size=2, replace=False)
            o, d = nodes[a], nodes[b]
            if nx.has_path(G, o, d):
                break
        else:
            raise ModelError("could not draw a connected origin/destination pair")
        s, r = _candidate_routes(G, edge_id, o, d, n_routes, rng)
        segs.append(s)
        paths.append(r)
    t = instance_from_routes(n_cars, n_routes, len(edge_id), segs)
    t = TrafficInstance(t.n_cars, t.n_routes, t.segment_count, t.occ_e, t.occ_mu, t.occ_i, t.route_lengths,
                        tuple(paths))
    return t, traffic_problem(t)


def shortest_path_baseline(t: TrafficInstance) -> np.ndarray:
    """Every car takes its shortest candidate (ties to the lowest route index)."""
    return t.assignment(np.argmin(t.route_lengths, axis=0))


def deterministic_baseline(t: TrafficInstance, nu0=None, eta: float = 0.05, max_iterations: int = 50) -> np.ndarray:
    """Mean-field route choice: exact field minimization with multiplier updates.

    Each car takes the route with the largest ``h = sum_e nu_e S_e`` (the
    smallest expected congestion); multipliers then step toward ``-x_e`` of
    that assignment.  Stops when the assignment repeats.
    """
    p = linearize_traffic(t)
    nu = np.zeros(p.n_multipliers) if nu0 is None else np.asarray(
        nu0.nu if isinstance(nu0, MultiplierState) else nu0, dtype=np.float64)
    q = exact_field_minimize(build_effective(p, nu))
    for _ in range(max_iterations):
        F = np.asarray(p.matrix @ q.astype(np.float64)).ravel()
        nu = nu + eta * residual(p, F, nu)
        q_new = exact_field_minimize(build_effective(p, nu))
        if np.array_equal(q_new, q):
            break
        q = q_new
    return q
