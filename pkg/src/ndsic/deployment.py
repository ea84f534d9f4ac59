"""Node placement, ground-truth neighbor graph and sector geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError, DomainError
from .rng import RngStream

#: free-space wavelength of the 2.4 GHz ISM band, meters
DEFAULT_WAVELENGTH = 0.125

PLACEMENT_RETRY_BUDGET = 1000


def near_field_limit(lambda0: float = DEFAULT_WAVELENGTH) -> float:
    """Smallest distance at which the free-space power law is valid."""
    return lambda0 / (4.0 * math.pi)


@dataclass(frozen=True)
class ArenaSpec:
    a: float
    b: float
    node_count: int
    r: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.r > 0):
            raise ConfigurationError("arena sides and radius must be positive")
        if self.a < 2 * self.r or self.b < 2 * self.r:
            raise ConfigurationError(
                f"arena {self.a}x{self.b} must be at least 2r={2 * self.r} on each side"
            )
        if int(self.node_count) != self.node_count or self.node_count < 1:
            raise ConfigurationError(f"node_count must be a positive integer, got {self.node_count}")

    @property
    def density(self) -> float:
        """Nodes per square meter."""
        return self.node_count / (self.a * self.b)


@dataclass(frozen=True)
class Node:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class NeighborGraph:
    """Exact r-disk graph.

    ``adjacency[u]`` is the sorted tuple of neighbor ids of ``u`` and
    ``distances[(u, v)]`` (with ``u < v``) the Euclidean edge length.
    """

    adjacency: tuple
    distances: dict

    @property
    def node_count(self) -> int:
        return len(self.adjacency)

    def degree(self, u: int) -> int:
        return len(self.adjacency[u])

    def distance(self, u: int, v: int) -> float:
        return self.distances[(u, v) if u < v else (v, u)]

    def edges(self):
        """Undirected edges as ``(u, v)`` with ``u < v``, sorted."""
        return sorted(self.distances)

    @property
    def directed_pair_count(self) -> int:
        return 2 * len(self.distances)


@dataclass(frozen=True)
class BeamGeometry:
    """Sector layout shared by every node.

    Beam ``k`` (1-based) spans bearings ``[(k-1)*theta, k*theta)`` measured
    counterclockwise from the positive x-axis.
    """

    beam_count: int

    def __post_init__(self):
        if int(self.beam_count) != self.beam_count or self.beam_count < 2:
            raise ConfigurationError(f"beam_count must be an integer >= 2, got {self.beam_count}")
        if self.beam_count % 2:
            raise ConfigurationError(
                f"beam_count must be even so every beam has an opposite, got {self.beam_count}"
            )

    @property
    def theta(self) -> float:
        return 2.0 * math.pi / self.beam_count

    @classmethod
    def from_theta(cls, theta: float) -> "BeamGeometry":
        count = round(2.0 * math.pi / theta)
        if not math.isclose(count * theta, 2.0 * math.pi, rel_tol=1e-9):
            raise ConfigurationError(f"theta={theta} does not divide 2*pi")
        return cls(count)

    def opposite(self, beam: int) -> int:
        return (beam - 1 + self.beam_count // 2) % self.beam_count + 1

    def beam_of_bearing(self, bearing):
        """Map bearings (radians, any range) to 1-based beam indices."""
        angle = np.mod(bearing, 2.0 * np.pi)
        k = np.floor(angle * self.beam_count / (2.0 * np.pi)).astype(np.int64)
        # mod can return exactly 2*pi for tiny negative inputs
        k = np.minimum(k, self.beam_count - 1)
        return k + 1


def place_nodes(
    arena: ArenaSpec,
    rng: RngStream,
    min_separation: float | None = None,
    retry_budget: int = PLACEMENT_RETRY_BUDGET,
) -> list[Node]:
    """Drop ``arena.node_count`` nodes uniformly in the rectangle.

    Any pair closer than ``min_separation`` (the near-field limit by
    default) gets one endpoint re-drawn until no such pair remains.
    """
    if min_separation is None:
        min_separation = near_field_limit()
    gen = rng.generator()
    n = arena.node_count
    xy = np.column_stack((gen.uniform(0.0, arena.a, n), gen.uniform(0.0, arena.b, n)))
    for _ in range(retry_budget):
        close = cKDTree(xy).query_pairs(min_separation, output_type="ndarray")
        if len(close) == 0:
            break
        redraw = np.unique(close[:, 1])
        xy[redraw, 0] = gen.uniform(0.0, arena.a, len(redraw))
        xy[redraw, 1] = gen.uniform(0.0, arena.b, len(redraw))
    else:
        raise ConfigurationError(
            f"could not separate {n} nodes by {min_separation} m within {retry_budget} redraws"
        )
    return [Node(i, float(x), float(y)) for i, (x, y) in enumerate(xy)]


def positions_array(nodes) -> np.ndarray:
    return np.array([[n.x, n.y] for n in nodes], dtype=float).reshape(-1, 2)


def _pairs_within(xy: np.ndarray, r: float):
    """Index pairs (u < v) at distance <= r, and their distances."""
    if len(xy) > 1:
        # widen the tree query slightly, then apply the exact <= r test
        pairs = cKDTree(xy).query_pairs(r * (1 + 1e-9) + 1e-12, output_type="ndarray")
    else:
        pairs = np.empty((0, 2), dtype=np.int64)
    if not len(pairs):
        return pairs, np.empty(0)
    pairs = np.sort(pairs, axis=1)
    d = np.hypot(xy[pairs[:, 0], 0] - xy[pairs[:, 1], 0], xy[pairs[:, 0], 1] - xy[pairs[:, 1], 1])
    keep = d <= r
    return pairs[keep], d[keep]


def degrees(nodes, r: float) -> np.ndarray:
    """Per-node r-disk degree without materializing a graph."""
    xy = positions_array(nodes)
    pairs, _ = _pairs_within(xy, r)
    return np.bincount(pairs.ravel(), minlength=len(xy))


def build_neighbor_graph(nodes, r: float) -> NeighborGraph:
    xy = positions_array(nodes)
    n = len(xy)
    pairs, d = _pairs_within(xy, r)
    neighbors = [[] for _ in range(n)]
    distances = {}
    for (u, v), dist in zip(pairs.tolist(), d.tolist()):
        neighbors[u].append(v)
        neighbors[v].append(u)
        distances[(u, v)] = dist
    return NeighborGraph(tuple(tuple(sorted(nb)) for nb in neighbors), distances)


def avg_neighbors_analytic(arena: ArenaSpec) -> float:
    """Boundary-corrected mean degree of a uniformly placed node.

    Nodes within ``r`` of an edge of the rectangle lose part of their
    disk; averaging that loss over the border strip gives

        (3*pi*lam*r^4 - 8*(a+b)*lam*r^3 + 6*pi*lam*a*b*r^2) / (6*a*b)

    with ``lam = N / (a*b)``.  Only valid when both sides are >= 2r.
    """
    a, b, r = arena.a, arena.b, arena.r
    if a < 2 * r or b < 2 * r:
        raise DomainError("boundary correction requires a >= 2r and b >= 2r")
    lam = arena.density
    return lam * (3 * math.pi * r**4 - 8 * (a + b) * r**3 + 6 * math.pi * a * b * r**2) / (6 * a * b)


def per_beam_neighbors(n_bar: float, theta: float) -> float:
    if n_bar < 0:
        raise DomainError("mean neighbor count must be non-negative")
    return theta / (2.0 * math.pi) * n_bar


def beam_of(source: Node, target: Node, geom: BeamGeometry) -> int:
    """1-based beam of ``source`` that contains ``target``."""
    dx, dy = target.x - source.x, target.y - source.y
    if dx == 0 and dy == 0:
        raise DomainError(f"nodes {source.id} and {target.id} share a position")
    return int(geom.beam_of_bearing(math.atan2(dy, dx)))
