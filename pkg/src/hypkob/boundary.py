"""Discrete geodesic structure on the boundary.

The boundary metric is approximated by a k-nearest-neighbor graph on
sampled boundary nodes. Edge weights use an anisotropic chord cost that
charges the chord component transverse to the maximal complex tangent
distribution an ``anisotropy`` multiplier before taking the norm, with
the frame pinned at the node nearest the edge midpoint. At anisotropy 1
the weights collapse to plain Euclidean chord lengths. Distances are
Dijkstra shortest paths; rows are cached and a full table is
materialized on demand for small graphs.

Two evaluation modes coexist deliberately. Snapping to nodes gives an
exact pseudometric on the node set (used for tables and long-range
queries); the local mode corrects short-range queries with direct chord
costs so that scales below the node spacing remain visible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import cKDTree

from .errors import (
    ConfigError,
    ContactUnavailable,
    GraphDisconnected,
    ImageOffBoundary,
)
from .domain import Domain
from .structures import StructureField

__all__ = [
    "BoundaryGraph",
    "BoundaryMap",
    "LipschitzReport",
    "build_graph",
    "d_H",
    "boundary_geodesic",
    "lipschitz_estimate",
    "lipschitz_details",
]


class BoundaryGraph:
    """k-NN geodesic graph on boundary nodes with anisotropic chord weights."""

    def __init__(self, domain: Domain, structure: StructureField,
                 nodes: np.ndarray, adjacency: csr_matrix, params: dict):
        self.domain = domain
        self.structure = structure
        self.nodes = np.asarray(nodes, dtype=float)
        self.adjacency = adjacency
        self.params = dict(params)
        self.tree = cKDTree(self.nodes)
        self._rows: dict[int, np.ndarray] = {}
        self._full: Optional[np.ndarray] = None
        self._frames = self._build_frames()

    # -- construction --------------------------------------------------------

    @classmethod
    def build(cls, domain: Domain, structure: StructureField, n_nodes: int = 600,
              k_neighbors: int = 10, anisotropy: float = 8.0, seed: int = 0,
              selection: str = "farthest", oversample: int = 4) -> "BoundaryGraph":
        """Sample nodes, connect k nearest neighbors, weight the edges.

        ``selection`` picks the thinning strategy for the oversampled
        boundary candidates: ``farthest`` point sampling for even spacing,
        ``halton`` to keep the quasirandom candidates in order (nested
        under refinement), or ``curvature`` for curvature-weighted draws.
        """
        if n_nodes < 8:
            raise ConfigError("boundary graphs need at least 8 nodes")
        cand = domain.sample_boundary(max(oversample * n_nodes, n_nodes + 8),
                                      seed=seed, quasi=True)
        if selection == "halton":
            nodes = cand[:n_nodes]
        elif selection == "farthest":
            nodes = _farthest_point_subset(cand, n_nodes, seed)
        elif selection == "curvature":
            from .domain import principal_curvatures
            kappa = principal_curvatures(domain, cand)
            w = np.clip(kappa.max(axis=-1), 1e-3, None)
            w = w / w.sum()
            rng = np.random.default_rng(seed)
            idx = rng.choice(cand.shape[0], size=n_nodes, replace=False, p=w)
            nodes = cand[np.sort(idx)]
        else:
            raise ConfigError(f"unknown node selection {selection!r}")
        if anisotropy < 1.0:
            raise ConfigError("anisotropy must be at least 1")
        params = {
            "n_nodes": int(n_nodes),
            "k_neighbors": int(k_neighbors),
            "anisotropy": float(anisotropy),
            "seed": int(seed),
            "selection": selection,
            "oversample": int(oversample),
            "refinement_level": 0,
        }
        graph = cls(domain, structure, nodes, csr_matrix((n_nodes, n_nodes)), params)
        graph._connect(k_neighbors)
        return graph

    def _build_frames(self):
        """Per-node orthonormal pair spanning the transverse directions."""
        g = self.domain.grad(self.nodes)
        n = g / np.linalg.norm(g, axis=-1, keepdims=True)
        jn = self.structure.apply(self.nodes, n)
        jn = jn - np.sum(jn * n, axis=-1, keepdims=True) * n
        nrm = np.linalg.norm(jn, axis=-1, keepdims=True)
        if np.any(nrm <= 1e-10):
            raise ContactUnavailable("degenerate transverse frame at a graph node")
        return n, jn / nrm

    def _edge_weights(self, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
        mid = 0.5 * (self.nodes[ii] + self.nodes[jj])
        _, fidx = self.tree.query(mid, k=1)
        return self.chord_cost(self.nodes[ii], self.nodes[jj], fidx)

    def _connect(self, k_neighbors: int):
        m = self.nodes.shape[0]
        k = k_neighbors
        for attempt in range(6):
            kq = min(k + 1, m)
            _, nbr = self.tree.query(self.nodes, k=kq)
            ii = np.repeat(np.arange(m), kq - 1)
            jj = nbr[:, 1:].reshape(-1)
            w = self._edge_weights(ii, jj)
            A = csr_matrix((w, (ii, jj)), shape=(m, m))
            A = A.maximum(A.T)
            ncomp, _ = connected_components(A, directed=False)
            if ncomp == 1:
                self.adjacency = A
                self.params["k_neighbors"] = int(k)
                self._rows.clear()
                self._full = None
                return
            k = min(2 * k, m - 1)
        raise GraphDisconnected(
            f"graph still has {ncomp} components after widening k to {k}"
        )

    def refine(self, factor: int = 2) -> "BoundaryGraph":
        """A denser graph with the same parameters, node count scaled up."""
        p = dict(self.params)
        out = BoundaryGraph.build(
            self.domain, self.structure,
            n_nodes=int(p["n_nodes"] * factor),
            k_neighbors=int(p["k_neighbors"]),
            anisotropy=p["anisotropy"],
            seed=p["seed"], selection=p["selection"],
            oversample=p["oversample"],
        )
        out.params["refinement_level"] = int(p.get("refinement_level", 0)) + 1
        return out

    # -- chord costs and frames ----------------------------------------------

    def chord_parts(self, a: np.ndarray, b: np.ndarray,
                    frame_idx: Optional[np.ndarray] = None):
        """In-distribution and transverse chord components, frame per chord."""
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_2d(np.asarray(b, dtype=float))
        if frame_idx is None:
            mid = 0.5 * (a + b)
            _, frame_idx = self.tree.query(mid, k=1)
        frame_idx = np.atleast_1d(frame_idx)
        n, u = self._frames
        nf = n[frame_idx]
        uf = u[frame_idx]
        d = b - a
        cn = np.sum(d * nf, axis=-1)
        cu = np.sum(d * uf, axis=-1)
        trans = np.sqrt(cn**2 + cu**2)
        horiz = np.sqrt(np.maximum(np.sum(d * d, axis=-1) - trans**2, 0.0))
        return horiz, trans

    def chord_cost(self, a: np.ndarray, b: np.ndarray,
                   frame_idx: Optional[np.ndarray] = None) -> np.ndarray:
        """Anisotropic cost of straight chords, frame pinned per chord.

        The transverse part of the chord (components along the normal and
        the rotated normal at the frame node) is scaled by the anisotropy
        before recombining with the in-distribution part in the Euclidean
        norm, so anisotropy 1 gives exactly the chord length.
        """
        horiz, trans = self.chord_parts(a, b, frame_idx)
        lam = self.params["anisotropy"]
        return np.sqrt(horiz * horiz + (lam * trans) ** 2)

    def edge_components(self):
        """Upper-triangle edge list with split chord components.

        Returns ``(ii, jj, horiz, trans)`` where the components use the
        same midpoint frames as the stored edge weights.
        """
        coo = self.adjacency.tocoo()
        mask = coo.row < coo.col
        ii = coo.row[mask]
        jj = coo.col[mask]
        horiz, trans = self.chord_parts(self.nodes[ii], self.nodes[jj])
        return ii, jj, horiz, trans

    def node_normals(self) -> np.ndarray:
        return self._frames[0]

    # -- queries -------------------------------------------------------------

    def snap(self, points: np.ndarray) -> np.ndarray:
        """Indices of the nearest nodes."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        _, idx = self.tree.query(pts, k=1)
        return idx

    def rows_from(self, indices) -> np.ndarray:
        """Dijkstra distance rows from the given node indices, cached."""
        indices = np.atleast_1d(np.asarray(indices, dtype=int))
        missing = [int(i) for i in np.unique(indices) if int(i) not in self._rows]
        if missing:
            if self._full is not None:
                for i in missing:
                    self._rows[i] = self._full[i]
            else:
                rows = dijkstra(self.adjacency, directed=False, indices=missing)
                for pos, i in enumerate(missing):
                    self._rows[i] = rows[pos]
        return np.stack([self._rows[int(i)] for i in indices])

    def all_pairs(self) -> np.ndarray:
        """Full node-to-node distance table (cached)."""
        if self._full is None:
            self._full = dijkstra(self.adjacency, directed=False)
            for i in range(self._full.shape[0]):
                self._rows[i] = self._full[i]
        return self._full

    def distance_nodes(self, i: int, j: int) -> float:
        if self._full is not None:
            return float(self._full[i, j])
        return float(self.rows_from([i])[0, j])

    def distance(self, p, q) -> float:
        """Snapped geodesic distance between boundary points."""
        i, j = self.snap(np.stack([np.asarray(p, dtype=float),
                                   np.asarray(q, dtype=float)]))
        return self.distance_nodes(int(i), int(j))

    def distance_local(self, p, q, k: int = 8) -> float:
        """Short-range corrected distance.

        Takes the cheaper of a direct anisotropic chord and the best
        node-routed path entered and exited through the k nearest nodes of
        each endpoint. Resolves separations below the node spacing that
        plain snapping rounds away.
        """
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        direct = float(self.chord_cost(p[None], q[None])[0])
        kq = min(k, self.nodes.shape[0])
        _, ip = self.tree.query(p, k=kq)
        _, iq = self.tree.query(q, k=kq)
        ip = np.atleast_1d(ip)
        iq = np.atleast_1d(iq)
        cin = self.chord_cost(np.repeat(p[None], ip.size, axis=0), self.nodes[ip])
        cout = self.chord_cost(self.nodes[iq], np.repeat(q[None], iq.size, axis=0))
        D = self.rows_from(ip)[:, iq]
        routed = float(np.min(cin[:, None] + D + cout[None, :]))
        return min(direct, routed)

    def distance_local_batch(self, A, B, k: int = 6) -> np.ndarray:
        """Vectorized short-range corrected distances for aligned batches."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        m = A.shape[0]
        direct = self.chord_cost(A, B)
        kq = min(k, self.nodes.shape[0])
        _, ia = self.tree.query(A, k=kq)
        _, ib = self.tree.query(B, k=kq)
        ia = ia.reshape(m, kq)
        ib = ib.reshape(m, kq)
        cin = self.chord_cost(np.repeat(A, kq, axis=0),
                              self.nodes[ia.reshape(-1)]).reshape(m, kq)
        cout = self.chord_cost(self.nodes[ib.reshape(-1)],
                               np.repeat(B, kq, axis=0)).reshape(m, kq)
        uniq, inv = np.unique(ia.reshape(-1), return_inverse=True)
        rows = self.rows_from(uniq)
        Dmid = rows[inv.reshape(m, kq)[:, :, None], ib[:, None, :]]
        routed = np.min(cin[:, :, None] + Dmid + cout[:, None, :], axis=(1, 2))
        return np.minimum(direct, routed)

    def geodesic(self, p, q) -> tuple[np.ndarray, float]:
        """Node polyline and length of a shortest path between snapped points."""
        i, j = (int(v) for v in self.snap(np.stack([
            np.asarray(p, dtype=float), np.asarray(q, dtype=float)])))
        dist, pred = dijkstra(self.adjacency, directed=False, indices=i,
                              return_predecessors=True)
        self._rows.setdefault(i, dist)
        if not np.isfinite(dist[j]):
            raise GraphDisconnected(f"no path between nodes {i} and {j}")
        path = [j]
        while path[-1] != i:
            path.append(int(pred[path[-1]]))
        path.reverse()
        return self.nodes[np.array(path)], float(dist[j])

    # -- scales --------------------------------------------------------------

    def edge_weight_stats(self) -> dict:
        w = self.adjacency.tocoo().data
        return {
            "median": float(np.median(w)),
            "max": float(w.max()),
            "min": float(w.min()),
            "n_edges": int(w.size // 2),
        }

    def median_spacing(self) -> float:
        d, _ = self.tree.query(self.nodes, k=2)
        return float(np.median(d[:, 1]))

    # -- persistence ---------------------------------------------------------

    def save(self, path: str):
        A = self.adjacency.tocsr()
        meta = json.dumps(self.params, sort_keys=True)
        np.savez_compressed(path, nodes=self.nodes, data=A.data,
                            indices=A.indices, indptr=A.indptr,
                            shape=np.array(A.shape), meta=np.array(meta))

    @classmethod
    def load(cls, path: str, domain: Domain,
             structure: StructureField) -> "BoundaryGraph":
        with np.load(path, allow_pickle=False) as z:
            nodes = z["nodes"]
            A = csr_matrix((z["data"], z["indices"], z["indptr"]),
                           shape=tuple(z["shape"]))
            params = json.loads(str(z["meta"]))
        return cls(domain, structure, nodes, A, params)


def _farthest_point_subset(cand: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Greedy farthest-point thinning, started from a seeded candidate."""
    rng = np.random.default_rng(seed)
    m = cand.shape[0]
    if n >= m:
        return cand
    start = int(rng.integers(m))
    chosen = np.empty(n, dtype=int)
    chosen[0] = start
    mind = np.linalg.norm(cand - cand[start], axis=-1)
    for t in range(1, n):
        nxt = int(np.argmax(mind))
        chosen[t] = nxt
        np.minimum(mind, np.linalg.norm(cand - cand[nxt], axis=-1), out=mind)
    return cand[np.sort(chosen)]


# ---------------------------------------------------------------------------
# boundary maps and Lipschitz ratios
# ---------------------------------------------------------------------------

@dataclass
class BoundaryMap:
    """A map of the boundary to itself, with an on-boundary validity check."""

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "map"
    tol: float = 1e-8

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(points, dtype=float)), dtype=float)

    def validate(self, domain: Domain, points: np.ndarray) -> np.ndarray:
        img = self(points)
        r = np.abs(domain.rho(img))
        g = np.linalg.norm(domain.grad(img), axis=-1)
        offset = r / np.maximum(g, 1e-12)
        scale = domain.diameter_estimate()
        if np.any(offset > self.tol * scale):
            raise ImageOffBoundary(
                f"map image leaves the boundary by up to {float(offset.max()):.3e}"
            )
        return img


@dataclass
class LipschitzReport:
    ratio: float
    n_pairs: int
    floor: float


def lipschitz_details(graph: BoundaryGraph, graph_target: BoundaryGraph,
                      boundary_map: BoundaryMap, n_pairs: int = 4096,
                      seed: int = 0) -> LipschitzReport:
    """Largest observed expansion ratio of a boundary map in graph distance.

    Source pairs are node pairs of ``graph``; their images are validated
    against the target domain and snapped into ``graph_target``. Pairs
    closer than two median edge weights are excluded; at that range the
    snapped distances are dominated by discretization, not by the map.
    """
    img = boundary_map.validate(graph_target.domain, graph.nodes)
    si = graph_target.snap(img)
    m = graph.nodes.shape[0]
    floor = 2.0 * graph.edge_weight_stats()["median"]
    n_src = max(1, min(m, int(np.ceil(n_pairs / max(m - 1, 1)))))
    if n_src >= m:
        src = np.arange(m)
    else:
        rng = np.random.default_rng(seed)
        src = np.sort(rng.choice(m, size=n_src, replace=False))
    Dsrc = graph.rows_from(src)
    Dimg = graph_target.rows_from(si[src])[:, si]
    mask = Dsrc >= floor
    mask[np.arange(src.size), src] = False
    ratios = np.where(mask, Dimg / np.where(Dsrc > 0, Dsrc, np.inf), 0.0)
    return LipschitzReport(ratio=float(ratios.max()),
                           n_pairs=int(mask.sum()), floor=float(floor))


def lipschitz_estimate(graph: BoundaryGraph, graph_target: BoundaryGraph,
                       boundary_map: BoundaryMap, n_pairs: int = 4096,
                       seed: int = 0) -> float:
    """Empirical lower bound for the horizontal Lipschitz constant."""
    return lipschitz_details(graph, graph_target, boundary_map,
                             n_pairs=n_pairs, seed=seed).ratio


def build_graph(domain: Domain, structure: StructureField, n_nodes: int = 600,
                k_neighbors: int = 10, anisotropy: float = 8.0, seed: int = 0,
                selection: str = "farthest") -> BoundaryGraph:
    """Sampled boundary graph carrying the anisotropic chord metric."""
    return BoundaryGraph.build(domain, structure, n_nodes=n_nodes,
                               k_neighbors=k_neighbors, anisotropy=anisotropy,
                               seed=seed, selection=selection)


def d_H(graph: BoundaryGraph, p, q) -> float:
    """Shortest-path distance between the snapped boundary points."""
    return graph.distance(p, q)


def boundary_geodesic(graph: BoundaryGraph, p, q) -> np.ndarray:
    """Node polyline of a shortest path between the snapped points."""
    nodes, _ = graph.geodesic(p, q)
    return nodes
