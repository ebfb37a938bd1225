"""Layered shortest-path solver over shells of the boundary graph.

The solver replicates the boundary nodes on a geometric ladder of depth
levels and connects consecutive levels by exact vertical costs and each
level horizontally by depth-scaled chord costs. Dijkstra on this grid
gives an upper bound for either the collar geodesic metric or the interior
Finsler estimate, since every grid path is an admissible continuum path.

Query points attach as virtual nodes: a vertical stub to the adjacent
levels of their snapped column, plus exact direct edges for query pairs
sharing one column. The collar mode exists mainly as an independent check
of the closed-form distance; the estimate mode is the production solver
for the interior Finsler metric.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import ConfigError
from .boundary import BoundaryGraph
from .domain import HeightProjection

__all__ = ["LayeredSolver"]


class LayeredSolver:
    """Dijkstra over node-by-level shells with mode-specific edge rates."""

    def __init__(self, graph: BoundaryGraph, projection: HeightProjection,
                 mode: str = "collar", level_ratio: float = 1.25,
                 t_min: Optional[float] = None, t_max: Optional[float] = None):
        if mode not in ("collar", "kobayashi"):
            raise ConfigError(f"unknown layered mode {mode!r}")
        if level_ratio <= 1.0:
            raise ConfigError("level ratio must exceed one")
        self.graph = graph
        self.projection = projection
        self.mode = mode
        self.eps = projection.epsilon
        if t_min is None:
            t_min = self.eps / 1024.0
        if t_max is None:
            if mode == "collar":
                t_max = self.eps
            else:
                half = 0.45 * graph.domain.diameter_estimate()
                t_max = max(self.eps, half * half)
        if mode == "kobayashi":
            # the deep ladder must keep every pushed node strictly interior
            normals = graph.node_normals()
            while t_max > self.eps:
                probe = graph.nodes - t_max * normals
                if float(np.max(graph.domain.rho(probe))) < -1e-12:
                    break
                t_max *= 0.8
        if not 0 < t_min < t_max:
            raise ConfigError("need 0 < t_min < t_max for the level ladder")
        if mode == "collar" and t_max > self.eps * (1 + 1e-12):
            raise ConfigError("collar mode levels cannot exceed the collar width")
        n_levels = max(2, int(math.ceil(math.log(t_max / t_min)
                                        / math.log(level_ratio))) + 1)
        self.levels = np.geomspace(t_min, t_max, n_levels)
        self._assemble()

    # -- grid assembly -------------------------------------------------------

    def _vertical_cost(self, t_lo, t_hi):
        t_lo = np.asarray(t_lo, dtype=float)
        t_hi = np.asarray(t_hi, dtype=float)
        ratio = np.log(t_hi / t_lo)
        return 0.5 * ratio if self.mode == "collar" else ratio

    def _horizontal_costs(self, t: float) -> np.ndarray:
        """Per-edge costs at one depth level."""
        ii, jj, u, z = self._edges
        if self.mode == "collar":
            lam = self.graph.params["anisotropy"]
            return 2.0 * np.sqrt(u * u + (lam * z) ** 2) / math.sqrt(t)
        if t <= self.eps * (1 + 1e-12):
            return u / math.sqrt(t) + z / t
        from .kobayashi import kobayashi_speed_batch
        nodes = self.graph.nodes
        normals = self.graph.node_normals()
        pa = nodes[ii] - t * normals[ii]
        pb = nodes[jj] - t * normals[jj]
        return kobayashi_speed_batch(self.projection,
                                     self.graph.structure,
                                     0.5 * (pa + pb), pb - pa)

    def _assemble(self):
        m = self.graph.nodes.shape[0]
        L = self.levels.size
        self._m = m
        self._edges = self.graph.edge_components()
        ii, jj, _, _ = self._edges
        rows, cols, data = [], [], []
        for k, t in enumerate(self.levels):
            base = k * m
            w = self._horizontal_costs(float(t))
            rows.append(ii + base)
            cols.append(jj + base)
            data.append(w)
        vcost = self._vertical_cost(self.levels[:-1], self.levels[1:])
        for k in range(L - 1):
            idx = np.arange(m)
            rows.append(k * m + idx)
            cols.append((k + 1) * m + idx)
            data.append(np.full(m, vcost[k]))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        data = np.concatenate(data)
        n = L * m
        self._grid = coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()

    # -- queries -------------------------------------------------------------

    def _query_stubs(self, depths: np.ndarray, cols: np.ndarray, offset: int):
        """Edges from virtual query nodes into the grid."""
        L = self.levels.size
        m = self._m
        rows, colsout, data = [], [], []
        pos = np.searchsorted(self.levels, depths)
        for q, (s, c) in enumerate(zip(depths, cols)):
            attach = []
            p = pos[q]
            if p > 0:
                attach.append(p - 1)
            if p < L:
                attach.append(p)
            for lvl in attach:
                t = self.levels[lvl]
                lo, hi = (s, t) if s <= t else (t, s)
                rows.append(offset + q)
                colsout.append(lvl * m + c)
                data.append(float(self._vertical_cost(lo, hi)))
        return rows, colsout, data

    def distances(self, points: np.ndarray) -> np.ndarray:
        """Pairwise solver distances for a pool of interior points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        feet, depth = self.projection.project_batch(pts)
        if self.mode == "collar" and np.any(depth > self.eps * (1 + 1e-9)):
            raise ConfigError("collar mode queries must stay inside the collar")
        if np.any(depth <= 0):
            raise ConfigError("query points must be strictly interior")
        cols = self.graph.snap(feet)
        Q = pts.shape[0]
        n = self._grid.shape[0]
        rows, colsout, data = self._query_stubs(depth, cols, n)
        # exact vertical edges between queries sharing a column
        scale = self.graph.domain.diameter_estimate()
        for a in range(Q):
            for b in range(a + 1, Q):
                if cols[a] == cols[b] and np.linalg.norm(
                        feet[a] - feet[b]) <= 1e-8 * scale:
                    lo, hi = sorted((depth[a], depth[b]))
                    rows.append(n + a)
                    colsout.append(n + b)
                    data.append(float(self._vertical_cost(lo, hi)))
        base = self._grid.tocoo()
        aug = coo_matrix(
            (np.concatenate([base.data, np.asarray(data)]),
             (np.concatenate([base.row, np.asarray(rows, dtype=int)]),
              np.concatenate([base.col, np.asarray(colsout, dtype=int)]))),
            shape=(n + Q, n + Q)).tocsr()
        ids = np.arange(n, n + Q)
        D = dijkstra(aug, directed=False, indices=ids)[:, ids]
        return np.minimum(D, D.T)

    def distance(self, x, y) -> float:
        D = self.distances(np.stack([np.asarray(x, dtype=float),
                                     np.asarray(y, dtype=float)]))
        return float(D[0, 1])
