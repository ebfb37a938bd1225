"""The boundary-anchored metrics on the domain interior.

Two distances live here. The first, ``g``, is a closed formula in the
boundary distance of the nearest-point feet and the square-root heights of
the endpoints. The second, ``d``, is the geodesic distance of the collar
path family: inside the collar it has an exact closed form obtained by
optimizing over the peak height of boundary-parallel paths; deeper points
enter the collar along their normal rays at a cost equal to their depth
excess, except that two points on a common ray connect by the straight
segment.

The closed collar form makes ``d`` an exact pseudometric over snapped
feet: concatenation of optimal profiles is again an admissible profile, so
the triangle inequality holds to rounding, not to mesh resolution.

Path lengths are computed by dyadic refinement, either of metric sums (for
distances) or of a first-order rate (for ``g`` and the interior Finsler
estimate), with frames pinned per original segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (
    ConfigError,
    HeightsDiffer,
    ProjectionsDiffer,
    RefinementStalled,
)
from ._util import pair_key
from .boundary import BoundaryGraph
from .domain import HeightProjection

__all__ = [
    "Polyline",
    "PreparedPoints",
    "MetricFamily",
    "MetricFunctional",
    "path_length",
    "collar_profile_distance",
    "g_value",
    "d_value",
    "vertical_path",
    "horizontal_path",
    "composite_upper_path",
    "geodesic",
    "estimate_C",
    "lift_dipping_path",
    "dilation",
]

FUNCTIONAL_KINDS = ("g", "d", "kobayashi_estimate", "euclidean", "external")


def collar_profile_distance(w, ha, hb, eps):
    """Optimal collar path cost for boundary separation ``w`` and heights.

    Over paths that rise from height ``ha`` to a peak ``P``, run the
    boundary separation at that height, and descend to ``hb``, the cost
    ``ln(P^2/(ha hb)) + 2 w / P`` is minimized at ``P = w`` clipped into
    the admissible interval ``[max(ha, hb), sqrt(eps)]``.
    """
    w = np.asarray(w, dtype=float)
    ha = np.asarray(ha, dtype=float)
    hb = np.asarray(hb, dtype=float)
    hmax = np.maximum(ha, hb)
    peak = np.clip(w, hmax, math.sqrt(eps))
    out = 2.0 * np.log(peak / np.sqrt(ha * hb))
    return out + np.where(w > 0, 2.0 * w / np.where(peak > 0, peak, 1.0), 0.0)


@dataclass
class Polyline:
    """A piecewise linear path with optional per-segment evaluation hints.

    ``frame_nodes`` pins the anisotropic frame used for the horizontal part
    of each original segment; ``vertical`` marks segments that run along a
    single normal ray, whose collar length has a closed form. Exact
    duplicate consecutive points are dropped on construction, so a fully
    degenerate input collapses to a single-point path of length zero.

    ``seg_lengths`` caches per-segment lengths under named functionals;
    constructions with a closed form attach theirs so no quadrature runs.
    """

    points: np.ndarray
    frame_nodes: Optional[np.ndarray] = None
    vertical: Optional[np.ndarray] = None
    seg_lengths: Optional[dict] = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[0] < 1:
            raise ConfigError("a polyline needs at least one point")
        if self.seg_lengths is None:
            self.seg_lengths = {}
        gaps = np.linalg.norm(np.diff(self.points, axis=0), axis=-1)
        if np.any(gaps == 0.0):
            keep = gaps > 0.0
            self.points = np.vstack([self.points[:-1][keep], self.points[-1:]])
            if self.frame_nodes is not None and self.frame_nodes.shape[0] == keep.size:
                self.frame_nodes = self.frame_nodes[keep]
            if self.vertical is not None and self.vertical.shape[0] == keep.size:
                self.vertical = self.vertical[keep]

    @property
    def n_segments(self) -> int:
        return self.points.shape[0] - 1

    def chord_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.points, axis=0), axis=-1)

    def euclidean_length(self) -> float:
        return float(self.chord_lengths().sum())

    def params(self) -> np.ndarray:
        """Cumulative Euclidean parameter, starting at zero."""
        return np.concatenate([[0.0], np.cumsum(self.chord_lengths())])

    def set_segment_lengths(self, kind: str, values) -> None:
        vals = np.atleast_1d(np.asarray(values, dtype=float))
        if vals.size != self.n_segments:
            raise ConfigError("segment length cache must match segment count")
        self.seg_lengths[kind] = vals

    def cached_length(self, kind: str) -> Optional[float]:
        if kind not in self.seg_lengths:
            return None
        return float(np.sum(self.seg_lengths[kind]))


@dataclass
class PreparedPoints:
    """Batched projection data for metric evaluation."""

    points: np.ndarray
    feet: np.ndarray
    depth: np.ndarray     # Euclidean distance to the boundary
    height: np.ndarray    # sqrt of depth
    node: np.ndarray      # snapped node index of the foot
    heff: np.ndarray      # height clipped to the collar ceiling
    extra: np.ndarray     # depth excess beyond the collar, zero inside

    def __len__(self):
        return self.points.shape[0]

    def take(self, idx) -> "PreparedPoints":
        idx = np.asarray(idx)
        return PreparedPoints(self.points[idx], self.feet[idx], self.depth[idx],
                              self.height[idx], self.node[idx], self.heff[idx],
                              self.extra[idx])


class MetricFamily:
    """Evaluator for the boundary-anchored metrics over one domain setup."""

    def __init__(self, projection: HeightProjection, graph: BoundaryGraph,
                 foot_tol: float = 1e-8):
        if graph.domain is not projection.domain:
            raise ConfigError("graph and projection must share one domain")
        self.projection = projection
        self.graph = graph
        self.eps = projection.epsilon
        self.foot_tol = float(foot_tol)
        self._point_cache: dict[bytes, tuple] = {}
        self._pair_cache: dict[tuple, float] = {}

    # -- preparation ---------------------------------------------------------

    def prepare(self, X) -> PreparedPoints:
        """Project a batch, snap the feet, cache per quantized point."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        m = X.shape[0]
        feet = np.empty_like(X)
        depth = np.empty(m)
        keys = [pair_key(x, x) for x in X]
        missing = [i for i, k in enumerate(keys) if k not in self._point_cache]
        if missing:
            P, dist = self.projection.project_batch(X[missing])
            for pos, i in enumerate(missing):
                self._point_cache[keys[i]] = (P[pos], float(dist[pos]))
        for i, k in enumerate(keys):
            feet[i], depth[i] = self._point_cache[k]
        node = self.graph.snap(feet)
        height = np.sqrt(depth)
        roof = math.sqrt(self.eps)
        heff = np.minimum(height, roof)
        extra = np.maximum(depth - self.eps, 0.0)
        return PreparedPoints(X, feet, depth, height, node, heff, extra)

    def prepare_on_rays(self, node_idx, depths) -> PreparedPoints:
        """Points built at known depths on node normal rays, no solver pass.

        Valid while the depth stays under the collar width, where the node
        itself is the unique nearest boundary point.
        """
        node_idx = np.atleast_1d(np.asarray(node_idx, dtype=int))
        depths = np.broadcast_to(np.asarray(depths, dtype=float), node_idx.shape)
        if np.any(depths < 0) or np.any(depths > self.eps):
            raise ConfigError("ray depths must stay inside the collar")
        feet = self.graph.nodes[node_idx]
        n = self.graph.domain.outward_normal(feet)
        pts = feet - depths[:, None] * n
        height = np.sqrt(depths)
        return PreparedPoints(pts, feet, depths.copy(), height, node_idx.copy(),
                              height.copy(), np.zeros_like(height))

    # -- boundary separations ------------------------------------------------

    def _w_snap(self, A: PreparedPoints, B: PreparedPoints) -> np.ndarray:
        rows = self.graph.rows_from(A.node)
        return rows[np.arange(len(A)), B.node]

    def _w_matrix(self, A: PreparedPoints, B: PreparedPoints) -> np.ndarray:
        return self.graph.rows_from(A.node)[:, B.node]

    def _w_local(self, A: PreparedPoints, B: PreparedPoints) -> np.ndarray:
        return self.graph.distance_local_batch(A.feet, B.feet)

    # -- the two metrics, vectorized over aligned batches ---------------------

    def g_pairs(self, A: PreparedPoints, B: PreparedPoints,
                w_mode: str = "snap") -> np.ndarray:
        """Boundary-anchored log distance for aligned point batches."""
        w = self._w_snap(A, B) if w_mode == "snap" else self._w_local(A, B)
        hmax = np.maximum(A.height, B.height)
        same = np.all(np.abs(A.points - B.points) < 1e-15, axis=-1)
        val = 2.0 * np.log((w + hmax) / np.sqrt(A.height * B.height))
        return np.where(same, 0.0, val)

    def d_pairs(self, A: PreparedPoints, B: PreparedPoints,
                w_mode: str = "snap") -> np.ndarray:
        """Collar geodesic distance for aligned point batches.

        Deep points pay their depth excess to reach the collar shell along
        their rays; a deep pair sharing one ray takes the straight segment.
        """
        w = self._w_snap(A, B) if w_mode == "snap" else self._w_local(A, B)
        core = collar_profile_distance(w, A.heff, B.heff, self.eps)
        out = A.extra + B.extra + core
        both_deep = (A.extra > 0) & (B.extra > 0)
        if np.any(both_deep):
            feet_gap = np.linalg.norm(A.feet - B.feet, axis=-1)
            scale = self.graph.domain.diameter_estimate()
            same_ray = both_deep & (feet_gap <= self.foot_tol * scale)
            if np.any(same_ray):
                direct = np.linalg.norm(A.points - B.points, axis=-1)
                out = np.where(same_ray, direct, out)
        same = np.all(np.abs(A.points - B.points) < 1e-15, axis=-1)
        return np.where(same, 0.0, out)

    # -- scalar interface with caching ----------------------------------------

    def _pair(self, x, y, kind: str) -> float:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        key = (kind, pair_key(x, y))
        if key not in self._pair_cache:
            A = self.prepare(x[None])
            B = self.prepare(y[None])
            fn = self.g_pairs if kind == "g" else self.d_pairs
            self._pair_cache[key] = float(fn(A, B)[0])
        return self._pair_cache[key]

    def g(self, x, y) -> float:
        return self._pair(x, y, "g")

    def d(self, x, y) -> float:
        return self._pair(x, y, "d")

    def collar_distance(self, x, y) -> float:
        """The closed collar form itself; endpoints must lie in the collar."""
        A = self.prepare(np.asarray(x, dtype=float)[None])
        B = self.prepare(np.asarray(y, dtype=float)[None])
        if A.extra[0] > 0 or B.extra[0] > 0:
            raise ConfigError("collar_distance needs both endpoints in the collar")
        w = self._w_snap(A, B)
        return float(collar_profile_distance(w, A.heff, B.heff, self.eps)[0])

    # -- structured paths ------------------------------------------------------

    def vertical_path(self, x, y) -> Polyline:
        """Straight normal-ray path between two points over one foot.

        Raises when the feet disagree beyond tolerance. The collar length
        is the log ratio of the heights, exactly; it is attached to the
        polyline so no quadrature is needed.
        """
        A = self.prepare(np.asarray(x, dtype=float)[None])
        B = self.prepare(np.asarray(y, dtype=float)[None])
        scale = self.graph.domain.diameter_estimate()
        gap = float(np.linalg.norm(A.feet[0] - B.feet[0]))
        if gap > self.foot_tol * scale:
            raise ProjectionsDiffer(
                f"feet differ by {gap:.3e}; not a single-ray pair")
        pl = Polyline(np.stack([A.points[0], B.points[0]]),
                      frame_nodes=np.array([A.node[0]]),
                      vertical=np.array([True]))
        val = abs(math.log(A.height[0] / B.height[0]))
        if pl.n_segments == 1:
            pl.set_segment_lengths("g", [val])
            pl.set_segment_lengths("d", [val])
        return pl

    def horizontal_path(self, x, y, height_tol: float = 1e-9) -> Polyline:
        """Constant-height path over the graph geodesic between the feet.

        Both endpoints must sit at one height within tolerance. The
        interior vertices are the geodesic nodes pushed inward to the
        shared depth, and every segment pins the frame its edge weight
        was built with, so the measured horizontal cost reproduces the
        graph distance between the snapped feet. Coinciding feet give
        the degenerate single-point path.
        """
        A = self.prepare(np.asarray(x, dtype=float)[None])
        B = self.prepare(np.asarray(y, dtype=float)[None])
        if abs(A.height[0] - B.height[0]) > height_tol * max(A.height[0], 1.0):
            raise HeightsDiffer(
                f"heights {A.height[0]:.6g} and {B.height[0]:.6g} differ")
        if A.extra[0] > 0 or B.extra[0] > 0:
            raise ConfigError("horizontal paths are collar constructions")
        scale = self.graph.domain.diameter_estimate()
        if float(np.linalg.norm(A.feet[0] - B.feet[0])) <= self.foot_tol * scale:
            return Polyline(A.points[0][None])
        h = float(A.height[0])
        t = h * h
        nodes, _ = self.graph.geodesic(A.feet[0], B.feet[0])
        bndry = np.vstack([A.feet[0][None], nodes, B.feet[0][None]])
        shell = bndry - t * self.graph.domain.outward_normal(bndry)
        pts = np.vstack([A.points[0], shell, B.points[0]])
        frames = self.graph.snap(0.5 * (bndry[:-1] + bndry[1:]))
        # the hop onto and off the shell moves no foot; any frame works
        frames = np.concatenate([frames[:1], frames, frames[-1:]])
        return Polyline(pts, frame_nodes=frames)

    def composite_upper_path(self, x, y) -> tuple[Polyline, float]:
        """Up-over-down witness path together with its exact cost.

        The cost equals the composite distance for the pair, so the path
        certifies the value of ``d`` from above.
        """
        A = self.prepare(np.asarray(x, dtype=float)[None])
        B = self.prepare(np.asarray(y, dtype=float)[None])
        dval = float(self.d_pairs(A, B)[0])
        scale = self.graph.domain.diameter_estimate()
        same_ray = (float(np.linalg.norm(A.feet[0] - B.feet[0]))
                    <= self.foot_tol * scale)
        if same_ray and A.extra[0] > 0 and B.extra[0] > 0:
            pl = Polyline(np.stack([A.points[0], B.points[0]]))
            return pl, dval
        w = float(self._w_snap(A, B)[0])
        hmax = float(np.maximum(A.heff[0], B.heff[0]))
        peak = min(max(w, hmax), math.sqrt(self.eps))
        tpk = peak * peak
        dom = self.graph.domain
        pts = [A.points[0]]
        feet = [A.feet[0]]
        vertical = []
        na = dom.outward_normal(A.feet[0])
        nb = dom.outward_normal(B.feet[0])
        # climb (or descend, for a deep endpoint) to the peak shell
        if abs(A.depth[0] - tpk) > 1e-14:
            pts.append(A.feet[0] - tpk * na)
            feet.append(A.feet[0])
            vertical.append(True)
        if w > 0:
            nodes, _ = self.graph.geodesic(A.feet[0], B.feet[0])
            shell = nodes - tpk * dom.outward_normal(nodes)
            for p, f in zip(shell, nodes):
                pts.append(p)
                feet.append(f)
                vertical.append(False)
        if abs(B.depth[0] - tpk) > 1e-14:
            pts.append(B.feet[0] - tpk * nb)
            feet.append(B.feet[0])
            vertical.append(False)
        pts.append(B.points[0])
        feet.append(B.feet[0])
        vertical.append(True)
        feet = np.array(feet)
        frames = self.graph.snap(0.5 * (feet[:-1] + feet[1:]))
        pl = Polyline(np.array(pts), frame_nodes=frames,
                      vertical=np.array(vertical, dtype=bool))
        return pl, dval

    def geodesic(self, x, y) -> Polyline:
        """Minimizing polyline for ``d``: vertical stubs over an optimal shell."""
        pl, _ = self.composite_upper_path(x, y)
        return pl

    # -- diagnostics -----------------------------------------------------------

    def additive_gap(self, n_pairs: int = 4000, seed: int = 0) -> dict:
        """Observed spread of ``d - g`` over seeded collar samples.

        Points sit on node rays with depths biased toward the boundary.
        The theoretical cap uses the largest node separation on the graph.
        """
        rng = np.random.default_rng(seed)
        m = self.graph.nodes.shape[0]
        idx = rng.integers(0, m, size=(n_pairs, 2))
        u = rng.random((n_pairs, 2))
        depths = self.eps * u**2
        A = self.prepare_on_rays(idx[:, 0], depths[:, 0])
        B = self.prepare_on_rays(idx[:, 1], depths[:, 1])
        gv = self.g_pairs(A, B)
        dv = self.d_pairs(A, B)
        gap = dv - gv
        wmax = float(np.max(self.graph.rows_from(np.arange(min(m, 64)))))
        reach = wmax + math.sqrt(self.eps)
        root = math.sqrt(self.eps)
        cap = max(2.0, 2.0 * reach / root - 2.0 * math.log(reach / root))
        return {
            "max": float(gap.max()),
            "min": float(gap.min()),
            "q99": float(np.quantile(gap, 0.99)),
            "cap": cap,
            "n_pairs": int(n_pairs),
        }

    def functional(self, kind: str,
                   external_pair: Optional[Callable] = None) -> "MetricFunctional":
        if kind not in FUNCTIONAL_KINDS:
            raise ConfigError(f"unknown length functional {kind!r}")
        if kind == "external" and external_pair is None:
            raise ConfigError("external functionals need a pair callable")
        return MetricFunctional(kind=kind, family=self, external_pair=external_pair)

    # spec-facing aliases
    g_value = g
    d_value = d


@dataclass
class MetricFunctional:
    """Length functional over polylines for one of the named kinds.

    Also exposes the pairwise distance of the kind where one exists in
    closed or cached form; the interior Finsler estimate has no pairwise
    shortcut here and refers callers to its own solver.
    """

    kind: str
    family: MetricFamily
    external_pair: Optional[Callable] = None

    def length(self, polyline: Polyline, rel_tol: float = 1e-6,
               max_depth: int = 10) -> float:
        return path_length(polyline, self, rel_tol=rel_tol, max_depth=max_depth)

    def pair(self, x, y) -> float:
        if self.kind == "g":
            return self.family.g(x, y)
        if self.kind == "d":
            return self.family.d(x, y)
        if self.kind == "euclidean":
            return float(np.linalg.norm(np.asarray(x, dtype=float)
                                        - np.asarray(y, dtype=float)))
        if self.kind == "external":
            return float(self.external_pair(np.asarray(x, dtype=float),
                                            np.asarray(y, dtype=float)))
        raise ConfigError(
            "pairwise values for the interior estimate come from its solver")

    def pairs(self, A: PreparedPoints, B: PreparedPoints) -> np.ndarray:
        """Vectorized pair values for aligned prepared batches."""
        if self.kind == "g":
            return self.family.g_pairs(A, B)
        if self.kind == "d":
            return self.family.d_pairs(A, B)
        if self.kind == "euclidean":
            return np.linalg.norm(A.points - B.points, axis=-1)
        if self.kind == "external":
            return np.array([float(self.external_pair(a, b))
                             for a, b in zip(A.points, B.points)])
        raise ConfigError(
            "pairwise values for the interior estimate come from its solver")


# ---------------------------------------------------------------------------
# path length
# ---------------------------------------------------------------------------

def _refined_points(pl: Polyline, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Chord-split points at dyadic depth with original-segment ownership."""
    pts = pl.points
    nseg = pts.shape[0] - 1
    per = 2**depth
    frac = np.arange(per) / per
    a = pts[:-1]
    b = pts[1:]
    fine = a[:, None, :] + frac[None, :, None] * (b - a)[:, None, :]
    fine = fine.reshape(nseg * per, -1)
    fine = np.vstack([fine, pts[-1:]])
    owner = np.repeat(np.arange(nseg), per)
    return fine, owner


def _metric_sum(family: MetricFamily, pts: np.ndarray, kind: str,
                external_pair) -> float:
    if kind == "external":
        return float(sum(external_pair(pts[i], pts[i + 1])
                         for i in range(pts.shape[0] - 1)))
    A = family.prepare(pts[:-1])
    B = family.prepare(pts[1:])
    vals = family.d_pairs(A, B, w_mode="local")
    return float(vals.sum())

def _rate_sum(family: MetricFamily, pl: Polyline, pts: np.ndarray,
              owner: np.ndarray, frame_nodes: np.ndarray, kind: str) -> float:
    """First-order sum: per sub-chord rate at interpolated midpoints.

    The functional is intrinsic to the polyline data. Each original
    segment carries the anisotropic chord cost of its own endpoint feet
    in its pinned frame, spread evenly over its sub-chords; heights
    interpolate linearly along the segment, so refinement sharpens only
    the height weighting and never re-splits a boundary chord into
    cheaper arcs. Ray-aligned segments use the exact log form instead.
    """
    P = family.prepare(pl.points)
    h = P.height
    nseg = pl.n_segments
    per = owner.size // nseg
    vert = (np.zeros(nseg, dtype=bool) if pl.vertical is None
            else pl.vertical.astype(bool))
    total = 0.0
    scale = 2.0 if kind == "kobayashi_estimate" else 1.0
    if np.any(vert):
        logs = np.abs(np.log(h[1:] / h[:-1]))
        total += scale * float(logs[vert].sum())
    keep = ~vert
    if not np.any(keep):
        return total
    if kind == "g":
        w_seg = family.graph.chord_cost(P.feet[:-1], P.feet[1:], frame_nodes)
        dh = h[1:] - h[:-1]
        frac = (np.arange(owner.size) % per + 0.5) / per
        h_mid = h[:-1][owner] + frac * dh[owner]
        rates = (2.0 * w_seg[owner] + np.abs(dh[owner])) / (per * h_mid)
        total += float(rates[keep[owner]].sum())
    elif kind == "kobayashi_estimate":
        from .kobayashi import kobayashi_speed_batch
        sub = keep[owner]
        a = pts[:-1][sub]
        b = pts[1:][sub]
        midpts = 0.5 * (a + b)
        total += float(kobayashi_speed_batch(
            family.projection, family.graph.structure, midpts, b - a).sum())
    else:
        raise ConfigError(f"rate quadrature does not apply to kind {kind!r}")
    return total


def _path_length(family: MetricFamily, polyline: Polyline, kind: str = "g",
                 external_pair: Optional[Callable] = None, rel_tol: float = 1e-6,
                 max_depth: int = 10) -> float:
    """Length of a polyline under one of the named functionals.

    Distance kinds refine by chord bisection until the partition sums
    settle; rate kinds refine a midpoint quadrature of the known
    infinitesimal form. Failure to settle within the depth budget raises
    with the last two estimates attached.
    """
    if kind not in FUNCTIONAL_KINDS:
        raise ConfigError(f"unknown length functional {kind!r}")
    cached = polyline.cached_length(kind)
    if cached is not None:
        return cached
    if polyline.n_segments == 0:
        return 0.0
    if kind == "euclidean":
        return polyline.euclidean_length()
    if kind == "external" and external_pair is None:
        raise ConfigError("external functionals need a pair callable")
    if kind in ("g", "kobayashi_estimate"):
        frame_nodes = polyline.frame_nodes
        if frame_nodes is None:
            mids = 0.5 * (polyline.points[:-1] + polyline.points[1:])
            feet, _ = family.projection.project_batch(mids)
            frame_nodes = family.graph.snap(feet)
        prev = None
        for depth in range(max_depth + 1):
            pts, owner = _refined_points(polyline, depth)
            cur = _rate_sum(family, polyline, pts, owner, frame_nodes, kind)
            if prev is not None and abs(cur - prev) <= rel_tol * max(abs(cur), 1e-300):
                return cur
            prev = cur
        raise RefinementStalled(
            f"rate quadrature did not settle at depth {max_depth}", (prev, cur))
    prev = None
    for depth in range(max_depth + 1):
        pts, _ = _refined_points(polyline, depth)
        cur = _metric_sum(family, pts, kind, external_pair)
        if prev is not None and abs(cur - prev) <= rel_tol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    raise RefinementStalled(
        f"partition sums did not settle at depth {max_depth}", (prev, cur))


def path_length(polyline: Polyline, functional: MetricFunctional,
                rel_tol: float = 1e-6, max_depth: int = 10) -> float:
    """Length of the polyline under the given functional.

    Cached closed-form segment lengths are honored first; otherwise the
    supremum over partitions is approached by dyadic refinement (metric
    kinds) or by midpoint quadrature of the infinitesimal form (rate
    kinds). A single-point polyline has length zero.
    """
    return _path_length(functional.family, polyline, kind=functional.kind,
                        external_pair=functional.external_pair,
                        rel_tol=rel_tol, max_depth=max_depth)


# ---------------------------------------------------------------------------
# derived quantities and module-level conveniences
# ---------------------------------------------------------------------------

def g_value(family: MetricFamily, x, y) -> float:
    """Closed-formula boundary-anchored distance."""
    return family.g(x, y)


def d_value(family: MetricFamily, x, y) -> float:
    """Geodesic distance of the collar path family."""
    return family.d(x, y)


def vertical_path(family: MetricFamily, x, y) -> Polyline:
    return family.vertical_path(x, y)


def horizontal_path(family: MetricFamily, x, y) -> Polyline:
    return family.horizontal_path(x, y)


def composite_upper_path(family: MetricFamily, x, y) -> tuple[Polyline, float]:
    return family.composite_upper_path(x, y)


def geodesic(family: MetricFamily, x, y) -> Polyline:
    return family.geodesic(x, y)


def estimate_C(family: MetricFamily, pairs=None, n_pairs: int = 2000,
               seed: int = 0) -> float:
    """Largest observed additive gap between the two metrics.

    Without an explicit pair sample, collar points on node rays are drawn
    so the boundary separations span all three regimes relative to the
    common height: below it, between it and the collar roof, and beyond.
    """
    if pairs is not None:
        pairs = np.asarray(pairs, dtype=float)
        A = family.prepare(pairs[:, 0])
        B = family.prepare(pairs[:, 1])
    else:
        rng = np.random.default_rng(seed)
        m = family.graph.nodes.shape[0]
        idx = rng.integers(0, m, size=(n_pairs, 2))
        u = rng.random((n_pairs, 2))
        depths = family.eps * u**2
        A = family.prepare_on_rays(idx[:, 0], depths[:, 0])
        B = family.prepare_on_rays(idx[:, 1], depths[:, 1])
    gap = family.d_pairs(A, B) - family.g_pairs(A, B)
    return float(np.max(gap))


def lift_dipping_path(family: MetricFamily, polyline: Polyline,
                      floor_height: float) -> Polyline:
    """Replace the below-floor stretch by a path along the floor shell.

    Interior points whose height dips under the floor are moved out to
    the shell at the floor height along their normal rays; endpoints stay
    put. The lifted path never measures longer under the collar metrics.
    """
    if not (floor_height > 0):
        raise ConfigError("the floor height must be positive")
    P = family.prepare(polyline.points)
    lift = P.height < floor_height
    lift[0] = False
    lift[-1] = False
    if not np.any(lift):
        return Polyline(polyline.points.copy())
    t = floor_height * floor_height
    pts = polyline.points.copy()
    n = family.graph.domain.outward_normal(P.feet[lift])
    pts[lift] = P.feet[lift] - t * n
    return Polyline(pts)


def dilation(polyline: Polyline, functional: MetricFunctional, t: float,
             step: float = 1e-4) -> float:
    """Metric stretch rate at parameter ``t`` along the polyline.

    The parametrization is Euclidean arc length; the rate is a central
    difference of the pairwise distance across a short parameter window,
    clipped at the ends of the path.
    """
    params = polyline.params()
    total = float(params[-1])
    if total <= 0:
        raise ConfigError("dilation needs a path of positive length")
    lo = max(0.0, float(t) - step)
    hi = min(total, float(t) + step)
    if hi <= lo:
        raise ConfigError("parameter outside the path range")
    pts = polyline.points
    lo_pt = _point_at_param(pts, params, lo)
    hi_pt = _point_at_param(pts, params, hi)
    return functional.pair(lo_pt, hi_pt) / (hi - lo)


def _point_at_param(pts: np.ndarray, params: np.ndarray, s: float) -> np.ndarray:
    j = int(np.searchsorted(params, s, side="right") - 1)
    j = min(max(j, 0), pts.shape[0] - 2)
    seg = params[j + 1] - params[j]
    frac = 0.0 if seg <= 0 else (s - params[j]) / seg
    return (1.0 - frac) * pts[j] + frac * pts[j + 1]
