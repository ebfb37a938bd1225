"""Hyperbolicity diagnostics over the interior metrics.

Four-point defects, Gromov products, convergence at infinity along
normal-approach sequences, identification of the metric boundary with the
geometric boundary, and thin-triangle audits. Everything here consumes a
length functional and stays agnostic about how its pair values arise; the
closed-form kinds get a vectorized matrix path so large quadruple counts
stay cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, NotStabilized, PrefixTooShort
from .domain import Domain
from .metrics import (
    MetricFamily,
    MetricFunctional,
    Polyline,
    collar_profile_distance,
)

__all__ = [
    "HyperbolicityReport",
    "BoundaryPointRecord",
    "ConvergenceReport",
    "BoxSampler",
    "BoundaryBiasedSampler",
    "distance_matrix",
    "four_point_from_matrix",
    "four_point_delta",
    "gromov_product",
    "converges_at_infinity",
    "normal_record",
    "boundary_product",
    "boundary_identification",
    "triangle_thinness",
]


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

class BoxSampler:
    """Uniform interior points by rejection from the bounding box."""

    def __init__(self, domain: Domain, seed: int = 0):
        self.domain = domain
        self.seed = int(seed)

    def sample(self, n: int, seed: Optional[int] = None) -> np.ndarray:
        return self.domain.sample_interior(
            n, seed=self.seed if seed is None else seed)


class BoundaryBiasedSampler:
    """Collar points on node rays with heights crowded toward the boundary.

    Depths follow t = eps * u^2 with u uniform, so heights are uniform on
    (0, sqrt(eps)]; hyperbolicity defects concentrate near the boundary
    and this law keeps the sample where they live.
    """

    def __init__(self, family: MetricFamily, seed: int = 0):
        self.family = family
        self.seed = int(seed)

    def sample(self, n: int, seed: Optional[int] = None) -> np.ndarray:
        rng = np.random.default_rng(self.seed if seed is None else seed)
        m = self.family.graph.nodes.shape[0]
        idx = rng.integers(0, m, size=n)
        u = rng.random(n)
        floor = 1e-6
        depths = self.family.eps * np.maximum(u * u, floor)
        return self.family.prepare_on_rays(idx, depths).points


# ---------------------------------------------------------------------------
# pairwise matrices
# ---------------------------------------------------------------------------

def distance_matrix(functional: MetricFunctional, points) -> np.ndarray:
    """Full pairwise table under the functional's kind.

    The two collar metrics evaluate through the boundary-graph row cache;
    euclidean broadcasts; external falls back to a pair loop.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m = pts.shape[0]
    kind = functional.kind
    if kind == "euclidean":
        diff = pts[:, None, :] - pts[None, :, :]
        return np.linalg.norm(diff, axis=-1)
    if kind == "external":
        D = np.zeros((m, m))
        for i in range(m):
            for j in range(i + 1, m):
                D[i, j] = D[j, i] = float(functional.external_pair(pts[i], pts[j]))
        return D
    if kind not in ("g", "d"):
        raise ConfigError(
            "matrix evaluation is limited to the closed-form kinds")
    fam = functional.family
    P = fam.prepare(pts)
    W = fam.graph.rows_from(P.node)[:, P.node]
    if kind == "g":
        hmax = np.maximum(P.height[:, None], P.height[None, :])
        D = 2.0 * np.log((W + hmax)
                         / np.sqrt(P.height[:, None] * P.height[None, :]))
    else:
        core = collar_profile_distance(W, P.heff[:, None], P.heff[None, :],
                                       fam.eps)
        D = P.extra[:, None] + P.extra[None, :] + core
        both_deep = (P.extra[:, None] > 0) & (P.extra[None, :] > 0)
        if np.any(both_deep):
            feet_gap = np.linalg.norm(P.feet[:, None, :] - P.feet[None, :, :],
                                      axis=-1)
            scale = fam.graph.domain.diameter_estimate()
            same_ray = both_deep & (feet_gap <= fam.foot_tol * scale)
            if np.any(same_ray):
                direct = np.linalg.norm(P.points[:, None, :]
                                        - P.points[None, :, :], axis=-1)
                D = np.where(same_ray, direct, D)
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, D.T)


# ---------------------------------------------------------------------------
# four-point condition
# ---------------------------------------------------------------------------

@dataclass
class HyperbolicityReport:
    """Sampled four-point constant with its worst witness."""

    delta: float
    n_quadruples: int
    worst_points: np.ndarray
    worst_defect: float
    kind: str
    seed: int
    defect_q99: float = 0.0
    failures: int = 0


def four_point_from_matrix(D: np.ndarray, quads: np.ndarray) -> np.ndarray:
    """Defects (L - M)/2 of index quadruples against a distance table."""
    i, j, k, l = quads[:, 0], quads[:, 1], quads[:, 2], quads[:, 3]
    s1 = D[i, j] + D[k, l]
    s2 = D[i, k] + D[j, l]
    s3 = D[i, l] + D[j, k]
    sums = np.sort(np.stack([s1, s2, s3], axis=-1), axis=-1)
    return np.maximum(0.5 * (sums[:, 2] - sums[:, 1]), 0.0)


def four_point_delta(functional: MetricFunctional, sampler, n_quadruples: int,
                     seed: int = 0, pool_size: Optional[int] = None
                     ) -> HyperbolicityReport:
    """Sampled four-point constant of the functional.

    Points come from a shared pool so one pairwise table serves every
    quadruple; the quadruple index draws are seeded separately from the
    pool draw, and both are deterministic.
    """
    if n_quadruples < 1:
        raise ConfigError("need at least one quadruple")
    if pool_size is None:
        pool_size = int(min(max(64, 4 * math.isqrt(n_quadruples)), 1600))
    pts = np.atleast_2d(np.asarray(sampler.sample(pool_size, seed=seed),
                                   dtype=float))
    D = distance_matrix(functional, pts)
    rng = np.random.default_rng(seed + 1)
    quads = rng.integers(0, pts.shape[0], size=(n_quadruples, 4))
    defects = four_point_from_matrix(D, quads)
    worst = int(np.argmax(defects))
    return HyperbolicityReport(
        delta=float(defects[worst]),
        n_quadruples=int(n_quadruples),
        worst_points=pts[quads[worst]],
        worst_defect=float(defects[worst]),
        kind=functional.kind,
        seed=int(seed),
        defect_q99=float(np.quantile(defects, 0.99)),
    )


# ---------------------------------------------------------------------------
# Gromov products and the boundary at infinity
# ---------------------------------------------------------------------------

def gromov_product(functional: MetricFunctional, x, y, omega) -> float:
    """Half-sum product (x, y) anchored at the basepoint."""
    dxo = functional.pair(x, omega)
    dyo = functional.pair(y, omega)
    dxy = functional.pair(x, y)
    return 0.5 * (dxo + dyo - dxy)


@dataclass
class ConvergenceReport:
    verdict: str
    tail_min: float
    growth: float
    n_points: int
    products_min: list = field(default_factory=list)


def converges_at_infinity(functional: MetricFunctional, sequence, omega,
                          growth_margin: float = math.log(4.0)
                          ) -> ConvergenceReport:
    """Divergence audit of pairwise products along a sequence prefix.

    For each index the minimum product over later pairs is recorded; the
    verdict is diverging when that tail minimum climbs by more than the
    margin from the first level to the last, bounded otherwise.
    """
    pts = np.atleast_2d(np.asarray(sequence, dtype=float))
    m = pts.shape[0]
    if m < 8:
        raise PrefixTooShort(f"need at least 8 points, got {m}")
    D = distance_matrix(functional, pts)
    to_omega = np.array([functional.pair(p, omega) for p in pts])
    prod = 0.5 * (to_omega[:, None] + to_omega[None, :] - D)
    tail_mins = []
    for k in range(m - 1):
        block = prod[k:, k:]
        iu, ju = np.triu_indices(block.shape[0], k=1)
        tail_mins.append(float(block[iu, ju].min()))
    growth = tail_mins[-1] - tail_mins[0]
    verdict = "diverging" if growth > growth_margin else "bounded"
    return ConvergenceReport(verdict=verdict, tail_min=tail_mins[-1],
                             growth=float(growth), n_points=int(m),
                             products_min=tail_mins)


@dataclass
class BoundaryPointRecord:
    """A geometric boundary point with its normal-approach representative."""

    point: np.ndarray
    sequence: np.ndarray
    omega: np.ndarray


def normal_record(functional: MetricFunctional, p, omega,
                  depth: int = 12) -> BoundaryPointRecord:
    """Normal-approach representative at dyadic heights for a boundary point."""
    fam = functional.family
    p = np.asarray(p, dtype=float)
    n = fam.graph.domain.outward_normal(p)
    ks = np.arange(1, depth + 1)
    ts = fam.eps * 0.5**ks
    seq = p[None, :] - ts[:, None] * n[None, :]
    return BoundaryPointRecord(point=p.copy(), sequence=seq,
                               omega=np.asarray(omega, dtype=float))


def _dyadic_products(functional: MetricFunctional, a, b, omega,
                     depth: int) -> np.ndarray:
    fam = functional.family
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = fam.graph.domain.outward_normal(a)
    nb = fam.graph.domain.outward_normal(b)
    ks = np.arange(1, depth + 1)
    ts = fam.eps * 0.5**ks
    X = a[None, :] - ts[:, None] * na[None, :]
    Y = b[None, :] - ts[:, None] * nb[None, :]
    A = fam.prepare(X)
    B = fam.prepare(Y)
    O = fam.prepare(np.repeat(np.asarray(omega, dtype=float)[None, :],
                              depth, axis=0))
    if functional.kind == "g":
        dxo = fam.g_pairs(A, O)
        dyo = fam.g_pairs(B, O)
        dxy = fam.g_pairs(A, B)
    elif functional.kind == "d":
        dxo = fam.d_pairs(A, O)
        dyo = fam.d_pairs(B, O)
        dxy = fam.d_pairs(A, B)
    else:
        raise ConfigError("boundary products need one of the collar metrics")
    return 0.5 * (dxo + dyo - dxy)


def boundary_product(functional: MetricFunctional, a, b, omega,
                     depth: int = 24, stabil_tol: float = 1e-3) -> float:
    """Product of two boundary points along normal representatives.

    Heights are dyadic; the value must be Cauchy within the tolerance
    over the last three levels, otherwise the trend is raised.
    """
    if depth < 4:
        raise ConfigError("boundary products need depth at least 4")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.linalg.norm(a - b) == 0.0:
        raise ConfigError("boundary products need two distinct points")
    p = _dyadic_products(functional, a, b, omega, depth)
    last = p[-3:]
    if np.max(last) - np.min(last) > stabil_tol:
        raise NotStabilized(
            f"products still move by {float(np.max(last) - np.min(last)):.3e} "
            f"at depth {depth}", [float(v) for v in p[-6:]])
    return float(p[-1])


def boundary_identification(functional: MetricFunctional, pairs, omega,
                            depth: int = 24, band_cap: float = 4.0) -> dict:
    """Ratio table comparing exponentiated products with the boundary metric.

    For each boundary pair the tabulated value is exp(-product) divided by
    the graph distance of the pair; the observed band and its spread are
    reported, and the check passes when the spread stays under the cap.
    """
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 3 or pairs.shape[1] != 2:
        raise ConfigError("pairs must be an array of point pairs")
    fam = functional.family
    ratios = []
    seps = []
    prods = []
    for a, b in pairs:
        w = fam.graph.distance(a, b)
        if w <= 0:
            raise ConfigError("pair distance vanished; pick distinct nodes")
        prod = boundary_product(functional, a, b, omega, depth=depth)
        ratios.append(math.exp(-prod) / w)
        seps.append(w)
        prods.append(prod)
    ratios = np.asarray(ratios)
    lo = float(ratios.min())
    hi = float(ratios.max())
    return {
        "ratios": [float(r) for r in ratios],
        "d_H": [float(s) for s in seps],
        "products": [float(p) for p in prods],
        "band_lo": lo,
        "band_hi": hi,
        "spread": hi / lo,
        "ok": bool(hi <= band_cap * lo),
        "n_pairs": int(pairs.shape[0]),
    }


# ---------------------------------------------------------------------------
# thin triangles
# ---------------------------------------------------------------------------

def _edge_nodes(functional: MetricFunctional, x, y, subdiv: int) -> np.ndarray:
    if functional.kind in ("g", "d"):
        pl = functional.family.geodesic(x, y)
    else:
        pl = Polyline(np.stack([np.asarray(x, dtype=float),
                                np.asarray(y, dtype=float)]))
    pts = pl.points
    if pts.shape[0] < 2:
        return pts
    a = pts[:-1]
    b = pts[1:]
    frac = np.arange(subdiv) / subdiv
    fine = (a[:, None, :] + frac[None, :, None] * (b - a)[:, None, :])
    return np.vstack([fine.reshape(-1, pts.shape[1]), pts[-1:]])


def triangle_thinness(functional: MetricFunctional, x, y, z,
                      subdiv: int = 8) -> float:
    """Largest distance from one side to the union of the other two.

    Sides are discretized geodesic polylines; the point-to-set distance is
    the node-to-node proxy, so results carry a slack of order the node
    spacing of the discretizations.
    """
    exy = _edge_nodes(functional, x, y, subdiv)
    eyz = _edge_nodes(functional, y, z, subdiv)
    ezx = _edge_nodes(functional, z, x, subdiv)
    pool = np.vstack([exy, eyz, ezx])
    D = distance_matrix(functional, pool)
    n1, n2, n3 = exy.shape[0], eyz.shape[0], ezx.shape[0]
    s1 = slice(0, n1)
    s2 = slice(n1, n1 + n2)
    s3 = slice(n1 + n2, n1 + n2 + n3)
    worst = 0.0
    for own, other_a, other_b in ((s1, s2, s3), (s2, s3, s1), (s3, s1, s2)):
        others = np.concatenate([np.arange(*other_a.indices(pool.shape[0])),
                                 np.arange(*other_b.indices(pool.shape[0]))])
        sub = D[own, :][:, others]
        worst = max(worst, float(sub.min(axis=1).max()))
    return worst
