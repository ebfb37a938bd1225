"""Iteration of interior self-maps and the orbit dichotomy audit.

Orbits are advanced with a per-step containment check, recorded with
height and basepoint-distance traces, and classified into the two
qualitative behaviours: staying a definite fraction of the shell depth
away from the boundary, or collapsing onto one boundary point common to
all starts. A semicontraction audit compares pair distances before and
after one application of the map against a discretization-aware slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, MapEscapedDomain
from .domain import Domain, HeightProjection
from .metrics import MetricFamily, MetricFunctional

__all__ = [
    "DomainMap",
    "OrbitRecord",
    "OrbitVerdict",
    "identity_map",
    "affine_contraction",
    "rotation_map",
    "map_from_spec",
    "iterate",
    "iterate_many",
    "check_semicontraction",
    "classify_orbit",
]


# ---------------------------------------------------------------------------
# maps
# ---------------------------------------------------------------------------

@dataclass
class DomainMap:
    """A self-map of the domain interior, batched over row stacks."""

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "map"
    params: dict = field(default_factory=dict)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(X, dtype=float)), dtype=float)


def identity_map() -> DomainMap:
    return DomainMap(fn=lambda X: X, name="identity")


def affine_contraction(p, rate: float) -> DomainMap:
    """The map x -> p + rate (x - p); commutes with any constant structure."""
    p = np.asarray(p, dtype=float)
    if not (0.0 < rate < 1.0):
        raise ConfigError("the contraction rate must lie in (0, 1)")
    return DomainMap(fn=lambda X: p[None, :] + rate * (np.atleast_2d(X) - p[None, :]),
                     name="affine_contraction",
                     params={"p": [float(v) for v in p], "rate": float(rate)})


def rotation_map(angles) -> DomainMap:
    """Block rotation acting in each coordinate plane of the standard pairing.

    One angle per plane; the matrix commutes with the standard structure,
    so the map is an isometry of every construction tied to it on the
    round ball.
    """
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    dim = 2 * angles.size
    R = np.zeros((dim, dim))
    for k, a in enumerate(angles):
        c, s = math.cos(a), math.sin(a)
        R[2 * k, 2 * k] = c
        R[2 * k, 2 * k + 1] = -s
        R[2 * k + 1, 2 * k] = s
        R[2 * k + 1, 2 * k + 1] = c
    return DomainMap(fn=lambda X: np.atleast_2d(X) @ R.T, name="rotation",
                     params={"angles": [float(a) for a in angles]})


def map_from_spec(spec: dict) -> DomainMap:
    """Build one of the named test maps from a plain dictionary."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError("a map spec needs a 'type' key")
    kind = spec["type"]
    if kind == "identity":
        return identity_map()
    if kind == "affine_contraction":
        return affine_contraction(spec["p"], float(spec["rate"]))
    if kind == "rotation":
        return rotation_map(spec["angles"])
    raise ConfigError(f"unknown map type {kind!r}")


# ---------------------------------------------------------------------------
# iteration
# ---------------------------------------------------------------------------

@dataclass
class OrbitRecord:
    """One orbit with its traces; trace arrays share one length."""

    start: np.ndarray
    points: np.ndarray
    heights: np.ndarray
    base_trace: Optional[np.ndarray]
    stopped_early: bool
    n_steps: int
    verdict: str = ""


def _step(F: DomainMap, domain: Domain, X: np.ndarray,
          rho_tol: float) -> np.ndarray:
    Y = np.atleast_2d(F(X))
    r = domain.rho(Y)
    if np.any(r > rho_tol):
        i = int(np.argmax(r))
        raise MapEscapedDomain(
            f"iterate left the domain (rho = {float(r[i]):.3e} at start {i})")
    return Y


def iterate_many(F: DomainMap, projection: HeightProjection, starts,
                 n_max: int = 200, functional: Optional[MetricFunctional] = None,
                 omega=None, rho_tol: float = 1e-10) -> list[OrbitRecord]:
    """Advance several starts together, freezing orbits at the stop floor.

    The stop floor is a millionth of the collar width in squared height;
    below it the metric apparatus is unreliable and the orbit is flagged
    instead of advanced further.
    """
    X0 = np.atleast_2d(np.asarray(starts, dtype=float))
    m = X0.shape[0]
    domain = projection.domain
    floor = 1e-6 * projection.epsilon
    traj = [X0]
    active = np.ones(m, dtype=bool)
    stopped = np.zeros(m, dtype=bool)
    depths0 = projection.height_batch(X0)**2
    stopped |= depths0 < floor
    active &= ~stopped
    for _ in range(n_max):
        if not np.any(active):
            break
        cur = traj[-1]
        nxt = cur.copy()
        nxt[active] = _step(F, domain, cur[active], rho_tol)
        d = projection.height_batch(nxt[active])**2
        hit = np.zeros(m, dtype=bool)
        hit[np.flatnonzero(active)] = d < floor
        stopped |= hit
        active &= ~hit
        traj.append(nxt)
    P = np.stack(traj, axis=1)  # (m, steps+1, dim)
    records = []
    for i in range(m):
        pts = P[i]
        heights = projection.height_batch(pts)
        base = None
        if functional is not None:
            if omega is None:
                raise ConfigError("a basepoint is needed for distance traces")
            base = np.array([functional.pair(p, omega) for p in pts])
        records.append(OrbitRecord(
            start=X0[i].copy(), points=pts, heights=heights, base_trace=base,
            stopped_early=bool(stopped[i]), n_steps=pts.shape[0] - 1))
    return records


def iterate(F: DomainMap, projection: HeightProjection, x0,
            n_max: int = 200, functional: Optional[MetricFunctional] = None,
            omega=None, rho_tol: float = 1e-10) -> OrbitRecord:
    """Advance a single start; see iterate_many for the stopping rule."""
    return iterate_many(F, projection, np.asarray(x0, dtype=float)[None],
                        n_max=n_max, functional=functional, omega=omega,
                        rho_tol=rho_tol)[0]


# ---------------------------------------------------------------------------
# semicontraction audit
# ---------------------------------------------------------------------------

def _pair_sensitivity(family: MetricFamily, A, B, kind: str) -> np.ndarray:
    """Derivative of the pair value in the boundary separation."""
    w = family._w_snap(A, B)
    if kind == "g":
        hmax = np.maximum(A.height, B.height)
        return 2.0 / (w + hmax)
    hmax = np.maximum(A.heff, B.heff)
    peak = np.clip(w, hmax, math.sqrt(family.eps))
    return 2.0 / peak


def check_semicontraction(F: DomainMap, functional: MetricFunctional,
                          n_pairs: int = 256, seed: int = 0) -> dict:
    """Compare pair distances across one application of the map.

    The pass threshold is per pair: the boundary-separation sensitivity of
    the value, before and after the map, times four median edge weights
    (the worst node-snapping displacement on each side), plus rounding.
    A map step that leaves the domain is reported, not raised.
    """
    if functional.kind not in ("g", "d"):
        raise ConfigError("the audit runs on the collar metrics")
    fam = functional.family
    rng = np.random.default_rng(seed)
    m = fam.graph.nodes.shape[0]
    idx = rng.integers(0, m, size=(n_pairs, 2))
    u = rng.random((n_pairs, 2))
    depths = fam.eps * np.maximum(u * u, 1e-4)
    A = fam.prepare_on_rays(idx[:, 0], depths[:, 0])
    B = fam.prepare_on_rays(idx[:, 1], depths[:, 1])
    try:
        FA = fam.prepare(_step(F, fam.graph.domain, A.points, 1e-10))
        FB = fam.prepare(_step(F, fam.graph.domain, B.points, 1e-10))
    except MapEscapedDomain as err:
        return {"pass": False, "escaped": True, "error": str(err),
                "n_pairs": int(n_pairs)}
    pairs_fn = fam.g_pairs if functional.kind == "g" else fam.d_pairs
    before = pairs_fn(A, B)
    after = pairs_fn(FA, FB)
    w_med = fam.graph.edge_weight_stats()["median"]
    sens = (_pair_sensitivity(fam, A, B, functional.kind)
            + _pair_sensitivity(fam, FA, FB, functional.kind))
    slack = 2.0 * w_med * sens + 1e-9
    defect = after - before
    ok = defect <= slack
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(before > 0, after / before, 1.0)
    return {
        "pass": bool(np.all(ok)),
        "escaped": False,
        "max_defect": float(defect.max()),
        "max_excess": float(np.max(defect - slack)),
        "violations": int(np.count_nonzero(~ok)),
        "ratio_q50": float(np.quantile(ratio, 0.5)),
        "ratio_q90": float(np.quantile(ratio, 0.9)),
        "ratio_max": float(ratio.max()),
        "n_pairs": int(n_pairs),
    }


# ---------------------------------------------------------------------------
# orbit classification
# ---------------------------------------------------------------------------

@dataclass
class OrbitVerdict:
    kind: str
    point: Optional[np.ndarray]
    evidence: dict


def classify_orbit(family: MetricFamily, orbits: list[OrbitRecord],
                   spread_tol: float = 1e-2) -> OrbitVerdict:
    """The dichotomy verdict over a family of orbits.

    Bounded needs every orbit's tail heights to stay above a twentieth of
    the shell depth. Convergence needs every orbit to reach low heights
    with projections settling, and all final projections within the
    spread tolerance of each other in the boundary metric; the returned
    point is the first orbit's final foot. Anything mixed is Inconclusive
    with the per-orbit evidence attached.
    """
    if len(orbits) < 5:
        raise ConfigError("classification needs at least 5 starts")
    for rec in orbits:
        if rec.n_steps < 50 and not rec.stopped_early:
            raise ConfigError("orbits must run 50 steps or stop at the floor")
    root = math.sqrt(family.eps)
    floor = 0.05 * root
    tail_mins = []
    tail_feet = []
    cauchy = []
    for rec in orbits:
        half = rec.points.shape[0] // 2
        tail_mins.append(float(rec.heights[half:].min()))
        n = rec.points.shape[0]
        marks = sorted(set([half, (3 * n) // 4, n - 1]))
        Pm = family.prepare(rec.points[marks])
        tail_feet.append(Pm.feet[-1])
        if len(marks) >= 3:
            d_early = family.graph.distance_local(Pm.feet[0], Pm.feet[-1])
            d_late = family.graph.distance_local(Pm.feet[1], Pm.feet[-1])
            cauchy.append((d_early, d_late))
        else:
            cauchy.append((0.0, 0.0))
    tail_mins = np.asarray(tail_mins)
    evidence = {
        "tail_min_heights": [float(v) for v in tail_mins],
        "bounded_floor": floor,
        "stopped_early": [bool(r.stopped_early) for r in orbits],
    }
    if np.all(tail_mins >= floor):
        return OrbitVerdict(kind="Bounded", point=None, evidence=evidence)
    approaching = np.asarray([
        rec.stopped_early or tm < floor
        for rec, tm in zip(orbits, tail_mins)
    ])
    settling = np.asarray([late <= early + spread_tol
                           for early, late in cauchy])
    feet = np.stack(tail_feet)
    mref = feet.shape[0]
    spread = 0.0
    for i in range(mref):
        for j in range(i + 1, mref):
            spread = max(spread, family.graph.distance_local(feet[i], feet[j]))
    evidence["projection_spread"] = float(spread)
    evidence["cauchy_pairs"] = [(float(a), float(b)) for a, b in cauchy]
    if np.all(approaching) and np.all(settling) and spread <= spread_tol:
        return OrbitVerdict(kind="ConvergesTo", point=feet[0].copy(),
                            evidence=evidence)
    return OrbitVerdict(kind="Inconclusive", point=None, evidence=evidence)
