"""Bounded smooth domains given by a defining function.

A domain is ``D = {rho < 0}`` for a C^2 scalar field ``rho`` with nonvanishing
gradient on the zero set. This module provides the defining-function algebra
(built-in balls, ellipsoids, superellipsoids and polynomial fields, with
finite-difference fallbacks for derivatives), nearest-boundary projection,
the square-root height function, inner shells, and a curvature-based collar
width estimate.

All geometric quantities are Euclidean; heights are ``h(x) = sqrt(dist(x,
boundary))`` so the collar of width ``eps`` is ``{h(x)^2 <= eps}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .errors import (
    ConfigError,
    CurvatureEstimateFailed,
    DerivativeEvaluationFailed,
    OutsideShellRange,
    PointOutsideDomain,
    ProjectionDiverged,
)
from ._util import rng_from

__all__ = [
    "ScalarField",
    "Domain",
    "HeightProjection",
    "ReachEstimate",
    "estimate_reach",
    "reach_details",
    "height",
    "project_boundary",
    "foot_on_shell",
    "principal_curvatures",
    "ball_field",
    "ellipsoid_field",
    "superellipsoid_field",
    "polynomial_field",
]


# ---------------------------------------------------------------------------
# scalar fields
# ---------------------------------------------------------------------------

@dataclass
class ScalarField:
    """A scalar field with optional analytic derivatives.

    ``value_fn`` maps arrays of shape (..., dim) to shape (...). When the
    derivative callables are absent, central finite differences with the
    step chosen by the owning :class:`Domain` are used instead.
    """

    dim: int
    value_fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "field"

    def value(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.value_fn(np.asarray(x, dtype=float)), dtype=float)

    def gradient(self, x: np.ndarray, fd_step: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.grad_fn is not None:
            return np.asarray(self.grad_fn(x), dtype=float)
        h = fd_step
        out = np.empty(x.shape, dtype=float)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            out[..., i] = (self.value(x + e) - self.value(x - e)) / (2.0 * h)
        return out

    def hessian(self, x: np.ndarray, fd_step: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.hess_fn is not None:
            return np.asarray(self.hess_fn(x), dtype=float)
        n = self.dim
        h = fd_step
        out = np.empty(x.shape[:-1] + (n, n), dtype=float)
        f0 = self.value(x)
        basis = np.eye(n) * h
        for i in range(n):
            ei = basis[i]
            out[..., i, i] = (self.value(x + ei) - 2.0 * f0 + self.value(x - ei)) / h**2
            for j in range(i + 1, n):
                ej = basis[j]
                mixed = (
                    self.value(x + ei + ej)
                    - self.value(x + ei - ej)
                    - self.value(x - ei + ej)
                    + self.value(x - ei - ej)
                ) / (4.0 * h**2)
                out[..., i, j] = mixed
                out[..., j, i] = mixed
        return out


def ball_field(dim: int, radius: float = 1.0) -> ScalarField:
    r2 = float(radius) ** 2
    return ScalarField(
        dim=dim,
        value_fn=lambda x: np.sum(x * x, axis=-1) - r2,
        grad_fn=lambda x: 2.0 * x,
        hess_fn=lambda x: np.broadcast_to(
            2.0 * np.eye(dim), x.shape[:-1] + (dim, dim)
        ).copy(),
        name="ball",
    )


def ellipsoid_field(semi_axes) -> ScalarField:
    a = np.asarray(semi_axes, dtype=float)
    if np.any(a <= 0):
        raise ConfigError("ellipsoid semi-axes must be positive")
    inv2 = 1.0 / a**2
    dim = a.size

    def hess(x):
        return np.broadcast_to(np.diag(2.0 * inv2), x.shape[:-1] + (dim, dim)).copy()

    return ScalarField(
        dim=dim,
        value_fn=lambda x: np.sum(x * x * inv2, axis=-1) - 1.0,
        grad_fn=lambda x: 2.0 * x * inv2,
        hess_fn=hess,
        name="ellipsoid",
    )


def superellipsoid_field(semi_axes, exponent: float) -> ScalarField:
    a = np.asarray(semi_axes, dtype=float)
    p = float(exponent)
    if p < 2.0:
        raise ConfigError("superellipsoid exponent must be >= 2 for a C^2 field")
    dim = a.size

    def val(x):
        return np.sum(np.abs(x / a) ** p, axis=-1) - 1.0

    def grad(x):
        u = x / a
        return (p / a) * np.sign(u) * np.abs(u) ** (p - 1.0)

    def hess(x):
        u = np.abs(x / a)
        diag = (p * (p - 1.0) / a**2) * u ** (p - 2.0)
        out = np.zeros(x.shape[:-1] + (dim, dim), dtype=float)
        idx = np.arange(dim)
        out[..., idx, idx] = diag
        return out

    return ScalarField(dim=dim, value_fn=val, grad_fn=grad, hess_fn=hess,
                       name="superellipsoid")


def polynomial_field(dim: int, terms) -> ScalarField:
    """Polynomial field from ``[(coefficient, exponent-tuple), ...]``."""
    coeffs = np.array([float(c) for c, _ in terms])
    expo = np.array([list(e) for _, e in terms], dtype=int)
    if expo.shape[1] != dim:
        raise ConfigError("polynomial exponent tuples must match the dimension")

    def val(x):
        # x: (..., dim) -> sum_k c_k prod_i x_i^{e_ki}
        pw = np.power(x[..., None, :], expo)  # (..., K, dim)
        return np.sum(coeffs * np.prod(pw, axis=-1), axis=-1)

    def grad(x):
        out = np.zeros(x.shape, dtype=float)
        for i in range(dim):
            mask = expo[:, i] > 0
            if not np.any(mask):
                continue
            e2 = expo[mask].copy()
            c2 = coeffs[mask] * e2[:, i]
            e2[:, i] -= 1
            pw = np.power(x[..., None, :], e2)
            out[..., i] = np.sum(c2 * np.prod(pw, axis=-1), axis=-1)
        return out

    def hess(x):
        out = np.zeros(x.shape[:-1] + (dim, dim), dtype=float)
        for i in range(dim):
            for j in range(i, dim):
                e2 = expo.copy()
                c2 = coeffs.copy()
                c2 = c2 * e2[:, i]
                e2[:, i] -= 1
                keep = (c2 != 0) & (e2[:, i] >= 0)
                c2 = c2[keep] * e2[keep][:, j]
                e3 = e2[keep].copy()
                e3[:, j] -= 1
                keep2 = (c2 != 0) & (e3[:, j] >= 0)
                if not np.any(keep2):
                    continue
                pw = np.power(x[..., None, :], e3[keep2])
                v = np.sum(c2[keep2] * np.prod(pw, axis=-1), axis=-1)
                out[..., i, j] = v
                out[..., j, i] = v
        return out

    return ScalarField(dim=dim, value_fn=val, grad_fn=grad, hess_fn=hess,
                       name="polynomial")


# ---------------------------------------------------------------------------
# domain
# ---------------------------------------------------------------------------

class Domain:
    """A bounded domain ``{rho < 0}`` with a bounding box and sampling helpers.

    Parameters
    ----------
    f : ScalarField
        Defining function.
    box : array (2, dim)
        Axis-aligned box containing the closure of the domain.
    fd_step : float, optional
        Finite difference step; defaults to 1e-5 times the box diagonal.
    seed : int
        Seed for the cached dense boundary sample used as a projection
        fallback and for diameter estimation.
    """

    def __init__(self, f: ScalarField, box, fd_step: Optional[float] = None,
                 seed: int = 0, cloud_size: int = 4096):
        self.field = f
        self.dim = f.dim
        self.box = np.asarray(box, dtype=float).reshape(2, self.dim)
        if np.any(self.box[1] <= self.box[0]):
            raise ConfigError("bounding box upper corners must exceed lower corners")
        diag = float(np.linalg.norm(self.box[1] - self.box[0]))
        self.fd_step = float(fd_step) if fd_step else 1e-5 * diag
        self.seed = int(seed)
        self.cloud_size = int(cloud_size)
        self._cloud = None
        self._cloud_tree = None
        self._diameter = None

    # -- defining function ---------------------------------------------------

    def rho(self, x) -> np.ndarray:
        v = self.field.value(x)
        if not np.all(np.isfinite(v)):
            raise DerivativeEvaluationFailed("defining function returned non-finite values")
        return v

    def grad(self, x) -> np.ndarray:
        g = self.field.gradient(x, self.fd_step)
        if not np.all(np.isfinite(g)):
            raise DerivativeEvaluationFailed("gradient returned non-finite values")
        return g

    def hess(self, x) -> np.ndarray:
        h = self.field.hessian(x, self.fd_step)
        if not np.all(np.isfinite(h)):
            raise DerivativeEvaluationFailed("hessian returned non-finite values")
        return h

    def is_interior(self, x, tol: float = 0.0) -> np.ndarray:
        return self.rho(x) < tol

    def outward_normal(self, p) -> np.ndarray:
        g = self.grad(p)
        nrm = np.linalg.norm(g, axis=-1, keepdims=True)
        if np.any(nrm <= 0):
            raise DerivativeEvaluationFailed("vanishing gradient on the boundary")
        return g / nrm

    # -- sampling ------------------------------------------------------------

    def sample_box(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random((n, self.dim))
        return self.box[0] + u * (self.box[1] - self.box[0])

    def sample_interior(self, n: int, seed=0) -> np.ndarray:
        """Seeded rejection sample of interior points."""
        rng = rng_from(seed)
        out = []
        have = 0
        for _ in range(200):
            cand = self.sample_box(max(4 * n, 64), rng)
            keep = cand[self.rho(cand) < 0]
            if keep.size:
                out.append(keep)
                have += keep.shape[0]
            if have >= n:
                break
        if have < n:
            raise PointOutsideDomain("interior rejection sampling starved; check the box")
        return np.concatenate(out, axis=0)[:n]

    def sample_boundary(self, n: int, seed=0, quasi: bool = False) -> np.ndarray:
        """Boundary points found by marching interior samples along the gradient.

        With ``quasi=True`` the interior candidates come from a Halton
        sequence instead of pseudorandom draws, which gives more even
        coverage for graph building. Deterministic for a fixed seed.
        """
        rng = rng_from(seed)
        halton = qmc.Halton(d=self.dim, seed=seed) if quasi else None
        pts = []
        have = 0
        for _ in range(400):
            m = max(4 * n, 256)
            if quasi:
                u = halton.random(m)
                cand = self.box[0] + u * (self.box[1] - self.box[0])
            else:
                cand = self.sample_box(m, rng)
            cand = cand[self.rho(cand) < 0]
            if cand.shape[0] == 0:
                continue
            g = self.grad(cand)
            gn = np.linalg.norm(g, axis=-1)
            cand = cand[gn > 1e-12]
            g = g[gn > 1e-12]
            if cand.shape[0] == 0:
                continue
            b = self._march_to_boundary(cand, g)
            pts.append(b)
            have += b.shape[0]
            if have >= n:
                break
        if have < n:
            raise PointOutsideDomain("boundary sampling starved; check the box")
        return np.concatenate(pts, axis=0)[:n]

    def _march_to_boundary(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Bisection along the outward gradient ray until rho crosses zero."""
        d = g / np.linalg.norm(g, axis=-1, keepdims=True)
        scale = float(np.linalg.norm(self.box[1] - self.box[0]))
        lo = np.zeros(x.shape[0])
        hi = np.full(x.shape[0], 1e-3 * scale)
        for _ in range(80):
            v = self.rho(x + hi[:, None] * d)
            cross = v >= 0.0
            if np.all(cross):
                break
            lo = np.where(cross, lo, hi)
            hi = np.where(cross, hi, 2.0 * hi)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            v = self.rho(x + mid[:, None] * d)
            hi = np.where(v >= 0.0, mid, hi)
            lo = np.where(v >= 0.0, lo, mid)
        p = x + hi[:, None] * d
        # first-order polish onto the zero set
        for _ in range(3):
            g2 = self.grad(p)
            p = p - (self.rho(p) / np.sum(g2 * g2, axis=-1))[:, None] * g2
        return p

    # -- cached cloud --------------------------------------------------------

    def boundary_cloud(self) -> np.ndarray:
        if self._cloud is None:
            self._cloud = self.sample_boundary(self.cloud_size, seed=self.seed,
                                               quasi=True)
        return self._cloud

    def cloud_tree(self) -> cKDTree:
        if self._cloud_tree is None:
            self._cloud_tree = cKDTree(self.boundary_cloud())
        return self._cloud_tree

    def diameter_estimate(self) -> float:
        if self._diameter is None:
            cloud = self.boundary_cloud()
            sub = cloud[:: max(1, cloud.shape[0] // 1024)]
            d2 = np.sum((sub[:, None, :] - sub[None, :, :]) ** 2, axis=-1)
            self._diameter = float(np.sqrt(d2.max()))
        return self._diameter

    # -- construction from a spec mapping ------------------------------------

    @classmethod
    def from_spec(cls, spec: dict) -> "Domain":
        try:
            dim = int(spec["dimension"])
            df = spec["defining_function"]
            kind = df["type"]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed domain spec: {exc}") from exc
        if dim < 2:
            raise ConfigError("dimension must be at least 2")
        if kind == "ball":
            r = float(df.get("radius", 1.0))
            f = ball_field(dim, r)
            default_box = np.stack([-1.05 * r * np.ones(dim), 1.05 * r * np.ones(dim)])
        elif kind == "ellipsoid":
            axes = df["semi_axes"]
            if len(axes) != dim:
                raise ConfigError("semi_axes length must match dimension")
            f = ellipsoid_field(axes)
            a = np.asarray(axes, dtype=float)
            default_box = np.stack([-1.05 * a, 1.05 * a])
        elif kind == "superellipsoid":
            axes = df["semi_axes"]
            if len(axes) != dim:
                raise ConfigError("semi_axes length must match dimension")
            f = superellipsoid_field(axes, df["exponent"])
            a = np.asarray(axes, dtype=float)
            default_box = np.stack([-1.05 * a, 1.05 * a])
        elif kind == "polynomial":
            terms = [(t["coefficient"], t["exponents"]) for t in df["terms"]]
            f = polynomial_field(dim, terms)
            if "box" not in spec:
                raise ConfigError("polynomial domains need an explicit box")
            default_box = None
        else:
            raise ConfigError(f"unknown defining function type {kind!r}")
        box = np.asarray(spec["box"], dtype=float) if "box" in spec else default_box
        return cls(f, box, fd_step=spec.get("fd_step"), seed=spec.get("seed", 0))


# ---------------------------------------------------------------------------
# projection and heights
# ---------------------------------------------------------------------------

@dataclass
class ReachEstimate:
    reach: float
    epsilon: float
    kappa_max: float
    n_samples: int


class HeightProjection:
    """Nearest-boundary projection and the square-root height function.

    The solver runs a damped Newton iteration on the first-order
    nearest-point conditions, seeded from the cached boundary cloud. Inside
    the collar the foot is unique; deeper points fall back to polishing
    several cloud candidates, with ties broken by the lexicographically
    smallest foot.
    """

    def __init__(self, domain: Domain, epsilon: float, newton_tol: float = 1e-10,
                 max_iter: int = 100):
        if epsilon <= 0:
            raise ConfigError("collar width must be positive")
        self.domain = domain
        self.epsilon = float(epsilon)
        self.newton_tol = float(newton_tol)
        self.max_iter = int(max_iter)

    @classmethod
    def with_estimated_reach(cls, domain: Domain, n_samples: int = 256,
                             safety: float = 0.5, ceiling: Optional[float] = None,
                             seed: int = 0, **kw) -> "HeightProjection":
        est = reach_details(domain, n_samples=n_samples, safety=safety,
                            ceiling=ceiling, seed=seed)
        return cls(domain, est.epsilon, **kw)

    # -- batched solver ------------------------------------------------------

    def _newton_polish(self, X: np.ndarray, P0: np.ndarray):
        """Damped Newton on (p, lam) for p - x - lam grad(p) = 0, rho(p) = 0.

        Returns (P, ok) where ok flags convergence per point.
        """
        dom = self.domain
        n = dom.dim
        X = np.atleast_2d(X)
        p = np.array(P0, dtype=float, copy=True)
        g = dom.grad(p)
        gn2 = np.sum(g * g, axis=-1)
        lam = np.sum((p - X) * g, axis=-1) / np.maximum(gn2, 1e-300)
        scale = 1.0 + np.linalg.norm(X, axis=-1)
        tol = self.newton_tol * scale

        def residual(p_, lam_):
            g_ = dom.grad(p_)
            r1 = p_ - X - lam_[:, None] * g_
            r2 = dom.rho(p_)
            return g_, r1, r2, np.maximum(np.abs(r1).max(axis=-1), np.abs(r2))

        g, r1, r2, rn = residual(p, lam)
        ok = rn <= tol
        for _ in range(self.max_iter):
            act = ~ok
            if not np.any(act):
                break
            H = dom.hess(p[act])
            ga = g[act]
            m = ga.shape[0]
            J = np.zeros((m, n + 1, n + 1))
            J[:, :n, :n] = np.eye(n) - lam[act, None, None] * H
            J[:, :n, n] = -ga
            J[:, n, :n] = ga
            rhs = np.concatenate([-r1[act], -r2[act, None]], axis=1)
            try:
                step = np.linalg.solve(J, rhs[..., None])[..., 0]
            except np.linalg.LinAlgError:
                # a singular tangent system stalls this sweep; the cloud
                # fallback picks up whatever fails to converge
                step = np.zeros((m, n + 1))
            # backtracking on the residual norm, per point
            t = np.ones(m)
            base = rn[act]
            best_p = p[act].copy()
            best_lam = lam[act].copy()
            best_rn = base.copy()
            for _ in range(8):
                p_try = p[act] + t[:, None] * step[:, :n]
                lam_try = lam[act] + t * step[:, n]
                _, _, _, rn_try = residual_at(dom, X[act], p_try, lam_try)
                better = rn_try < best_rn
                best_p[better] = p_try[better]
                best_lam[better] = lam_try[better]
                best_rn[better] = rn_try[better]
                if np.all(best_rn < base):
                    break
                t = np.where(rn_try >= best_rn, t * 0.5, t)
            p[act] = best_p
            lam[act] = best_lam
            g, r1, r2, rn = residual(p, lam)
            ok = rn <= tol
        return p, ok

    def _normal_ray_polish(self, X: np.ndarray, P0: np.ndarray,
                           iters: int = 24):
        """Foot refinement by rays cast from ``x`` along the outward normal.

        Shoot the ray from ``x`` through the normal direction at the
        current boundary point, move to where it crosses the boundary,
        and repeat. Every step lands exactly on the boundary and, on the
        convex geometries this targets, does not worsen the seed
        distance. That rescues the regime where the coupled Newton solve
        turns singular: deeply interior points whose feet nearly tie, and
        where first-order stationarity cannot be resolved because the
        distance objective is flat there. A point is accepted when it
        sits on the boundary and either meets the Newton residual test
        or is at least as close as the seed it started from.
        """
        dom = self.domain
        X = np.atleast_2d(X)
        p = np.array(P0, dtype=float, copy=True)
        scale = 1.0 + np.linalg.norm(X, axis=-1)
        tol = self.newton_tol * scale
        span = 2.0 * dom.diameter_estimate()
        for _ in range(iters):
            g = dom.grad(p)
            gn = np.linalg.norm(g, axis=-1, keepdims=True)
            d = g / np.maximum(gn, 1e-300)
            hi = np.maximum(np.linalg.norm(p - X, axis=-1), 1e-3 * span)
            for _ in range(40):
                bad = dom.rho(X + hi[:, None] * d) < 0.0
                if not np.any(bad):
                    break
                hi = np.where(bad, np.minimum(hi * 1.5, 1.01 * span), hi)
            lo = np.zeros_like(hi)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                inside = dom.rho(X + mid[:, None] * d) < 0.0
                lo = np.where(inside, mid, lo)
                hi = np.where(inside, hi, mid)
            p_new = X + hi[:, None] * d
            moved = np.abs(p_new - p).max(axis=-1)
            p = p_new
            if np.all(moved <= 0.25 * tol):
                break
        g = dom.grad(p)
        gn2 = np.sum(g * g, axis=-1)
        lam = np.sum((p - X) * g, axis=-1) / np.maximum(gn2, 1e-300)
        _, _, _, rn = residual_at(dom, X, p, lam)
        d_new = np.linalg.norm(p - X, axis=-1)
        d_seed = np.linalg.norm(np.atleast_2d(P0) - X, axis=-1)
        on_boundary = np.abs(dom.rho(p)) <= tol
        ok = on_boundary & ((rn <= tol) | (d_new <= d_seed + tol))
        return p, ok

    def project_batch(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Feet and Euclidean distances for a batch of interior points."""
        dom = self.domain
        X = np.atleast_2d(np.asarray(X, dtype=float))
        r = dom.rho(X)
        if np.any(r > 1e-12 * (1.0 + np.abs(r).max())):
            raise PointOutsideDomain("projection requested for a point outside the domain")
        tree = dom.cloud_tree()
        cd, ci = tree.query(X, k=1)
        cloud = dom.boundary_cloud()
        P, ok = self._newton_polish(X, cloud[ci])
        dist = np.linalg.norm(P - X, axis=-1)
        # a converged foot can never beat the cloud minimum by construction;
        # a foot *worse* than the cloud minimum means the local basin was wrong
        need_fallback = (~ok) | (dist > cd + 1e-9) | (dist**2 > self.epsilon * 1.25)
        if np.any(need_fallback):
            idx = np.nonzero(need_fallback)[0]
            k = min(24, cloud.shape[0])
            _, cand_idx = tree.query(X[idx], k=k)
            for row, j in enumerate(idx):
                cands = cloud[cand_idx[row]]
                xs = np.repeat(X[j : j + 1], cands.shape[0], axis=0)
                Pc, okc = self._newton_polish(xs, cands)
                if not np.any(okc):
                    Pc, okc = self._normal_ray_polish(xs, cands)
                if not np.any(okc):
                    if ok[j]:
                        continue
                    raise ProjectionDiverged(
                        f"no converged boundary foot for point index {int(j)}"
                    )
                Pc = Pc[okc]
                dc = np.linalg.norm(Pc - X[j], axis=-1)
                dmin = dc.min()
                near = Pc[dc <= dmin + 1e-9]
                order = np.lexsort(near.T[::-1])
                P[j] = near[order[0]]
                dist[j] = np.linalg.norm(P[j] - X[j])
                ok[j] = True
        if np.any(~ok):
            raise ProjectionDiverged(f"{int(np.sum(~ok))} projections failed to converge")
        return P, dist

    def project(self, x) -> np.ndarray:
        P, _ = self.project_batch(np.asarray(x, dtype=float)[None, :])
        return P[0]

    def height_batch(self, X) -> np.ndarray:
        _, dist = self.project_batch(X)
        return np.sqrt(dist)

    def height(self, x) -> float:
        return float(self.height_batch(np.asarray(x, dtype=float)[None, :])[0])

    def in_collar(self, x, slack: float = 0.0) -> bool:
        return self.height(x) ** 2 <= self.epsilon + slack

    def foot_on_shell(self, x, t: float) -> np.ndarray:
        """The point at depth ``t`` on the inward normal ray through ``pi(x)``."""
        if t < 0 or t > self.epsilon:
            raise OutsideShellRange(
                f"shell depth {t} outside [0, {self.epsilon}]"
            )
        p = self.project(x)
        n = self.domain.outward_normal(p)
        return p - t * n

    def shell_points(self, boundary_pts: np.ndarray, t: float) -> np.ndarray:
        """Push boundary points to depth ``t`` along their own normals."""
        if t < 0 or t > self.epsilon:
            raise OutsideShellRange(f"shell depth {t} outside [0, {self.epsilon}]")
        n = self.domain.outward_normal(boundary_pts)
        return boundary_pts - t * n


def residual_at(dom: Domain, X, p_, lam_):
    g_ = dom.grad(p_)
    r1 = p_ - X - lam_[:, None] * g_
    r2 = dom.rho(p_)
    return g_, r1, r2, np.maximum(np.abs(r1).max(axis=-1), np.abs(r2))


# ---------------------------------------------------------------------------
# reach / collar width
# ---------------------------------------------------------------------------

def principal_curvatures(domain: Domain, P: np.ndarray) -> np.ndarray:
    """Eigenvalues of the shape operator at boundary points, batch shape (m, dim-1).

    Sign convention: the unit sphere has curvature +1 with respect to the
    outward normal.
    """
    P = np.atleast_2d(P)
    g = domain.grad(P)
    gn = np.linalg.norm(g, axis=-1)
    if np.any(gn <= 1e-12):
        raise CurvatureEstimateFailed("vanishing gradient at a curvature sample")
    n = g / gn[:, None]
    H = domain.hess(P)
    # orthonormal tangent bases from the SVD null space of the normal row
    _, _, vt = np.linalg.svd(n[:, None, :])
    Q = vt[:, 1:, :]  # (m, dim-1, dim)
    S = np.einsum("mik,mkl,mjl->mij", Q, H, Q) / gn[:, None, None]
    kappa = np.linalg.eigvalsh(S)
    if not np.all(np.isfinite(kappa)):
        raise CurvatureEstimateFailed("non-finite curvature eigenvalues")
    return kappa


def reach_details(domain: Domain, n_samples: int = 256, safety: float = 0.5,
                  ceiling: Optional[float] = None, seed: int = 0) -> ReachEstimate:
    """Collar width from sampled principal curvatures, with diagnostics.

    The reach proxy is the smallest curvature radius over the samples; the
    collar width is ``safety`` times that, capped at the ceiling (one
    quarter of the estimated domain diameter by default).
    """
    pts = domain.sample_boundary(n_samples, seed=seed)
    kappa = principal_curvatures(domain, pts)
    kmax = float(np.max(kappa))
    if ceiling is None:
        ceiling = 0.25 * domain.diameter_estimate()
    if kmax <= 1e-12:
        reach = math.inf
        eps = float(ceiling)
    else:
        reach = 1.0 / kmax
        eps = min(safety * reach, float(ceiling))
    if not (eps > 0 and np.isfinite(eps)):
        raise CurvatureEstimateFailed("collar width estimate came out non-positive")
    return ReachEstimate(reach=reach, epsilon=float(eps), kappa_max=kmax,
                         n_samples=int(n_samples))


def estimate_reach(domain: Domain, n_samples: int = 256, safety: float = 0.5,
                   ceiling: Optional[float] = None, seed: int = 0) -> float:
    """Safe collar width for the domain, as a plain number."""
    return reach_details(domain, n_samples=n_samples, safety=safety,
                         ceiling=ceiling, seed=seed).epsilon


def height(projection: HeightProjection, x) -> float:
    """Square root of the distance from ``x`` to the boundary."""
    return projection.height(x)


def project_boundary(projection: HeightProjection, x) -> np.ndarray:
    """A nearest boundary point of ``x``, deterministic under ties."""
    return projection.project(x)


def foot_on_shell(projection: HeightProjection, x, t: float) -> np.ndarray:
    """The depth-``t`` point on the inward normal ray through the foot of x."""
    return projection.foot_on_shell(x, t)
