"""Run configuration loading and workspace assembly for the front end.

A run configuration is a JSON mapping with the domain and structure
specs (inline or as paths relative to the configuration file), boundary
graph parameters, solver tolerances, and the seeds for every sampler.
Seeds are explicit; nothing draws entropy at run time.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigError
from ._util import config_hash
from .domain import Domain, HeightProjection, reach_details
from .structures import StructureField
from .boundary import BoundaryGraph
from .metrics import MetricFamily

__all__ = ["RunConfig", "Workspace", "load_config", "build_workspace"]

_GRAPH_DEFAULTS = {
    "n_nodes": 600,
    "k_neighbors": 10,
    "anisotropy": 8.0,
    "seed": 0,
    "selection": "farthest",
}

_TOLERANCE_DEFAULTS = {
    "newton_tol": 1e-10,
    "path_rel_tol": 1e-6,
    "quad_rel_tol": 1e-5,
    "stabil_tol": 1e-3,
}

_SEED_DEFAULTS = {
    "sampler": 0,
    "pairs": 0,
    "quadruples": 0,
    "orbits": 0,
}


@dataclass
class RunConfig:
    """Validated run configuration with resolved spec mappings."""

    domain_spec: dict
    structure_spec: dict
    graph: dict
    tolerances: dict
    seeds: dict
    out_dir: str
    epsilon: Optional[float] = None
    map_spec: Optional[dict] = None
    raw: dict = field(default_factory=dict)

    def hash(self) -> str:
        return config_hash(self.raw)


def _resolve_spec(value, base_dir: str, label: str) -> dict:
    if isinstance(value, dict):
        return value
    if isinstance(value, str):
        path = value if os.path.isabs(value) else os.path.join(base_dir, value)
        if not os.path.exists(path):
            raise ConfigError(f"{label} spec file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            try:
                return json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{label} spec is not valid JSON: {exc}") from exc
    raise ConfigError(f"{label} spec must be a mapping or a path")


def load_config(path: str) -> RunConfig:
    """Read and validate a JSON run configuration."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON mapping")
    base_dir = os.path.dirname(os.path.abspath(path))
    if "domain" not in raw:
        raise ConfigError("config needs a 'domain' entry")
    domain_spec = _resolve_spec(raw["domain"], base_dir, "domain")
    structure_spec = _resolve_spec(raw.get("structure", {"type": "standard"}),
                                   base_dir, "structure")
    graph = dict(_GRAPH_DEFAULTS)
    graph.update(raw.get("graph", {}))
    unknown = set(graph) - set(_GRAPH_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown graph parameters: {sorted(unknown)}")
    tolerances = dict(_TOLERANCE_DEFAULTS)
    tolerances.update(raw.get("tolerances", {}))
    for key, val in tolerances.items():
        if not (isinstance(val, (int, float)) and val > 0):
            raise ConfigError(f"tolerance {key!r} must be positive")
    seeds = dict(_SEED_DEFAULTS)
    seeds.update(raw.get("seeds", {}))
    for key, val in seeds.items():
        if not isinstance(val, int):
            raise ConfigError(f"seed {key!r} must be an integer")
    epsilon = raw.get("epsilon")
    if epsilon is not None and not (isinstance(epsilon, (int, float))
                                    and epsilon > 0):
        raise ConfigError("epsilon must be positive when given")
    out_dir = raw.get("out_dir", "hypkob_out")
    if not os.path.isabs(out_dir):
        out_dir = os.path.join(base_dir, out_dir)
    map_spec = raw.get("map")
    if map_spec is not None and not isinstance(map_spec, dict):
        raise ConfigError("the map entry must be a mapping")
    return RunConfig(domain_spec=domain_spec, structure_spec=structure_spec,
                     graph=graph, tolerances=tolerances, seeds=seeds,
                     out_dir=out_dir, epsilon=float(epsilon) if epsilon else None,
                     map_spec=map_spec, raw=raw)


@dataclass
class Workspace:
    """Built objects shared by the front-end commands."""

    domain: Domain
    structure: StructureField
    projection: HeightProjection
    graph: Optional[BoundaryGraph]
    family: Optional[MetricFamily]
    epsilon: float


def build_workspace(cfg: RunConfig, refine: int = 0,
                    graph_cache: Optional[str] = None,
                    with_graph: bool = True) -> Workspace:
    """Assemble domain, structure, projection, and boundary graph.

    A graph cache path is loaded when present and written after a fresh
    build; refinement happens after loading, so a cache plus a refine
    count is a reproducible denser graph. Pointwise commands that never
    touch boundary distances skip the graph entirely.
    """
    domain = Domain.from_spec(cfg.domain_spec)
    structure = StructureField.from_spec(cfg.structure_spec, domain.dim)
    if cfg.epsilon is not None:
        eps = float(cfg.epsilon)
    else:
        eps = reach_details(domain, seed=cfg.seeds["sampler"]).epsilon
    projection = HeightProjection(domain, eps,
                                  newton_tol=cfg.tolerances["newton_tol"])
    if not with_graph:
        return Workspace(domain=domain, structure=structure,
                         projection=projection, graph=None, family=None,
                         epsilon=eps)
    graph = None
    if graph_cache and not graph_cache.endswith(".npz"):
        graph_cache = graph_cache + ".npz"
    if graph_cache and os.path.exists(graph_cache):
        graph = BoundaryGraph.load(graph_cache, domain, structure)
    if graph is None:
        graph = BoundaryGraph.build(
            domain, structure,
            n_nodes=int(cfg.graph["n_nodes"]),
            k_neighbors=int(cfg.graph["k_neighbors"]),
            anisotropy=float(cfg.graph["anisotropy"]),
            seed=int(cfg.graph["seed"]),
            selection=str(cfg.graph["selection"]),
        )
        if graph_cache:
            graph.save(graph_cache)
    for _ in range(int(refine)):
        graph = graph.refine()
    family = MetricFamily(projection, graph)
    return Workspace(domain=domain, structure=structure, projection=projection,
                     graph=graph, family=family, epsilon=eps)
