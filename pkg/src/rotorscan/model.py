"""Reference point cloud of a rotating turbine: pillar cylinder plus swept rotor disc."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict

import numpy as np

from .geometry import PointCloud, TurbineParams, write_ply


@dataclass(frozen=True)
class SamplingSpec:
    surface_density: float = 0.25  # points per m^2
    rng_seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.surface_density) and self.surface_density > 0):
            raise ValueError(f"surface_density must be > 0, got {self.surface_density!r}")


def surface_areas(params: TurbineParams) -> Dict[str, float]:
    """Closed-form areas of the sampled surfaces."""
    r, w = params.rotor_radius_m, params.rotor_width_m
    return {
        "pillar": 2.0 * math.pi * params.pillar_radius_m * params.pillar_height_m,
        "faces": 2.0 * math.pi * r * r,
        "rim": 2.0 * math.pi * r * w,
    }


def _grid_dims(n: int, aspect: float):
    """Split n cells into (nu, nv) with nu/nv close to ``aspect``."""
    if n <= 0:
        return 0, 0
    nu = max(1, int(round(math.sqrt(n * aspect))))
    nv = max(1, int(round(n / nu)))
    return nu, nv


def _stratified(nu: int, nv: int, rng: np.random.Generator):
    """One jittered sample per cell of an nu x nv grid on the unit square."""
    iu, iv = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    u = (iu.ravel() + rng.random(nu * nv)) / nu
    v = (iv.ravel() + rng.random(nu * nv)) / nv
    return u, v


def sample_surfaces(params: TurbineParams, spec: SamplingSpec) -> Dict[str, np.ndarray]:
    """Sample each analytic surface separately (pillar, front/back face, rim)."""
    rng = np.random.default_rng(spec.rng_seed)
    areas = surface_areas(params)
    dens = spec.surface_density
    n_vec, e_vec, up = params.normal, params.lateral, np.array([0.0, 0.0, 1.0])
    hub = params.hub
    R, w = params.rotor_radius_m, params.rotor_width_m
    out = {}

    # pillar lateral surface, circumference along u
    rp, H = params.pillar_radius_m, params.pillar_height_m
    nu, nv = _grid_dims(int(round(dens * areas["pillar"])), 2 * math.pi * rp / H)
    u, v = _stratified(nu, nv, rng)
    phi = 2 * math.pi * u + params.rotor_normal_yaw  # turns with the turbine
    base = params.base
    out["pillar"] = np.column_stack(
        [base[0] + rp * np.cos(phi), base[1] + rp * np.sin(phi), base[2] + H * v]
    )

    # two faces, equal-area rings: r = R sqrt(u)
    n_face = int(round(dens * areas["faces"] / 2))
    nu, nv = _grid_dims(n_face, 1.0 / math.pi)
    for name, sign in (("front", 1.0), ("back", -1.0)):
        u, v = _stratified(nu, nv, rng)
        rad = R * np.sqrt(u)
        phi = 2 * math.pi * v
        in_plane = np.outer(rad * np.cos(phi), e_vec) + np.outer(rad * np.sin(phi), up)
        out[name] = hub + sign * 0.5 * w * n_vec + in_plane

    # rim, circumference along u
    nu, nv = _grid_dims(int(round(dens * areas["rim"])), 2 * math.pi * R / w)
    u, v = _stratified(nu, nv, rng)
    phi = 2 * math.pi * u
    axial = (v - 0.5) * w
    out["rim"] = (
        hub
        + np.outer(axial, n_vec)
        + np.outer(R * np.cos(phi), e_vec)
        + np.outer(R * np.sin(phi), up)
    )
    return out


def generate_turbine_model(params: TurbineParams, spec: SamplingSpec = SamplingSpec()) -> PointCloud:
    """Sample the pillar and rotor-trace surfaces uniformly by area.

    Deterministic for a fixed ``spec.rng_seed``. The returned cloud stacks
    pillar, front face, back face and rim points in that order.
    """
    parts = sample_surfaces(params, spec)
    return PointCloud(np.vstack([parts[k] for k in ("pillar", "front", "back", "rim")]), "model")


def export_model(cloud: PointCloud, path) -> None:
    write_ply(cloud, path)
