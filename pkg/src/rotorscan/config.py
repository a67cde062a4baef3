"""Run configuration: a JSON document validated by pydantic and turned into module objects.

Every section is optional and falls back to the module defaults. Unknown keys
are rejected at every level.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .geometry import Pose4, TurbineParams
from .matcher import DEFAULT_YAW_SEEDS, IcpConfig
from .model import SamplingSpec
from .pipeline import PipelineConfig
from .preprocess import VoxelSpec
from .scansim import SceneSpec, SensorSpec, Sphere
from .trajectory import TrajectoryParams
from .trigger import TriggerConfig


class ConfigError(ValueError):
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TurbineSection(_Section):
    pillar_height_m: float = 45.0
    rotor_radius_m: float = 30.0
    rotor_width_m: float = 1.0
    pillar_radius_m: float = 1.5
    rotor_overhang_m: float = 3.0


class PoseSection(_Section):
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0
    yaw: float = 0.0


class SphereSection(_Section):
    center: Tuple[float, float, float]
    radius: float


class SceneSection(_Section):
    # where the canonical turbine (base at origin, rotor facing +x) stands in the world
    turbine_pose: PoseSection = PoseSection(tx=32.0, ty=26.0, yaw=-2.2)
    blade_count: int = 3
    blade_chord_m: float = 2.0
    rotor_speed_rad_s: float = 0.6
    initial_blade_phase_rad: float = 0.3
    clutter: List[SphereSection] = [SphereSection(center=(12.0, -8.0, 1.0), radius=2.0)]
    ground_z: Optional[float] = 0.0


class SensorSection(_Section):
    channels: int = 32
    vertical_fov_deg: Tuple[float, float] = (-22.5, 22.5)
    azimuth_step_deg: float = 0.35
    max_range_m: float = 100.0
    range_noise_sigma_m: float = 0.02
    scan_rate_hz: float = 5.0


class ClimbSection(_Section):
    start: PoseSection = PoseSection(tz=2.0)
    climb_rate_m_s: float = 1.0
    duration_s: float = 60.0


class ModelSection(_Section):
    surface_density: float = 0.25
    rng_seed: int = 0


class VoxelSection(_Section):
    voxel_size_m: float = 0.5


class GroundSection(_Section):
    threshold_m: float = 0.3
    max_tilt_deg: float = 15.0
    iterations: int = 500


class ClusterSection(_Section):
    linkage_radius_m: float = 2.0
    min_cluster_size: int = 30


class IcpSection(_Section):
    max_iterations: int = 50
    convergence_eps_m: float = 1e-3
    eps_rad: float = 1e-3
    max_correspondence_m: float = 5.0
    min_correspondence_m: float = 1.0
    yaw_seeds: List[float] = list(DEFAULT_YAW_SEEDS)


class MatchingSection(_Section):
    batch_size: int = 10
    satisfactory_threshold: float = 1.0


class TrajectorySection(_Section):
    standoff_m: float = 10.0
    tip_margin_m: float = 2.0
    height_offset_m: float = 10.0
    gimbal_tilt_deg: float = 45.0
    lateral_step_m: float = 2.0
    arc_step_deg: float = 10.0
    hold_span_fractions: List[float] = [0.2, 0.5, 0.9]


class TriggerSection(_Section):
    gate_range_m: float = 12.0
    debounce_s: float = 0.3
    rangefinder_rate_hz: float = 100.0
    range_noise_sigma_m: float = 0.05
    dwell_s: float = 12.0


class RunConfigModel(_Section):
    turbine: TurbineSection = TurbineSection()
    scene: SceneSection = SceneSection()
    sensor: SensorSection = SensorSection()
    climb: ClimbSection = ClimbSection()
    model: ModelSection = ModelSection()
    voxel: VoxelSection = VoxelSection()
    ground: GroundSection = GroundSection()
    clustering: ClusterSection = ClusterSection()
    icp: IcpSection = IcpSection()
    matching: MatchingSection = MatchingSection()
    trajectory: TrajectorySection = TrajectorySection()
    trigger: TriggerSection = TriggerSection()
    seed: int = Field(0, ge=0, lt=2**64)
    out_dir: str = "out"


def _pose(p: PoseSection) -> Pose4:
    return Pose4(p.tx, p.ty, p.tz, p.yaw)


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Validated configuration with every module object built."""

    doc: RunConfigModel
    turbine: TurbineParams  # canonical: base at origin, rotor facing +x
    turbine_pose: Pose4  # ground truth placement in the simulated world
    scene: SceneSpec
    sensor: SensorSpec
    climb_start: Pose4
    climb_rate_m_s: float
    climb_duration_s: float
    sampling: SamplingSpec
    pipeline: PipelineConfig
    trajectory: TrajectoryParams
    trigger: TriggerConfig
    dwell_s: float

    @property
    def seed(self) -> int:
        return self.doc.seed

    @property
    def out_dir(self) -> str:
        return self.doc.out_dir

    def to_json(self) -> str:
        return json.dumps(self.doc.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def build(doc: RunConfigModel) -> RunConfig:
    t = doc.turbine
    turbine = TurbineParams(
        pillar_height_m=t.pillar_height_m,
        rotor_radius_m=t.rotor_radius_m,
        rotor_width_m=t.rotor_width_m,
        pillar_radius_m=t.pillar_radius_m,
        rotor_overhang_m=t.rotor_overhang_m,
    )
    s = doc.scene
    pose = _pose(s.turbine_pose)
    scene = SceneSpec(
        turbine=turbine.posed(pose),
        blade_count=s.blade_count,
        blade_chord_m=s.blade_chord_m,
        rotor_speed_rad_s=s.rotor_speed_rad_s,
        initial_blade_phase_rad=s.initial_blade_phase_rad,
        clutter=tuple(Sphere(c.center, c.radius) for c in s.clutter),
        ground_z=s.ground_z,
    )
    sensor = SensorSpec(**doc.sensor.model_dump())
    if not (doc.climb.duration_s > 0 and math.isfinite(doc.climb.climb_rate_m_s)):
        raise ValueError("climb duration_s must be > 0")
    g, c, m = doc.ground, doc.clustering, doc.matching
    icp = IcpConfig(**{**doc.icp.model_dump(), "yaw_seeds": tuple(doc.icp.yaw_seeds)})
    pipeline = PipelineConfig(
        voxel=VoxelSpec(doc.voxel.voxel_size_m),
        ground_threshold_m=g.threshold_m,
        ground_max_tilt_deg=g.max_tilt_deg,
        ground_iterations=g.iterations,
        linkage_radius_m=c.linkage_radius_m,
        min_cluster_size=c.min_cluster_size,
        icp=icp,
        batch_size=m.batch_size,
        satisfactory_threshold=m.satisfactory_threshold,
    )
    tr = doc.trajectory
    traj = TrajectoryParams(**{**tr.model_dump(), "hold_span_fractions": tuple(tr.hold_span_fractions)})
    if not traj.standoff_m > 0.5 * turbine.rotor_width_m:
        raise ValueError("unsafe standoff")
    trig = doc.trigger.model_dump()
    dwell = trig.pop("dwell_s")
    if not dwell > 0:
        raise ValueError("trigger dwell_s must be > 0")
    return RunConfig(
        doc=doc,
        turbine=turbine,
        turbine_pose=pose,
        scene=scene,
        sensor=sensor,
        climb_start=_pose(doc.climb.start),
        climb_rate_m_s=doc.climb.climb_rate_m_s,
        climb_duration_s=doc.climb.duration_s,
        sampling=SamplingSpec(doc.model.surface_density, doc.model.rng_seed),
        pipeline=pipeline,
        trajectory=traj,
        trigger=TriggerConfig(**trig),
        dwell_s=dwell,
    )


def parse_config(data: dict, **overrides) -> RunConfig:
    """Validate a config mapping; ``overrides`` replace top-level keys when not None."""
    data = dict(data)
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return build(RunConfigModel.model_validate(data))
    except (ValidationError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Optional[str] = None, **overrides) -> RunConfig:
    if path is None:
        return parse_config({}, **overrides)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(data, **overrides)


def config_schema() -> dict:
    return RunConfigModel.model_json_schema()
