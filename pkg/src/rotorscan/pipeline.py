"""The localization loop: register, voxelize, reject ground, cluster, match, repeat."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, List, Optional

import numpy as np

from .geometry import PointCloud, write_ply, transform
from .matcher import IcpConfig, MatchResult, is_satisfactory, match_clusters
from .preprocess import VoxelGrid, VoxelSpec, cluster, register_frame, reject_ground

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    voxel: VoxelSpec = VoxelSpec()
    ground_threshold_m: float = 0.3
    ground_max_tilt_deg: float = 15.0
    ground_iterations: int = 500
    linkage_radius_m: float = 2.0
    min_cluster_size: int = 30
    icp: IcpConfig = IcpConfig()
    batch_size: int = 10
    satisfactory_threshold: float = 1.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class BatchReport:
    batch: int
    frames: int
    registered: int
    voxelized: int
    after_ground: int
    clusters: int
    result: Optional[MatchResult]


@dataclass
class PipelineOutcome:
    result: Optional[MatchResult]
    satisfactory: bool
    frames_used: int
    batches: List[BatchReport] = field(default_factory=list)


class MatchingPipeline:
    """Incremental state for one scan stream; feed frames, then :meth:`step`."""

    def __init__(self, model: PointCloud, cfg: PipelineConfig = PipelineConfig(), seed: int = 0, dump_dir=None):
        self.model = model
        self.cfg = cfg
        self.seed = int(seed)
        self.dump_dir = dump_dir
        self.grid = VoxelGrid(cfg.voxel)
        self.registered = 0
        self.frames = 0
        self.batches = 0
        self._pending: List[PointCloud] = []
        self.best: Optional[MatchResult] = None

    def add_frame(self, frame) -> None:
        # the voxel grid carries the running global cloud, so only the newly
        # registered points are kept around until the next step
        moved = register_frame(PointCloud.empty(), frame)
        self.grid.add(moved)
        self.registered += len(moved)
        self.frames += 1
        if self.dump_dir is not None:
            self._pending.append(moved)

    def step(self) -> BatchReport:
        cfg = self.cfg
        b = self.batches
        self.batches += 1
        vox = self.grid.cloud()
        rep = BatchReport(b, self.frames, self.registered, len(vox), len(vox), 0, None)
        if len(vox) < 3:
            return rep
        ground = reject_ground(
            vox, cfg.ground_threshold_m, cfg.ground_max_tilt_deg, cfg.ground_iterations, seed=[self.seed, b]
        )
        rest = ground.cloud
        rep.after_ground = len(rest)
        clusters = cluster(rest, cfg.linkage_radius_m, cfg.min_cluster_size)
        rep.clusters = len(clusters)
        if len(clusters):
            warm = () if self.best is None else (self.best.pose,)
            rep.result = match_clusters(self.model, rest, clusters, cfg.icp, extra_inits=warm)
            self.best = rep.result
        log.debug(
            "batch %d: frames=%d registered=%d voxels=%d no_ground=%d clusters=%d score=%s",
            b, self.frames, self.registered, len(vox), len(rest), len(clusters),
            None if rep.result is None else f"{rep.result.score:.4f}",
        )
        if self.dump_dir is not None:
            self._dump(b, vox, rest, clusters, rep.result)
        return rep

    def _dump(self, b, vox, rest, clusters, result):
        d = os.path.join(self.dump_dir, f"batch_{b:04d}")
        os.makedirs(d, exist_ok=True)
        if self._pending:
            write_ply(PointCloud(np.vstack([c.points for c in self._pending])), os.path.join(d, "registered.ply"))
            self._pending = []
        write_ply(vox, os.path.join(d, "voxelized.ply"))
        write_ply(rest, os.path.join(d, "no_ground.ply"))
        for i, members in enumerate(clusters):
            write_ply(rest.subset(members), os.path.join(d, f"cluster_{i:03d}.ply"))
        if result is not None:
            write_ply(transform(self.model, result.pose), os.path.join(d, "matched_model.ply"))


def run_matching(
    model: PointCloud,
    frames: Iterable,
    cfg: PipelineConfig = PipelineConfig(),
    seed: int = 0,
    dump_dir=None,
) -> PipelineOutcome:
    """Consume frames in batches until a satisfactory match or the stream ends."""
    pipe = MatchingPipeline(model, cfg, seed, dump_dir)
    out = PipelineOutcome(None, False, 0)
    since = 0
    last_step_at = 0
    for fr in frames:
        pipe.add_frame(fr)
        since += 1
        if since < cfg.batch_size:
            continue
        since = 0
        last_step_at = pipe.frames
        rep = pipe.step()
        out.batches.append(rep)
        if rep.result is not None:
            out.result = rep.result
            if is_satisfactory(rep.result, cfg.satisfactory_threshold):
                out.satisfactory = True
                break
    if not out.satisfactory and pipe.frames > last_step_at:
        rep = pipe.step()
        out.batches.append(rep)
        if rep.result is not None:
            out.result = rep.result
            out.satisfactory = is_satisfactory(rep.result, cfg.satisfactory_threshold)
    out.frames_used = pipe.frames
    return out
