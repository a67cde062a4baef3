"""Yaw-constrained ICP of the turbine model against candidate clusters."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Pose4, PointCloud, wrap_angle, yaw_matrix
from .preprocess import ClusterSet

DEFAULT_YAW_SEEDS = (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi)


@dataclass(frozen=True)
class IcpConfig:
    max_iterations: int = 50
    convergence_eps_m: float = 1e-3
    eps_rad: float = 1e-3
    max_correspondence_m: float = 5.0
    yaw_seeds: Tuple[float, ...] = DEFAULT_YAW_SEEDS
    # the correspondence cutoff halves after each convergence down to this floor
    min_correspondence_m: float = 1.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (self.convergence_eps_m > 0 and self.eps_rad > 0):
            raise ValueError("convergence epsilons must be > 0")
        if not self.max_correspondence_m > 0:
            raise ValueError("max_correspondence_m must be > 0")
        if not 0 < self.min_correspondence_m <= self.max_correspondence_m:
            raise ValueError("min_correspondence_m must be in (0, max_correspondence_m]")
        object.__setattr__(self, "yaw_seeds", tuple(float(y) for y in self.yaw_seeds))
        if not self.yaw_seeds:
            raise ValueError("yaw_seeds must not be empty")


@dataclass(frozen=True)
class MatchResult:
    pose: Pose4  # model -> world
    score: float  # m^2, +inf when ICP lost all correspondences
    converged: bool
    iterations_used: int
    cluster_index: Optional[int] = None
    seed_index: Optional[int] = None
    # truncated mean squared residual at each visited pose, see icp_4dof
    history: Tuple[float, ...] = field(default=(), repr=False, compare=False)

    def to_json_dict(self) -> dict:
        return {
            "cluster_index": self.cluster_index,
            "score": self.score if math.isfinite(self.score) else None,
            "pose": self.pose.as_dict(),
            "converged": self.converged,
            "iterations": self.iterations_used,
        }


def match_result_from_json(doc: dict) -> MatchResult:
    p = doc["pose"]
    score = doc["score"]
    return MatchResult(
        pose=Pose4(p["tx"], p["ty"], p["tz"], p["yaw"]),
        score=math.inf if score is None else float(score),
        converged=bool(doc["converged"]),
        iterations_used=int(doc["iterations"]),
        cluster_index=doc.get("cluster_index"),
    )


def write_match_report(result: MatchResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(result.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_match_report(path) -> MatchResult:
    with open(path) as fh:
        return match_result_from_json(json.load(fh))


def _points(c) -> np.ndarray:
    return c.points if isinstance(c, PointCloud) else np.asarray(c, dtype=float)


def match_score(model, target, pose: Pose4 = Pose4(), tree: Optional[cKDTree] = None) -> float:
    """Mean squared distance from each posed model point to its nearest target point."""
    m, t = _points(model), _points(target)
    if len(m) == 0 or len(t) == 0:
        raise ValueError("match_score needs non-empty model and target")
    tree = tree if tree is not None else cKDTree(t)
    d, _ = tree.query(pose.apply(m), k=1)
    return float(np.mean(d * d))


def best_yaw_step(src: np.ndarray, dst: np.ndarray) -> Pose4:
    """Least-squares rotation about z plus translation taking src onto dst (paired rows)."""
    ps, qs = src.mean(axis=0), dst.mean(axis=0)
    p, q = src - ps, dst - qs
    c = float(np.sum(p[:, 0] * q[:, 0] + p[:, 1] * q[:, 1]))
    s = float(np.sum(p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0]))
    yaw = math.atan2(s, c) if (c or s) else 0.0
    t = qs - yaw_matrix(yaw) @ ps
    return Pose4(t[0], t[1], t[2], yaw)


def icp_4dof(
    model,
    target,
    init: Pose4 = Pose4(),
    cfg: IcpConfig = IcpConfig(),
    tree: Optional[cKDTree] = None,
) -> MatchResult:
    """Point-to-point ICP over (tx, ty, tz, yaw), model -> target.

    Pairs farther apart than the current cutoff are discarded. The cutoff
    starts at ``max_correspondence_m`` and halves each time the pose settles,
    until ``min_correspondence_m``; the coarse stage gives a wide basin, the
    fine stages stop unobserved model regions from dragging the fit.

    ``history`` records mean(min(d^2, c^2)) at each visited pose, c being the
    cutoff in force. It never increases: each ICP step is optimal for its
    pairs, and shrinking c can only lower the value.
    """
    m, t = _points(model), _points(target)
    if len(m) == 0 or len(t) == 0:
        raise ValueError("icp_4dof needs non-empty model and target")
    tree = tree if tree is not None else cKDTree(t)
    cap = cfg.max_correspondence_m

    def evaluate(p: Pose4):
        cur = p.apply(m)
        d, idx = tree.query(cur, k=1, distance_upper_bound=cap)
        keep = np.isfinite(d)
        return float(np.mean(np.where(keep, d * d, cap * cap))), cur, idx, keep, d

    pose = init
    f, cur, idx, keep, d = evaluate(pose)
    history: List[float] = [f]
    converged = False
    used = 0
    while used < cfg.max_iterations:
        if not np.any(keep):
            return MatchResult(pose, math.inf, False, used, history=tuple(history))
        step = best_yaw_step(cur[keep], t[idx[keep]])
        used += 1
        small = math.hypot(step.tx, step.ty, step.tz) < cfg.convergence_eps_m and abs(step.yaw) < cfg.eps_rad
        pose, (f, cur, idx, keep, d) = _extrapolate(pose, step.compose(pose), evaluate)
        if small:
            if cap <= cfg.min_correspondence_m or not np.any(d[keep] > cfg.min_correspondence_m):
                history.append(f)
                converged = True
                break
            cap = max(cfg.min_correspondence_m, 0.5 * cap)
            f, cur, idx, keep, d = evaluate(pose)
        history.append(f)
    dist, _ = tree.query(pose.apply(m), k=1)
    return MatchResult(pose, float(np.mean(dist * dist)), converged, used, history=tuple(history))


def _extrapolate(prev: Pose4, nxt: Pose4, evaluate, max_doublings: int = 6):
    """Line search along the ICP increment in (tx, ty, tz, yaw).

    Plain ICP creeps along weakly constrained directions (sliding in the disc
    plane). Candidates prev + k * (nxt - prev) for k = 2, 4, ... are kept only
    while they lower the truncated objective, so the sequence stays monotone.
    """
    best_pose, best = nxt, evaluate(nxt)
    dv = np.array([nxt.tx - prev.tx, nxt.ty - prev.ty, nxt.tz - prev.tz, wrap_angle(nxt.yaw - prev.yaw)])
    base = np.array([prev.tx, prev.ty, prev.tz, prev.yaw])
    k = 2.0
    for _ in range(max_doublings):
        cand = Pose4(*(base + k * dv))
        ev = evaluate(cand)
        if not ev[0] < best[0]:
            break
        best_pose, best = cand, ev
        k *= 2.0
    return best_pose, best


def seed_pose(model_centroid: np.ndarray, target_centroid: np.ndarray, yaw: float) -> Pose4:
    """Pose with the given yaw that maps the model centroid onto the target centroid."""
    t = target_centroid - yaw_matrix(yaw) @ model_centroid
    return Pose4(t[0], t[1], t[2], yaw)


def match_clusters(
    model,
    cloud,
    clusters: ClusterSet,
    cfg: IcpConfig = IcpConfig(),
    extra_inits: Sequence[Pose4] = (),
) -> MatchResult:
    """Best ICP result over every (cluster, yaw seed) pair.

    Each yaw seed starts with the model centroid on the cluster centroid.
    ``extra_inits`` (e.g. the previous best pose) are tried on every cluster
    after the seeds. Ranked by (score, cluster index, seed index).
    """
    if len(clusters) == 0:
        raise ValueError("nothing to match")
    m, pts = _points(model), _points(cloud)
    mc = m.mean(axis=0)
    best = None
    for ci, members in enumerate(clusters):
        target = pts[np.asarray(members, dtype=np.intp)]
        tree = cKDTree(target)
        tc = target.mean(axis=0)
        inits = [seed_pose(mc, tc, yaw) for yaw in cfg.yaw_seeds] + list(extra_inits)
        for si, init in enumerate(inits):
            res = icp_4dof(m, target, init, cfg, tree=tree)
            res = replace(res, cluster_index=ci, seed_index=si)
            if best is None or res.score < best.score:
                best = res
    return best


def is_satisfactory(result: MatchResult, threshold: float = 1.0) -> bool:
    return bool(result.converged and result.score < threshold)
