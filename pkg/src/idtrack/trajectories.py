"""From the relaxed assignment matrix to per-identity trajectories.

Rows of F are discretized by thresholded argmax, simultaneous multi-camera
detections of one identity are merged to a score-weighted average position, and
sporadic predictions are dropped by a run-length filter.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ObservationSet, Trajectory, TrackerConfig


@dataclass(frozen=True)
class AssignmentDecision:
    obs_id: int
    identity: Optional[int]
    score: float


def discretize(F: np.ndarray, theta: float,
               clamped_rows: np.ndarray | None = None) -> list[AssignmentDecision]:
    """Assign each row its argmax column when the value exceeds theta.

    Ties pick the smallest column index. Rows listed in ``clamped_rows`` carry a
    face label and are always assigned their (argmax) label regardless of theta.
    """
    n = F.shape[0]
    best = np.argmax(F, axis=1) if F.shape[1] else np.zeros(n, dtype=int)
    score = F[np.arange(n), best] if F.shape[1] else np.zeros(n)
    assigned = score > theta
    if clamped_rows is not None and len(clamped_rows):
        assigned = assigned.copy()
        assigned[clamped_rows] = True
    return [AssignmentDecision(i, int(best[i]) if assigned[i] else None, float(score[i]))
            for i in range(n)]


def resolve_velocity_conflicts(decisions: list[AssignmentDecision],
                               obs_set: ObservationSet,
                               cfg: TrackerConfig,
                               clamped_rows: np.ndarray | None = None) -> list[AssignmentDecision]:
    """Drop the weaker side of any same-identity pair no person could connect.

    The penalty solve drives the repulsion term to zero, but a finite schedule
    can leave a few near-threshold stragglers; a hard assignment must not put
    a velocity-infeasible pair in one identity, so the lower-scoring decision
    of each surviving conflict is unassigned (face-labeled rows are never
    dropped). Deterministic: candidates are processed by ascending (score,
    obs_id).
    """
    decisions = list(decisions)
    score = {d.obs_id: d.score for d in decisions}
    by_id: dict[int, list[int]] = {}
    for d in decisions:
        if d.identity is not None:
            by_id.setdefault(d.identity, []).append(d.obs_id)
    clamped = set(clamped_rows.tolist()) if clamped_rows is not None else set()

    def conflicts(ids: list[int]) -> list[tuple[int, int]]:
        ids = sorted(ids, key=lambda i: int(obs_set.frames[i]))
        out = []
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                i, j = ids[a], ids[b]
                dt_frames = int(obs_set.frames[j]) - int(obs_set.frames[i])
                if dt_frames > cfg.slc_window_frames:
                    break
                gap = np.linalg.norm(obs_set.positions[i] - obs_set.positions[j])
                dt = dt_frames / obs_set.fps
                if max(gap - cfg.delta_cm, 0.0) / (dt + cfg.epsilon_sec) > cfg.V_cmps:
                    out.append((i, j))
        return out

    dropped: set[int] = set()
    for identity, ids in sorted(by_id.items()):
        ids = set(ids)
        while True:
            pairs = [p for p in conflicts(sorted(ids))
                     if not (p[0] in clamped and p[1] in clamped)]
            if not pairs:
                break
            involved = {i for p in pairs for i in p if i not in clamped}
            if not involved:
                break
            victim = min(involved, key=lambda i: (score[i], i))
            ids.discard(victim)
            dropped.add(victim)
    if not dropped:
        return decisions
    return [AssignmentDecision(d.obs_id, None, d.score) if d.obs_id in dropped else d
            for d in decisions]


def merge_per_frame(decisions: list[AssignmentDecision],
                    obs_set: ObservationSet) -> dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Collapse each (identity, frame) group to one score-weighted mean position.

    Returns per identity: (frames ascending, positions, summed weights).
    """
    groups: dict[tuple[int, int], list[int]] = {}
    scores: dict[int, float] = {}
    for dec in decisions:
        if dec.identity is None:
            continue
        key = (dec.identity, int(obs_set.frames[dec.obs_id]))
        groups.setdefault(key, []).append(dec.obs_id)
        scores[dec.obs_id] = dec.score

    merged: dict[int, list[tuple[int, np.ndarray, float]]] = {}
    for (identity, frame), ids in sorted(groups.items()):
        w = np.array([scores[i] for i in ids])
        total = float(w.sum())
        pos = (obs_set.positions[ids] * w[:, None]).sum(axis=0) / total
        merged.setdefault(identity, []).append((frame, pos, total))

    out = {}
    for identity, rows in merged.items():
        frames = np.array([r[0] for r in rows], dtype=np.int64)
        out[identity] = (frames,
                         np.stack([r[1] for r in rows]),
                         np.array([r[2] for r in rows]))
    return out


def filter_sporadic(points: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]],
                    cfg: TrackerConfig) -> list[Trajectory]:
    """Split each identity's points into runs with gaps <= gap_frames and keep
    runs of at least min_run_length samples."""
    out: list[Trajectory] = []
    for identity in sorted(points):
        frames, positions, weights = points[identity]
        if len(frames) == 0:
            continue
        breaks = np.flatnonzero(np.diff(frames) > cfg.gap_frames) + 1
        for chunk in np.split(np.arange(len(frames)), breaks):
            if len(chunk) < cfg.min_run_length:
                continue
            out.append(Trajectory(identity=identity, frames=frames[chunk],
                                  positions=positions[chunk], weights=weights[chunk]))
    return out


def form_trajectories(F: np.ndarray, obs_set: ObservationSet, cfg: TrackerConfig,
                      clamped_rows: np.ndarray | None = None,
                      enforce_slc: bool = True) -> list[Trajectory]:
    """discretize -> resolve_velocity_conflicts -> merge_per_frame -> filter_sporadic.

    ``enforce_slc=False`` skips conflict resolution; it belongs to the
    spatial-locality machinery and is dropped alongside S in ablation runs.
    """
    decisions = discretize(F, cfg.assign_threshold_theta, clamped_rows)
    if enforce_slc:
        decisions = resolve_velocity_conflicts(decisions, obs_set, cfg, clamped_rows)
    return filter_sporadic(merge_per_frame(decisions, obs_set), cfg)
