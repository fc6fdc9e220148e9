"""Domain types and file IO for detections, labels, trajectories and ground truth.

All positions are centimeters, all times are integer frame numbers. Seconds-valued
configuration is converted to frames downstream using the recording fps. Identities
are dense integer indices in [0, c); histograms are opaque nonnegative vectors that
arrive precomputed and per-partition L1-normalized.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp


class DataError(ValueError):
    """Raised on malformed or inconsistent input files."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Observation:
    """One person detection: where, when, what it looks like, and (rarely) who."""

    obs_id: int
    position: np.ndarray  # (3,) cm
    frame: int
    histogram: np.ndarray  # (d,) nonnegative, per-partition L1-normalized
    camera_id: int = 0
    face_label: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "position", _readonly(np.asarray(self.position, dtype=float)))
        object.__setattr__(self, "histogram", _readonly(np.asarray(self.histogram, dtype=float)))
        if self.position.shape != (3,):
            raise DataError(f"obs {self.obs_id}: position must be a 3-vector")
        if not np.all(np.isfinite(self.position)):
            raise DataError(f"obs {self.obs_id}: non-finite position")
        if self.frame < 0:
            raise DataError(f"obs {self.obs_id}: negative frame")
        if np.any(self.histogram < 0):
            raise DataError(f"obs {self.obs_id}: negative histogram entry")


@dataclass(frozen=True)
class ObservationSet:
    """All detections of a recording, with fps and label-space metadata.

    Derived column arrays (positions, frames, histograms, face_labels) are built once
    at construction; face_labels uses -1 for unlabeled observations.
    """

    observations: tuple[Observation, ...]
    fps: float
    num_identities: int
    histogram_dim: int
    positions: np.ndarray = field(init=False, repr=False)
    frames: np.ndarray = field(init=False, repr=False)
    histograms: np.ndarray = field(init=False, repr=False)
    face_labels: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        obs = tuple(self.observations)
        object.__setattr__(self, "observations", obs)
        if self.fps <= 0:
            raise DataError("fps must be positive")
        if self.num_identities < 0:
            raise DataError("num_identities must be >= 0")
        n = len(obs)
        for i, o in enumerate(obs):
            if o.obs_id != i:
                raise DataError(f"obs_ids must be dense 0..n-1 (found {o.obs_id} at index {i})")
            if o.histogram.shape != (self.histogram_dim,):
                raise DataError(
                    f"obs {i}: histogram length {o.histogram.shape[0]} != d={self.histogram_dim}"
                )
            if o.face_label is not None and not (0 <= o.face_label < self.num_identities):
                raise DataError(f"obs {i}: face_label {o.face_label} outside [0, {self.num_identities})")
        object.__setattr__(self, "positions", _readonly(
            np.stack([o.position for o in obs]) if n else np.zeros((0, 3))))
        object.__setattr__(self, "frames", _readonly(
            np.array([o.frame for o in obs], dtype=np.int64)))
        object.__setattr__(self, "histograms", _readonly(
            np.stack([o.histogram for o in obs]) if n else np.zeros((0, self.histogram_dim))))
        object.__setattr__(self, "face_labels", _readonly(np.array(
            [-1 if o.face_label is None else o.face_label for o in obs], dtype=np.int64)))
        _check_partition_sums(self.histograms)

    def __len__(self) -> int:
        return len(self.observations)


def _check_partition_sums(histograms: np.ndarray) -> None:
    # Each partition is L1-normalized, so every histogram must sum to the same
    # (unknown here) integer partition count.
    if histograms.shape[0] == 0 or histograms.shape[1] == 0:
        return
    sums = histograms.sum(axis=1)
    target = round(float(sums[0]))
    if target < 1 or np.any(np.abs(sums - target) > 1e-6):
        raise DataError("histograms must sum to a common integer partition count (within 1e-6)")


@dataclass(frozen=True)
class TrackerConfig:
    """Tracker hyperparameters. Distances cm, velocities cm/s, windows as noted."""

    k: int = 25                       # max appearance neighbors per observation
    T_appearance_sec: float = 8.0     # appearance neighbor time window
    gamma: float = 0.85               # histogram similarity threshold
    delta_cm: float = 125.0           # max localization error
    V_cmps: float = 500.0             # max person velocity (unstated upstream; walking+margin)
    epsilon_sec: float = 1e-6         # velocity denominator guard
    delta_tilde_cm: float = 20.0      # spatial-affinity radius
    T_tilde_frames: int = 6           # spatial-affinity frame window
    slc_window_frames: int = 6        # conflict search window for S
    beta_per_1000: float = 1.0        # class-size prior: beta = n * beta_per_1000 / 1000
    tau_init: float = 1e-4
    tau_final: float = 1e11
    tau_step_s: float = 2.0
    sigma: float = 0.01               # sufficient-decrease constant
    inner_tol: float = 1e-5           # relative loss decrease stopping the inner loop
    inner_max_iters: int = 500
    u_large: float = 1e6              # diagonal weight for labeled rows of U
    assign_threshold_theta: float = 0.5
    min_run_length: int = 3
    gap_frames: int = 18

    def __post_init__(self):
        numeric = {f.name: getattr(self, f.name) for f in fields(self)}
        for name, value in numeric.items():
            if value <= 0:
                raise DataError(f"TrackerConfig.{name} must be positive")
        if not (0 < self.gamma <= 1):
            raise DataError("gamma must lie in (0, 1]")
        if self.tau_step_s <= 1:
            raise DataError("tau_step_s must be > 1")
        if not (0 < self.assign_threshold_theta < 1):
            raise DataError("assign_threshold_theta must lie in (0, 1)")

    def with_overrides(self, **kwargs) -> "TrackerConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered samples of one identity: parallel frame/position/weight arrays."""

    identity: int
    frames: np.ndarray     # (m,) strictly increasing
    positions: np.ndarray  # (m, 3) cm
    weights: np.ndarray    # (m,)

    def __post_init__(self):
        object.__setattr__(self, "frames", _readonly(np.asarray(self.frames, dtype=np.int64)))
        object.__setattr__(self, "positions", _readonly(np.asarray(self.positions, dtype=float)))
        object.__setattr__(self, "weights", _readonly(np.asarray(self.weights, dtype=float)))
        if self.identity < 0:
            raise DataError("trajectory identity must be >= 0")
        if self.positions.shape != (len(self.frames), 3):
            raise DataError("positions must be (m, 3)")
        if self.weights.shape != (len(self.frames),):
            raise DataError("weights must be (m,)")
        if len(self.frames) > 1 and np.any(np.diff(self.frames) <= 0):
            raise DataError("trajectory frames must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class GroundTruth:
    """Annotated (frame, identity, position) triples on a fixed annotation stride."""

    frames: np.ndarray      # (m,)
    identities: np.ndarray  # (m,)
    positions: np.ndarray   # (m, 3) cm
    annotation_stride_frames: int = 1

    def __post_init__(self):
        object.__setattr__(self, "frames", _readonly(np.asarray(self.frames, dtype=np.int64)))
        object.__setattr__(self, "identities", _readonly(np.asarray(self.identities, dtype=np.int64)))
        object.__setattr__(self, "positions", _readonly(np.asarray(self.positions, dtype=float)))
        if self.annotation_stride_frames < 1:
            raise DataError("annotation_stride_frames must be >= 1")
        if self.positions.shape != (len(self.frames), 3):
            raise DataError("positions must be (m, 3)")
        pairs = set(zip(self.frames.tolist(), self.identities.tolist()))
        if len(pairs) != len(self.frames):
            raise DataError("duplicate (frame, identity) ground-truth entry")

    def __len__(self) -> int:
        return len(self.frames)


# ---------------------------------------------------------------------------
# JSON Lines IO
# ---------------------------------------------------------------------------

def _parse_line(line: str, lineno: int, path: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}:{lineno}: malformed JSON ({e.msg})") from e
    if not isinstance(obj, dict):
        raise DataError(f"{path}:{lineno}: expected a JSON object")
    return obj


def load_detections(path: str) -> ObservationSet:
    """Read a detections file (header line, then one detection object per line).

    Observations keep file order; obs_id equals the detection's line index.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty file (missing header line)")
    header = _parse_line(lines[0], 1, path)
    try:
        fps = float(header["fps"])
        c = int(header["c"])
        d = int(header["d"])
    except KeyError as e:
        raise DataError(f"{path}:1: header missing key {e}") from e

    observations = []
    for idx, line in enumerate(lines[1:]):
        lineno = idx + 2
        if not line.strip():
            continue
        rec = _parse_line(line, lineno, path)
        try:
            frame = int(rec["frame"])
            cam = int(rec.get("cam", 0))
            pos = rec["pos"]
            hist = rec["hist"]
            face = rec.get("face", None)
        except KeyError as e:
            raise DataError(f"{path}:{lineno}: missing key {e}") from e
        if face is not None:
            face = int(face)
            if not (0 <= face < c):
                raise DataError(f"{path}:{lineno}: face label {face} outside [0, {c})")
        hist = np.asarray(hist, dtype=float)
        if hist.shape != (d,):
            raise DataError(f"{path}:{lineno}: histogram length {hist.size} != d={d}")
        if np.any(hist < 0):
            raise DataError(f"{path}:{lineno}: negative histogram entry")
        if frame < 0:
            raise DataError(f"{path}:{lineno}: negative frame")
        observations.append(Observation(
            obs_id=len(observations), position=np.asarray(pos, dtype=float),
            frame=frame, histogram=hist, camera_id=cam, face_label=face))
    try:
        return ObservationSet(tuple(observations), fps=fps, num_identities=c, histogram_dim=d)
    except DataError as e:
        raise DataError(f"{path}: {e}") from e


def write_detections(obs_set: ObservationSet, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"fps": obs_set.fps, "c": obs_set.num_identities,
                             "d": obs_set.histogram_dim}) + "\n")
        for o in obs_set.observations:
            fh.write(json.dumps({
                "frame": int(o.frame),
                "cam": int(o.camera_id),
                "pos": [float(v) for v in o.position],
                "hist": [float(v) for v in o.histogram],
                "face": None if o.face_label is None else int(o.face_label),
            }) + "\n")


def write_trajectories(trajectories: Sequence[Trajectory], path: str) -> None:
    """Write trajectories as JSON Lines with a leading header record.

    Sample lines carry {"id", "frame", "pos", "w"}; the header records segment
    lengths so that multiple segments of one identity round-trip exactly.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": "trajectories",
                             "segments": [len(t) for t in trajectories]}) + "\n")
        for t in trajectories:
            for f, p, w in zip(t.frames, t.positions, t.weights):
                fh.write(json.dumps({
                    "id": int(t.identity), "frame": int(f),
                    "pos": [float(v) for v in p], "w": float(w),
                }) + "\n")


def load_trajectories(path: str) -> list[Trajectory]:
    """Read a trajectories file.

    Segment boundaries come from the header when present; otherwise a new
    segment starts whenever the identity changes or frames stop increasing.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    records = []
    seg_lengths = None
    for idx, line in enumerate(lines):
        if not line.strip():
            continue
        rec = _parse_line(line, idx + 1, path)
        if "format" in rec:
            if idx != 0:
                raise DataError(f"{path}:{idx + 1}: header record not on first line")
            seg_lengths = rec.get("segments")
            continue
        try:
            records.append((int(rec["id"]), int(rec["frame"]),
                            np.asarray(rec["pos"], dtype=float), float(rec["w"])))
        except KeyError as e:
            raise DataError(f"{path}:{idx + 1}: missing key {e}") from e

    def build(seg):
        return Trajectory(
            identity=seg[0][0],
            frames=np.array([r[1] for r in seg], dtype=np.int64),
            positions=np.stack([r[2] for r in seg]),
            weights=np.array([r[3] for r in seg]))

    if seg_lengths is not None:
        if sum(seg_lengths) != len(records):
            raise DataError(f"{path}: header segment lengths do not match sample count")
        out, at = [], 0
        for length in seg_lengths:
            if length:
                out.append(build(records[at:at + length]))
            at += length
        return out

    out, seg = [], []
    for rec in records:
        if seg and (rec[0] != seg[0][0] or rec[1] <= seg[-1][1]):
            out.append(build(seg))
            seg = []
        seg.append(rec)
    if seg:
        out.append(build(seg))
    return out


def write_ground_truth(gt: GroundTruth, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f, i, p in zip(gt.frames, gt.identities, gt.positions):
            fh.write(json.dumps({"frame": int(f), "id": int(i),
                                 "pos": [float(v) for v in p]}) + "\n")


def load_ground_truth(path: str, annotation_stride_frames: Optional[int] = None) -> GroundTruth:
    """Read a ground-truth file; stride is inferred from the annotated frame grid
    (gcd of frame differences) unless given explicitly."""
    frames, ids, positions = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for idx, line in enumerate(fh):
            if not line.strip():
                continue
            rec = _parse_line(line, idx + 1, path)
            try:
                frames.append(int(rec["frame"]))
                ids.append(int(rec["id"]))
                positions.append(np.asarray(rec["pos"], dtype=float))
            except KeyError as e:
                raise DataError(f"{path}:{idx + 1}: missing key {e}") from e
    frames_arr = np.array(frames, dtype=np.int64)
    if annotation_stride_frames is None:
        uniq = np.unique(frames_arr)
        diffs = np.diff(uniq)
        annotation_stride_frames = int(math.gcd(*diffs.tolist())) if len(diffs) else 1
    return GroundTruth(
        frames=frames_arr, identities=np.array(ids, dtype=np.int64),
        positions=np.stack(positions) if positions else np.zeros((0, 3)),
        annotation_stride_frames=annotation_stride_frames)


def build_label_matrix(obs_set: ObservationSet) -> tuple[sp.csr_matrix, np.ndarray]:
    """Return the sparse n x c label matrix Y and the array of labeled row indices.

    Y[i, j] = 1 exactly when observation i carries face label j; rows without a
    label are all zero.
    """
    n, c = len(obs_set), obs_set.num_identities
    labeled = np.flatnonzero(obs_set.face_labels >= 0)
    data = np.ones(len(labeled))
    Y = sp.csr_matrix(
        (data, (labeled, obs_set.face_labels[labeled])), shape=(n, c), dtype=float)
    return Y, labeled
