"""Tracking evaluation: MOTA with a log10 identity-switch term, plus
identity-aware micro precision/recall/F1.

Evaluation runs only on annotated frames. Predictions are sampled at each
annotated frame as the trajectory sample nearest in time within half the
annotation stride. Geometric matching is greedy over (distance, gt id, pred id)
so results are reproducible.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .model import GroundTruth, Trajectory


@dataclass(frozen=True)
class EvalCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    id_switches: int = 0
    i_tp: int = 0
    i_fp: int = 0
    i_fn: int = 0
    gt_total: int = 0

    def __post_init__(self):
        for name, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"count {name} must be nonnegative")
        if self.tp + self.fn != self.gt_total:
            raise ValueError("tp + fn must equal gt_total")


@dataclass(frozen=True)
class EvalReport:
    mota: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    counts: EvalCounts

    def to_json(self) -> str:
        d = asdict(self)
        d["counts"] = asdict(self.counts)
        return json.dumps(d)

    def to_csv_row(self) -> str:
        c = self.counts
        return ",".join(str(v) for v in [
            self.mota, self.micro_precision, self.micro_recall, self.micro_f1,
            c.tp, c.fp, c.fn, c.id_switches, c.i_tp, c.i_fp, c.i_fn, c.gt_total])

    @staticmethod
    def csv_header() -> str:
        return "mota,micro_precision,micro_recall,micro_f1,tp,fp,fn,id_switches,i_tp,i_fp,i_fn,gt_total"


def _predictions_at(trajectories: list[Trajectory], frame: int,
                    half_stride: float) -> dict[int, np.ndarray]:
    """Per identity, the sample position nearest to `frame` within half_stride."""
    best: dict[int, tuple[float, int, np.ndarray]] = {}
    for t in trajectories:
        idx = int(np.searchsorted(t.frames, frame))
        for cand in (idx - 1, idx):
            if 0 <= cand < len(t.frames):
                dt = abs(int(t.frames[cand]) - frame)
                if dt <= half_stride:
                    # Tie on |dt| -> earlier frame wins (deterministic).
                    key = (dt, int(t.frames[cand]))
                    if t.identity not in best or key < best[t.identity][:2]:
                        best[t.identity] = (dt, int(t.frames[cand]), t.positions[cand])
    return {q: rec[2] for q, rec in best.items()}


def match_and_count(trajectories: list[Trajectory], gt: GroundTruth,
                    radius_cm: float = 100.0) -> EvalCounts:
    """Greedy nearest-pair matching per annotated frame under the hit radius.

    A matched pair is a TP, leftovers are FP/FN. An identity switch is counted
    when a gt identity is matched at consecutive annotated frames to different
    predicted identities. Identity-aware counts require the predicted identity
    to equal the gt identity within the radius.
    """
    if len(gt) == 0:
        raise ValueError("ground truth is empty")
    half_stride = gt.annotation_stride_frames / 2.0
    annotated = np.unique(gt.frames)

    tp = fp = fn = id_switches = i_tp = 0
    n_pred_total = 0
    prev_match: dict[int, int] = {}

    for frame in annotated:
        sel = gt.frames == frame
        gt_ids = gt.identities[sel]
        gt_pos = gt.positions[sel]
        preds = _predictions_at(trajectories, int(frame), half_stride)
        n_pred_total += len(preds)

        pairs = []
        for gi, (g, gp) in enumerate(zip(gt_ids, gt_pos)):
            for q, pp in preds.items():
                dist = float(np.linalg.norm(gp - pp))
                if dist <= radius_cm:
                    pairs.append((dist, int(g), int(q)))
        pairs.sort()
        matched_gt: dict[int, int] = {}
        matched_pred: set[int] = set()
        for dist, g, q in pairs:
            if g in matched_gt or q in matched_pred:
                continue
            matched_gt[g] = q
            matched_pred.add(q)

        tp += len(matched_gt)
        fp += len(preds) - len(matched_gt)
        fn += len(gt_ids) - len(matched_gt)

        for g, q in matched_gt.items():
            if g in prev_match and prev_match[g] != q:
                id_switches += 1
        prev_match = matched_gt

        # Identity-aware: compare each identity's prediction against the same
        # identity's ground truth; both are unique per frame.
        gt_by_id = {int(g): gp for g, gp in zip(gt_ids, gt_pos)}
        for q, pp in preds.items():
            if q in gt_by_id and float(np.linalg.norm(gt_by_id[q] - pp)) <= radius_cm:
                i_tp += 1

    gt_total = len(gt)
    return EvalCounts(tp=tp, fp=fp, fn=fn, id_switches=id_switches,
                      i_tp=i_tp, i_fp=n_pred_total - i_tp, i_fn=gt_total - i_tp,
                      gt_total=gt_total)


def mota(counts: EvalCounts) -> float:
    """1 - (FP + FN + log10(ID-S)) / gt; zero switches contribute zero."""
    if counts.gt_total <= 0:
        raise ValueError("gt_total must be positive")
    switch_term = math.log10(counts.id_switches) if counts.id_switches > 0 else 0.0
    return 1.0 - (counts.fp + counts.fn + switch_term) / counts.gt_total


def micro_prf(counts: EvalCounts) -> tuple[float, float, float]:
    """Identity-aware micro precision, recall and F1; zero denominators give 0."""
    p = counts.i_tp / (counts.i_tp + counts.i_fp) if counts.i_tp + counts.i_fp else 0.0
    r = counts.i_tp / (counts.i_tp + counts.i_fn) if counts.i_tp + counts.i_fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def evaluate(trajectories: list[Trajectory], gt: GroundTruth,
             radius_cm: float = 100.0) -> EvalReport:
    counts = match_and_count(trajectories, gt, radius_cm)
    p, r, f1 = micro_prf(counts)
    return EvalReport(mota=mota(counts), micro_precision=p, micro_recall=r,
                      micro_f1=f1, counts=counts)
