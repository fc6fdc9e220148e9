#!/usr/bin/env python3
"""Score a tracking run: MOTA (log10 switch variant) and identity-aware micro P/R/F1.

A detection within 1 m of the annotation is a geometric hit; the identity-aware
counts additionally require the predicted identity to match, which is what the
micro precision/recall/F1 summarize.
"""
from idtrack import synth
from idtrack.affinity import build_graphs
from idtrack.metrics import EvalCounts, evaluate, micro_prf, mota
from idtrack.model import build_label_matrix
from idtrack.solver import solve
from idtrack.trajectories import form_trajectories

# The MOTA variant penalizes identity switches only logarithmically:
counts = EvalCounts(tp=646, fp=284, fn=24708, id_switches=5, gt_total=25354)
print(f"sparse-labels-only counts -> MOTA {mota(counts):.3f} "
      "(few switches barely matter; misses dominate)")
counts = EvalCounts(tp=21370, fp=1783, fn=3873, id_switches=116, gt_total=25243)
print(f"full-tracker counts       -> MOTA {mota(counts):.3f}")

counts = EvalCounts(i_tp=50, i_fp=50, i_fn=150)
p, r, f1 = micro_prf(counts)
print(f"\nidentity-aware counts (50 right, 50 wrong, 150 missed): "
      f"P={p:.2f} R={r:.2f} F1={f1:.3f}")

# End to end on a synthetic scene with occlusion gaps.
obs_set, gt, cfg = synth.preset("longgap")
graphs = build_graphs(obs_set, cfg)
Y, clamped = build_label_matrix(obs_set)
F, _ = solve(graphs, Y, cfg)
trajs = form_trajectories(F, obs_set, cfg, clamped)
report = evaluate(trajs, gt)
print(f"\nlonggap preset ({len(obs_set)} detections, occlusion windows, "
      f"{(obs_set.face_labels >= 0).sum()} labels):")
print("  " + report.to_json())
