#!/usr/bin/env python3
"""Watch the penalty schedule enforce mutual exclusion.

Starting from the closed-form label-propagation solution, the penalty weight
doubles every stage; the orthogonality violation ||F'F - J||_F collapses while
face-labeled rows stay clamped throughout.
"""
import numpy as np

from idtrack import synth
from idtrack.affinity import build_graphs
from idtrack.model import build_label_matrix
from idtrack.solver import estimate_class_sizes, initialize, solve

obs_set, gt, cfg = synth.preset("crossing")
graphs = build_graphs(obs_set, cfg)
Y, clamped = build_label_matrix(obs_set)

J = estimate_class_sizes(Y, len(obs_set), cfg.beta_per_1000)
print(f"class-size targets m: {np.round(J, 1)}  (labels per class + beta)")

F0 = initialize(graphs.L, graphs.K, Y, cfg.u_large)
print(f"initialization: ||F0'F0 - J||_F = {np.linalg.norm(F0.T @ F0 - np.diag(J)):.1f} "
      "(constraints ignored so far)")

F, trace = solve(graphs, Y, cfg)

print("\n   stage        tau          loss    ||F'F-J||_F   inner")
for rec in trace.records[::6] + [trace.records[-1]]:
    print(f"  {trace.records.index(rec):5d}   {rec.tau:9.2e}  {rec.loss:12.4e}  "
          f"{rec.violation:11.4e}  {rec.inner_iterations:5d}")

v = trace.violations()
print(f"\nviolation reduced {v[0] / v[-1]:.0f}x across the schedule")

# Rows end up near-binary: one dominant entry, the rest near zero.
srt = np.sort(F, axis=1)
assigned = srt[:, -1] > cfg.assign_threshold_theta
ratio = srt[assigned, -2] / srt[assigned, -1]
print(f"assigned rows: {assigned.sum()}/{len(obs_set)}; "
      f"second-largest / largest entry: median {np.median(ratio):.4f}, "
      f"99th pct {np.percentile(ratio, 99):.4f}")
print(f"clamped rows intact: {np.array_equal(F[clamped], Y[clamped].toarray())}")
