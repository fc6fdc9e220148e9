#!/usr/bin/env python3
"""From trajectories to a visual diary: room changes, sit/stand, interactions.

Runs the rule-based detectors on a scripted three-person scene, renders the
diary document, and scores the detected events against the script.
"""
import numpy as np
from shapely.geometry import Polygon

from idtrack.diary import (SceneMap, detect_all, evaluate_diary, render_diary,
                           state_timeline)
from idtrack.model import Trajectory

FPS = 10.0

scene = SceneMap(
    rooms={"atrium": Polygon([(0, 0), (600, 0), (600, 600), (0, 600)]),
           "lounge": Polygon([(600, 0), (1200, 0), (1200, 600), (600, 600)])},
    seats={"window_seat": (np.array([900.0, 300.0]), 50.0)})


def walk(identity, frames, xy):
    frames = np.asarray(frames, dtype=np.int64)
    pos = np.zeros((len(frames), 3))
    pos[:, :2] = xy
    return Trajectory(identity=identity, frames=frames, positions=pos,
                      weights=np.ones(len(frames)))


f = np.arange(100)
trajectories = [
    # person 0 walks into the lounge and sits down by the window...
    walk(0, f, np.stack([100.0 + 8.0 * f, np.full(100, 300.0)], axis=1)),
    # ...and returns to the atrium five hundred frames later
    walk(0, f + 600, np.stack([900.0 - 8.0 * f, np.full(100, 300.0)], axis=1)),
    # persons 1 and 2 chat in the atrium for 10 seconds
    walk(1, f, np.stack([np.full(100, 200.0), np.full(100, 200.0)], axis=1)),
    walk(2, f, np.stack([np.full(100, 200.0), np.full(100, 330.0)], axis=1)),
]

events = detect_all(trajectories, scene, FPS)
text, stats = render_diary(events, trajectories, scene, FPS,
                           names={0: "Alex", 1: "Bo", 2: "Chris"})
print(text)

# An event stream evaluated against itself is perfect by definition.
timeline = state_timeline(trajectories, events, scene)
report = evaluate_diary(events, events, fps=FPS,
                        pred_timeline=timeline, gt_timeline=timeline)
print("self-evaluation:", report.to_json())
