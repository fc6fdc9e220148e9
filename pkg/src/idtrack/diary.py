"""Rule-based activity detection over trajectories and visual-diary rendering.

Detected activities: room changes (point-in-polygon transitions), sit-down /
stand-up (segments ending/starting near a seat), and static/dynamic pairwise
interactions (sustained proximity, split by mean speed). Events can be rendered
into a chronological textual diary with per-room timing statistics, and scored
against reference events with the snippet / frame-timing protocol.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from shapely.geometry import Point, Polygon

from .model import DataError, Trajectory

SEVEN_FEET_CM = 213.36
CORRIDOR = "corridor"

EVENT_KINDS = ("room_change", "sit_down", "stand_up",
               "static_interaction", "dynamic_interaction")
INTERACTION_KINDS = ("static_interaction", "dynamic_interaction")


@dataclass(frozen=True)
class SceneMap:
    """Named room polygons and seat disks, in floor-plane centimeters."""

    rooms: dict[str, Polygon]
    seats: dict[str, tuple[np.ndarray, float]]  # name -> (xy center, radius)

    def __post_init__(self):
        for name, poly in self.rooms.items():
            if not poly.is_valid or not poly.is_simple:
                raise DataError(f"room {name!r}: polygon must be simple and valid")
        seats = {}
        for name, (pos, radius) in self.seats.items():
            if radius <= 0:
                raise DataError(f"seat {name!r}: radius must be positive")
            seats[name] = (np.asarray(pos, dtype=float)[:2], float(radius))
        object.__setattr__(self, "seats", seats)

    def room_of(self, position: np.ndarray) -> str:
        """Containing room (boundary ties go to the lexicographically first room)."""
        p = Point(float(position[0]), float(position[1]))
        for name in sorted(self.rooms):
            if self.rooms[name].covers(p):
                return name
        return CORRIDOR


@dataclass(frozen=True)
class DiaryEvent:
    kind: str
    subject: int
    partner: Optional[int]
    frame_start: int
    frame_end: int
    location: str = ""
    description: str = ""

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise DataError(f"unknown event kind {self.kind!r}")
        if self.frame_start > self.frame_end:
            raise DataError("frame_start must be <= frame_end")
        if (self.partner is not None) != (self.kind in INTERACTION_KINDS):
            raise DataError("partner must be present exactly for interaction events")


def load_scene_map(path: str) -> SceneMap:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    rooms = {name: Polygon(coords) for name, coords in raw.get("rooms", {}).items()}
    seats = {name: (np.asarray(rec["pos"], dtype=float), float(rec["radius"]))
             for name, rec in raw.get("seats", {}).items()}
    return SceneMap(rooms=rooms, seats=seats)


def write_scene_map(scene: SceneMap, path: str) -> None:
    raw = {
        "rooms": {name: [list(xy) for xy in poly.exterior.coords[:-1]]
                  for name, poly in scene.rooms.items()},
        "seats": {name: {"pos": [float(v) for v in pos], "radius": radius}
                  for name, (pos, radius) in scene.seats.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(raw, fh, indent=2)


def write_events(events: list[DiaryEvent], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(json.dumps({"kind": e.kind, "subject": e.subject,
                                 "partner": e.partner, "f0": e.frame_start,
                                 "f1": e.frame_end, "room": e.location}) + "\n")


def load_events(path: str) -> list[DiaryEvent]:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            events.append(DiaryEvent(kind=rec["kind"], subject=int(rec["subject"]),
                                     partner=None if rec.get("partner") is None
                                     else int(rec["partner"]),
                                     frame_start=int(rec["f0"]), frame_end=int(rec["f1"]),
                                     location=rec.get("room", "")))
    return events


# ---------------------------------------------------------------------------
# Detection rules
# ---------------------------------------------------------------------------

def detect_room_changes(traj: Trajectory, scene: SceneMap) -> list[DiaryEvent]:
    """One event per change of containing room between consecutive samples."""
    events = []
    labels = [scene.room_of(p) for p in traj.positions]
    for i in range(1, len(labels)):
        if labels[i] != labels[i - 1]:
            f = int(traj.frames[i])
            events.append(DiaryEvent(kind="room_change", subject=traj.identity,
                                     partner=None, frame_start=f, frame_end=f,
                                     location=labels[i]))
    return events


def _nearest_seat(scene: SceneMap, position: np.ndarray) -> Optional[str]:
    hits = []
    for name, (pos, radius) in scene.seats.items():
        dist = float(np.linalg.norm(position[:2] - pos))
        if dist <= radius:
            hits.append((dist, name))
    return min(hits)[1] if hits else None


def detect_sit_stand(trajectories: list[Trajectory], scene: SceneMap) -> list[DiaryEvent]:
    """Segments ending near a seat emit sit_down; segments starting near one emit stand_up."""
    events = []
    for traj in trajectories:
        if len(traj) == 0:
            continue
        seat = _nearest_seat(scene, traj.positions[0])
        if seat is not None:
            f = int(traj.frames[0])
            events.append(DiaryEvent(kind="stand_up", subject=traj.identity, partner=None,
                                     frame_start=f, frame_end=f, location=seat))
        seat = _nearest_seat(scene, traj.positions[-1])
        if seat is not None:
            f = int(traj.frames[-1])
            events.append(DiaryEvent(kind="sit_down", subject=traj.identity, partner=None,
                                     frame_start=f, frame_end=f, location=seat))
    return events


def _frame_positions(trajectories: list[Trajectory], identity: int) -> dict[int, np.ndarray]:
    out: dict[int, np.ndarray] = {}
    for t in trajectories:
        if t.identity != identity:
            continue
        for f, p in zip(t.frames, t.positions):
            out[int(f)] = p
    return out


def detect_interactions(trajectories: list[Trajectory], fps: float,
                        D_prime_cm: float = SEVEN_FEET_CM,
                        T_prime_sec: float = 8.0,
                        speed_cmps: float = 20.0,
                        max_gap_frames: Optional[int] = None) -> list[DiaryEvent]:
    """Pairwise sustained-proximity intervals, split into static vs dynamic.

    For each identity pair, maximal runs of co-observed frames with distance
    below D_prime lasting at least T_prime seconds become one event; the event
    is dynamic when both participants' mean speeds over the run exceed
    speed_cmps, static otherwise. Runs also break when the identities go
    unobserved together for more than max_gap_frames (default: one second).
    """
    if max_gap_frames is None:
        max_gap_frames = max(1, int(round(fps)))
    identities = sorted({t.identity for t in trajectories})
    events = []
    for ai in range(len(identities)):
        for bi in range(ai + 1, len(identities)):
            a, b = identities[ai], identities[bi]
            pa = _frame_positions(trajectories, a)
            pb = _frame_positions(trajectories, b)
            common = sorted(set(pa) & set(pb))
            runs: list[list[int]] = []
            for f in common:
                if float(np.linalg.norm(pa[f] - pb[f])) >= D_prime_cm:
                    continue
                if runs and f - runs[-1][-1] <= max_gap_frames:
                    runs[-1].append(f)
                else:
                    runs.append([f])
            for run in runs:
                f0, f1 = run[0], run[-1]
                if (f1 - f0 + 1) / fps < T_prime_sec:
                    continue
                speeds = []
                for pmap in (pa, pb):
                    dist = sum(float(np.linalg.norm(pmap[run[i + 1]] - pmap[run[i]]))
                               for i in range(len(run) - 1))
                    speeds.append(dist / ((f1 - f0) / fps) if f1 > f0 else 0.0)
                kind = "dynamic_interaction" if all(s > speed_cmps for s in speeds) \
                    else "static_interaction"
                events.append(DiaryEvent(kind=kind, subject=a, partner=b,
                                         frame_start=f0, frame_end=f1))
    return events


def detect_all(trajectories: list[Trajectory], scene: SceneMap,
               fps: float) -> list[DiaryEvent]:
    events: list[DiaryEvent] = []
    for traj in trajectories:
        events.extend(detect_room_changes(traj, scene))
    events.extend(detect_sit_stand(trajectories, scene))
    events.extend(detect_interactions(trajectories, fps))
    return sorted(events, key=lambda e: (e.frame_start, e.kind, e.subject))


# ---------------------------------------------------------------------------
# Sitting intervals, statistics, rendering
# ---------------------------------------------------------------------------

def sitting_intervals(events: list[DiaryEvent], trajectories: list[Trajectory]
                      ) -> dict[int, list[tuple[int, int, str]]]:
    """Per identity: (start frame, end frame, seat) between a sit_down and the
    next stand_up at the same seat; unpaired sit_downs run to the last tracked frame."""
    last_frame: dict[int, int] = {}
    for t in trajectories:
        if len(t):
            last_frame[t.identity] = max(last_frame.get(t.identity, 0), int(t.frames[-1]))
    by_subject: dict[int, list[DiaryEvent]] = {}
    for e in events:
        if e.kind in ("sit_down", "stand_up"):
            by_subject.setdefault(e.subject, []).append(e)
    out: dict[int, list[tuple[int, int, str]]] = {}
    for subject, evs in by_subject.items():
        evs = sorted(evs, key=lambda e: e.frame_start)
        open_sit: Optional[DiaryEvent] = None
        intervals = []
        for e in evs:
            if e.kind == "sit_down" and open_sit is None:
                open_sit = e
            elif e.kind == "stand_up" and open_sit is not None \
                    and e.location == open_sit.location \
                    and e.frame_start >= open_sit.frame_start:
                intervals.append((open_sit.frame_start, e.frame_start, e.location))
                open_sit = None
        if open_sit is not None:
            end = max(last_frame.get(subject, open_sit.frame_start), open_sit.frame_start)
            intervals.append((open_sit.frame_start, end, open_sit.location))
        out[subject] = intervals
    return out


def diary_statistics(events: list[DiaryEvent], trajectories: list[Trajectory],
                     scene: SceneMap, fps: float) -> dict:
    """Per-identity upright/sitting seconds per room and total interaction seconds.

    Upright time attributes 1/fps seconds per trajectory sample to the sample's
    room; sitting time spans sit/stand intervals and is attributed to the seat's
    room.
    """
    stats: dict[int, dict] = {}
    for t in trajectories:
        rec = stats.setdefault(t.identity, {"upright": {}, "sitting": {}, "interaction_sec": 0.0})
        for p in t.positions:
            room = scene.room_of(p)
            rec["upright"][room] = rec["upright"].get(room, 0.0) + 1.0 / fps
    for subject, intervals in sitting_intervals(events, trajectories).items():
        rec = stats.setdefault(subject, {"upright": {}, "sitting": {}, "interaction_sec": 0.0})
        for f0, f1, seat in intervals:
            room = scene.room_of(scene.seats[seat][0]) if seat in scene.seats else CORRIDOR
            rec["sitting"][room] = rec["sitting"].get(room, 0.0) + (f1 - f0) / fps
    for e in events:
        if e.kind in INTERACTION_KINDS:
            span = (e.frame_end - e.frame_start + 1) / fps
            for who in (e.subject, e.partner):
                rec = stats.setdefault(who, {"upright": {}, "sitting": {}, "interaction_sec": 0.0})
                rec["interaction_sec"] += span
    return stats


def _clock(frame: int, fps: float) -> str:
    total = int(frame / fps)
    return f"{total // 3600}:{(total % 3600) // 60:02d}:{total % 60:02d}"


def _name(identity: int, names: Optional[dict[int, str]]) -> str:
    if names and identity in names:
        return names[identity]
    return f"person {identity}"


def describe(event: DiaryEvent, fps: float, names: Optional[dict[int, str]] = None) -> str:
    t0 = _clock(event.frame_start, fps)
    who = _name(event.subject, names)
    if event.kind == "room_change":
        return f"At {t0}, {who} entered {event.location}."
    if event.kind == "sit_down":
        return f"At {t0}, {who} sat down at {event.location}."
    if event.kind == "stand_up":
        return f"At {t0}, {who} stood up from {event.location}."
    other = _name(event.partner, names)
    t1 = _clock(event.frame_end, fps)
    if event.kind == "static_interaction":
        return f"From {t0} to {t1}, {who} interacted with {other}."
    return f"From {t0} to {t1}, {who} walked together with {other}."


def render_diary(events: list[DiaryEvent], trajectories: list[Trajectory],
                 scene: SceneMap, fps: float,
                 names: Optional[dict[int, str]] = None) -> tuple[str, dict]:
    """Chronological snippet text plus aggregate statistics.

    Returns (plain text document, statistics dict); snapshots are referenced as
    (frame) pointers since no video is attached.
    """
    ordered = sorted(events, key=lambda e: (e.frame_start, e.kind, e.subject))
    lines = ["VISUAL DIARY", "============", ""]
    for e in ordered:
        lines.append(f"[frame {e.frame_start}] " + describe(e, fps, names))
    stats = diary_statistics(events, trajectories, scene, fps)
    lines += ["", "Statistics", "----------"]
    for identity in sorted(stats):
        rec = stats[identity]
        lines.append(f"{_name(identity, names)}:")
        rooms = sorted(set(rec["upright"]) | set(rec["sitting"]))
        for room in rooms:
            up = rec["upright"].get(room, 0.0)
            sit = rec["sitting"].get(room, 0.0)
            lines.append(f"  {room}: {up:.1f}s upright, {sit:.1f}s sitting")
        lines.append(f"  total interaction time: {rec['interaction_sec']:.1f}s")
    return "\n".join(lines) + "\n", stats


# ---------------------------------------------------------------------------
# Frame timelines and evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameState:
    room: str
    state: str                      # "upright" | "sitting"
    partners: frozenset = frozenset()


def state_timeline(trajectories: list[Trajectory], events: list[DiaryEvent],
                   scene: SceneMap) -> dict[int, dict[int, FrameState]]:
    """Per identity, per frame: room, upright/sitting state and interaction partners."""
    timeline: dict[int, dict[int, FrameState]] = {}
    for t in trajectories:
        rec = timeline.setdefault(t.identity, {})
        for f, p in zip(t.frames, t.positions):
            rec[int(f)] = FrameState(room=scene.room_of(p), state="upright")
    for subject, intervals in sitting_intervals(events, trajectories).items():
        rec = timeline.setdefault(subject, {})
        for f0, f1, seat in intervals:
            room = scene.room_of(scene.seats[seat][0]) if seat in scene.seats else CORRIDOR
            for f in range(f0 + 1, f1):
                rec[f] = FrameState(room=room, state="sitting")
    for e in events:
        if e.kind not in INTERACTION_KINDS:
            continue
        for who, other in ((e.subject, e.partner), (e.partner, e.subject)):
            rec = timeline.setdefault(who, {})
            for f in range(e.frame_start, e.frame_end + 1):
                st = rec.get(f)
                if st is None:
                    continue
                rec[f] = FrameState(room=st.room, state=st.state,
                                    partners=st.partners | {other})
    return timeline


def write_timeline(timeline: dict[int, dict[int, FrameState]], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for identity in sorted(timeline):
            for f in sorted(timeline[identity]):
                st = timeline[identity][f]
                fh.write(json.dumps({"id": identity, "frame": f, "room": st.room,
                                     "state": st.state,
                                     "partners": sorted(st.partners)}) + "\n")


def load_timeline(path: str) -> dict[int, dict[int, FrameState]]:
    timeline: dict[int, dict[int, FrameState]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            timeline.setdefault(int(rec["id"]), {})[int(rec["frame"])] = FrameState(
                room=rec["room"], state=rec["state"],
                partners=frozenset(rec.get("partners", [])))
    return timeline


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


@dataclass(frozen=True)
class DiaryEvalReport:
    snippet: tuple[float, float, float]
    snippet_counts: tuple[int, int, int]        # tp, fp, fn
    room_state: tuple[float, float, float]
    interaction_timing: tuple[float, float, float]

    def to_json(self) -> str:
        return json.dumps({
            "snippet": {"precision": self.snippet[0], "recall": self.snippet[1],
                        "f1": self.snippet[2], "tp": self.snippet_counts[0],
                        "fp": self.snippet_counts[1], "fn": self.snippet_counts[2]},
            "room_state": {"precision": self.room_state[0], "recall": self.room_state[1],
                           "f1": self.room_state[2]},
            "interaction_timing": {"precision": self.interaction_timing[0],
                                   "recall": self.interaction_timing[1],
                                   "f1": self.interaction_timing[2]},
        })


def _pair(e: DiaryEvent) -> tuple[int, int]:
    return (min(e.subject, e.partner), max(e.subject, e.partner))


def evaluate_snippets(pred_events: list[DiaryEvent], gt_events: list[DiaryEvent],
                      fps: float, tol_sec: float = 5.0) -> tuple[int, int, int]:
    """Snippet true/false positive/negative counts.

    Sit/stand/room snippets match a same-kind same-subject reference within the
    time tolerance; interaction snippets match a same-pair reference covering
    more than half the predicted span. Each reference is consumed at most once,
    so fragmented predictions count one TP and the rest FP.
    """
    tp = 0
    consumed = [False] * len(gt_events)

    point_preds = [e for e in pred_events if e.kind not in INTERACTION_KINDS]
    for pe in sorted(point_preds, key=lambda e: (e.frame_start, e.kind, e.subject)):
        candidates = []
        for gi, ge in enumerate(gt_events):
            if consumed[gi] or ge.kind != pe.kind or ge.subject != pe.subject:
                continue
            dt = abs(pe.frame_start - ge.frame_start) / fps
            if dt < tol_sec:
                candidates.append((dt, gi))
        if candidates:
            consumed[min(candidates)[1]] = True
            tp += 1

    span_preds = [e for e in pred_events if e.kind in INTERACTION_KINDS]
    for pe in sorted(span_preds, key=lambda e: (e.frame_start, e.frame_end, e.subject)):
        span = pe.frame_end - pe.frame_start + 1
        candidates = []
        for gi, ge in enumerate(gt_events):
            if consumed[gi] or ge.kind not in INTERACTION_KINDS or _pair(ge) != _pair(pe):
                continue
            overlap = min(pe.frame_end, ge.frame_end) - max(pe.frame_start, ge.frame_start) + 1
            if overlap > 0.5 * span:
                candidates.append((-overlap, gi))
        if candidates:
            consumed[min(candidates)[1]] = True
            tp += 1

    fp = len(pred_events) - tp
    fn = len(gt_events) - tp
    return tp, fp, fn


def _timing_counts(pred: dict[int, dict[int, FrameState]],
                   gt: dict[int, dict[int, FrameState]]) -> tuple[tuple[int, int, int],
                                                                  tuple[int, int, int]]:
    rs_tp = rs_fp = rs_fn = 0
    it_tp = it_fp = it_fn = 0
    identities = set(pred) | set(gt)
    for q in identities:
        p_rec = pred.get(q, {})
        g_rec = gt.get(q, {})
        for f in set(p_rec) | set(g_rec):
            ps = p_rec.get(f)
            gs = g_rec.get(f)
            if ps is not None and gs is not None and ps.room == gs.room and ps.state == gs.state:
                rs_tp += 1
            else:
                if ps is not None:
                    rs_fp += 1
                if gs is not None:
                    rs_fn += 1
            p_partners = ps.partners if ps else frozenset()
            g_partners = gs.partners if gs else frozenset()
            it_tp += len(p_partners & g_partners)
            it_fp += len(p_partners - g_partners)
            it_fn += len(g_partners - p_partners)
    return (rs_tp, rs_fp, rs_fn), (it_tp, it_fp, it_fn)


def evaluate_diary(pred_events: list[DiaryEvent], gt_events: list[DiaryEvent],
                   fps: float,
                   pred_timeline: Optional[dict[int, dict[int, FrameState]]] = None,
                   gt_timeline: Optional[dict[int, dict[int, FrameState]]] = None,
                   tol_sec: float = 5.0) -> DiaryEvalReport:
    """Snippet scores plus (when timelines are given) frame-wise timing scores."""
    tp, fp, fn = evaluate_snippets(pred_events, gt_events, fps, tol_sec)
    if pred_timeline is not None and gt_timeline is not None:
        (rs_tp, rs_fp, rs_fn), (it_tp, it_fp, it_fn) = _timing_counts(pred_timeline, gt_timeline)
        room_state = _prf(rs_tp, rs_fp, rs_fn)
        interaction = _prf(it_tp, it_fp, it_fn)
    else:
        room_state = (0.0, 0.0, 0.0)
        interaction = (0.0, 0.0, 0.0)
    return DiaryEvalReport(snippet=_prf(tp, fp, fn), snippet_counts=(tp, fp, fn),
                           room_state=room_state, interaction_timing=interaction)
