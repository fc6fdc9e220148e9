import hashlib
import json
import os

import numpy as np
import pytest

from idtrack.cli import main
from idtrack import model, synth
from idtrack.diary import write_events, write_scene_map

from diary_fixture import expected_events, scene_map, scripted_trajectories


def digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


@pytest.fixture(scope="module")
def crossing_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("crossing")
    rc = main(["synth", "--preset", "crossing", "--seed", "7", "--out-dir", str(out)])
    assert rc == 0
    return out


class TestSynthCommand:
    def test_outputs_exist(self, crossing_dir):
        for name in ("detections.jsonl", "groundtruth.jsonl", "config.json", "manifest.json"):
            assert (crossing_dir / name).is_file()

    def test_same_seed_identical_digests(self, crossing_dir, tmp_path):
        rc = main(["synth", "--preset", "crossing", "--seed", "7", "--out-dir", str(tmp_path)])
        assert rc == 0
        assert digest(tmp_path / "detections.jsonl") == digest(crossing_dir / "detections.jsonl")
        assert digest(tmp_path / "groundtruth.jsonl") == digest(crossing_dir / "groundtruth.jsonl")

    def test_scenario_file(self, tmp_path):
        scenario = {"num_agents": 2, "duration_frames": 20, "false_positive_rate": 0.2}
        spath = tmp_path / "scenario.json"
        spath.write_text(json.dumps(scenario))
        rc = main(["synth", "--scenario", str(spath), "--seed", "3",
                   "--out-dir", str(tmp_path / "out")])
        assert rc == 0
        obs_set = model.load_detections(str(tmp_path / "out" / "detections.jsonl"))
        assert obs_set.num_identities == 2

    def test_requires_preset_or_scenario(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--out-dir", "/tmp/x"])
        assert exc.value.code == 2


class TestTrackCommand:
    def test_end_to_end_crossing(self, crossing_dir, tmp_path):
        rc = main(["track", "--detections", str(crossing_dir / "detections.jsonl"),
                   "--config", str(crossing_dir / "config.json"),
                   "--out-dir", str(tmp_path)])
        assert rc == 0
        trajs = model.load_trajectories(str(tmp_path / "trajectories.jsonl"))
        assert {t.identity for t in trajs} == {0, 1}
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "track"
        assert "detections" in manifest["inputs"]
        assert manifest["config"]["k"] == 25
        trace_lines = (tmp_path / "trace.jsonl").read_text().splitlines()
        rec = json.loads(trace_lines[0])
        assert set(rec) == {"tau", "loss", "viol", "iters"}

    def test_missing_input_exit_2(self, capsys, tmp_path):
        rc = main(["track", "--detections", str(tmp_path / "nope.jsonl"),
                   "--out-dir", str(tmp_path)])
        assert rc == 2
        assert "nope.jsonl" in capsys.readouterr().err

    def test_opt_overrides(self, crossing_dir, tmp_path):
        rc = main(["track", "--detections", str(crossing_dir / "detections.jsonl"),
                   "--config", str(crossing_dir / "config.json"),
                   "--opt", "gap_frames=25", "--out-dir", str(tmp_path)])
        assert rc == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["config"]["gap_frames"] == 25

    def test_unknown_opt_rejected(self, crossing_dir, tmp_path, capsys):
        rc = main(["track", "--detections", str(crossing_dir / "detections.jsonl"),
                   "--opt", "bogus_key=1", "--out-dir", str(tmp_path)])
        assert rc == 2

    def test_no_slc_flag_recorded(self, crossing_dir, tmp_path):
        rc = main(["track", "--detections", str(crossing_dir / "detections.jsonl"),
                   "--config", str(crossing_dir / "config.json"),
                   "--no-slc", "--out-dir", str(tmp_path)])
        assert rc == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["flags"]["no_slc"] is True

    def test_input_files_not_mutated(self, crossing_dir, tmp_path):
        before = digest(crossing_dir / "detections.jsonl")
        main(["track", "--detections", str(crossing_dir / "detections.jsonl"),
              "--config", str(crossing_dir / "config.json"), "--out-dir", str(tmp_path)])
        assert digest(crossing_dir / "detections.jsonl") == before


class TestEvalCommand:
    def test_gt_against_itself_mota_one(self, crossing_dir, tmp_path, capsys):
        gt = model.load_ground_truth(str(crossing_dir / "groundtruth.jsonl"))
        trajs = []
        for q in np.unique(gt.identities):
            sel = gt.identities == q
            trajs.append(model.Trajectory(
                identity=int(q), frames=gt.frames[sel],
                positions=gt.positions[sel], weights=np.ones(int(sel.sum()))))
        tpath = tmp_path / "perfect.jsonl"
        model.write_trajectories(trajs, str(tpath))
        rc = main(["eval", "--trajectories", str(tpath),
                   "--ground-truth", str(crossing_dir / "groundtruth.jsonl"),
                   "--out-dir", str(tmp_path)])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["mota"] == 1.0
        assert report["micro_f1"] == 1.0

    def test_csv_flag(self, crossing_dir, tmp_path, capsys):
        gt = model.load_ground_truth(str(crossing_dir / "groundtruth.jsonl"))
        trajs = [model.Trajectory(identity=0, frames=np.array([0, 1, 2]),
                                  positions=np.zeros((3, 3)), weights=np.ones(3))]
        tpath = tmp_path / "t.jsonl"
        model.write_trajectories(trajs, str(tpath))
        rc = main(["eval", "--trajectories", str(tpath),
                   "--ground-truth", str(crossing_dir / "groundtruth.jsonl"),
                   "--csv", "--out-dir", str(tmp_path)])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("mota,")
        assert len(lines[1].split(",")) == len(lines[0].split(","))


class TestDiaryCommands:
    def test_diary_and_eval_round_trip(self, tmp_path, capsys):
        trajs = scripted_trajectories()
        model.write_trajectories(trajs, str(tmp_path / "trajs.jsonl"))
        write_scene_map(scene_map(), str(tmp_path / "map.json"))
        rc = main(["diary", "--trajectories", str(tmp_path / "trajs.jsonl"),
                   "--map", str(tmp_path / "map.json"), "--fps", "10",
                   "--out-dir", str(tmp_path / "diary")])
        assert rc == 0
        for name in ("events.jsonl", "timeline.jsonl", "diary.txt", "diary.json", "manifest.json"):
            assert (tmp_path / "diary" / name).is_file()
        write_events(expected_events(), str(tmp_path / "gt_events.jsonl"))
        rc = main(["diary-eval", "--events", str(tmp_path / "diary" / "events.jsonl"),
                   "--gt-events", str(tmp_path / "gt_events.jsonl"),
                   "--timeline", str(tmp_path / "diary" / "timeline.jsonl"),
                   "--gt-timeline", str(tmp_path / "diary" / "timeline.jsonl"),
                   "--fps", "10", "--out-dir", str(tmp_path / "de")])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["snippet"]["f1"] == 1.0
        assert report["room_state"]["f1"] == 1.0

    def test_two_agent_interaction_fixture(self, tmp_path, capsys):
        frames = np.arange(0, 100)
        a = model.Trajectory(identity=0, frames=frames,
                             positions=np.tile([100.0, 100.0, 0.0], (100, 1)),
                             weights=np.ones(100))
        b = model.Trajectory(identity=1, frames=frames,
                             positions=np.tile([250.0, 100.0, 0.0], (100, 1)),
                             weights=np.ones(100))
        model.write_trajectories([a, b], str(tmp_path / "t.jsonl"))
        write_scene_map(scene_map(), str(tmp_path / "map.json"))
        rc = main(["diary", "--trajectories", str(tmp_path / "t.jsonl"),
                   "--map", str(tmp_path / "map.json"), "--fps", "10",
                   "--out-dir", str(tmp_path / "out")])
        assert rc == 0
        events = [json.loads(l) for l in (tmp_path / "out" / "events.jsonl").read_text().splitlines()]
        kinds = [e["kind"] for e in events]
        assert kinds.count("static_interaction") == 1


class TestVersionFlag:
    def test_version_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
