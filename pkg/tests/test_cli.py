import json

import pytest
from click.testing import CliRunner

from asp.agent import EpisodeLog
from asp.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def test_run_template_prints_score(runner):
    res = runner.invoke(main, ["run", "--scene", "desk-bell"])
    assert res.exit_code == 0, res.output
    assert res.output.startswith("score=1.00 outcome=finished")


def test_run_scene_file_and_log(runner, tmp_path):
    scene = tmp_path / "s.json"
    res = runner.invoke(main, ["scene", "--template", "tabletop-pick", "--seed", "4",
                               "--out", str(scene)])
    assert res.exit_code == 0
    assert json.loads(scene.read_text())["template"] == "tabletop-pick"
    log = tmp_path / "ep.jsonl"
    res = runner.invoke(main, ["run", "--scene", str(scene), "--seed", "4", "--log", str(log)])
    assert res.exit_code == 0, res.output
    ep = EpisodeLog.read(log)
    assert ep.header["scene_seed"] == 4
    assert ep.score == 1.0


def test_run_log_to_stdout_is_jsonl(runner):
    res = runner.invoke(main, ["run", "--scene", "keyboard", "--no-aff", "--log", "-"])
    assert res.exit_code == 0
    records = [json.loads(line) for line in res.output.splitlines()]
    assert records[0]["no_aff"] is True
    assert records[-1]["type"] == "summary"


def test_run_with_noise_file(runner, tmp_path):
    noise = tmp_path / "noise.json"
    noise.write_text(json.dumps({"p_oversegment": 0.5}))
    res = runner.invoke(main, ["run", "--scene", "clutter", "--noise", str(noise), "--log", "-"])
    assert res.exit_code == 0
    assert json.loads(res.output.splitlines()[0])["noise"]["p_oversegment"] == 0.5


def test_run_rejects_bad_input(runner, monkeypatch):
    res = runner.invoke(main, ["run", "--scene", "spaceship"])
    assert res.exit_code != 0 and "neither a scene file nor a template" in res.output
    res = runner.invoke(main, ["run", "--scene", "desk-bell", "--mode", "mobile"])
    assert res.exit_code != 0 and "tabletop scene" in res.output
    monkeypatch.delenv("ASP_BACKEND_URL", raising=False)
    res = runner.invoke(main, ["run", "--scene", "desk-bell", "--backend", "external"])
    assert res.exit_code != 0 and "ASP_BACKEND_URL" in res.output


def test_batch_table_and_json(runner, tmp_path):
    suite = tmp_path / "suite.json"
    suite.write_text(json.dumps({"seeds": 2, "tasks": [{"template": "desk-bell"},
                                                       {"template": "thumbtack",
                                                        "no_aff": True}]}))
    res = runner.invoke(main, ["batch", "--suite", str(suite)])
    assert res.exit_code == 0, res.output
    lines = res.output.strip().splitlines()
    assert lines[1].split() == ["desk-bell", "2", "1.000"]
    assert lines[2].split() == ["thumbtack", "(no-aff)", "2", "0.000"]
    res = runner.invoke(main, ["batch", "--suite", str(suite), "--json"])
    rows = json.loads(res.output)
    assert [r["mean"] for r in rows] == [1.0, 0.0]


def test_batch_empty_suite(runner, tmp_path):
    suite = tmp_path / "suite.json"
    suite.write_text(json.dumps({"tasks": []}))
    res = runner.invoke(main, ["batch", "--suite", str(suite)])
    assert res.exit_code != 0 and "no tasks" in res.output


def test_render_tabletop(runner, tmp_path):
    out = tmp_path / "img"
    res = runner.invoke(main, ["render", "--scene", "mug-handle", "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "img.pgm").read_bytes().startswith(b"P5")
    doc = json.loads((tmp_path / "img.map.json").read_text())
    assert doc
    res = runner.invoke(main, ["render", "--scene", "mug-handle", "--nav", "--out", str(out)])
    assert res.exit_code != 0 and "mobile" in res.output


def test_render_mobile_with_nav(runner, tmp_path):
    out = tmp_path / "room"
    res = runner.invoke(main, ["render", "--scene", "mobile-room", "--nav", "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert res.output.startswith("goal=")
    assert (tmp_path / "room.nav.pgm").read_bytes().startswith(b"P5")


def test_manifest(runner):
    res = runner.invoke(main, ["manifest", "--mode", "mobile"])
    names = [t["name"] for t in json.loads(res.output)]
    assert "go_to" in names and "object_retrieval" in names


def test_replay_roundtrip(runner, tmp_path):
    log = tmp_path / "ep.jsonl"
    runner.invoke(main, ["run", "--scene", "drawer", "--seed", "2", "--log", str(log)])
    res = runner.invoke(main, ["replay", str(log)])
    assert res.exit_code == 0, res.output
    assert res.output.startswith("identical")
    lines = log.read_text().splitlines()
    rec = json.loads(lines[1])
    rec["feedback"] = "tampered"
    lines[1] = json.dumps(rec, sort_keys=True, separators=(",", ":"))
    log.write_text("\n".join(lines) + "\n")
    res = runner.invoke(main, ["replay", str(log)])
    assert res.exit_code != 0 and "differs" in res.output


def test_replay_custom_scene_file(runner, tmp_path):
    scene = tmp_path / "s.json"
    runner.invoke(main, ["scene", "--template", "desk-bell", "--seed", "1", "--out", str(scene)])
    log = tmp_path / "ep.jsonl"
    runner.invoke(main, ["run", "--scene", str(scene), "--seed", "1", "--log", str(log)])
    res = runner.invoke(main, ["replay", str(log), "--scene", str(scene)])
    assert res.exit_code == 0, res.output
