import json

import pytest

from unsupfg import cli, config, pipeline
from unsupfg.dataset import read_manifest, write_manifest

SMALL = [
    "--synth.frames", "10", "--synth.videos", "2", "--synth.test_videos", "1",
    "--synth.frame_w", "64", "--synth.frame_h", "64",
]


def test_usage_errors(capsys):
    assert cli.run(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err
    assert cli.run(["select", "--bogus", "1"]) == 1
    assert cli.run(["synth", "--out", "x", "--nosuch.key", "1"]) == 1
    assert cli.run(["synth", "--out", "x", "--synth.frames", "many"]) == 1
    assert cli.run(["synth", "--out", "x", "--synth.frames"]) == 1
    assert cli.run(["--help"]) == 0


def test_missing_inputs_are_validation_errors(tmp_path):
    assert cli.run(["teach", "--manifest", str(tmp_path / "none.jsonl"), "--out", str(tmp_path)]) == 1
    assert cli.run(["pipeline", "--config", str(tmp_path / "none.cfg")]) == 1


def test_runtime_failure_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(pipeline, "synth_stage", boom)
    assert cli.run(["synth", "--out", str(tmp_path)]) == 2


def test_config_file_and_overrides(tmp_path):
    cfg_path = tmp_path / "desk.cfg"
    cfg_path.write_text("[synth]\nframes = 9  # short\nobject_color = 250,10,10\n[select]\nkeep_fraction = 0.2\n")
    cfg = config.load(cfg_path, {"synth.frames": "11", "run.seed": "7"})
    assert cfg.synth.frames == 11 and cfg.synth.object_color == (250, 10, 10)
    assert cfg.select.keep_fraction == 0.2
    assert cfg.synth.seed == cfg.train.seed == 7
    # as_text is a loadable config describing the same run
    again = tmp_path / "again.cfg"
    again.write_text(cfg.as_text())
    assert config.load(again) == cfg
    cfg_path.write_text("[synth]\nframes = 1\n")
    with pytest.raises(config.ConfigError):
        config.load(cfg_path)
    cfg_path.write_text("[nosuch]\na = 1\n")
    with pytest.raises(config.ConfigError):
        config.load(cfg_path)


def test_stages_through_cli(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    assert cli.run(["synth", "--out", str(corpus), *SMALL]) == 0
    train = corpus / "train.jsonl"
    assert len(read_manifest(train)) == 20

    assert cli.run(["teach", "--manifest", str(train), "--out", str(tmp_path / "t"), "--workers", "2"]) == 0
    taught = read_manifest(tmp_path / "t" / "teach.jsonl")
    assert [e.key for e in taught] == [e.key for e in read_manifest(train)]

    out = tmp_path / "sel" / "all.jsonl"
    assert cli.run(["select", "--manifest", str(tmp_path / "t" / "teach.jsonl"), "--out", str(out), "--keep-fraction", "1.0"]) == 0
    selected = read_manifest(out)
    assert sorted(e.key for e in selected) == sorted(e.key for e in taught)
    scores = [e.score for e in selected]
    assert scores == sorted(scores, reverse=True)

    assert cli.run(["augment", "--manifest", str(out), "--out", str(tmp_path / "aug"), "--n-random", "1"]) == 0
    assert len(read_manifest(tmp_path / "aug" / "augmented.jsonl")) == 40

    assert cli.run(["eval", "--manifest", str(tmp_path / "t" / "teach.jsonl"), "--metric", "maxf"]) == 0
    assert "mean" in capsys.readouterr().out


def test_eval_corloc_of_ground_truth_is_one(tmp_path):
    corpus = tmp_path / "corpus"
    assert cli.run(["synth", "--out", str(corpus), *SMALL]) == 0
    entries = read_manifest(corpus / "test.jsonl")
    for e in entries:
        e.extra["boxes"] = [e.gt_box.as_list()]
    write_manifest(entries, corpus / "gt_boxes.jsonl")
    report = tmp_path / "r.json"
    assert cli.run(["eval", "--manifest", str(corpus / "gt_boxes.jsonl"), "--metric", "corloc", "--out", str(report)]) == 0
    (r,) = json.loads(report.read_text())
    assert r["mean"] == 1.0 and r["metric"] == "corloc"


def test_eval_corloc_needs_boxes(tmp_path):
    corpus = tmp_path / "corpus"
    cli.run(["synth", "--out", str(corpus), *SMALL])
    assert cli.run(["eval", "--manifest", str(corpus / "test.jsonl"), "--metric", "corloc"]) == 1


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_pipeline_deterministic_and_worker_independent(tmp_path):
    args = [*SMALL, "--train.steps", "3", "--train.batch_size", "2", "--augment.n_random", "1", "--select.keep_fraction", "0.5"]
    runs = []
    for name, workers in (("a", "1"), ("b", "1"), ("c", "3")):
        assert cli.run(["pipeline", "--out", str(tmp_path / name), "--seed", "7", "--workers", workers, *args]) == 0
        tree = _tree(tmp_path / name)
        tree.pop("config.cfg")  # echoes the worker count
        runs.append(tree)
    assert runs[0] == runs[1] == runs[2]
    assert "train/student.usfg" in runs[0] and "reports/student_maxf.json" in runs[0]
