import csv
import io
import json

import numpy as np
import pytest

from edgefuse.bench import RunConfig, aggregate, run_session
from edgefuse.cli import main
from edgefuse.core.checkpoint import read_checkpoint, save_checkpoint
from edgefuse.events import frames_from_stream, load_stream


def synth(tmp_path, name="s", *extra):
    assert main(["synth", "--preset", "tiny", "--out", str(tmp_path), "--name", name, *extra]) == 0
    return tmp_path / f"{name}.evs"


def test_synth_deterministic(tmp_path):
    a = synth(tmp_path, "a")
    b = synth(tmp_path, "b")
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a_rgb.npy").read_bytes() == (tmp_path / "b_rgb.npy").read_bytes()


def test_synth_static_file(tmp_path):
    path = synth(tmp_path, "still", "--speed", "0")
    s = load_stream(path)
    frames = frames_from_stream(s.events, s.height, s.width, 10_000, 20)
    assert frames[0].n_events > 0 and all(f.n_events == 0 for f in frames[1:])


def test_synth_desk_sidecar(tmp_path):
    assert main(["synth", "--preset", "desk", "--frames", "30", "--out", str(tmp_path), "--name", "d"]) == 0
    side = json.loads((tmp_path / "d_truth.json").read_text())
    counts = [len(t) for t in side["active_patches"]]
    assert side["n_patches"] == 196
    assert 23 <= np.mean(counts) <= 36


def test_synth_bad_activity_exit_code(tmp_path, capsys):
    assert main(["synth", "--preset", "tiny", "--object", "flicker", "--activity", "0.3",
                 "--out", str(tmp_path)]) == 2
    assert "not achievable" in capsys.readouterr().err


def test_synth_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["synth", "--preset", "tiny", "--out", str(blocker / "sub")]) == 2


def run(tmp_path, name, *extra):
    code = main(["run", "--synth", "tiny", "--frames", "6", "--out", str(tmp_path), "--name", name, *extra])
    return code, tmp_path / f"{name}.json", tmp_path / f"{name}.csv"


def test_run_reports_byte_identical(tmp_path):
    _, j1, c1 = run(tmp_path / "one", "r")
    _, j2, c2 = run(tmp_path / "two", "r")
    assert j1.read_bytes() == j2.read_bytes() and c1.read_bytes() == c2.read_bytes()


def test_report_schema_and_recomputable_aggregates(tmp_path):
    code, jp, cp = run(tmp_path, "r")
    assert code == 0
    doc = json.loads(jp.read_text())
    assert doc["report_version"] == 1 and doc["config"]["mode"] == "sttf"
    assert "out_dir" not in doc["config"]
    assert doc["aggregates"] == aggregate(doc["frames"], doc["aggregates"]["n_patches"], "dense")
    for r in doc["frames"]:
        assert r["flops_total"] == sum(r["flops"].values())
    rows = list(csv.DictReader(io.StringIO(cp.read_text())))
    assert len(rows) == len(doc["frames"])
    for row, rec in zip(rows, doc["frames"]):
        assert int(row["active_tokens"]) == rec["active_tokens"]
        assert int(row["flops.sparse_encoder"]) == rec["flops"]["sparse_encoder"]
        assert row["y_hat"] == " ".join(str(t) for t in rec["y_hat"])


def test_dense_baseline_full_grid(tmp_path):
    rep = run_session(RunConfig(mode="dense-baseline", synth="desk", frames=3))
    assert all(r["active_tokens"] == 196 for r in rep.records)
    assert rep.aggregates["flops_reduction_pct"] == 0.0


def test_static_stream_has_no_encoder_flops():
    rep = run_session(RunConfig(synth="tiny", frames=5, speed=0.0))
    assert rep.records[0]["flops"]["sparse_encoder"] > 0
    assert all(r["flops"]["sparse_encoder"] == 0 for r in rep.records[1:])


def test_anc_report_fields(tmp_path):
    code, jp, cp = run(tmp_path, "a", "--mode", "anc")
    assert code == 0
    doc = json.loads(jp.read_text())
    r = doc["frames"][0]
    assert {"w", "p", "F", "active", "level"} <= set(r)
    assert r["F"] == sum(r["flops"].values())
    assert doc["aggregates"]["baseline"] == "medium-only"
    header = cp.read_text().splitlines()[0].split(",")
    assert {"w.0", "w.1", "w.2", "F"} <= set(header)


def test_run_from_config_file_with_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("mode = anc\nsynth = tiny\nframes = 2\nbudget = 0.25\n")
    assert main(["run", "--config", str(cfg), "--budget", "0.75", "--out", str(tmp_path), "--name", "c"]) == 0
    doc = json.loads((tmp_path / "c.json").read_text())
    assert doc["config"]["budget"] == 0.75 and doc["config"]["mode"] == "anc"


def test_run_stream_file_and_env_out(tmp_path, monkeypatch):
    path = synth(tmp_path, "s")
    out = tmp_path / "envout"
    monkeypatch.setenv("EDGEFUSE_OUT", str(out))
    assert main(["run", "--stream", str(path), "--rgb", str(tmp_path / "s_rgb.npy"), "--patch-size", "8",
                 "--frames", "4", "--name", "f"]) == 0
    assert json.loads((out / "f.json").read_text())["aggregates"]["frames"] == 4


@pytest.mark.parametrize("argv", [
    ["run", "--frames", "2"],  # no source
    ["run", "--synth", "tiny", "--stream", "x.evs"],
    ["run", "--synth", "tiny", "--patch-size", "7"],
    ["run", "--config", "/nonexistent.cfg"],
    ["run", "--synth", "tiny", "--mode", "anc", "--branches", "a:1"],
])
def test_run_config_errors_exit_2(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path)]) == 2


def test_run_checkpoint_mismatch(tmp_path):
    bad = tmp_path / "bad.tgvm"
    bad.write_bytes(save_checkpoint({"nope": np.zeros(2, np.float32)}))
    assert main(["run", "--synth", "tiny", "--frames", "1", "--checkpoint", str(bad), "--out", str(tmp_path)]) == 2


def test_verify_subset_passes(capsys):
    assert main(["verify", "--only", "cache_exactness", "dense_equivalence"]) == 0
    out = capsys.readouterr().out
    assert "PASS  dense_equivalence" in out and "tolerance" in out


def test_verify_unknown_check():
    assert main(["verify", "--only", "nonsense"]) == 2


def test_verify_corrupt_checkpoint(tmp_path, capsys):
    bad = tmp_path / "c.tgvm"
    bad.write_bytes(b"TGVM\x01\x00\x00\x00\x05\x00\x00\x00ab")
    assert main(["verify", "--checkpoint", str(bad), "--only", "format_roundtrips"]) == 1
    assert "corrupt" in capsys.readouterr().out


def test_train_writes_outputs(tmp_path):
    assert main(["train", "--steps", "3", "--out", str(tmp_path), "--name", "t"]) == 0
    lines = (tmp_path / "t_metrics.jsonl").read_text().splitlines()
    assert len(lines) == 3 and json.loads(lines[-1])["step"] == 2
    assert "fc1.weight" in read_checkpoint(tmp_path / "t.tgvm")
