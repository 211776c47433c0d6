import hashlib
import json

import numpy as np
import pytest

from neurowideband.cli import SECTIONS, build_parser, main
from neurowideband.config import DEFAULTS, flatten
from neurowideband.formats import load_records

TRAIN = ["--model.model_dim", "16", "--model.num_blocks", "1", "--model.num_heads", "2",
         "--model.embed_dim", "8", "--model.timestep_embed_dim", "8", "--model.mlp_ratio", "2",
         "--schedule.timesteps", "10", "--training.total_steps", "8", "--training.batch_size", "8",
         "--training.subband_augment", "2", "--training.warmup_epochs", "1"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), (json.loads(err) if err.strip() else None)


def tree_hash(path):
    h = hashlib.sha256()
    for f in sorted(p for p in path.rglob("*") if p.is_file()):
        h.update(f.relative_to(path).as_posix().encode())
        h.update(f.read_bytes())
    return h.hexdigest()


def test_every_config_key_has_a_flag():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    flags = set()
    for name, p in sub.choices.items():
        flags |= {s for a in p._actions for s in a.option_strings}
    for key in flatten(DEFAULTS):
        assert f"--{key}" in flags, key
    covered = {s for secs in SECTIONS.values() for s in secs}
    assert covered == {k for k, v in DEFAULTS.items() if isinstance(v, dict)}


def test_pipeline(tmp_path, capsys):
    code, res, _ = run(capsys, "simulate", "--out", tmp_path / "d.nwbd", "--simulation.num_subcarriers", 32,
                       "--simulation.num_frames", 24, "--seed", 1)
    assert code == 0 and res["records"] == 24
    code, res, _ = run(capsys, "make-dataset", "--input", tmp_path / "d.nwbd", "--out", tmp_path / "ds",
                       "--narrow-k", 2)
    assert code == 0 and res["train"] + res["test"] == 24
    code, res, _ = run(capsys, "train", "--input", tmp_path / "ds/train.nwbd", "--out", tmp_path / "run",
                       "--plots", *TRAIN)
    assert code == 0 and res["steps"] == 8 and (tmp_path / "run/loss.png").exists()
    code, res, _ = run(capsys, "extrapolate", "--input", tmp_path / "ds/test_inputs.nwbd", "--k", 2,
                       "--checkpoint", tmp_path / "run/model", "--out", tmp_path / "e.nwbd")
    assert code == 0
    assert all(len(r.frame) == 32 for r in load_records(tmp_path / "e.nwbd"))
    code, res, _ = run(capsys, "eval", "--truth", tmp_path / "ds/test.nwbd", "--ecsi", tmp_path / "e.nwbd",
                       "--out", tmp_path / "ev", "--plots")
    assert code == 0
    assert (tmp_path / "ev/metrics.csv").read_text().startswith("k,metric,median,p10,p90")
    assert (tmp_path / "ev/metrics_cdf.png").exists()
    code, res, _ = run(capsys, "tof", "--input", tmp_path / "ds/test.nwbd", "--out", tmp_path / "tof")
    assert code == 0
    header = (tmp_path / "tof/tof.csv").read_text().splitlines()[0]
    assert header.split(",")[:4] == ["index", "label", "timestamp", "tof_s"]


def test_training_reproducible(tmp_path, capsys):
    run(capsys, "simulate", "--out", tmp_path / "d.nwbd", "--simulation.num_subcarriers", 32,
        "--simulation.num_frames", 16)
    hashes = []
    for name in ("a", "b"):
        code, _, _ = run(capsys, "train", "--input", tmp_path / "d.nwbd", "--out", tmp_path / name, *TRAIN)
        assert code == 0
        hashes.append(tree_hash(tmp_path / name / "model"))
    assert hashes[0] == hashes[1]


def test_flag_overrides_config_file(tmp_path, capsys):
    (tmp_path / "c.yaml").write_text("simulation:\n  num_frames: 5\n  num_subcarriers: 16\n")
    code, res, _ = run(capsys, "simulate", "--config", tmp_path / "c.yaml", "--out", tmp_path / "d.jsonl",
                       "--simulation.num_frames", 3)
    assert code == 0 and res["records"] == 3
    assert len(load_records(tmp_path / "d.jsonl")[0].frame) == 16


def test_error_reports(tmp_path, capsys):
    (tmp_path / "c.yaml").write_text("simulation:\n  nmu_frames: 5\n")
    code, _, err = run(capsys, "simulate", "--config", tmp_path / "c.yaml", "--out", tmp_path / "x.nwbd")
    assert code == 2 and err["error"] == "ConfigError" and err["details"][0]["path"] == "simulation"
    code, _, err = run(capsys, "tof", "--input", tmp_path / "missing.nwbd", "--out", tmp_path / "t")
    assert code == 1 and err["module"] == "csi-data"
    code, _, err = run(capsys, "extrapolate", "--input", tmp_path / "c.yaml", "--k", 2,
                       "--checkpoint", tmp_path, "--out", tmp_path / "e.nwbd")
    assert code == 1 and "module" in err
    with pytest.raises(SystemExit) as info:
        main(["simulate"])
    assert info.value.code == 2


def test_breath_command(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", "--out", tmp_path / "b.nwbd", "--simulation.scene", "breathing",
                     "--simulation.num_subcarriers", 512, "--simulation.duration_s", 20)
    assert code == 0
    code, res, _ = run(capsys, "breath", "--input", tmp_path / "b.nwbd", "--out", tmp_path / "br", "--plots")
    assert code == 0
    data = json.loads((tmp_path / "br/breath.json").read_text())
    rates = [np.median(p["bpm"]) for p in data["paths"]]
    assert len(rates) == 3 and all(abs(r - 15) <= 1 for r in rates)
    code, _, err = run(capsys, "simulate", "--out", tmp_path / "n.nwbd", "--simulation.scene", "breathing",
                       "--simulation.num_subcarriers", 64, "--simulation.duration_s", 20)
    code, _, err = run(capsys, "breath", "--input", tmp_path / "n.nwbd", "--out", tmp_path / "bn")
    assert code == 1 and err["module"] == "sensing" and err["error"] == "NoSecondaryPeaksError"
