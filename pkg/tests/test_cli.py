import json
import subprocess
import sys

import numpy as np
import pytest

from emoeeg import store
from emoeeg.cli import main

SPEC = {"subjects_per_cohort": 2, "trials_per_emotion": 1, "duration_s": 10, "seed": 4,
        "effects": [{"gains": [1, 1, 3], "cohort": "PD", "channels": "frontal"}]}


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "spec.json").write_text(json.dumps(SPEC))
    assert main(["synth", str(root / "spec.json"), str(root / "data"), "--jobs", "1"]) == 0
    return root


def test_synth_outputs(cohort):
    man = json.loads((cohort / "data" / "manifest.json").read_text())
    assert len(man["trials"]) == 24
    prov = json.loads((cohort / "data" / "provenance.json").read_text())
    assert prov["command"] == "synth" and "code_version" in prov


def test_preprocess(cohort, tmp_path):
    assert main(["preprocess", str(cohort / "data" / "manifest.json"), str(tmp_path)]) == 0
    kind, t, meta = store.unpack((tmp_path / "epochs.store").read_bytes())
    assert kind == "epochs" and t["data"].shape == (48, 14, 640)
    rej = json.loads((tmp_path / "rejection.json").read_text())
    assert rej["kept"] == 48 and rej["threshold_uv"] == 85.0
    assert (tmp_path / "epochs.csv").read_text().count("\n") == 49


@pytest.mark.parametrize("kind,shape", [("spv", (42,)), ("raw", (640, 14)), ("image", (32, 32, 3)),
                                        ("movie", (5, 32, 32, 3))])
def test_features(cohort, tmp_path, kind, shape):
    assert main(["features", str(cohort / "data" / "manifest.json"), kind, str(tmp_path)]) == 0
    arr, meta = store.load_tensor(tmp_path / "features.store")
    assert arr.shape == (48,) + shape and meta["kind"] == kind
    if kind in ("image", "movie"):
        assert arr.min() >= 0 and arr.max() <= 1


def test_csp_features_need_a_task(cohort, tmp_path):
    m = str(cohort / "data" / "manifest.json")
    assert main(["features", m, "csp", str(tmp_path / "a")]) == 2
    assert main(["features", m, "csp", str(tmp_path / "b"), "--task", "pd_vs_hc"]) == 0
    arr, _ = store.load_tensor(tmp_path / "b" / "features.store")
    assert arr.shape == (48, 6)
    assert main(["features", m, "spv", str(tmp_path / "c"), "--task", "valence", "--cohort", "PD"]) == 0
    arr, _ = store.load_tensor(tmp_path / "c" / "features.store")
    assert arr.shape == (24, 42)


def _config(cohort, name, **kw):
    c = {"task": "pd_vs_hc", "feature": "spv", "model": "lda", "cv": {"k": 4},
         "manifest": "data/manifest.json", **kw}
    p = cohort / f"{name}.json"
    p.write_text(json.dumps(c))
    return str(p)


def test_run_report_and_compare(cohort, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", _config(cohort, "lda"), "--out", str(a), "--jobs", "1"]) == 0
    assert main(["run", _config(cohort, "gnb", model="gnb"), "--out", str(b), "--jobs", "1"]) == 0
    prov = json.loads((a / "provenance.json").read_text())
    assert "manifest_sha256" in prov["data_source"]
    capsys.readouterr()
    assert main(["report", str(a)]) == 0
    assert "| pd_vs_hc[Full] | spv |" in capsys.readouterr().out
    assert main(["report", str(a), str(b), "--compare", "--out", str(tmp_path / "cmp")]) == 0
    out = capsys.readouterr().out
    assert "ANOVA: F(1,6)" in out and "t-test: t(6)" in out
    assert json.loads((tmp_path / "cmp" / "compare.json").read_text())["metric"] == "weighted_f1"


def test_run_default_output_dir(cohort, tmp_path, monkeypatch):
    monkeypatch.setenv("EMOEEG_OUT", str(tmp_path))
    assert main(["run", _config(cohort, "envrun"), "--jobs", "1"]) == 0
    assert (tmp_path / "envrun" / "summary.json").is_file()


def test_run_flags(cohort, tmp_path):
    assert main(["run", _config(cohort, "leak"), "--out", str(tmp_path / "l"), "--leaky-norm",
                 "--seed", "7", "--jobs", "1"]) == 0
    s = json.loads((tmp_path / "l" / "summary.json").read_text())
    assert s["normalization"].startswith("dataset-level")
    p = json.loads((tmp_path / "l" / "provenance.json").read_text())
    assert p["seeds"]["master"] == 7
    cnn = _config(cohort, "cnn", model="cnn1d", cnn={"max_epochs": 1})
    assert main(["run", cnn, "--out", str(tmp_path / "s3"), "--stride3", "--jobs", "1"]) == 0
    p = json.loads((tmp_path / "s3" / "provenance.json").read_text())
    assert p["config"]["cnn"]["stride"] == 3


def test_ppm_export(cohort, tmp_path):
    main(["features", str(cohort / "data" / "manifest.json"), "image", str(tmp_path / "f")])
    assert main(["report", "--ppm", str(tmp_path / "f" / "features.store"), "3",
                 str(tmp_path / "x.ppm")]) == 0
    assert (tmp_path / "x.ppm").read_bytes().startswith(b"P6\n32 32\n255\n")


def test_exit_codes(cohort, tmp_path):
    assert main(["synth", str(tmp_path / "missing.json"), str(tmp_path / "o")]) == 2
    assert main(["preprocess", str(tmp_path / "missing.json"), str(tmp_path / "o")]) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "bad.json").write_text(json.dumps({"task": "valence", "feature": "image",
                                                  "model": "svm", "manifest": "m.json"}))
    assert main(["run", str(tmp_path / "bad.json")]) == 2
    (tmp_path / "empty").mkdir()
    assert main(["report", str(tmp_path / "empty")]) == 2
    assert main(["report"]) == 2
    with pytest.raises(SystemExit) as e:
        main(["features", "m.json", "wavelet", "o"])
    assert e.value.code == 2


def test_entry_points(tmp_path):
    r = subprocess.run([sys.executable, "-m", "emoeeg", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "synth" in r.stdout
    r = subprocess.run(["emoeeg", "report", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 2 and "not a completed run" in r.stderr
