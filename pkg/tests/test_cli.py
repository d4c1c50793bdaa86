"""End-to-end command-line flows, exit codes, and artifact wiring."""

from __future__ import annotations

import json
import struct
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from wmark.artifacts import load_model
from wmark.cli import main

DATA = [
    "--data-seed", "7", "--num-labels", "4", "--input-dim", "16",
    "--train-n", "240", "--test-n", "80", "--noise-sigma", "0.1",
]
MARK_BUDGET = [
    "--epochs", "40", "--batch-size", "12", "--learning-rate", "0.5",
    "--lr-halving-period", "20", "--k-per-batch", "4",
]


def _run(capsys_or_none, argv):
    rc = main(argv)
    if capsys_or_none is None:
        return rc, None
    out = capsys_or_none.readouterr().out
    return rc, json.loads(out) if out.strip() else None


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Train, keygen, mark, and one attack, all through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    unmarked = root / "unmarked.json"
    keys = root / "keys"
    marked = root / "marked.json"
    attacked = root / "attacked.json"

    assert main([
        "train", "--seed", "3", "--out", str(unmarked), "--hidden", "24,24",
        "--epochs", "15", "--batch-size", "12", "--learning-rate", "0.5",
        "--lr-halving-period", "8", *DATA,
    ]) == 0
    assert main([
        "keygen", "--seed", "5", "--trigger-size", "20", "--out", str(keys), *DATA,
    ]) == 0
    assert main([
        "mark", "--model", str(unmarked), "--mk", str(keys / "mk.json"),
        "--strategy", "from-scratch", "--seed", "3", "--out", str(marked),
        *MARK_BUDGET, *DATA,
    ]) == 0
    assert main([
        "attack", "--model", str(marked), "--variant", "ftll", "--seed", "9",
        "--mk", str(keys / "mk.json"), "--epochs", "4", "--out", str(attacked), *DATA,
    ]) == 0
    return SimpleNamespace(
        root=root, unmarked=unmarked, marked=marked, attacked=attacked,
        mk=keys / "mk.json", vk=keys / "vk.json",
    )


def test_verify_accepts_the_marked_model(pipeline, capsys):
    rc, verdict = _run(capsys, [
        "verify", "--model", str(pipeline.marked), "--mk", str(pipeline.mk),
        "--vk", str(pipeline.vk), "--epsilon", "0.25", *DATA,
    ])
    assert rc == 0
    assert verdict["verdict"] == 1
    assert verdict["matches"] >= verdict["required"] == 15


def test_verify_rejects_the_unmarked_model(pipeline, capsys):
    rc, verdict = _run(capsys, [
        "verify", "--model", str(pipeline.unmarked), "--mk", str(pipeline.mk),
        "--vk", str(pipeline.vk), *DATA,
    ])
    assert rc == 1
    assert verdict["verdict"] == 0 and verdict["step"] == "match"


def test_verify_flags_a_tampered_key_file(pipeline, tmp_path, capsys):
    env = json.loads(pipeline.vk.read_text())
    digest = env["body"]["commits_t"][4]
    env["body"]["commits_t"][4] = ("0" if digest[0] != "0" else "f") + digest[1:]
    bad_vk = tmp_path / "vk.json"
    bad_vk.write_text(json.dumps(env))
    rc, verdict = _run(capsys, [
        "verify", "--model", str(pipeline.marked), "--mk", str(pipeline.mk),
        "--vk", str(bad_vk), *DATA,
    ])
    assert rc == 1
    assert verdict["step"] == "open" and verdict["index"] == 4


def test_verify_keys_subcommand(pipeline, tmp_path, capsys):
    rc, out = _run(capsys, ["verify-keys", "--mk", str(pipeline.mk), "--vk", str(pipeline.vk)])
    assert rc == 0 and out["verdict"] == 1 and out["opened"] == 20

    other = tmp_path / "other"
    assert main(["keygen", "--seed", "6", "--trigger-size", "20", "--out", str(other), *DATA]) == 0
    capsys.readouterr()
    rc, out = _run(capsys, ["verify-keys", "--mk", str(pipeline.mk), "--vk", str(other / "vk.json")])
    assert rc == 1 and out["step"] == "open" and out["index"] == 0


def test_pkeygen_rejects_a_bad_trigger_size(tmp_path, capsys):
    rc = main(["pkeygen", "--seed", "1", "--trigger-size", "18", "--out", str(tmp_path / "k"), *DATA])
    assert rc == 2
    assert "multiple of 4" in capsys.readouterr().err


def test_public_pipeline(pipeline, tmp_path, capsys):
    keys = tmp_path / "pkeys"
    rc, out = _run(capsys, [
        "pkeygen", "--seed", "5", "--trigger-size", "20", "--out", str(keys), *DATA,
    ])
    assert rc == 0 and out["ell"] == 20
    # Same seed as the private keygen, so the marked model carries this trigger set.
    rc, verdict = _run(capsys, [
        "pverify", "--model", str(pipeline.marked), "--pmk", str(keys / "mk_p.json"),
        "--pvk", str(keys / "vk_p.json"), *DATA,
    ])
    assert rc == 0 and verdict["verdict"] == 1
    rc, verdict = _run(capsys, [
        "pverify", "--model", str(pipeline.unmarked), "--pmk", str(keys / "mk_p.json"),
        "--pvk", str(keys / "vk_p.json"), *DATA,
    ])
    assert rc == 1 and verdict["step"] == "match"


def test_attack_writes_model_and_report(pipeline):
    report_path = pipeline.attacked.with_name("attacked.report.json")
    assert report_path.exists()
    body = json.loads(report_path.read_text())["body"]
    assert body["report"]["variant"] == "FTLL"
    assert 0.0 <= body["report"]["trigger_accuracy_after"]["trigger"] <= 1.0
    attacked = load_model(pipeline.attacked)
    assert attacked.meta["attack_variant"] == "FTLL"


def test_attack_rejects_an_unknown_variant(pipeline, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["attack", "--model", str(pipeline.marked), "--variant", "xyz",
              "--out", str(tmp_path / "a.json"), *DATA])
    assert exc.value.code == 2


def test_size_prints_all_three_estimates(tmp_path, capsys):
    json_out = tmp_path / "sizes.json"
    rc = main(["size", "--n-sec", "30", "--json-out", str(json_out)])
    assert rc == 0
    lines = {ln.split()[0]: ln for ln in capsys.readouterr().out.splitlines() if ln.strip()}
    assert lines["paper_formula"].split()[1] == "32" and "(as-printed)" in lines["paper_formula"]
    assert lines["hoeffding"].split()[1] == "25"
    assert lines["exact_minimum"].split()[1] == "15"
    body = json.loads(json_out.read_text())
    assert (body["paper_formula"], body["hoeffding"], body["exact_minimum"]) == (32, 25, 15)
    assert body["cheat_probability_at_each"]["exact_minimum"] <= 2.0 ** -30


def test_report_builds_the_result_table(pipeline, capsys):
    rc = main([
        "report", "--run-dir", str(pipeline.root), "--mk", str(pipeline.mk), *DATA,
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "No-WM" in out and "FromScratch" in out and "FTLL" in out
    table = json.loads((pipeline.root / "result_table.json").read_text())
    assert table["format"] == "wmark/result-table/v1"
    variants = [row["variant"] for row in table["models"]]
    assert variants == ["No-WM", "FromScratch"]
    assert table["attacks"][0]["variant"] == "FTLL"
    printed = [float(x) for x in out.splitlines()[1].split()[1:]]
    assert printed == [table["models"][0]["test_accuracy"], table["models"][0]["trigger_accuracy"]]


def test_report_requires_artifacts(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["report", "--run-dir", str(empty), *DATA]) == 2
    assert "no model or attack-report artifacts" in capsys.readouterr().err


def test_verify_refuses_a_postdated_key(pipeline, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1000")
    model = tmp_path / "m.json"
    assert main(["train", "--seed", "1", "--out", str(model), "--hidden", "24",
                 "--epochs", "2", *DATA]) == 0
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "2000")
    keys = tmp_path / "late"
    assert main(["keygen", "--seed", "8", "--trigger-size", "20", "--out", str(keys), *DATA]) == 0
    capsys.readouterr()

    args = ["verify", "--model", str(model), "--mk", str(keys / "mk.json"),
            "--vk", str(keys / "vk.json"), *DATA]
    assert main(args) == 2
    assert "postdates" in capsys.readouterr().err
    rc, verdict = _run(capsys, args + ["--allow-unordered"])
    assert rc == 1 and verdict["step"] == "match"


def test_keygen_is_byte_reproducible(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "946684800")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["keygen", "--seed", "5", "--trigger-size", "20", "--out", str(a), *DATA]) == 0
    assert main(["keygen", "--seed", "5", "--trigger-size", "20", "--out", str(b), *DATA]) == 0
    assert (a / "mk.json").read_bytes() == (b / "mk.json").read_bytes()
    assert (a / "vk.json").read_bytes() == (b / "vk.json").read_bytes()


def _write_idx_images(path: Path, images: np.ndarray) -> None:
    n, r, c = images.shape
    path.write_bytes(struct.pack(">IIII", 0x803, n, r, c) + images.astype(np.uint8).tobytes())


def _write_idx_labels(path: Path, labels: np.ndarray) -> None:
    path.write_bytes(struct.pack(">II", 0x801, len(labels)) + labels.astype(np.uint8).tobytes())


def test_train_accepts_idx_data(tmp_path, capsys):
    rng = np.random.default_rng(0)
    paths = {}
    for split, n in (("train", 60), ("test", 20)):
        images = rng.integers(0, 256, size=(n, 4, 4), dtype=np.uint8)
        labels = rng.integers(0, 4, size=n, dtype=np.uint8)
        paths[f"{split}_images"] = tmp_path / f"{split}-images.idx"
        paths[f"{split}_labels"] = tmp_path / f"{split}-labels.idx"
        _write_idx_images(paths[f"{split}_images"], images)
        _write_idx_labels(paths[f"{split}_labels"], labels)

    out = tmp_path / "idx-model.json"
    rc, summary = _run(capsys, [
        "train", "--seed", "0", "--out", str(out), "--hidden", "8", "--epochs", "2",
        "--train-images", str(paths["train_images"]), "--train-labels", str(paths["train_labels"]),
        "--test-images", str(paths["test_images"]), "--test-labels", str(paths["test_labels"]),
    ])
    assert rc == 0 and out.exists()
    assert load_model(out).layer_dims == [16, 8, 4]

    rc = main([
        "train", "--seed", "0", "--out", str(out), "--hidden", "8",
        "--train-images", str(paths["train_images"]),
    ])
    assert rc == 2
    assert "all four" in capsys.readouterr().err


def test_corrupt_idx_exits_operationally(tmp_path, capsys):
    img = tmp_path / "img.idx"
    lab = tmp_path / "lab.idx"
    img.write_bytes(struct.pack(">IIII", 0x803, 5, 4, 4) + b"\x00" * 10)  # truncated
    _write_idx_labels(lab, np.zeros(5, dtype=np.uint8))
    rc = main([
        "train", "--seed", "0", "--out", str(tmp_path / "m.json"), "--hidden", "8",
        "--train-images", str(img), "--train-labels", str(lab),
        "--test-images", str(img), "--test-labels", str(lab),
    ])
    assert rc == 2
    assert "bad IDX data" in capsys.readouterr().err


def test_missing_artifact_exits_operationally(tmp_path, capsys):
    rc = main([
        "verify", "--model", str(tmp_path / "absent.json"),
        "--mk", str(tmp_path / "mk.json"), "--vk", str(tmp_path / "vk.json"), *DATA,
    ])
    assert rc == 2
    assert "cannot read artifact" in capsys.readouterr().err
