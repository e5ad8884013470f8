import io
import json
import subprocess
import sys
import time
import urllib.request
from contextlib import redirect_stdout
from pathlib import Path

import pytest

from captkit.cli import main
from captkit.corpus import accuracy_parts
from captkit.features import vectors_from_text

SYNTH_FLAGS = ["--num-words", "3", "--recordings", "8", "--transcribers", "2",
               "--noise", "0.5", "--clean-rate", "0.4", "--seed", "5"]


def run_cli(argv):
    buf = io.StringIO()
    with redirect_stdout(buf):
        rc = main(argv)
    return rc, buf.getvalue()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    rc, synth_out = run_cli(["synth", "--out", str(corpus), "--write-frames",
                             *SYNTH_FLAGS])
    assert rc == 0
    trained = root / "trained"
    rc, train_out = run_cli(["train", "--out", str(trained),
                             "--corpus", str(corpus), "--seed", "5"])
    assert rc == 0
    return {"root": root, "corpus": corpus, "trained": trained,
            "synth_out": synth_out, "train_out": train_out}


def test_synth_outputs(pipeline):
    corpus = pipeline["corpus"]
    out = pipeline["synth_out"]
    assert "words 3" in out
    assert "recordings 24" in out
    assert "feature files 24" in out
    assert "transcript rows 48" in out
    assert "seed 5" in out
    assert (corpus / "acoustic.am").exists()
    assert (corpus / "transcripts.csv").exists()
    assert (corpus / "manifest.tsv").exists()
    assert len(list((corpus / "feats").glob("*.feat"))) == 24
    assert len(list((corpus / "frames").glob("*.frames"))) == 24
    cfg = (corpus / "run.cfg").read_text()
    assert "command=synth" in cfg
    assert "seed=5" in cfg


def test_synth_byte_reproducible(pipeline, tmp_path):
    again = tmp_path / "again"
    rc, _ = run_cli(["synth", "--out", str(again), "--write-frames",
                     *SYNTH_FLAGS])
    assert rc == 0
    src = pipeline["corpus"]
    for rel in ("manifest.tsv", "transcripts.csv", "acoustic.am", "run.cfg"):
        assert (again / rel).read_bytes() == (src / rel).read_bytes()
    for feat in sorted((src / "feats").glob("*.feat")):
        assert (again / "feats" / feat.name).read_bytes() == feat.read_bytes()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "settings.cfg"
    cfg.write_text("# corpus settings\nnum-words=5\nrecordings=3\n"
                   "transcribers=2\nnoise=0.9\nclean-rate=0.5\nseed=11\n")
    out = tmp_path / "corpus"
    rc, text = run_cli(["synth", "--out", str(out), "--config", str(cfg),
                        "--num-words", "3", "--noise", "0.5"])
    assert rc == 0
    assert "words 3" in text  # flag beat the file
    assert "seed 11" in text  # file beat the default
    resolved = (out / "run.cfg").read_text()
    assert "num-words=3" in resolved
    assert "noise=0.5" in resolved
    assert "recordings=3" in resolved
    assert "seed=11" in resolved


def test_bad_config_file_exits_nonzero(tmp_path, capsys):
    cfg = tmp_path / "broken.cfg"
    cfg.write_text("this line has no separator\n")
    rc = main(["synth", "--out", str(tmp_path / "x"), "--config", str(cfg)])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_train_registry(pipeline):
    registry = pipeline["trained"] / "models"
    assert (registry / "models.json").exists()
    manifest = json.loads((registry / "models.json").read_text())
    assert len(manifest) == 3
    assert "models 3" in pipeline["train_out"]
    assert "seed 5" in pipeline["train_out"]


def _read_predictions(path: Path):
    preds, labels = {}, {}
    lines = path.read_text().splitlines()
    assert lines[0] == "utterance_id\tword_index\tprediction\tlabels"
    for line in lines[1:]:
        utt, wi, pred, lab = line.split("\t")
        uid = (utt, int(wi))
        preds[uid] = int(pred)
        labels[uid] = [int(c) for c in lab]
    return preds, labels


def test_eval_report_matches_its_own_predictions(pipeline, tmp_path):
    out = tmp_path / "eval"
    rc, text = run_cli(["eval", "--corpus", str(pipeline["corpus"]),
                        "--out", str(out), "--folds", "2", "--seed", "5"])
    assert rc == 0
    assert (out / "eval.txt").read_text() == text
    lines = text.splitlines()
    assert lines[0] == "model raw adjusted"
    reported = {}
    for line in lines[1:3]:
        name, raw, adjusted = line.split()
        reported[name] = (float(raw), float(adjusted))
    reported_max = float(lines[3].split()[1])

    # The printed numbers must agree with an independent recomputation
    # from the prediction files the command itself wrote.
    for name in ("svm", "logistic"):
        preds, labels = _read_predictions(out / f"predictions_{name}.tsv")
        raw, max_ach = accuracy_parts(preds, labels)
        assert reported[name][0] == pytest.approx(raw, abs=5e-5)
        assert reported[name][1] == pytest.approx(raw / max_ach, abs=5e-5)
        assert reported_max == pytest.approx(max_ach, abs=5e-5)
    assert "seed 5" in text


def test_eval_is_deterministic(pipeline, tmp_path):
    args = ["eval", "--corpus", str(pipeline["corpus"]), "--folds", "2",
            "--seed", "5"]
    rc1, first = run_cli(args)
    rc2, second = run_cli(args)
    assert rc1 == rc2 == 0
    assert first == second


def test_extract_matches_corpus_features(pipeline, tmp_path):
    corpus = pipeline["corpus"]
    frames_file = sorted((corpus / "frames").glob("*.frames"))[0]
    word = frames_file.stem.rsplit("_", 1)[0]
    out = tmp_path / "extracted"
    rc, text = run_cli(["extract", "--frames", str(frames_file),
                        "--phrase", word,
                        "--acoustic-model", str(corpus / "acoustic.am"),
                        "--out", str(out)])
    assert rc == 0
    written = out / f"{frames_file.stem}.feat"
    assert written.read_bytes() == \
        (corpus / "feats" / f"{frames_file.stem}.feat").read_bytes()
    vectors = vectors_from_text(written.read_text())
    assert len(vectors) == 1
    assert f"{word} {len(vectors[0].values())}" in text
    assert len(vectors[0].values()) == 9 * vectors[0].num_phonemes + 1


def test_extract_rejects_unknown_word(pipeline, tmp_path, capsys):
    corpus = pipeline["corpus"]
    frames_file = sorted((corpus / "frames").glob("*.frames"))[0]
    rc = main(["extract", "--frames", str(frames_file),
               "--phrase", "zzzzz",
               "--acoustic-model", str(corpus / "acoustic.am"),
               "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "not in lexicon" in capsys.readouterr().err


def test_missing_input_file_exits_nonzero(tmp_path, capsys):
    rc = main(["extract", "--frames", str(tmp_path / "missing.frames"),
               "--phrase", "cat",
               "--acoustic-model", str(tmp_path / "missing.am"),
               "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_feedback_command(pipeline):
    corpus = pipeline["corpus"]
    registry = pipeline["trained"] / "models"
    feat = sorted((corpus / "feats").glob("*.feat"))[0]
    rc, text = run_cli(["feedback", "--models", str(registry),
                        "--features", str(feat), "--feedback-k", "2"])
    assert rc == 0
    lines = text.splitlines()
    assert lines[-1].startswith("worst_words\t")
    assert any("\t" in line for line in lines[:-1])


def test_feedback_unknown_word_exits_nonzero(pipeline, tmp_path, capsys):
    registry = pipeline["trained"] / "models"
    feat = tmp_path / "other.feat"
    src = sorted((pipeline["corpus"] / "feats").glob("*.feat"))[0]
    feat.write_text(src.read_text().replace(src.stem.rsplit("_", 1)[0],
                                            "nosuchword", 1))
    rc = main(["feedback", "--models", str(registry),
               "--features", str(feat)])
    assert rc == 2
    assert "no model for word" in capsys.readouterr().err


def test_serve_binds_ephemeral_port(pipeline):
    corpus = pipeline["corpus"]
    registry = pipeline["trained"] / "models"
    proc = subprocess.Popen(
        [sys.executable, "-c",
         "import sys; from captkit.cli import main; sys.exit(main(sys.argv[1:]))",
         "serve", "--manifest", str(registry),
         "--acoustic-model", str(corpus / "acoustic.am"), "--port", "0"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    try:
        line = proc.stdout.readline().strip()
        assert line.startswith("listening on 127.0.0.1:")
        port = int(line.rsplit(":", 1)[1])
        assert port > 0
        deadline = time.monotonic() + 10
        body = None
        while time.monotonic() < deadline:
            try:
                with urllib.request.urlopen(
                        f"http://127.0.0.1:{port}/health", timeout=2) as resp:
                    body = json.loads(resp.read())
                break
            except OSError:
                time.sleep(0.05)
        assert body is not None
        assert body["status"] == "ok"
        assert body["model_count"] == 3
    finally:
        proc.terminate()
        proc.wait(timeout=10)
