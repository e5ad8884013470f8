"""Command-line entry points for desk-scale, reproducible experiments.

Every command takes its settings from three layers, later layers
winning: built-in defaults, a ``--config`` file of ``key=value`` lines,
then explicit flags.  A single ``--seed`` drives all randomness, and the
resolved configuration (seed included) is written as ``run.cfg`` into
every output directory so results can be regenerated byte-for-byte.

Subcommands::

    synth           generate the synthetic corpus (features, transcripts,
                    ground-truth manifest, acoustic model)
    train-acoustic  train the frame-level acoustic model
    extract         turn a frames file into word feature vectors
    train           fit per-word classifiers, write a model registry
    eval            cross-validated comparison: SVM vs. logistic baseline
    feedback        score vectors and print per-phoneme practice feedback
    serve           start the HTTP prediction service
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import acoustic
from .classifier import (
    train_logistic,
    train_svm,
    write_registry,
    load_registry,
)
from .corpus import (
    accuracy_parts,
    build_training_set,
    read_transcripts,
)
from .decoder import DecoderConfig
from .errors import CaptError, DataFormatError
from .features import FeatexConfig, extract, vectors_from_text, vectors_to_text
from .feedback import build_report, report_to_text, worst_words
from .frontend import PhonemeGenerators, frames_from_text
from .phoneset import (
    Lexicon,
    PhonemeInventory,
    load_bundled_lexicon,
    load_homophones,
    load_inventory,
    load_lexicon,
)
from .service import ServiceConfig, run_server
from .simulate import (
    SimulationConfig,
    build_corpus,
    crossval_predictions,
    train_reference_model,
)

__all__ = ["main"]


def _read_config_file(path: str) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise DataFormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


class _Resolver:
    """Merges defaults, config-file values and explicit flags."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file_values = (
            _read_config_file(args.config) if getattr(args, "config", None) else {}
        )
        self.resolved: Dict[str, object] = {}

    def get(self, name: str, default, cast):
        flag = getattr(self.args, name.replace("-", "_"), None)
        if flag is not None:
            value = flag
        elif name in self.file_values:
            raw = self.file_values[name]
            value = (raw.lower() in ("1", "true", "yes")) if cast is bool else cast(raw)
        else:
            value = default
        self.resolved[name] = value
        return value

    def config_text(self, command: str) -> str:
        lines = [f"command={command}"]
        for key in sorted(self.resolved):
            value = self.resolved[key]
            if isinstance(value, float):
                lines.append(f"{key}={value!r}")
            elif value is None:
                lines.append(f"{key}=")
            else:
                lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"


def _write_run_config(out: Path, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.cfg").write_text(text)


def _load_phoneset(
    resolver: _Resolver,
) -> Tuple[PhonemeInventory, Lexicon]:
    attr_path = resolver.get("attributes", None, str)
    lex_path = resolver.get("lexicon", None, str)
    inventory = load_inventory(attr_path)
    if lex_path:
        lexicon = load_lexicon(Path(lex_path).read_text(), inventory)
    else:
        lexicon = load_bundled_lexicon(inventory)
    return inventory, lexicon


def _featex_config() -> FeatexConfig:
    # Unpruned recognition passes: rank features need fully populated
    # n-best lists.
    return FeatexConfig(
        align_cfg=DecoderConfig(beam=math.inf),
        pass_cfg=DecoderConfig(beam=math.inf),
    )


# ---------------------------------------------------------------------------
# Commands


def cmd_synth(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    inventory, lexicon = _load_phoneset(r)
    config = SimulationConfig(
        num_words=r.get("num-words", 20, int),
        recordings_per_word=r.get("recordings", 30, int),
        num_transcribers=r.get("transcribers", 4, int),
        seed=r.get("seed", 0, int),
        noise_level=r.get("noise", 0.8, float),
        clean_rate=r.get("clean-rate", 0.45, float),
        write_frames=r.get("write-frames", False, bool),
    )
    out = Path(args.out)
    truths = build_corpus(
        out, inventory, lexicon, config, homophones=load_homophones()
    )
    _write_run_config(out, r.config_text("synth"))
    n_words = len({t.word for t in truths})
    n_rows = len(truths) * config.num_transcribers
    print(f"words {n_words}")
    print(f"recordings {len(truths)}")
    print(f"feature files {len(truths)}")
    print(f"transcript rows {n_rows}")
    print(f"seed {config.seed}")
    return 0


def _read_labeled_segments(frames_dir: Path) -> List[Tuple[str, np.ndarray]]:
    labeled: List[Tuple[str, np.ndarray]] = []
    frame_files = sorted(frames_dir.glob("*.frames"))
    if not frame_files:
        raise DataFormatError(f"no .frames files under {frames_dir}")
    for ff in frame_files:
        seg_file = ff.with_suffix(".seg")
        if not seg_file.exists():
            raise DataFormatError(f"missing segment file {seg_file}")
        frames = frames_from_text(ff.read_text())
        for lineno, line in enumerate(seg_file.read_text().splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataFormatError(
                    f"{seg_file}:{lineno}: expected phoneme\\tstart\\tend"
                )
            ph, start, end = parts[0], int(parts[1]), int(parts[2])
            if not 0 <= start <= end <= frames.num_frames:
                raise DataFormatError(
                    f"{seg_file}:{lineno}: segment [{start},{end}) outside "
                    f"{frames.num_frames} frames"
                )
            for t in range(start, end):
                labeled.append((ph, frames.frames[t]))
    return labeled


def cmd_train_acoustic(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    inventory, _ = _load_phoneset(r)
    seed = r.get("seed", 0, int)
    noise = r.get("noise", 0.8, float)
    segments_dir = r.get("segments", None, str)
    if segments_dir:
        labeled = _read_labeled_segments(Path(segments_dir))
        model = acoustic.train(labeled, inventory)
    else:
        model = train_reference_model(
            inventory, PhonemeGenerators(inventory), noise, seed
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "acoustic.am").write_bytes(acoustic.save(model))
    _write_run_config(out, r.config_text("train-acoustic"))
    print(f"phonemes {len(model.phonemes)}")
    print(f"dim {model.dim}")
    print(f"seed {seed}")
    return 0


def cmd_extract(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    inventory, lexicon = _load_phoneset(r)
    model = acoustic.load(Path(args.acoustic_model).read_bytes())
    frames = frames_from_text(Path(args.frames).read_text())
    words = []
    for w in args.phrase.split():
        if w not in lexicon:
            raise DataFormatError(f"word {w!r} not in lexicon")
        words.append((w, tuple(lexicon.pronunciation(w))))
    vectors = extract(frames, words, model, inventory, _featex_config())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.frames).stem
    (out / f"{stem}.feat").write_text(vectors_to_text(vectors))
    _write_run_config(out, r.config_text("extract"))
    for v in vectors:
        print(f"{v.word} {len(v.values())}")
    return 0


def _corpus_from_dir(corpus_dir: Path):
    transcripts = read_transcripts((corpus_dir / "transcripts.csv").read_text())
    return build_training_set(
        corpus_dir / "feats", transcripts, homophones=load_homophones()
    )


def cmd_train(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    corpus_dir = Path(args.corpus)
    corpus = _corpus_from_dir(corpus_dir)
    seed = r.get("seed", 0, int)
    c_value = r.get("svm-c", 1.0, float)
    kind = r.get("kind", "svm", str)
    if kind not in ("svm", "logistic"):
        raise DataFormatError(f"kind must be svm or logistic, got {kind!r}")
    models = {}
    for word in sorted(corpus.words):
        vectors, labels = corpus.rows(word)
        X = np.array([v.values() for v in vectors])
        y = np.array([1 if lab else -1 for lab in labels])
        num_ph = vectors[0].num_phonemes
        if kind == "svm":
            models[word] = train_svm(
                X, y, C=c_value, word=word, num_phonemes=num_ph, seed=seed
            )
        else:
            models[word] = train_logistic(X, y, word=word, num_phonemes=num_ph)
        print(f"{word} rows {len(y)} positive {int(np.sum(y > 0))}")
    out = Path(args.out)
    write_registry(out / "models", models)
    _write_run_config(out, r.config_text("train"))
    print(f"models {len(models)}")
    print(f"seed {seed}")
    return 0


def _write_predictions(path: Path, preds, labels) -> None:
    lines = ["utterance_id\tword_index\tprediction\tlabels"]
    for uid in sorted(preds):
        utt, word_index = uid
        lab = "".join(str(v) for v in labels[uid])
        lines.append(f"{utt}\t{word_index}\t{preds[uid]}\t{lab}")
    path.write_text("\n".join(lines) + "\n")


def cmd_eval(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    corpus = _corpus_from_dir(Path(args.corpus))
    seed = r.get("seed", 0, int)
    folds = r.get("folds", 5, int)
    threshold = r.get("threshold", 0.5, float)
    c_value = r.get("svm-c", 1.0, float)
    svm_preds, log_preds, labels = crossval_predictions(
        corpus, folds=folds, seed=seed, threshold=threshold, svm_c=c_value
    )
    svm_raw, max_ach = accuracy_parts(svm_preds, labels)
    log_raw, _ = accuracy_parts(log_preds, labels)
    report = [
        "model raw adjusted",
        f"svm {svm_raw:.4f} {svm_raw / max_ach:.4f}",
        f"logistic {log_raw:.4f} {log_raw / max_ach:.4f}",
        f"max_achievable {max_ach:.4f}",
        f"seed {seed}",
    ]
    text = "\n".join(report) + "\n"
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.txt").write_text(text)
        _write_predictions(out / "predictions_svm.tsv", svm_preds, labels)
        _write_predictions(out / "predictions_logistic.tsv", log_preds, labels)
        _write_run_config(out, r.config_text("eval"))
    return 0


def cmd_feedback(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    models = load_registry(Path(args.models))
    threshold = r.get("threshold", 0.5, float)
    k = r.get("feedback-k", 1, int)
    delta = r.get("delta", 0.05, float)
    duration_step = r.get("duration-step", 0.2, float)
    vectors = vectors_from_text(Path(args.features).read_text())
    probabilities = []
    for vec in vectors:
        model = models.get(vec.word)
        if model is None:
            raise DataFormatError(f"no model for word {vec.word!r}")
        report = build_report(model, vec, delta=delta, duration_step=duration_step)
        probabilities.append(report.probability)
        print(report_to_text(report), end="")
    flagged = worst_words(probabilities, threshold, k)
    print("worst_words\t" + " ".join(str(i) for i in flagged))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    inventory, lexicon = _load_phoneset(r)
    manifest = Path(args.manifest)
    registry_dir = manifest.parent if manifest.is_file() else manifest
    models = load_registry(registry_dir)
    model = acoustic.load(Path(args.acoustic_model).read_bytes())
    config = ServiceConfig(
        models=models,
        acoustic_model=model,
        inventory=inventory,
        lexicon=lexicon,
        generators=PhonemeGenerators(inventory),
        threshold=r.get("threshold", 0.5, float),
        feedback_k=r.get("feedback-k", 1, int),
    )
    run_server(config, port=r.get("port", 8425, int))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value settings file")
    parser.add_argument("--seed", type=int, help="random seed (default 0)")
    parser.add_argument("--attributes", help="phoneme attribute table path")
    parser.add_argument("--lexicon", help="pronunciation lexicon path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="captkit",
        description="pronunciation intelligibility pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic corpus")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--num-words", type=int)
    p.add_argument("--recordings", type=int)
    p.add_argument("--transcribers", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--clean-rate", type=float)
    p.add_argument("--write-frames", action="store_const", const=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-acoustic", help="train the acoustic model")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--noise", type=float)
    p.add_argument("--segments", help="directory of .frames/.seg pairs")
    p.set_defaults(func=cmd_train_acoustic)

    p = sub.add_parser("extract", help="extract word feature vectors")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", required=True, help="frames text file")
    p.add_argument("--phrase", required=True, help="space-separated words")
    p.add_argument("--acoustic-model", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train per-word classifiers")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--corpus", required=True, help="synth output directory")
    p.add_argument("--kind", choices=("svm", "logistic"))
    p.add_argument("--svm-c", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="cross-validated model comparison")
    _add_common(p)
    p.add_argument("--out")
    p.add_argument("--corpus", required=True, help="synth output directory")
    p.add_argument("--folds", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--svm-c", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("feedback", help="per-phoneme practice feedback")
    _add_common(p)
    p.add_argument("--models", required=True, help="model registry directory")
    p.add_argument("--features", required=True, help=".feat file")
    p.add_argument("--threshold", type=float)
    p.add_argument("--feedback-k", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--duration-step", type=float)
    p.set_defaults(func=cmd_feedback)

    p = sub.add_parser("serve", help="start the HTTP prediction service")
    _add_common(p)
    p.add_argument("--manifest", required=True,
                   help="model registry directory or its manifest file")
    p.add_argument("--acoustic-model", required=True)
    p.add_argument("--port", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--feedback-k", type=int)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CaptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
