import math

import numpy as np
import pytest

from captkit import acoustic
from captkit.corpus import build_training_set, read_transcripts
from captkit.errors import DataFormatError, DomainError
from captkit.features import PER_PHONEME
from captkit.phoneset import SIL
from captkit.simulate import (
    SEVERITIES,
    BenchmarkResult,
    RecordingTruth,
    SimulationConfig,
    build_corpus,
    choose_words,
    correctness_probability,
    crossval_benchmark,
    crossval_predictions,
    logistic_subset,
    read_manifest,
    sample_distortion,
    train_reference_model,
    wrap_with_silence,
    write_manifest,
)

TINY = dict(num_words=3, recordings_per_word=4, num_transcribers=2,
            seed=5, noise_level=0.5, clean_rate=0.4)


@pytest.fixture(scope="module")
def reference_model(inventory, generators):
    return train_reference_model(inventory, generators, TINY["noise_level"],
                                 TINY["seed"], reps=6)


@pytest.fixture(scope="module")
def tiny_corpus(tmp_path_factory, inventory, lexicon, generators,
                reference_model):
    out = tmp_path_factory.mktemp("corpus")
    config = SimulationConfig(**TINY, write_frames=True)
    truths = build_corpus(out, inventory, lexicon, config,
                          generators=generators, model=reference_model)
    return out, config, truths


# ---------------------------------------------------------------------------
# Config and sampling


def test_config_validation():
    with pytest.raises(DomainError):
        SimulationConfig(num_words=0)
    with pytest.raises(DomainError):
        SimulationConfig(recordings_per_word=0)
    with pytest.raises(DomainError):
        SimulationConfig(num_transcribers=0)
    with pytest.raises(DomainError):
        SimulationConfig(clean_rate=1.5)
    with pytest.raises(DomainError):
        SimulationConfig(noise_level=-0.1)


def test_choose_words_deterministic_and_bounded(lexicon):
    config = SimulationConfig(num_words=10)
    words = choose_words(lexicon, config)
    assert len(words) == 10
    assert words == sorted(words)
    assert words == choose_words(lexicon, config)
    for w in words:
        assert 3 <= len(lexicon.pronunciation(w)) <= 6
    with pytest.raises(DomainError):
        choose_words(lexicon, SimulationConfig(num_words=100000))


def test_sample_distortion_respects_clean_rate(inventory, lexicon):
    pron = lexicon.pronunciation(choose_words(lexicon, SimulationConfig())[0])
    always = [sample_distortion(pron, inventory, np.random.default_rng(i), 1.0)
              for i in range(20)]
    assert all(kind == "clean" for kind, _, _ in always)
    never = [sample_distortion(pron, inventory, np.random.default_rng(i), 0.0)
             for i in range(50)]
    assert all(kind != "clean" for kind, _, _ in never)


def test_sample_distortion_draws_are_valid(inventory, lexicon):
    words = choose_words(lexicon, SimulationConfig(num_words=5))
    seen = set()
    for i in range(300):
        pron = lexicon.pronunciation(words[i % len(words)])
        kind, pos, detail = sample_distortion(
            pron, inventory, np.random.default_rng(i), 0.0)
        seen.add(kind)
        if kind == "neighbor_substitution":
            assert detail in inventory.neighbors(pron[pos])
            assert detail != pron[pos]
        elif kind == "substitution":
            assert detail != pron[pos]
            assert detail not in inventory.neighbors(pron[pos])
            assert detail != SIL
        elif kind == "deletion":
            assert 0 <= pos < len(pron)
            assert detail == ""
        elif kind == "insertion":
            assert 0 <= pos <= len(pron)
            assert detail != SIL and detail in inventory
        elif kind == "duration":
            assert detail in ("shorter", "longer")
        else:
            pytest.fail(f"unexpected kind {kind}")
    assert seen == {"neighbor_substitution", "substitution", "deletion",
                    "insertion", "duration"}


def test_sample_distortion_deterministic(inventory, lexicon):
    pron = lexicon.pronunciation(choose_words(lexicon, SimulationConfig())[0])
    a = [sample_distortion(pron, inventory, np.random.default_rng(42), 0.3)
         for _ in range(10)]
    b = [sample_distortion(pron, inventory, np.random.default_rng(42), 0.3)
         for _ in range(10)]
    assert a == b


def test_correctness_probability():
    assert correctness_probability("clean") == 1.0
    probs = {k: correctness_probability(k) for k in SEVERITIES if k != "clean"}
    assert all(0.0 < p < 1.0 for p in probs.values())
    # harsher distortions are less often transcribed correctly
    assert probs["neighbor_substitution"] > probs["insertion"]
    assert probs["insertion"] > probs["duration"]
    assert probs["duration"] > probs["deletion"]
    assert probs["deletion"] > probs["substitution"]


def test_wrap_with_silence():
    assert wrap_with_silence(["K", "AE"]) == [SIL, "K", "AE", SIL]


# ---------------------------------------------------------------------------
# Corpus generation


def test_corpus_layout(tiny_corpus):
    out, config, truths = tiny_corpus
    assert (out / "acoustic.am").exists()
    assert (out / "manifest.tsv").exists()
    assert (out / "transcripts.csv").exists()
    feats = sorted(p.name for p in (out / "feats").glob("*.feat"))
    assert len(feats) == config.num_words * config.recordings_per_word
    assert len(truths) == len(feats)
    frames = list((out / "frames").glob("*.frames"))
    segs = list((out / "frames").glob("*.seg"))
    assert len(frames) == len(truths)
    assert len(segs) == len(truths)


def test_manifest_matches_truths(tiny_corpus):
    out, config, truths = tiny_corpus
    parsed = read_manifest((out / "manifest.tsv").read_text())
    assert parsed == list(truths)


def test_manifest_round_trip(tiny_corpus):
    _, config, truths = tiny_corpus
    text = write_manifest(truths, config)
    assert read_manifest(text) == list(truths)
    assert text.startswith("# seed=5 ")
    with pytest.raises(DataFormatError):
        read_manifest("not a manifest\n")
    header = text.splitlines()[1]
    with pytest.raises(DataFormatError):
        read_manifest(header + "\nu download\t2\n")


def test_transcripts_cover_every_recording(tiny_corpus):
    out, config, truths = tiny_corpus
    ts = read_transcripts((out / "transcripts.csv").read_text())
    by_utt = ts.by_utterance()
    assert sorted(by_utt) == sorted(t.utterance_id for t in truths)
    for records in by_utt.values():
        assert len(records) == config.num_transcribers


def test_clean_recordings_always_heard_correctly(tiny_corpus):
    out, _, truths = tiny_corpus
    ts = read_transcripts((out / "transcripts.csv").read_text())
    by_utt = ts.by_utterance()
    clean = [t for t in truths if t.kind == "clean"]
    assert clean
    for t in clean:
        assert t.p_correct == 1.0
        for record in by_utt[t.utterance_id]:
            assert record.transcript == t.word


def test_wrong_transcripts_are_real_other_words(tiny_corpus, lexicon):
    out, _, truths = tiny_corpus
    ts = read_transcripts((out / "transcripts.csv").read_text())
    vocabulary = set(lexicon.words())
    for record in ts.records:
        assert record.transcript in vocabulary


def test_truth_severities_match_table(tiny_corpus):
    _, _, truths = tiny_corpus
    for t in truths:
        assert t.severity == SEVERITIES[t.kind]
        assert t.p_correct == correctness_probability(t.kind)
        if t.kind == "clean":
            assert t.position == -1 and t.detail == ""


def test_corpus_features_join_cleanly(tiny_corpus):
    out, config, truths = tiny_corpus
    corpus = build_training_set(out / "feats",
                                (out / "transcripts.csv").read_text())
    assert corpus.total_entries() == len(truths)
    words = {t.word for t in truths}
    assert set(corpus.words) == words
    for word, entries in corpus.words.items():
        for e in entries:
            assert e.vector.word == word
            assert len(e.labels) == config.num_transcribers


def test_corpus_build_is_reproducible(tmp_path, inventory, lexicon,
                                      generators, reference_model,
                                      tiny_corpus):
    out1, config, _ = tiny_corpus
    out2 = tmp_path / "again"
    build_corpus(out2, inventory, lexicon, SimulationConfig(**TINY,
                                                            write_frames=True),
                 generators=generators, model=reference_model)
    for rel in ["manifest.tsv", "transcripts.csv"]:
        assert (out2 / rel).read_bytes() == (out1 / rel).read_bytes()
    for feat in sorted((out1 / "feats").glob("*.feat")):
        assert (out2 / "feats" / feat.name).read_bytes() == feat.read_bytes()
    assert (out2 / "acoustic.am").read_bytes() == (out1 / "acoustic.am").read_bytes()


def test_saved_acoustic_model_round_trips(tiny_corpus, reference_model):
    out, _, _ = tiny_corpus
    loaded = acoustic.load((out / "acoustic.am").read_bytes())
    assert loaded == reference_model


# ---------------------------------------------------------------------------
# Reduced design and cross-validation


def test_logistic_subset_columns():
    p = 3
    values = np.arange(PER_PHONEME * p + 1, dtype=np.float64)
    sub = logistic_subset(values, p)
    expected = [0, 1, 2, 3, 9, 10, 11, 12, 18, 19, 20, 21, 27]
    assert sub.tolist() == expected
    batch = np.stack([values, values + 100.0])
    assert logistic_subset(batch, p).shape == (2, 4 * p + 1)


def test_crossval_predictions_cover_all_units(tiny_corpus):
    out, config, truths = tiny_corpus
    corpus = build_training_set(out / "feats",
                                (out / "transcripts.csv").read_text())
    svm_preds, log_preds, labels = crossval_predictions(corpus, folds=3,
                                                        seed=1)
    units = {e.unit_id for es in corpus.words.values() for e in es}
    assert set(svm_preds) == units
    assert set(log_preds) == units
    assert set(labels) == units
    assert all(v in (0, 1) for v in svm_preds.values())
    assert all(v in (0, 1) for v in log_preds.values())
    for es in corpus.words.values():
        for e in es:
            assert labels[e.unit_id] == e.labels


def test_crossval_is_deterministic(tiny_corpus):
    out, _, _ = tiny_corpus
    corpus = build_training_set(out / "feats",
                                (out / "transcripts.csv").read_text())
    a = crossval_predictions(corpus, folds=3, seed=1)
    b = crossval_predictions(corpus, folds=3, seed=1)
    assert a == b


def test_crossval_benchmark_consistency(tiny_corpus):
    out, _, _ = tiny_corpus
    corpus = build_training_set(out / "feats",
                                (out / "transcripts.csv").read_text())
    result = crossval_benchmark(corpus, folds=3, seed=1)
    assert isinstance(result, BenchmarkResult)
    for value in (result.svm_raw, result.logistic_raw, result.max_achievable,
                  result.svm_adjusted, result.logistic_adjusted):
        assert 0.0 <= value <= 1.0
    assert result.svm_raw <= result.max_achievable
    assert result.logistic_raw <= result.max_achievable
    assert result.margin == pytest.approx(
        result.svm_adjusted - result.logistic_adjusted)


def test_crossval_rejects_single_fold(tiny_corpus):
    out, _, _ = tiny_corpus
    corpus = build_training_set(out / "feats",
                                (out / "transcripts.csv").read_text())
    with pytest.raises(DomainError):
        crossval_predictions(corpus, folds=1)
