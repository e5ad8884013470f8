import json
import math
import threading
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
import pytest

from captkit.classifier import LogisticModel
from captkit.errors import DomainError
from captkit.features import PER_PHONEME, extract
from captkit.feedback import build_report, worst_words
from captkit.frontend import DistortionSpec, synthesize
from captkit.service import (
    ServiceConfig,
    ServiceError,
    handle_health,
    handle_predict,
    handle_synth,
    make_server,
)

SIGMOID_1 = 1.0 / (1.0 + math.exp(-1.0))


def linear_model(word, weights, bias=0.0, p=3):
    d = PER_PHONEME * p + 1
    w = np.zeros(d)
    for idx, val in weights.items():
        w[idx] = val
    return LogisticModel(word=word, num_phonemes=p, weights=w, bias=bias,
                         mean=np.zeros(d), std=np.ones(d))


@pytest.fixture(scope="module")
def config(inventory, lexicon, generators, model_low_noise):
    models = {
        "cat": linear_model("cat", {0: 2.0}),
        "dog": linear_model("dog", {}, bias=-1.0),
    }
    return ServiceConfig(
        models=models,
        acoustic_model=model_low_noise,
        inventory=inventory,
        lexicon=lexicon,
        generators=generators,
    )


@pytest.fixture(scope="module")
def server(config):
    srv = make_server(config, port=0)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    host, port = srv.server_address
    yield f"http://{host}:{port}"
    srv.shutdown()
    thread.join(timeout=10)
    srv.server_close()


@pytest.fixture(scope="module")
def phrase_frames(generators):
    frames, _ = synthesize(["K", "AE", "T", "D", "AO", "G"],
                           DistortionSpec(noise_level=0.1), 42, generators)
    return frames


def frames_payload(frames):
    return {
        "frame_rate": frames.frame_rate,
        "dim": frames.dim,
        "data": [[float(v) for v in row] for row in frames.frames],
    }


def call(base, method, path, body=None, raw=None):
    data = raw
    if body is not None:
        data = json.dumps(body).encode("utf-8")
    req = urllib.request.Request(base + path, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=30) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


# ---------------------------------------------------------------------------
# Golden request/response pairs


def test_health_golden(server, config):
    status, body = call(server, "GET", "/health")
    assert status == 200
    assert body == {"status": "ok", "model_count": 2}
    assert handle_health(config) == body


def test_predict_golden(server):
    request = {"request_id": "req-1", "word": "cat",
               "features": [0.5] + [0.0] * 27}
    status, body = call(server, "POST", "/predict", request)
    assert status == 200
    assert set(body) == {"request_id", "probability"}
    assert body["request_id"] == "req-1"
    assert body["probability"] == pytest.approx(SIGMOID_1, rel=1e-12)


def test_predict_echoes_any_request_id(server):
    request = {"request_id": 17, "word": "dog", "features": [0.0] * 28}
    status, body = call(server, "POST", "/predict", request)
    assert status == 200
    assert body["request_id"] == 17
    assert body["probability"] == pytest.approx(1.0 / (1.0 + math.e), rel=1e-12)


def test_assess_golden_matches_direct_pipeline(server, config, phrase_frames):
    request = {"request_id": "a-1", "phrase": "cat dog",
               "frames": frames_payload(phrase_frames)}
    status, body = call(server, "POST", "/assess", request)
    assert status == 200

    vectors = extract(phrase_frames,
                      [("cat", ("K", "AE", "T")), ("dog", ("D", "AO", "G"))],
                      config.acoustic_model, config.inventory, config.featex)
    expected_words = []
    probabilities = []
    for vec in vectors:
        report = build_report(config.models[vec.word], vec,
                              delta=config.delta,
                              duration_step=config.duration_step)
        probabilities.append(report.probability)
        fields = report.to_dict()
        expected_words.append({
            "word": vec.word,
            "probability": fields["probability"],
            "feedback": {
                "ranking": fields["ranking"],
                "gains_sum": fields["gains_sum"],
                "gains_product": fields["gains_product"],
                "duration_direction": fields["duration_direction"],
            },
        })
    expected = {
        "request_id": "a-1",
        "words": expected_words,
        "worst_words": worst_words(probabilities, config.threshold,
                                   config.feedback_k),
    }
    assert body == json.loads(json.dumps(expected))
    assert [w["word"] for w in body["words"]] == ["cat", "dog"]
    for w in body["words"]:
        assert 0.0 <= w["probability"] <= 1.0
        assert sorted(w["feedback"]["ranking"]) == [1, 2, 3]


def test_synth_round_trips_through_assess(server):
    status, body = call(server, "POST", "/synth",
                        {"request_id": "s-1", "word": "cat",
                         "noise_level": 0.1, "seed": 3})
    assert status == 200
    assert body["request_id"] == "s-1"
    assert body["phrase"] == "cat"
    frames = body["frames"]
    assert frames["dim"] == 13
    assert frames["frame_rate"] > 0
    assert len(frames["data"]) > 0
    assert all(len(row) == 13 for row in frames["data"])

    status, assessed = call(server, "POST", "/assess",
                            {"request_id": "s-2", "phrase": "cat",
                             "frames": frames})
    assert status == 200
    assert assessed["words"][0]["word"] == "cat"


def test_synth_deterministic_and_distortion_changes_output(server):
    request = {"word": "cat", "noise_level": 0.5, "seed": 9}
    _, first = call(server, "POST", "/synth", request)
    _, second = call(server, "POST", "/synth", request)
    assert first == second
    _, distorted = call(server, "POST", "/synth",
                        {**request, "distortion": {"kind": "substitution",
                                                   "position": 1,
                                                   "detail": "UW"}})
    assert distorted["frames"]["data"] != first["frames"]["data"]


# ---------------------------------------------------------------------------
# Error codes


@pytest.mark.parametrize("method,path,body,raw,status,code", [
    ("GET", "/predict", None, None, 405, "method_not_allowed"),
    ("GET", "/assess", None, None, 405, "method_not_allowed"),
    ("POST", "/health", {}, None, 405, "method_not_allowed"),
    ("GET", "/nowhere", None, None, 404, "not_found"),
    ("POST", "/nowhere", {}, None, 404, "not_found"),
    ("POST", "/predict", None, b"{not json", 400, "bad_request"),
    ("POST", "/predict", None, None, 400, "bad_request"),
    ("POST", "/predict", ["list"], None, 400, "bad_request"),
    ("POST", "/predict", {"features": [0.0]}, None, 400, "bad_request"),
    ("POST", "/predict", {"word": "zzz", "features": []}, None,
     404, "unknown_word"),
    ("POST", "/predict", {"word": "cat"}, None, 400, "bad_request"),
    ("POST", "/predict", {"word": "cat", "features": "oops"}, None,
     400, "bad_request"),
    ("POST", "/assess", {"phrase": "   "}, None, 400, "bad_request"),
    ("POST", "/assess", {"phrase": "cat zzz"}, None, 404, "unknown_word"),
    ("POST", "/synth", {"word": "zzz"}, None, 404, "unknown_word"),
    ("POST", "/synth", {"word": "cat", "noise_level": 9.0}, None,
     400, "bad_request"),
    ("POST", "/synth", {"word": "cat", "seed": -1}, None, 400, "bad_request"),
    ("POST", "/synth", {"word": "cat",
                        "distortion": {"kind": "mumble", "position": 0}},
     None, 400, "bad_request"),
    ("POST", "/synth", {"word": "cat",
                        "distortion": {"kind": "deletion", "position": 7}},
     None, 400, "bad_request"),
    ("POST", "/synth", {"word": "cat",
                        "distortion": {"kind": "duration", "position": 0,
                                       "detail": "sideways"}},
     None, 400, "bad_request"),
    ("POST", "/synth", {"word": "cat",
                        "distortion": {"kind": "substitution", "position": 0,
                                       "detail": "SIL"}},
     None, 400, "bad_request"),
])
def test_error_codes(server, method, path, body, raw, status, code):
    got_status, got_body = call(server, method, path, body, raw)
    assert got_status == status
    assert got_body["error_code"] == code
    assert got_body["message"]


def test_predict_wrong_length_names_expected(server):
    status, body = call(server, "POST", "/predict",
                        {"word": "cat", "features": [0.0] * 27})
    assert status == 400
    assert body["error_code"] == "bad_vector_length"
    assert "28" in body["message"]
    assert "cat" in body["message"]


def test_predict_rejects_non_finite(server):
    status, body = call(server, "POST", "/predict",
                        {"word": "cat",
                         "features": [float("nan")] + [0.0] * 27})
    assert status == 400
    assert body["error_code"] == "bad_request"
    assert "finite" in body["message"]


def test_unknown_word_errors_name_the_word(server):
    _, body = call(server, "POST", "/predict",
                   {"word": "zzz", "features": []})
    assert "zzz" in body["message"]


def test_assess_word_without_model(server, lexicon, phrase_frames):
    other = next(w for w in lexicon.words() if w not in ("cat", "dog"))
    status, body = call(server, "POST", "/assess",
                        {"phrase": other,
                         "frames": frames_payload(phrase_frames)})
    assert status == 404
    assert body["error_code"] == "unknown_word"
    assert "no model" in body["message"]


@pytest.mark.parametrize("frames_obj", [
    "not an object",
    {"frame_rate": 100.0, "dim": 13},
    {"frame_rate": 100.0, "dim": 13, "data": []},
    {"frame_rate": 100.0, "dim": 13, "data": [[0.0] * 13, [0.0] * 5]},
    {"frame_rate": 100.0, "dim": 13, "data": "rows"},
    {"frame_rate": 0.0, "dim": 13, "data": [[0.0] * 13]},
    {"frame_rate": 100.0, "dim": 5, "data": [[0.0] * 13]},
])
def test_assess_malformed_frames(server, frames_obj):
    status, body = call(server, "POST", "/assess",
                        {"phrase": "cat", "frames": frames_obj})
    assert status == 400
    assert body["error_code"] == "bad_request"


def test_assess_dim_mismatch_against_model(server):
    status, body = call(server, "POST", "/assess",
                        {"phrase": "cat",
                         "frames": {"frame_rate": 100.0, "dim": 5,
                                    "data": [[0.0] * 5] * 10}})
    assert status == 400
    assert "acoustic model dim" in body["message"]


def test_assess_no_path_is_422(server):
    status, body = call(server, "POST", "/assess",
                        {"phrase": "cat",
                         "frames": {"frame_rate": 100.0, "dim": 13,
                                    "data": [[0.0] * 13, [0.0] * 13]}})
    assert status == 422
    assert body["error_code"] == "no_path"


def test_synth_disabled_without_generators(config):
    bare = replace(config, generators=None)
    with pytest.raises(ServiceError) as exc_info:
        handle_synth(bare, {"word": "cat"})
    assert exc_info.value.status == 404
    assert exc_info.value.error_code == "not_found"


def test_handler_rejects_non_object_payload(config):
    with pytest.raises(ServiceError) as exc_info:
        handle_predict(config, [1, 2, 3])
    assert exc_info.value.status == 400
    assert exc_info.value.body() == {
        "error_code": "bad_request",
        "message": "request body must be a JSON object",
    }


# ---------------------------------------------------------------------------
# Statelessness


def test_identical_concurrent_requests_identical_bodies(server):
    request = json.dumps({"request_id": "same", "word": "cat",
                          "features": [0.3] + [0.1] * 27}).encode("utf-8")

    def one(_):
        req = urllib.request.Request(
            server + "/predict", data=request, method="POST",
            headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req, timeout=30) as resp:
            return resp.status, resp.read()

    with ThreadPoolExecutor(max_workers=32) as pool:
        results = list(pool.map(one, range(300)))
    statuses = {s for s, _ in results}
    bodies = {b for _, b in results}
    assert statuses == {200}
    assert len(bodies) == 1
