"""HTTP prediction service: words plus features (or raw frames) in,
intelligibility probabilities and practice feedback out.

Endpoints (JSON bodies):

* ``POST /predict``  {request_id, word, features: [numbers]}
  → {request_id, probability}
* ``POST /assess``   {request_id, phrase, frames: {frame_rate, dim, data}}
  → {request_id, words: [{word, probability, feedback}], worst_words}
* ``POST /synth``    {request_id, word, distortion?, noise_level?, seed?}
  → {request_id, phrase, frames}  (synthetic attempt generator for clients
  without a microphone; same frames schema as /assess accepts)
* ``GET /health``    → {status, model_count}

Errors carry ``{error_code, message}`` with a matching HTTP status:
unknown word → 404 ``unknown_word``; malformed payloads → 400; an
utterance the grammar cannot explain → 422 ``no_path``.

All models are loaded once at startup and never mutated, so identical
requests produce identical responses, including under concurrency.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .acoustic import AcousticModel
from .decoder import DecoderConfig
from .errors import CaptError, NoPathError
from .features import FeatexConfig, extract
from .feedback import (
    DEFAULT_DELTA,
    DEFAULT_DURATION_STEP,
    build_report,
    worst_words,
)
from .frontend import DistortionSpec, FeatureFrames, PhonemeGenerators, synthesize
from .phoneset import SIL, Lexicon, PhonemeInventory
from .simulate import wrap_with_silence

__all__ = [
    "ServiceConfig",
    "ServiceError",
    "handle_predict",
    "handle_assess",
    "handle_synth",
    "handle_health",
    "make_server",
    "run_server",
]

DEFAULT_THRESHOLD = 0.5
DEFAULT_FEEDBACK_K = 1


class ServiceError(Exception):
    """A request failure with an HTTP status and stable error code."""

    def __init__(self, status: int, error_code: str, message: str):
        super().__init__(message)
        self.status = status
        self.error_code = error_code
        self.message = message

    def body(self) -> Dict[str, str]:
        return {"error_code": self.error_code, "message": self.message}


@dataclass
class ServiceConfig:
    """Everything a running service needs; read-only after startup."""

    models: Mapping[str, object]  # word -> predictor with predict_prob
    acoustic_model: AcousticModel
    inventory: PhonemeInventory
    lexicon: Lexicon
    generators: Optional[PhonemeGenerators] = None
    threshold: float = DEFAULT_THRESHOLD
    feedback_k: int = DEFAULT_FEEDBACK_K
    delta: float = DEFAULT_DELTA
    duration_step: float = DEFAULT_DURATION_STEP
    featex: FeatexConfig = field(
        default_factory=lambda: FeatexConfig(
            align_cfg=DecoderConfig(beam=math.inf),
            pass_cfg=DecoderConfig(beam=math.inf),
        )
    )


def _require_object(payload) -> dict:
    if not isinstance(payload, dict):
        raise ServiceError(400, "bad_request", "request body must be a JSON object")
    return payload


def _request_id(payload: dict):
    return payload.get("request_id")


def _parse_frames(obj) -> FeatureFrames:
    if not isinstance(obj, dict):
        raise ServiceError(400, "bad_request", "frames must be an object")
    for key in ("frame_rate", "dim", "data"):
        if key not in obj:
            raise ServiceError(400, "bad_request", f"frames missing field {key!r}")
    try:
        frame_rate = float(obj["frame_rate"])
        dim = int(obj["dim"])
    except (TypeError, ValueError):
        raise ServiceError(400, "bad_request", "frame_rate/dim must be numeric")
    data = obj["data"]
    if not isinstance(data, list) or not data:
        raise ServiceError(400, "bad_request", "frames data must be a non-empty list")
    try:
        arr = np.asarray(data, dtype=np.float64)
    except (TypeError, ValueError):
        raise ServiceError(400, "bad_request", "frames data must be numeric")
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ServiceError(
            400, "bad_request",
            f"frames data must be rows of length dim={dim}",
        )
    if not np.all(np.isfinite(arr)):
        raise ServiceError(400, "bad_request", "frames data must be finite")
    if frame_rate <= 0:
        raise ServiceError(400, "bad_request", "frame_rate must be positive")
    return FeatureFrames(arr, frame_rate)


def handle_predict(config: ServiceConfig, payload) -> dict:
    payload = _require_object(payload)
    word = payload.get("word")
    if not isinstance(word, str) or not word:
        raise ServiceError(400, "bad_request", "missing word")
    model = config.models.get(word)
    if model is None:
        raise ServiceError(404, "unknown_word", f"no model for word {word!r}")
    feats = payload.get("features")
    if not isinstance(feats, list):
        raise ServiceError(400, "bad_request", "features must be a list of numbers")
    expected = int(model.mean.shape[0])
    if len(feats) != expected:
        raise ServiceError(
            400, "bad_vector_length",
            f"word {word!r} expects {expected} features "
            f"({model.num_phonemes} phonemes), got {len(feats)}",
        )
    try:
        vec = np.asarray(feats, dtype=np.float64)
    except (TypeError, ValueError):
        raise ServiceError(400, "bad_request", "features must be numeric")
    if not np.all(np.isfinite(vec)):
        raise ServiceError(400, "bad_request", "features must be finite")
    prob = float(model.predict_prob(vec[np.newaxis, :])[0])
    return {"request_id": _request_id(payload), "probability": prob}


def _phrase_words(config: ServiceConfig, phrase) -> List[Tuple[str, Tuple[str, ...]]]:
    if not isinstance(phrase, str) or not phrase.strip():
        raise ServiceError(400, "bad_request", "missing phrase")
    words = phrase.split()
    out = []
    for w in words:
        if w not in config.lexicon:
            raise ServiceError(404, "unknown_word", f"word {w!r} not in lexicon")
        if w not in config.models:
            raise ServiceError(404, "unknown_word", f"no model for word {w!r}")
        out.append((w, tuple(config.lexicon.pronunciation(w))))
    return out


def handle_assess(config: ServiceConfig, payload) -> dict:
    payload = _require_object(payload)
    words = _phrase_words(config, payload.get("phrase"))
    frames = _parse_frames(payload.get("frames"))
    if frames.dim != config.acoustic_model.dim:
        raise ServiceError(
            400, "bad_request",
            f"frames dim {frames.dim} does not match acoustic model dim "
            f"{config.acoustic_model.dim}",
        )
    try:
        vectors = extract(
            frames, words, config.acoustic_model, config.inventory, config.featex
        )
    except NoPathError as exc:
        raise ServiceError(422, "no_path", str(exc))
    except CaptError as exc:
        raise ServiceError(422, "no_path", f"assessment failed: {exc}")

    word_entries = []
    probabilities = []
    for vec in vectors:
        model = config.models[vec.word]
        report = build_report(
            model, vec, delta=config.delta, duration_step=config.duration_step
        )
        probabilities.append(report.probability)
        fields = report.to_dict()
        word_entries.append(
            {
                "word": vec.word,
                "probability": fields["probability"],
                "feedback": {
                    "ranking": fields["ranking"],
                    "gains_sum": fields["gains_sum"],
                    "gains_product": fields["gains_product"],
                    "duration_direction": fields["duration_direction"],
                },
            }
        )
    return {
        "request_id": _request_id(payload),
        "words": word_entries,
        "worst_words": worst_words(
            probabilities, config.threshold, config.feedback_k
        ),
    }


def _parse_distortion(obj, pron_len: int) -> Tuple[str, int, str]:
    if obj is None:
        return "clean", -1, ""
    if not isinstance(obj, dict):
        raise ServiceError(400, "bad_request", "distortion must be an object")
    kind = obj.get("kind", "clean")
    if kind == "clean":
        return "clean", -1, ""
    position = obj.get("position")
    detail = obj.get("detail", "")
    if kind not in ("substitution", "deletion", "insertion", "duration"):
        raise ServiceError(400, "bad_request", f"unknown distortion kind {kind!r}")
    if not isinstance(position, int):
        raise ServiceError(400, "bad_request", "distortion position must be an integer")
    limit = pron_len + 1 if kind == "insertion" else pron_len
    if not 0 <= position < limit:
        raise ServiceError(
            400, "bad_request",
            f"distortion position {position} outside word of {pron_len} phonemes",
        )
    if kind == "duration" and detail not in ("shorter", "longer"):
        raise ServiceError(
            400, "bad_request", "duration distortion detail must be shorter|longer"
        )
    if not isinstance(detail, str):
        raise ServiceError(400, "bad_request", "distortion detail must be a string")
    return kind, position, detail


def handle_synth(config: ServiceConfig, payload) -> dict:
    payload = _require_object(payload)
    if config.generators is None:
        raise ServiceError(404, "not_found", "synthesis is not enabled")
    word = payload.get("word")
    if not isinstance(word, str) or word not in config.lexicon:
        raise ServiceError(404, "unknown_word", f"word {word!r} not in lexicon")
    pron = list(config.lexicon.pronunciation(word))
    kind, position, detail = _parse_distortion(payload.get("distortion"), len(pron))
    noise = payload.get("noise_level", 0.8)
    try:
        noise = float(noise)
    except (TypeError, ValueError):
        raise ServiceError(400, "bad_request", "noise_level must be numeric")
    if not 0.0 <= noise <= 4.0:
        raise ServiceError(400, "bad_request", "noise_level must lie in [0, 4]")
    seed = payload.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ServiceError(400, "bad_request", "seed must be a non-negative integer")

    from .simulate import _distortion_spec  # shared edit-to-spec mapping

    if kind in ("substitution", "insertion") and detail not in config.inventory:
        raise ServiceError(400, "bad_request", f"unknown phoneme {detail!r}")
    if kind in ("substitution", "insertion") and detail == SIL:
        raise ServiceError(400, "bad_request", "distortion phoneme must not be silence")
    spec = _distortion_spec(kind, position, detail, noise, offset=1)
    frames, _ = synthesize(
        wrap_with_silence(pron), spec, seed, config.generators
    )
    return {
        "request_id": _request_id(payload),
        "phrase": word,
        "frames": {
            "frame_rate": frames.frame_rate,
            "dim": frames.dim,
            "data": [[float(v) for v in row] for row in frames.frames],
        },
    }


def handle_health(config: ServiceConfig) -> dict:
    return {"status": "ok", "model_count": len(config.models)}


_POST_ROUTES = {
    "/predict": handle_predict,
    "/assess": handle_assess,
    "/synth": handle_synth,
}


class _Handler(BaseHTTPRequestHandler):
    config: ServiceConfig  # set on the subclass by make_server
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, status: int, obj) -> None:
        body = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/health":
            self._send_json(200, handle_health(self.config))
        elif self.path in _POST_ROUTES:
            self._send_json(405, {"error_code": "method_not_allowed",
                                  "message": f"{self.path} requires POST"})
        else:
            self._send_json(404, {"error_code": "not_found",
                                  "message": f"no route {self.path}"})

    def do_POST(self):
        handler = _POST_ROUTES.get(self.path)
        if handler is None:
            if self.path == "/health":
                self._send_json(405, {"error_code": "method_not_allowed",
                                      "message": "/health requires GET"})
            else:
                self._send_json(404, {"error_code": "not_found",
                                      "message": f"no route {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length) if length else b""
            try:
                payload = json.loads(raw.decode("utf-8")) if raw else None
            except (ValueError, UnicodeDecodeError):
                raise ServiceError(400, "bad_request", "body is not valid JSON")
            self._send_json(200, handler(self.config, payload))
        except ServiceError as exc:
            self._send_json(exc.status, exc.body())
        except Exception as exc:  # pragma: no cover - defensive
            self._send_json(500, {"error_code": "internal_error",
                                  "message": str(exc)})


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    # Survive request bursts instead of resetting connections.
    request_queue_size = 256


def make_server(config: ServiceConfig, port: int = 0,
                host: str = "127.0.0.1") -> ThreadingHTTPServer:
    """Build a threading HTTP server bound to ``host:port`` (0 = ephemeral)."""
    handler = type("BoundHandler", (_Handler,), {"config": config})
    return _Server((host, port), handler)


def run_server(config: ServiceConfig, port: int = 0,
               host: str = "127.0.0.1") -> None:
    """Serve until interrupted; prints the bound port for --port 0 use."""
    server = make_server(config, port, host)
    print(f"listening on {server.server_address[0]}:{server.server_address[1]}",
          flush=True)
    try:
        server.serve_forever()
    finally:
        server.server_close()
