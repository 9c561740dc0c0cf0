"""HTTP serving for a saved adapter.

POST /embed  {"texts": [str, ...]}        -> {"vectors": [[...], ...], "dim": int}
POST /score  {"pairs": [[str, str], ...]} -> {"scores": [float, ...]}
GET  /health                              -> {"status": "ok", "model_id": str}

The model is read-only after load, so every response is a pure function of
the request body; malformed requests get a 400 with a JSON error body.
"""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .errors import TrainerError
from .model import LinearAdapter


class RequestError(TrainerError):
    """Client-side request problem; carries the HTTP status to answer with."""

    def __init__(self, message: str, status: int = 400):
        super().__init__(message)
        self.status = status


def _parse_embed(payload: object) -> list[str]:
    if not isinstance(payload, dict) or "texts" not in payload:
        raise RequestError("request body must be an object with a texts field")
    texts = payload["texts"]
    if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
        raise RequestError("texts must be a list of strings")
    return texts


def _parse_score(payload: object) -> list[tuple[str, str]]:
    if not isinstance(payload, dict) or "pairs" not in payload:
        raise RequestError("request body must be an object with a pairs field")
    pairs = payload["pairs"]
    if not isinstance(pairs, list):
        raise RequestError("pairs must be a list of [text, text] items")
    parsed = []
    for item in pairs:
        if (
            not isinstance(item, (list, tuple))
            or len(item) != 2
            or not all(isinstance(t, str) for t in item)
        ):
            raise RequestError("pairs must be a list of [text, text] items")
        parsed.append((item[0], item[1]))
    return parsed


def _handler_for(model: LinearAdapter) -> type[BaseHTTPRequestHandler]:
    class Handler(BaseHTTPRequestHandler):
        def _send(self, status: int, body: dict) -> None:
            data = json.dumps(body).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            if self.path == "/health":
                self._send(200, {"status": "ok", "model_id": model.model_id})
            else:
                self._send(404, {"error": f"unknown path {self.path}"})

        def do_POST(self):
            length = int(self.headers.get("Content-Length", "0"))
            try:
                payload = json.loads(self.rfile.read(length))
            except json.JSONDecodeError:
                self._send(400, {"error": "request body is not valid JSON"})
                return
            try:
                if self.path == "/embed":
                    texts = _parse_embed(payload)
                    vectors = [[float(x) for x in row] for row in model.embed(texts)]
                    self._send(200, {"vectors": vectors, "dim": model.dim})
                elif self.path == "/score":
                    pairs = _parse_score(payload)
                    self._send(200, {"scores": model.score_pairs(pairs)})
                else:
                    self._send(404, {"error": f"unknown path {self.path}"})
            except RequestError as exc:
                self._send(exc.status, {"error": str(exc)})

        def log_message(self, *args):
            pass

    return Handler


def make_server(
    model: LinearAdapter, host: str = "127.0.0.1", port: int = 0
) -> ThreadingHTTPServer:
    """Bound but not yet running server; port 0 picks a free port."""
    return ThreadingHTTPServer((host, port), _handler_for(model))


def serve(model_dir: Path, host: str = "127.0.0.1", port: int = 8675) -> None:
    """Blocking serve loop for a saved model directory."""
    model = LinearAdapter.load(model_dir)
    server = make_server(model, host, port)
    bound_port = server.server_address[1]
    print(f"serving {model.model_id} on http://{host}:{bound_port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
