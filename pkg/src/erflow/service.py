"""HTTP/JSON front-end for an :class:`~erflow.pipeline.IncrementalResolver`.

Endpoints::

    POST /records                   body: {"source_id", "record_ordinal", "payload"}
    GET  /profiles?ref_id=ID
    GET  /profiles?attr=NAME&value=V
    GET  /report
    GET  /health

Status codes: 200 ok, 400 malformed, 404 unknown ref, 409 ref_id conflict,
500 internal.
"""
from __future__ import annotations

import json
import logging
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from .core import InformationRecord
from .errors import ConfigError, ConflictError, InvalidArgument, InvalidInput, NotFound, RecordError
from .extraction import payload_from_object
from .pipeline import IncrementalResolver

log = logging.getLogger(__name__)

MAX_BODY = 1 << 20
RECORD_KEYS = {"source_id", "record_ordinal", "payload"}


class BadRequest(Exception):
    pass


def record_from_body(body: bytes) -> InformationRecord:
    try:
        obj = json.loads(body)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise BadRequest(f"body is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise BadRequest("body must be a JSON object")
    unknown = set(obj) - RECORD_KEYS
    if unknown:
        raise BadRequest(f"unknown keys {sorted(unknown)}")
    missing = RECORD_KEYS - set(obj)
    if missing:
        raise BadRequest(f"missing keys {sorted(missing)}")
    sid, ordinal = obj["source_id"], obj["record_ordinal"]
    if not isinstance(sid, str) or not sid:
        raise BadRequest("source_id must be a non-empty string")
    if isinstance(ordinal, bool) or not isinstance(ordinal, int) or ordinal < 0:
        raise BadRequest("record_ordinal must be a non-negative integer")
    try:
        payload = payload_from_object(obj["payload"])
    except InvalidArgument as exc:
        raise BadRequest(f"payload: {exc}") from None
    return InformationRecord(sid, ordinal, payload)


class ResolverHandler(BaseHTTPRequestHandler):
    resolver: IncrementalResolver = None  # set by make_server
    server_version = "erflow"

    def log_message(self, fmt, *args):
        log.info("%s %s", self.address_string(), fmt % args)

    def _send(self, status: int, obj) -> None:
        body = (json.dumps(obj, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, message: str) -> None:
        self._send(status, {"error": message})

    def _dispatch(self, fn):
        try:
            fn()
        except BadRequest as exc:
            self._error(400, str(exc))
        except (RecordError, InvalidArgument, InvalidInput, ConfigError) as exc:
            self._error(400, str(exc))
        except NotFound as exc:
            self._error(404, str(exc))
        except ConflictError as exc:
            self._error(409, str(exc))
        except Exception as exc:  # noqa: BLE001 - report, keep serving
            log.exception("internal error")
            self._error(500, f"internal error: {exc}")

    def do_POST(self):
        self._dispatch(self._post)

    def do_GET(self):
        self._dispatch(self._get)

    def _post(self):
        url = urlsplit(self.path)
        if url.path != "/records":
            raise NotFound(f"no such endpoint {url.path}")
        length = int(self.headers.get("Content-Length") or 0)
        if length <= 0 or length > MAX_BODY:
            raise BadRequest("request body missing or too large")
        record = record_from_body(self.rfile.read(length))
        profiles = self.resolver.ingest(record)
        ref_id = f"{record.source_id}:{record.record_ordinal}"
        dropped = ref_id not in self.resolver.refs
        self._send(200, {
            "ref_id": None if dropped else ref_id,
            "dropped": dropped,
            "profiles": [p.to_dict() for p in profiles],
        })

    def _get(self):
        url = urlsplit(self.path)
        query = {k: v[-1] for k, v in parse_qs(url.query).items()}
        if url.path == "/health":
            self._send(200, {"status": "ok", "store_version": self.resolver.store.latest})
        elif url.path == "/report":
            self._send(200, self.resolver.report())
        elif url.path == "/profiles":
            if "ref_id" in query:
                profiles = self.resolver.query_profiles(ref_id=query["ref_id"])
            elif "attr" in query and "value" in query:
                profiles = self.resolver.query_profiles(attr=query["attr"], value=query["value"])
            else:
                raise BadRequest("use ?ref_id=ID or ?attr=NAME&value=V")
            self._send(200, {"profiles": [p.to_dict() for p in profiles]})
        else:
            raise NotFound(f"no such endpoint {url.path}")


def make_server(resolver: IncrementalResolver, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    handler = type("BoundResolverHandler", (ResolverHandler,), {"resolver": resolver})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


def parse_listen(address: str) -> tuple:
    host, sep, port = address.rpartition(":")
    if not sep:
        host, port = "127.0.0.1", address
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise ConfigError(f"invalid listen address {address!r}", "listen") from None
