"""
HTTP front end for the serving engine

Endpoints:
1. POST /v1/generate   - newline-delimited JSON event stream
2. POST /admin/flush   - {"which": "kv" | "semantic" | "both"}, admin mode only
3. GET  /health        - engine status and cache statistics

Event timestamps are virtual; in realtime mode the handler also sleeps so
each event leaves the socket at its timestamp relative to request receipt.
"""

import json
import logging
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Dict, Optional, Tuple

from .engine import ChatRequest, ServerConfig, ServingEngine
from .errors import EngineShuttingDown, MalformedRequest

logger = logging.getLogger(__name__)


class EngineRequestHandler(BaseHTTPRequestHandler):
    """Handler bound to one ServingEngine through the server instance."""

    server: 'EngineHTTPServer'

    def log_message(self, format: str, *args) -> None:
        logger.debug("%s - %s", self.address_string(), format % args)

    def _send_json(self, status: int, payload: Dict) -> None:
        body = json.dumps(payload).encode('utf-8')
        self.send_response(status)
        self.send_header('Content-Type', 'application/json')
        self.send_header('Content-Length', str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self) -> Dict:
        length = int(self.headers.get('Content-Length') or 0)
        raw = self.rfile.read(length) if length else b''
        try:
            return json.loads(raw.decode('utf-8') or '{}')
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise MalformedRequest(f"Body is not valid JSON: {e}") from e

    def do_GET(self) -> None:
        if self.path != '/health':
            self._send_json(404, {'error': f"Unknown path: {self.path}"})
            return
        engine = self.server.engine
        status = 'shutting_down' if engine.closed else 'ok'
        self._send_json(200, {'status': status, **engine.stats()})

    def do_POST(self) -> None:
        received = time.monotonic()
        try:
            if self.path == '/v1/generate':
                self._generate(received)
            elif self.path == '/admin/flush':
                self._flush()
            else:
                self._send_json(404, {'error': f"Unknown path: {self.path}"})
        except MalformedRequest as e:
            self._send_json(400, {'error': str(e)})
        except EngineShuttingDown as e:
            self._send_json(503, {'error': str(e)})

    def _generate(self, received: float) -> None:
        request = ChatRequest.from_dict(self._read_json())
        events = self.server.engine.handle(request)

        self.send_response(200)
        self.send_header('Content-Type', 'application/x-ndjson')
        self.end_headers()
        for event in events:
            if self.server.realtime:
                delay = received + event.emit_time - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
            self.wfile.write((json.dumps(event.to_wire()) + '\n').encode('utf-8'))
            self.wfile.flush()

    def _flush(self) -> None:
        if not self.server.admin:
            self._send_json(403, {'error': 'Admin endpoints are disabled'})
            return
        body = self._read_json()
        if not isinstance(body, dict):
            raise MalformedRequest("Flush body must be a JSON object")
        which = body.get('which', 'both')
        self.server.engine.admin_flush(which)
        self._send_json(200, {'flushed': which})


class EngineHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: Tuple[str, int], engine: ServingEngine,
                 admin: bool = False, realtime: bool = False):
        super().__init__(address, EngineRequestHandler)
        self.engine = engine
        self.admin = admin
        self.realtime = realtime

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


def make_server(engine: ServingEngine, config: Optional[ServerConfig] = None) -> EngineHTTPServer:
    config = config or ServerConfig()
    config.validate()
    return EngineHTTPServer((config.host, config.port), engine, admin=config.admin, realtime=config.realtime)


def serve_in_thread(engine: ServingEngine, config: Optional[ServerConfig] = None) -> Tuple[EngineHTTPServer, threading.Thread]:
    """Start a server on a daemon thread; port 0 picks a free port."""
    server = make_server(engine, config)
    thread = threading.Thread(target=server.serve_forever, name='cacheleak-server', daemon=True)
    thread.start()
    logger.info("Serving on %s", server.url)
    return server, thread
