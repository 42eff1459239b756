"""
Clients for the serving engine

Two interchangeable clients with the same surface:
- InProcessClient calls a ServingEngine directly
- HttpClient talks to the HTTP front end and reads the event stream with
  requests (stream=True, iter_lines)
Both report TTFT from the virtual timestamps carried by the events.
"""

import json
import logging
import time
from typing import Dict, List, Optional

import requests

from .engine import ChatRequest, ServingEngine, StreamEvent, ttft_of
from .errors import InvalidConfig, MalformedRequest, TransportError

logger = logging.getLogger(__name__)


class EngineClient:
    """Common client surface used by the probes and attack drivers."""

    def __init__(self, session: str = 'attacker', debug: bool = False):
        self.session = session
        self.debug = debug
        self.requests_sent = 0

    def _log(self, message: str) -> None:
        """Log debug messages if debug mode is enabled."""
        if self.debug:
            logger.debug(message)

    def generate(self, request: ChatRequest) -> List[StreamEvent]:
        raise NotImplementedError

    def flush(self, which: str = 'both') -> None:
        raise NotImplementedError

    def wait(self, seconds: float) -> None:
        """Pause between requests; virtual-time clients return at once."""

    def ttft(self, request: ChatRequest) -> float:
        return ttft_of(self.generate(request))

    def direct_ttft(self, text: str, lookup_only: bool = False) -> float:
        return self.ttft(ChatRequest.direct(text, session=self.session, lookup_only=lookup_only))

    def synthesized_ttft(self, system_text: str, user_text: str) -> float:
        return self.ttft(ChatRequest.synthesized(system_text, user_text, session=self.session))

    def with_session(self, session: str) -> 'EngineClient':
        raise NotImplementedError


class InProcessClient(EngineClient):
    def __init__(self, engine: ServingEngine, session: str = 'attacker', debug: bool = False):
        super().__init__(session=session, debug=debug)
        self.engine = engine

    def generate(self, request: ChatRequest) -> List[StreamEvent]:
        self.requests_sent += 1
        return self.engine.handle(request)

    def flush(self, which: str = 'both') -> None:
        self.engine.admin_flush(which)

    def with_session(self, session: str) -> 'InProcessClient':
        return InProcessClient(self.engine, session=session, debug=self.debug)


class HttpClient(EngineClient):
    """Client for a server started with `cacheleak serve`."""

    def __init__(self, base_url: str, session: str = 'attacker', timeout: float = 60.0,
                 realtime: bool = False, debug: bool = False):
        super().__init__(session=session, debug=debug)
        self.base_url = base_url.rstrip('/')
        self.timeout = timeout
        self.realtime = realtime
        self.http = requests.Session()

    def generate(self, request: ChatRequest) -> List[StreamEvent]:
        """
        Send a request and read its event stream.

        Raises:
            MalformedRequest: If the server rejects the request (HTTP 400)
            TransportError: On connection failures and other error statuses
        """
        self.requests_sent += 1
        url = f"{self.base_url}/v1/generate"
        self._log(f"POST {url} mode={request.mode} session={request.session}")
        try:
            with self.http.post(url, json=request.to_dict(), stream=True, timeout=self.timeout) as response:
                if response.status_code == 400:
                    raise MalformedRequest(response.json().get('error', 'Bad request'))
                if response.status_code != 200:
                    raise TransportError(f"Server returned status {response.status_code}: {response.text}")
                events = []
                for line in response.iter_lines():
                    if not line:
                        continue
                    events.append(StreamEvent.from_wire(json.loads(line.decode('utf-8'))))
                return events
        except requests.exceptions.RequestException as e:
            raise TransportError(f"Request to {url} failed: {e}", cause=e) from e

    def flush(self, which: str = 'both') -> None:
        url = f"{self.base_url}/admin/flush"
        try:
            response = self.http.post(url, json={'which': which}, timeout=self.timeout)
        except requests.exceptions.RequestException as e:
            raise TransportError(f"Request to {url} failed: {e}", cause=e) from e
        if response.status_code != 200:
            raise TransportError(f"Flush rejected with status {response.status_code}: {response.text}")

    def health(self) -> Dict:
        url = f"{self.base_url}/health"
        try:
            response = self.http.get(url, timeout=self.timeout)
            response.raise_for_status()
            return response.json()
        except requests.exceptions.RequestException as e:
            raise TransportError(f"Health check against {url} failed: {e}", cause=e) from e

    def wait(self, seconds: float) -> None:
        if self.realtime and seconds > 0:
            time.sleep(seconds)

    def with_session(self, session: str) -> 'HttpClient':
        client = HttpClient(self.base_url, session=session, timeout=self.timeout,
                            realtime=self.realtime, debug=self.debug)
        client.http = self.http
        return client


def make_client(engine: Optional[ServingEngine] = None, url: str = '', session: str = 'attacker',
                debug: bool = False) -> EngineClient:
    """HTTP client when a server URL is given, otherwise an in-process client."""
    if url:
        return HttpClient(url, session=session, debug=debug)
    if engine is None:
        raise InvalidConfig("A client needs an engine or a server URL")
    return InProcessClient(engine, session=session, debug=debug)
