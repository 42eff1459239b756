"""
Mock LLM serving engine

Serves chat requests the way a cache-sharing inference stack does:
1. Renders synthesized requests through the role template
2. Answers from the semantic cache when a similar request was seen
3. Otherwise matches the prompt against the prefix cache and prices the
   prefill with the latency oracle
4. Caches the prompt prefix and, after the last token, the response
5. Returns the token stream stamped with virtual emission times

All cache access happens under one engine lock.
"""

import hashlib
import logging
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .anonymizer import Anonymizer, RestoreMap, restore
from .corpus import END_TAG, SYSTEM_TAG, USER_TAG, Vocab, build_vocab, encode_lenient, seed_words
from .errors import EngineShuttingDown, InvalidConfig, MalformedRequest, SequenceExceedsCapacity
from .latency import LatencyParams, prefill_ttft, semantic_ttft
from .prefix_cache import PrefixCache, PrefixCacheConfig
from .rng import SeededRNG, derive_seed
from .semantic_cache import SemanticCache, SemanticCacheConfig

logger = logging.getLogger(__name__)

MODES = ('direct', 'synthesized')
ROLES = ('system', 'user')
FLUSH_TARGETS = ('kv', 'semantic', 'both')


@dataclass
class ServerConfig:
    """[server] section."""

    host: str = '127.0.0.1'
    port: int = 8765
    admin: bool = False
    realtime: bool = False
    cache_aware: bool = False
    url: str = ''

    def validate(self) -> None:
        if not 0 <= self.port <= 65535:
            raise InvalidConfig("server.port must be between 0 and 65535")


@dataclass
class PromptTemplate:
    system_prefix: str = f"{SYSTEM_TAG} "
    separator: str = f" {END_TAG} "
    user_prefix: str = f"{USER_TAG} "


def synthesize_prompt(template: PromptTemplate, system_text: str, user_text: str) -> str:
    return template.system_prefix + system_text + template.separator + template.user_prefix + user_text


@dataclass
class Message:
    role: str
    text: str


@dataclass
class ChatRequest:
    mode: str
    messages: List[Message]
    max_tokens: int = 1
    temperature: float = 0.0
    stream: bool = True
    session: str = 'default'
    seed: int = 0
    lookup_only: bool = False

    def validate(self) -> None:
        """
        Raises:
            MalformedRequest: If the request breaks the request contract
        """
        if self.mode not in MODES:
            raise MalformedRequest(f"Unknown mode: {self.mode!r}")
        for message in self.messages:
            if message.role not in ROLES:
                raise MalformedRequest(f"Unknown role: {message.role!r}")
        if self.mode == 'direct' and len(self.messages) != 1:
            raise MalformedRequest("Direct requests carry exactly one raw text")
        if self.mode == 'synthesized' and not any(m.role == 'user' for m in self.messages):
            raise MalformedRequest("Synthesized requests need at least one user message")
        if self.max_tokens < 1:
            raise MalformedRequest("max_tokens must be a positive integer")
        if self.temperature < 0:
            raise MalformedRequest("temperature must be non-negative")

    @classmethod
    def direct(cls, text: str, **kwargs) -> 'ChatRequest':
        return cls(mode='direct', messages=[Message('user', text)], **kwargs)

    @classmethod
    def synthesized(cls, system_text: str, user_text: str, **kwargs) -> 'ChatRequest':
        return cls(mode='synthesized',
                   messages=[Message('system', system_text), Message('user', user_text)],
                   **kwargs)

    def to_dict(self) -> Dict:
        return {
            'mode': self.mode,
            'messages': [{'role': m.role, 'text': m.text} for m in self.messages],
            'max_tokens': self.max_tokens,
            'temperature': self.temperature,
            'stream': self.stream,
            'session': self.session,
            'seed': self.seed,
            'lookup_only': self.lookup_only,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'ChatRequest':
        """
        Build a request from its wire form.

        Raises:
            MalformedRequest: On missing or mistyped fields
        """
        if not isinstance(data, dict):
            raise MalformedRequest("Request body must be a JSON object")
        try:
            messages = [Message(str(m['role']), str(m['text'])) for m in data['messages']]
            request = cls(
                mode=str(data['mode']),
                messages=messages,
                max_tokens=int(data.get('max_tokens', 1)),
                temperature=float(data.get('temperature', 0.0)),
                stream=bool(data.get('stream', True)),
                session=str(data.get('session', 'default')),
                seed=int(data.get('seed', 0)),
                lookup_only=bool(data.get('lookup_only', False)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedRequest(f"Malformed request: {e}") from e
        request.validate()
        return request


@dataclass
class StreamEvent:
    kind: str
    token_text: Optional[str]
    emit_time: float

    def to_wire(self) -> Dict:
        event = {'event': self.kind, 't_ms': self.emit_time * 1000.0}
        if self.kind == 'token':
            event['text'] = self.token_text
        return event

    @classmethod
    def from_wire(cls, data: Dict) -> 'StreamEvent':
        return cls(kind=data['event'], token_text=data.get('text'), emit_time=float(data['t_ms']) / 1000.0)


def ttft_of(events: Sequence[StreamEvent]) -> float:
    """Emission time of the first token event."""
    for event in events:
        if event.kind == 'token':
            return event.emit_time
    raise MalformedRequest("Response stream carried no token event")


@dataclass
class HandleRecord:
    """What the engine did for one request; kept for tests and reports."""

    semantic_hit: bool
    hit_tokens: int
    miss_tokens: int
    ttft: float


class ServingEngine:
    """In-process serving engine; the HTTP server wraps one instance."""

    def __init__(self,
                 latency: Optional[LatencyParams] = None,
                 kv_config: Optional[PrefixCacheConfig] = None,
                 semantic_config: Optional[SemanticCacheConfig] = None,
                 template: Optional[PromptTemplate] = None,
                 vocab: Optional[Vocab] = None,
                 anonymizer: Optional[Anonymizer] = None):
        self.latency = latency or LatencyParams()
        self.latency.validate()
        self.kv_config = kv_config or PrefixCacheConfig()
        self.semantic_config = semantic_config or SemanticCacheConfig()
        self.template = template or PromptTemplate()
        self.vocab = vocab or build_vocab()
        self.kv_cache = PrefixCache.from_config(self.kv_config)
        self.semantic_cache = SemanticCache(self.semantic_config)
        self.anonymizer = anonymizer or Anonymizer()
        self.last_record: Optional[HandleRecord] = None

        self._lock = threading.Lock()
        self._closed = False
        self._sessions: Dict[str, SeededRNG] = {}
        self._babble_words = seed_words()

    ##### Request rendering #####

    def render(self, request: ChatRequest) -> str:
        """Full prompt text the model would prefill."""
        if request.mode == 'direct':
            return request.messages[0].text
        system_text = ' '.join(m.text for m in request.messages if m.role == 'system')
        user_text = ' '.join(m.text for m in request.messages if m.role == 'user')
        return synthesize_prompt(self.template, system_text, user_text)

    @staticmethod
    def semantic_key(request: ChatRequest) -> str:
        """Text the semantic cache is keyed on: the last user message."""
        if request.mode == 'direct':
            return request.messages[0].text
        return [m.text for m in request.messages if m.role == 'user'][-1]

    def session_rng(self, session: str) -> SeededRNG:
        rng = self._sessions.get(session)
        if rng is None:
            rng = SeededRNG(derive_seed(self.latency.rng_seed, f"session:{session}"))
            self._sessions[session] = rng
        return rng

    def _babble(self, prompt: str, count: int, temperature: float, seed: int) -> List[str]:
        """Deterministic response tokens for a prompt; independent of cache state."""
        state = hashlib.sha256(f"{seed}:{round(temperature, 2)}:{prompt}".encode('utf-8')).digest()
        words = []
        for _ in range(count):
            state = hashlib.sha256(state).digest()
            words.append(self._babble_words[int.from_bytes(state[:8], 'big') % len(self._babble_words)])
        return words

    def _stream(self, tokens: Sequence[str], ttft: float) -> List[StreamEvent]:
        events = []
        emit = ttft
        for i, token in enumerate(tokens):
            emit = ttft + i * self.latency.t_decode_per_token
            events.append(StreamEvent('token', token, emit))
        events.append(StreamEvent('eos', None, emit))
        return events

    ##### Public operations #####

    def handle(self, request: ChatRequest) -> List[StreamEvent]:
        """
        Serve one request.

        Args:
            request: Chat request

        Returns:
            Token events followed by exactly one eos event

        Raises:
            MalformedRequest: If the request is not well formed
            EngineShuttingDown: After close()
        """
        request.validate()
        with self._lock:
            if self._closed:
                raise EngineShuttingDown("Engine is shutting down")

            rng = self.session_rng(request.session)
            prompt = self.render(request)
            key = self.semantic_key(request)
            restore_map: Optional[RestoreMap] = None
            if self.semantic_config.enabled and self.semantic_config.anonymize:
                key, restore_map = self.anonymizer.anonymize(key)

            if self.semantic_config.enabled:
                found = self.semantic_cache.lookup(key)
                if found is not None:
                    tokens = found[0].split()[:request.max_tokens]
                    if restore_map is not None:
                        tokens = [restore(t, restore_map).text for t in tokens]
                    ttft = semantic_ttft(self.latency, True, rng)
                    self.last_record = HandleRecord(True, 0, 0, ttft)
                    return self._stream(tokens, ttft)

            ids = encode_lenient(prompt, self.vocab)
            match = self.kv_cache.match_prefix(ids)
            hit_tokens = match.shared_len
            miss_tokens = len(ids) - hit_tokens
            ttft = prefill_ttft(self.latency, hit_tokens, miss_tokens, rng)
            try:
                self.kv_cache.insert(ids)
            except SequenceExceedsCapacity as e:
                logger.warning("Prompt not cached: %s", e)

            identifiers = [w for w in key.split() if w.startswith('⟨')] if restore_map is not None else []
            tokens = (identifiers + self._babble(prompt, request.max_tokens, request.temperature, request.seed))
            tokens = tokens[:request.max_tokens]

            if self.semantic_config.enabled:
                ttft = semantic_ttft(self.latency, False, rng)
                if not request.lookup_only:
                    self.semantic_cache.insert(key, ' '.join(tokens))
                if restore_map is not None:
                    tokens = [restore(t, restore_map).text for t in tokens]

            self.last_record = HandleRecord(False, hit_tokens, miss_tokens, ttft)
            return self._stream(tokens, ttft)

    def admin_flush(self, which: str = 'both') -> None:
        if which not in FLUSH_TARGETS:
            raise MalformedRequest(f"Unknown flush target: {which!r}")
        with self._lock:
            if which in ('kv', 'both'):
                self.kv_cache.flush()
            if which in ('semantic', 'both'):
                self.semantic_cache.flush()
        logger.debug("Flushed %s cache", which)

    def schedule(self, requests: Sequence[ChatRequest], cache_aware: bool = False) -> List[ChatRequest]:
        """
        Order pending requests.

        FIFO by default; with cache_aware, requests sharing at least one full
        block with the prefix cache move ahead, keeping their relative order.
        """
        if not cache_aware:
            return list(requests)
        with self._lock:
            threshold = self.kv_cache.granularity
            warm: List[ChatRequest] = []
            cold: List[ChatRequest] = []
            for request in requests:
                ids = encode_lenient(self.render(request), self.vocab)
                (warm if self.kv_cache.peek_prefix(ids) >= threshold else cold).append(request)
        return warm + cold

    def stats(self) -> Dict:
        with self._lock:
            nodes, resident, depth = self.kv_cache.shared_prefix_stats()
            return {
                'kv_nodes': nodes,
                'kv_resident_tokens': resident,
                'kv_max_depth': depth,
                'semantic_entries': len(self.semantic_cache),
            }

    def close(self) -> None:
        with self._lock:
            self._closed = True

    @property
    def closed(self) -> bool:
        return self._closed


def collect(events: Sequence[StreamEvent]) -> Tuple[str, float]:
    """Joined response text and TTFT of an event list."""
    text = ' '.join(e.token_text for e in events if e.kind == 'token')
    return text, ttft_of(events)
