import pytest
import requests

from cacheleak.client import HttpClient, InProcessClient, make_client
from cacheleak.engine import ChatRequest, ServerConfig, ServingEngine
from cacheleak.errors import InvalidConfig, MalformedRequest, TransportError
from cacheleak.latency import LatencyParams
from cacheleak.server import serve_in_thread


@pytest.fixture
def served(vocab):
    engine = ServingEngine(latency=LatencyParams(noise_sigma=0.0), vocab=vocab)
    server, thread = serve_in_thread(engine, ServerConfig(port=0, admin=True))
    yield engine, server
    server.shutdown()
    server.server_close()
    thread.join(timeout=5)


def test_http_and_in_process_report_the_same_ttft(served):
    engine, server = served
    http = HttpClient(server.url, timeout=10)
    miss = http.direct_ttft("You are a helpful assistant")
    hit = http.direct_ttft("You are a helpful assistant")
    assert hit < miss

    local = InProcessClient(ServingEngine(latency=LatencyParams(noise_sigma=0.0)))
    assert local.direct_ttft("You are a helpful assistant") == pytest.approx(miss, abs=1e-9)
    assert local.direct_ttft("You are a helpful assistant") == pytest.approx(hit, abs=1e-9)


def test_http_stream_carries_tokens_then_eos(served):
    _, server = served
    events = HttpClient(server.url, timeout=10).generate(ChatRequest.direct("You are", max_tokens=3))
    assert [e.kind for e in events] == ['token', 'token', 'token', 'eos']


def test_http_flush_and_health(served):
    engine, server = served
    http = HttpClient(server.url, timeout=10)
    http.direct_ttft("You are")
    assert http.health()['kv_resident_tokens'] == 2
    http.flush('kv')
    assert http.health()['kv_resident_tokens'] == 0
    assert http.health()['status'] == 'ok'


def test_http_bad_request_is_malformed(served):
    _, server = served
    with pytest.raises(MalformedRequest):
        HttpClient(server.url, timeout=10).generate(ChatRequest.direct("x", max_tokens=0))


@pytest.mark.parametrize('body', [[], ['kv'], 'kv', 3])
def test_flush_rejects_a_body_that_is_not_an_object(served, body):
    engine, server = served
    http = HttpClient(server.url, timeout=10)
    http.direct_ttft("You are")
    response = requests.post(f"{server.url}/admin/flush", json=body, timeout=10)
    assert response.status_code == 400
    assert 'JSON object' in response.json()['error']
    assert http.health()['kv_resident_tokens'] == 2


def test_flush_needs_admin(vocab):
    engine = ServingEngine(vocab=vocab)
    server, thread = serve_in_thread(engine, ServerConfig(port=0, admin=False))
    try:
        with pytest.raises(TransportError):
            HttpClient(server.url, timeout=10).flush()
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)


def test_unreachable_server_is_a_transport_error():
    with pytest.raises(TransportError):
        HttpClient("http://127.0.0.1:9", timeout=2).direct_ttft("hello")


def test_make_client_needs_a_target():
    with pytest.raises(InvalidConfig):
        make_client()
    assert isinstance(make_client(url="http://127.0.0.1:1"), HttpClient)
