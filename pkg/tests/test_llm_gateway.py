import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from tabsem import (
    AuthError,
    BackendConfig,
    ChatRequest,
    ProtocolError,
    RateLimited,
    ScriptExhausted,
    TransportError,
    complete,
    mock_script,
)


def req(content="hi"):
    return ChatRequest(model="m", messages=[("user", content)])


# -- request validation --------------------------------------------------------


def test_request_requires_messages():
    with pytest.raises(ValueError):
        ChatRequest(model="m", messages=[])


def test_request_last_message_must_be_user():
    with pytest.raises(ValueError):
        ChatRequest(model="m", messages=[("user", "a"), ("assistant", "b")])


def test_http_backend_requires_endpoint():
    with pytest.raises(ValueError):
        BackendConfig(backend_kind="http")


# -- mock backend ---------------------------------------------------------------


def test_mock_script_plays_back_in_order():
    cfg = mock_script(["a", "b"])
    assert complete(cfg, req()).content == "a"
    assert complete(cfg, req()).content == "b"


def test_mock_script_exhaustion():
    cfg = mock_script(["only"])
    complete(cfg, req())
    with pytest.raises(ScriptExhausted):
        complete(cfg, req())


def test_mock_script_rejects_empty():
    with pytest.raises(ValueError):
        mock_script([])


def test_mock_scripted_json_passthrough():
    cfg = mock_script(["{}"])
    assert complete(cfg, req()).content == "{}"


def test_mock_cursor_is_thread_safe():
    cfg = mock_script([str(i) for i in range(64)])
    seen = []
    lock = threading.Lock()

    def worker():
        for _ in range(8):
            content = complete(cfg, req()).content
            with lock:
                seen.append(content)

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(seen, key=int) == [str(i) for i in range(64)]


# -- http backend ----------------------------------------------------------------


class _Stub(BaseHTTPRequestHandler):
    """Plays back (status, body) pairs and records incoming requests."""

    plan: list = []
    requests: list = []

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length)) if length else {}
        type(self).requests.append(
            {"path": self.path, "auth": self.headers.get("Authorization"), "body": body}
        )
        status, payload = self.plan[min(len(self.requests) - 1, len(self.plan) - 1)]
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _Stub)
    _Stub.plan = []
    _Stub.requests = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()
    server.server_close()


def ok_payload(content):
    return {
        "choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 7, "completion_tokens": 3},
    }


def http_cfg(url, retries=2):
    return BackendConfig(backend_kind="http", endpoint_url=url, retries=retries, backoff_base=0.0)


def test_http_success_parses_first_choice(stub_server, monkeypatch):
    monkeypatch.setenv("TABSEM_API_KEY", "sk-test")
    _Stub.plan = [(200, ok_payload("stub content"))]
    response = complete(http_cfg(stub_server), req("payload"))
    assert response.content == "stub content"
    assert response.finish_reason == "stop"
    assert response.usage == (7, 3)
    sent = _Stub.requests[0]
    assert sent["path"] == "/chat/completions"
    assert sent["auth"] == "Bearer sk-test"
    assert sent["body"]["model"] == "m"
    assert sent["body"]["messages"] == [{"role": "user", "content": "payload"}]
    assert "max_tokens" in sent["body"]


def test_http_retries_5xx_then_succeeds(stub_server):
    _Stub.plan = [(500, {}), (500, {}), (200, ok_payload("eventually"))]
    response = complete(http_cfg(stub_server, retries=3), req())
    assert response.content == "eventually"
    assert len(_Stub.requests) == 3


def test_http_auth_error_not_retried(stub_server):
    _Stub.plan = [(401, {"error": "nope"})]
    with pytest.raises(AuthError):
        complete(http_cfg(stub_server), req())
    assert len(_Stub.requests) == 1


def test_http_4xx_not_retried(stub_server):
    _Stub.plan = [(400, {"error": "bad request"})]
    with pytest.raises(TransportError):
        complete(http_cfg(stub_server), req())
    assert len(_Stub.requests) == 1


def test_http_rate_limited_after_retries(stub_server):
    _Stub.plan = [(429, {})]
    with pytest.raises(RateLimited):
        complete(http_cfg(stub_server, retries=1), req())
    assert len(_Stub.requests) == 2


def test_http_exhausted_5xx_raises_transport_error(stub_server):
    _Stub.plan = [(503, {})]
    with pytest.raises(TransportError):
        complete(http_cfg(stub_server, retries=1), req())


def test_http_missing_fields_is_protocol_error(stub_server):
    _Stub.plan = [(200, {"choices": []})]
    with pytest.raises(ProtocolError):
        complete(http_cfg(stub_server), req())


def test_http_network_failure_is_transport_error():
    cfg = BackendConfig(
        backend_kind="http", endpoint_url="http://127.0.0.1:1", retries=0, backoff_base=0.0, timeout=0.5
    )
    with pytest.raises(TransportError):
        complete(cfg, req())


def test_api_key_read_at_call_time(stub_server, monkeypatch):
    _Stub.plan = [(200, ok_payload("x")), (200, ok_payload("y"))]
    cfg = BackendConfig(
        backend_kind="http", endpoint_url=stub_server, api_key_env="OTHER_KEY_VAR", backoff_base=0.0
    )
    monkeypatch.delenv("OTHER_KEY_VAR", raising=False)
    complete(cfg, req())
    assert _Stub.requests[0]["auth"] is None
    monkeypatch.setenv("OTHER_KEY_VAR", "late-key")
    complete(cfg, req())
    assert _Stub.requests[1]["auth"] == "Bearer late-key"
