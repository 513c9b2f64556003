import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from semantic_bell.stimuli import load_lexicon


class MockChatServer:
    """Chat-completion endpoint that replays a script, then falls back to a responder.

    Script items are reply strings, ``(status, body)`` tuples, or callables
    taking the request payload and returning either of those.
    """

    def __init__(self, model_id="mock-model-1"):
        self.model_id = model_id
        self.script = []
        self.responder = None
        self.requests = []
        self.headers = []
        self._lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length) or b"{}")
                with server._lock:
                    server.requests.append(payload)
                    server.headers.append(dict(self.headers))
                    item = server.script.pop(0) if server.script else server.responder
                if callable(item):
                    item = item(payload)
                if item is None:
                    item = (500, {"error": "script exhausted"})
                status, body = (200, item) if isinstance(item, str) else item
                if isinstance(body, str) and status == 200:
                    body = {
                        "model": server.model_id,
                        "choices": [{"message": {"role": "assistant", "content": body}}],
                    }
                raw = json.dumps(body).encode() if not isinstance(body, bytes) else body
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

            def log_message(self, *args):
                pass

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.base_url = f"http://127.0.0.1:{self._httpd.server_address[1]}/v1"
        self._thread = threading.Thread(target=self._httpd.serve_forever, kwargs={"poll_interval": 0.02}, daemon=True)
        self._thread.start()

    def close(self):
        self._httpd.shutdown()
        self._httpd.server_close()


@pytest.fixture
def mock_server():
    server = MockChatServer()
    yield server
    server.close()


_ANSWER_LINES = re.compile(r"exactly two lines and nothing else:\n(.+): <meaning>\n(.+): <meaning>")


def gloss_responder(seed=0):
    """Replies to interpretation requests with a randomly chosen gloss per word."""
    lexicon = {w.surface: w for w in load_lexicon()}
    rng = np.random.default_rng(seed)
    lock = threading.Lock()

    def respond(payload):
        user = payload["messages"][-1]["content"]
        m = _ANSWER_LINES.search(user)
        if m is None:
            return (400, {"error": "unexpected prompt"})
        w1, w2 = m.group(1), m.group(2)
        with lock:
            picks = rng.integers(0, 2, size=2)
        g1 = lexicon[w1].alpha if picks[0] else lexicon[w1].beta
        g2 = lexicon[w2].alpha if picks[1] else lexicon[w2].beta
        return f"{w1}: {g1}\n{w2}: {g2}"

    return respond


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report: (number, title, passed, detail), filled by test_acceptance
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status} criterion {number}: {title} -- {detail}")
