from collections import Counter

import httpx
import numpy as np
import pytest
from scipy.stats import chisquare

from semantic_bell.agents import AgentError, AgentRequest
from semantic_bell.chsh import CONTEXTS, Setting
from semantic_bell.remote import (
    ChatClient,
    CredentialError,
    MalformedReply,
    ModelEntry,
    ModelPool,
    RemoteAgent,
    RemoteAgents,
    RetryPolicy,
    parse_interpretations,
    select_model,
)
from semantic_bell.stimuli import Persona, SettingPrompt

REQUEST = AgentRequest(
    persona=Persona("Alice", 41, "Detroit, MI"),
    setting=SettingPrompt(Setting.A, "You are a surgeon."),
    sentence="The trunk was settled near the bow",
    words=("trunk", "bow"),
)


def entry_for(server, **kw):
    return ModelEntry(provider="mock", base_url=server.base_url, model="m1", **kw)


def fast_client(**kw):
    sleeps = []
    return ChatClient(RetryPolicy(**kw), sleep=sleeps.append), sleeps


class TestModelPool:
    def test_empty(self):
        with pytest.raises(ValueError):
            ModelPool(())

    def test_duplicate_ids(self):
        e = ModelEntry("p", "http://x", "m")
        with pytest.raises(ValueError):
            ModelPool((e, e))

    def test_from_dicts(self):
        pool = ModelPool.from_dicts([{"provider": "p", "base_url": "http://x", "model": "a"}])
        assert pool.entries[0].identifier == "p/a"

    def test_singleton(self):
        e = ModelEntry("p", "http://x", "m")
        rng = np.random.default_rng(0)
        assert all(select_model(ModelPool((e,)), rng) is e for _ in range(20))

    def test_uniform(self):
        pool = ModelPool(tuple(ModelEntry("p", "http://x", f"m{i}") for i in range(5)))
        rng = np.random.default_rng(17)
        counts = Counter(select_model(pool, rng).model for _ in range(10_000))
        assert chisquare([counts[f"m{i}"] for i in range(5)]).pvalue > 0.001

    def test_reproducible(self):
        pool = ModelPool(tuple(ModelEntry("p", "http://x", f"m{i}") for i in range(5)))
        seq = [[select_model(pool, rng).model for _ in range(30)] for rng in (np.random.default_rng(3), np.random.default_rng(3))]
        assert seq[0] == seq[1]

    def test_missing_credential(self, monkeypatch):
        monkeypatch.delenv("SB_TEST_KEY", raising=False)
        pool = ModelPool((ModelEntry("p", "http://x", "m", api_key_env="SB_TEST_KEY"),))
        with pytest.raises(CredentialError, match="SB_TEST_KEY"):
            pool.check_credentials()
        monkeypatch.setenv("SB_TEST_KEY", "secret")
        pool.check_credentials()


class TestRetryPolicy:
    def test_exponential_delays(self):
        p = RetryPolicy(base_delay=0.5, factor=2.0, max_delay=3.0)
        assert [p.delay(k) for k in range(1, 6)] == [0.5, 1.0, 2.0, 3.0, 3.0]


class TestChatClient:
    def test_pass_through(self, mock_server, monkeypatch):
        monkeypatch.setenv("SB_TEST_KEY", "sk-test")
        mock_server.script = ["trunk: a storage chest\nbow: front of a ship"]
        agent = RemoteAgent(entry_for(mock_server, api_key_env="SB_TEST_KEY"), fast_client()[0])
        resp = agent.interpret(REQUEST)
        assert resp.interpretation_word1 == "a storage chest"
        assert resp.model_id == "mock-model-1"
        assert resp.provider_id == "mock"
        assert resp.transcript["reply"] == "trunk: a storage chest\nbow: front of a ship"
        payload = mock_server.requests[0]
        assert payload["model"] == "m1"
        assert [m["role"] for m in payload["messages"]] == ["system", "user"]
        assert "surgeon" in payload["messages"][0]["content"]
        assert "The trunk was settled near the bow" in payload["messages"][1]["content"]
        assert mock_server.headers[0]["Authorization"] == "Bearer sk-test"

    def test_glosses_never_sent(self, mock_server):
        mock_server.script = ["trunk: x\nbow: y"]
        RemoteAgent(entry_for(mock_server), fast_client()[0]).interpret(REQUEST)
        sent = str(mock_server.requests[0])
        for gloss in ("storage chest", "main stem", "front of a ship", "ribbon"):
            assert gloss not in sent

    def test_retries_then_succeeds(self, mock_server):
        mock_server.script = [(503, {"error": "busy"}), (429, {"error": "slow down"}), "trunk: tree\nbow: ship"]
        client, sleeps = fast_client(base_delay=0.25)
        resp = RemoteAgent(entry_for(mock_server), client).interpret(REQUEST)
        assert resp.interpretations == ("tree", "ship")
        assert len(mock_server.requests) == 3
        assert sleeps == [0.25, 0.5]

    def test_gives_up_after_bound(self, mock_server):
        mock_server.script = [(500, {"error": "x"})] * 5
        client, sleeps = fast_client(max_attempts=3)
        with pytest.raises(AgentError, match="HTTP 500"):
            RemoteAgent(entry_for(mock_server), client).interpret(REQUEST)
        assert len(mock_server.requests) == 3
        assert len(sleeps) == 2

    def test_client_error_not_retried(self, mock_server):
        mock_server.script = [(401, {"error": "bad key"})]
        with pytest.raises(AgentError, match="401"):
            RemoteAgent(entry_for(mock_server), fast_client()[0]).interpret(REQUEST)
        assert len(mock_server.requests) == 1

    def test_transport_error_retried(self):
        sleeps = []
        client = ChatClient(RetryPolicy(max_attempts=2), sleep=sleeps.append)
        entry = ModelEntry("p", "http://127.0.0.1:9/v1", "m", timeout=0.5)
        with pytest.raises(AgentError):
            client.complete(entry, "s", "u")
        assert len(sleeps) == 1

    def test_malformed_body(self, mock_server):
        mock_server.script = [(200, {"nothing": True})]
        with pytest.raises(MalformedReply):
            RemoteAgent(entry_for(mock_server), fast_client()[0]).interpret(REQUEST)

    def test_unparseable_text(self, mock_server):
        mock_server.script = ["I would rather not say."]
        with pytest.raises(MalformedReply):
            RemoteAgent(entry_for(mock_server), fast_client()[0]).interpret(REQUEST)

    def test_mock_transport(self):
        def handler(request):
            return httpx.Response(200, json={"model": "t", "choices": [{"message": {"content": "a\nb"}}]})

        client = ChatClient(http=httpx.Client(transport=httpx.MockTransport(handler)))
        reply = client.complete(ModelEntry("p", "http://x", "m"), "s", "u")
        assert (reply.text, reply.model) == ("a\nb", "t")


class TestParseInterpretations:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("trunk: storage chest\nbow: front of a ship", ("storage chest", "front of a ship")),
            ("bow: ribbon\ntrunk: tree stem", ("tree stem", "ribbon")),
            ("- **Trunk**: luggage\n- **Bow**: knot", ("luggage", "knot")),
            ("1. a car's storage space\n2. a ribbon", ("a car's storage space", "a ribbon")),
            ("Word1: chest\nWord2: ship front", ("chest", "ship front")),
            ("Sure!\ntrunk: chest\nbow: ship\nHope that helps.", ("chest", "ship")),
        ],
    )
    def test_formats(self, text, expected):
        assert parse_interpretations(text, ("trunk", "bow")) == expected

    @pytest.mark.parametrize("text", ["", "just one line", "a\nb\nc", "trunk:\nbow:"])
    def test_rejects(self, text):
        with pytest.raises(MalformedReply):
            parse_interpretations(text, ("trunk", "bow"))


class TestRemoteAgents:
    def pool(self, n=4):
        return ModelPool(tuple(ModelEntry("p", "http://x", f"m{i}") for i in range(n)))

    def test_validation(self):
        with pytest.raises(ValueError):
            RemoteAgents(self.pool(), pair_models="both")
        with pytest.raises(ValueError):
            RemoteAgents(self.pool(), reinterpret_model="never")

    def test_independent_pairs(self):
        factory = RemoteAgents(self.pool(10))
        rng = np.random.default_rng(0)
        same = 0
        for _ in range(200):
            alice, bob = factory.start_trial(None, rng).for_context(*CONTEXTS[0])
            same += alice.entry is bob.entry
        assert 0 < same < 60

    def test_shared_pairs(self):
        factory = RemoteAgents(self.pool(), pair_models="shared")
        trial = factory.start_trial(None, np.random.default_rng(1))
        for ctx in CONTEXTS:
            alice, bob = trial.for_context(*ctx)
            assert alice.entry is bob.entry

    def test_describe(self):
        d = RemoteAgents(self.pool(2)).describe()
        assert d["pool"] == ["p/m0", "p/m1"] and d["kind"] == "remote"

    def test_resampling_agent_draws_each_call(self, mock_server):
        pool = ModelPool(tuple(ModelEntry("p", mock_server.base_url, f"m{i}") for i in range(6)))
        mock_server.responder = "trunk: a\nbow: b"
        factory = RemoteAgents(pool, client=fast_client()[0], reinterpret_model="resample")
        alice, _ = factory.start_trial(None, np.random.default_rng(2)).for_context(*CONTEXTS[0])
        for _ in range(12):
            alice.interpret(REQUEST)
        assert len({r["model"] for r in mock_server.requests}) > 1
