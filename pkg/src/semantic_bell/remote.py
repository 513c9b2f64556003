"""Chat-completion agents backed by remote language-model endpoints.

Wire shape (OpenAI-compatible)::

    POST {base_url}/chat/completions
    Authorization: Bearer $<api_key_env>
    {"model": ..., "messages": [{"role": "system", ...}, {"role": "user", ...}],
     "temperature": ...}

    -> {"model": ..., "choices": [{"message": {"role": "assistant", "content": ...}}]}
"""
from __future__ import annotations

import logging
import os
import re
import time
from dataclasses import dataclass, field

import httpx
import numpy as np

from .agents import AgentError, AgentRequest, AgentResponse, persona_text
from .chsh import Setting
from .stimuli import TrialStimulus

log = logging.getLogger(__name__)

DEFAULT_INSTRUCTION = (
    "State, in a few words each, the single meaning you take {word1} and {word2} "
    "to have in this sentence."
)
ANSWER_FORMAT = "Reply with exactly two lines and nothing else:\n{word1}: <meaning>\n{word2}: <meaning>"


class CredentialError(KeyError):
    pass


class MalformedReply(AgentError):
    pass


@dataclass(frozen=True)
class ModelEntry:
    provider: str
    base_url: str
    model: str
    api_key_env: str | None = None
    timeout: float = 60.0

    @property
    def identifier(self) -> str:
        return f"{self.provider}/{self.model}"

    def api_key(self) -> str | None:
        if not self.api_key_env:
            return None
        try:
            return os.environ[self.api_key_env]
        except KeyError:
            raise CredentialError(
                f"environment variable {self.api_key_env} (credential for {self.identifier}) is not set"
            ) from None


@dataclass(frozen=True)
class ModelPool:
    entries: tuple[ModelEntry, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise ValueError("model pool is empty")
        ids = [e.identifier for e in entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate model identifiers in pool: {ids}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_dicts(cls, items) -> "ModelPool":
        return cls(tuple(ModelEntry(**item) for item in items))

    def check_credentials(self) -> None:
        for e in self.entries:
            e.api_key()


def select_model(pool: ModelPool, rng: np.random.Generator) -> ModelEntry:
    if not pool.entries:
        raise ValueError("model pool is empty")
    return pool.entries[int(rng.integers(len(pool.entries)))]


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 1.0
    factor: float = 2.0
    max_delay: float = 30.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        if self.base_delay < 0 or self.factor < 1 or self.max_delay < 0:
            raise ValueError("retry delays must be nonnegative and the backoff factor at least 1")

    def delay(self, attempt: int) -> float:
        return min(self.base_delay * self.factor ** (attempt - 1), self.max_delay)


@dataclass
class ChatReply:
    text: str
    model: str
    latency: float
    request: dict
    response: dict


_RETRYABLE_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


class ChatClient:
    """Minimal chat-completion client with bounded exponential-backoff retries."""

    def __init__(self, retry: RetryPolicy = RetryPolicy(), http: httpx.Client | None = None,
                 temperature: float | None = 1.0, sleep=time.sleep):
        self.retry = retry
        self.http = http or httpx.Client()
        self.temperature = temperature
        self._sleep = sleep

    def complete(self, entry: ModelEntry, system: str, user: str) -> ChatReply:
        payload = {
            "model": entry.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        if self.temperature is not None:
            payload["temperature"] = self.temperature
        headers = {}
        key = entry.api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        url = entry.base_url.rstrip("/") + "/chat/completions"

        last_error = None
        for attempt in range(1, self.retry.max_attempts + 1):
            start = time.monotonic()
            try:
                resp = self.http.post(url, json=payload, headers=headers, timeout=entry.timeout)
            except httpx.TransportError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    return self._parse(resp, payload, entry, time.monotonic() - start)
                last_error = f"HTTP {resp.status_code}: {resp.text[:200]}"
                if resp.status_code not in _RETRYABLE_STATUS:
                    break
            log.warning("%s attempt %d/%d failed: %s", entry.identifier, attempt,
                        self.retry.max_attempts, last_error)
            if attempt < self.retry.max_attempts:
                self._sleep(self.retry.delay(attempt))
        raise AgentError(f"{entry.identifier}: request failed ({last_error})")

    @staticmethod
    def _parse(resp: httpx.Response, payload: dict, entry: ModelEntry, latency: float) -> ChatReply:
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedReply(f"{entry.identifier}: unexpected response body ({exc})") from None
        if not isinstance(text, str):
            raise MalformedReply(f"{entry.identifier}: message content is not text")
        return ChatReply(text=text, model=str(body.get("model") or entry.model), latency=latency,
                         request=payload, response=body)


_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


def parse_interpretations(text: str, words: tuple[str, str]) -> tuple[str, str]:
    """Extract the two meanings from a reply.

    Accepts ``word: meaning`` lines (in any order) or, failing that, exactly
    two lines taken positionally, optionally bulleted or numbered.
    """
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    labelled = {}
    for ln in lines:
        head, sep, tail = _BULLET.sub("", ln).partition(":")
        if sep:
            label = head.strip().strip("*\"'").lower()
            for i, w in enumerate(words):
                if label in (w.lower(), f"word{i + 1}") and tail.strip():
                    labelled.setdefault(i, tail.strip())
    if len(labelled) == 2:
        return labelled[0], labelled[1]
    if len(lines) == 2:
        out = []
        for ln in lines:
            ln = _BULLET.sub("", ln)
            head, sep, tail = ln.partition(":")
            out.append(tail.strip() if sep and len(head.split()) <= 2 else ln.strip())
        if all(out):
            return out[0], out[1]
    raise MalformedReply(f"could not find two interpretations in reply {text[:120]!r}")


class RemoteAgent:
    """One pool entry acting as an interpreter."""

    def __init__(self, entry: ModelEntry, client: ChatClient, instruction: str = DEFAULT_INSTRUCTION):
        self.entry = entry
        self.client = client
        self.instruction = instruction

    def messages(self, request: AgentRequest) -> tuple[str, str]:
        w1, w2 = request.words
        system = f"{persona_text(request.persona)} {request.setting.text}"
        user = (
            f'Sentence: "{request.sentence}"\n\n'
            + self.instruction.format(word1=f'"{w1}"', word2=f'"{w2}"')
            + "\n"
            + ANSWER_FORMAT.format(word1=w1, word2=w2)
        )
        return system, user

    def interpret(self, request: AgentRequest) -> AgentResponse:
        system, user = self.messages(request)
        reply = self.client.complete(self.entry, system, user)
        transcript = {"request": reply.request, "reply": reply.text}
        i1, i2 = parse_interpretations(reply.text, request.words)
        return AgentResponse(
            interpretation_word1=i1,
            interpretation_word2=i2,
            provider_id=self.entry.provider,
            model_id=reply.model,
            latency=reply.latency,
            transcript=transcript,
        )


class _ResamplingAgent:
    """Draws a fresh pool entry for every call (re-interpretations included)."""

    def __init__(self, pool: ModelPool, client: ChatClient, instruction: str, rng: np.random.Generator):
        self._pool, self._client, self._instruction, self._rng = pool, client, instruction, rng

    def interpret(self, request: AgentRequest) -> AgentResponse:
        entry = select_model(self._pool, self._rng)
        return RemoteAgent(entry, self._client, self._instruction).interpret(request)


@dataclass
class _FixedPair:
    alice: object
    bob: object

    def for_context(self, alice: Setting, bob: Setting):
        return self.alice, self.bob


@dataclass
class RemoteAgents:
    """Agent factory drawing Alice's and Bob's models from a pool each trial.

    ``pair_models`` is ``"independent"`` (separate draws) or ``"shared"``;
    ``reinterpret_model`` is ``"same"`` (keep the trial's model for retries)
    or ``"resample"`` (draw anew on every call).
    """

    pool: ModelPool
    client: ChatClient = field(default_factory=ChatClient)
    instruction: str = DEFAULT_INSTRUCTION
    pair_models: str = "independent"
    reinterpret_model: str = "same"
    simulated = False

    def __post_init__(self):
        if self.pair_models not in ("independent", "shared"):
            raise ValueError(f"pair_models must be 'independent' or 'shared', not {self.pair_models!r}")
        if self.reinterpret_model not in ("same", "resample"):
            raise ValueError(f"reinterpret_model must be 'same' or 'resample', not {self.reinterpret_model!r}")

    def describe(self) -> dict:
        return {
            "kind": "remote",
            "pool": [e.identifier for e in self.pool.entries],
            "pair_models": self.pair_models,
            "reinterpret_model": self.reinterpret_model,
            "instruction": self.instruction,
        }

    def start_trial(self, stimulus: TrialStimulus, rng: np.random.Generator):
        if self.reinterpret_model == "resample":
            return _FixedPair(
                _ResamplingAgent(self.pool, self.client, self.instruction, rng),
                _ResamplingAgent(self.pool, self.client, self.instruction, rng),
            )
        alice = select_model(self.pool, rng)
        bob = alice if self.pair_models == "shared" else select_model(self.pool, rng)
        return _FixedPair(
            RemoteAgent(alice, self.client, self.instruction),
            RemoteAgent(bob, self.client, self.instruction),
        )
