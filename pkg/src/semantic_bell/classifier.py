"""Map free-text interpretations onto a word's two glosses, re-asking when unclear."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

from .agents import Agent, AgentRequest, AgentResponse
from .chsh import OutcomeVector
from .remote import ChatClient, MalformedReply, ModelEntry
from .stimuli import AmbiguousWord, load_stopwords

log = logging.getLogger(__name__)


class Verdict(str, Enum):
    ALPHA = "alpha"
    BETA = "beta"
    UNCLEAR = "unclear"
    OUT_OF_SCOPE = "out_of_scope"


_OUTCOME = {Verdict.ALPHA: 1, Verdict.BETA: -1}


@dataclass(frozen=True)
class Classification:
    verdict: Verdict
    rationale: str = ""
    attempts_used: int = 1


_TOKEN = re.compile(r"[a-z]+")


class KeywordClassifier:
    """Deterministic backend based on shared content tokens.

    Text is lowercased and split on non-letters; stop words are dropped and
    a trailing plural ``s`` is folded.  The verdict is alpha (beta) when the
    interpretation shares tokens with that gloss only, unclear when it
    shares tokens with both, and out of scope when it shares none.
    """

    name = "keyword"

    def __init__(self, stopwords: frozenset[str] | None = None):
        self.stopwords = load_stopwords() if stopwords is None else frozenset(stopwords)
        self._classify = lru_cache(maxsize=65536)(self._classify_uncached)

    def tokens(self, text: str) -> frozenset[str]:
        out = set()
        for tok in _TOKEN.findall(text.lower()):
            if tok in self.stopwords:
                continue
            if len(tok) > 3 and tok.endswith("s") and not tok.endswith("ss"):
                tok = tok[:-1]
            out.add(tok)
        return frozenset(out)

    def classify(self, interpretation: str, word: AmbiguousWord) -> Classification:
        if not interpretation.strip():
            raise ValueError("empty interpretation")
        return self._classify(interpretation, word)

    def _classify_uncached(self, interpretation: str, word: AmbiguousWord) -> Classification:
        toks = self.tokens(interpretation)
        hit_a = sorted(toks & self.tokens(word.alpha))
        hit_b = sorted(toks & self.tokens(word.beta))
        if hit_a and hit_b:
            return Classification(Verdict.UNCLEAR, f"matches both glosses ({', '.join(hit_a + hit_b)})")
        if hit_a:
            return Classification(Verdict.ALPHA, f"matches alpha gloss ({', '.join(hit_a)})")
        if hit_b:
            return Classification(Verdict.BETA, f"matches beta gloss ({', '.join(hit_b)})")
        return Classification(Verdict.OUT_OF_SCOPE, "matches neither gloss")


DEFAULT_CLASSIFIER_TEMPLATE = (
    'An interpreter was asked what the word "{word}" means in a sentence and answered:\n'
    '"{interpretation}"\n\n'
    "Candidate meanings:\nALPHA: {alpha}\nBETA: {beta}\n\n"
    "Answer with exactly one token: ALPHA if the answer matches only meaning ALPHA, "
    "BETA if it matches only meaning BETA, UNCLEAR if it hedges between them, "
    "OUT_OF_SCOPE if it matches neither."
)
_REMOTE_TOKENS = re.compile(r"\b(OUT_OF_SCOPE|UNCLEAR|ALPHA|BETA)\b")


class RemoteClassifier:
    """Classification delegated to a chat-completion model."""

    name = "remote"

    def __init__(self, entry: ModelEntry, client: ChatClient | None = None,
                 template: str = DEFAULT_CLASSIFIER_TEMPLATE):
        self.entry = entry
        self.client = client or ChatClient(temperature=0.0)
        self.template = template

    def classify(self, interpretation: str, word: AmbiguousWord) -> Classification:
        if not interpretation.strip():
            raise ValueError("empty interpretation")
        prompt = self.template.format(word=word.surface, interpretation=interpretation,
                                      alpha=word.alpha, beta=word.beta)
        reply = self.client.complete(self.entry, "You label word meanings.", prompt)
        m = _REMOTE_TOKENS.search(reply.text.upper())
        if m is None:
            return Classification(Verdict.UNCLEAR, f"unparseable classifier reply {reply.text[:60]!r}")
        return Classification(Verdict(m.group(1).lower()), f"{self.entry.identifier}: {reply.text.strip()[:60]}")


def classify(interpretation: str, word: AmbiguousWord, backend) -> Classification:
    return backend.classify(interpretation, word)


@dataclass
class Attempt:
    response: AgentResponse | None
    classifications: tuple[Classification, Classification] | None
    error: str | None = None

    @property
    def accepted(self) -> bool:
        return self.classifications is not None and all(
            c.verdict in _OUTCOME for c in self.classifications
        )


@dataclass
class ClassifiedOutcome:
    outcome: OutcomeVector
    attempts: int
    log: list[Attempt] = field(default_factory=list)


class ReinterpretationExhausted(RuntimeError):
    def __init__(self, message: str, log: list[Attempt]):
        super().__init__(message)
        self.log = log


def outcome_from(classifications) -> OutcomeVector:
    return OutcomeVector(*(_OUTCOME[c.verdict] for c in classifications))


def classify_with_retry(agent: Agent, request: AgentRequest, word_pair: tuple[AmbiguousWord, AmbiguousWord],
                        backend, max_attempts: int = 3) -> ClassifiedOutcome:
    """Ask *agent* until both words classify as alpha or beta, at most *max_attempts* times."""
    if max_attempts < 1:
        raise ValueError("max_attempts must be at least 1")
    history: list[Attempt] = []
    for n in range(1, max_attempts + 1):
        try:
            response = agent.interpret(request)
        except MalformedReply as exc:
            history.append(Attempt(None, None, str(exc)))
            log.info("attempt %d: malformed reply (%s)", n, exc)
            continue
        cls = tuple(
            Classification(c.verdict, c.rationale, n)
            for c in (backend.classify(text, w) for text, w in zip(response.interpretations, word_pair))
        )
        attempt = Attempt(response, cls)
        history.append(attempt)
        if log.isEnabledFor(logging.DEBUG):
            log.debug("attempt %d: verdicts %s", n, [c.verdict.value for c in cls])
        if attempt.accepted:
            return ClassifiedOutcome(outcome_from(cls), n, history)
    raise ReinterpretationExhausted(f"no usable interpretation after {max_attempts} attempts", history)

