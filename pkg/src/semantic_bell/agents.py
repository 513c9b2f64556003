"""Interpretive agents ("observers") and the sources that prepare them per trial.

The runner never talks to an agent directly about the experimental design.
For every trial it asks an *agent factory* for a :class:`TrialAgents`, and
for every measurement context ``(X, Y)`` it obtains an ``(alice, bob)``
pair from it.  Each agent then only sees an :class:`AgentRequest`, which
carries its own persona, its own setting prompt, the sentence and the two
word surfaces -- never the glosses and never the partner's setting.

Simulated factories also expose ``sample(n, rng)``, a vectorized route that
draws the outcome array directly.  It follows the same distribution as the
per-request route and is what bulk Monte-Carlo checks use.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from . import semantic_state as qs
from .chsh import CONTEXTS, Setting
from .stimuli import AmbiguousWord, Persona, SettingPrompt, TrialStimulus


class AgentError(RuntimeError):
    """An agent could not produce an interpretation (transport or protocol failure)."""


@dataclass(frozen=True)
class AgentRequest:
    persona: Persona
    setting: SettingPrompt
    sentence: str
    words: tuple[str, str]


@dataclass(frozen=True)
class AgentResponse:
    interpretation_word1: str
    interpretation_word2: str
    provider_id: str
    model_id: str
    latency: float = 0.0
    transcript: dict | None = None

    def __post_init__(self):
        if not self.interpretation_word1.strip() or not self.interpretation_word2.strip():
            raise AgentError("agent returned an empty interpretation")

    @property
    def interpretations(self) -> tuple[str, str]:
        return (self.interpretation_word1, self.interpretation_word2)


class Agent(Protocol):
    def interpret(self, request: AgentRequest) -> AgentResponse: ...


class TrialAgents(Protocol):
    def for_context(self, alice: Setting, bob: Setting) -> tuple[Agent, Agent]: ...


class AgentFactory(Protocol):
    simulated: bool

    def describe(self) -> dict: ...

    def start_trial(self, stimulus: TrialStimulus, rng: np.random.Generator) -> TrialAgents: ...


def interpret(agent: Agent, request: AgentRequest) -> AgentResponse:
    return agent.interpret(request)


def persona_text(persona: Persona) -> str:
    return (
        f"You are {persona.name}, a {persona.age}-year-old living in {persona.location}. "
        f"Your primary language is {persona.language}."
    )


# --- simulated agents ----------------------------------------------------------

SIMULATED_PROVIDER = "simulated"
_SETTING_INDEX = {Setting.A: 0, Setting.A_PRIME: 1, Setting.B: 2, Setting.B_PRIME: 3}
# for each context: (index of Alice's setting, index of Bob's setting) into a strategy
_CONTEXT_SLOTS = np.array([[_SETTING_INDEX[a], _SETTING_INDEX[b]] for a, b in CONTEXTS])


class _GlossResponder:
    """Answers with the canonical gloss for a preassigned or computed outcome."""

    def __init__(self, words: tuple[AmbiguousWord, AmbiguousWord], model_id: str, outcome_for):
        self._words = words
        self._model_id = model_id
        self._outcome_for = outcome_for

    def interpret(self, request: AgentRequest) -> AgentResponse:
        o1, o2 = self._outcome_for(request.setting.label)
        return AgentResponse(
            interpretation_word1=self._words[0].gloss(o1),
            interpretation_word2=self._words[1].gloss(o2),
            provider_id=SIMULATED_PROVIDER,
            model_id=self._model_id,
        )


def _preassigned(expected: Setting, outcome: tuple[int, int]):
    def outcome_for(label: Setting):
        if label is not expected:
            raise AgentError(f"agent prepared for setting {expected.value} was asked about {label.value}")
        return outcome

    return outcome_for


class _PreparedTrial:
    """Per-context outcome table ``[context, party, word]`` drawn at trial start."""

    def __init__(self, words, model_id: str, outcomes: np.ndarray):
        self._words = words
        self._model_id = model_id
        self._outcomes = outcomes

    def for_context(self, alice: Setting, bob: Setting):
        c = CONTEXTS.index((alice, bob))
        a = tuple(int(x) for x in self._outcomes[c, 0])
        b = tuple(int(x) for x in self._outcomes[c, 1])
        return (
            _GlossResponder(self._words, self._model_id, _preassigned(alice, a)),
            _GlossResponder(self._words, self._model_id, _preassigned(bob, b)),
        )


# Deterministic local strategies: values for (A, A', B, B').
STRATEGIES = np.array(list(itertools.product((1, -1), repeat=4)), dtype=np.int8)
NAMED_STRATEGIES = {"all-plus": (1, 1, 1, 1), "all-minus": (-1, -1, -1, -1)}


def strategy_index(values: Sequence[int]) -> int:
    matches = np.flatnonzero((STRATEGIES == np.asarray(values)).all(axis=1))
    if matches.size != 1:
        raise ValueError(f"not a deterministic strategy: {values!r}")
    return int(matches[0])


def strategy_s(values: Sequence[int]) -> int:
    """S produced by a single deterministic strategy."""
    a, ap, b, bp = values
    return a * b - a * bp + ap * b + ap * bp


class LocalHiddenVariableAgents:
    """Mixture of deterministic local strategies with a per-trial hidden variable.

    Each trial draws one strategy per word from ``weights`` (over
    :data:`STRATEGIES`).  Each party answers from the strategy and its own
    setting alone, so the same assignment serves all four contexts.
    """

    simulated = True

    def __init__(self, weights: Sequence[float]):
        w = np.asarray(weights, dtype=float)
        if w.shape != (16,) or np.any(w < 0) or not np.isfinite(w).all() or w.sum() <= 0:
            raise ValueError("strategy distribution must be 16 nonnegative weights with positive sum")
        self.weights = w / w.sum()

    @classmethod
    def single(cls, values: Sequence[int]) -> "LocalHiddenVariableAgents":
        w = np.zeros(16)
        w[strategy_index(values)] = 1.0
        return cls(w)

    def describe(self) -> dict:
        return {"kind": "lhv", "weights": [float(x) for x in self.weights]}

    def expected_correlations(self) -> np.ndarray:
        slots = STRATEGIES[:, _CONTEXT_SLOTS]  # (16, 4, 2)
        return self.weights @ (slots[:, :, 0] * slots[:, :, 1])

    def _draw(self, rng, shape) -> np.ndarray:
        return rng.choice(16, size=shape, p=self.weights)

    def start_trial(self, stimulus: TrialStimulus, rng: np.random.Generator):
        lam = self._draw(rng, 2)
        strategies = STRATEGIES[lam]  # (word, setting)
        words = (stimulus.word1, stimulus.word2)

        def own_outcome(label: Setting):
            i = _SETTING_INDEX[label]
            return int(strategies[0, i]), int(strategies[1, i])

        agent = _GlossResponder(words, "lhv", own_outcome)
        return _SharedAgent(agent)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lam = self._draw(rng, (n, 2))
        values = STRATEGIES[lam]  # (n, word, setting)
        out = values[:, :, _CONTEXT_SLOTS]  # (n, word, context, party)
        return np.ascontiguousarray(out.transpose(0, 2, 3, 1))


class _SharedAgent:
    def __init__(self, agent):
        self._agent = agent

    def for_context(self, alice: Setting, bob: Setting):
        return self._agent, self._agent


_JOINT_OUTCOMES = np.array([(1, 1), (1, -1), (-1, 1), (-1, -1)], dtype=np.int8)


class QuantumAgents:
    """Agents whose answers follow Born-rule statistics of a shared two-part state.

    For every context and word the joint ``(a, b)`` outcome is drawn once
    from ``<psi| P_a (x) P_b |psi>`` with spin observables at the parties'
    angles; each agent is then handed its own half.
    """

    simulated = True

    def __init__(self, angles: Sequence[float] = qs.TSIRELSON_ANGLES, state: qs.SemanticState | None = None):
        if len(angles) != 4:
            raise ValueError("need four angles (A, A', B, B')")
        self.angles = tuple(float(x) for x in angles)
        self.state = qs.singlet() if state is None else state
        probs = []
        for x, y in CONTEXTS:
            dist = qs.joint_distribution(
                self.state,
                qs.spin_observable(self.angles[_SETTING_INDEX[x]]),
                qs.spin_observable(self.angles[_SETTING_INDEX[y]]),
            )
            row = dict.fromkeys(((1, 1), (1, -1), (-1, 1), (-1, -1)), 0.0)
            for (va, vb), p in dist.items():
                row[(int(np.sign(va)), int(np.sign(vb)))] += p
            probs.append([row[(int(a), int(b))] for a, b in _JOINT_OUTCOMES])
        self.joint_probs = np.array(probs)
        cum = np.cumsum(self.joint_probs, axis=1)
        self._cum = cum / cum[:, -1:]

    def describe(self) -> dict:
        return {
            "kind": "quantum",
            "angles": list(self.angles),
            "state": [[z.real, z.imag] for z in self.state.amplitudes.tolist()],
        }

    def expected_correlations(self) -> np.ndarray:
        return np.array([
            qs.joint_correlation(
                self.state,
                qs.spin_observable(self.angles[_SETTING_INDEX[x]]),
                qs.spin_observable(self.angles[_SETTING_INDEX[y]]),
            )
            for x, y in CONTEXTS
        ])

    def _outcomes(self, u: np.ndarray) -> np.ndarray:
        # u: (..., 4 contexts, 2 words) uniforms -> (..., context, party, word)
        idx = (u[..., None] >= self._cum[:, None, :-1]).sum(axis=-1)
        pairs = _JOINT_OUTCOMES[idx]  # (..., context, word, party)
        return np.swapaxes(pairs, -1, -2)

    def start_trial(self, stimulus: TrialStimulus, rng: np.random.Generator):
        return _PreparedTrial((stimulus.word1, stimulus.word2), "quantum", self._outcomes(rng.random((4, 2))))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.ascontiguousarray(self._outcomes(rng.random((n, 4, 2))))


_PR_SIGNS = np.array([1, -1, 1, 1], dtype=np.int8)


class PRBoxAgents:
    """Popescu-Rohrlich box: uniform marginals, perfectly (anti)correlated pairs.

    Outcomes are anticorrelated only in the ``(A, B')`` context, the one the
    CHSH sum subtracts, so S reaches the algebraic maximum of 4.
    """

    simulated = True

    def describe(self) -> dict:
        return {"kind": "prbox"}

    def expected_correlations(self) -> np.ndarray:
        return _PR_SIGNS.astype(float)

    def _outcomes(self, bits: np.ndarray) -> np.ndarray:
        a = (1 - 2 * bits).astype(np.int8)  # (..., context, word)
        b = a * _PR_SIGNS[:, None]
        return np.stack([a, b], axis=-2)

    def start_trial(self, stimulus: TrialStimulus, rng: np.random.Generator):
        return _PreparedTrial((stimulus.word1, stimulus.word2), "prbox", self._outcomes(rng.integers(0, 2, (4, 2))))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._outcomes(rng.integers(0, 2, (n, 4, 2)))


@dataclass(frozen=True)
class FlipRule:
    """Bob settings whose answer is dictated by Alice's setting.

    At a flipped setting Bob answers beta on both words when Alice is at A
    and alpha when she is at A'.  Everywhere else both parties answer alpha.
    """

    flip_settings: frozenset = frozenset({Setting.B_PRIME})

    def __post_init__(self):
        flips = frozenset(Setting(s) for s in self.flip_settings)
        if not flips <= {Setting.B, Setting.B_PRIME}:
            raise ValueError("only Bob's settings can be flipped")
        object.__setattr__(self, "flip_settings", flips)


class SignalingAgents:
    """Deterministic agents in which Bob's answer depends on Alice's setting."""

    simulated = True

    def __init__(self, rule: FlipRule = FlipRule()):
        self.rule = rule
        table = np.ones((4, 2, 2), dtype=np.int8)
        for c, (x, y) in enumerate(CONTEXTS):
            if y in rule.flip_settings and x is Setting.A:
                table[c, 1, :] = -1
        self._table = table

    def describe(self) -> dict:
        return {"kind": "signaling", "flip": sorted(s.value for s in self.rule.flip_settings)}

    def expected_correlations(self) -> np.ndarray:
        return (self._table[:, 0] * self._table[:, 1]).mean(axis=-1).astype(float)

    def start_trial(self, stimulus: TrialStimulus, rng: np.random.Generator):
        return _PreparedTrial((stimulus.word1, stimulus.word2), "signaling", self._table)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.broadcast_to(self._table, (n, 4, 2, 2)).copy()


def lhv_agent(strategy_distribution, rng=None) -> LocalHiddenVariableAgents:
    # randomness is supplied per trial by the runner (or to ``sample``)
    return LocalHiddenVariableAgents(strategy_distribution)


def quantum_agent(angles=qs.TSIRELSON_ANGLES, rng=None) -> QuantumAgents:
    return QuantumAgents(angles)


def pr_box_agent(rng=None) -> PRBoxAgents:
    return PRBoxAgents()


def signaling_agent(flip_rule: FlipRule = FlipRule(), rng=None) -> SignalingAgents:
    return SignalingAgents(flip_rule)
