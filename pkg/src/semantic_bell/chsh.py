"""CHSH statistics over classified interpretation outcomes.

Outcomes are stored as an integer array of shape ``(n_trials, 4, 2, 2)``
indexed ``[trial, context, party, word]`` with entries in ``{+1, -1}``.
Contexts follow the order of the CHSH sum::

    S = E(A,B) - E(A,B') + E(A',B) + E(A',B')
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np


class Party(str, Enum):
    ALICE = "alice"
    BOB = "bob"


class Setting(str, Enum):
    A = "A"
    A_PRIME = "A'"
    B = "B"
    B_PRIME = "B'"

    @property
    def party(self) -> Party:
        return Party.ALICE if self in (Setting.A, Setting.A_PRIME) else Party.BOB

    @property
    def primed(self) -> bool:
        return self in (Setting.A_PRIME, Setting.B_PRIME)


CONTEXTS: tuple[tuple[Setting, Setting], ...] = (
    (Setting.A, Setting.B),
    (Setting.A, Setting.B_PRIME),
    (Setting.A_PRIME, Setting.B),
    (Setting.A_PRIME, Setting.B_PRIME),
)
CONTEXT_NAMES = tuple(a.value + b.value for a, b in CONTEXTS)
CHSH_SIGNS = np.array([1, -1, 1, 1])

CLASSICAL_BOUND = 2.0
TSIRELSON_BOUND = 2 * math.sqrt(2)
ALGEBRAIC_BOUND = 4.0

# (context index, party index) pairs in which each setting is measured
_SETTING_CONTEXTS = {
    Setting.A: ((0, 0), (1, 0)),
    Setting.A_PRIME: ((2, 0), (3, 0)),
    Setting.B: ((0, 1), (2, 1)),
    Setting.B_PRIME: ((1, 1), (3, 1)),
}


@dataclass(frozen=True)
class OutcomeVector:
    """Classified meanings of the two words: +1 for meaning alpha, -1 for beta."""

    word1: int
    word2: int

    def __post_init__(self):
        for v in (self.word1, self.word2):
            if v not in (1, -1) or isinstance(v, bool):
                raise ValueError(f"outcome entries must be +1 or -1, got {v!r}")

    def as_tuple(self) -> tuple[int, int]:
        return (self.word1, self.word2)

    def dot(self, other: "OutcomeVector") -> float:
        """Dot product of the two vectors after scaling each to unit length."""
        return (self.word1 * other.word1 + self.word2 * other.word2) / 2


def pair_expectation(pairs: Iterable[tuple[OutcomeVector, OutcomeVector]]) -> float:
    pairs = list(pairs)
    if not pairs:
        raise ValueError("pair_expectation needs at least one pair")
    return sum(a.dot(b) for a, b in pairs) / len(pairs)


def as_outcomes(trials) -> np.ndarray:
    """Coerce per-trial outcome quadruples into the canonical outcome array.

    Each trial is four ``(alice_vector, bob_vector)`` pairs in context order;
    vectors may be :class:`OutcomeVector` or plain 2-sequences.
    """
    if isinstance(trials, np.ndarray):
        arr = trials
    else:
        def vec(v):
            return v.as_tuple() if isinstance(v, OutcomeVector) else tuple(v)

        arr = np.array(
            [[[vec(a), vec(b)] for a, b in quad] for quad in trials], dtype=np.int8
        )
    if arr.ndim != 4 or arr.shape[1:] != (4, 2, 2):
        raise ValueError(f"expected outcomes of shape (n, 4, 2, 2), got {arr.shape}")
    if arr.shape[0] and not np.all(np.abs(arr) == 1):
        raise ValueError("outcome entries must be +1 or -1")
    return arr


def trial_products(outcomes: np.ndarray) -> np.ndarray:
    """Per-trial, per-context normalized dot products, shape ``(n, 4)``."""
    o = outcomes.astype(np.int64)
    return (o[:, :, 0, :] * o[:, :, 1, :]).sum(axis=-1) / 2.0


def trial_s(outcomes: np.ndarray) -> np.ndarray:
    """CHSH combination evaluated on each trial alone; S is its mean."""
    return trial_products(outcomes) @ CHSH_SIGNS


@dataclass(frozen=True)
class CorrelationTable:
    e_ab: float
    e_abp: float
    e_apb: float
    e_apbp: float
    n_trials: int
    # marginals[context, party, word] = mean outcome of that component
    marginals: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        for e in self.expectations:
            if not -1.0 <= e <= 1.0:
                raise ValueError(f"expectation value {e} outside [-1, 1]")
        if self.n_trials < 1:
            raise ValueError("n_trials must be positive")

    @property
    def expectations(self) -> tuple[float, float, float, float]:
        return (self.e_ab, self.e_abp, self.e_apb, self.e_apbp)

    def marginal(self, setting: Setting, partner: Setting) -> np.ndarray:
        """Mean outcome vector of *setting* measured alongside *partner*."""
        pair = (setting, partner) if setting.party is Party.ALICE else (partner, setting)
        ctx = CONTEXTS.index(pair)
        return self.marginals[ctx, 0 if setting.party is Party.ALICE else 1]


def correlation_table(outcomes) -> CorrelationTable:
    outcomes = as_outcomes(outcomes)
    n = outcomes.shape[0]
    if n == 0:
        raise ValueError("no trials to tabulate")
    e = trial_products(outcomes).sum(axis=0) / n
    marginals = outcomes.astype(np.int64).sum(axis=0) / n
    return CorrelationTable(*(float(x) for x in e), n_trials=n, marginals=marginals)


def chsh_s(table: CorrelationTable) -> float:
    return table.e_ab - table.e_abp + table.e_apb + table.e_apbp


def running_s(trials) -> list[tuple[int, float]]:
    """S over the first k trials, for k = 1..n."""
    outcomes = as_outcomes(trials)
    n = outcomes.shape[0]
    if n == 0:
        raise ValueError("running_s needs at least one trial")
    cum = np.cumsum(trial_products(outcomes), axis=0)
    k = np.arange(1, n + 1)
    e = cum / k[:, None]
    s = e[:, 0] - e[:, 1] + e[:, 2] + e[:, 3]
    return [(int(i), float(v)) for i, v in zip(k, s)]


def bootstrap_s(trials, resamples: int, rng: np.random.Generator, *, block: int = 2_000_000) -> np.ndarray:
    """Bootstrap replicates of S, resampling whole trials with replacement."""
    per_trial = trial_s(as_outcomes(trials))
    n = per_trial.size
    if n < 2:
        raise ValueError("bootstrap needs at least two trials")
    if resamples < 100:
        raise ValueError("use at least 100 bootstrap resamples")
    out = np.empty(resamples)
    step = max(1, block // n)
    for start in range(0, resamples, step):
        stop = min(start + step, resamples)
        idx = rng.integers(0, n, size=(stop - start, n))
        out[start:stop] = per_trial[idx].mean(axis=1)
    return out


def bootstrap_ci(trials, resamples: int, level: float, rng: np.random.Generator) -> tuple[float, float]:
    """Percentile bootstrap interval for S at confidence *level*."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    reps = bootstrap_s(trials, resamples, rng)
    tail = (1.0 - level) / 2
    low, high = np.quantile(reps, [tail, 1.0 - tail])
    return float(low), float(high)


ODD_SIGN_PATTERNS = tuple(
    signs for signs in itertools.product((1, -1), repeat=4) if signs.count(-1) % 2 == 1
)


def s_odd(expectations: Sequence[float]) -> float:
    """Max of the signed sum of the four correlations over odd-minus sign patterns."""
    e = np.asarray(expectations, dtype=float)
    return float(max(np.dot(signs, e) for signs in ODD_SIGN_PATTERNS))


@dataclass(frozen=True)
class SignalingReport:
    """Marginal-consistency diagnostics for a cyclic system of rank 4.

    ``deltas[X]`` is the shift in the mean outcome of setting ``X`` between
    the two contexts it appears in, averaged over the two word components.
    The data are flagged contextual only when ``s_odd > 2 + delta_total``.
    """

    deltas: dict
    delta_total: float
    s_odd: float
    contextual_cbd: bool

    def as_dict(self) -> dict:
        return {
            "deltas": {k.value: v for k, v in self.deltas.items()},
            "delta_total": self.delta_total,
            "s_odd": self.s_odd,
            "contextual_cbd": self.contextual_cbd,
        }


def signaling_report(trials) -> SignalingReport:
    outcomes = as_outcomes(trials)
    if outcomes.shape[0] == 0:
        raise ValueError("signaling_report needs observations in every context")
    table = correlation_table(outcomes)
    m = table.marginals
    deltas = {}
    for setting, ((c1, p), (c2, _)) in _SETTING_CONTEXTS.items():
        deltas[setting] = float(np.mean(np.abs(m[c1, p] - m[c2, p])))
    total = float(sum(deltas.values()))
    so = s_odd(table.expectations)
    return SignalingReport(deltas=deltas, delta_total=total, s_odd=so, contextual_cbd=so > 2 + total)
