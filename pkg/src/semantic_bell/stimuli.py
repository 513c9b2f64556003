"""Stimulus construction: ambiguous words, sentence templates, personas, priming prompts.

The bundled data files under ``semantic_bell/data`` are plain text so they
can be edited without touching code:

``lexicon.csv``
    columns ``word,alpha,beta`` -- the surface form and the glosses of its
    two meanings.
``templates.txt``
    one template per line containing ``{word1}`` and ``{word2}`` exactly
    once; blank lines and ``#`` comments are ignored.
``prompts.csv``
    columns ``party,text`` with party ``alice`` or ``bob``.
"""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .chsh import Setting

_SLOT = re.compile(r"\{(\w+)\}")


@dataclass(frozen=True)
class AmbiguousWord:
    surface: str
    alpha: str
    beta: str

    def __post_init__(self):
        if not self.surface.strip():
            raise ValueError("empty word surface")
        if not self.alpha.strip() or not self.beta.strip():
            raise ValueError(f"{self.surface!r}: both glosses must be nonempty")
        if self.alpha.strip().lower() == self.beta.strip().lower():
            raise ValueError(f"{self.surface!r}: glosses must differ")

    def gloss(self, outcome: int) -> str:
        return self.alpha if outcome == 1 else self.beta


@dataclass(frozen=True)
class SentenceTemplate:
    pattern: str

    def __post_init__(self):
        slots = _SLOT.findall(self.pattern)
        if sorted(slots) != ["word1", "word2"]:
            raise ValueError(
                f"template must contain {{word1}} and {{word2}} exactly once: {self.pattern!r}"
            )

    def render(self, word1: str, word2: str) -> str:
        return self.pattern.replace("{word1}", word1).replace("{word2}", word2)


@dataclass(frozen=True)
class Persona:
    name: str
    age: int
    location: str
    language: str = "English"


@dataclass(frozen=True)
class PersonaConfig:
    locations: tuple[str, ...] = (
        "Bloomington, IN",
        "Detroit, MI",
        "Chicago, IL",
        "Austin, TX",
        "Portland, OR",
    )
    age_min: int = 25
    age_max: int = 70
    language: str = "English"
    names: tuple[str, str] = ("Alice", "Bob")

    def __post_init__(self):
        object.__setattr__(self, "locations", tuple(self.locations))
        object.__setattr__(self, "names", tuple(self.names))
        if self.age_min > self.age_max:
            raise ValueError("age_min exceeds age_max")
        if len(self.names) != 2:
            raise ValueError("exactly two persona names are required")


@dataclass(frozen=True)
class SettingPrompt:
    label: Setting
    text: str


@dataclass(frozen=True)
class PromptPool:
    alice: tuple[str, ...]
    bob: tuple[str, ...]

    def __post_init__(self):
        for party in ("alice", "bob"):
            texts = tuple(getattr(self, party))
            if len(set(texts)) != len(texts):
                raise ValueError(f"duplicate {party} prompts")
            object.__setattr__(self, party, texts)


@dataclass(frozen=True)
class TrialStimulus:
    word1: AmbiguousWord
    word2: AmbiguousWord
    template: SentenceTemplate
    sentence: str
    settings: tuple[SettingPrompt, ...]
    alice: Persona
    bob: Persona
    words: tuple[str, str] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "words", (self.word1.surface, self.word2.surface))
        if self.sentence != self.template.render(*self.words):
            raise ValueError("sentence does not match template rendering")

    def setting(self, label: Setting) -> SettingPrompt:
        for s in self.settings:
            if s.label is label:
                return s
        raise KeyError(label)


# --- loading -----------------------------------------------------------------

def _data_text(name: str) -> str:
    return resources.files("semantic_bell.data").joinpath(name).read_text(encoding="utf-8")


def _read(path: str | Path | None, default: str) -> str:
    return _data_text(default) if path is None else Path(path).read_text(encoding="utf-8")


def load_lexicon(path=None) -> list[AmbiguousWord]:
    rows = csv.DictReader(io.StringIO(_read(path, "lexicon.csv")))
    words = [AmbiguousWord(r["word"].strip(), r["alpha"].strip(), r["beta"].strip()) for r in rows]
    if len({w.surface for w in words}) != len(words):
        raise ValueError("lexicon contains duplicate words")
    return words


def load_templates(path=None) -> list[SentenceTemplate]:
    lines = _read(path, "templates.txt").splitlines()
    return [SentenceTemplate(ln.strip()) for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]


def load_prompts(path=None) -> PromptPool:
    alice, bob = [], []
    for r in csv.DictReader(io.StringIO(_read(path, "prompts.csv"))):
        party = r["party"].strip().lower()
        if party == "alice":
            alice.append(r["text"].strip())
        elif party == "bob":
            bob.append(r["text"].strip())
        else:
            raise ValueError(f"unknown party tag {r['party']!r}")
    return PromptPool(tuple(alice), tuple(bob))


def load_stopwords(path=None) -> frozenset[str]:
    lines = _read(path, "stopwords.txt").splitlines()
    return frozenset(ln.strip().lower() for ln in lines if ln.strip() and not ln.startswith("#"))


# --- sampling ----------------------------------------------------------------

def generate_personas(config: PersonaConfig, rng: np.random.Generator) -> tuple[Persona, Persona]:
    if not config.locations:
        raise ValueError("no candidate locations configured")
    out = []
    for name in config.names:
        loc = config.locations[int(rng.integers(len(config.locations)))]
        age = int(rng.integers(config.age_min, config.age_max + 1))
        out.append(Persona(name=name, age=age, location=loc, language=config.language))
    return out[0], out[1]


def assemble_trial(lexicon, templates, prompts: PromptPool, personas, rng: np.random.Generator) -> TrialStimulus:
    """Draw a word pair, a template and four distinct setting prompts."""
    if len(lexicon) < 2:
        raise ValueError("lexicon needs at least two words")
    if not templates:
        raise ValueError("no sentence templates")
    if len(prompts.alice) < 2 or len(prompts.bob) < 2:
        raise ValueError("need at least two prompts per party")
    i, j = rng.choice(len(lexicon), size=2, replace=False)
    w1, w2 = lexicon[int(i)], lexicon[int(j)]
    template = templates[int(rng.integers(len(templates)))]
    a, ap = rng.choice(len(prompts.alice), size=2, replace=False)
    b, bp = rng.choice(len(prompts.bob), size=2, replace=False)
    settings = (
        SettingPrompt(Setting.A, prompts.alice[int(a)]),
        SettingPrompt(Setting.A_PRIME, prompts.alice[int(ap)]),
        SettingPrompt(Setting.B, prompts.bob[int(b)]),
        SettingPrompt(Setting.B_PRIME, prompts.bob[int(bp)]),
    )
    alice, bob = personas
    return TrialStimulus(
        word1=w1,
        word2=w2,
        template=template,
        sentence=template.render(w1.surface, w2.surface),
        settings=settings,
        alice=alice,
        bob=bob,
    )
