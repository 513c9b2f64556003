"""Experiment orchestration, persistence and summaries.

Record file (``records.jsonl``)
    Line-delimited JSON.  The first line is a header::

        {"schema_version": 1, "kind": "header", "fingerprint": <sha256 hex>,
         "config": {...}, "agents": {...}, "classifier": {...}}

    Every further line is one trial::

        {"schema_version": 1, "kind": "trial", "trial_index": 0,
         "status": "complete" | "failed", "failure": null | <text>,
         "started_at": <ISO-8601 or null>, "finished_at": <ISO-8601 or null>,
         "personas": {"alice": {name, age, location, language}, "bob": {...}},
         "stimulus": {"words": [{"surface", "alpha", "beta"}, {...}],
                      "template": <pattern>, "sentence": <text>,
                      "settings": {"A": <prompt>, "A'": ..., "B": ..., "B'": ...}},
         "measurements": [
            {"context": "AB",
             "alice": {"setting": "A", "provider_id", "model_id",
                       "attempts": [{"interpretations": [w1, w2],
                                     "verdicts": [..], "rationales": [..],
                                     "latency": seconds, "transcript": {...}?,
                                     "error": <text>?}],
                       "outcome": [+-1, +-1] | null},
             "bob": {...}},
            ... one entry per context in the order AB, AB', A'B, A'B' ...]}

    Timestamps are null for simulated agents so seeded runs are bit-identical.

Summary file (``summary.json``)
    One JSON object, see :meth:`ExperimentSummary.to_dict`.

Series file (``series.tsv``)
    Tab-separated ``trial_index`` / ``running_s`` columns with a header row.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from itertools import islice
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import chsh
from .agents import AgentError, AgentFactory, AgentRequest
from .chsh import CONTEXT_NAMES, CONTEXTS
from .classifier import (
    ReinterpretationExhausted,
    Verdict,
    classify_with_retry,
    outcome_from,
)
from .stimuli import (
    AmbiguousWord,
    PersonaConfig,
    TrialStimulus,
    assemble_trial,
    generate_personas,
    load_lexicon,
    load_prompts,
    load_templates,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
RECORDS_FILE = "records.jsonl"
SUMMARY_FILE = "summary.json"
SERIES_FILE = "series.tsv"
_BOOTSTRAP_STREAM = (2**31 - 1, 0)


class ConfigError(ValueError):
    pass


class FingerprintMismatch(ConfigError):
    pass


class RecordFileError(ValueError):
    pass


class NoCompleteTrials(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    n_trials: int
    seed: int = 0
    personas: PersonaConfig = PersonaConfig()
    lexicon_path: str | None = None
    templates_path: str | None = None
    prompts_path: str | None = None
    max_attempts: int = 3
    concurrency: int = 1
    bootstrap_resamples: int = 2000
    ci_level: float = 0.95
    output_dir: str | None = None

    def __post_init__(self):
        if self.n_trials < 1:
            raise ConfigError("n_trials must be at least 1")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be at least 1")
        if self.bootstrap_resamples < 100:
            raise ConfigError("bootstrap_resamples must be at least 100")
        if not 0 < self.ci_level < 1:
            raise ConfigError("ci_level must lie in (0, 1)")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["personas"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["personas"].items()}
        return d


def describe_backend(backend) -> dict:
    d = {"name": getattr(backend, "name", type(backend).__name__)}
    entry = getattr(backend, "entry", None)
    if entry is not None:
        d["model"] = entry.identifier
    return d


def _file_digest(path: str | None) -> str | None:
    if path is None:
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def fingerprint(config: ExperimentConfig, factory: AgentFactory, backend) -> str:
    """Hash of everything that determines trial outcomes (not N, concurrency or paths)."""
    cfg = config.to_dict()
    for key in ("n_trials", "concurrency", "output_dir"):
        cfg.pop(key)
    for key in ("lexicon_path", "templates_path", "prompts_path"):
        cfg[key] = _file_digest(cfg[key])
    blob = json.dumps(
        {"config": cfg, "agents": factory.describe(), "classifier": describe_backend(backend)},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()


# --- trial records -------------------------------------------------------------

@dataclass
class TrialRecord:
    trial_index: int
    status: str
    personas: dict
    stimulus: dict
    measurements: list = field(default_factory=list)
    started_at: str | None = None
    finished_at: str | None = None
    failure: str | None = None

    def __post_init__(self):
        if self.status not in ("complete", "failed"):
            raise ValueError(f"bad trial status {self.status!r}")
        if self.status == "complete":
            if [m.get("context") for m in self.measurements] != list(CONTEXT_NAMES):
                raise ValueError("a complete trial needs one measurement per context, in order")
            for m in self.measurements:
                for party in ("alice", "bob"):
                    if m[party].get("outcome") is None:
                        raise ValueError(f"complete trial lacks an outcome for {party} in {m['context']}")

    @property
    def complete(self) -> bool:
        return self.status == "complete"

    def outcomes(self) -> np.ndarray:
        """Outcome table ``[context, party, word]`` of a complete trial."""
        if not self.complete:
            raise ValueError(f"trial {self.trial_index} is not complete")
        return np.array([[m["alice"]["outcome"], m["bob"]["outcome"]] for m in self.measurements], dtype=np.int8)

    def words(self) -> tuple[AmbiguousWord, AmbiguousWord]:
        w = self.stimulus["words"]
        return tuple(AmbiguousWord(d["surface"], d["alpha"], d["beta"]) for d in w)

    def to_dict(self) -> dict:
        d = {"schema_version": SCHEMA_VERSION, "kind": "trial"}
        # shallow on purpose: the nested values are plain JSON data already
        d.update((f.name, getattr(self, f.name)) for f in dataclasses.fields(self))
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        if d.get("kind") != "trial":
            raise ValueError("not a trial record")
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {d.get('schema_version')!r}")
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def _persona_dict(p) -> dict:
    return {"name": p.name, "age": p.age, "location": p.location, "language": p.language}


def _stimulus_dict(s: TrialStimulus) -> dict:
    return {
        "words": [{"surface": w.surface, "alpha": w.alpha, "beta": w.beta} for w in (s.word1, s.word2)],
        "template": s.template.pattern,
        "sentence": s.sentence,
        "settings": {p.label.value: p.text for p in s.settings},
    }


def _attempt_dict(attempt) -> dict:
    d = {}
    if attempt.response is not None:
        r = attempt.response
        d["interpretations"] = list(r.interpretations)
        d["provider_id"] = r.provider_id
        d["model_id"] = r.model_id
        d["latency"] = r.latency
        if r.transcript is not None:
            d["transcript"] = r.transcript
    if attempt.classifications is not None:
        d["verdicts"] = [c.verdict.value for c in attempt.classifications]
        d["rationales"] = [c.rationale for c in attempt.classifications]
    if attempt.error is not None:
        d["error"] = attempt.error
    return d


# --- record file I/O --------------------------------------------------------------

def _header(config: ExperimentConfig, factory, backend) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "header",
        "fingerprint": fingerprint(config, factory, backend),
        "config": config.to_dict(),
        "agents": factory.describe(),
        "classifier": describe_backend(backend),
    }


def iter_record_file(path: str | Path, *, allow_partial_tail: bool = False) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, object)`` for every line; errors name the line.

    With *allow_partial_tail*, an unparseable final line that lacks its
    newline (an interrupted write) is skipped instead of raising.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        pending = None
        for lineno, line in enumerate(fh, start=1):
            if pending is not None:
                yield pending
            if not line.strip():
                pending = None
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("record is not an object")
            except ValueError as exc:
                if allow_partial_tail and not line.endswith("\n"):
                    log.warning("%s:%d: dropping incomplete trailing record", path, lineno)
                    return
                raise RecordFileError(f"{path}:{lineno}: corrupt record ({exc})") from None
            pending = (lineno, obj)
        if pending is not None:
            yield pending


def read_records(path: str | Path, *, allow_partial_tail: bool = False) -> tuple[dict | None, list[TrialRecord]]:
    header, records = None, []
    for lineno, obj in iter_record_file(path, allow_partial_tail=allow_partial_tail):
        kind = obj.get("kind")
        if kind == "header":
            if header is not None or records:
                raise RecordFileError(f"{path}:{lineno}: unexpected header record")
            if obj.get("schema_version") != SCHEMA_VERSION:
                raise RecordFileError(f"{path}:{lineno}: unsupported schema_version {obj.get('schema_version')!r}")
            header = obj
        elif kind == "trial":
            try:
                rec = TrialRecord.from_dict(obj)
            except (TypeError, ValueError, KeyError) as exc:
                raise RecordFileError(f"{path}:{lineno}: invalid trial record ({exc})") from None
            expected = records[-1].trial_index + 1 if records else 0
            if rec.trial_index != expected:
                raise RecordFileError(f"{path}:{lineno}: expected trial_index {expected}, found {rec.trial_index}")
            records.append(rec)
        else:
            raise RecordFileError(f"{path}:{lineno}: unknown record kind {kind!r}")
    return header, records


class RecordWriter:
    """Append-only single writer; every line is flushed before the next trial starts."""

    def __init__(self, path: Path):
        self.path = path
        self._fh = path.open("a", encoding="utf-8")

    def write(self, obj: dict | str) -> None:
        line = obj if isinstance(obj, str) else json.dumps(obj, sort_keys=True, ensure_ascii=False)
        self._fh.write(line + "\n")
        self._fh.flush()

    def close(self) -> None:
        os.fsync(self._fh.fileno())
        self._fh.close()


# --- summaries ------------------------------------------------------------------

@dataclass
class ExperimentSummary:
    n_attempted: int
    n_complete: int
    n_failed: int
    table: chsh.CorrelationTable
    s: float
    ci: tuple[float, float] | None
    ci_level: float
    bootstrap_resamples: int
    signaling: chsh.SignalingReport
    running: list

    def __post_init__(self):
        if self.n_complete + self.n_failed != self.n_attempted:
            raise ValueError("trial counts do not add up")

    def to_dict(self) -> dict:
        t = self.table
        abs_s = abs(self.s)
        return {
            "schema_version": SCHEMA_VERSION,
            "n_attempted": self.n_attempted,
            "n_complete": self.n_complete,
            "n_failed": self.n_failed,
            "expectations": dict(zip(CONTEXT_NAMES, t.expectations)),
            "marginals": {
                name: {"alice": t.marginals[c, 0].tolist(), "bob": t.marginals[c, 1].tolist()}
                for c, name in enumerate(CONTEXT_NAMES)
            },
            "s": self.s,
            "abs_s": abs_s,
            "ci": None if self.ci is None else list(self.ci),
            "ci_level": self.ci_level,
            "bootstrap_resamples": self.bootstrap_resamples,
            "signaling": self.signaling.as_dict(),
            "bounds": {
                "classical": chsh.CLASSICAL_BOUND,
                "quantum": chsh.TSIRELSON_BOUND,
                "algebraic": chsh.ALGEBRAIC_BOUND,
                "violates_classical": abs_s > chsh.CLASSICAL_BOUND,
                "exceeds_quantum": abs_s > chsh.TSIRELSON_BOUND,
            },
            "running_s": [[k, v] for k, v in self.running],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def bootstrap_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, *_BOOTSTRAP_STREAM])


def summarize_outcomes(outcomes: np.ndarray, n_failed: int = 0, *, seed: int = 0,
                       resamples: int = 2000, level: float = 0.95) -> ExperimentSummary:
    outcomes = chsh.as_outcomes(outcomes)
    n = outcomes.shape[0]
    if n == 0:
        raise NoCompleteTrials("no complete trials to summarize")
    table = chsh.correlation_table(outcomes)
    ci = chsh.bootstrap_ci(outcomes, resamples, level, bootstrap_rng(seed)) if n >= 2 else None
    return ExperimentSummary(
        n_attempted=n + n_failed,
        n_complete=n,
        n_failed=n_failed,
        table=table,
        s=chsh.chsh_s(table),
        ci=ci,
        ci_level=level,
        bootstrap_resamples=resamples,
        signaling=chsh.signaling_report(outcomes),
        running=chsh.running_s(outcomes),
    )


def reclassify(record: TrialRecord, backend) -> TrialRecord:
    """Re-derive outcomes from the persisted interpretations with another backend.

    For each agent the first stored attempt whose two interpretations both
    classify as alpha or beta is taken; if none does, the trial fails.
    """
    words = record.words()
    measurements = []
    failure = None
    for m in record.measurements:
        m = {"context": m["context"], **{p: dict(m.get(p, {})) for p in ("alice", "bob")}}
        for party in ("alice", "bob"):
            entry = m[party]
            entry["outcome"] = None
            attempts = []
            for a in entry.get("attempts", []):
                a = dict(a)
                texts = a.get("interpretations")
                if texts:
                    cls = [backend.classify(t, w) for t, w in zip(texts, words)]
                    a["verdicts"] = [c.verdict.value for c in cls]
                    a["rationales"] = [c.rationale for c in cls]
                    if entry["outcome"] is None and all(c.verdict in (Verdict.ALPHA, Verdict.BETA) for c in cls):
                        entry["outcome"] = list(outcome_from(cls).as_tuple())
                attempts.append(a)
            entry["attempts"] = attempts
            if entry["outcome"] is None and failure is None:
                failure = f"{party} in {m['context']}: no usable interpretation on reclassification"
        measurements.append(m)
    complete = failure is None and len(measurements) == len(CONTEXTS)
    return dataclasses.replace(
        record,
        status="complete" if complete else "failed",
        measurements=measurements,
        failure=None if complete else (failure or record.failure),
    )


def summarize(records: Iterable[TrialRecord], *, seed: int = 0, resamples: int = 2000,
              level: float = 0.95, reclassify_with=None) -> ExperimentSummary:
    outcomes, n_failed = [], 0
    for rec in records:
        if reclassify_with is not None:
            rec = reclassify(rec, reclassify_with)
        if rec.complete:
            outcomes.append(rec.outcomes())
        else:
            n_failed += 1
    if not outcomes:
        raise NoCompleteTrials("no complete trials to summarize")
    return summarize_outcomes(np.stack(outcomes), n_failed, seed=seed, resamples=resamples, level=level)


def summarize_file(path: str | Path, *, reclassify_with=None, resamples: int | None = None,
                   level: float | None = None) -> ExperimentSummary:
    header, records = read_records(path)
    if header is None:
        raise RecordFileError(f"{path}: missing header record")
    cfg = header["config"]
    return summarize(
        records,
        seed=cfg["seed"],
        resamples=resamples or cfg["bootstrap_resamples"],
        level=level or cfg["ci_level"],
        reclassify_with=reclassify_with,
    )


def write_outputs(summary: ExperimentSummary, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / SUMMARY_FILE).write_text(summary.to_json(), encoding="utf-8")
    lines = ["trial_index\trunning_s"] + [f"{k}\t{v!r}" for k, v in summary.running]
    (out_dir / SERIES_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- the trial loop -------------------------------------------------------------

def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


class _TrialRunner:
    def __init__(self, config: ExperimentConfig, factory: AgentFactory, backend):
        self.config = config
        self.factory = factory
        self.backend = backend
        self.lexicon = load_lexicon(config.lexicon_path)
        self.templates = load_templates(config.templates_path)
        self.prompts = load_prompts(config.prompts_path)
        self.timestamps = not getattr(factory, "simulated", False)

    def __call__(self, index: int) -> TrialRecord:
        cfg = self.config
        stim_rng = np.random.default_rng([cfg.seed, index, 0])
        agent_rng = np.random.default_rng([cfg.seed, index, 1])
        started = _now() if self.timestamps else None
        personas = generate_personas(cfg.personas, stim_rng)
        stimulus = assemble_trial(self.lexicon, self.templates, self.prompts, personas, stim_rng)
        words = (stimulus.word1, stimulus.word2)
        measurements, failure = [], None
        try:
            agents = self.factory.start_trial(stimulus, agent_rng)
            for (x, y), name in zip(CONTEXTS, CONTEXT_NAMES):
                pair = agents.for_context(x, y)
                m = {"context": name}
                for party, agent, label, persona in (
                    ("alice", pair[0], x, stimulus.alice),
                    ("bob", pair[1], y, stimulus.bob),
                ):
                    request = AgentRequest(persona, stimulus.setting(label), stimulus.sentence, stimulus.words)
                    entry = {"setting": label.value}
                    m[party] = entry
                    try:
                        result = classify_with_retry(agent, request, words, self.backend, cfg.max_attempts)
                    except ReinterpretationExhausted as exc:
                        entry["attempts"] = [_attempt_dict(a) for a in exc.log]
                        entry["outcome"] = None
                        raise
                    last = result.log[-1].response
                    entry["provider_id"] = last.provider_id
                    entry["model_id"] = last.model_id
                    entry["attempts"] = [_attempt_dict(a) for a in result.log]
                    entry["outcome"] = list(result.outcome.as_tuple())
                measurements.append(m)
        except ReinterpretationExhausted as exc:
            measurements.append(m)
            failure = f"{party} in {name}: {exc}"
        except AgentError as exc:
            failure = f"agent error: {exc}"
        if failure:
            log.warning("trial %d failed: %s", index, failure)
        return TrialRecord(
            trial_index=index,
            status="failed" if failure else "complete",
            personas={"alice": _persona_dict(stimulus.alice), "bob": _persona_dict(stimulus.bob)},
            stimulus=_stimulus_dict(stimulus),
            measurements=measurements,
            started_at=started,
            finished_at=_now() if self.timestamps else None,
            failure=failure,
        )


def _execute(run_trial, indices: range, concurrency: int):
    """Yield records in trial order, running up to *concurrency* trials at once."""
    if concurrency == 1:
        for i in indices:
            yield run_trial(i)
        return
    it = iter(indices)
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        pending = deque(pool.submit(run_trial, i) for i in islice(it, 2 * concurrency))
        try:
            while pending:
                rec = pending.popleft().result()
                nxt = next(it, None)
                if nxt is not None:
                    pending.append(pool.submit(run_trial, nxt))
                yield rec
        finally:
            for f in pending:
                f.cancel()


def run_experiment(config: ExperimentConfig, agent_factory: AgentFactory, classifier_backend,
                   *, resume: bool = False, overwrite: bool = False, progress=None) -> ExperimentSummary:
    """Run (or continue) an experiment and return its summary.

    When ``config.output_dir`` is set, each finished trial is appended to the
    record file before the next one is consumed, and summary and series
    files are written at the end.  *progress*, if given, is called with
    ``(trials_done, n_trials)`` after each trial.
    """
    run_trial = _TrialRunner(config, agent_factory, classifier_backend)
    header = _header(config, agent_factory, classifier_backend)
    chunks: list[np.ndarray] = []
    n_failed = 0
    start = 0
    writer = None

    if config.output_dir is not None:
        out_dir = Path(config.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / RECORDS_FILE
        existing = path.exists() and path.stat().st_size > 0
        if existing and resume:
            old_header, records = read_records(path, allow_partial_tail=True)
            if old_header is None:
                raise RecordFileError(f"{path}: missing header record")
            if old_header["fingerprint"] != header["fingerprint"]:
                raise FingerprintMismatch(
                    f"{path} was produced by a different configuration; refusing to resume"
                )
            _truncate_torn_tail(path)
            for rec in records:
                if rec.complete:
                    chunks.append(rec.outcomes()[None])
                else:
                    n_failed += 1
            start = len(records)
            log.info("resuming at trial %d", start)
        elif existing and not overwrite:
            raise ConfigError(f"{path} already exists; resume it or choose another output directory")
        else:
            path.write_text("", encoding="utf-8")
        writer = RecordWriter(path)
        if start == 0:
            writer.write(header)

    try:
        for rec in _execute(run_trial, range(start, config.n_trials), config.concurrency):
            if writer is not None:
                writer.write(rec.to_json())
            if rec.complete:
                chunks.append(rec.outcomes()[None])
            else:
                n_failed += 1
            if progress is not None:
                progress(rec.trial_index + 1, config.n_trials)
    finally:
        if writer is not None:
            writer.close()

    if not chunks:
        raise NoCompleteTrials(f"all {n_failed} trials failed")
    summary = summarize_outcomes(
        np.concatenate(chunks), n_failed,
        seed=config.seed, resamples=config.bootstrap_resamples, level=config.ci_level,
    )
    if config.output_dir is not None:
        write_outputs(summary, config.output_dir)
    return summary


def _truncate_torn_tail(path: Path) -> None:
    """Drop a torn trailing line, if any, so appends start on a fresh line."""
    with path.open("rb") as fh:
        data = fh.read()
    if data.endswith(b"\n"):
        return
    cut = data.rfind(b"\n") + 1
    with path.open("r+b") as fh:
        fh.truncate(cut)


def resume_experiment(output_dir: str | Path, config: ExperimentConfig, agent_factory: AgentFactory,
                      classifier_backend, **kwargs) -> ExperimentSummary:
    config = dataclasses.replace(config, output_dir=str(output_dir))
    return run_experiment(config, agent_factory, classifier_backend, resume=True, **kwargs)
