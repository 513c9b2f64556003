"""Command-line front end: ``semantic-bell {run,simulate,analyze,degeneracy,report}``.

Exit status: 0 on success, 1 on a runtime failure (e.g. every trial failed),
2 on a usage or configuration error.  Human-readable results go to stdout;
machine-readable output is only ever written to files.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import agents as ag
from .chsh import TSIRELSON_BOUND, Setting
from .classifier import KeywordClassifier, RemoteClassifier
from .degeneracy import DEFAULT_ERROR_RATES, DegeneracyModel, sweep_curves
from .remote import ChatClient, CredentialError, ModelEntry, ModelPool, RemoteAgents, RetryPolicy
from .runner import (
    ConfigError,
    ExperimentConfig,
    NoCompleteTrials,
    RecordFileError,
    read_records,
    run_experiment,
    summarize,
    write_outputs,
)
from .semantic_state import TSIRELSON_ANGLES
from .stimuli import PersonaConfig

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("semantic_bell")


class UsageError(Exception):
    pass


# --- config ---------------------------------------------------------------------

def load_config(path: str | None) -> tuple[dict, Path]:
    if path is None:
        return {}, Path.cwd()
    p = Path(path)
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data, p.parent


def _resolve(base: Path, value):
    if value is None:
        return None
    p = Path(value)
    return str(p if p.is_absolute() else base / p)


def experiment_config(data: dict, base: Path, args, default_out: str) -> ExperimentConfig:
    stim = data.get("stimuli") or {}
    try:
        personas = PersonaConfig(**(data.get("personas") or {}))
        return ExperimentConfig(
            n_trials=args.trials if args.trials is not None else int(data.get("trials", 50)),
            seed=args.seed if args.seed is not None else int(data.get("seed", 0)),
            personas=personas,
            lexicon_path=_resolve(base, stim.get("lexicon")),
            templates_path=_resolve(base, stim.get("templates")),
            prompts_path=_resolve(base, stim.get("prompts")),
            max_attempts=int(data.get("max_attempts", 3)),
            concurrency=int(args.concurrency if getattr(args, "concurrency", None) is not None
                            else data.get("concurrency", 1)),
            bootstrap_resamples=int(data.get("bootstrap_resamples", 2000)),
            ci_level=float(data.get("ci_level", 0.95)),
            output_dir=args.out or _resolve(base, data.get("output")) or default_out,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config: {exc}") from None


def _model_entry(d) -> ModelEntry:
    if not isinstance(d, dict):
        raise ConfigError(f"model entry must be a mapping, got {d!r}")
    try:
        return ModelEntry(**d)
    except TypeError as exc:
        raise ConfigError(f"bad model entry {d!r}: {exc}") from None


def _client(data: dict, temperature) -> ChatClient:
    retry = data.get("retry") or {}
    try:
        policy = RetryPolicy(**retry)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad retry settings: {exc}") from None
    return ChatClient(retry=policy, temperature=temperature)


def classifier_backend(kind: str | None, data: dict):
    section = data.get("classifier") or {}
    kind = kind or section.get("backend", "keyword")
    if kind == "keyword":
        stop = section.get("stopwords")
        if stop is not None:
            from .stimuli import load_stopwords
            return KeywordClassifier(load_stopwords(stop))
        return KeywordClassifier()
    if kind == "remote":
        if "model" not in section:
            raise ConfigError("remote classifier needs classifier.model in the config")
        entry = _model_entry(section["model"])
        entry.api_key()
        kwargs = {"template": section["template"]} if "template" in section else {}
        return RemoteClassifier(entry, _client(data, 0.0), **kwargs)
    raise ConfigError(f"unknown classifier backend {kind!r}")


# --- output -------------------------------------------------------------------

def print_summary(summary, out_dir=None, label=None) -> None:
    t = summary.table
    s = summary.s
    sig = summary.signaling
    if label:
        print(label)
    print(f"trials: {summary.n_complete} complete, {summary.n_failed} failed ({summary.n_attempted} attempted)")
    print("E(A,B) = {:+.4f}   E(A,B') = {:+.4f}   E(A',B) = {:+.4f}   E(A',B') = {:+.4f}".format(*t.expectations))
    ci = "n/a" if summary.ci is None else f"[{summary.ci[0]:+.4f}, {summary.ci[1]:+.4f}]"
    print(f"S = {s:+.4f}   |S| = {abs(s):.4f}   {summary.ci_level:.0%} CI {ci}")
    deltas = "  ".join(f"{k.value}:{v:.4f}" for k, v in sig.deltas.items())
    print(f"signaling: delta_total = {sig.delta_total:.4f} ({deltas})")
    verdict = "contextual" if sig.contextual_cbd else "not contextual"
    print(f"s_odd = {sig.s_odd:.4f} vs 2 + delta = {2 + sig.delta_total:.4f} -> {verdict}")
    if abs(s) > TSIRELSON_BOUND:
        bound = "above the quantum bound 2*sqrt(2)"
    elif abs(s) > 2:
        bound = "violates the classical bound |S| <= 2, within the quantum bound"
    else:
        bound = "within the classical bound |S| <= 2"
    if summary.ci is not None and abs(s) > 2:
        lo, hi = summary.ci
        abs_low = 0.0 if lo <= 0 <= hi else min(abs(lo), abs(hi))
        crossed = TSIRELSON_BOUND if abs(s) > TSIRELSON_BOUND else 2.0
        if abs_low <= crossed:
            bound += f" (point estimate only; the CI reaches |S| = {crossed:.4f})"
    print(f"bounds: |S| {bound}")
    if sig.contextual_cbd is False and abs(s) > 2 and sig.delta_total > 0:
        print("note: the excess over 2 is accounted for by inconsistent connectedness (signaling)")
    if out_dir is not None:
        print(f"output: {out_dir}")


# --- subcommands --------------------------------------------------------------

def cmd_run(args) -> int:
    data, base = load_config(args.config)
    config = experiment_config(data, base, args, "results/run")
    pool_items = data.get("pool")
    if args.pool:
        try:
            pool_data = yaml.safe_load(Path(args.pool).read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read pool file {args.pool}: {exc}") from None
        pool_items = pool_data.get("pool") if isinstance(pool_data, dict) else pool_data
        if not isinstance(pool_items, list):
            raise ConfigError(f"{args.pool}: expected a list of model entries")
    if not pool_items:
        raise ConfigError("no model pool configured (config 'pool' or --pool)")
    try:
        pool = ModelPool(tuple(_model_entry(e) for e in pool_items))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    pool.check_credentials()
    backend = classifier_backend(args.classifier, data)
    section = data.get("agents") or {}
    factory_kwargs = {k: section[k] for k in ("instruction", "pair_models", "reinterpret_model") if k in section}
    try:
        factory = RemoteAgents(pool, _client(data, section.get("temperature", 1.0)), **factory_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    summary = run_experiment(config, factory, backend, resume=args.resume, overwrite=args.force)
    print_summary(summary, config.output_dir)
    return EXIT_OK


def parse_angles(text: str) -> tuple[float, ...]:
    if text == "tsirelson":
        return TSIRELSON_ANGLES
    try:
        angles = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--angles expects 'tsirelson' or four comma-separated radians, got {text!r}") from None
    if len(angles) != 4:
        raise UsageError("--angles needs exactly four values (A, A', B, B')")
    return angles


def parse_strategy(text: str, seed: int) -> np.ndarray:
    """Strategy weights from a name, a sign pattern like ``+-++``, or 16 weights."""
    if text in ag.NAMED_STRATEGIES:
        w = np.zeros(16)
        w[ag.strategy_index(ag.NAMED_STRATEGIES[text])] = 1
        return w
    if text == "uniform":
        return np.ones(16)
    if text == "random":
        return np.random.default_rng([seed, 2**31 - 2]).dirichlet(np.ones(16))
    if len(text) == 4 and set(text) <= {"+", "-"}:
        w = np.zeros(16)
        w[ag.strategy_index([1 if c == "+" else -1 for c in text])] = 1
        return w
    try:
        w = np.array([float(x) for x in text.split(",")])
    except ValueError:
        w = None
    if w is None or w.shape != (16,):
        raise UsageError(
            "--strategy expects all-plus, all-minus, uniform, random, a sign pattern such as '+-++', "
            "or 16 comma-separated weights"
        )
    return w


def cmd_simulate(args) -> int:
    data, base = load_config(args.config)
    config = experiment_config(data, base, args, f"results/simulate-{args.agent}")
    if args.agent == "lhv":
        try:
            factory = ag.lhv_agent(parse_strategy(args.strategy, config.seed))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    elif args.agent == "quantum":
        factory = ag.quantum_agent(parse_angles(args.angles))
    elif args.agent == "prbox":
        factory = ag.pr_box_agent()
    elif args.agent == "signaling":
        try:
            flips = frozenset(Setting(s) for s in args.flip.split(","))
            factory = ag.signaling_agent(ag.FlipRule(flips))
        except ValueError as exc:
            raise UsageError(f"bad --flip: {exc}") from None
    else:  # argparse restricts choices
        raise UsageError(f"unknown agent kind {args.agent!r}")
    backend = classifier_backend(args.classifier, data)
    summary = run_experiment(config, factory, backend, resume=args.resume, overwrite=args.force)
    print_summary(summary, config.output_dir, label=f"simulated agent: {args.agent}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    records_path = Path(args.records)
    if records_path.is_dir():
        records_path = records_path / "records.jsonl"
    if not records_path.exists():
        raise ConfigError(f"{records_path} does not exist")
    header, records = read_records(records_path)
    if header is None:
        raise RecordFileError(f"{records_path}: missing header record")
    cfg = header["config"]
    reclass = None
    if args.classifier is not None and args.classifier != header["classifier"]["name"]:
        data, _ = load_config(args.config)
        reclass = classifier_backend(args.classifier, data)
    summary = summarize(
        records,
        seed=args.seed if args.seed is not None else cfg["seed"],
        resamples=cfg["bootstrap_resamples"],
        level=cfg["ci_level"],
        reclassify_with=reclass,
    )
    out = Path(args.out) if args.out else records_path.parent / "analysis"
    write_outputs(summary, out)
    print_summary(summary, out, label=f"analysis of {records_path}")
    return EXIT_OK


def cmd_degeneracy(args) -> int:
    try:
        rates = [float(x) for x in args.error_rates.split(",")]
        template = DegeneracyModel(
            n_concepts=1,
            bits_per_concept=args.c_concept,
            bits_per_relationship=args.c_relationship,
            include_factorial=args.factorial,
        )
        table = sweep_curves(template, range(args.n_min, args.n_max + 1), rates)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.write(out)
    print(f"degeneracy sweep: N = {args.n_min}..{args.n_max}, c_concept = {args.c_concept:g}, "
          f"c_relationship = {args.c_relationship:g}, factorial = {args.factorial}")
    head = f"{'N':>4} {'K':>8} " + " ".join(f"{h:>12}" for h in table.header()[2:])
    print(head)
    for row in table.rows():
        print(f"{row[0]:>4} {row[1]:>8g} " + " ".join(f"{p:>12.4g}" for p in row[2:]))
    print(f"table: {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for i, path in enumerate(args.summaries, start=1):
        p = Path(path)
        if p.is_dir():
            p = p / "summary.json"
        try:
            s = json.loads(p.read_text(encoding="utf-8"))
            ci = s["ci"]
            rows.append((str(i), s["n_complete"], s["s"], ci, s["signaling"]["delta_total"],
                         s["signaling"]["contextual_cbd"], str(path)))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise RecordFileError(f"{p}: cannot read summary ({exc})") from None
    print(f"{'Experiment':<11}{'N Trials':>9}{'S':>9}{'|S|':>8}  {'95% CI':<19}{'Delta':>8}  {'CbD':<5} source")
    for exp, n, s, ci, delta, cbd, src in rows:
        ci_txt = "n/a" if ci is None else f"[{ci[0]:+.2f}, {ci[1]:+.2f}]"
        print(f"{exp:<11}{n:>9}{s:>+9.3f}{abs(s):>8.3f}  {ci_txt:<19}{delta:>8.3f}  {'yes' if cbd else 'no':<5} {src}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("experiment\tn_trials\ts\tabs_s\tci_low\tci_high\tdelta_total\tcontextual_cbd\tsource\n")
            for exp, n, s, ci, delta, cbd, src in rows:
                lo, hi = (math.nan, math.nan) if ci is None else ci
                fh.write(f"{exp}\t{n}\t{s!r}\t{abs(s)!r}\t{lo!r}\t{hi!r}\t{delta!r}\t{str(cbd).lower()}\t{src}\n")
    return EXIT_OK


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semantic-bell", description="Semantic CHSH experiments for interpretive agents.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials=True):
        p.add_argument("--seed", type=int, default=None, help="random seed")
        p.add_argument("--config", default=None, help="YAML config file")
        if trials:
            p.add_argument("--trials", type=int, default=None, help="number of trials")
            p.add_argument("--out", default=None, help="output directory")
            p.add_argument("--resume", action="store_true", help="continue an interrupted run in --out")
            p.add_argument("--force", action="store_true", help="overwrite an existing record file")
            p.add_argument("--concurrency", type=int, default=None, help="trials in flight at once")
        p.add_argument("--classifier", choices=("keyword", "remote"), default=None)

    p = sub.add_parser("run", help="run an experiment against live model endpoints")
    common(p)
    p.add_argument("--pool", default=None, help="YAML file listing model pool entries")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="run the pipeline with a simulated agent")
    p.add_argument("agent", choices=("lhv", "quantum", "prbox", "signaling"))
    common(p)
    p.add_argument("--angles", default="tsirelson", help="'tsirelson' or four radians A,A',B,B'")
    p.add_argument("--strategy", default="uniform", help="LHV strategy mixture")
    p.add_argument("--flip", default="B'", help="Bob settings flipped by Alice's setting (signaling)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="recompute a summary from a record file")
    p.add_argument("records", help="records.jsonl or its directory")
    common(p, trials=False)
    p.add_argument("--out", default=None, help="output directory (default: <records dir>/analysis)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("degeneracy", help="tabulate perfect-interpretation probability against N")
    p.add_argument("--seed", type=int, default=None, help="accepted for uniformity; the sweep is deterministic")
    p.add_argument("--c-concept", type=float, default=5.0)
    p.add_argument("--c-relationship", type=float, default=1.0)
    p.add_argument("--n-min", type=int, default=1)
    p.add_argument("--n-max", type=int, default=20)
    p.add_argument("--error-rates", default=",".join(f"{e:g}" for e in DEFAULT_ERROR_RATES))
    p.add_argument("--factorial", action="store_true", help="apply the 1/N! prefactor")
    p.add_argument("--out", default="results/degeneracy.csv")
    p.set_defaults(func=cmd_degeneracy)

    p = sub.add_parser("report", help="tabulate several summaries")
    p.add_argument("summaries", nargs="+", help="summary.json files or run directories")
    p.add_argument("--seed", type=int, default=None, help="accepted for uniformity")
    p.add_argument("--out", default=None, help="optional TSV copy of the table")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConfigError, CredentialError, UsageError, RecordFileError) as exc:
        msg = exc.args[0] if isinstance(exc, CredentialError) else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoCompleteTrials, ag.AgentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
