"""``dlt-recovery`` command line.

Exit codes: 0 success, 1 input error, 2 runtime error, 64 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigurationError, RecoveryError, ScenarioError
from .utfm import (
    DEFAULT_ALPHABET,
    PseudocountConfig,
    TrainingCorpus,
    baum_welch_train,
    standard_model,
    uniform_init,
    validate,
)
from . import utfm

log = logging.getLogger("dlt_recovery")

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2, 64
LOG_LEVELS = {"error": logging.ERROR, "warning": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}
REPORT_COLUMNS = (
    "consensus_position", "famous_witness", "flight_id", "role", "tactical_delay_min",
    "turnaround_min", "block_time_min", "strategic_delay_min", "stake", "consensus_timestamp_ms",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_atomic(outputs: dict[str, str]) -> None:
    """Write every output or none: all contents are rendered before this is called."""
    written = []
    try:
        for path, text in outputs.items():
            tmp = Path(path).with_name(Path(path).name + ".tmp")
            tmp.write_text(text, encoding="utf-8")
            written.append((tmp, Path(path)))
    except OSError:
        for tmp, _ in written:
            tmp.unlink(missing_ok=True)
        raise
    for tmp, final in written:
        tmp.replace(final)


def report_csv(plan) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for e in plan:
        i = e.impact
        w.writerow([e.consensus_position, "yes" if e.famous_witness else "no", e.flight_id,
                    e.role, i.tactical_delay_min, i.turnaround_min, i.block_time_min,
                    i.strategic_delay_min, e.stake, e.consensus_timestamp_ms])
    return buf.getvalue()


def cmd_run(args) -> int:
    from .gossip import run
    from .scenario import load_scenario

    try:
        scenario = load_scenario(args.scenario)
        config = scenario.config
        if args.seed is not None:
            config = config.replace(seed=args.seed)
    except (ScenarioError, ConfigurationError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    try:
        transcript = io.StringIO() if args.transcript else None
        result = run(config, transcript)
    except ConfigurationError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except (RecoveryError, ArithmeticError) as exc:
        log.error("simulation failed: %s", exc)
        return EXIT_RUNTIME
    r = result.report
    log.info("%d events, %d/%d transactions ordered, first consensus at %s ms",
             r.events_created, r.transactions_ordered, r.transactions_queued,
             r.time_to_first_consensus_ms)
    outputs = {args.report: report_csv(result.recovery_plan())}
    if args.export_graph:
        outputs[args.export_graph] = result.report_store.export_graph()
    if transcript is not None:
        outputs[args.transcript] = transcript.getvalue()
    if args.summary:
        outputs[args.summary] = r.to_json()
    try:
        _write_atomic(outputs)
        if args.figure:
            from .plotting import plot_hashgraph
            from .scenario import ROLES
            plot_hashgraph(result.report_store, args.figure, dict(enumerate(ROLES)))
    except OSError as exc:
        log.error("cannot write output: %s", exc)
        return EXIT_INPUT
    return EXIT_OK


def cmd_scaling(args) -> int:
    from .gossip import scaling_experiment
    from .scenario import load_scenario

    if args.min_roles > args.max_roles:
        raise UsageError("--min-roles must not exceed --max-roles")
    if args.min_roles < 2:
        raise UsageError("--min-roles must be at least 2")
    try:
        config = load_scenario(args.scenario).config
    except ScenarioError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    if len(config.agents) < args.max_roles:
        log.error("scenario defines %d roles, fewer than --max-roles %d",
                  len(config.agents), args.max_roles)
        return EXIT_INPUT
    seeds = [config.seed if args.seed is None else args.seed]
    seeds += [seeds[0] + k for k in range(1, args.seeds)]
    series = {}
    try:
        for s in seeds:
            series[s] = scaling_experiment(config.replace(seed=s),
                                           range(args.min_roles, args.max_roles + 1))
    except ConfigurationError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except (RecoveryError, ArithmeticError) as exc:
        log.error("simulation failed: %s", exc)
        return EXIT_RUNTIME
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "n_roles", "time_to_first_consensus_ms"])
    for s, points in series.items():
        for p in points:
            w.writerow([s, p.n_roles,
                        "" if p.time_to_first_consensus_ms is None else p.time_to_first_consensus_ms])
    try:
        _write_atomic({args.out: buf.getvalue()})
        if args.figure:
            from .plotting import plot_scaling
            plot_scaling(series, args.figure)
    except OSError as exc:
        log.error("cannot write output: %s", exc)
        return EXIT_INPUT
    return EXIT_OK


def read_corpus(path) -> TrainingCorpus:
    seqs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            seqs.append(tuple(line.split()))
    if not seqs:
        raise ScenarioError(f"corpus {path} holds no sequences")
    return TrainingCorpus(tuple(seqs))


def read_priors(path) -> PseudocountConfig:
    """``[pseudocounts]`` with tactical/operational/strategic, optional ``[features]``."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(Path(path).read_text(encoding="utf-8"))
        counts = {}
        for key, v in (cp["pseudocounts"].items() if cp.has_section("pseudocounts") else []):
            if key not in ("tactical", "operational", "strategic"):
                raise ScenarioError(f"{path}: unknown key {key!r} in [pseudocounts]")
            counts[key] = int(v)
        features = {k: int(v) for k, v in
                    (cp["features"].items() if cp.has_section("features") else [])}
        for sec in cp.sections():
            if sec not in ("pseudocounts", "features"):
                raise ScenarioError(f"{path}: unknown section [{sec}]")
    except configparser.Error as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    except ValueError as exc:
        raise ScenarioError(f"{path}: counts must be decimal integers ({exc})") from None
    return PseudocountConfig(**counts, features=features)


def cmd_train(args) -> int:
    if args.tol <= 0 or args.max_iter < 1:
        raise UsageError("--tol must be positive and --max-iter at least 1")
    try:
        corpus = read_corpus(args.corpus)
        priors = read_priors(args.priors) if args.priors else PseudocountConfig()
        if args.model:
            model = utfm.load(args.model)
        else:
            if args.alphabet:
                alphabet = tuple(a.strip() for a in args.alphabet.split(",") if a.strip())
            elif corpus.symbols() <= set(DEFAULT_ALPHABET):
                alphabet = DEFAULT_ALPHABET
            else:
                alphabet = tuple(sorted(corpus.symbols()))
            model = uniform_init(standard_model(alphabet), args.seed)
    except (OSError, RecoveryError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    unseen = [a for a in model.alphabet if a not in corpus.symbols()]
    if priors.is_zero and unseen:
        log.warning("symbols %s never occur in the corpus and the priors are all zero: "
                    "their emission probabilities will be trained to zero, so any trace "
                    "using them gets probability zero", ", ".join(unseen))
    try:
        result = baum_welch_train(model, corpus, priors, tol=args.tol, max_iter=args.max_iter)
    except RecoveryError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except ArithmeticError as exc:
        log.error("training failed: %s", exc)
        return EXIT_RUNTIME
    lines = ["iteration log2_likelihood objective"]
    lines += [f"{r.iteration} {r.log_likelihood!r} {r.objective!r}" for r in result.log]
    log_path = args.log or args.out + ".log"
    try:
        _write_atomic({args.out: utfm.dumps(result.model), log_path: "\n".join(lines) + "\n"})
    except OSError as exc:
        log.error("cannot write output: %s", exc)
        return EXIT_INPUT
    log.info("%d iterations, converged=%s", len(result.log), result.converged)
    return EXIT_OK


def cmd_inspect(args) -> int:
    try:
        model = utfm.load(args.model)
    except (OSError, RecoveryError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    report = validate(model)
    out = [f"states {len(model.states)}", f"symbols {len(model.alphabet)}",
           "accept " + " ".join(s for s in model.states if s in model.accept),
           f"valid {'yes' if report.ok else 'no'}"]
    out += [f"violation {v}" for v in report.violations]
    for x in args.decode or ():
        from .utfm import viterbi_decode
        from .stake import compute_stake
        symbols = x.split(",")
        try:
            tr = viterbi_decode(model, symbols, require_accept=True)
            rec = compute_stake("-", model, symbols)
            out.append(f"decode {x} path {' '.join(tr.states)} log2p {tr.log2_probability!r} "
                       f"ice {rec.ice!r} stake {rec.stake}")
        except RecoveryError as exc:
            out.append(f"decode {x} error {exc}")
    text = "\n".join(out) + "\n"
    if args.out:
        try:
            _write_atomic({args.out: text})
        except OSError as exc:
            log.error("cannot write output: %s", exc)
            return EXIT_INPUT
    else:
        sys.stdout.write(text)
    return EXIT_OK if report.ok else EXIT_INPUT


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dlt-recovery",
                description="Disruption recovery planning by stake-weighted hashgraph consensus.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="simulate a scenario and write the recovery plan")
    r.add_argument("--scenario", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--report", required=True, help="CSV recovery plan")
    r.add_argument("--export-graph", help="EVENT-per-line DAG export")
    r.add_argument("--transcript", help="SYNC-per-line gossip transcript")
    r.add_argument("--summary", help="JSON run summary")
    r.add_argument("--figure", help="render the first events of the DAG to this image")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("scaling", help="time to first consensus against membership size")
    s.add_argument("--scenario", required=True)
    s.add_argument("--min-roles", type=int, default=4)
    s.add_argument("--max-roles", type=int, default=11)
    s.add_argument("--seed", type=int)
    s.add_argument("--seeds", type=int, default=1, help="consecutive seeds to run")
    s.add_argument("--out", required=True)
    s.add_argument("--figure")
    s.set_defaults(func=cmd_scaling)

    t = sub.add_parser("train", help="Baum-Welch training of a UTFM")
    t.add_argument("--corpus", required=True, help="one whitespace-separated sequence per line")
    t.add_argument("--priors", help="pseudocount file")
    t.add_argument("--tol", type=float, default=1e-6)
    t.add_argument("--max-iter", type=int, default=100)
    t.add_argument("--out", required=True)
    t.add_argument("--log", help="iteration log path (default OUT.log)")
    t.add_argument("--model", help="initial model; default is the standard topology")
    t.add_argument("--alphabet", help="comma-separated symbols for the default model")
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("inspect", help="validate a model and decode sequences")
    i.add_argument("--model", required=True)
    i.add_argument("--decode", action="append", help="comma-separated symbols")
    i.add_argument("--out")
    i.set_defaults(func=cmd_inspect)
    return p


def _configure_logging() -> None:
    level = os.environ.get("DLT_RECOVERY_LOG", "warning").lower()
    if level not in LOG_LEVELS:
        raise UsageError(f"DLT_RECOVERY_LOG must be one of {', '.join(LOG_LEVELS)}")
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(LOG_LEVELS[level])
    log.propagate = False


def main(argv=None) -> int:
    try:
        _configure_logging()
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"dlt-recovery: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
