"""Command-line front end wiring the pipeline end-to-end for batch use.

One binary, subcommand style.  All configuration arrives through flags and
files; the only environment variable honored is TRACEGUARD_OUT_ROOT, which
reroots relative --out paths.  Failures print a single machine-readable
JSON line on stderr and exit 2 (config), 3 (data), or 4 (internal).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .defaults import DEFAULT_WINDOW_US
from .enforce import emit_cil_text
from .errors import ConfigError, DataError, TraceGuardError, UnknownCommand
from .evalkit import tau_sweep
from .features import (
    FEATURE36_COLUMNS,
    featurize_corpus,
    read_matrix_csv,
    write_matrix_csv,
    write_schema_json,
)
from .ingest import SymbolKeys, iter_session_dirs, load_corpus, load_session, load_symbol_keys
from .policy import load_policy
from .rules import DEFAULT_RULE_DEPTH, SCOPE_FULL36, SCOPE_TOP2, extract_rules, ruleset_to_json
from .selection import selection_to_json, track_a, track_b
from .simgen import corpus as generate_corpus
from .simgen import default_manifest, load_manifest
from .trees import model_from_json
from .workflow import (
    default_keys,
    default_policy,
    detect_corpus,
    evaluate_run,
    load_models,
    save_models,
    train_pipeline,
)

OUT_ROOT_VAR = "TRACEGUARD_OUT_ROOT"

_COMMANDS = ("ingest", "featurize", "select", "train", "extract-rules",
             "detect", "emit-cil", "simulate", "evaluate", "sweep")


class _Parser(argparse.ArgumentParser):
    # usage mistakes are config errors, not SystemExit tracebacks
    def error(self, message: str) -> None:
        raise ConfigError(message)


def _out_path(value: str) -> Path:
    p = Path(value)
    root = os.environ.get(OUT_ROOT_VAR)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _require_file(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} {p} does not exist")
    return p


def _load_keys(args) -> SymbolKeys:
    if getattr(args, "keys", None):
        return load_symbol_keys(_require_file(args.keys, "key file"))
    return default_keys()


def _load_policy_arg(args):
    if getattr(args, "policy", None):
        return load_policy(_require_file(args.policy, "policy file"))
    return default_policy()


def _emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommand bodies
# ---------------------------------------------------------------------------

def _cmd_simulate(args) -> int:
    manifest = (load_manifest(_require_file(args.manifest, "manifest"))
                if args.manifest else default_manifest())
    if args.seed is not None:
        manifest = replace(manifest, seed=args.seed)
    out = _out_path(args.out)
    written = generate_corpus(manifest, out)
    _emit({"command": "simulate", "out": str(out), "sessions": len(written)})
    return 0


def _cmd_ingest(args) -> int:
    corpus_dir = _require_file(args.corpus, "corpus directory")
    rows = []
    total_events = 0
    for d in iter_session_dirs(corpus_dir):
        s = load_session(d, strict=args.strict)
        total_events += len(s.events)
        rows.append({
            "session_id": s.session_id,
            "label": s.label,
            "kind": s.kind,
            "events": len(s.events),
            "samples": len(s.samples),
            "truncated": s.truncated,
            "parse": s.stats.as_dict() if s.stats else {},
        })
    summary = {"command": "ingest", "sessions": len(rows),
               "total_events": total_events, "per_session": rows}
    if args.out:
        out = _out_path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
        _emit({"command": "ingest", "out": str(out), "sessions": len(rows)})
    else:
        _emit(summary)
    return 0


def _cmd_featurize(args) -> int:
    corpus_dir = _require_file(args.corpus, "corpus directory")
    keys = _load_keys(args)
    window_us = args.window_ms * 1000
    sessions = load_corpus(corpus_dir, strict=args.strict)
    dm = featurize_corpus(sessions, keys, window_us)
    out = _out_path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(out, dm)
    write_schema_json(out.parent / "schema.json", dm.schema, FEATURE36_COLUMNS)
    _emit({"command": "featurize", "out": str(out),
           "rows": int(dm.X.shape[0]), "columns": int(dm.X.shape[1])})
    return 0


def _cmd_select(args) -> int:
    dm = read_matrix_csv(_require_file(args.matrix, "matrix file"))
    y = dm.y()
    sids = dm.session_ids
    if args.track.upper() == "A":
        result, _ = track_a(dm.X, y, dm.schema, session_ids=sids,
                            folds=args.folds, seed=args.seed,
                            n_trees=args.n_trees)
    elif args.track.upper() == "B":
        result = track_b(dm.X, y, dm.schema, session_ids=sids,
                         folds=args.folds, seed=args.seed,
                         n_trees=args.n_trees)
    else:
        raise ConfigError(f"track must be A or B, not {args.track!r}")
    out = _out_path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(selection_to_json(result) + "\n")
    _emit({"command": "select", "track": result.track, "out": str(out),
           "chosen_k": result.chosen_k})
    return 0


def _cmd_train(args) -> int:
    dm = read_matrix_csv(_require_file(args.matrix, "matrix file"))
    result = train_pipeline(dm, seed=args.seed, tau=args.tau,
                            n_forest_trees=args.n_trees,
                            rule_depth=args.rule_depth)
    out = _out_path(args.out)
    save_models(out, result)
    _emit({"command": "train", "out": str(out), "top2": list(result.top2),
           "splits": {k: v["rows"] for k, v in result.metrics["splits"].items()}})
    return 0


def _cmd_extract_rules(args) -> int:
    models_dir = _require_file(args.models, "models directory")
    out = _out_path(args.out) if args.out else Path(models_dir)
    out.mkdir(parents=True, exist_ok=True)
    schema = json.loads((Path(models_dir) / "schema.json").read_text())
    deployed = tuple(schema["deployed"])
    ranking = json.loads((Path(models_dir) / "ranking.json").read_text())
    top2 = tuple(item["column"] for item in ranking["items"][:2])
    written = {}
    cart_full = model_from_json(
        (Path(models_dir) / "cart_full36.json").read_text(), deployed)
    rs_full = extract_rules(cart_full, SCOPE_FULL36)
    (out / "rules_full36.json").write_text(ruleset_to_json(rs_full) + "\n")
    written[SCOPE_FULL36] = len(rs_full)
    cart_top2 = model_from_json(
        (Path(models_dir) / "cart_top2.json").read_text(), top2)
    rs_top2 = extract_rules(cart_top2, SCOPE_TOP2)
    (out / "rules_top2.json").write_text(ruleset_to_json(rs_top2) + "\n")
    written[SCOPE_TOP2] = len(rs_top2)
    _emit({"command": "extract-rules", "out": str(out), "rules": written})
    return 0


def _cmd_detect(args) -> int:
    corpus_dir = _require_file(args.corpus, "corpus directory")
    models = load_models(_require_file(args.models, "models directory"))
    policy = _load_policy_arg(args)
    keys = _load_keys(args)
    out = _out_path(args.out)
    res = detect_corpus(corpus_dir, models, policy, out, keys=keys,
                        window_us=args.window_ms * 1000, tau=args.tau,
                        strict=args.strict)
    _emit({"command": "detect", "out": str(out),
           "sessions": res["sessions"], "windows": res["windows"]})
    return 0


def _cmd_emit_cil(args) -> int:
    policy = _load_policy_arg(args)
    text = emit_cil_text(policy)
    if args.out:
        out = _out_path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        _emit({"command": "emit-cil", "out": str(out), "bytes": len(text)})
    else:
        sys.stdout.write(text)
    return 0


def _cmd_evaluate(args) -> int:
    run_dir = _require_file(args.run, "run directory")
    out = _out_path(args.out) if args.out else None
    written = evaluate_run(run_dir, out)
    _emit({"command": "evaluate",
           "tables": sorted(str(p) for p in written.values())})
    return 0


def _cmd_sweep(args) -> int:
    run_dir = _require_file(args.run, "run directory")
    dec = Path(run_dir) / "decisions.csv"
    if not dec.exists():
        raise DataError(f"{run_dir}: decisions.csv missing")
    with open(dec, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"{run_dir}: decisions.csv is empty")
    try:
        taus = [float(t) for t in args.taus.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --taus value: {exc}") from exc
    if not taus:
        raise ConfigError("--taus lists no thresholds")
    scores = np.array([float(r["risk_model"]) for r in rows])
    y = np.array([1 if r["label"] == "encrypted" else 0 for r in rows])
    sweep = tau_sweep(scores, y, taus)
    header = ["tau", "precision", "recall", "macro_f1", "utility",
              "tp", "fp", "tn", "fn"]
    lines = [",".join(header)]
    for s in sweep:
        lines.append(",".join([
            f"{s['tau']:.2f}", f"{s['precision']:.4f}", f"{s['recall']:.4f}",
            f"{s['macro_f1']:.4f}", f"{s['utility']:.1f}",
            str(s["tp"]), str(s["fp"]), str(s["tn"]), str(s["fn"])]))
    text = "\n".join(lines) + "\n"
    if args.out:
        out = _out_path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        _emit({"command": "sweep", "out": str(out), "rows": len(sweep)})
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="traceguard",
                     description="trace-driven encryption-behavior detection")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic corpus")
    p.add_argument("--manifest", help="workload manifest (YAML); built-in default")
    p.add_argument("--seed", type=int, default=None, help="override manifest seed")
    p.add_argument("--out", required=True, help="corpus output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("ingest", help="parse and validate a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out", help="summary JSON path (stdout if omitted)")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("featurize", help="corpus to raw design matrix CSV")
    p.add_argument("--corpus", required=True)
    p.add_argument("--keys", help="symbol key file; built-in default")
    p.add_argument("--window-ms", type=int, default=DEFAULT_WINDOW_US // 1000)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out", required=True, help="matrix CSV path")
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("select", help="feature selection over a matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--track", required=True, choices=["A", "B", "a", "b"])
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--n-trees", type=int, default=400)
    p.add_argument("--out", required=True, help="selection JSON path")
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("train", help="train detectors from a raw matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--tau", type=float, default=0.50)
    p.add_argument("--n-trees", type=int, default=400)
    p.add_argument("--rule-depth", type=int, default=DEFAULT_RULE_DEPTH)
    p.add_argument("--out", required=True, help="models output directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("extract-rules", help="re-derive rule tables from trees")
    p.add_argument("--models", required=True)
    p.add_argument("--out", help="output directory (models dir if omitted)")
    p.set_defaults(func=_cmd_extract_rules)

    p = sub.add_parser("detect", help="score a corpus into a run directory")
    p.add_argument("--corpus", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--policy", help="policy JSON; built-in default")
    p.add_argument("--keys", help="symbol key file; built-in default")
    p.add_argument("--tau", type=float, default=None, help="override policy tau")
    p.add_argument("--window-ms", type=int, default=DEFAULT_WINDOW_US // 1000)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out", required=True, help="run output directory")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("emit-cil", help="render the enforcement policy module")
    p.add_argument("--policy", help="policy JSON; built-in default")
    p.add_argument("--out", help="output file (stdout if omitted)")
    p.set_defaults(func=_cmd_emit_cil)

    p = sub.add_parser("evaluate", help="report tables from a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--out", help="report output directory (run dir if omitted)")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="threshold sweep over a run's scores")
    p.add_argument("--run", required=True)
    p.add_argument("--taus", default="0.3,0.5,0.7")
    p.add_argument("--out", help="CSV output file (stdout if omitted)")
    p.set_defaults(func=_cmd_sweep)

    return parser


def run_subcommand(argv: list[str]) -> int:
    if argv and not argv[0].startswith("-") and argv[0] not in _COMMANDS:
        raise UnknownCommand(f"unknown command {argv[0]!r}")
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        raise UnknownCommand("a command is required; see --help")
    return args.func(args)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return run_subcommand(argv)
    except TraceGuardError as exc:
        sys.stderr.write(json.dumps(
            {"error": exc.code, "message": str(exc)}) + "\n")
        if isinstance(exc, ConfigError):
            return 2
        if isinstance(exc, DataError):
            return 3
        return 4


if __name__ == "__main__":
    sys.exit(main())
