"""End-to-end pipeline: corpora in, model artifacts and run directories out.

Training walks the full chain once: raw design matrix, cleaning/balancing/
splitting, projection onto the deployed 36-column view, bagged-forest
permutation importance, depth-capped rule trees on the top-2 and full
column sets, and the gradient-boosted window scorer.  Every artifact is
JSON or CSV so a detector reassembles from disk without retraining.

Detection streams one session at a time: anchored windows are scored by
the rule table and the boosted model, the per-window verdicts are composed
with an OR, the enforcement boolean pair is driven from the verdicts, and
one access simulation per window records what the gated policy module
would have done.  Latency columns carry a simulated decision-path value
(time from the window's first write evidence to the layer's verdict,
rule layer first, model one microsecond later) rather than wall clock,
so a finished run directory is byte-reproducible.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .defaults import DEFAULT_EXCLUDED, DEFAULT_POLICY, DEFAULT_SYMBOLS, DEFAULT_WINDOW_US
from .enforce import BooleanState, CilModule, emit_cil, simulate_access, write_audit
from .errors import ModelFormatError
from .evalkit import DECISION_FIELDS, RESOURCE_SUMMARY_FIELDS, classification_metrics, report, utility
from .features import (
    FEATURE36_COLUMNS,
    DesignMatrix,
    PreparedDataset,
    ScalerState,
    apply_minmax,
    extract_raw,
    featurize_corpus,
    filter_housekeeping,
    pid_anchored_filter,
    prepare_dataset,
    project_columns,
    project36,
    raw_schema,
    schema_hash,
    window_session,
    write_matrix_csv,
    write_schema_json,
)
from .ingest import Session, SymbolKeys, iter_session_dirs, load_corpus, load_session
from .policy import (
    SOURCE_MODEL,
    SOURCE_RULE,
    Context,
    RiskPolicy,
    policy_from_obj,
    two_layer,
    whitelisted,
)
from .policy import decide as policy_decide
from .rules import DEFAULT_RULE_DEPTH, SCOPE_FULL36, SCOPE_TOP2, RuleSet, evaluate_rules, extract_rules, ruleset_from_json, ruleset_to_json
from .selection import ImportanceRanking, permutation_importance
from .trees import CartModel, ForestModel, GBDTModel, model_from_json, model_to_json, train_cart, train_forest, train_gbdt

# simulated decision-path offsets: the rule table answers at the window
# close, the model one tick later, the access check after both
RULE_TICK_US = 0.0
MODEL_TICK_US = 1.0
AUDIT_TICK_US = 2.0

TRANSITION_FIELDS = ("ts_us", "name", "old", "new", "verdict_id")


def default_keys() -> SymbolKeys:
    return SymbolKeys(DEFAULT_SYMBOLS, DEFAULT_EXCLUDED)


def default_policy() -> RiskPolicy:
    return policy_from_obj(DEFAULT_POLICY)


def featurize_dir(corpus_dir: str | Path, keys: SymbolKeys | None = None,
                  window_us: int = DEFAULT_WINDOW_US,
                  strict: bool = False) -> DesignMatrix:
    keys = keys or default_keys()
    sessions = load_corpus(corpus_dir, strict=strict)
    return featurize_corpus(sessions, keys, window_us)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    prepared: PreparedDataset
    scaler36: ScalerState
    forest: ForestModel
    ranking: ImportanceRanking
    top2: tuple[str, str]
    cart_top2: CartModel
    cart_full: CartModel
    rules_top2: RuleSet
    rules_full: RuleSet
    gbdt: GBDTModel
    metrics: dict


def _subselect_scaler(scaler: ScalerState, columns) -> ScalerState:
    pos = {c: j for j, c in enumerate(scaler.columns)}
    idx = [pos[c] for c in columns]
    return ScalerState(tuple(columns), scaler.mins[idx].copy(),
                       scaler.maxs[idx].copy())


def _metrics_obj(m: dict) -> dict:
    c = m["counts"]
    return {
        "precision": m["precision"],
        "recall": m["recall"],
        "macro_f1": m["macro_f1"],
        "roc_auc": m["roc_auc"],
        "utility": utility(c),
        "tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn,
    }


def train_pipeline(dm_raw: DesignMatrix, seed: int = 42, tau: float = 0.50,
                   n_forest_trees: int = 400,
                   rule_depth: int = DEFAULT_RULE_DEPTH,
                   importance_reps: int = 20) -> TrainResult:
    """Raw matrix -> prepared splits -> deployed-view models and rules."""
    prepared = prepare_dataset(dm_raw, seed=seed)
    splits36 = {name: project36(part) for name, part in prepared.splits.items()}
    scaler36 = _subselect_scaler(prepared.scaler, FEATURE36_COLUMNS)

    train36 = splits36["train"]
    ytr = train36.y()
    forest = train_forest(train36.X, ytr, FEATURE36_COLUMNS,
                          n_trees=n_forest_trees, seed=seed)
    ranking = permutation_importance(forest, train36.X, ytr,
                                     n_rep=importance_reps, seed=seed)
    top2 = tuple(ranking.columns()[:2])

    cart_top2 = train_cart(project_columns(train36, top2).X, ytr, top2,
                           depth_cap=rule_depth, seed=seed)
    cart_full = train_cart(train36.X, ytr, FEATURE36_COLUMNS,
                           depth_cap=rule_depth, seed=seed)
    rules_top2 = extract_rules(cart_top2, SCOPE_TOP2)
    rules_full = extract_rules(cart_full, SCOPE_FULL36)
    gbdt = train_gbdt(train36.X, ytr, FEATURE36_COLUMNS, seed=seed)

    metrics: dict = {
        "seed": seed,
        "tau": tau,
        "rule_depth": rule_depth,
        "top2": list(top2),
        "splits": {},
    }
    for name, part in splits36.items():
        y = part.y()
        entry = {"rows": int(part.X.shape[0])}
        if part.X.shape[0]:
            entry["model"] = _metrics_obj(
                classification_metrics(gbdt.predict_proba(part.X), y, tau))
            entry["rule"] = _metrics_obj(
                classification_metrics(cart_full.predict_proba(part.X), y, tau))
            entry["rule_top2"] = _metrics_obj(classification_metrics(
                cart_top2.predict_proba(project_columns(part, top2).X), y, tau))
        metrics["splits"][name] = entry
    return TrainResult(prepared, scaler36, forest, ranking, top2, cart_top2,
                       cart_full, rules_top2, rules_full, gbdt, metrics)


# ---------------------------------------------------------------------------
# model directory layout
# ---------------------------------------------------------------------------

def save_models(models_dir: str | Path, result: TrainResult) -> dict:
    d = Path(models_dir)
    d.mkdir(parents=True, exist_ok=True)
    write_schema_json(d / "schema.json", result.prepared.schema,
                      FEATURE36_COLUMNS)
    (d / "scaler_raw.json").write_text(result.prepared.scaler.to_json() + "\n")
    (d / "scaler36.json").write_text(result.scaler36.to_json() + "\n")
    (d / "gbdt.json").write_text(model_to_json(result.gbdt) + "\n")
    (d / "cart_full36.json").write_text(model_to_json(result.cart_full) + "\n")
    (d / "cart_top2.json").write_text(model_to_json(result.cart_top2) + "\n")
    (d / "rules_full36.json").write_text(ruleset_to_json(result.rules_full) + "\n")
    (d / "rules_top2.json").write_text(ruleset_to_json(result.rules_top2) + "\n")
    (d / "ranking.json").write_text(json.dumps(
        {"items": [{"column": c, "score": s} for c, s in result.ranking.items]},
        indent=1, sort_keys=True) + "\n")
    (d / "metrics.json").write_text(json.dumps(
        {"metrics": result.metrics, "preparation": result.prepared.report},
        indent=1, sort_keys=True) + "\n")
    splits_dir = d / "splits"
    splits_dir.mkdir(exist_ok=True)
    for name, part in result.prepared.splits.items():
        write_matrix_csv(splits_dir / f"{name}.csv", part)
    return {"models_dir": d}


@dataclass
class DetectorBundle:
    raw_columns: tuple[str, ...]
    deployed: tuple[str, ...]
    scaler36: ScalerState
    gbdt: GBDTModel
    rules: RuleSet
    rules_top2: RuleSet | None = None


def load_models(models_dir: str | Path) -> DetectorBundle:
    d = Path(models_dir)
    try:
        schema = json.loads((d / "schema.json").read_text())
        raw_cols = tuple(schema["raw"])
        deployed = tuple(schema["deployed"])
        scaler36 = ScalerState.from_json((d / "scaler36.json").read_text())
        gbdt = model_from_json((d / "gbdt.json").read_text(), deployed)
        rules = ruleset_from_json((d / "rules_full36.json").read_text())
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{d}: unreadable model directory: {exc}") from exc
    if not isinstance(gbdt, GBDTModel):
        raise ModelFormatError(f"{d}: gbdt.json does not hold a boosted model")
    rules_top2 = None
    if (d / "rules_top2.json").exists():
        rules_top2 = ruleset_from_json((d / "rules_top2.json").read_text())
    return DetectorBundle(raw_cols, deployed, scaler36, gbdt, rules, rules_top2)


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------

def _concrete_path(session: Session, policy: RiskPolicy) -> str:
    """A representative file path inside the session's recorded scope."""
    scope = session.path_scope or "$HOME/**"
    path = policy.expand(scope, session.user)
    if "**" in path:
        path = path.replace("**", "data/sample.bin")
    elif "*" in path:
        path = path.replace("*", "sample.bin")
    return path


def _subject_type(session: Session, wl: bool, module: CilModule) -> str:
    app_type = f"{session.binary}_t"
    if wl and app_type in module.types:
        return app_type
    return "encryption_t"


def _fmt_float(v: float, nd: int) -> str:
    return f"{v:.{nd}f}"


def detect_corpus(corpus_dir: str | Path, models: DetectorBundle | str | Path,
                  policy: RiskPolicy, out_dir: str | Path,
                  keys: SymbolKeys | None = None,
                  window_us: int = DEFAULT_WINDOW_US, tau: float | None = None,
                  strict: bool = False) -> dict:
    """Score every anchored window of every session; write a run directory.

    The run directory holds decisions.csv (one row per window), audit.csv
    (one simulated access check per window), transitions.csv (boolean
    flips), resources.csv (per-session footprint), and meta.json.
    """
    bundle = models if isinstance(models, DetectorBundle) else load_models(models)
    if tau is not None:
        policy = replace(policy, tau=tau)
    keys = keys or default_keys()
    schema = raw_schema(keys)
    if schema != tuple(bundle.raw_columns):
        raise ModelFormatError("symbol keys do not match the trained schema")
    pos = {c: j for j, c in enumerate(schema)}
    idx36 = np.array([pos[c] for c in bundle.deployed], np.int64)
    module = emit_cil(policy)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    decision_rows: list[list] = []
    audit_records = []
    transition_rows: list[list] = []
    resource_rows: list[list] = []
    n_sessions = 0

    for sdir in iter_session_dirs(corpus_dir):
        session = load_session(sdir, strict=strict)
        n_sessions += 1
        evs = filter_housekeeping(session.events, keys)
        wins = pid_anchored_filter(window_session(session, window_us, events=evs))
        ctx = Context(user=session.user, app=session.binary,
                      path=_concrete_path(session, policy))
        wl = whitelisted(policy, ctx)
        subject = _subject_type(session, wl, module)
        state = BooleanState()
        for win in wins:
            vec = extract_raw(win, keys, schema)
            x36 = apply_minmax(bundle.scaler36, vec[idx36][None, :])[0]
            fired = evaluate_rules(bundle.rules, x36)
            p_rule = fired["p_enc"]
            p_model = float(bundle.gbdt.predict_proba(x36[None, :])[0])

            anchor = (win.first_write_ts if win.first_write_ts is not None
                      else win.start_us)
            base_lat = win.end_us - anchor
            vid = f"{session.session_id}:w{win.index:03d}"
            v_rule = policy_decide(
                p_rule, ctx, policy, source=SOURCE_RULE,
                latency_us=base_lat + RULE_TICK_US,
                bytes_seen=win.cum_write_bytes, verdict_id=vid + ":rule")
            v_model = policy_decide(
                p_model, ctx, policy, source=SOURCE_MODEL,
                latency_us=base_lat + MODEL_TICK_US,
                bytes_seen=win.cum_write_bytes, verdict_id=vid + ":model")
            v_or = two_layer(v_rule, v_model, verdict_id=vid)

            state.apply_verdict(v_rule, "rule", ts_us=win.end_us + RULE_TICK_US)
            state.apply_verdict(v_model, "model",
                                ts_us=win.end_us + MODEL_TICK_US)
            audit_records.append(simulate_access(
                module, state, subject, "user_home_t", "write", path=ctx.path,
                ts_us=win.end_us + AUDIT_TICK_US, verdict_id=vid))

            decision_rows.append([
                session.session_id, session.profile, session.kind,
                win.label or "non-encrypted", win.index,
                _fmt_float(win.start_us, 1), _fmt_float(win.end_us, 1),
                session.user, session.binary, ctx.path,
                str(wl).lower(), fired["fired_rule_id"],
                _fmt_float(p_rule, 6), _fmt_float(p_model, 6),
                _fmt_float(v_rule.risk, 6), _fmt_float(v_model.risk, 6),
                v_rule.decision, v_model.decision, v_or.decision,
                _fmt_float(v_rule.latency_us, 1),
                _fmt_float(v_model.latency_us, 1),
                _fmt_float(v_or.latency_us, 1),
                ("" if win.first_write_ts is None
                 else _fmt_float(win.first_write_ts, 1)),
                win.cum_write_bytes, vid,
            ])
        for t in state.log:
            transition_rows.append([
                _fmt_float(t.ts_us, 3), t.name, str(t.old).lower(),
                str(t.new).lower(), t.verdict_id,
            ])
        samples = session.samples
        if samples:
            cpu_mean = sum(s.cpu_percent for s in samples) / len(samples)
            resource_rows.append([
                session.session_id, session.profile, session.label,
                session.binary, _fmt_float(cpu_mean, 2),
                max(s.rss for s in samples),
                samples[-1].read_bytes - samples[0].read_bytes,
                samples[-1].write_bytes - samples[0].write_bytes,
            ])

    with open(out / "decisions.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DECISION_FIELDS)
        w.writerows(decision_rows)
    write_audit(audit_records, out / "audit.csv")
    with open(out / "transitions.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRANSITION_FIELDS)
        w.writerows(transition_rows)
    with open(out / "resources.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESOURCE_SUMMARY_FIELDS)
        w.writerows(resource_rows)
    meta = {
        "tau": policy.tau,
        "window_us": window_us,
        "sessions": n_sessions,
        "windows": len(decision_rows),
        "schema_hash": schema_hash(bundle.deployed),
        "rule_scope": bundle.rules.scope,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return {"run_dir": out, "windows": len(decision_rows),
            "sessions": n_sessions}


def evaluate_run(run_dir: str | Path, out_dir: str | Path | None = None) -> dict:
    return report(run_dir, out_dir)


# ---------------------------------------------------------------------------
# one-call pipeline for reproducibility checks
# ---------------------------------------------------------------------------

def end_to_end(workdir: str | Path, manifest=None, seed: int = 42,
               policy: RiskPolicy | None = None, tau: float | None = None,
               window_us: int = DEFAULT_WINDOW_US,
               n_forest_trees: int = 400) -> dict:
    """simulate -> featurize -> train -> detect -> evaluate, one directory."""
    from .simgen import corpus as generate_corpus
    from .simgen import default_manifest

    work = Path(workdir)
    corpus_dir = work / "corpus"
    models_dir = work / "models"
    run_dir = work / "run"
    manifest = manifest or default_manifest()
    policy = policy or default_policy()

    generate_corpus(manifest, corpus_dir)
    dm = featurize_dir(corpus_dir, window_us=window_us)
    result = train_pipeline(dm, seed=seed,
                            tau=tau if tau is not None else policy.tau,
                            n_forest_trees=n_forest_trees)
    save_models(models_dir, result)
    detect_corpus(corpus_dir, models_dir, policy, run_dir,
                  window_us=window_us, tau=tau)
    report(run_dir)
    return {
        "corpus": corpus_dir,
        "models": models_dir,
        "run": run_dir,
        "metrics": result.metrics,
    }
