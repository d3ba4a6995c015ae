"""Decision rules distilled from shallow classification trees.

Each leaf of a depth-capped tree becomes one rule: the conjunction of the
root-to-leaf edge predicates, a predicted class, and the leaf's class
probability as confidence.  The rule set partitions feature space exactly
like the source tree, so evaluating the rules and applying the tree must
agree on every vector; a vector sitting on a split boundary follows the
"<=" branch on both sides.  Rule evaluation measures its own wall-clock
cost around the predicate checks only.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelFormatError, SchemaMismatch
from .features import schema_hash
from .trees import CartModel

SCOPE_TOP2 = "top2"
SCOPE_FULL36 = "full36"

OP_LE = "<="
OP_GT = ">"

DEFAULT_RULE_DEPTH = 4


@dataclass
class Predicate:
    column: str
    op: str            # "<=" or ">"
    threshold: float

    def holds(self, value: float) -> bool:
        if self.op == OP_LE:
            return value <= self.threshold
        return value > self.threshold


@dataclass
class Rule:
    rule_id: str
    predicates: list[Predicate]
    klass: int         # 1 = encrypted
    confidence: float  # leaf probability of the predicted class

    @property
    def p_enc(self) -> float:
        return self.confidence if self.klass == 1 else 1.0 - self.confidence


@dataclass
class RuleSet:
    scope: str
    depth_cap: int
    columns: tuple[str, ...]
    rules: list[Rule] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rules)


def extract_rules(model: CartModel, scope: str) -> RuleSet:
    """Flatten a trained tree into one rule per leaf, preorder left-first."""
    t = model.tree
    rules: list[Rule] = []
    # stack of (node, predicates-so-far); right pushed first so left pops first
    stack: list[tuple[int, list[Predicate]]] = [(0, [])]
    while stack:
        node, preds = stack.pop()
        feat = int(t.feature[node])
        if feat < 0:
            p1 = float(t.leaf_p1(np.array([node], np.int64))[0])
            klass = 1 if p1 > 0.5 else 0
            conf = p1 if klass == 1 else 1.0 - p1
            rules.append(Rule(f"{scope}:{len(rules)}", preds, klass, conf))
            continue
        col = model.schema[feat]
        thr = float(t.threshold[node])
        stack.append((int(t.right[node]), preds + [Predicate(col, OP_GT, thr)]))
        stack.append((int(t.left[node]), preds + [Predicate(col, OP_LE, thr)]))
    cap = model.depth_cap if model.depth_cap is not None else t.max_depth()
    return RuleSet(scope, int(cap), tuple(model.schema), rules)


def evaluate_rules(rules: RuleSet, x: np.ndarray) -> dict:
    """Find the unique matching rule; time only the predicate checks."""
    vec = np.asarray(x, np.float64)
    if vec.shape != (len(rules.columns),):
        raise SchemaMismatch(
            f"vector has {vec.shape} entries, rules expect {len(rules.columns)}")
    col_index = {c: i for i, c in enumerate(rules.columns)}
    compiled = [
        [(col_index[p.column], p.op == OP_LE, p.threshold) for p in r.predicates]
        for r in rules.rules
    ]
    vals = vec.tolist()
    t0 = time.perf_counter_ns()
    fired = -1
    for ri, preds in enumerate(compiled):
        ok = True
        for ci, is_le, thr in preds:
            v = vals[ci]
            if is_le:
                if not v <= thr:
                    ok = False
                    break
            elif not v > thr:
                ok = False
                break
        if ok:
            fired = ri
            break
    elapsed_us = (time.perf_counter_ns() - t0) / 1000.0
    if fired < 0:
        raise ModelFormatError("rule set does not cover the input vector")
    r = rules.rules[fired]
    return {
        "klass": r.klass,
        "p_enc": r.p_enc,
        "confidence": r.confidence,
        "fired_rule_id": r.rule_id,
        "eval_us": elapsed_us,
    }


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def ruleset_to_json(rules: RuleSet) -> str:
    obj = {
        "scope": rules.scope,
        "depth_cap": rules.depth_cap,
        "schema_hash": schema_hash(rules.columns),
        "columns": list(rules.columns),
        "rules": [
            {
                "id": r.rule_id,
                "predicates": [
                    {"column": p.column, "op": p.op, "threshold": p.threshold}
                    for p in r.predicates
                ],
                "klass": r.klass,
                "confidence": r.confidence,
            }
            for r in rules.rules
        ],
    }
    return json.dumps(obj, sort_keys=True, indent=1)


def ruleset_from_json(text: str) -> RuleSet:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"unparsable rule file: {exc}") from exc
    try:
        columns = tuple(obj["columns"])
        if obj.get("schema_hash") != schema_hash(columns):
            raise SchemaMismatch("rule file schema hash does not match its columns")
        rules = [
            Rule(
                r["id"],
                [Predicate(p["column"], p["op"], float(p["threshold"]))
                 for p in r["predicates"]],
                int(r["klass"]),
                float(r["confidence"]),
            )
            for r in obj["rules"]
        ]
        return RuleSet(obj["scope"], int(obj["depth_cap"]), columns, rules)
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"rule file missing field: {exc}") from exc
