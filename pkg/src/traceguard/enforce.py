"""SELinux CIL emission, boolean state machine, and access simulation.

The emitter produces one policy block gating write/append to user home
files behind two booleans; whitelisted apps get an attribute-scoped
unconditional allow so they keep writing even while a boolean is set.
Instead of loading modules into a kernel, a small evaluator interprets the
exact constructs the emitter produces (type, typeattribute,
typeattributeset, boolean, allow, booleanif with and/not) and answers
access checks against the current boolean state.  Every simulated check
appends one audit record.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ModelFormatError, UnknownOperation, UnknownType
from .policy import RiskPolicy, Verdict

BLOCK_NAME = "encryption_rbac_base"
OPERATIONS = ("read", "getattr", "open", "write", "append", "execute",
              "entrypoint")

AUDIT_FIELDS = ("ts_us", "subject", "path", "type", "op", "decision",
                "rule_block", "ml_block", "verdict_id")

BOOL_RULE = "rule_block"
BOOL_ML = "ml_block"


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def _app_type(app: str) -> str:
    return f"{app}_t"


def emit_cil_text(policy: RiskPolicy | None = None,
                  temp_types: tuple[str, ...] = ()) -> str:
    """Render the policy block; byte-deterministic for a given config."""
    apps = sorted({e.app for e in policy.whitelist}) if policy else []
    users = sorted({e.user for e in policy.whitelist}) if policy else []
    lines = [
        f"(block {BLOCK_NAME}",
        "  (type encryption_t) (type crypto_exec_t) (type user_home_t)",
        "  (typeattribute enc_whitelisted_app)",
        "  (typeattribute enc_whitelisted_user)",
        f"  (boolean {BOOL_RULE} false) (boolean {BOOL_ML} false)",
    ]
    for app in apps:
        lines.append(f"  (type {_app_type(app)})")
    for t in temp_types:
        lines.append(f"  (type {t})")
    if apps:
        members = " ".join(_app_type(a) for a in apps)
        lines.append(f"  (typeattributeset enc_whitelisted_app ({members}))")
    if users:
        lines.append(f"  ; whitelisted users: {' '.join(users)}")
    lines += [
        "  (allow encryption_t user_home_t (file (read getattr open)))",
        "  (allow encryption_t crypto_exec_t (file (read execute entrypoint)))",
    ]
    for app in apps:
        at = _app_type(app)
        lines.append(f"  (allow {at} user_home_t (file (read getattr open)))")
    if apps:
        lines.append(
            "  (allow enc_whitelisted_app user_home_t (file (write append)))")
    for t in temp_types:
        # temporary files are exempt from gating by design
        lines.append(f"  (allow encryption_t {t} (file (read write append)))")
    lines += [
        f"  (booleanif (and (not {BOOL_RULE}) (not {BOOL_ML}))",
        "    (true (allow encryption_t user_home_t (file (write append)))))",
        ")",
        "",
    ]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# parsing and evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AllowRule:
    subject: str
    target: str
    klass: str
    perms: frozenset[str]


@dataclass
class CilModule:
    text: str
    name: str
    types: set[str]
    attributes: set[str]
    attr_members: dict[str, set[str]]
    boolean_defaults: dict[str, bool]
    allows: list[AllowRule]
    conditionals: list[tuple[list, list[AllowRule], list[AllowRule]]]

    def subject_labels(self, subject: str) -> set[str]:
        labels = {subject}
        for attr, members in self.attr_members.items():
            if subject in members:
                labels.add(attr)
        return labels


def _tokenize(text: str) -> list[str]:
    tokens: list[str] = []
    cur = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == ";":
            while i < len(text) and text[i] != "\n":
                i += 1
            continue
        if ch in "()":
            if cur:
                tokens.append("".join(cur))
                cur = []
            tokens.append(ch)
        elif ch.isspace():
            if cur:
                tokens.append("".join(cur))
                cur = []
        else:
            cur.append(ch)
        i += 1
    if cur:
        tokens.append("".join(cur))
    return tokens


def _read_sexpr(tokens: list[str], pos: int):
    if pos >= len(tokens):
        raise ModelFormatError("unexpected end of CIL text")
    tok = tokens[pos]
    if tok == "(":
        items = []
        pos += 1
        while pos < len(tokens) and tokens[pos] != ")":
            node, pos = _read_sexpr(tokens, pos)
            items.append(node)
        if pos >= len(tokens):
            raise ModelFormatError("unbalanced parenthesis in CIL text")
        return items, pos + 1
    if tok == ")":
        raise ModelFormatError("unexpected ')' in CIL text")
    return tok, pos + 1


def _parse_allow(form: list) -> AllowRule:
    if len(form) != 4 or not isinstance(form[3], list) or len(form[3]) != 2:
        raise ModelFormatError(f"malformed allow: {form}")
    klass, perms = form[3]
    if not isinstance(perms, list):
        raise ModelFormatError(f"malformed permission set: {form}")
    return AllowRule(form[1], form[2], klass, frozenset(perms))


def parse_cil(text: str) -> CilModule:
    """Parse exactly the grammar the emitter produces."""
    tokens = _tokenize(text)
    forms = []
    pos = 0
    while pos < len(tokens):
        node, pos = _read_sexpr(tokens, pos)
        forms.append(node)
    if len(forms) != 1 or not isinstance(forms[0], list) or forms[0][0] != "block":
        raise ModelFormatError("expected a single (block ...) form")
    block = forms[0]
    mod = CilModule(text=text, name=block[1], types=set(), attributes=set(),
                    attr_members={}, boolean_defaults={}, allows=[],
                    conditionals=[])
    for form in block[2:]:
        if not isinstance(form, list) or not form:
            raise ModelFormatError(f"stray atom in block: {form!r}")
        head = form[0]
        if head == "type":
            mod.types.add(form[1])
        elif head == "typeattribute":
            mod.attributes.add(form[1])
            mod.attr_members.setdefault(form[1], set())
        elif head == "typeattributeset":
            attr, members = form[1], form[2]
            if attr not in mod.attributes:
                raise ModelFormatError(f"typeattributeset before declaration: {attr}")
            mod.attr_members.setdefault(attr, set()).update(members)
        elif head == "boolean":
            mod.boolean_defaults[form[1]] = form[2] == "true"
        elif head == "allow":
            mod.allows.append(_parse_allow(form))
        elif head == "booleanif":
            expr = form[1]
            true_allows: list[AllowRule] = []
            false_allows: list[AllowRule] = []
            for branch in form[2:]:
                branch_rules = [_parse_allow(f) for f in branch[1:]]
                if branch[0] == "true":
                    true_allows.extend(branch_rules)
                elif branch[0] == "false":
                    false_allows.extend(branch_rules)
                else:
                    raise ModelFormatError(f"unknown branch {branch[0]!r}")
            mod.conditionals.append((expr, true_allows, false_allows))
        else:
            raise ModelFormatError(f"unsupported CIL construct {head!r}")
    return mod


def emit_cil(policy: RiskPolicy | None = None,
             temp_types: tuple[str, ...] = ()) -> CilModule:
    text = emit_cil_text(policy, temp_types)
    return parse_cil(text)   # self-check: emitted text must parse


def _eval_expr(expr, values: dict[str, bool]) -> bool:
    if isinstance(expr, str):
        if expr not in values:
            raise ModelFormatError(f"undeclared boolean {expr!r}")
        return values[expr]
    head = expr[0]
    if head == "and":
        return all(_eval_expr(e, values) for e in expr[1:])
    if head == "not":
        return not _eval_expr(expr[1], values)
    raise ModelFormatError(f"unsupported boolean operator {head!r}")


# ---------------------------------------------------------------------------
# boolean state machine
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Transition:
    ts_us: float
    name: str
    old: bool
    new: bool
    verdict_id: str


@dataclass
class BooleanState:
    rule_block: bool = False
    ml_block: bool = False
    log: list[Transition] = field(default_factory=list)

    def values(self) -> dict[str, bool]:
        return {BOOL_RULE: self.rule_block, BOOL_ML: self.ml_block}

    def _set(self, name: str, new: bool, ts_us: float, verdict_id: str) -> None:
        old = getattr(self, name)
        if old == new:
            return   # idempotent: repeated identical verdicts log nothing
        setattr(self, name, new)
        self.log.append(Transition(ts_us, name, old, new, verdict_id))

    def apply_verdict(self, verdict: Verdict, layer: str,
                      ts_us: float = 0.0) -> "BooleanState":
        """A layer's block sets its boolean; its allow clears only its own."""
        name = {"rule": BOOL_RULE, "model": BOOL_ML}[layer]
        self._set(name, verdict.blocking, ts_us,
                  verdict.verdict_id or verdict.source)
        return self


# ---------------------------------------------------------------------------
# access simulation and audit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditRecord:
    ts_us: float
    subject: str
    path: str
    type: str
    op: str
    decision: str      # "allow" or "deny"
    rule_block: bool
    ml_block: bool
    verdict_id: str


def access_allowed(module: CilModule, state: BooleanState, subject: str,
                   target_type: str, op: str) -> bool:
    if op not in OPERATIONS:
        raise UnknownOperation(f"operation {op!r} not in {OPERATIONS}")
    known = module.types | module.attributes
    if subject not in known:
        raise UnknownType(f"subject type {subject!r} not declared")
    if target_type not in known:
        raise UnknownType(f"target type {target_type!r} not declared")
    values = dict(module.boolean_defaults)
    values.update(state.values())
    effective = list(module.allows)
    for expr, true_rules, false_rules in module.conditionals:
        effective.extend(true_rules if _eval_expr(expr, values) else false_rules)
    labels = module.subject_labels(subject)
    for rule in effective:
        if rule.subject in labels and rule.target == target_type \
                and rule.klass == "file" and op in rule.perms:
            return True
    return False


def simulate_access(module: CilModule, state: BooleanState, subject: str,
                    target_type: str, op: str, path: str = "",
                    ts_us: float = 0.0, verdict_id: str = "") -> AuditRecord:
    allowed = access_allowed(module, state, subject, target_type, op)
    return AuditRecord(
        ts_us=ts_us, subject=subject, path=path, type=target_type, op=op,
        decision="allow" if allowed else "deny",
        rule_block=state.rule_block, ml_block=state.ml_block,
        verdict_id=verdict_id)


def write_audit(records: list[AuditRecord], sink) -> None:
    """CSV rows with a fixed header, flushed per record."""
    own = isinstance(sink, (str, Path))
    fh = open(sink, "w", newline="") if own else sink
    try:
        w = csv.writer(fh)
        w.writerow(AUDIT_FIELDS)
        for r in records:
            w.writerow([f"{r.ts_us:.3f}", r.subject, r.path, r.type, r.op,
                        r.decision, str(r.rule_block).lower(),
                        str(r.ml_block).lower(), r.verdict_id])
            fh.flush()
    finally:
        if own:
            fh.close()
