"""Risk policy: whitelist matching, impact weights, and verdict composition.

A request context is (user, app, path, optional file type).  Decisions are
whitelist-first: a matching whitelist entry allows the request regardless of
the encryption probability.  Otherwise the risk score p_enc * impact is
compared against the policy threshold tau; below blocks nothing, at or
above blocks.  Glob patterns support `*` within a path segment and `**`
across segments; `$HOME` is expanded against the context user's home
directory (from the policy's home_dirs map, default /home/<user>).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import InvalidProbability, PolicyFormatError

SOURCE_WHITELIST = "whitelist"
SOURCE_RULE = "rule"
SOURCE_MODEL = "model"
SOURCE_OR = "or_composition"

DEFAULT_TAU = 0.50

_GLOB_STAR_RE = re.compile(r"\*\*|\*|[^*]+")


def compile_glob(pattern: str) -> re.Pattern:
    """Translate the two-star glob dialect to an anchored regex."""
    parts = []
    for m in _GLOB_STAR_RE.finditer(pattern):
        tok = m.group(0)
        if tok == "**":
            parts.append(".*")
        elif tok == "*":
            parts.append("[^/]*")
        else:
            parts.append(re.escape(tok))
    return re.compile("^" + "".join(parts) + "$")


@dataclass(frozen=True)
class Context:
    user: str
    app: str
    path: str
    file_type: str | None = None


@dataclass(frozen=True)
class WhitelistEntry:
    user: str
    app: str
    path_scope: str
    file_type: str | None = None


@dataclass(frozen=True)
class ImpactRule:
    weight: float
    user: str | None = None
    app: str | None = None
    path: str | None = None


@dataclass
class RiskPolicy:
    tau: float = DEFAULT_TAU
    impact_map: list[ImpactRule] = field(default_factory=list)
    whitelist: list[WhitelistEntry] = field(default_factory=list)
    home_dirs: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise PolicyFormatError(f"tau {self.tau} outside [0, 1]")
        for rule in self.impact_map:
            if rule.weight < 0.0:
                raise PolicyFormatError(f"impact weight {rule.weight} is negative")

    def home_of(self, user: str) -> str:
        return self.home_dirs.get(user, f"/home/{user}")

    def expand(self, pattern: str, user: str) -> str:
        return pattern.replace("$HOME", self.home_of(user))


@dataclass(frozen=True)
class Verdict:
    decision: str            # "allow" or "block"
    source: str
    p_enc: float
    risk: float
    latency_us: float
    bytes_seen: int
    verdict_id: str = ""

    @property
    def blocking(self) -> bool:
        return self.decision == "block"


def _path_matches(policy: RiskPolicy, pattern: str, ctx: Context) -> bool:
    return bool(compile_glob(policy.expand(pattern, ctx.user)).match(ctx.path))


def impact(policy: RiskPolicy, ctx: Context) -> float:
    """First matching impact rule's weight; 1.0 when nothing matches."""
    for rule in policy.impact_map:
        if rule.user is not None and rule.user != ctx.user:
            continue
        if rule.app is not None and rule.app != ctx.app:
            continue
        if rule.path is not None and not _path_matches(policy, rule.path, ctx):
            continue
        return rule.weight
    return 1.0


def risk(p_enc: float, ctx: Context, policy: RiskPolicy) -> float:
    return p_enc * impact(policy, ctx)


def whitelisted(policy: RiskPolicy, ctx: Context) -> bool:
    for entry in policy.whitelist:
        if entry.user != ctx.user or entry.app != ctx.app:
            continue
        if not _path_matches(policy, entry.path_scope, ctx):
            continue
        if entry.file_type is not None and entry.file_type != ctx.file_type:
            continue
        return True
    return False


def decide(p_enc: float, ctx: Context, policy: RiskPolicy,
           source: str = SOURCE_MODEL, latency_us: float = 0.0,
           bytes_seen: int = 0, verdict_id: str = "") -> Verdict:
    """Whitelist first, then the risk threshold."""
    try:
        p_enc = float(p_enc)
    except (TypeError, ValueError) as exc:
        raise InvalidProbability(f"p_enc {p_enc!r} is not a number") from exc
    if not 0.0 <= p_enc <= 1.0:   # NaN also fails this and is rejected
        raise InvalidProbability(f"p_enc {p_enc!r} outside [0, 1]")
    r = risk(p_enc, ctx, policy)
    if whitelisted(policy, ctx):
        return Verdict("allow", SOURCE_WHITELIST, float(p_enc), r,
                       latency_us, bytes_seen, verdict_id)
    decision = "allow" if r < policy.tau else "block"
    return Verdict(decision, source, float(p_enc), r,
                   latency_us, bytes_seen, verdict_id)


def two_layer(rule_verdict: Verdict, model_verdict: Verdict,
              verdict_id: str = "") -> Verdict:
    """OR composition: block if either layer blocks.

    Blocking verdicts take the earliest blocking layer's latency, score, and
    byte count; composed allows take the slower layer's latency and the
    higher score, since both layers had to finish before the window passed.
    """
    blockers = [v for v in (rule_verdict, model_verdict) if v.blocking]
    if blockers:
        lead = min(blockers, key=lambda v: v.latency_us)
        return Verdict("block", SOURCE_OR, lead.p_enc, lead.risk,
                       lead.latency_us, lead.bytes_seen, verdict_id)
    slow = max((rule_verdict, model_verdict), key=lambda v: v.latency_us)
    high = max((rule_verdict, model_verdict), key=lambda v: v.risk)
    return Verdict("allow", SOURCE_OR, high.p_enc, high.risk,
                   slow.latency_us, slow.bytes_seen, verdict_id)


# ---------------------------------------------------------------------------
# policy files
# ---------------------------------------------------------------------------

def policy_from_obj(obj: dict) -> RiskPolicy:
    try:
        tau = float(obj.get("tau", DEFAULT_TAU))
        impact_map = [
            ImpactRule(
                weight=float(e["impact"]),
                user=e.get("user"),
                app=e.get("app"),
                path=e.get("path"),
            )
            for e in obj.get("impact", [])
        ]
        whitelist = [
            WhitelistEntry(
                user=str(e["user"]),
                app=str(e["app"]),
                path_scope=str(e["path_scope"]),
                file_type=e.get("file_type"),
            )
            for e in obj.get("whitelist", [])
        ]
        home_dirs = {str(k): str(v) for k, v in obj.get("home_dirs", {}).items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise PolicyFormatError(f"bad policy field: {exc}") from exc
    return RiskPolicy(tau=tau, impact_map=impact_map, whitelist=whitelist,
                      home_dirs=home_dirs)


def load_policy(path) -> RiskPolicy:
    try:
        obj = json.loads(open(path).read())
    except (OSError, json.JSONDecodeError) as exc:
        raise PolicyFormatError(f"unreadable policy file {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise PolicyFormatError(f"{path}: policy root must be an object")
    return policy_from_obj(obj)


def policy_to_json(policy: RiskPolicy) -> str:
    obj = {
        "tau": policy.tau,
        "impact": [
            {k: v for k, v in (
                ("user", r.user), ("app", r.app), ("path", r.path),
                ("impact", r.weight)) if v is not None}
            for r in policy.impact_map
        ],
        "whitelist": [
            {k: v for k, v in (
                ("user", e.user), ("app", e.app),
                ("path_scope", e.path_scope),
                ("file_type", e.file_type)) if v is not None}
            for e in policy.whitelist
        ],
        "home_dirs": dict(sorted(policy.home_dirs.items())),
    }
    return json.dumps(obj, sort_keys=True, indent=1)
