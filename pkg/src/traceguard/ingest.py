"""Function-duration trace ingestion.

The trace text format mirrors a kernel function-duration tracer: one record
per line, no timestamp column.  Each line is

    [comm-pid]  <cpu>)  [<float> us]  |  <body>

where the body is an entry ``sym() {``, an exit ``}``, or a leaf ``sym();``.
Lines starting with ``#`` are comments.  Timestamps are reconstructed by
replaying a per-(cpu, pid) clock:

* an entry is stamped at the current clock and does not advance it;
* a leaf is stamped at the clock, which then advances by its duration;
* an exit is stamped at its entry's timestamp plus the reported duration,
  and the clock jumps there (the gap over child time is self time).

All times are microseconds quantized to three decimals, so that
``parse_trace(format_trace(events)).events == events`` holds exactly.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DepthUnderflow,
    EmptySession,
    EmptySymbolList,
    MalformedLine,
    MissingColumn,
    NonMonotonicCounter,
    NoUserspaceActivity,
    UnparsableKeyFile,
)

ENTRY = "entry"
EXIT = "exit"
LEAF = "leaf"

_LINE_RE = re.compile(
    r"^\s*(?:(?P<comm>\S+?)-(?P<pid>\d+)\s+)?"
    r"(?P<cpu>\d+)\)\s*"
    r"(?:(?P<dur>\d+(?:\.\d+)?)\s*us\s*)?"
    r"\|(?P<body>.*)$"
)
_ENTRY_RE = re.compile(r"^(?P<sym>[A-Za-z_$.][\w$.]*)\(\)\s*\{$")
_LEAF_RE = re.compile(r"^(?P<sym>[A-Za-z_$.][\w$.]*)\(\);$")
_EXIT_RE = re.compile(r"^\}(?:\s*/\*.*\*/)?$")

# comm prefixes of kernel housekeeping tasks, dropped at attribution
KERNEL_TASK_PREFIXES = (
    "swapper", "kworker", "ksoftirqd", "migration", "rcu_sched",
    "rcu_preempt", "cpuhp", "kthreadd", "khugepaged", "kswapd",
    "watchdog", "idle_inject", "kcompactd", "oom_reaper",
)

RESOURCE_FIELDS = (
    "timestamp_us", "cpu_percent", "rss", "vms",
    "read_count", "write_count", "read_bytes", "write_bytes",
)
_MONOTONIC_FIELDS = ("read_count", "write_count", "read_bytes", "write_bytes")


@dataclass
class TraceEvent:
    comm: str
    pid: int
    cpu: int
    kind: str
    symbol: str
    depth: int
    ts_us: float
    dur_us: float | None = None


@dataclass
class ParseStats:
    lines_total: int = 0
    lines_parsed: int = 0
    comments: int = 0
    malformed_skipped: int = 0
    underflows_skipped: int = 0
    unclosed_closed: int = 0

    def as_dict(self) -> dict:
        return {
            "lines_total": self.lines_total,
            "lines_parsed": self.lines_parsed,
            "comments": self.comments,
            "malformed_skipped": self.malformed_skipped,
            "underflows_skipped": self.underflows_skipped,
            "unclosed_closed": self.unclosed_closed,
        }


@dataclass
class ParseResult:
    events: list[TraceEvent]
    stats: ParseStats


def parse_trace(text: str, strict: bool = False) -> ParseResult:
    """Parse trace text into timestamped events via clock replay."""
    events: list[TraceEvent] = []
    stats = ParseStats()
    clocks: dict[tuple[int, int], float] = {}
    # open entries per (cpu, pid): (event index, symbol, depth, entry ts)
    stacks: dict[tuple[int, int], list[tuple[int, str, int, float]]] = {}
    comms: dict[tuple[int, int], str] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stats.lines_total += 1
        line = raw.rstrip()
        if not line.strip() or line.lstrip().startswith("#"):
            stats.comments += 1
            continue
        m = _LINE_RE.match(line)
        if m is None:
            if strict:
                raise MalformedLine(f"line {lineno}: unrecognized record: {line!r}")
            stats.malformed_skipped += 1
            continue
        comm = m.group("comm") or ""
        pid = int(m.group("pid")) if m.group("pid") else 0
        cpu = int(m.group("cpu"))
        dur = round(float(m.group("dur")), 3) if m.group("dur") else None
        body = m.group("body").strip()
        key = (cpu, pid)
        clock = clocks.get(key, 0.0)
        stack = stacks.setdefault(key, [])
        comms.setdefault(key, comm)

        em = _ENTRY_RE.match(body)
        if em is not None:
            depth = len(stack)
            events.append(TraceEvent(comm, pid, cpu, ENTRY, em.group("sym"),
                                     depth, clock, None))
            stack.append((len(events) - 1, em.group("sym"), depth, clock))
            stats.lines_parsed += 1
            continue
        lm = _LEAF_RE.match(body)
        if lm is not None:
            d = dur if dur is not None else 0.0
            events.append(TraceEvent(comm, pid, cpu, LEAF, lm.group("sym"),
                                     len(stack), clock, d))
            clocks[key] = round(clock + d, 3)
            stats.lines_parsed += 1
            continue
        if _EXIT_RE.match(body):
            if not stack:
                if strict:
                    raise DepthUnderflow(f"line {lineno}: exit with no open entry")
                stats.underflows_skipped += 1
                continue
            _, sym, depth, entry_ts = stack.pop()
            if dur is not None:
                ts = round(entry_ts + dur, 3)
                d = dur
            else:
                ts = clock
                d = round(ts - entry_ts, 3)
            events.append(TraceEvent(comm, pid, cpu, EXIT, sym, depth, ts, d))
            clocks[key] = ts
            stats.lines_parsed += 1
            continue
        if strict:
            raise MalformedLine(f"line {lineno}: unrecognized body: {body!r}")
        stats.malformed_skipped += 1

    # close whatever is still open at end-of-capture, innermost first
    for key, stack in stacks.items():
        end = clocks.get(key, 0.0)
        while stack:
            _, sym, depth, entry_ts = stack.pop()
            d = round(end - entry_ts, 3)
            events.append(TraceEvent(comms.get(key, ""), key[1], key[0], EXIT,
                                     sym, depth, end, d))
            stats.unclosed_closed += 1
    return ParseResult(events, stats)


def format_trace(events: list[TraceEvent]) -> str:
    """Serialize events back to trace text (inverse of parse_trace)."""
    out = []
    for ev in events:
        tag = f"{ev.comm}-{ev.pid}" if ev.comm else ""
        dur = f"{ev.dur_us:9.3f} us" if ev.dur_us is not None else " " * 12
        indent = "  " * ev.depth
        if ev.kind == ENTRY:
            body = f"{ev.symbol}() {{"
        elif ev.kind == LEAF:
            body = f"{ev.symbol}();"
        else:
            body = "}"
        out.append(f"{tag:<18} {ev.cpu}) {dur} | {indent}{body}")
    return "\n".join(out) + ("\n" if out else "")


def parse_trace_file(path: str | Path, strict: bool = False) -> ParseResult:
    return parse_trace(Path(path).read_text(), strict=strict)


# ---------------------------------------------------------------------------
# resource sample CSV
# ---------------------------------------------------------------------------

@dataclass
class ResourceSample:
    timestamp_us: int
    cpu_percent: float
    rss: int                      # bytes
    vms: int                      # bytes
    read_count: int
    write_count: int
    read_bytes: int
    write_bytes: int


def read_resources(path: str | Path, strict: bool = False) -> list[ResourceSample]:
    """Read cumulative resource samples.

    Cumulative counters must be non-decreasing; strict mode raises on
    violations and unparsable rows, lenient mode drops the offending row.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in RESOURCE_FIELDS:
            if col not in header:
                raise MissingColumn(f"resource csv missing column {col!r}")
        samples: list[ResourceSample] = []
        prev: ResourceSample | None = None
        for row in reader:
            try:
                s = ResourceSample(
                    timestamp_us=int(row["timestamp_us"]),
                    cpu_percent=float(row["cpu_percent"]),
                    rss=int(row["rss"]),
                    vms=int(row["vms"]),
                    read_count=int(row["read_count"]),
                    write_count=int(row["write_count"]),
                    read_bytes=int(row["read_bytes"]),
                    write_bytes=int(row["write_bytes"]),
                )
            except (TypeError, ValueError) as exc:
                if strict:
                    raise MalformedLine(f"resource row unparsable: {row}") from exc
                continue
            bad = None
            if prev is not None:
                for name in _MONOTONIC_FIELDS:
                    if getattr(s, name) < getattr(prev, name):
                        bad = name
                        break
            if bad is not None:
                if strict:
                    raise NonMonotonicCounter(
                        f"{bad} decreased at timestamp_us={s.timestamp_us}")
                continue
            samples.append(s)
            prev = s
    return samples


def write_resources(path: str | Path, samples: list[ResourceSample]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESOURCE_FIELDS)
        for s in samples:
            writer.writerow([s.timestamp_us, f"{s.cpu_percent:.2f}", s.rss,
                             s.vms, s.read_count, s.write_count,
                             s.read_bytes, s.write_bytes])


# ---------------------------------------------------------------------------
# symbol key files
# ---------------------------------------------------------------------------

@dataclass
class SymbolKeys:
    symbols: tuple[str, ...]
    excluded: tuple[str, ...] = ()


def _dedup(items: list[str]) -> tuple[str, ...]:
    seen: set[str] = set()
    out = []
    for s in items:
        if s not in seen:
            seen.add(s)
            out.append(s)
    return tuple(out)


def _keys_from_obj(obj) -> SymbolKeys:
    if isinstance(obj, list):
        return SymbolKeys(_dedup([str(s) for s in obj]))
    if isinstance(obj, dict):
        syms = [str(s) for s in obj.get("symbols", [])]
        excl = [str(s) for s in obj.get("excluded", [])]
        return SymbolKeys(_dedup(syms), _dedup(excl))
    raise UnparsableKeyFile("key file must hold a list or a mapping")


def _parse_keys_yamlish(text: str) -> SymbolKeys:
    """Minimal block-list subset: optional 'symbols:'/'excluded:' sections."""
    sections: dict[str, list[str]] = {"symbols": [], "excluded": []}
    current = "symbols"
    saw_any = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.endswith(":") and not stripped.startswith("-"):
            name = stripped[:-1].strip()
            if name not in sections:
                raise UnparsableKeyFile(f"line {lineno}: unknown section {name!r}")
            current = name
            continue
        if stripped.startswith("- "):
            item = stripped[2:].strip().strip("'\"")
            if not item:
                raise UnparsableKeyFile(f"line {lineno}: empty list item")
            sections[current].append(item)
            saw_any = True
            continue
        raise UnparsableKeyFile(f"line {lineno}: cannot parse {stripped!r}")
    if not saw_any:
        raise UnparsableKeyFile("key file holds no list items")
    return SymbolKeys(_dedup(sections["symbols"]), _dedup(sections["excluded"]))


def load_symbol_keys(path: str | Path) -> SymbolKeys:
    """Load a symbol key file: JSON first, block-list fallback."""
    text = Path(path).read_text()
    try:
        keys = _keys_from_obj(json.loads(text))
    except json.JSONDecodeError:
        keys = _parse_keys_yamlish(text)
    if not keys.symbols:
        raise EmptySymbolList(f"{path}: no symbols listed")
    return keys


# ---------------------------------------------------------------------------
# session attribution
# ---------------------------------------------------------------------------

def is_kernel_task(comm: str) -> bool:
    return comm == "" or any(comm.startswith(p) for p in KERNEL_TASK_PREFIXES)


def attribute_sessions(
    events: list[TraceEvent],
) -> dict[tuple[str, int], list[TraceEvent]]:
    """Group events by (comm, pid), dropping kernel housekeeping tasks.

    Groups keep first-appearance order; events within a group are stable
    sorted by timestamp.
    """
    groups: dict[tuple[str, int], list[TraceEvent]] = {}
    for ev in events:
        if is_kernel_task(ev.comm):
            continue
        groups.setdefault((ev.comm, ev.pid), []).append(ev)
    if not groups:
        raise NoUserspaceActivity("no userspace task events in trace")
    for key in groups:
        groups[key].sort(key=lambda e: e.ts_us)
    return groups


def truncate_at_cap(
    events: list[TraceEvent],
    samples: list[ResourceSample],
    cap_bytes: int,
) -> tuple[list[TraceEvent], list[ResourceSample], bool]:
    """Drop data past the point where cumulative I/O first exceeds the cap.

    Byte progress comes from the resource counters (deltas from the first
    sample).  Returns (events, samples, truncated).
    """
    if cap_bytes <= 0 or not samples:
        return events, samples, False
    base = samples[0].read_bytes + samples[0].write_bytes
    cut_ts: int | None = None
    for s in samples:
        if (s.read_bytes + s.write_bytes) - base > cap_bytes:
            cut_ts = s.timestamp_us
            break
    if cut_ts is None:
        return events, samples, False
    kept_ev = [ev for ev in events if ev.ts_us <= cut_ts]
    kept_s = [s for s in samples if s.timestamp_us <= cut_ts]
    return kept_ev, kept_s, True


# ---------------------------------------------------------------------------
# on-disk sessions
# ---------------------------------------------------------------------------

@dataclass
class Session:
    session_id: str
    label: str                    # "encrypted" or "non-encrypted"
    profile: str
    kind: str                     # workload family: benign | crypto_tool | ransomware
    user: str
    binary: str
    path_scope: str
    kernel_ver: str
    onset_us: int | None
    events: list[TraceEvent] = field(repr=False, default_factory=list)
    samples: list[ResourceSample] = field(repr=False, default_factory=list)
    truncated: bool = False
    stats: ParseStats | None = None

    @property
    def encrypted(self) -> bool:
        return self.label == "encrypted"

    @property
    def end_us(self) -> float:
        if not self.events:
            return 0.0
        return max(e.ts_us + (e.dur_us or 0.0) for e in self.events)


def load_session(
    session_dir: str | Path,
    cap_bytes: int | None = None,
    strict: bool = False,
) -> Session:
    """Load one recorded session directory (trace + resources + meta)."""
    d = Path(session_dir)
    meta = json.loads((d / "meta.json").read_text())
    result = parse_trace_file(d / "trace.txt", strict=strict)
    samples = read_resources(d / "resources.csv", strict=strict)
    groups = attribute_sessions(result.events)
    # one traced task per session; merge defensively if a recording has more
    events: list[TraceEvent] = []
    for evs in groups.values():
        events.extend(evs)
    if len(groups) > 1:
        events.sort(key=lambda e: e.ts_us)
    cap = meta.get("capture_cap_bytes") if cap_bytes is None else cap_bytes
    truncated = False
    if cap:
        events, samples, truncated = truncate_at_cap(events, samples, int(cap))
    if not events:
        raise EmptySession(f"{d}: no events after filtering")
    return Session(
        session_id=str(meta["session_id"]),
        label=str(meta["label"]),
        profile=str(meta.get("profile", "")),
        kind=str(meta.get("kind", "")),
        user=str(meta.get("user", "")),
        binary=str(meta.get("binary", "")),
        path_scope=str(meta.get("path_scope", "")),
        kernel_ver=str(meta.get("kernel_ver", "")),
        onset_us=(int(meta["onset_us"]) if meta.get("onset_us") is not None
                  else None),
        events=events,
        samples=samples,
        truncated=truncated,
        stats=result.stats,
    )


def iter_session_dirs(corpus_dir: str | Path) -> list[Path]:
    root = Path(corpus_dir)
    return sorted(p.parent for p in root.glob("*/meta.json"))


def load_corpus(
    corpus_dir: str | Path,
    cap_bytes: int | None = None,
    strict: bool = False,
) -> list[Session]:
    dirs = iter_session_dirs(corpus_dir)
    return [load_session(d, cap_bytes=cap_bytes, strict=strict) for d in dirs]
