"""Windowing and the design-matrix pipeline.

Sessions become fixed-interval windows (default 1 s); each window yields one
raw feature vector: 7 resource counters, 4 call-graph scalars, and one
frequency column per configured symbol.  The dataset pipeline then applies,
in order: missing-data drops, PCA outlier removal (on a throwaway all-rows
scaling), session-level class balancing, session-partitioned stratified
splitting, and a final MinMax scaler fitted on training rows only.

Row bookkeeping: every matrix row carries a WindowInfo with the window's
source session, time bounds, write-activity timestamps, and stratum tuple
⟨kernel_ver, binary, path_scope, trace_len_bin⟩, so downstream decision and
latency accounting never re-derives window geometry.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .callgraph import aggregate_metrics, build_graph
from .defaults import GRAPH_COLUMNS, RESOURCE_COLUMNS, DEPLOYED_SYMBOLS
from .errors import (
    EmptyMatrix,
    EmptySession,
    InsufficientSessions,
    NotFitted,
    SchemaMismatch,
    TooFewRows,
)
from .ingest import ENTRY, LEAF, Session, SymbolKeys, TraceEvent

LABEL_ENC = "encrypted"
LABEL_NON = "non-encrypted"

FEATURE36_COLUMNS = RESOURCE_COLUMNS + ("betweenness", "clustering") + DEPLOYED_SYMBOLS

# window keep-rule: any activity on these symbol prefixes counts as a file touch
_ANCHOR_PREFIXES = ("fsnotify", "locks_")


def schema_hash(columns) -> str:
    return hashlib.sha256("\n".join(columns).encode()).hexdigest()


def raw_schema(keys: SymbolKeys) -> tuple[str, ...]:
    return RESOURCE_COLUMNS + GRAPH_COLUMNS + tuple(keys.symbols)


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------

@dataclass
class Window:
    session_id: str
    index: int
    start_us: float
    end_us: float
    events: list[TraceEvent] = field(repr=False, default_factory=list)
    cpu_percent: float = 0.0
    rss: float = 0.0
    vms: float = 0.0
    read_count: float = 0.0
    write_count: float = 0.0
    read_bytes: float = 0.0
    write_bytes: float = 0.0
    rss_delta: float = 0.0
    partial: bool = False
    quality_flag: bool = False
    first_write_ts: float | None = None
    cum_write_bytes: int = 0
    label: str | None = None


@dataclass
class WindowInfo:
    session_id: str
    index: int
    start_us: float
    end_us: float
    partial: bool
    quality_flag: bool
    first_write_ts: float | None
    cum_write_bytes: int
    label: str
    stratum: tuple[str, str, str, str]


def filter_housekeeping(events: list[TraceEvent], keys: SymbolKeys) -> list[TraceEvent]:
    excluded = set(keys.excluded)
    if not excluded:
        return list(events)
    return [ev for ev in events if ev.symbol not in excluded]


def window_session(session: Session, window_us: int = 1_000_000,
                   events: list[TraceEvent] | None = None) -> list[Window]:
    """Slice one session into consecutive windows with resource deltas.

    `events` overrides the session event list (callers pass the
    housekeeping-filtered stream); the time span still covers the session.
    """
    evs = session.events if events is None else events
    if not session.events:
        raise EmptySession(f"{session.session_id}: no events to window")
    span_end = session.end_us
    if session.samples:
        span_end = max(span_end, float(session.samples[-1].timestamp_us))
    n_windows = max(1, int(math.ceil(span_end / window_us)))

    samples = session.samples
    base_wb = samples[0].write_bytes if samples else 0
    windows: list[Window] = []
    ev_pos = 0
    evs_sorted = sorted(evs, key=lambda e: e.ts_us)
    si = 0
    prev_sample = None
    for w in range(n_windows):
        start = float(w * window_us)
        end = float((w + 1) * window_us)
        win = Window(session.session_id, w, start, end)
        win.partial = span_end < end
        wevs = []
        while ev_pos < len(evs_sorted) and evs_sorted[ev_pos].ts_us < end:
            if evs_sorted[ev_pos].ts_us >= start:
                wevs.append(evs_sorted[ev_pos])
            ev_pos += 1
        win.events = wevs

        in_win = []
        last_before = prev_sample
        while si < len(samples) and samples[si].timestamp_us <= end:
            in_win.append(samples[si])
            si += 1
        if in_win:
            prev_sample = in_win[-1]
        cur = prev_sample
        if cur is None:
            win.quality_flag = True
        else:
            prev_wb = last_before.write_bytes if last_before else base_wb
            prev_rb = last_before.read_bytes if last_before else (
                samples[0].read_bytes if samples else 0)
            prev_wc = last_before.write_count if last_before else (
                samples[0].write_count if samples else 0)
            prev_rc = last_before.read_count if last_before else (
                samples[0].read_count if samples else 0)
            prev_rss = last_before.rss if last_before else cur.rss
            win.rss = float(cur.rss)
            win.vms = float(cur.vms)
            win.read_bytes = float(cur.read_bytes - prev_rb)
            win.write_bytes = float(cur.write_bytes - prev_wb)
            win.read_count = float(cur.read_count - prev_rc)
            win.write_count = float(cur.write_count - prev_wc)
            win.rss_delta = float(cur.rss - prev_rss)
            win.cum_write_bytes = int(cur.write_bytes - base_wb)
            if in_win:
                win.cpu_percent = float(
                    sum(s.cpu_percent for s in in_win) / len(in_win))
                wb_prev = prev_wb
                for s in in_win:
                    if s.write_bytes > wb_prev:
                        win.first_write_ts = float(s.timestamp_us)
                        break
                    wb_prev = s.write_bytes
            else:
                win.quality_flag = True

        if session.label:
            if session.encrypted:
                onset = session.onset_us if session.onset_us is not None else 0
                win.label = LABEL_ENC if end > onset else LABEL_NON
            else:
                win.label = LABEL_NON
        windows.append(win)
    return windows


def _anchor_counts(win: Window) -> int:
    c = 0
    for ev in win.events:
        if ev.kind in (ENTRY, LEAF) and ev.symbol.startswith(_ANCHOR_PREFIXES):
            c += 1
    return c


def window_is_anchored(win: Window) -> bool:
    if _anchor_counts(win) > 0:
        return True
    if (win.read_count > 0 or win.write_count > 0
            or win.read_bytes > 0 or win.write_bytes > 0):
        return True
    return win.cpu_percent > 0 or win.rss_delta > 0


def pid_anchored_filter(windows: list[Window]) -> list[Window]:
    """Keep only windows showing file-touch or I/O evidence."""
    return [w for w in windows if window_is_anchored(w)]


def extract_raw(win: Window, keys: SymbolKeys,
                schema: tuple[str, ...] | None = None) -> np.ndarray:
    sch = schema if schema is not None else raw_schema(keys)
    expected = raw_schema(keys)
    if tuple(sch) != expected:
        raise SchemaMismatch("window schema does not match the key list")
    counts: dict[str, int] = {}
    for ev in win.events:
        if ev.kind in (ENTRY, LEAF):
            counts[ev.symbol] = counts.get(ev.symbol, 0) + 1
    gm = aggregate_metrics(build_graph(win.events))
    vec = np.zeros(len(sch), np.float64)
    vec[0] = win.cpu_percent
    vec[1] = win.rss
    vec[2] = win.vms
    vec[3] = win.read_count
    vec[4] = win.write_count
    vec[5] = win.read_bytes
    vec[6] = win.write_bytes
    vec[7] = gm.betweenness
    vec[8] = gm.clustering
    vec[9] = gm.avg_shortest_path
    vec[10] = gm.total_duration_us
    for j, sym in enumerate(keys.symbols):
        vec[11 + j] = float(counts.get(sym, 0))
    return vec


# ---------------------------------------------------------------------------
# design matrix
# ---------------------------------------------------------------------------

@dataclass
class DesignMatrix:
    schema: tuple[str, ...]
    X: np.ndarray
    info: list[WindowInfo]

    @property
    def labels(self) -> list[str]:
        return [i.label for i in self.info]

    @property
    def session_ids(self) -> list[str]:
        return [i.session_id for i in self.info]

    def y(self) -> np.ndarray:
        return np.array([1 if i.label == LABEL_ENC else 0 for i in self.info],
                        np.int8)

    def take(self, mask: np.ndarray) -> "DesignMatrix":
        idx = np.flatnonzero(mask)
        return DesignMatrix(self.schema, self.X[idx],
                            [self.info[i] for i in idx])


def trace_len_bins(sessions: list[Session]) -> dict[str, str]:
    """Quartile-bin sessions by event count (corpus-relative)."""
    counts = np.array([len(s.events) for s in sessions], np.float64)
    q1, q2, q3 = np.percentile(counts, [25, 50, 75])
    out = {}
    for s in sessions:
        c = len(s.events)
        if c <= q1:
            b = "len_q1"
        elif c <= q2:
            b = "len_q2"
        elif c <= q3:
            b = "len_q3"
        else:
            b = "len_q4"
        out[s.session_id] = b
    return out


def featurize_corpus(sessions: list[Session], keys: SymbolKeys,
                     window_us: int = 1_000_000) -> DesignMatrix:
    """Sessions -> anchored, labeled raw design matrix."""
    if not sessions:
        raise EmptyMatrix("no sessions to featurize")
    schema = raw_schema(keys)
    bins = trace_len_bins(sessions)
    rows: list[np.ndarray] = []
    info: list[WindowInfo] = []
    for s in sessions:
        evs = filter_housekeeping(s.events, keys)
        wins = pid_anchored_filter(window_session(s, window_us, events=evs))
        stratum = (s.kernel_ver, s.binary, s.path_scope, bins[s.session_id])
        for w in wins:
            rows.append(extract_raw(w, keys, schema))
            info.append(WindowInfo(
                session_id=s.session_id, index=w.index, start_us=w.start_us,
                end_us=w.end_us, partial=w.partial,
                quality_flag=w.quality_flag, first_write_ts=w.first_write_ts,
                cum_write_bytes=w.cum_write_bytes,
                label=w.label or LABEL_NON, stratum=stratum))
    if not rows:
        raise EmptyMatrix("no windows survived the anchor filter")
    return DesignMatrix(schema, np.vstack(rows), info)


def project36(dm: DesignMatrix) -> DesignMatrix:
    cols = []
    have = {c: j for j, c in enumerate(dm.schema)}
    for c in FEATURE36_COLUMNS:
        if c not in have:
            raise SchemaMismatch(f"schema lacks column {c!r}")
        cols.append(have[c])
    return DesignMatrix(tuple(FEATURE36_COLUMNS), dm.X[:, cols], list(dm.info))


def project_columns(dm: DesignMatrix, columns) -> DesignMatrix:
    have = {c: j for j, c in enumerate(dm.schema)}
    idx = []
    for c in columns:
        if c not in have:
            raise SchemaMismatch(f"schema lacks column {c!r}")
        idx.append(have[c])
    return DesignMatrix(tuple(columns), dm.X[:, idx], list(dm.info))


# ---------------------------------------------------------------------------
# cleaning
# ---------------------------------------------------------------------------

def drop_missing(dm: DesignMatrix, threshold: float = 0.20
                 ) -> tuple[DesignMatrix, dict]:
    """Drop columns then rows whose missing fraction strictly exceeds."""
    X = dm.X
    n, d = X.shape
    miss = np.isnan(X)
    col_frac = miss.sum(axis=0) / max(1, n)
    keep_cols = np.flatnonzero(~(col_frac > threshold))
    dropped_cols = [dm.schema[j] for j in np.flatnonzero(col_frac > threshold)]
    X2 = X[:, keep_cols]
    miss2 = np.isnan(X2)
    row_frac = miss2.sum(axis=1) / max(1, X2.shape[1])
    keep_rows = np.flatnonzero(~(row_frac > threshold))
    report = {
        "dropped_columns": dropped_cols,
        "dropped_rows": int(n - keep_rows.size),
    }
    out = DesignMatrix(tuple(dm.schema[j] for j in keep_cols),
                       X2[keep_rows], [dm.info[i] for i in keep_rows])
    return out, report


@dataclass
class ScalerState:
    columns: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray

    def to_json(self) -> str:
        return json.dumps({
            "columns": list(self.columns),
            "mins": [float(v) for v in self.mins],
            "maxs": [float(v) for v in self.maxs],
        }, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ScalerState":
        obj = json.loads(text)
        return cls(tuple(obj["columns"]),
                   np.array(obj["mins"], np.float64),
                   np.array(obj["maxs"], np.float64))


def fit_minmax(X: np.ndarray, columns) -> ScalerState:
    if X.size == 0:
        raise EmptyMatrix("cannot fit a scaler on an empty matrix")
    return ScalerState(tuple(columns), X.min(axis=0), X.max(axis=0))


def apply_minmax(state: ScalerState, X: np.ndarray) -> np.ndarray:
    if X.shape[1] != state.mins.size:
        raise NotFitted("scaler width does not match the matrix")
    span = state.maxs - state.mins
    out = np.zeros_like(X, np.float64)
    nz = span != 0
    out[:, nz] = (X[:, nz] - state.mins[nz]) / span[nz]
    return out


def pca_outlier_mask(X: np.ndarray, percentile: float = 95.0) -> np.ndarray:
    """Keep-mask dropping the rows farthest in 2-component PC space.

    Drops n - ceil(percentile/100 * n) rows; equal distances keep the
    earlier row.
    """
    n = X.shape[0]
    if n < 3:
        raise TooFewRows("outlier removal needs at least 3 rows")
    centered = X - X.mean(axis=0)
    # right singular vectors give the principal directions
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    k = min(2, vt.shape[0])
    scores = centered @ vt[:k].T
    dist = np.sqrt((scores * scores).sum(axis=1))
    n_keep = int(math.ceil(percentile / 100.0 * n))
    n_drop = n - n_keep
    mask = np.ones(n, bool)
    if n_drop > 0:
        order = sorted(range(n), key=lambda i: (-dist[i], -i))
        mask[order[:n_drop]] = False
    return mask


def pca_outlier_removal(dm: DesignMatrix, percentile: float = 95.0
                        ) -> tuple[DesignMatrix, dict]:
    scaler = fit_minmax(dm.X, dm.schema)
    mask = pca_outlier_mask(apply_minmax(scaler, dm.X), percentile)
    report = {"outliers_dropped": int((~mask).sum())}
    return dm.take(mask), report


# ---------------------------------------------------------------------------
# balancing
# ---------------------------------------------------------------------------

def _largest_remainder(total: int, weights: list[float]) -> list[int]:
    """Integer allocation of `total` proportional to weights (ties: earlier)."""
    s = sum(weights)
    if s <= 0 or total <= 0:
        return [0] * len(weights)
    ideal = [total * w / s for w in weights]
    base = [int(math.floor(v)) for v in ideal]
    rem = total - sum(base)
    order = sorted(range(len(weights)),
                   key=lambda i: (-(ideal[i] - base[i]), i))
    for i in order[:rem]:
        base[i] += 1
    return base


def balance_downsample(dm: DesignMatrix, seed: int = 42,
                       cap_frac: float = 0.5) -> tuple[DesignMatrix, dict]:
    """Downsample the majority label to the minority row count.

    Majority rows are allocated per stratum proportionally to stratum mass
    (largest-remainder rounding, quota capped at stratum mass with excess
    redistributed).  Inside a stratum, sessions are visited in a seeded
    shuffle order and taken whole, each capped at ceil(cap_frac * quota);
    a top-up pass ignores the cap if the caps alone cannot fill the quota.
    Kept rows preserve original order.
    """
    y = dm.y()
    n_enc = int((y == 1).sum())
    n_non = int((y == 0).sum())
    if n_enc == n_non:
        return dm, {"target": n_enc, "quotas": {}}
    minority = 1 if n_enc < n_non else 0
    target = min(n_enc, n_non)
    maj_rows = np.flatnonzero(y != minority)

    strata: dict[tuple, list[int]] = {}
    for i in maj_rows:
        strata.setdefault(dm.info[i].stratum, []).append(int(i))
    skeys = list(strata)
    masses = [len(strata[k]) for k in skeys]
    quotas = _largest_remainder(target, [float(m) for m in masses])
    # cap quotas at stratum mass, redistributing overflow among the rest
    for _ in range(len(skeys)):
        excess = 0
        spare = []
        for i, k in enumerate(skeys):
            if quotas[i] > masses[i]:
                excess += quotas[i] - masses[i]
                quotas[i] = masses[i]
            elif quotas[i] < masses[i]:
                spare.append(i)
        if excess == 0 or not spare:
            break
        add = _largest_remainder(
            excess, [float(masses[i] - quotas[i]) for i in spare])
        for j, i in enumerate(spare):
            quotas[i] = min(masses[i], quotas[i] + add[j])

    keep = set(int(i) for i in np.flatnonzero(y == minority))
    alloc_report = {}
    for si, k in enumerate(skeys):
        quota = quotas[si]
        alloc_report["|".join(k)] = quota
        if quota <= 0:
            continue
        by_session: dict[str, list[int]] = {}
        for i in strata[k]:
            by_session.setdefault(dm.info[i].session_id, []).append(i)
        order = sorted(by_session)
        rng = np.random.default_rng([seed, si])
        rng.shuffle(order)
        cap = max(1, int(math.ceil(cap_frac * quota)))
        remaining = quota
        taken: dict[str, int] = {}
        for sid in order:
            if remaining <= 0:
                break
            take = min(len(by_session[sid]), cap, remaining)
            taken[sid] = take
            remaining -= take
        if remaining > 0:
            for sid in order:
                if remaining <= 0:
                    break
                extra = min(len(by_session[sid]) - taken.get(sid, 0), remaining)
                taken[sid] = taken.get(sid, 0) + extra
                remaining -= extra
        for sid, cnt in taken.items():
            for i in by_session[sid][:cnt]:
                keep.add(i)

    mask = np.zeros(len(dm.info), bool)
    mask[sorted(keep)] = True
    return dm.take(mask), {"target": target, "quotas": alloc_report}


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def split_sessions(dm: DesignMatrix, seed: int = 42
                   ) -> dict[str, "DesignMatrix"]:
    """80/10/10 split, stratified by (label, stratum), partitioned by session.

    Ratios are enforced per label (within rounding); strata are interleaved
    round-robin inside each label so every split samples the stratum mix as
    evenly as the session counts allow.  Tiny strata cannot starve val/test:
    any label with >= 3 sessions keeps at least one session in each split.
    """
    sess_label: dict[str, str] = {}
    sess_stratum: dict[str, tuple] = {}
    for i in dm.info:
        # session-level label: encrypted if any window is
        if i.session_id not in sess_label or i.label == LABEL_ENC:
            sess_label[i.session_id] = i.label
        sess_stratum[i.session_id] = i.stratum
    per_label: dict[str, int] = {}
    for sid, lab in sess_label.items():
        per_label[lab] = per_label.get(lab, 0) + 1
    for lab, cnt in per_label.items():
        if cnt < 3:
            raise InsufficientSessions(
                f"label {lab!r} has {cnt} session(s); need >= 3")

    assign: dict[str, str] = {}
    for li, lab in enumerate(sorted(per_label)):
        strata: dict[tuple, list[str]] = {}
        for sid in sorted(sess_label):
            if sess_label[sid] == lab:
                strata.setdefault(sess_stratum[sid], []).append(sid)
        rng = np.random.default_rng([seed, li])
        queues = []
        for key in sorted(strata):
            sids = strata[key]
            rng.shuffle(sids)
            queues.append(sids)
        order: list[str] = []
        while any(queues):
            for q in queues:
                if q:
                    order.append(q.pop(0))
        counts = _largest_remainder(len(order), [0.8, 0.1, 0.1])
        for slot in (1, 2):
            if counts[slot] == 0 and counts[0] > 1:
                counts[slot] = 1
                counts[0] -= 1
        cursor = 0
        for name, cnt in zip(("train", "val", "test"), counts):
            for sid in order[cursor:cursor + cnt]:
                assign[sid] = name
            cursor += cnt
    out = {}
    for name in ("train", "val", "test"):
        mask = np.array([assign[i.session_id] == name for i in dm.info], bool)
        out[name] = dm.take(mask)
    return out


# ---------------------------------------------------------------------------
# end-to-end dataset preparation
# ---------------------------------------------------------------------------

@dataclass
class PreparedDataset:
    splits: dict[str, DesignMatrix]        # scaled feature values
    scaler: ScalerState
    schema: tuple[str, ...]
    report: dict


def prepare_dataset(dm: DesignMatrix, seed: int = 42,
                    missing_threshold: float = 0.20,
                    pca_percentile: float = 95.0,
                    cap_frac: float = 0.5) -> PreparedDataset:
    dm1, miss_rep = drop_missing(dm, missing_threshold)
    dm2, out_rep = pca_outlier_removal(dm1, pca_percentile)
    dm3, bal_rep = balance_downsample(dm2, seed=seed, cap_frac=cap_frac)
    splits = split_sessions(dm3, seed=seed)
    scaler = fit_minmax(splits["train"].X, dm3.schema)
    scaled = {
        name: DesignMatrix(part.schema, apply_minmax(scaler, part.X),
                           part.info)
        for name, part in splits.items()
    }
    report = {
        "missing": miss_rep,
        "outliers": out_rep,
        "balance": bal_rep,
        "split_rows": {k: int(v.X.shape[0]) for k, v in scaled.items()},
    }
    return PreparedDataset(scaled, scaler, dm3.schema, report)


# ---------------------------------------------------------------------------
# on-disk formats
# ---------------------------------------------------------------------------

def write_matrix_csv(path: str | Path, dm: DesignMatrix) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(dm.schema) + ["label", "session_id", "stratum"])
        for row, info in zip(dm.X, dm.info):
            vals = ["" if np.isnan(v) else repr(float(v)) for v in row]
            w.writerow(vals + [info.label, info.session_id,
                               "|".join(info.stratum)])


def read_matrix_csv(path: str | Path) -> DesignMatrix:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[-3:] != ["label", "session_id", "stratum"]:
            raise SchemaMismatch("matrix csv lacks label/session_id/stratum")
        schema = tuple(header[:-3])
        rows = []
        info = []
        for rec in r:
            vals = [float(v) if v != "" else math.nan for v in rec[:-3]]
            rows.append(vals)
            stratum = tuple(rec[-1].split("|"))
            if len(stratum) != 4:
                stratum = (stratum + ("", "", "", ""))[:4]
            info.append(WindowInfo(
                session_id=rec[-2], index=len(info), start_us=0.0, end_us=0.0,
                partial=False, quality_flag=False, first_write_ts=None,
                cum_write_bytes=0, label=rec[-3], stratum=stratum))
    if not rows:
        raise EmptyMatrix(f"{path}: no data rows")
    return DesignMatrix(schema, np.array(rows, np.float64), info)


def write_schema_json(path: str | Path, raw_columns, deployed_columns) -> None:
    obj = {"raw": list(raw_columns), "deployed": list(deployed_columns)}
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
