"""Deterministic synthetic workload generator.

Each profile describes one workload family: per-second symbol rates, I/O
throughput, CPU and resident-set behavior, and an optional encryption onset.
A session is generated second by second: scheduled call stanzas are written
as function-graph text whose top-level durations tile each second exactly,
so replayed timestamps land on window boundaries; resource samples are
emitted every 100 ms with exact cumulative counters.  Everything derives
from seeded generators, so a (manifest, seed) pair reproduces the corpus
byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .defaults import DEFAULT_MANIFEST, DEFAULT_WINDOW_US
from .errors import InvalidProfile, ManifestError
from .ingest import ENTRY, EXIT, LEAF, ResourceSample, TraceEvent, \
    format_trace, write_resources

SAMPLE_PERIOD_US = 100_000

# Quiet floor present in every session (scaled by the profile's chatter
# factor); also the whole pre-onset mix for encrypting profiles.
BASELINE_RATES = {
    "kfree": 8.0,
    "mutex_unlock": 10.0,
    "rcu_all_qs": 6.0,
    "switch_mm_irqs_off": 7.0,
    "wake_up_common": 5.0,
    "raw_spin_lock_irq": 6.0,
    "enter_lazy_tlb": 4.0,
    "vfs_read": 3.0,
    "kmalloc": 4.0,
    "ktime_get": 6.0,
}

PRE_ONSET_CPU = 2.0
PRE_ONSET_READ_KBS = 4.0
PRE_ONSET_WRITE_KBS = 2.0
READ_SYSCALL_BYTES = 4096

# Callees for nested stanzas; a 3-deep chain gives call graphs interior
# nodes so path-based metrics are non-trivial on active windows.
NEST_MID = "security_file_permission"
NEST_LEAF = "_raw_spin_lock"
FILLER = "schedule"   # housekeeping symbol: excluded from feature counts

LABEL_ENC = "encrypted"
LABEL_NON = "non-encrypted"

_PROFILE_KINDS = ("benign", "crypto_tool", "ransomware")


@dataclass
class WorkloadProfile:
    name: str
    kind: str
    duration_s: int
    user: str
    binary: str
    path_scope: str
    kernel_versions: list[str]
    onset_frac: float
    cpu_percent: float
    rss_kb: int
    rss_peak_kb: int
    ramp_s: float
    read_kbs: float
    write_kbs: float | None
    write_block: int
    sleep_ms: int
    chatter: float
    rates: dict[str, float]
    stanza_depth: int
    repetitions: int | None = None

    @classmethod
    def from_obj(cls, obj: dict) -> "WorkloadProfile":
        try:
            p = cls(
                name=str(obj["name"]),
                kind=str(obj["kind"]),
                duration_s=int(obj.get("duration_s", 24)),
                user=str(obj.get("user", "u3")),
                binary=str(obj.get("binary", obj["name"])),
                path_scope=str(obj.get("path_scope", "$HOME/**")),
                kernel_versions=list(obj.get("kernel_versions", ["5.15"])),
                onset_frac=float(obj.get("onset_frac", 0.0)),
                cpu_percent=float(obj.get("cpu_percent", 3.0)),
                rss_kb=int(obj.get("rss_kb", 40_000)),
                rss_peak_kb=int(obj.get("rss_peak_kb") or obj.get("rss_kb", 40_000)),
                ramp_s=float(obj.get("ramp_s", 1.5)),
                read_kbs=float(obj.get("read_kbs", 4.0)),
                write_kbs=(None if obj.get("write_kbs") is None
                           else float(obj["write_kbs"])),
                write_block=int(obj.get("write_block", 4096)),
                sleep_ms=int(obj.get("sleep_ms", 0)),
                chatter=float(obj.get("chatter", 1.0)),
                rates={str(k): float(v)
                       for k, v in (obj.get("rates") or {}).items()},
                stanza_depth=int(obj.get("stanza_depth", 1)),
                repetitions=(None if obj.get("repetitions") is None
                             else int(obj["repetitions"])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidProfile(f"bad profile field: {exc}") from exc
        p.validate()
        return p

    def validate(self) -> None:
        if self.kind not in _PROFILE_KINDS:
            raise InvalidProfile(f"{self.name}: unknown kind {self.kind!r}")
        if self.duration_s <= 0:
            raise InvalidProfile(f"{self.name}: duration must be positive")
        if not self.kernel_versions:
            raise InvalidProfile(f"{self.name}: kernel_versions empty")
        if not 0.0 <= self.onset_frac < 1.0:
            raise InvalidProfile(f"{self.name}: onset_frac outside [0, 1)")
        if self.write_block <= 0 or self.sleep_ms < 0:
            raise InvalidProfile(f"{self.name}: bad write pacing")
        if self.write_kbs is None and self.sleep_ms == 0:
            raise InvalidProfile(
                f"{self.name}: throttled write needs sleep_ms > 0")
        if any(v < 0 for v in self.rates.values()):
            raise InvalidProfile(f"{self.name}: negative symbol rate")

    @property
    def encrypting(self) -> bool:
        return self.kind != "benign"

    def write_bytes_per_s(self) -> float:
        """Throttled profiles pace one block per sleep interval."""
        if self.write_kbs is None:
            return self.write_block * (1000.0 / self.sleep_ms)
        return self.write_kbs * 1000.0

    def onset_us(self, window_us: int = DEFAULT_WINDOW_US) -> int | None:
        """Onset aligned up to the next window boundary."""
        if not self.encrypting:
            return None
        raw = self.onset_frac * self.duration_s * 1e6
        return int(np.ceil(raw / window_us)) * window_us


@dataclass
class GroundTruth:
    label: str
    onset_us: int | None


@dataclass
class Manifest:
    seed: int
    repetitions: int
    window_us: int
    capture_cap_bytes: int | None
    profiles: list[WorkloadProfile]

    @classmethod
    def from_obj(cls, obj: dict) -> "Manifest":
        try:
            profiles = [WorkloadProfile.from_obj(p) for p in obj["profiles"]]
            return cls(
                seed=int(obj.get("seed", 42)),
                repetitions=int(obj.get("repetitions", 3)),
                window_us=int(obj.get("window_us", DEFAULT_WINDOW_US)),
                capture_cap_bytes=(
                    None if obj.get("capture_cap_bytes") is None
                    else int(obj["capture_cap_bytes"])),
                profiles=profiles,
            )
        except InvalidProfile:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"bad manifest field: {exc}") from exc


def default_manifest() -> Manifest:
    return Manifest.from_obj(DEFAULT_MANIFEST)


def load_manifest(path: str | Path) -> Manifest:
    try:
        obj = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ManifestError(f"unreadable manifest {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ManifestError(f"{path}: manifest root must be a mapping")
    return Manifest.from_obj(obj)


def write_manifest(manifest_obj: dict, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(manifest_obj, sort_keys=False))


# ---------------------------------------------------------------------------
# session synthesis
# ---------------------------------------------------------------------------

@dataclass
class SessionBundle:
    meta: dict
    events: list[TraceEvent] = field(repr=False, default_factory=list)
    samples: list[ResourceSample] = field(repr=False, default_factory=list)
    truth: GroundTruth | None = None


def _mix_for_second(profile: WorkloadProfile, active: bool) -> dict[str, float]:
    mix = {s: r * profile.chatter for s, r in BASELINE_RATES.items()}
    if active:
        for s, r in profile.rates.items():
            mix[s] = mix.get(s, 0.0) + r
    return mix


def _emit_stanza(events, comm, pid, cpu, sym, nested, rng) -> int:
    """Append one stanza; durations in integer thousandths of a us."""
    if not nested:
        cost = int(rng.integers(800, 4200))
        events.append(TraceEvent(comm, pid, cpu, LEAF, sym, 0, 0.0,
                                 cost / 1000.0))
        return cost
    leaf = int(rng.integers(300, 900))
    mid = leaf + int(rng.integers(200, 600))
    root = mid + int(rng.integers(300, 900))
    events.append(TraceEvent(comm, pid, cpu, ENTRY, sym, 0, 0.0, None))
    events.append(TraceEvent(comm, pid, cpu, ENTRY, NEST_MID, 1, 0.0, None))
    events.append(TraceEvent(comm, pid, cpu, LEAF, NEST_LEAF, 2, 0.0,
                             leaf / 1000.0))
    events.append(TraceEvent(comm, pid, cpu, EXIT, NEST_MID, 1, 0.0,
                             mid / 1000.0))
    events.append(TraceEvent(comm, pid, cpu, EXIT, sym, 0, 0.0, root / 1000.0))
    return root


def generate(profile: WorkloadProfile, seed_key: list[int], kernel_ver: str,
             session_id: str, window_us: int = DEFAULT_WINDOW_US,
             capture_cap_bytes: int | None = None) -> SessionBundle:
    """Build one deterministic session for a profile."""
    profile.validate()
    rng = np.random.default_rng(seed_key)
    comm = profile.binary
    pid = int(rng.integers(2000, 30000))
    cpu = int(rng.integers(0, 4))
    onset = profile.onset_us(window_us)
    duration_us = profile.duration_s * 1_000_000

    events: list[TraceEvent] = []
    for sec in range(profile.duration_s):
        active = onset is None or sec * 1_000_000 >= onset
        mix = _mix_for_second(profile, active)
        schedule: list[str] = []
        for sym in sorted(mix):
            schedule.extend([sym] * int(rng.poisson(mix[sym])))
        order = rng.permutation(len(schedule))
        spent = 0
        for oi in order:
            sym = schedule[int(oi)]
            nested = (profile.stanza_depth >= 2 and active
                      and rng.random() < 0.35)
            spent += _emit_stanza(events, comm, pid, cpu, sym, nested, rng)
        # one idle leaf pads the second so replay lands on the boundary
        filler = 1_000_000_000 - spent
        if filler < 0:
            raise InvalidProfile(
                f"{profile.name}: stanza cost overflows a second")
        events.append(TraceEvent(comm, pid, cpu, LEAF, FILLER, 0, 0.0,
                                 filler / 1000.0))

    samples: list[ResourceSample] = []
    rb = wb = 0.0
    rc = wc = 0.0
    rss_base = profile.rss_kb * 1024
    rss_peak = profile.rss_peak_kb * 1024
    for ts in range(0, duration_us + 1, SAMPLE_PERIOD_US):
        t_s = ts / 1e6
        active = onset is None or ts > onset
        if ts > 0:
            if active:
                read_bps = profile.read_kbs * 1000.0
                write_bps = profile.write_bytes_per_s()
            else:
                read_bps = PRE_ONSET_READ_KBS * 1000.0
                write_bps = PRE_ONSET_WRITE_KBS * 1000.0
            rb += read_bps * (SAMPLE_PERIOD_US / 1e6)
            wb += write_bps * (SAMPLE_PERIOD_US / 1e6)
            rc = rb / READ_SYSCALL_BYTES
            wc = wb / profile.write_block
        cpu_now = profile.cpu_percent if active else PRE_ONSET_CPU
        cpu_now = max(0.0, cpu_now + float(rng.uniform(-0.4, 0.4)))
        if onset is not None and ts > onset:
            frac = min(1.0, (ts - onset) / (profile.ramp_s * 1e6))
            rss_now = rss_base + (rss_peak - rss_base) * frac
        else:
            rss_now = float(rss_base)
        rss_now = rss_now * (1.0 + float(rng.uniform(-0.004, 0.004)))
        # vms tracks reserved address space (arenas, mappings), which moves
        # with allocator layout rather than the resident working set
        vms_now = 52_428_800 + int(rng.uniform(160e6, 400e6))
        samples.append(ResourceSample(
            timestamp_us=int(ts),
            cpu_percent=round(cpu_now, 2),
            rss=int(rss_now),
            vms=vms_now,
            read_count=int(rc),
            write_count=int(wc),
            read_bytes=int(rb),
            write_bytes=int(wb),
        ))

    label = LABEL_ENC if profile.encrypting else LABEL_NON
    meta = {
        "session_id": session_id,
        "label": label,
        "kind": profile.kind,
        "profile": profile.name,
        "user": profile.user,
        "binary": profile.binary,
        "path_scope": profile.path_scope,
        "kernel_ver": kernel_ver,
        "onset_us": onset,
        "seed_key": [int(v) for v in seed_key],
        "window_us": window_us,
        "capture_cap_bytes": capture_cap_bytes,
    }
    bundle = SessionBundle(meta=meta, events=events, samples=samples,
                           truth=GroundTruth(label, onset))
    if profile.encrypting:
        _check_label_fidelity(bundle, profile, onset, window_us)
    return bundle


def _check_label_fidelity(bundle: SessionBundle, profile: WorkloadProfile,
                          onset: int, window_us: int) -> None:
    """Some post-onset window must differ from every pre-onset window in
    write-related evidence, otherwise the corpus would be unlearnable."""
    per_window: dict[int, list[float]] = {}
    prev = bundle.samples[0]
    for s in bundle.samples[1:]:
        w = int((s.timestamp_us - 1) // window_us)
        row = per_window.setdefault(w, [0.0, 0.0])
        row[0] += s.write_bytes - prev.write_bytes
        row[1] += s.write_count - prev.write_count
        prev = s
    pre = {tuple(v) for w, v in per_window.items()
           if (w + 1) * window_us <= onset}
    post = [tuple(v) for w, v in per_window.items()
            if (w + 1) * window_us > onset]
    if not any(p not in pre for p in post):
        raise InvalidProfile(
            f"{profile.name}: post-onset windows indistinguishable from "
            "pre-onset in write evidence")


# ---------------------------------------------------------------------------
# corpus assembly
# ---------------------------------------------------------------------------

def write_session(bundle: SessionBundle, session_dir: str | Path) -> Path:
    d = Path(session_dir)
    d.mkdir(parents=True, exist_ok=True)
    (d / "meta.json").write_text(
        json.dumps(bundle.meta, sort_keys=True, indent=1) + "\n")
    (d / "trace.txt").write_text(format_trace(bundle.events) + "\n")
    write_resources(d / "resources.csv", bundle.samples)
    return d


def corpus(manifest: Manifest, out_dir: str | Path) -> list[Path]:
    """Profiles x repetitions, manifest order, derived per-run seeds."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for pi, profile in enumerate(manifest.profiles):
        reps = (profile.repetitions if profile.repetitions is not None
                else manifest.repetitions)
        for rep in range(reps):
            kernel = profile.kernel_versions[rep % len(profile.kernel_versions)]
            sid = f"{profile.name}-r{rep}"
            bundle = generate(
                profile, [manifest.seed, pi, rep], kernel, sid,
                window_us=manifest.window_us,
                capture_cap_bytes=manifest.capture_cap_bytes)
            written.append(write_session(bundle, out / sid))
    return written
