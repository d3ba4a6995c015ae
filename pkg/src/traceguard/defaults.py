"""Bundled default configuration: symbol keys, schemas, policy, workloads.

Everything the CLI needs to run without external config files lives here.
All of it can be overridden by files (--keys / --policy / --manifest); these
values are only the shipped defaults.
"""

from __future__ import annotations

# Resource counter columns, in the order they appear in every matrix schema.
# Names match the resource log header (minus timestamp_us).
RESOURCE_COLUMNS = (
    "cpu_percent",
    "rss",
    "vms",
    "read_count",
    "write_count",
    "read_bytes",
    "write_bytes",
)

# Per-window call-graph scalars appended after the resource counters.
GRAPH_COLUMNS = (
    "betweenness",
    "clustering",
    "avg_shortest_path",
    "total_duration_us",
)

# The 27 trace symbols retained in the deployed 36-feature set (alongside the
# 7 resource counters and the first 2 graph scalars).
DEPLOYED_SYMBOLS = (
    "fsnotify_parent",
    "mod_node_page_state",
    "wake_up_common",
    "raw_spin_lock_irq",
    "raw_spin_trylock",
    "attach_entity_load_avg",
    "available_idle_cpu",
    "cpus_share_cache",
    "dnotify_flush",
    "enter_lazy_tlb",
    "fsnotify",
    "kfree",
    "kick_process",
    "kmalloc_slab",
    "lock_page_memcg",
    "locks_remove_posix",
    "lru_add_drain_cpu",
    "memcg_check_events",
    "mutex_unlock",
    "propagate_protected_usage",
    "put_cpu_partial",
    "rcu_all_qs",
    "rcu_segcblist_accelerate",
    "refill_stock",
    "switch_mm_irqs_off",
    "vma_interval_tree_augment_rotate",
    "x2apic_send_IPI",
)

# Additional symbols counted in the wide (raw) matrix.  Together with
# DEPLOYED_SYMBOLS this makes 102 symbol columns, i.e. a 113-column raw
# schema once the 7 resource counters and 4 graph scalars are prepended.
EXTRA_SYMBOLS = (
    # VFS / file I/O path
    "vfs_write",
    "vfs_read",
    "vfs_open",
    "ksys_write",
    "ksys_read",
    "generic_file_write_iter",
    "generic_file_read_iter",
    "generic_perform_write",
    "ext4_file_write_iter",
    "ext4_da_write_begin",
    "ext4_da_write_end",
    "file_update_time",
    "filemap_fault",
    "pagecache_get_page",
    "grab_cache_page_write_begin",
    "mark_page_accessed",
    "balance_dirty_pages_ratelimited",
    "do_writepages",
    "write_cache_pages",
    "copy_page_from_iter",
    # locks / notification
    "locks_remove_file",
    "locks_free_lock",
    "locks_alloc_lock",
    "fsnotify_destroy_marks",
    "inotify_handle_inode_event",
    "dnotify_handle_event",
    # memory management
    "kmalloc",
    "kmem_cache_alloc",
    "kmem_cache_free",
    "__alloc_pages",
    "get_page_from_freelist",
    "free_unref_page",
    "__free_pages",
    "lru_cache_add",
    "lru_add_drain",
    "handle_mm_fault",
    "do_anonymous_page",
    "alloc_pages_vma",
    "zap_pte_range",
    "page_add_file_rmap",
    "page_remove_rmap",
    "mem_cgroup_charge",
    "mem_cgroup_uncharge",
    "__mod_lruvec_state",
    "__mod_memcg_state",
    "vma_interval_tree_insert",
    # locking / scheduling / RCU
    "_raw_spin_lock",
    "_raw_spin_unlock",
    "_raw_spin_lock_irqsave",
    "_raw_spin_unlock_irqrestore",
    "mutex_lock",
    "down_read",
    "up_read",
    "down_write",
    "up_write",
    "__wake_up",
    "try_to_wake_up",
    "ttwu_do_activate",
    "select_task_rq_fair",
    "update_load_avg",
    "enqueue_entity",
    "dequeue_entity",
    "pick_next_task_fair",
    "finish_task_switch",
    "call_rcu",
    "rcu_core",
    # misc: crypto, uaccess, syscall plumbing
    "crypto_skcipher_encrypt",
    "crypto_shash_update",
    "sg_init_table",
    "copy_user_enhanced_fast_string",
    "ktime_get",
    "syscall_enter_from_user_mode",
    "__fget_light",
    "fput",
    "security_file_permission",
)

DEFAULT_SYMBOLS = DEPLOYED_SYMBOLS + EXTRA_SYMBOLS

# Housekeeping symbols: parsed like everything else but excluded from
# feature counting.  Idle and timer-tick noise would otherwise dominate
# per-window frequencies.
DEFAULT_EXCLUDED = (
    "schedule",
    "__schedule",
    "schedule_idle",
    "scheduler_tick",
    "do_idle",
    "cpuidle_enter_state",
    "native_safe_halt",
    "irq_enter",
    "irq_exit",
    "__softirqentry_text_start",
    "hrtimer_interrupt",
    "tick_sched_timer",
    "tick_nohz_idle_enter",
    "tick_nohz_idle_exit",
    "update_rq_clock",
    "clockevents_program_event",
    "rcu_idle_enter",
    "rcu_idle_exit",
)

# Default risk policy.  Impact defaults to 1.0 for any path not matched by
# an impact entry; the whitelist pins the one sanctioned encryption context.
DEFAULT_POLICY = {
    "tau": 0.50,
    "impact": [],
    "whitelist": [
        {"user": "u1", "app": "openssl", "path_scope": "$HOME/**"},
    ],
    "home_dirs": {},
}

DEFAULT_WINDOW_US = 1_000_000
DEFAULT_CAPTURE_CAP = 1 << 20  # 1 MiB of read+write bytes per session

KIB = 1024


def _profile(name, kind, **kw):
    base = {
        "name": name,
        "kind": kind,
        "duration_s": 24,
        "repetitions": None,  # None -> manifest-level repetitions
        "user": "u3",
        "binary": name.split("-")[0],
        "path_scope": "$HOME/**",
        "kernel_versions": ["5.15", "6.2", "4.19"],
        "onset_frac": 0.0 if kind == "benign" else 0.10,
        "cpu_percent": 3.0,
        "rss_kb": 40_000,
        "rss_peak_kb": None,  # None -> no ramp
        "ramp_s": 1.5,
        "read_kbs": 4.0,
        "write_kbs": 2.0,
        "write_block": 4096,
        "sleep_ms": 0,
        "chatter": 1.0,
        "rates": {},
        "stanza_depth": 1,
    }
    base.update(kw)
    if base["rss_peak_kb"] is None:
        base["rss_peak_kb"] = base["rss_kb"]
    return base


# Per-second symbol rates during the active phase.  The quiet baseline used
# before onset (and as the floor everywhere) lives in simgen.BASELINE_RATES.
#
# The picture these rates encode:
#   * dense encryption (crypto tools, ransomware families) runs in a cpu
#     band above the busiest benign job (the compiler's 55), most of it
#     with a resident-set ramp as a second tell; its allocation and
#     page-accounting rates sit at totals some benign profile also
#     reaches (kfree 100, refill 48, kmalloc_slab 42, lock_page 37,
#     memcg_check 29), so no churn column alone flags it;
#   * throttled/sparse/mmap encryption clones a benign partner (tar burst,
#     fio burst, python ETL, rsync respectively) in every deployed column
#     except a three-sided churn conjunction: allocation churn at the fio
#     burst's totals AND page-accounting churn at the tar burst's AND an
#     LRU-drain rate shared with the writeback twins;
#   * benign profiles raise at most two of those three sides at once, and
#     for each evasive scenario some benign profile pairs each single side
#     with that scenario's exact envelope, so every two-column projection
#     of an evasive window lands on benign ground.
#
# Rate entries add to chatter-scaled baselines (simgen.BASELINE_RATES), so
# matching a partner's per-second total on a baselined symbol means rate +
# 8 * chatter must agree, not the raw rate (kfree is the baselined one).
MANIFEST_PROFILES = [
    # --- benign -------------------------------------------------------
    _profile(
        "ls-scan", "benign", binary="ls", user="u1",
        cpu_percent=1.5, read_kbs=6, write_kbs=0.5,
        rates={"fsnotify": 3, "fsnotify_parent": 3, "kfree": 14,
               "lock_page_memcg": 4, "refill_stock": 9,
               "memcg_check_events": 5, "locks_remove_posix": 1,
               "vfs_read": 8, "mutex_unlock": 18},
    ),
    _profile(
        "grep-tree", "benign", binary="grep", user="u1",
        cpu_percent=6, rss_kb=42_000, read_kbs=130, write_kbs=1,
        rates={"fsnotify": 6, "fsnotify_parent": 5, "kfree": 24,
               "lock_page_memcg": 7, "refill_stock": 15,
               "memcg_check_events": 8, "locks_remove_posix": 2,
               "vfs_read": 30, "generic_file_read_iter": 28,
               "mark_page_accessed": 40, "mutex_unlock": 26},
        chatter=1.5,
    ),
    _profile(
        "python-etl", "benign", binary="python3", user="u3",
        repetitions=5,
        cpu_percent=18, rss_kb=85_000, read_kbs=60, write_kbs=35,
        write_block=8192,
        rates={"fsnotify": 10, "fsnotify_parent": 9, "kfree": 42,
               "lock_page_memcg": 37, "refill_stock": 26,
               "memcg_check_events": 29, "locks_remove_posix": 3,
               "mod_node_page_state": 14, "vfs_write": 4, "vfs_read": 9,
               "kmalloc": 30, "handle_mm_fault": 22, "mutex_unlock": 34},
        chatter=2.0,
    ),
    # same interpreter envelope, two churn postures: an in-memory
    # aggregation pass raises allocation and page-account churn together,
    # a snapshot flush raises LRU drain alone
    _profile(
        "python-agg", "benign", binary="python3", user="u3",
        repetitions=7, duration_s=12, path_scope="/srv/reports/**",
        cpu_percent=18, rss_kb=85_000, read_kbs=60, write_kbs=35,
        write_block=8192,
        rates={"fsnotify": 10, "fsnotify_parent": 9, "kfree": 128,
               "lock_page_memcg": 85, "refill_stock": 105,
               "memcg_check_events": 70, "locks_remove_posix": 3,
               "mod_node_page_state": 80, "vfs_write": 4, "vfs_read": 9,
               "kmalloc": 30, "handle_mm_fault": 22,
               "kmalloc_slab": 30, "mutex_unlock": 34},
        chatter=2.0,
    ),
    _profile(
        "python-checkpoint", "benign", binary="python3", user="u3",
        repetitions=3, duration_s=10, path_scope="/srv/state/**",
        cpu_percent=18, rss_kb=85_000, read_kbs=60, write_kbs=35,
        write_block=8192,
        rates={"fsnotify": 10, "fsnotify_parent": 9, "kfree": 42,
               "lock_page_memcg": 37, "refill_stock": 26,
               "memcg_check_events": 29, "locks_remove_posix": 3,
               "mod_node_page_state": 14, "lru_add_drain_cpu": 120,
               "vfs_write": 4, "vfs_read": 9,
               "kmalloc": 30, "handle_mm_fault": 22,
               "do_writepages": 60, "mutex_unlock": 34},
        chatter=2.0,
    ),
    _profile(
        "gcc-build", "benign", binary="gcc", user="u3",
        cpu_percent=55, rss_kb=140_000, read_kbs=90, write_kbs=60,
        write_block=16384,
        rates={"fsnotify": 14, "fsnotify_parent": 12, "kfree": 80,
               "lock_page_memcg": 15, "refill_stock": 48,
               "memcg_check_events": 16, "locks_remove_posix": 4,
               "mod_node_page_state": 20, "vfs_write": 4, "vfs_read": 6,
               "kmalloc": 38, "kmem_cache_alloc": 34, "kmalloc_slab": 42,
               "mutex_unlock": 44},
        chatter=2.5,
    ),
    _profile(
        "rsync-mirror", "benign", binary="rsync", user="u1",
        repetitions=5,
        cpu_percent=20, rss_kb=60_000, read_kbs=140, write_kbs=130,
        write_block=4096,
        rates={"fsnotify": 28, "fsnotify_parent": 25, "kfree": 46,
               "lock_page_memcg": 38, "refill_stock": 28,
               "memcg_check_events": 30, "locks_remove_posix": 48,
               "locks_remove_file": 40, "dnotify_flush": 12,
               "mod_node_page_state": 45, "vfs_write": 32, "vfs_read": 35,
               "mutex_unlock": 40},
        chatter=2.0,
    ),
    # mirror envelope, two churn postures: hardlink-farm scans churn the
    # allocator and page accounting, in-place rewrites drain LRU pagevecs
    _profile(
        "rsync-churn", "benign", binary="rsync", user="u1",
        repetitions=7, duration_s=12, path_scope="/srv/linkfarm/**",
        cpu_percent=20, rss_kb=60_000, read_kbs=140, write_kbs=130,
        write_block=4096,
        rates={"fsnotify": 28, "fsnotify_parent": 25, "kfree": 128,
               "lock_page_memcg": 85, "refill_stock": 105,
               "memcg_check_events": 70, "locks_remove_posix": 48,
               "locks_remove_file": 40, "dnotify_flush": 12,
               "mod_node_page_state": 80, "vfs_write": 32, "vfs_read": 35,
               "handle_mm_fault": 60, "kmalloc_slab": 30,
               "mutex_unlock": 40},
        chatter=2.0,
    ),
    _profile(
        "rsync-inplace", "benign", binary="rsync", user="u1",
        repetitions=3, duration_s=10, path_scope="/srv/seed/**",
        cpu_percent=20, rss_kb=60_000, read_kbs=140, write_kbs=130,
        write_block=4096,
        rates={"fsnotify": 28, "fsnotify_parent": 25, "kfree": 46,
               "lock_page_memcg": 38, "refill_stock": 28,
               "memcg_check_events": 30, "locks_remove_posix": 48,
               "locks_remove_file": 40, "dnotify_flush": 12,
               "mod_node_page_state": 45, "lru_add_drain_cpu": 120,
               "vfs_write": 32, "vfs_read": 35,
               "do_writepages": 60, "mutex_unlock": 40},
        chatter=2.0,
    ),
    _profile(
        "tar-archive", "benign", binary="tar", user="u3",
        cpu_percent=16, rss_kb=44_000, read_kbs=70, write_kbs=90,
        write_block=65536,
        rates={"fsnotify": 40, "fsnotify_parent": 36, "kfree": 84,
               "lock_page_memcg": 18, "refill_stock": 24,
               "memcg_check_events": 15, "locks_remove_posix": 8,
               "mod_node_page_state": 32, "vfs_write": 2, "vfs_read": 10,
               "mutex_unlock": 30},
        chatter=2.0,
    ),
    _profile(
        "fio-readonly", "benign", binary="fio", user="u3",
        path_scope="/var/tmp/**",
        cpu_percent=30, rss_kb=46_000, read_kbs=500, write_kbs=0.5,
        write_block=131072,
        rates={"fsnotify": 8, "fsnotify_parent": 7, "kfree": 55,
               "lock_page_memcg": 9, "refill_stock": 48,
               "memcg_check_events": 9, "locks_remove_posix": 1,
               "vfs_read": 4, "generic_file_read_iter": 4,
               "mark_page_accessed": 60, "kmalloc_slab": 42,
               "mutex_unlock": 36},
        chatter=2.5,
    ),
    # benign bursts: heavy write volume, with at most two of the three
    # churn sides (allocation, page accounting, LRU drain) raised at once.
    # Write rates are pinned to the throttled profiles' cadence arithmetic
    # (4096 B / 16 ms and 16384 B / 32 ms) so volume matches exactly.
    _profile(
        "tar-warm-burst", "benign", binary="tar", user="u3",
        repetitions=5, path_scope="/srv/backup/**",
        cpu_percent=14, rss_kb=56_000, read_kbs=60, write_kbs=256,
        write_block=4096,
        rates={"fsnotify": 75, "fsnotify_parent": 66, "kfree": 55,
               "lock_page_memcg": 85, "refill_stock": 32,
               "memcg_check_events": 70, "locks_remove_posix": 10,
               "mod_node_page_state": 80, "vfs_write": 62, "vfs_read": 15,
               "mark_page_accessed": 70, "do_writepages": 26,
               "kmalloc_slab": 16, "mutex_unlock": 48,
               "ksys_write": 20, "generic_perform_write": 18,
               "ext4_file_write_iter": 16},
        chatter=3.0, stanza_depth=2,
    ),
    _profile(
        "fio-rw-burst", "benign", binary="fio", user="u3",
        repetitions=8, path_scope="/srv/bench/**",
        cpu_percent=16, rss_kb=58_000, read_kbs=60, write_kbs=512,
        write_block=16384,
        rates={"fsnotify": 12, "fsnotify_parent": 10, "kfree": 120,
               "lock_page_memcg": 15, "refill_stock": 105,
               "memcg_check_events": 14, "locks_remove_posix": 2,
               "mod_node_page_state": 95, "vfs_write": 32, "vfs_read": 4,
               "kmem_cache_free": 80, "handle_mm_fault": 58,
               "do_writepages": 20, "kmalloc_slab": 30, "mutex_unlock": 55,
               "ksys_write": 22, "generic_file_write_iter": 18,
               "ext4_file_write_iter": 15},
        chatter=3.0, stanza_depth=2,
    ),
    # flush-heavy variants of the two bursts: allocation churn with LRU
    # drain (tar on a cold cache) and page churn with LRU drain (fio doing
    # buffered writeback), each again at the matching cadence volume
    _profile(
        "tar-flush-burst", "benign", binary="tar", user="u3",
        repetitions=12, duration_s=16, path_scope="/var/cache/pkg/**",
        cpu_percent=14, rss_kb=56_000, read_kbs=60, write_kbs=256,
        write_block=4096,
        rates={"fsnotify": 75, "fsnotify_parent": 66, "kfree": 120,
               "lock_page_memcg": 15, "refill_stock": 105,
               "memcg_check_events": 14, "locks_remove_posix": 10,
               "mod_node_page_state": 32, "lru_add_drain_cpu": 120,
               "vfs_write": 62, "vfs_read": 15,
               "mark_page_accessed": 70, "do_writepages": 95,
               "kmalloc_slab": 30, "mutex_unlock": 48,
               "ksys_write": 20, "generic_perform_write": 18},
        chatter=3.0, stanza_depth=2,
    ),
    _profile(
        "fio-writeback-burst", "benign", binary="fio", user="u3",
        repetitions=18, duration_s=11, path_scope="/var/lib/bench/**",
        cpu_percent=16, rss_kb=58_000, read_kbs=60, write_kbs=512,
        write_block=16384,
        rates={"fsnotify": 12, "fsnotify_parent": 10, "kfree": 55,
               "lock_page_memcg": 85, "refill_stock": 32,
               "memcg_check_events": 70, "locks_remove_posix": 2,
               "mod_node_page_state": 80, "lru_add_drain_cpu": 120,
               "vfs_write": 32, "vfs_read": 4,
               "kmem_cache_free": 80, "handle_mm_fault": 58,
               "do_writepages": 95, "kmalloc_slab": 16, "mutex_unlock": 55,
               "ksys_write": 22, "ext4_file_write_iter": 15},
        chatter=3.0, stanza_depth=2,
    ),
    # --- sanctioned crypto tools (encrypting, may be whitelisted) ------
    # Symbol rates and io pinned to benign carriers (fsnotify pair to the
    # tar burst, mod_node/mutex/write to the fio burst, locks to rsync):
    # the tells are a cpu band above the compiler's 55 and the
    # resident-set ramp that block-cipher batching drives.
    _profile(
        "openssl-home-u1", "crypto_tool", binary="openssl", user="u1",
        path_scope="$HOME/docs/**", duration_s=12,
        cpu_percent=58, rss_kb=90_000, rss_peak_kb=380_000,
        read_kbs=60, write_kbs=512, write_block=16384,
        rates={"fsnotify": 75, "fsnotify_parent": 66, "kfree": 76,
               "lock_page_memcg": 37, "refill_stock": 48,
               "memcg_check_events": 29, "locks_remove_posix": 48,
               "locks_remove_file": 34, "mod_node_page_state": 95,
               "vfs_write": 8, "vfs_read": 8, "kmalloc_slab": 42,
               "mutex_unlock": 55},
        chatter=3.0, stanza_depth=2,
    ),
    _profile(
        "gpg-home-u1", "crypto_tool", binary="gpg", user="u1",
        path_scope="$HOME/docs/**", duration_s=12,
        cpu_percent=57, rss_kb=85_000, rss_peak_kb=340_000,
        read_kbs=60, write_kbs=512, write_block=16384,
        rates={"fsnotify": 75, "fsnotify_parent": 66, "kfree": 76,
               "lock_page_memcg": 37, "refill_stock": 48,
               "memcg_check_events": 29, "locks_remove_posix": 48,
               "locks_remove_file": 30, "mod_node_page_state": 95,
               "vfs_write": 8, "vfs_read": 8, "kmalloc_slab": 42,
               "mutex_unlock": 55},
        chatter=3.0, stanza_depth=2,
    ),
    _profile(
        "openssl-srv-u1", "crypto_tool", binary="openssl", user="u1",
        path_scope="/srv/shared/**", duration_s=12,
        cpu_percent=59, rss_kb=90_000, rss_peak_kb=380_000,
        read_kbs=60, write_kbs=512, write_block=16384,
        rates={"fsnotify": 75, "fsnotify_parent": 66, "kfree": 76,
               "lock_page_memcg": 37, "refill_stock": 48,
               "memcg_check_events": 29, "locks_remove_posix": 48,
               "locks_remove_file": 34, "mod_node_page_state": 95,
               "vfs_write": 8, "vfs_read": 8, "kmalloc_slab": 42,
               "mutex_unlock": 55},
        chatter=3.0, stanza_depth=2,
    ),
    _profile(
        "openssl-home-u2", "crypto_tool", binary="openssl", user="u2",
        path_scope="$HOME/docs/**", duration_s=12,
        cpu_percent=58, rss_kb=90_000, rss_peak_kb=380_000,
        read_kbs=60, write_kbs=512, write_block=16384,
        rates={"fsnotify": 75, "fsnotify_parent": 66, "kfree": 76,
               "lock_page_memcg": 37, "refill_stock": 48,
               "memcg_check_events": 29, "locks_remove_posix": 48,
               "locks_remove_file": 34, "mod_node_page_state": 95,
               "vfs_write": 8, "vfs_read": 8, "kmalloc_slab": 42,
               "mutex_unlock": 55},
        chatter=3.0, stanza_depth=2,
    ),
    # --- ransomware analogs: dense families ----------------------------
    # Same blending discipline as the crypto tools: symbol rates and io
    # ride benign carriers, leaving the rss ramp plus a cpu band above
    # gcc's 55 as the families' resource tells (family-c keeps a flat,
    # etl-sized resident set, so the cpu band is its only resource tell).
    _profile(
        "family-a-dense", "ransomware", binary="enc-a", user="u2",
        duration_s=12,
        cpu_percent=60, rss_kb=90_000, rss_peak_kb=460_000,
        read_kbs=60, write_kbs=512, write_block=16384,
        rates={"fsnotify": 75, "fsnotify_parent": 66, "kfree": 72,
               "lock_page_memcg": 37, "refill_stock": 48,
               "memcg_check_events": 29, "locks_remove_posix": 48,
               "locks_remove_file": 60, "mod_node_page_state": 95,
               "dnotify_flush": 12, "vfs_write": 10, "vfs_read": 10,
               "kmalloc_slab": 42, "mutex_unlock": 50},
        chatter=3.5, stanza_depth=2,
    ),
    _profile(
        "family-b-dense", "ransomware", binary="enc-b", user="u2",
        duration_s=12,
        cpu_percent=64, rss_kb=105_000, rss_peak_kb=520_000,
        read_kbs=60, write_kbs=512, write_block=16384,
        rates={"fsnotify": 75, "fsnotify_parent": 66, "kfree": 72,
               "lock_page_memcg": 37, "refill_stock": 48,
               "memcg_check_events": 29, "locks_remove_posix": 48,
               "locks_remove_file": 64, "mod_node_page_state": 95,
               "dnotify_flush": 12, "vfs_write": 5.5, "vfs_read": 6,
               "kmalloc_slab": 42, "mutex_unlock": 50},
        chatter=3.5, stanza_depth=2,
    ),
    _profile(
        # in-place rewriter with a flat resident set and little metadata
        # churn
        "family-c-flat", "ransomware", binary="enc-c", user="u2",
        duration_s=12,
        cpu_percent=58, rss_kb=85_000,
        read_kbs=60, write_kbs=512, write_block=16384,
        rates={"fsnotify": 30, "fsnotify_parent": 27, "kfree": 72,
               "lock_page_memcg": 37, "refill_stock": 48,
               "memcg_check_events": 29, "locks_remove_posix": 8,
               "locks_remove_file": 6, "mod_node_page_state": 95,
               "dnotify_flush": 4, "vfs_write": 12, "vfs_read": 12,
               "kmalloc_slab": 42, "mutex_unlock": 50},
        chatter=3.5, stanza_depth=2,
    ),
    # --- evasive encryption: throttled / sparse / mmap -----------------
    # Each evasive profile clones its benign partner (throttle-4k <->
    # tar-warm-burst, throttle-16k <-> fio-rw-burst, sparse <-> python-etl,
    # mmap <-> rsync-mirror): same resource envelope, same chatter and
    # stanza shape, same deployed symbol rates.  The deployed tell is a
    # three-sided churn conjunction: allocation churn at the fio burst's
    # totals (kfree 144, refill_stock 105, kmalloc_slab 30), page account
    # churn at the tar burst's (lock_page_memcg 85, memcg_check_events 70,
    # mod_node_page_state 80), and LRU drain at the writeback twins' level
    # (lru_add_drain_cpu 120).  Every two-of-three side combination, and
    # every tell column paired with any envelope column, also occurs on
    # some benign profile, so no two columns can isolate these scenarios;
    # only the full conjunction marks encryption.  Raw-only extras
    # (crypto_*, sg_init_table) add texture outside the deployed space.
    _profile(
        "throttle-aes-4k-16ms", "ransomware", binary="enc-t4", user="u2",
        repetitions=2, duration_s=8,
        cpu_percent=14, rss_kb=56_000, read_kbs=60,
        write_kbs=None, write_block=4096, sleep_ms=16,
        rates={"fsnotify": 75, "fsnotify_parent": 66, "kfree": 120,
               "lock_page_memcg": 85, "refill_stock": 105,
               "memcg_check_events": 70, "locks_remove_posix": 10,
               "mod_node_page_state": 80, "lru_add_drain_cpu": 120,
               "vfs_write": 62, "vfs_read": 15,
               "mark_page_accessed": 70, "do_writepages": 26,
               "kmalloc_slab": 30, "mutex_unlock": 48,
               "crypto_skcipher_encrypt": 58, "sg_init_table": 29},
        chatter=3.0, stanza_depth=2,
    ),
    _profile(
        "throttle-aes-16k-32ms", "ransomware", binary="enc-t16", user="u2",
        repetitions=2, duration_s=8,
        cpu_percent=16, rss_kb=58_000, read_kbs=60,
        write_kbs=None, write_block=16384, sleep_ms=32,
        rates={"fsnotify": 12, "fsnotify_parent": 10, "kfree": 120,
               "lock_page_memcg": 85, "refill_stock": 105,
               "memcg_check_events": 70, "locks_remove_posix": 2,
               "mod_node_page_state": 80, "lru_add_drain_cpu": 120,
               "vfs_write": 32, "vfs_read": 4,
               "kmem_cache_free": 80, "handle_mm_fault": 58,
               "do_writepages": 20, "kmalloc_slab": 30, "mutex_unlock": 55,
               "crypto_skcipher_encrypt": 30, "sg_init_table": 15},
        chatter=3.0, stanza_depth=2,
    ),
    _profile(
        "sparse-encrypt", "ransomware", binary="enc-sp", user="u2",
        repetitions=2, duration_s=8,
        cpu_percent=18, rss_kb=85_000, read_kbs=60, write_kbs=35,
        write_block=8192,
        rates={"fsnotify": 10, "fsnotify_parent": 9, "kfree": 128,
               "lock_page_memcg": 85, "refill_stock": 105,
               "memcg_check_events": 70, "locks_remove_posix": 3,
               "mod_node_page_state": 80, "lru_add_drain_cpu": 120,
               "vfs_write": 4, "vfs_read": 9,
               "kmalloc": 30, "handle_mm_fault": 22,
               "kmalloc_slab": 30, "mutex_unlock": 34,
               "crypto_skcipher_encrypt": 4, "crypto_shash_update": 6},
        chatter=2.0, stanza_depth=1,
    ),
    _profile(
        "mmap-encrypt", "ransomware", binary="enc-mm", user="u2",
        repetitions=2, duration_s=8,
        cpu_percent=20, rss_kb=60_000, read_kbs=140, write_kbs=130,
        write_block=4096,
        rates={"fsnotify": 28, "fsnotify_parent": 25, "kfree": 128,
               "lock_page_memcg": 85, "refill_stock": 105,
               "memcg_check_events": 70, "locks_remove_posix": 48,
               "locks_remove_file": 40, "dnotify_flush": 12,
               "mod_node_page_state": 80, "lru_add_drain_cpu": 120,
               "vfs_write": 32, "vfs_read": 35,
               "handle_mm_fault": 60, "do_writepages": 24,
               "kmalloc_slab": 30, "mutex_unlock": 40,
               "crypto_skcipher_encrypt": 32, "sg_init_table": 16},
        chatter=2.0, stanza_depth=1,
    ),
]

DEFAULT_MANIFEST = {
    "seed": 42,
    "repetitions": 3,
    "window_us": DEFAULT_WINDOW_US,
    "capture_cap_bytes": 6 * (1 << 20),
    "profiles": MANIFEST_PROFILES,
}

# Profiles that make up the evasion/burst evaluation set: the four evasive
# encryption scenarios plus the benign bursts they must be told apart
# from.  Names refer to MANIFEST_PROFILES entries.
EDGE_SCENARIOS = (
    "throttle-aes-4k-16ms",
    "throttle-aes-16k-32ms",
    "sparse-encrypt",
    "mmap-encrypt",
)
BURST_SCENARIOS = (
    "tar-warm-burst",
    "fio-rw-burst",
    "tar-flush-burst",
    "fio-writeback-burst",
)
