"""Experiment configuration: YAML files with includes, validation and hashing.

A configuration file is a nested mapping.  An optional top-level
``include:`` list names further files (relative to the including file)
that are merged first; mappings merge recursively, everything else is
replaced by the including file.  See ``configs/`` for the canned scenarios.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .axi import MAX_BURST_BEATS
from .realm.budget import RegionConfig
from .realm.unit import RealmConfig
from .traffic import CpuWorkload, DmaWorkload, StallerWorkload

CONFIG_DIR = Path(__file__).parent / "configs"
MANAGER_KINDS = ("cpu", "dma", "staller", "trace")


class ConfigError(ValueError):
    """Validation failure; ``problems`` lists one ``path: message`` per issue."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass
class SubordinateSpec:
    name: str
    base: int
    size: int
    latency: int = 8
    kind: str = "memory"  # or "config"

    @property
    def end(self) -> int:
        return self.base + self.size


@dataclass
class ManagerSpec:
    name: str
    tid: int
    kind: str
    workload: Any  # CpuWorkload | DmaWorkload | StallerWorkload | list[TraceEntry]
    realm: RealmConfig
    trace_path: Optional[str] = None
    max_outstanding: int = 8  # trace replayer only


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    subordinates: list[SubordinateSpec]
    managers: list[ManagerSpec]
    shared_path: bool = True
    max_cycles: int = 10_000_000
    until: list[str] = field(default_factory=list)
    record_trace: bool = False
    hwrot_tid: Optional[int] = None
    sweep: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)
    source: Optional[str] = None

    @property
    def digest(self) -> str:
        return config_hash(self.raw)

    def manager(self, name: str) -> ManagerSpec:
        for m in self.managers:
            if m.name == name:
                return m
        raise KeyError(name)

    def subordinate(self, name: str) -> SubordinateSpec:
        for s in self.subordinates:
            if s.name == name:
                return s
        raise KeyError(name)


# ----------------------------------------------------------------------
# loading


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_raw(path: Union[str, Path], _stack: tuple = ()) -> dict:
    """Read ``path`` and resolve its includes into one mapping."""
    p = Path(path).resolve()
    if p in _stack:
        chain = " -> ".join(str(x) for x in _stack + (p,))
        raise ConfigError([f"include: cycle {chain}"])
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError([f"{path}: {e.strerror or e}"]) from None
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ConfigError([f"{p}: YAML syntax error: {e}"]) from None
    if not isinstance(doc, dict):
        raise ConfigError([f"{p}: top level must be a mapping"])
    includes = doc.pop("include", []) or []
    if isinstance(includes, str):
        includes = [includes]
    # relative trace paths are anchored to the file that names them
    managers = doc.get("managers")
    if isinstance(managers, list):
        for m in managers:
            if isinstance(m, dict) and isinstance(m.get("trace"), str):
                if not Path(m["trace"]).is_absolute():
                    m["trace"] = str(p.parent / m["trace"])
    merged: dict = {}
    for inc in includes:
        merged = _merge(merged, load_raw(p.parent / inc, _stack + (p,)))
    return _merge(merged, doc)


def config_hash(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()


def resolve_config_path(name: Union[str, Path]) -> Path:
    """Paths are used as given; bare names fall back to the canned configs."""
    p = Path(name)
    if p.exists():
        return p
    for cand in (CONFIG_DIR / p, CONFIG_DIR / f"{p}.yaml"):
        if cand.exists():
            return cand
    raise ConfigError([f"{name}: no such configuration file"])


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    p = resolve_config_path(path)
    cfg = parse_config(load_raw(p))
    cfg.source = str(p)
    return cfg


# ----------------------------------------------------------------------
# validation


class _Checker:
    def __init__(self) -> None:
        self.problems: list[str] = []

    def err(self, path: str, msg: str) -> None:
        self.problems.append(f"{path}: {msg}")

    def int_(self, d: dict, key: str, path: str, default=None, lo=None, hi=None, required=False):
        if key not in d or d[key] is None:
            if required:
                self.err(f"{path}.{key}", "required")
            return default
        v = d[key]
        if isinstance(v, bool) or not isinstance(v, int):
            self.err(f"{path}.{key}", f"expected an integer, got {v!r}")
            return default
        if lo is not None and v < lo:
            self.err(f"{path}.{key}", f"must be >= {lo}, got {v}")
        if hi is not None and v > hi:
            self.err(f"{path}.{key}", f"must be <= {hi}, got {v}")
        return v

    def bool_(self, d: dict, key: str, path: str, default: bool) -> bool:
        v = d.get(key, default)
        if not isinstance(v, bool):
            self.err(f"{path}.{key}", f"expected true/false, got {v!r}")
            return default
        return v

    def unknown(self, d: dict, allowed: set, path: str) -> None:
        for k in d:
            if k not in allowed:
                self.err(f"{path}.{k}", "unknown key")


def _region_range(ck: _Checker, spec: Any, path: str, subs: dict) -> tuple[Optional[int], Optional[int]]:
    if not isinstance(spec, str):
        ck.err(path, "expected a subordinate name")
        return None, None
    if spec not in subs:
        ck.err(path, f"unknown subordinate {spec!r}")
        return None, None
    s = subs[spec]
    return s.base, s.end


def _parse_realm(ck: _Checker, d: Any, path: str, subs: dict) -> RealmConfig:
    if d is None:
        d = {}
    if not isinstance(d, dict):
        ck.err(path, "expected a mapping")
        d = {}
    ck.unknown(
        d,
        {"enabled", "frag_len", "regions", "throttle", "max_outstanding", "write_buffer_depth", "num_regions"},
        path,
    )
    rc = RealmConfig(
        enabled=ck.bool_(d, "enabled", path, False),
        frag_len=ck.int_(d, "frag_len", path, MAX_BURST_BEATS, 1, MAX_BURST_BEATS),
        throttle_enabled=ck.bool_(d, "throttle", path, False),
        max_outstanding=ck.int_(d, "max_outstanding", path, 8, 1),
        write_buffer_depth=ck.int_(d, "write_buffer_depth", path, 0, 0),
        num_regions=ck.int_(d, "num_regions", path, 2, 1, 7),
    )
    regions = d.get("regions", []) or []
    if not isinstance(regions, list):
        ck.err(f"{path}.regions", "expected a list")
        regions = []
    for i, r in enumerate(regions):
        rp = f"{path}.regions[{i}]"
        if not isinstance(r, dict):
            ck.err(rp, "expected a mapping")
            continue
        ck.unknown(r, {"subordinate", "start", "end", "budget", "period"}, rp)
        if "subordinate" in r:
            start, end = _region_range(ck, r["subordinate"], f"{rp}.subordinate", subs)
        else:
            start = ck.int_(r, "start", rp, required=True, lo=0)
            end = ck.int_(r, "end", rp, required=True, lo=1)
        budget = ck.int_(r, "budget", rp, required=True, lo=1)
        period = ck.int_(r, "period", rp, required=True, lo=1)
        if None in (start, end, budget, period):
            continue
        if end <= start:
            ck.err(rp, f"empty range [{start:#x}, {end:#x})")
            continue
        rc.regions.append(RegionConfig(start, end, budget, period))
    try:
        rc.validate()
    except ValueError as e:
        ck.err(path, str(e))
    return rc


def _take_region(ck: _Checker, w: dict, key: str, path: str, subs: dict) -> tuple[int, int]:
    name = w.get(key)
    if name is None:
        ck.err(f"{path}.{key}", "required")
        return 0, 0
    base, end = _region_range(ck, name, f"{path}.{key}", subs)
    if base is None:
        return 0, 0
    return base, end - base


def _parse_workload(ck: _Checker, kind: str, w: Any, path: str, subs: dict, seed: int):
    if w is None:
        w = {}
    if not isinstance(w, dict):
        ck.err(path, "expected a mapping")
        w = {}
    if kind == "cpu":
        ck.unknown(w, {"total_accesses", "think_cycles", "write_fraction", "region", "stride", "seed", "start_cycle"}, path)
        base, size = _take_region(ck, w, "region", path, subs)
        wf = w.get("write_fraction", 0.0)
        if isinstance(wf, bool) or not isinstance(wf, (int, float)) or not 0 <= wf <= 1:
            ck.err(f"{path}.write_fraction", f"must be a number in [0, 1], got {wf!r}")
            wf = 0.0
        return CpuWorkload(
            total_accesses=ck.int_(w, "total_accesses", path, 1000, 0),
            think_cycles=ck.int_(w, "think_cycles", path, 0, 0),
            write_fraction=float(wf),
            region_base=base,
            region_size=size,
            stride=ck.int_(w, "stride", path, None, 8),
            seed=ck.int_(w, "seed", path, seed, 0),
            start_cycle=ck.int_(w, "start_cycle", path, 0, 0),
        )
    if kind == "dma":
        ck.unknown(w, {"burst_len", "outstanding", "read_region", "write_region", "max_bursts", "start_cycle", "enabled"}, path)
        rb, rs = _take_region(ck, w, "read_region", path, subs)
        wb, ws = _take_region(ck, w, "write_region", path, subs)
        wl = DmaWorkload(
            burst_len=ck.int_(w, "burst_len", path, 256, 1, MAX_BURST_BEATS),
            outstanding=ck.int_(w, "outstanding", path, 2, 1),
            read_base=rb,
            read_size=rs,
            write_base=wb,
            write_size=ws,
            max_bursts=ck.int_(w, "max_bursts", path, None, 0),
            start_cycle=ck.int_(w, "start_cycle", path, 0, 0),
            enabled=ck.bool_(w, "enabled", path, True),
        )
        try:
            wl.validate()
        except ValueError as e:
            ck.err(path, str(e))
        return wl
    if kind == "staller":
        ck.unknown(w, {"region", "offset", "burst_len", "w_delay", "aw_only", "start_cycle"}, path)
        base, size = _take_region(ck, w, "region", path, subs)
        off = ck.int_(w, "offset", path, 0, 0)
        wd = w.get("w_delay")
        if wd in ("inf", "infinite", "never"):
            wd = None
        elif wd is not None and (isinstance(wd, bool) or not isinstance(wd, int) or wd < 0):
            ck.err(f"{path}.w_delay", f"expected a non-negative integer or 'inf', got {wd!r}")
            wd = None
        return StallerWorkload(
            addr=base + off,
            burst_len=ck.int_(w, "burst_len", path, 16, 1, MAX_BURST_BEATS),
            w_delay=wd,
            aw_only=ck.bool_(w, "aw_only", path, True),
            start_cycle=ck.int_(w, "start_cycle", path, 0, 0),
        )
    return None


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a resolved mapping; raises :class:`ConfigError` listing every problem."""
    from .traffic import TraceError, load_trace

    ck = _Checker()
    ck.unknown(raw, {"name", "seed", "topology", "managers", "run", "sweep"}, "config")
    name = raw.get("name", "experiment")
    seed = ck.int_(raw, "seed", "config", 1, 0)

    topo = raw.get("topology") or {}
    if not isinstance(topo, dict):
        ck.err("topology", "expected a mapping")
        topo = {}
    ck.unknown(topo, {"shared_path", "latency", "subordinates", "hwrot_tid"}, "topology")
    default_lat = ck.int_(topo, "latency", "topology", 8, 1)
    subs: dict[str, SubordinateSpec] = {}
    sub_list: list[SubordinateSpec] = []
    for i, s in enumerate(topo.get("subordinates") or []):
        sp = f"topology.subordinates[{i}]"
        if not isinstance(s, dict):
            ck.err(sp, "expected a mapping")
            continue
        ck.unknown(s, {"name", "base", "size", "latency", "kind"}, sp)
        nm = s.get("name")
        if not isinstance(nm, str):
            ck.err(f"{sp}.name", "required string")
            continue
        if nm in subs:
            ck.err(f"{sp}.name", f"duplicate subordinate {nm!r}")
            continue
        kind = s.get("kind", "memory")
        if kind not in ("memory", "config"):
            ck.err(f"{sp}.kind", f"must be memory or config, got {kind!r}")
        spec = SubordinateSpec(
            nm,
            ck.int_(s, "base", sp, 0, 0, required=True),
            ck.int_(s, "size", sp, 4096, 1, required=True),
            ck.int_(s, "latency", sp, default_lat, 1),
            kind,
        )
        subs[nm] = spec
        sub_list.append(spec)
    if not sub_list:
        ck.err("topology.subordinates", "at least one subordinate required")
    ordered = sorted(sub_list, key=lambda x: x.base)
    for a, b in zip(ordered, ordered[1:]):
        if b.base < a.end:
            ck.err("topology.subordinates", f"{a.name} and {b.name} overlap")
    if sum(1 for s in sub_list if s.kind == "config") > 1:
        ck.err("topology.subordinates", "at most one config subordinate")

    mgrs: list[ManagerSpec] = []
    tids: set[int] = set()
    names: set[str] = set()
    for i, m in enumerate(raw.get("managers") or []):
        mp = f"managers[{i}]"
        if not isinstance(m, dict):
            ck.err(mp, "expected a mapping")
            continue
        ck.unknown(m, {"name", "tid", "kind", "workload", "realm", "trace", "max_outstanding"}, mp)
        nm = m.get("name")
        if not isinstance(nm, str):
            ck.err(f"{mp}.name", "required string")
            continue
        if nm in names:
            ck.err(f"{mp}.name", f"duplicate manager {nm!r}")
        names.add(nm)
        tid = ck.int_(m, "tid", mp, i, 0)
        if tid in tids:
            ck.err(f"{mp}.tid", f"TID {tid} used twice")
        tids.add(tid)
        kind = m.get("kind")
        if kind not in MANAGER_KINDS:
            ck.err(f"{mp}.kind", f"must be one of {', '.join(MANAGER_KINDS)}, got {kind!r}")
            continue
        realm = _parse_realm(ck, m.get("realm"), f"{mp}.realm", subs)
        trace_path = None
        if kind == "trace":
            trace_path = m.get("trace")
            if not isinstance(trace_path, str):
                ck.err(f"{mp}.trace", "trace managers need a trace file")
                workload = []
            else:
                try:
                    workload = load_trace(trace_path)
                except (OSError, TraceError) as e:
                    ck.err(f"{mp}.trace", str(e))
                    workload = []
        else:
            workload = _parse_workload(ck, kind, m.get("workload"), f"{mp}.workload", subs, seed + i)
        mgrs.append(
            ManagerSpec(nm, tid, kind, workload, realm, trace_path, ck.int_(m, "max_outstanding", mp, 8, 1))
        )
    if not mgrs:
        ck.err("managers", "at least one manager required")

    run = raw.get("run") or {}
    if not isinstance(run, dict):
        ck.err("run", "expected a mapping")
        run = {}
    ck.unknown(run, {"max_cycles", "until", "record_trace"}, "run")
    until = run.get("until")
    if until is None:
        until = [m.name for m in mgrs if m.kind in ("cpu", "trace")]
    elif isinstance(until, str):
        until = [until]
    by_name = {m.name: m for m in mgrs}
    for u in until:
        m = by_name.get(u)
        if m is None:
            ck.err("run.until", f"unknown manager {u!r}")
        elif m.kind == "staller" or (m.kind == "dma" and m.workload.max_bursts is None):
            ck.err("run.until", f"{u!r} never finishes on its own")

    sweep = raw.get("sweep") or {}
    if not isinstance(sweep, dict):
        ck.err("sweep", "expected a mapping")
        sweep = {}

    cfg = ExperimentConfig(
        name=str(name),
        seed=seed,
        subordinates=sub_list,
        managers=mgrs,
        shared_path=ck.bool_(topo, "shared_path", "topology", True),
        max_cycles=ck.int_(run, "max_cycles", "run", 10_000_000, 1),
        until=list(until),
        record_trace=ck.bool_(run, "record_trace", "run", False),
        hwrot_tid=ck.int_(topo, "hwrot_tid", "topology", None, 0),
        sweep=sweep,
        raw=raw,
    )
    if ck.problems:
        raise ConfigError(ck.problems)
    return cfg


# ----------------------------------------------------------------------
# programmatic edits used by the sweeps


def manager_entry(raw: dict, name: str) -> dict:
    for m in raw.get("managers", []):
        if m.get("name") == name:
            return m
    raise ConfigError([f"managers: no manager named {name!r}"])


def with_changes(raw: dict, edits: dict[str, Any]) -> dict:
    """Deep copy of ``raw`` with dotted-path edits applied.

    Paths start with ``managers.<name>`` or any top-level key, e.g.
    ``managers.core.realm.frag_len``.  A value of ``None`` deletes the key.
    """
    out = copy.deepcopy(raw)
    for path, value in edits.items():
        parts = path.split(".")
        if parts[0] == "managers":
            node = manager_entry(out, parts[1])
            parts = parts[2:]
        else:
            node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        if value is None:
            node.pop(parts[-1], None)
        else:
            node[parts[-1]] = value
    return out


def without_managers(raw: dict, names: list[str]) -> dict:
    out = copy.deepcopy(raw)
    out["managers"] = [m for m in out.get("managers", []) if m.get("name") not in names]
    run = out.get("run")
    if isinstance(run, dict) and isinstance(run.get("until"), list):
        run["until"] = [u for u in run["until"] if u not in names]
    return out
