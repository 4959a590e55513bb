"""World construction, single runs and the fragmentation / budget sweeps."""
from __future__ import annotations

import concurrent.futures as cf
import csv
import io
import logging
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .axi import AxiLink
from .config import (
    ConfigError,
    ExperimentConfig,
    manager_entry,
    parse_config,
    with_changes,
    without_managers,
)
from .config_space import ConfigSubordinate, RegisterFile
from .fabric import Crossbar, MemorySubordinate
from .kernel import SimError, World
from .metrics import MetricsRecord, RegionPeriod
from .realm.unit import RealmUnit
from .traffic import CpuManager, DmaManager, Manager, StallerManager, TraceReplayer

log = logging.getLogger(__name__)

JOBS_ENV = "REALMSIM_JOBS"
DEFAULT_FRAGS = (256, 128, 64, 32, 16, 8, 4, 2, 1)
DEFAULT_FRACTIONS = ("1/1", "4/5", "3/5", "2/5", "1/5")
DEFAULT_FRAG_PERIOD = 1_000_000


@dataclass
class Simulation:
    cfg: ExperimentConfig
    world: World
    managers: dict[str, Manager]
    units: dict[str, RealmUnit]
    crossbar: Crossbar
    subordinates: dict[str, MemorySubordinate]
    metrics: MetricsRecord
    regfile: Optional[RegisterFile] = None

    def finished(self) -> bool:
        return all(self.managers[n].done() for n in self.cfg.until)


@dataclass
class RunResult:
    metrics: MetricsRecord
    cycles: int
    sim: Simulation = field(repr=False)

    def manager(self, name: str):
        return self.metrics.managers[name]

    def finish_cycle(self, name: str) -> int:
        m = self.metrics.managers[name]
        return m.last_complete if m.last_complete is not None else self.cycles


def build(cfg: ExperimentConfig) -> Simulation:
    world = World()
    metrics = MetricsRecord()
    managers: dict[str, Manager] = {}
    units: dict[str, RealmUnit] = {}
    down_links = []
    for spec in cfg.managers:
        up = AxiLink(f"{spec.name}.up")
        down = AxiLink(f"{spec.name}.down")
        metrics.add_manager(spec.name, spec.tid)
        if spec.kind == "cpu":
            mgr: Manager = CpuManager(spec.name, spec.tid, up, spec.workload, metrics)
        elif spec.kind == "dma":
            mgr = DmaManager(spec.name, spec.tid, up, spec.workload, metrics)
        elif spec.kind == "staller":
            mgr = StallerManager(spec.name, spec.tid, up, spec.workload, metrics)
        else:
            mgr = TraceReplayer(spec.name, spec.tid, up, spec.workload, metrics, spec.max_outstanding)
        managers[spec.name] = mgr
        units[spec.name] = RealmUnit(f"realm.{spec.name}", up, down, _copy_realm(spec.realm))
        down_links.append(down)

    unit_list = list(units.values())
    regfile = None
    subs: dict[str, MemorySubordinate] = {}
    sub_links = []
    for s in cfg.subordinates:
        ln = AxiLink(f"{s.name}.port")
        if s.kind == "config":
            regfile = RegisterFile(unit_list, cfg.hwrot_tid)
            subs[s.name] = ConfigSubordinate(s.name, ln, s.base, s.end, regfile, s.latency)
        else:
            subs[s.name] = MemorySubordinate(s.name, ln, s.base, s.end, s.latency, cfg.shared_path)
        sub_links.append(ln)
    xbar = Crossbar(
        "xbar",
        down_links,
        sub_links,
        [(s.base, s.end) for s in cfg.subordinates],
        [m.tid for m in cfg.managers],
        shared_path=cfg.shared_path,
        record_trace=cfg.record_trace,
    )
    for m in managers.values():
        world.add(m)
    for u in unit_list:
        world.add(u)
    world.add(xbar)
    for s in subs.values():
        world.add(s)
    return Simulation(cfg, world, managers, units, xbar, subs, metrics, regfile)


def _copy_realm(rc):
    return replace(rc, regions=list(rc.regions))


def finalize(sim: Simulation) -> MetricsRecord:
    rec = sim.metrics
    now = sim.world.cycle
    rec.cycles = now
    rec.interference = [list(row) for row in sim.crossbar.interference]
    rec.regions = []
    for name, unit in sim.units.items():
        unit.close(now)
        for r, (rc, st) in enumerate(zip(unit.table.configs, unit.table.states)):
            for p in st.history:
                rec.regions.append(
                    RegionPeriod(name, r, p.index, p.start_cycle, p.cycles, rc.period_cycles,
                                 p.bytes_granted, rc.budget_bytes)
                )
    rec.extra = {
        "config": sim.cfg.name,
        "config_sha256": sim.cfg.digest,
        "wait_cycles": list(sim.crossbar.wait_cycles),
        "units": {
            n: {
                "fragments_emitted": u.fragments_emitted,
                "budget_stall_cycles": u.budget_stall_cycles,
                "write_buffer_peak": u.wbuf.peak_occupancy,
            }
            for n, u in sim.units.items()
        },
        "finish_cycle": {n: (m.last_complete if m.last_complete is not None else None)
                         for n, m in rec.managers.items()},
    }
    return rec


def run_config(cfg: ExperimentConfig) -> RunResult:
    sim = build(cfg)
    if cfg.until:
        sim.world.run_until(lambda w: sim.finished(), cfg.max_cycles)
    else:
        sim.world.run(cfg.max_cycles)
    return RunResult(finalize(sim), sim.world.cycle, sim)


def run_raw(raw: dict) -> RunResult:
    return run_config(parse_config(raw))


def write_outputs(result: RunResult, out_dir: Union[str, Path]) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "metrics.csv"
    json_path = out / "metrics.json"
    csv_path.write_text(result.metrics.to_csv())
    json_path.write_text(result.metrics.to_json())
    return [csv_path, json_path]


# ----------------------------------------------------------------------
# sweeps


def jobs_limit() -> int:
    v = os.environ.get(JOBS_ENV)
    if v:
        try:
            n = int(v)
        except ValueError:
            raise ConfigError([f"{JOBS_ENV}: expected a positive integer, got {v!r}"]) from None
        if n < 1:
            raise ConfigError([f"{JOBS_ENV}: expected a positive integer, got {v!r}"])
        return n
    return os.cpu_count() or 1


def _run_point(args):
    key, raw = args
    try:
        return key, run_raw(raw).metrics.to_dict(), None
    except (SimError, ConfigError, ValueError) as e:
        return key, None, f"{type(e).__name__}: {e}".splitlines()[0]


def run_points(points: Sequence[tuple], jobs: Optional[int] = None) -> dict:
    """Run ``(key, raw_config)`` points; returns ``key -> (metrics_dict, error)``."""
    n = min(jobs or jobs_limit(), len(points)) or 1
    if n == 1:
        results = [_run_point(p) for p in points]
    else:
        with cf.ProcessPoolExecutor(max_workers=n) as ex:
            results = list(ex.map(_run_point, points))
    return {k: (m, e) for k, m, e in results}


def _sweep_key_names(cfg: ExperimentConfig) -> tuple[str, list[str], list[str]]:
    sw = cfg.sweep
    probe = sw.get("probe", "core")
    try:
        cfg.manager(probe)
    except KeyError:
        raise ConfigError([f"sweep.probe: unknown manager {probe!r}"]) from None
    aggressors = sw.get("aggressors") or [m.name for m in cfg.managers if m.kind == "dma"]
    regulated = sw.get("regulated") or [m.name for m in cfg.managers]
    for n in list(aggressors) + list(regulated):
        try:
            cfg.manager(n)
        except KeyError:
            raise ConfigError([f"sweep: unknown manager {n!r}"]) from None
    return probe, list(aggressors), list(regulated)


def _finish(md: dict, name: str) -> int:
    return md["extra"]["finish_cycle"][name]


def _mgr(md: dict, name: str) -> dict:
    for m in md["managers"]:
        if m["name"] == name:
            return m
    raise KeyError(name)


def baseline_cycles(cfg: ExperimentConfig, raw: Optional[dict] = None) -> int:
    """Probe completion cycle with every aggressor removed."""
    probe, aggressors, _ = _sweep_key_names(cfg)
    res = run_raw(without_managers(raw if raw is not None else cfg.raw, aggressors))
    return res.finish_cycle(probe)


def _csv_text(header: list[str], rows: list[list], digest: str) -> str:
    buf = io.StringIO()
    buf.write(f"# config_sha256={digest}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


FRAG_COLUMNS = ["frag", "core_cycles", "core_lat_max", "dma_bandwidth", "core_ratio", "status"]


@dataclass
class SweepResult:
    header: list[str]
    rows: list[list]
    digest: str
    baseline_cycles: Optional[int] = None

    def to_csv(self) -> str:
        return _csv_text(self.header, self.rows, self.digest)

    def column(self, name: str) -> list:
        i = self.header.index(name)
        return [r[i] for r in self.rows]


def sweep_fragmentation(
    cfg: ExperimentConfig, frags: Optional[Iterable[int]] = None, jobs: Optional[int] = None
) -> SweepResult:
    probe, aggressors, regulated = _sweep_key_names(cfg)
    frags = sorted(set(frags or cfg.sweep.get("frags") or DEFAULT_FRAGS), reverse=True)
    points = []
    for f in frags:
        edits = {}
        for n in regulated:
            edits[f"managers.{n}.realm.enabled"] = True
            edits[f"managers.{n}.realm.frag_len"] = f
        points.append((f, with_changes(cfg.raw, edits)))
    base_raw = points[0][1] if points else cfg.raw
    base = baseline_cycles(cfg, base_raw)
    results = run_points(points, jobs)
    rows = []
    dma = aggressors[0] if aggressors else None
    for f in frags:
        md, err = results[f]
        if md is None:
            rows.append([f, "", "", "", "", f"failed: {err}"])
            continue
        pc = _finish(md, probe)
        core = _mgr(md, probe)
        bw = ""
        if dma is not None:
            bw = f"{_mgr(md, dma)['bytes'] * 1000 / md['cycles']:.4f}"
        rows.append([f, pc, core["latency"]["max"], bw, f"{base / pc:.6f}", "ok"])
    return SweepResult(FRAG_COLUMNS, rows, cfg.digest, base)


BUDGET_COLUMNS = [
    "fraction",
    "dma_budget",
    "core_throughput_ratio",
    "core_lat_avg",
    "dma_bytes_per_period",
    "budget_respected",
    "status",
]


def _frac(f: Fraction) -> str:
    return f"{f.numerator}/{f.denominator}"


def sweep_budget(
    cfg: ExperimentConfig, fractions: Optional[Iterable[str]] = None, jobs: Optional[int] = None
) -> SweepResult:
    """Scale the aggressors' budget; every managed region uses the sweep period."""
    probe, aggressors, regulated = _sweep_key_names(cfg)
    sw = cfg.sweep
    base_budget = int(sw.get("budget_base", 8192))
    period = int(sw.get("period", 1000))
    frag = int(sw.get("frag_len", 1))
    fr = [Fraction(x) for x in (fractions or sw.get("fractions") or DEFAULT_FRACTIONS)]
    fr = sorted(set(fr), reverse=True)

    def regions_for(name: str, budget: int) -> list[dict]:
        regs = manager_entry(cfg.raw, name).get("realm", {}).get("regions") or []
        if not regs:
            raise ConfigError([f"managers.{name}.realm.regions: budget sweep needs regions"])
        return [dict(r, budget=budget, period=period) for r in regs]

    points = []
    for f in fr:
        edits = {}
        for n in regulated:
            b = int(base_budget * f) if n in aggressors else base_budget
            edits[f"managers.{n}.realm.enabled"] = True
            edits[f"managers.{n}.realm.frag_len"] = frag
            edits[f"managers.{n}.realm.regions"] = regions_for(n, b)
        points.append((f, with_changes(cfg.raw, edits)))
    base = baseline_cycles(cfg, points[0][1])
    results = run_points(points, jobs)
    rows = []
    dma = aggressors[0] if aggressors else None
    for f in fr:
        b = int(base_budget * f)
        md, err = results[f]
        if md is None:
            rows.append([_frac(f), b, "", "", "", "", f"failed: {err}"])
            continue
        pc = _finish(md, probe)
        core = _mgr(md, probe)
        worst_bytes = 0
        respected = True
        beat = 8
        for reg in md["regions"]:
            if reg["unit"] == dma:
                worst_bytes = max(worst_bytes, reg["bytes_granted"])
                if reg["bytes_granted"] > reg["budget_bytes"] + frag * beat:
                    respected = False
        avg = core["latency"]["avg"]
        rows.append(
            [
                _frac(f),
                b,
                f"{base / pc:.6f}",
                "" if avg is None else f"{avg:.4f}",
                worst_bytes,
                respected,
                "ok",
            ]
        )
    return SweepResult(BUDGET_COLUMNS, rows, cfg.digest, base)


def calibrate_think(
    cfg: ExperimentConfig, candidates: Iterable[int] = range(0, 41, 4), jobs: Optional[int] = None
) -> list[tuple[int, float, float]]:
    """Budget-sweep endpoints ``(think, ratio@1/1, ratio@1/5)`` per think value."""
    probe, _, _ = _sweep_key_names(cfg)
    out = []
    for t in candidates:
        raw = with_changes(cfg.raw, {f"managers.{probe}.workload.think_cycles": t})
        c = parse_config(raw)
        res = sweep_budget(c, ("1/1", "1/5"), jobs)
        ratios = dict(zip(res.column("fraction"), res.column("core_throughput_ratio")))
        out.append((t, float(ratios["1/1"]), float(ratios["1/5"])))
    return out

