"""End-to-end acceptance criteria, one test per criterion.

Each test prints (and records for the terminal summary) a single
``PASS``/``FAIL`` line with the measured quantities, then asserts.
"""
from __future__ import annotations

import copy
import csv
import io
import os
import random
import subprocess
import sys
import time
from decimal import Decimal
from fractions import Fraction

import pytest

from conftest import ACCEPTANCE_LINES
from harness import check_guard_sequence, random_budget_case, random_guard_ops, run_budget_case
from realmsim.axi import BurstRequest, ReadBeat, Resp, WriteResponse
from realmsim.cli import main as cli_main
from realmsim.config import load_config, parse_config, with_changes, without_managers
from realmsim.experiments import calibrate_think, run_config, run_raw, sweep_budget, sweep_fragmentation
from realmsim.realm.splitter import coalesce_write_responses, gate_read_last, split_burst

LLC = 0x8000_0000


def report(n: int, ok: bool, title: str, detail: str, seconds: float) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {title} -- {detail} ({seconds:.2f} s)"
    print(line)
    ACCEPTANCE_LINES.append(line)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.s = time.perf_counter() - self.t0


# ----------------------------------------------------------------------


def test_c01_single_source_latency():
    with Timer() as t:
        cfg = load_config("single_source")
        bypass = run_config(cfg).manager("core").latencies
        raw = with_changes(
            cfg.raw,
            {
                "managers.core.realm": {
                    "enabled": True,
                    "regions": [{"subordinate": "llc", "budget": 1 << 30, "period": 1_000_000}],
                }
            },
        )
        realm = run_raw(raw).manager("core").latencies
    ok = set(bypass) == {8} and set(realm) == {9} and t.s < 1.0
    report(1, ok, "single-source latency",
           f"bypassed {sorted(set(bypass))}, regulated {sorted(set(realm))} over {len(bypass)} accesses", t.s)
    assert ok


def _phase_sweep_raw(tmp_path, cfg, spacing=264, count=40, first=300):
    """Core replaced by a single-outstanding trace whose request phase
    slides one cycle per access through the DMA's burst window."""
    trace = tmp_path / "phase.trace"
    trace.write_text("".join(f"{first + spacing * k},R,{LLC + 8 * k:#x},1\n" for k in range(count)))
    raw = copy.deepcopy(cfg.raw)
    for i, m in enumerate(raw["managers"]):
        if m["name"] == "core":
            raw["managers"][i] = {
                "name": "core", "tid": m["tid"], "kind": "trace", "trace": str(trace),
                "max_outstanding": 1, "realm": {"enabled": False},
            }
    return raw


def test_c02_uncontrolled_contention(tmp_path):
    with Timer() as t:
        cfg = load_config("contention")
        lat = run_config(cfg).manager("core").latencies
        saturated = lat[2:]  # the DMA's first read burst is granted after the core's first access
        sweep = run_raw(_phase_sweep_raw(tmp_path, cfg)).manager("core").latencies
    worst = max(max(lat), max(sweep))
    rising = all(b - a == 1 for a, b in zip(sweep, sweep[1:]) if b < 264)
    ok = max(lat) == 264 and min(saturated) == 264 and max(sweep) == 264 and rising and t.s < 5.0
    report(2, ok, "uncontrolled contention worst case",
           f"blocking core max {max(lat)} (min {min(saturated)} once saturated); phase sweep "
           f"{min(sweep)}..{max(sweep)} over {len(sweep)} offsets; worst {worst}", t.s)
    assert ok


def test_c03_fragmentation_recovery():
    with Timer() as t:
        cfg = load_config("frag_sweep")
        raw = with_changes(
            cfg.raw, {"managers.core.realm.frag_len": 1, "managers.dma.realm.frag_len": 1}
        )
        core = run_raw(raw).manager("core")
    ok = core.latency.max <= 10 and t.s < 5.0
    report(3, ok, "fragmentation recovery at frag=1",
           f"core lat_max {core.latency.max} (bound 10), avg {core.latency.avg:.2f}", t.s)
    assert ok


_SWEEPS: dict = {}


def _frag_sweep():
    if "frag" not in _SWEEPS:
        with Timer() as t:
            _SWEEPS["frag"] = sweep_fragmentation(load_config("frag_sweep"))
        _SWEEPS["frag_s"] = t.s
    return _SWEEPS["frag"], _SWEEPS["frag_s"]


def test_c04_monotone_fragmentation_sweep():
    res, secs = _frag_sweep()
    frags = res.column("frag")
    cycles = res.column("core_cycles")
    ratio = dict(zip(frags, (float(r) for r in res.column("core_ratio"))))
    strict = all(a > b for a, b in zip(cycles, cycles[1:])) and frags == sorted(frags, reverse=True)
    bound256 = Fraction(8, 264)
    ok256 = Fraction(res.baseline_cycles, cycles[0]) <= bound256
    ok1 = ratio[1] >= 0.80
    ok = strict and ok256 and ok1 and secs < 30.0 and all(s == "ok" for s in res.column("status"))
    report(4, ok, "monotone fragmentation sweep",
           f"strictly decreasing={strict} {cycles}; ratio@256 {ratio[256]:.4f} "
           f"({'<=' if ok256 else '>'} 8/264={float(bound256):.4f}); ratio@1 {ratio[1]:.4f} (>= 0.80: {ok1})",
           secs)
    assert ok


def test_c05_budget_sweep():
    with Timer() as t:
        cfg = load_config("budget_sweep")
        res = sweep_budget(cfg)
        # search for a think time that pushes the 1/1 point below 0.80
        calib = calibrate_think(cfg, (0, 4, 16))
    best_think, best_11, _ = min(calib, key=lambda c: c[1])
    ratios = [float(r) for r in res.column("core_throughput_ratio")]
    fr = res.column("fraction")
    monotone = all(b >= a for a, b in zip(ratios, ratios[1:]))
    r11, r15 = ratios[fr.index("1/1")], ratios[fr.index("1/5")]
    safe = all(res.column("budget_respected"))
    ok = monotone and r15 > 0.95 and r11 < 0.80 and safe and t.s < 30.0
    calib_txt = ", ".join(f"think {k}: 1/1 {a:.4f}" for k, a, _ in calib)
    report(5, ok, "budget sweep",
           f"ratios {dict(zip(fr, ratios))}; non-decreasing={monotone}; 1/5 {r15:.4f} (> 0.95); "
           f"1/1 {r11:.4f} (target < 0.80: {r11 < 0.80}; calibration {calib_txt}; lowest {best_11:.4f} "
           f"at think {best_think}); budget respected={safe}", t.s)
    assert ok


def test_c06_budget_safety_property():
    rng = random.Random(20240607)
    cases = periods = saturated = 0
    worst_over = 0
    violations = []
    frag1_worst = 0
    with Timer() as t:
        for _ in range(1000):
            case = random_budget_case(rng)
            cases += 1
            for region, granted, allowed in run_budget_case(case):
                periods += 1
                over = granted - region.budget_bytes
                saturated += over >= 0
                worst_over = max(worst_over, over)
                if over > allowed:
                    violations.append((case, region, granted))
                if case.frag == 1:
                    frag1_worst = max(frag1_worst, over)
    ok = not violations and frag1_worst <= 8 and t.s < 60.0
    report(6, ok, "budget safety property suite",
           f"{cases} cases, {periods} periods ({saturated} reached their budget), "
           f"violations {len(violations)}, frag=1 worst overshoot {frag1_worst} B (<= 8)", t.s)
    assert ok


def _expected_granularity(length: int, modifiable: bool, atomic: bool, frag: int) -> int:
    if atomic or (not modifiable and length <= 16):
        return length
    return min(frag, 16) if not modifiable else frag


def test_c07_splitter_conformance():
    rng = random.Random(7)
    statuses = [Resp.OKAY, Resp.EXOKAY, Resp.SLVERR, Resp.DECERR]
    rank = {Resp.OKAY: 0, Resp.EXOKAY: 1, Resp.SLVERR: 2, Resp.DECERR: 3}
    failures = []
    with Timer() as t:
        for i in range(10_000):
            length = rng.randint(1, 256)
            mod, atomic = rng.random() < 0.7, rng.random() < 0.15
            frag = rng.randint(1, 256)
            req = BurstRequest(i, 3, 0x1000 * rng.randint(0, 255), length, 8, is_write=rng.random() < 0.5,
                               modifiable=mod, atomic=atomic)
            frags = split_burst(req, frag)
            g = min(_expected_granularity(length, mod, atomic, frag), length)
            covered = [f.addr + 8 * k for f in frags for k in range(f.len_beats)]
            if covered != [req.addr + 8 * k for k in range(length)]:
                failures.append((req, frag, "coverage"))
            if len(frags) != -(-length // g):
                failures.append((req, frag, "count"))
            rs = [WriteResponse(req.txn_id, rng.choice(statuses), 3, f.frag_index) for f in frags]
            merged = coalesce_write_responses(rs)
            if merged.status != max(rs, key=lambda r: rank[r.status]).status or merged.txn_id != req.txn_id:
                failures.append((req, frag, "coalesce"))
            lasts = 0
            for f in frags:
                for k in range(f.len_beats):
                    beat = ReadBeat(req.txn_id, k, k == f.len_beats - 1, frag_offset=f.frag_offset)
                    lasts += gate_read_last(beat, length, f.frag_offset + k).last
            if lasts != 1:
                failures.append((req, frag, "last"))
    ok = not failures and t.s < 10.0
    report(7, ok, "splitter conformance property suite",
           f"10000 bursts, {len(failures)} failures (coverage, count, coalesced status, single last)", t.s)
    assert ok


def test_c08_dos_immunity():
    with Timer() as t:
        cfg = load_config("dos")
        with_st = run_config(cfg)
        without = run_raw(without_managers(cfg.raw, ["staller"]))
    st = with_st.sim.managers["staller"]
    core_eq = with_st.sim.managers["core"].completions == without.sim.managers["core"].completions
    dma_eq = with_st.sim.managers["dma"].completions == without.sim.managers["dma"].completions
    stalling = st.aw_accept_cycle is not None and st.first_w_cycle is None
    ok = core_eq and dma_eq and stalling and t.s < 5.0
    report(8, ok, "DoS immunity with write buffer",
           f"staller AW accepted at {st.aw_accept_cycle}, no W sent; core completions identical={core_eq} "
           f"({len(with_st.sim.managers['core'].completions)}), DMA identical={dma_eq} "
           f"({len(with_st.sim.managers['dma'].completions)})", t.s)
    assert ok


def test_c09_bus_guard_property():
    rng = random.Random(99)
    failures = 0
    with Timer() as t:
        for i in range(1000):
            ops = random_guard_ops(rng, 30)
            try:
                check_guard_sequence(ops, hwrot_tid=None if i % 4 else rng.choice([0, 1, 2, 3]))
            except AssertionError:
                failures += 1
    ok = failures == 0 and t.s < 5.0
    report(9, ok, "bus guard protocol property", f"1000 sequences x 30 accesses, {failures} violations", t.s)
    assert ok


# Hand-derived from the tabulated coefficients at 64-bit address/data,
# 8 pending, 16-deep buffer (1024 storage bits), 2 regions.
AREA_ORACLE = {
    "bus_guard": Decimal("260.6"),
    "burst_config_register": Decimal("83.5"),
    "cs_register": Decimal("24.6"),
    "budget_period_register": Decimal("1319.6"),
    "region_boundary_register": Decimal("1318.4"),  # 20.6*64
    "isolate_throttle": Decimal("735.9"),  # 267.1 + 3.5*64 + 2.7*64 + 9.0*8
    "burst_splitter": Decimal("13921.4"),  # 4835.0 + 49.3*64 + 1.5*64 + 729.4*8
    "meta_buffer": Decimal("3748.1"),  # 1309.7 + 38.1*64
    "write_buffer": Decimal("270757.0"),  # 11.4 + 264.4*1024
    "tracking_counters": Decimal("1928.5"),
    "region_decoders": Decimal("1331.2"),  # 20.8*64
}


def test_c10_area_model(tmp_path, capsys):
    out = tmp_path / "area.csv"
    with Timer() as t:
        rc = cli_main(["area", "--addr-bits", "64", "--data-bits", "64", "--pending", "8", "--depth", "16",
                       "--regions", "2", "--units", "3", "--csv", str(out), "--calibrate"])
    text = capsys.readouterr().out
    rows = {r["block"]: r for r in csv.DictReader(io.StringIO(out.read_text()))}
    mismatches = [k for k, v in AREA_ORACLE.items() if Decimal(rows[k]["per_instance_ge"]) != v]
    cal = {}
    for line in text.splitlines():
        if "kGE" in line and "(" in line:
            cal[line.split(":")[0]] = float(line.rsplit("(", 1)[1].split()[0]) / 100
    excl = cal["3 units, storage term excluded"]
    cfg_gap = cal["configuration register file"]
    flagged = "ambiguous" in text
    ok = rc == 0 and not mismatches and abs(excl) <= 0.15 and flagged and t.s < 1.0
    report(10, ok, "area model",
           f"{len(AREA_ORACLE) - len(mismatches)}/{len(AREA_ORACLE)} sub-blocks exact; units excl. storage "
           f"{excl:+.1%} (within 15 %), per element {cal['3 units, storage per buffer element']:+.1%}, "
           f"per bit {cal['3 units, storage per bit']:+.1%}; register file {cfg_gap:+.1%}; "
           f"storage ambiguity flagged={flagged}", t.s)
    assert ok


def _cli_outputs(name: str, out, hash_seed: str) -> tuple[bytes, bytes]:
    env = dict(os.environ, PYTHONHASHSEED=hash_seed)
    subprocess.run([sys.executable, "-m", "realmsim", "run", "--config", name, "--out", str(out)],
                   check=True, env=env, capture_output=True)
    return (out / "metrics.csv").read_bytes(), (out / "metrics.json").read_bytes()


def test_c11_determinism(tmp_path):
    same = {}
    with Timer() as t:
        for name in ("single_source", "contention", "dos"):
            a = _cli_outputs(name, tmp_path / f"{name}-a", "1")
            b = _cli_outputs(name, tmp_path / f"{name}-b", "2")
            same[name] = a == b
        first, _ = _frag_sweep()
        again = sweep_fragmentation(load_config("frag_sweep"), jobs=2)
        same["frag_sweep"] = first.to_csv() == again.to_csv()
        b1 = sweep_budget(load_config("budget_sweep"), jobs=1)
        b2 = sweep_budget(load_config("budget_sweep"), jobs=2)
        same["budget_sweep"] = b1.to_csv() == b2.to_csv()
    ok = all(same.values())
    report(11, ok, "determinism",
           "byte-identical reruns: " + ", ".join(f"{k}={v}" for k, v in same.items()), t.s)
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
