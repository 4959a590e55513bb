"""Latency, bandwidth and interference bookkeeping with CSV/JSON export."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

# Power-of-two bucket edges; bucket i covers [EDGES[i], EDGES[i+1]), the final
# bucket collects everything at or above 4096 cycles.
HIST_EDGES = [0] + [1 << k for k in range(13)]

CSV_COLUMNS = [
    "manager",
    "issued",
    "completed",
    "bytes",
    "lat_min",
    "lat_avg",
    "lat_max",
    "bw_bytes_per_kcycle",
]


class MetricsError(RuntimeError):
    pass


def bucket_of(latency: int) -> int:
    for i in range(len(HIST_EDGES) - 1, -1, -1):
        if latency >= HIST_EDGES[i]:
            return i
    raise MetricsError(f"negative latency {latency}")


@dataclass
class LatencyStats:
    count: int = 0
    total: int = 0
    min: Optional[int] = None
    max: Optional[int] = None
    hist: list[int] = field(default_factory=lambda: [0] * len(HIST_EDGES))

    def add(self, latency: int) -> None:
        self.hist[bucket_of(latency)] += 1
        self.count += 1
        self.total += latency
        self.min = latency if self.min is None else min(self.min, latency)
        self.max = latency if self.max is None else max(self.max, latency)

    @property
    def avg(self) -> Optional[float]:
        return self.total / self.count if self.count else None


@dataclass
class ManagerMetrics:
    name: str
    tid: int
    issued: int = 0
    completed: int = 0
    bytes: int = 0
    first_issue: Optional[int] = None
    last_complete: Optional[int] = None
    latency: LatencyStats = field(default_factory=LatencyStats)
    latencies: list[int] = field(default_factory=list)
    _open: dict = field(default_factory=dict, compare=False, repr=False)


@dataclass
class RegionPeriod:
    unit: str
    region: int
    index: int
    start_cycle: int
    cycles: int
    period_cycles: int
    bytes_granted: int
    budget_bytes: int

    @property
    def bandwidth(self) -> float:
        """Bytes per cycle over the configured period."""
        return self.bytes_granted / self.period_cycles


@dataclass
class MetricsRecord:
    cycles: int = 0
    managers: dict[str, ManagerMetrics] = field(default_factory=dict)
    regions: list[RegionPeriod] = field(default_factory=list)
    interference: list[list[int]] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def add_manager(self, name: str, tid: int) -> ManagerMetrics:
        if name in self.managers:
            raise MetricsError(f"duplicate manager {name!r}")
        m = ManagerMetrics(name, tid)
        self.managers[name] = m
        n = len(self.managers)
        for row in self.interference:
            row.append(0)
        self.interference.append([0] * n)
        return m

    def _mgr(self, name: str) -> ManagerMetrics:
        try:
            return self.managers[name]
        except KeyError:
            raise MetricsError(f"unknown manager {name!r}") from None

    def record_issue(self, name: str, txn_id: int, cycle: int, nbytes: int) -> None:
        m = self._mgr(name)
        if txn_id in m._open:
            raise MetricsError(f"{name}: txn {txn_id} issued twice")
        m._open[txn_id] = (cycle, nbytes)
        m.issued += 1
        if m.first_issue is None:
            m.first_issue = cycle

    def record_complete(self, name: str, txn_id: int, cycle: int) -> int:
        m = self._mgr(name)
        try:
            issue, nbytes = m._open.pop(txn_id)
        except KeyError:
            raise MetricsError(f"{name}: completion of txn {txn_id} without issue") from None
        lat = cycle - issue
        m.completed += 1
        m.bytes += nbytes
        m.latency.add(lat)
        m.latencies.append(lat)
        m.last_complete = cycle
        return lat

    def record_stall(self, i: int, j: int, cycles: int) -> None:
        if i == j:
            raise MetricsError("a manager cannot interfere with itself")
        self.interference[i][j] += cycles

    # ------------------------------------------------------------------
    # export

    def csv_rows(self) -> list[list]:
        rows = []
        for m in self.managers.values():
            lat = m.latency
            bw = m.bytes * 1000 / self.cycles if self.cycles else 0.0
            rows.append(
                [
                    m.name,
                    m.issued,
                    m.completed,
                    m.bytes,
                    "" if lat.min is None else lat.min,
                    "" if lat.avg is None else f"{lat.avg:.4f}",
                    "" if lat.max is None else lat.max,
                    f"{bw:.4f}",
                ]
            )
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(self.csv_rows())
        return buf.getvalue()

    def to_dict(self) -> dict:
        names = list(self.managers)
        return {
            "cycles": self.cycles,
            "managers": [
                {
                    "name": m.name,
                    "tid": m.tid,
                    "issued": m.issued,
                    "completed": m.completed,
                    "bytes": m.bytes,
                    "first_issue": m.first_issue,
                    "last_complete": m.last_complete,
                    "latency": {
                        "count": m.latency.count,
                        "total": m.latency.total,
                        "min": m.latency.min,
                        "avg": m.latency.avg,
                        "max": m.latency.max,
                        "hist_edges": HIST_EDGES,
                        "hist": m.latency.hist,
                    },
                    "latencies": m.latencies,
                }
                for m in self.managers.values()
            ],
            "regions": [dict(asdict(r), bandwidth=r.bandwidth) for r in self.regions],
            "interference": {"managers": names, "matrix": self.interference},
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> MetricsRecord:
        rec = cls(cycles=d["cycles"], extra=d.get("extra", {}))
        for md in d["managers"]:
            lat = md["latency"]
            rec.managers[md["name"]] = ManagerMetrics(
                md["name"],
                md["tid"],
                md["issued"],
                md["completed"],
                md["bytes"],
                md["first_issue"],
                md["last_complete"],
                LatencyStats(lat["count"], lat["total"], lat["min"], lat["max"], list(lat["hist"])),
                list(md["latencies"]),
            )
        for r in d["regions"]:
            r = dict(r)
            r.pop("bandwidth")
            rec.regions.append(RegionPeriod(**r))
        rec.interference = [list(row) for row in d["interference"]["matrix"]]
        return rec

    @classmethod
    def from_json(cls, text: str) -> MetricsRecord:
        return cls.from_dict(json.loads(text))
