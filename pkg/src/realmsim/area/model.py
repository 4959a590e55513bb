"""Linear gate-equivalent area model of the regulation units and their
configuration register file.

Each sub-block's area is ``constant + sum(coefficient * parameter)``.  Blocks
are instantiated once per system, once per unit, or once per unit and
region.  All arithmetic uses :class:`decimal.Decimal`, so results match hand
calculations from the tabulated coefficients exactly.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from decimal import Decimal
from importlib import resources
from typing import Optional

STORAGE_MODES = ("bit", "element", "exclude")


class AreaRangeWarning(UserWarning):
    """A parameter lies outside the range the coefficients were fitted on."""


@dataclass(frozen=True)
class AreaParams:
    addr_width: int = 64
    data_width: int = 64
    num_pending: int = 8
    buffer_depth: int = 16
    num_regions: int = 2
    num_units: int = 1

    def __post_init__(self) -> None:
        for name in ("addr_width", "data_width", "num_pending", "buffer_depth", "num_regions", "num_units"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise TypeError(f"{name} must be an integer")
            if v < 0:
                raise ValueError(f"{name} must be non-negative, got {v}")

    @property
    def storage_bits(self) -> int:
        return self.buffer_depth * self.data_width

    def value(self, parameter: str, storage_mode: str = "bit") -> int:
        if parameter == "storage_size":
            if storage_mode == "bit":
                return self.storage_bits
            if storage_mode == "element":
                return self.buffer_depth
            return 0
        return getattr(self, parameter)


@dataclass(frozen=True)
class Block:
    key: str
    label: str
    part: str  # "config" | "unit"
    scope: str  # "system" | "unit" | "unit_region"
    coefficients: dict
    constant: Decimal

    def area(self, params: AreaParams, storage_mode: str = "bit") -> Decimal:
        """Area of a single instance."""
        total = self.constant
        for p, c in self.coefficients.items():
            if c:
                total += c * params.value(p, storage_mode)
        return total

    def instances(self, params: AreaParams) -> int:
        if self.scope == "system":
            return 1
        if self.scope == "unit":
            return params.num_units
        return params.num_units * params.num_regions


@dataclass
class Coefficients:
    parameters: list[str]
    blocks: list[Block]
    validity: dict[str, tuple[int, int]]
    calibration: dict

    @classmethod
    def from_dict(cls, d: dict) -> Coefficients:
        blocks = []
        for b in d["blocks"]:
            if b["scope"] not in ("system", "unit", "unit_region"):
                raise ValueError(f"{b['key']}: unknown scope {b['scope']!r}")
            coeffs = {p: Decimal(v) for p, v in b["coefficients"].items()}
            unknown = set(coeffs) - set(d["parameters"])
            if unknown:
                raise ValueError(f"{b['key']}: unknown parameters {sorted(unknown)}")
            blocks.append(Block(b["key"], b["label"], b["part"], b["scope"], coeffs, Decimal(b["constant"])))
        validity = {k: (lo, hi) for k, (lo, hi) in d.get("validity", {}).items()}
        return cls(list(d["parameters"]), blocks, validity, d.get("calibration", {}))

    def block(self, key: str) -> Block:
        for b in self.blocks:
            if b.key == key:
                return b
        raise KeyError(key)


def load_coefficients(path: Optional[str] = None) -> Coefficients:
    if path is None:
        text = resources.files(__package__).joinpath("coefficients.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return Coefficients.from_dict(json.loads(text))


@dataclass
class AreaBreakdown:
    params: AreaParams
    storage_mode: str
    per_instance: dict[str, Decimal] = field(default_factory=dict)
    totals: dict[str, Decimal] = field(default_factory=dict)  # instances x per-instance
    labels: dict[str, str] = field(default_factory=dict)
    parts: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def _sum(self, part: Optional[str]) -> Decimal:
        return sum((v for k, v in self.totals.items() if part is None or self.parts[k] == part), Decimal(0))

    @property
    def config_total(self) -> Decimal:
        return self._sum("config")

    @property
    def units_total(self) -> Decimal:
        return self._sum("unit")

    @property
    def total(self) -> Decimal:
        return self._sum(None)

    @property
    def per_unit(self) -> Decimal:
        """One unit's own area (unit-scope blocks plus its regions)."""
        n = self.params.num_units
        return self.units_total / n if n else Decimal(0)

    def rows(self) -> list[tuple[str, str, Decimal, Decimal]]:
        return [(k, self.labels[k], self.per_instance[k], self.totals[k]) for k in self.totals]

    def to_csv(self) -> str:
        lines = ["block,part,per_instance_ge,total_ge"]
        for k, _, one, tot in self.rows():
            lines.append(f"{k},{self.parts[k]},{one},{tot}")
        lines.append(f"config_total,config,,{self.config_total}")
        lines.append(f"units_total,unit,,{self.units_total}")
        lines.append(f"total,,,{self.total}")
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        w = max(len(lbl) for lbl in self.labels.values()) if self.labels else 10
        out = [f"{'Block':<{w}}  {'Per instance [GE]':>18}  {'Total [GE]':>12}"]
        for _, lbl, one, tot in self.rows():
            out.append(f"{lbl:<{w}}  {one:>18}  {tot:>12}")
        out.append(f"{'Config register file':<{w}}  {'':>18}  {self.config_total:>12}")
        out.append(f"{'Regulation units':<{w}}  {'':>18}  {self.units_total:>12}")
        out.append(f"{'Total':<{w}}  {'':>18}  {self.total:>12}")
        return "\n".join(out) + "\n"


def check_ranges(params: AreaParams, coeffs: Coefficients) -> list[str]:
    out = []
    for p, (lo, hi) in coeffs.validity.items():
        v = params.value(p)
        if not lo <= v <= hi:
            out.append(f"{p}={v} outside evaluated range {lo}..{hi}")
    return out


def estimate(
    params: AreaParams, coeffs: Optional[Coefficients] = None, storage_mode: str = "bit"
) -> AreaBreakdown:
    """Area of ``params.num_units`` units plus their shared register file.

    ``storage_mode`` selects what the write-buffer storage coefficient
    multiplies: storage bits (``"bit"``, the tabulated parameter), buffer
    elements (``"element"``) or nothing (``"exclude"``).
    """
    if storage_mode not in STORAGE_MODES:
        raise ValueError(f"storage_mode must be one of {STORAGE_MODES}")
    coeffs = coeffs or load_coefficients()
    bd = AreaBreakdown(params, storage_mode)
    bd.warnings = check_ranges(params, coeffs)
    for msg in bd.warnings:
        warnings.warn(msg, AreaRangeWarning, stacklevel=2)
    for b in coeffs.blocks:
        one = b.area(params, storage_mode)
        bd.per_instance[b.key] = one
        bd.totals[b.key] = one * b.instances(params)
        bd.labels[b.key] = b.label
        bd.parts[b.key] = b.part
    return bd


@dataclass
class CalibrationLine:
    what: str
    model_ge: Decimal
    target_ge: Decimal

    @property
    def deviation(self) -> Decimal:
        return (self.model_ge - self.target_ge) / self.target_ge

    def __str__(self) -> str:
        return (
            f"{self.what}: model {self.model_ge / 1000:.3f} kGE vs {self.target_ge / 1000:.1f} kGE "
            f"({float(self.deviation) * 100:+.1f} %)"
        )


@dataclass
class CalibrationReport:
    params: AreaParams
    units_excluding_storage: CalibrationLine
    units_storage_per_element: CalibrationLine
    units_storage_per_bit: CalibrationLine
    config: CalibrationLine
    notes: list[str]

    def lines(self) -> list[CalibrationLine]:
        return [
            self.units_excluding_storage,
            self.units_storage_per_element,
            self.units_storage_per_bit,
            self.config,
        ]

    def __str__(self) -> str:
        return "\n".join([str(x) for x in self.lines()] + self.notes) + "\n"


def calibrate_check(
    params: Optional[AreaParams] = None, coeffs: Optional[Coefficients] = None
) -> CalibrationReport:
    """Compare the model at the reference configuration with the reported
    system-level areas of the three units and of their register file."""
    coeffs = coeffs or load_coefficients()
    cal = coeffs.calibration
    if params is None:
        params = AreaParams(**cal["params"])
    units_target = Decimal(cal["units_kge"]) * 1000
    cfg_target = Decimal(cal["config_kge"]) * 1000
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AreaRangeWarning)
        by_mode = {m: estimate(params, coeffs, m) for m in STORAGE_MODES}
    n = params.num_units
    report = CalibrationReport(
        params,
        CalibrationLine(f"{n} units, storage term excluded", by_mode["exclude"].units_total, units_target),
        CalibrationLine(f"{n} units, storage per buffer element", by_mode["element"].units_total, units_target),
        CalibrationLine(f"{n} units, storage per bit", by_mode["bit"].units_total, units_target),
        CalibrationLine("configuration register file", by_mode["bit"].config_total, cfg_target),
        [
            "note: the write-buffer storage coefficient's unit is ambiguous; per storage bit "
            f"({params.storage_bits} bit) it dominates the unit area, per element "
            f"({params.buffer_depth}) it lands near the reported total. Both are shown, "
            "neither is assumed.",
        ],
    )
    return report
