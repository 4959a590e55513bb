"""Per-manager regulation unit: isolation, burst splitter, write buffer, M&R."""

from .budget import (
    AccountDecision,
    BudgetConfigError,
    RegionConfig,
    RegionState,
    RegionTable,
    mr_account,
    replenish,
    throttle_limit,
)
from .isolation import Cause, IsolationState, Mode, isolation_tick
from .splitter import (
    LineageError,
    coalesce_write_responses,
    effective_granularity,
    gate_read_last,
    is_splittable,
    split_burst,
)
from .unit import RealmConfig, RealmConfigError, RealmUnit
from .write_buffer import WriteBuffer

__all__ = [
    "AccountDecision",
    "BudgetConfigError",
    "Cause",
    "IsolationState",
    "LineageError",
    "Mode",
    "RealmConfig",
    "RealmConfigError",
    "RealmUnit",
    "RegionConfig",
    "RegionState",
    "RegionTable",
    "WriteBuffer",
    "coalesce_write_responses",
    "effective_granularity",
    "gate_read_last",
    "is_splittable",
    "isolation_tick",
    "mr_account",
    "replenish",
    "split_burst",
    "throttle_limit",
]
