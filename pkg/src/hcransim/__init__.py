"""Slotted-time simulator and solvers for queue-aware, energy-efficiency-
guaranteed downlink scheduling in two-tier H-CRANs."""

from .controller import (Assignment, DriftWeights, DualState, RbScores,
                         ScheduleInfo, admit_traffic, assign_rbs,
                         drift_weights, schedule_cost, score_rbs,
                         select_auxiliary, solve_schedule, solve_slot,
                         update_duals, waterfill_hpn, waterfill_rrh)
from .model import (ChannelState, ControlDecision, NetworkConfig,
                    instantaneous_ee, power_totals, rate_hue, rate_rue,
                    total_power_drain, total_rate)
from .oracle import (MsrResult, TinyInstance, enumerate_best_schedule,
                     msr_solve, random_tiny_instance, schedule_objective)
from .queues import (QueueState, update_traffic_queues, update_virtual_h,
                     update_virtual_z)
from .stochastic import (ArrivalSpec, ChannelSpec, Placement, draw_arrivals,
                         draw_channel, draw_placement, mean_gains,
                         pathloss_db, spawn_streams)

__version__ = "0.1.0"

__all__ = [
    "ArrivalSpec", "Assignment", "ChannelSpec", "ChannelState",
    "ControlDecision", "DriftWeights", "DualState", "MsrResult",
    "NetworkConfig", "Placement", "QueueState", "RbScores", "ScheduleInfo",
    "TinyInstance",
    "admit_traffic", "assign_rbs", "draw_arrivals", "draw_channel",
    "draw_placement", "drift_weights", "enumerate_best_schedule",
    "instantaneous_ee", "mean_gains", "msr_solve", "pathloss_db",
    "power_totals", "random_tiny_instance", "rate_hue", "rate_rue",
    "schedule_cost", "schedule_objective", "score_rbs", "select_auxiliary",
    "solve_schedule", "solve_slot", "spawn_streams", "total_power_drain",
    "total_rate", "update_duals", "update_traffic_queues",
    "update_virtual_h", "update_virtual_z", "waterfill_hpn", "waterfill_rrh",
    "__version__",
]
