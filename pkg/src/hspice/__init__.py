"""State-aware event shedding for a single complex-event-processing operator."""
from .events import Event, StreamSchema, WindowKind, WindowSpec, read_stream, write_stream
from .operator import CEPOperator, ComplexEvent, NeverDrop, ShedDecider
from .patterns import PatternSet, PatternSpec, Policy, any_k, negated, single
from .model import ShedModel, train
from .planner import OverloadController, PlanCell, ShedPlan, compute_drop_amount, threshold_for
from .shedders import SHEDDER_KINDS, HspiceShedder, make_shedder
from .stats import StatsCollector, UtilityTable, build_utility_table

__version__ = "0.1.0"

__all__ = [
    "CEPOperator", "ComplexEvent", "Event", "HspiceShedder", "NeverDrop", "OverloadController",
    "PatternSet", "PatternSpec", "PlanCell", "Policy", "SHEDDER_KINDS", "ShedDecider", "ShedModel",
    "ShedPlan", "StatsCollector", "StreamSchema", "UtilityTable", "WindowKind", "WindowSpec", "any_k",
    "build_utility_table", "compute_drop_amount", "make_shedder", "negated", "read_stream", "single",
    "threshold_for", "train", "write_stream",
]
