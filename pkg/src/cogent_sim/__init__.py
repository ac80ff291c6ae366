"""Trace-driven simulator of generative hits in an edge cache."""

from .config import RunConfig, simulate
from .controller import AccessHistory, DecisionTree, TwoProngedController, build_samples, train
from .engine import Architecture, SimConfig, SimReport, percentile, redundancy_rate, run
from .genhit import CostModel, estimate_latency, generate, merge_blocks, split_block
from .judgment import Outcome, ShieldConfig, ShieldReason, classify
from .models import CpuModel, LatencyMode, LatencyModel, ScenarioKind, admit_cpu
from .policies import make_cache
from .trace import ParamSet, RequestRecord, SyntheticSpec, generate_synthetic_trace, parse_trace, write_trace

__version__ = "0.1.0"

__all__ = [
    "AccessHistory", "Architecture", "CostModel", "CpuModel", "DecisionTree", "LatencyMode",
    "LatencyModel", "Outcome", "ParamSet", "RequestRecord", "RunConfig", "ScenarioKind",
    "ShieldConfig", "ShieldReason", "SimConfig", "SimReport", "SyntheticSpec", "TwoProngedController",
    "admit_cpu", "build_samples", "classify", "estimate_latency", "generate",
    "generate_synthetic_trace", "make_cache", "merge_blocks", "parse_trace", "percentile",
    "redundancy_rate", "run", "simulate", "split_block", "train", "write_trace",
]
