"""Multi-block structured-grid compressible-flow mini-solver.

Fifth-order weighted compact nonlinear interpolation in space, three-stage
strong-stability-preserving Runge-Kutta in time, and the parallel machinery
around it: zone partitioning with device regrouping, width-5 halo exchange
with message coalescing and compute overlap, and a modeled heterogeneous
CPU+coprocessor runtime with a benchmark harness.
"""

from .cases import (Case, case_plan, corner_case, generate_case,
                    initial_fields, load_case, save_case, sod_case,
                    uniform_case, wave_case, with_load_ratio)
from .devices import (DEFAULT_COPROCESSOR, DEFAULT_CPU, DEFAULT_LINK,
                      DEFAULT_NETWORK, DeviceModel, LinkModel, NetworkModel,
                      ResidencyCache)
from .dumps import merge_dumps, read_dump, write_dump, zone_array
from .errors import (CaseFormatError, DeviceBudgetError, DivergenceError,
                     HaloPlanError, InvalidStateError, PartitionError,
                     StencilError, TransportError, WcnsflowError)
from .fields import BlockField, FieldSet, allocate_fields, assemble_zone
from .halo import HaloExchanger, HaloPlan, build_halo_plan
from .metrics import RunMetrics, mcups, metrics_from_csv, metrics_to_csv
from .partition import (Block, NodeTopology, PartitionPlan, ZoneSpec,
                        make_plan, plan_from_text, plan_to_text)
from .riemann import solve_riemann
from .runner import (RunOutcome, best_ratio, build_simulation,
                     cpu_only_variant, model_schedule,
                     predict_balanced_ratio, run_case, run_socket_rank,
                     strong_scaling, sweep_load_ratio, weak_scaling)
from .schedule import Timeline, timeline_report
from .state import GasModel, NCOMP
from .timestepping import IterationControls, stable_dt
from .transport import InProcessTransport, SocketTransport, free_port
from .wcns import HALO_WIDTH

__version__ = "0.1.0"

__all__ = [
    "BlockField", "Block", "Case", "CaseFormatError", "DEFAULT_COPROCESSOR",
    "DEFAULT_CPU", "DEFAULT_LINK", "DEFAULT_NETWORK", "DeviceBudgetError",
    "DeviceModel", "DivergenceError", "FieldSet", "GasModel", "HALO_WIDTH",
    "HaloExchanger", "HaloPlan", "HaloPlanError", "InProcessTransport",
    "InvalidStateError", "IterationControls", "LinkModel", "NCOMP",
    "NetworkModel", "NodeTopology", "PartitionError", "PartitionPlan",
    "ResidencyCache", "RunMetrics", "RunOutcome", "SocketTransport",
    "StencilError", "Timeline", "TransportError", "WcnsflowError",
    "ZoneSpec", "allocate_fields", "assemble_zone", "best_ratio",
    "build_halo_plan", "build_simulation", "case_plan", "corner_case",
    "cpu_only_variant", "free_port", "generate_case", "initial_fields",
    "load_case", "make_plan", "mcups", "merge_dumps", "metrics_from_csv",
    "metrics_to_csv", "model_schedule", "plan_from_text", "plan_to_text",
    "predict_balanced_ratio", "read_dump", "run_case", "run_socket_rank",
    "save_case", "sod_case", "solve_riemann", "stable_dt", "strong_scaling",
    "sweep_load_ratio", "timeline_report", "uniform_case", "wave_case",
    "weak_scaling", "with_load_ratio", "write_dump", "zone_array",
]
