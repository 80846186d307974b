"""stencil_lab: sweep strategies for compact stencils on regular grids.

Serial, colouring, nested dissection, dependence-graph tasking, and two
hybrid traversals, all running on a dependency-aware work-stealing task pool,
with execution tracing, race/ordering verification, and a benchmark CLI.
"""

from .bench import (BenchConfig, BenchResult, ConfigError, Report,
                    StrategyRunner, mesh_digest, parse_cost, run_benchmark,
                    run_verification)
from .kernels import (FD5, FD7, FE9, FE27, STENCILS, CostModel, NumericsError,
                      ScalarCellKernel, StencilKind, get_stencil, residual_max,
                      update_cell, update_cells_batch)
from .mesh import Mesh, init, make_mesh
from .strategies import (STRATEGY_IDS, Box, DissectionNode, SweepPlan,
                         colour_count, colour_of, dissect, run_sweep,
                         sweep_colouring, sweep_colouring_reference,
                         sweep_hyb_depend, sweep_hyb_sync,
                         sweep_nested_dissection, sweep_serial,
                         sweep_taskgraph)
from .taskrt import (DependencyTracker, Schedule, StallError, TaskRecord,
                     WaitScope, WorkerPool, make_task, oracle_edges)
from .trace import (Trace, TraceLog, assignment_map, band_contiguity,
                    check_adjacency_exclusion, check_edge_order, dump_text,
                    merge_logs, parse_text, render_assignment_map)

__version__ = "0.1.0"
