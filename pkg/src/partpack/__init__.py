"""Minimum-weight set packing over part detections.

Column generation over poses (detection subsets) with two interchangeable
pricing engines: an exact dynamic program over the part tree and a nested
Benders decomposition that recycles its cuts between calls.
"""

from .instance import (
    GeneratorConfig,
    InstanceError,
    InstanceFormatError,
    Pose,
    ProblemInstance,
    ValidationIssue,
    generate_instance,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    pose_cost,
    reduced_cost,
    save_instance,
    validate_instance,
)
from .states import (
    DEFAULT_STATE_CAP,
    PotentialTable,
    StateSpace,
    build_state_space,
    phi_value,
    psi_table,
    state_indicator,
)
from .lp import LpError, LpProblem, LpSolution, solve_binary_ilp, solve_lp
from .pricing import PricingModel, build_pricing_model, select_root
from .dp import DpPricer, MessageTable, dp_messages, dp_price
from .nbd import BendersRow, NbdError, NbdInvariantError, NbdPricer, RowPool
from .master import (
    ColumnPool,
    DoiBounds,
    EngineMismatchError,
    IcgNotConvergedError,
    SolveResult,
    SolverConfig,
    SolverError,
    anytime_lower_bound,
    compute_doi,
    enumerate_neck_contexts,
    icg_solve,
    solution_to_dict,
    solve_rmp,
    verify_solution,
)
from .oracle import brute_force_mwsp, enumerate_poses, full_lp_value
from .bench import BenchReport, BenchSuite, default_suite, load_suite, run_benchmark, write_report_csv

__version__ = "0.1.0"
