"""csalloc: certifiable hybrid optimizer for CSA collateral allocation.

Pipeline: parse a CSA-aware case file, explore integer-lot allocations
with simulated annealing plus micro higher-order quantum-style jumps on
binding subsets, certify the incumbent exactly, and emit a governance
bundle.
"""

__version__ = "0.1.0"

from .case import CaseInput, parse_case  # noqa: E402
from .requirement import Allocation, check_feasible, effective_requirement, min_buffer  # noqa: E402
from .objective import breakdown, calibrate_weights, cvar  # noqa: E402
from .baselines import bl1_density_greedy, bl2_bucket_first, bl3_two_opt  # noqa: E402
from .explorer import hybrid_optimize, repair  # noqa: E402
from .certifier import brute_force, certify, ucap_precheck  # noqa: E402
from .generator import GenSpec, generate  # noqa: E402
from .governance import emit_bundle, render_report  # noqa: E402

__all__ = [
    "__version__",
    "CaseInput",
    "parse_case",
    "Allocation",
    "check_feasible",
    "effective_requirement",
    "min_buffer",
    "breakdown",
    "calibrate_weights",
    "cvar",
    "bl1_density_greedy",
    "bl2_bucket_first",
    "bl3_two_opt",
    "hybrid_optimize",
    "repair",
    "brute_force",
    "certify",
    "ucap_precheck",
    "GenSpec",
    "generate",
    "emit_bundle",
    "render_report",
]
