"""Sample-based reliability optimization of general systems.

Minimizes a design cost subject to a buffered-failure-probability bound
estimated from realizations of the random inputs.  The failure event is a
link-set of cut-sets over component limit states; the solver penalizes
the reliability constraint, linearizes the components at the current
candidate, and drives each resulting difference-of-convex subproblem to a
critical point with a proximal bundle method.
"""

from .bundle import (
    BundleElement,
    BundleParams,
    BundleResult,
    InnerState,
    cutting_plane_value,
    dc_bundle_solve,
    inner_step,
)
from .dc_model import (
    DcPenaltyOracle,
    DcValue,
    Linearization,
    PenaltyConfig,
    dc_oracle,
    evaluate_gamma_lambda,
    evaluate_pk,
    evaluate_psi_phi,
    linearize,
    model_objective,
    penalized_objective,
)
from .driver import (
    AlgorithmParams,
    RunResult,
    SolverState,
    TraceRecord,
    predicted_decrease,
    sborm_run,
    select_active_set,
)
from .problems import (
    FailureModeTable,
    beam_problem,
    build_problem,
    draw_samples,
    load_failure_modes,
    power_problem,
    sample_count_from_cov,
    truss_problem,
)
from .qp import BundleQp, QpSolution, solve_bundle_qp
from .reliability import (
    ComponentEvaluation,
    ProblemDefinition,
    SampleSet,
    SystemStructure,
    buffered_failure_probability,
    empirical_quantile,
    empirical_superquantile,
    estimate_failure_probability,
    system_limit_state,
)
from .sampling import latin_hypercube

__version__ = "0.1.0"
