"""Outer loop: active sampling, relinearization, penalty scheduling, descent.

Each outer iteration evaluates the system limit state on the full sample
set at the current candidate, keeps only the samples closest to failure,
linearizes the component limit states there, and hands the resulting DC
subproblem to the bundle solver under a proximal tether.  A serious/null
test on the true penalized objective decides whether the candidate moves;
the penalty weight grows geometrically either way.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .bundle import BundleParams, dc_bundle_solve
from .dc_model import DcPenaltyOracle, PenaltyConfig, linearize
from .reliability import (
    ProblemDefinition,
    SampleSet,
    buffered_failure_probability,
    empirical_quantile,
    estimate_failure_probability,
)

__all__ = [
    "AlgorithmParams",
    "SolverState",
    "TraceRecord",
    "RunResult",
    "select_active_set",
    "predicted_decrease",
    "sborm_run",
]


@dataclass
class AlgorithmParams:
    """Outer-loop parameters with the published defaults."""

    lambda0: float = 0.01
    theta0: float = 1.0
    theta_max: float = 1e5
    omega: float = 2.0
    kappa: float = 0.01
    tol: float = 0.01
    max_outer: int = 200
    gamma_init: Optional[float] = None  # None: start at the failure quantile
    inner: BundleParams = field(default_factory=BundleParams)

    def __post_init__(self):
        if self.lambda0 <= 0.0:
            raise ValueError("lambda0 must be positive")
        if self.theta0 <= 0.0:
            raise ValueError("theta0 must be positive")
        if self.theta_max < self.theta0:
            raise ValueError("theta_max must be at least theta0")
        if self.omega < 1.0:
            raise ValueError("omega must be at least 1")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError("kappa must lie in (0, 1)")
        if self.tol < 0.0:
            raise ValueError("tol must be nonnegative")
        if self.max_outer < 1:
            raise ValueError("max_outer must be positive")


@dataclass
class SolverState:
    """Mutable snapshot of the outer iteration."""

    iteration: int
    x: np.ndarray
    gamma: float
    lam: float
    theta: float
    active: np.ndarray
    step1_visits: int = 0
    step2_visits: int = 0
    serious_steps: int = 0


@dataclass(frozen=True)
class TraceRecord:
    """One outer iteration of the run log."""

    nu: int
    step_type: str
    lam: float
    theta: float
    f_value: float
    step_norm: float
    active_churn: float


@dataclass(frozen=True)
class RunResult:
    """Outcome of one optimization run."""

    x: np.ndarray
    gamma: float
    cost: float
    bpf_estimate: float
    pf_estimate: float
    feasible: bool
    iterations: int
    serious_steps: int
    step1_visits: int
    step2_visits: int
    limit_state_evaluations: int
    gradient_evaluations: int
    trace: tuple
    wall_time: float
    termination_reason: str


def select_active_set(system_values, size: int) -> np.ndarray:
    """Indices of the `size` greatest values, ascending, ties to lower index."""
    if size < 1:
        raise ValueError("active-set size must be positive")
    values = np.asarray(system_values, dtype=float).ravel()
    size = min(size, values.size)
    order = np.argsort(-values, kind="stable")[:size]
    return np.sort(order)


def predicted_decrease(f_at_center: float, model_at_iterate: float, lam: float, step) -> float:
    """Model-predicted objective decrease net of the proximal charge."""
    step = np.asarray(step, dtype=float).ravel()
    return float(f_at_center - model_at_iterate - 0.5 * lam * float(step @ step))


def _active_size(n_samples: int, omega: float, target_bpf: float) -> int:
    return min(n_samples, int(math.ceil(omega * n_samples * target_bpf)))


def _churn(new: np.ndarray, old: Optional[np.ndarray]) -> float:
    if old is None:
        return 1.0
    new_set = set(int(i) for i in new)
    old_set = set(int(i) for i in old)
    if not new_set:
        return 0.0
    return len(new_set - old_set) / len(new_set)


def sborm_run(
    problem: ProblemDefinition,
    sample_set: SampleSet,
    x0,
    params: Optional[AlgorithmParams] = None,
    trace_callback: Optional[Callable[[TraceRecord], None]] = None,
) -> RunResult:
    """Run the full outer algorithm from one starting design.

    Args:
        problem: problem definition with oracles and the target probability.
        sample_set: realizations of the random vector with weights.
        x0: starting design, inside the box.
        params: outer parameters; defaults follow the published settings.
        trace_callback: optional hook receiving each TraceRecord as it is
            produced.

    Returns:
        RunResult; the reported probability estimates are recomputed at the
        final design over the full sample set, independent of the active
        set.
    """
    t_start = time.perf_counter()
    params = params or AlgorithmParams()
    x0 = np.asarray(x0, dtype=float).ravel()
    if not problem.contains(x0):
        raise ValueError("initial design lies outside the design box")
    n = sample_set.size
    weights = sample_set.weights
    target = problem.target_bpf
    size = _active_size(n, params.omega, target)

    trace: List[TraceRecord] = []
    previous_active: Optional[np.ndarray] = None
    termination = "iteration cap"
    box = (
        np.concatenate([problem.lower, [-np.inf]]),
        np.concatenate([problem.upper, [np.inf]]),
    )

    def record(rec: TraceRecord):
        trace.append(rec)
        if trace_callback is not None:
            trace_callback(rec)

    # Step 1 at the initial candidate
    g_all = problem.system_values(x0, sample_set.samples)
    if params.gamma_init is None:
        gamma0 = empirical_quantile(g_all, weights, 1.0 - target)
    else:
        gamma0 = float(params.gamma_init)
    active = select_active_set(g_all, size)
    churn = _churn(active, previous_active)
    previous_active = active
    state = SolverState(
        iteration=0,
        x=x0,
        gamma=gamma0,
        lam=params.lambda0,
        theta=params.theta0,
        active=active,
        step1_visits=1,
    )
    # Step 2
    lin = linearize(problem, state.x, state.active, sample_set)
    state.step2_visits += 1
    # true-objective ingredients at the center, reused across null steps
    cost_center = float(problem.cost(state.x)[0])
    g_active = g_all[state.active]

    def f_center(theta_now: float) -> float:
        excess = np.maximum(0.0, g_active - state.gamma)
        term = state.gamma + float(np.dot(weights[state.active], excess)) / target
        return cost_center + theta_now * max(0.0, term)

    while state.iteration < params.max_outer:
        penalty = PenaltyConfig(
            theta=state.theta,
            target_bpf=target,
            lipschitz_overestimate=problem.lipschitz_overestimate,
        )
        oracle = DcPenaltyOracle(problem, penalty, lin)
        z_hat = np.concatenate([state.x, [state.gamma]])
        # Step 3: critical point of the proximally tethered DC subproblem
        inner = dc_bundle_solve(
            oracle,
            box,
            z_hat,
            params=params.inner,
            quad_weight=state.lam,
            quad_center=z_hat,
        )
        z_plus = inner.point
        x_plus, gamma_plus = z_plus[:-1], float(z_plus[-1])
        step_vec = z_plus - z_hat
        step_sq = float(step_vec @ step_vec)
        if step_sq <= params.tol:
            termination = "converged"
            break

        # Step 4: descent test on the true penalized objective
        f_hat = f_center(state.theta)
        model_plus = oracle.model_objective(x_plus, gamma_plus)
        zeta = predicted_decrease(f_hat, model_plus, state.lam, step_vec)
        g_plus_active = problem.system_values(x_plus, sample_set.samples[state.active])
        excess_plus = np.maximum(0.0, g_plus_active - gamma_plus)
        term_plus = gamma_plus + float(np.dot(weights[state.active], excess_plus)) / target
        f_plus = float(problem.cost(x_plus)[0]) + state.theta * max(0.0, term_plus)
        serious = f_plus <= f_hat - params.kappa * zeta

        record(
            TraceRecord(
                nu=state.iteration,
                step_type="serious" if serious else "null",
                lam=state.lam,
                theta=state.theta,
                f_value=f_plus if serious else f_hat,
                step_norm=math.sqrt(step_sq),
                active_churn=churn,
            )
        )

        if serious:
            state.x, state.gamma = x_plus, gamma_plus
            state.serious_steps += 1
        else:
            state.lam = 2.0 * state.lam
        # Step 5
        state.theta = min(1.5 * state.theta, params.theta_max)
        state.iteration += 1

        if serious:
            # back to Step 1: fresh evaluation, active set and linearization
            g_all = problem.system_values(state.x, sample_set.samples)
            state.step1_visits += 1
            state.active = select_active_set(g_all, size)
            churn = _churn(state.active, previous_active)
            previous_active = state.active
            lin = linearize(problem, state.x, state.active, sample_set)
            state.step2_visits += 1
            cost_center = float(problem.cost(state.x)[0])
            g_active = g_all[state.active]
        else:
            churn = 0.0

    # final reporting over the full sample set, independent of the active set
    g_final = problem.system_values(state.x, sample_set.samples)
    bpf = buffered_failure_probability(g_final, weights)
    pf = estimate_failure_probability(g_final, weights)
    return RunResult(
        x=state.x.copy(),
        gamma=float(state.gamma),
        cost=float(problem.cost(state.x)[0]),
        bpf_estimate=float(bpf),
        pf_estimate=float(pf),
        feasible=bool(bpf <= target),
        iterations=state.iteration,
        serious_steps=state.serious_steps,
        step1_visits=state.step1_visits,
        step2_visits=state.step2_visits,
        limit_state_evaluations=state.step1_visits * n,
        gradient_evaluations=state.step2_visits * state.active.size,
        trace=tuple(trace),
        wall_time=time.perf_counter() - t_start,
        termination_reason=termination,
    )
