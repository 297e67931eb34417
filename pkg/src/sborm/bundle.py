"""Proximal bundle method for difference-of-convex subproblems.

Both convex components are approximated by cutting-plane models built
from oracle calls.  Each iterate solves one strongly convex QP per
element of the second-component bundle (one, under the default policy of
keeping only the stability center there) and a descent rule decides
whether the stability center moves.  An optional exact quadratic term is
folded into the QPs analytically so outer proximal regularization does
not suffer cutting-plane error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .qp import BundleQp, QpAccuracyError, solve_bundle_qp

__all__ = [
    "BundleElement",
    "BundleParams",
    "InnerState",
    "InnerStepResult",
    "BundleResult",
    "cutting_plane_value",
    "inner_step",
    "dc_bundle_solve",
]


@dataclass(frozen=True, eq=False)
class BundleElement:
    """Oracle information collected at one point; identity-compared."""

    point: np.ndarray
    f1: float
    f2: float
    s1: np.ndarray
    s2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float).ravel())
        object.__setattr__(self, "s1", np.asarray(self.s1, dtype=float).ravel())
        object.__setattr__(self, "s2", np.asarray(self.s2, dtype=float).ravel())
        vals = (self.f1, self.f2)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("bundle element values must be finite")
        if not (np.all(np.isfinite(self.s1)) and np.all(np.isfinite(self.s2))):
            raise ValueError("bundle element subgradients must be finite")


@dataclass
class BundleParams:
    """Tuning of one inner DC bundle solve.

    The prox parameter is constant throughout a solve.  With mu left as
    None it is set equal to the weight of the exact quadratic term (the
    outer tether), which keeps the two regularizers commensurate at any
    problem scale; without such a term it falls back to 1.
    """

    mu: Optional[float] = None
    kappa: float = 1e-4
    tol: float = 0.01
    max_iter: int = 1000
    bundle_cap_f1: int = 80
    bundle_cap_f2: int = 1
    qp_tolerance: float = 1e-9
    # fallback acceptance for ill-conditioned subproblems: the iterate is
    # still usable because model values are recomputed exactly at it
    qp_accept: float = 1e-5
    # extra oracle cuts harvested along each step (0 disables); they are
    # ordinary minorants, so the model properties are unaffected
    enrich_cuts: int = 3

    def __post_init__(self):
        if self.mu is not None and self.mu <= 0.0:
            raise ValueError("prox parameter must be positive")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError("descent parameter must lie in (0, 1)")
        if self.tol < 0.0:
            raise ValueError("stopping tolerance must be nonnegative")
        if self.bundle_cap_f1 < 3 or self.bundle_cap_f2 < 1:
            raise ValueError("bundle caps must allow at least 3 and 1 elements")


@dataclass
class InnerState:
    """Mutable state of one inner solve."""

    center: BundleElement
    bundle_f1: list
    bundle_f2: list
    prox_parameter: float
    iteration: int = 1

    def __post_init__(self):
        if self.prox_parameter <= 0.0:
            raise ValueError("prox parameter must be positive")
        if len(self.bundle_f1) < 1 or len(self.bundle_f2) < 1:
            raise ValueError("both bundles must hold at least one element")
        if not any(el is self.center for el in self.bundle_f1):
            raise ValueError("the stability center must be part of the f1 bundle")


class InnerStepResult(NamedTuple):
    point: np.ndarray
    element: BundleElement
    model_value: float


class BundleResult(NamedTuple):
    point: np.ndarray
    value: float
    iterations: int
    status: str


def cutting_plane_value(bundle: Sequence[BundleElement], which: str, z) -> float:
    """Cutting-plane model of one convex component: max of its planes at z."""
    if len(bundle) == 0:
        raise ValueError("bundle must be nonempty")
    z = np.asarray(z, dtype=float).ravel()
    if which == "f1":
        return max(el.f1 + float(el.s1 @ (z - el.point)) for el in bundle)
    if which == "f2":
        return max(el.f2 + float(el.s2 @ (z - el.point)) for el in bundle)
    raise ValueError("which must be 'f1' or 'f2'")


def _evaluate(oracle, z) -> BundleElement:
    val = oracle(np.asarray(z, dtype=float).ravel())
    return BundleElement(point=z, f1=val.f1, f2=val.f2, s1=val.s1, s2=val.s2)


def _quad(quad_weight: float, quad_center, z) -> float:
    if quad_weight == 0.0:
        return 0.0
    diff = np.asarray(z, dtype=float).ravel() - quad_center
    return 0.5 * quad_weight * float(diff @ diff)


def _plane_arrays(bundle):
    offsets = np.array([el.f1 - float(el.s1 @ el.point) for el in bundle])
    slopes = np.vstack([el.s1 for el in bundle])
    return offsets, slopes


def _solve_prox_qp(
    state: InnerState,
    lower,
    upper,
    quad_weight: float,
    quad_center,
    qp_tolerance: float,
    planes=None,
    qp_accept: float = 1e-5,
    warm: Optional[dict] = None,
):
    """One QP per f2-bundle element; returns the winning point and value.

    `warm`, when given, maps f2-element positions to active-set descriptors
    of the previous iteration's QPs and is updated in place.
    """
    mu = state.prox_parameter
    center = state.center.point
    offsets, slopes = _plane_arrays(state.bundle_f1) if planes is None else planes

    mu_total = mu + quad_weight
    if quad_weight > 0.0:
        prox_center = (mu * center + quad_weight * quad_center) / mu_total
    else:
        prox_center = center

    best = None
    for j, el in enumerate(state.bundle_f2):
        lin_const = -el.f2 + float(el.s2 @ el.point)
        lin_slope = -el.s2
        scale = max(
            1.0,
            float(np.abs(offsets).max()),
            float(np.abs(slopes).max()),
            abs(lin_const),
            float(np.abs(lin_slope).max(initial=0.0)),
            mu_total * (1.0 + float(np.abs(prox_center).max(initial=0.0))),
        )
        qp = BundleQp(
            prox_center=prox_center,
            prox_weight=mu_total / scale,
            linear_constant=lin_const / scale,
            linear_slope=lin_slope / scale,
            plane_offsets=offsets / scale,
            plane_slopes=slopes / scale,
            lower=lower,
            upper=upper,
        )
        try:
            sol = solve_bundle_qp(
                qp, tolerance=qp_tolerance, warm_start=None if warm is None else warm.get(j)
            )
        except QpAccuracyError as exc:
            if exc.solution.kkt_residual > qp_accept:
                raise
            sol = exc.solution
        if warm is not None:
            warm[j] = sol.active_set
        z = sol.z
        value = (
            float((offsets + slopes @ z).max())
            + _quad(quad_weight, quad_center, z)
            - (el.f2 + float(el.s2 @ (z - el.point)))
            + 0.5 * mu * float((z - center) @ (z - center))
        )
        if best is None or value < best[0] - 1e-15 * (1.0 + abs(best[0])):
            best = (value, z)
    return best[1], best[0]


def inner_step(
    state: InnerState,
    oracle: Callable,
    box,
    quad_weight: float = 0.0,
    quad_center=None,
    qp_tolerance: float = 1e-9,
    planes=None,
    qp_accept: float = 1e-5,
    warm: Optional[dict] = None,
) -> InnerStepResult:
    """Next iterate of the inner method, with the oracle called there.

    Solves the prox subproblem over the DC cutting-plane model by one QP
    per f2-bundle element (ties between elements resolved toward the lower
    index) and evaluates the oracle at the winning point.
    """
    lower, upper = box
    z, value = _solve_prox_qp(
        state, lower, upper, quad_weight, quad_center, qp_tolerance, planes, qp_accept, warm
    )
    element = _evaluate(oracle, z)
    return InnerStepResult(point=z, element=element, model_value=float(value))


def _prune_f1(bundle: list, planes, center: BundleElement, cap: int, z_last, warm=None):
    """Cap the f1 bundle: drop planes inactive at the last QP point, oldest first."""
    if len(bundle) <= cap:
        return bundle, planes
    offsets, slopes = planes
    vals = offsets + slopes @ np.asarray(z_last, dtype=float).ravel()
    w_star = vals.max()
    active = vals >= w_star - 1e-8 * (1.0 + abs(w_star))
    drop = set()
    for idx in range(len(bundle)):
        if len(bundle) - len(drop) <= max(3, cap):
            break
        if active[idx] or bundle[idx] is center:
            continue
        drop.add(idx)
    if not drop:
        # all planes active: tolerate the excess
        return bundle, planes
    keep_idx = [i for i in range(len(bundle)) if i not in drop]
    if warm is not None:
        remap = {old: new for new, old in enumerate(keep_idx)}
        for j, descriptors in list(warm.items()):
            warm[j] = tuple(
                (kind, remap[idx]) if kind == "p" else (kind, idx)
                for kind, idx in descriptors
                if kind != "p" or idx in remap
            )
    kept = [bundle[i] for i in keep_idx]
    return kept, (offsets[keep_idx], slopes[keep_idx])


def dc_bundle_solve(
    oracle: Callable,
    box,
    initial_point,
    params: Optional[BundleParams] = None,
    quad_weight: float = 0.0,
    quad_center=None,
    trace: Optional[Callable] = None,
) -> BundleResult:
    """Compute a critical point of f1 - f2 (+ optional exact quadratic) over a box.

    Args:
        oracle: callable z -> object with fields f1, f2, s1, s2.
        box: (lower, upper) arrays over z; infinities mark free coordinates.
        initial_point: starting point, also the first stability center.
        params: solver tuning; defaults are conservative.
        quad_weight, quad_center: optional exact term (w/2)||z - c||^2 added
            to the first convex component and handled analytically.
        trace: optional callback (iteration, f_value, step_norm, serious)
            called once per iteration; `serious` is None on the stopping
            iteration.

    Returns:
        BundleResult with the final stability center; status is
        "converged" when the last step length fell below `params.tol`,
        otherwise "max_iterations".
    """
    params = params or BundleParams()
    lower = np.asarray(box[0], dtype=float).ravel()
    upper = np.asarray(box[1], dtype=float).ravel()
    z0 = np.asarray(initial_point, dtype=float).ravel()
    if np.any(z0 < lower - 1e-9) or np.any(z0 > upper + 1e-9):
        raise ValueError("initial point lies outside the box")
    if quad_weight < 0.0:
        raise ValueError("quadratic weight must be nonnegative")
    if quad_weight > 0.0:
        quad_center = np.asarray(quad_center, dtype=float).ravel()

    def f_total(el: BundleElement) -> float:
        return el.f1 - el.f2 + _quad(quad_weight, quad_center, el.point)

    center = _evaluate(oracle, z0)
    if params.mu is not None:
        mu0 = params.mu
    elif quad_weight > 0.0:
        mu0 = quad_weight
    else:
        mu0 = 1.0
    state = InnerState(
        center=center,
        bundle_f1=[center],
        bundle_f2=[center],
        prox_parameter=mu0,
    )
    planes = _plane_arrays(state.bundle_f1)
    warm = None  # primal warm starts proved counterproductive on these QPs
    status = "max_iterations"
    iteration = 0
    for iteration in range(1, params.max_iter + 1):
        state.iteration = iteration
        result = inner_step(
            state,
            oracle,
            (lower, upper),
            quad_weight=quad_weight,
            quad_center=quad_center,
            qp_tolerance=params.qp_tolerance,
            planes=planes,
            qp_accept=params.qp_accept,
            warm=warm,
        )
        step_norm = float(np.linalg.norm(result.point - state.center.point))
        if step_norm <= params.tol:
            if trace is not None:
                trace(iteration, f_total(state.center), step_norm, None)
            status = "converged"
            break
        base_point = state.center.point
        serious = f_total(result.element) <= f_total(state.center) - params.kappa * step_norm**2
        if serious:
            state.center = result.element
        if trace is not None:
            trace(iteration, f_total(state.center), step_norm, serious)
        # f2 bundle: the stability center, plus most recent extras if allowed
        if params.bundle_cap_f2 <= 1:
            state.bundle_f2 = [state.center]
        else:
            pool = [el for el in state.bundle_f2 if el is not state.center]
            pool.append(result.element)
            state.bundle_f2 = [state.center] + pool[-(params.bundle_cap_f2 - 1):]
        new_elements = [result.element]
        for j in range(params.enrich_cuts):
            frac = (j + 1.0) / (params.enrich_cuts + 1.0)
            probe = base_point + frac * (result.point - base_point)
            new_elements.append(_evaluate(oracle, probe))
        for el in new_elements:
            state.bundle_f1.append(el)
            planes = (
                np.append(planes[0], el.f1 - float(el.s1 @ el.point)),
                np.vstack([planes[1], el.s1]),
            )
        state.bundle_f1, planes = _prune_f1(
            state.bundle_f1, planes, state.center, params.bundle_cap_f1, result.point
        )
    return BundleResult(
        point=state.center.point.copy(),
        value=f_total(state.center),
        iterations=iteration,
        status=status,
    )
