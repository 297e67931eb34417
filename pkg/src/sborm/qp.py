"""Dense global solver for the bundle subproblem QPs.

Each subproblem minimizes, over z in a box (the last coordinate being the
unbounded quantile variable) and a scalar epigraph variable w,

    w + (constant + <slope, z>) + (mu/2) ||z - center||^2

subject to a set of affine planes  offset_i + <a_i, z> <= w.  The sizes
are tiny (a dozen variables, tens of planes), so a primal active-set
method with direct KKT solves reaches machine-accurate stationarity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "BundleQp",
    "QpSolution",
    "QpInfeasibleError",
    "QpAccuracyError",
    "solve_bundle_qp",
]

DEFAULT_TOLERANCE = 1e-9


class QpInfeasibleError(ValueError):
    """The box constraints admit no point."""


class QpAccuracyError(RuntimeError):
    """Iteration cap reached before the KKT residual target.

    Carries the best iterate found (`solution`) for callers that want to
    inspect or accept it anyway.
    """

    def __init__(self, message, solution):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class BundleQp:
    """Data of one strongly convex bundle subproblem.

    Attributes:
        prox_center: proximal center for z, shape (d,).
        prox_weight: quadratic weight mu > 0.
        linear_constant, linear_slope: the affine term added to w.
        plane_offsets, plane_slopes: m planes offset_i + <a_i, z> <= w.
        lower, upper: box bounds on z; +-inf marks an unconstrained side.
    """

    prox_center: np.ndarray
    prox_weight: float
    linear_constant: float
    linear_slope: np.ndarray
    plane_offsets: np.ndarray
    plane_slopes: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        center = np.asarray(self.prox_center, dtype=float).ravel()
        slope = np.asarray(self.linear_slope, dtype=float).ravel()
        offsets = np.asarray(self.plane_offsets, dtype=float).ravel()
        slopes = np.atleast_2d(np.asarray(self.plane_slopes, dtype=float))
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()
        d = center.size
        if self.prox_weight <= 0.0:
            raise ValueError("prox weight must be positive")
        if offsets.size < 1:
            raise ValueError("need at least one plane; the objective is otherwise unbounded")
        if slopes.shape != (offsets.size, d):
            raise ValueError("plane slopes must be (m, d)")
        if slope.shape != (d,) or lower.shape != (d,) or upper.shape != (d,):
            raise ValueError("slope and box bounds must match the z dimension")
        object.__setattr__(self, "prox_center", center)
        object.__setattr__(self, "linear_slope", slope)
        object.__setattr__(self, "plane_offsets", offsets)
        object.__setattr__(self, "plane_slopes", slopes)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dimension(self) -> int:
        return self.prox_center.size

    @property
    def plane_count(self) -> int:
        return self.plane_offsets.size

    def plane_values(self, z: np.ndarray) -> np.ndarray:
        return self.plane_offsets + self.plane_slopes @ z

    def objective(self, z: np.ndarray, w: float) -> float:
        diff = z - self.prox_center
        return float(
            w
            + self.linear_constant
            + self.linear_slope @ z
            + 0.5 * self.prox_weight * (diff @ diff)
        )


class QpSolution(NamedTuple):
    z: np.ndarray
    w: float
    objective: float
    kkt_residual: float
    plane_multipliers: np.ndarray
    iterations: int
    active_set: tuple = ()


def _kkt_residual(qp: BundleQp, z, w, lam_planes, lam_lower, lam_upper):
    """Infinity-norm KKT residual: stationarity, feasibility, sign, slack."""
    grad_z = qp.linear_slope + qp.prox_weight * (z - qp.prox_center)
    stat_z = grad_z + qp.plane_slopes.T @ lam_planes - lam_lower + lam_upper
    stat_w = 1.0 - lam_planes.sum()
    stationarity = max(np.abs(stat_z).max(), abs(stat_w))

    plane_slack = qp.plane_values(z) - w            # <= 0 feasible
    lower_slack = np.where(np.isfinite(qp.lower), qp.lower - z, -np.inf)
    upper_slack = np.where(np.isfinite(qp.upper), z - qp.upper, -np.inf)
    primal = max(plane_slack.max(initial=-np.inf), lower_slack.max(initial=-np.inf),
                 upper_slack.max(initial=-np.inf), 0.0)

    dual = max(-lam_planes.min(initial=0.0), -lam_lower.min(initial=0.0),
               -lam_upper.min(initial=0.0), 0.0)

    comp = 0.0
    comp = max(comp, np.abs(lam_planes * plane_slack).max(initial=0.0))
    finite_lo = np.isfinite(qp.lower)
    finite_up = np.isfinite(qp.upper)
    if finite_lo.any():
        comp = max(comp, np.abs(lam_lower[finite_lo] * lower_slack[finite_lo]).max())
    if finite_up.any():
        comp = max(comp, np.abs(lam_upper[finite_up] * upper_slack[finite_up]).max())
    return max(stationarity, primal, dual, comp)


class _QpData:
    """Inequality form over u = (z, w): minimize 1/2 u'Hu + g'u s.t. Au <= b."""

    def __init__(self, qp: BundleQp):
        d, m = qp.dimension, qp.plane_count
        self.qp = qp
        self.d, self.m = d, m
        n_con = m + 2 * d
        a_rows = np.zeros((n_con, d + 1))
        b_vals = np.zeros(n_con)
        a_rows[:m, :d] = qp.plane_slopes
        a_rows[:m, d] = -1.0
        b_vals[:m] = -qp.plane_offsets
        for j in range(d):
            a_rows[m + j, j] = 1.0          # z_j <= upper_j
            b_vals[m + j] = qp.upper[j]
            a_rows[m + d + j, j] = -1.0     # -z_j <= -lower_j
            b_vals[m + d + j] = -qp.lower[j]
        usable = np.ones(n_con, dtype=bool)
        usable[m : m + d] = np.isfinite(qp.upper)
        usable[m + d :] = np.isfinite(qp.lower)
        self.a_rows = a_rows[usable]
        self.b_vals = b_vals[usable]
        self.con_ids = np.nonzero(usable)[0]
        self.n_con = self.a_rows.shape[0]
        self.g0 = np.concatenate([qp.linear_slope - qp.prox_weight * qp.prox_center, [1.0]])
        self.h_diag = np.concatenate([np.full(d, qp.prox_weight), [0.0]])

    def describe(self, con_pos: int):
        """Stable descriptor of a constraint row: kind and index."""
        con = int(self.con_ids[con_pos])
        if con < self.m:
            return ("p", con)
        if con < self.m + self.d:
            return ("u", con - self.m)
        return ("l", con - self.m - self.d)

    def locate(self, descriptor):
        kind, idx = descriptor
        if kind == "p":
            con = idx
        elif kind == "u":
            con = self.m + idx
        else:
            con = self.m + self.d + idx
        pos = np.nonzero(self.con_ids == con)[0]
        return int(pos[0]) if pos.size else -1

    def solution_from(self, u, lam_compact, iterations, working=()):
        d, m = self.d, self.m
        lam_planes = np.zeros(m)
        lam_lower = np.zeros(d)
        lam_upper = np.zeros(d)
        for pos, con in enumerate(self.con_ids):
            lam = lam_compact[pos]
            if con < m:
                lam_planes[con] = lam
            elif con < m + d:
                lam_upper[con - m] = lam
            else:
                lam_lower[con - m - d] = lam
        z, w = u[:d], float(u[d])
        residual = _kkt_residual(self.qp, z, w, lam_planes, lam_lower, lam_upper)
        return QpSolution(
            z=z,
            w=w,
            objective=self.qp.objective(z, w),
            kkt_residual=float(residual),
            plane_multipliers=lam_planes,
            iterations=iterations,
            active_set=tuple(self.describe(pos) for pos in working),
        )


def _equilibrated_solve(mat, rhs):
    """Solve a symmetric system, Ruiz-scaling it first when badly mixed.

    Bundle data can mix vastly different magnitudes across coordinates;
    plain LU then loses the small columns entirely.  Symmetric
    equilibration is an exact change of variables, so the solution is
    unaffected beyond round-off.  Well-balanced systems skip it.
    """
    col_max = np.abs(mat).max(axis=0)
    col_max[col_max == 0.0] = 1.0
    if col_max.max() < 1e8 * col_max.min():
        return np.linalg.solve(mat, rhs)
    scale = np.ones(mat.shape[0])
    work = mat
    for _ in range(2):
        norms = np.sqrt(np.abs(work).max(axis=0))
        norms[norms == 0.0] = 1.0
        scale /= norms
        work = mat * scale[:, None] * scale[None, :]
    sol = np.linalg.solve(work, rhs * scale)
    return sol * scale


def _solve_eqp(data: _QpData, w_set):
    """Equality-constrained minimizer over a working set of constraints."""
    d = data.d
    k = len(w_set)
    kkt = np.zeros((d + 1 + k, d + 1 + k))
    kkt[np.arange(d + 1), np.arange(d + 1)] = data.h_diag
    aw = data.a_rows[w_set]
    kkt[: d + 1, d + 1 :] = aw.T
    kkt[d + 1 :, : d + 1] = aw
    rhs = np.concatenate([-data.g0, data.b_vals[w_set]])
    sol = _equilibrated_solve(kkt, rhs)
    return sol[: d + 1], sol[d + 1 :]


def _active_set_phase(data: _QpData, max_iter: int, warm_start=None):
    """Primal active-set iterations; returns (u, lam_compact, iters, clean, W)."""
    qp = data.qp
    d, m = data.d, data.m
    z0 = np.clip(qp.prox_center, qp.lower, qp.upper)
    w0 = float(qp.plane_values(z0).max())
    u = np.concatenate([z0, [w0]])
    first_plane = int(np.argmax(qp.plane_values(z0)))
    working = [int(np.nonzero(data.con_ids == first_plane)[0][0])]
    if warm_start:
        for descriptor in warm_start:
            pos = data.locate(descriptor)
            if pos >= 0 and pos not in working:
                trial = data.a_rows[working + [pos]]
                if np.linalg.matrix_rank(
                    trial, tol=1e-10 * max(1.0, float(np.abs(trial).max()))
                ) == len(working) + 1:
                    working.append(pos)
    in_working = np.zeros(data.n_con, dtype=bool)
    in_working[working] = True
    row_scale = np.abs(data.a_rows).max(axis=1)
    is_plane = data.con_ids < m
    scale = 1.0 + float(np.abs(u).max())

    def full_rank_with(w_set, candidate):
        trial = data.a_rows[w_set + [candidate]]
        r = np.linalg.qr(trial.T, mode="r")
        diag = np.abs(np.diag(r))
        return diag.min() > 1e-10 * max(1.0, diag.max())

    lam = np.zeros(len(working))
    for iterations in range(1, max_iter + 1):
        try:
            u_star, lam = _solve_eqp(data, working)
        except np.linalg.LinAlgError:
            return u, _expand_lam(data, working, lam), iterations, False, working
        step = u_star - u
        step_norm = float(np.abs(step).max())
        if step_norm <= 1e-12 * scale:
            lam_floor = -1e-11 * (1.0 + float(np.abs(lam).max(initial=0.0)))
            neg = sorted((lam[i], i) for i in range(len(working)) if lam[i] < lam_floor)
            if not neg:
                return u_star, _expand_lam(data, working, lam), iterations, True, working
            _, drop_pos = neg[0]
            # the sole plane always carries multiplier 1; guard regardless
            if is_plane[working[drop_pos]] and sum(1 for c in working if is_plane[c]) == 1:
                candidates = [p for p in neg if not is_plane[working[p[1]]]]
                if not candidates:
                    return u_star, _expand_lam(data, working, lam), iterations, True, working
                _, drop_pos = candidates[0]
            in_working[working[drop_pos]] = False
            working.pop(drop_pos)
            continue
        # longest feasible step toward the EQP minimizer
        incr = data.a_rows @ step
        slack = data.b_vals - data.a_rows @ u
        blocked = ~in_working & (incr > 1e-13 * np.maximum(1.0, row_scale * step_norm))
        alpha = 1.0
        blocker = -1
        if np.any(blocked):
            ratios = np.full(data.n_con, np.inf)
            ratios[blocked] = np.maximum(slack[blocked], 0.0) / incr[blocked]
            best = int(np.argmin(ratios))
            if ratios[best] < 1.0 - 1e-14:
                alpha = float(ratios[best])
                blocker = best
        u = u + alpha * step
        scale = max(scale, 1.0 + float(np.abs(u).max()))
        if blocker >= 0:
            if full_rank_with(working, blocker):
                working.append(blocker)
                in_working[blocker] = True
            # a rank-deficient blocker duplicates a working constraint; skip it
    return u, _expand_lam(data, working, lam), max_iter, False, working


def _expand_lam(data: _QpData, working, lam):
    full = np.zeros(data.n_con)
    for pos, con_pos in enumerate(working):
        if pos < len(lam):
            full[con_pos] = lam[pos]
    return full


def _interior_point_phase(data: _QpData, max_iter: int = 60):
    """Primal-dual interior-point solve; robust on degenerate geometry."""
    qp = data.qp
    d = data.d
    a = data.a_rows
    b = data.b_vals
    n = data.n_con
    h = data.h_diag
    g = data.g0

    z0 = np.clip(qp.prox_center, qp.lower, qp.upper)
    width = np.where(
        np.isfinite(qp.lower) & np.isfinite(qp.upper), qp.upper - qp.lower, np.inf
    )
    nudge = np.minimum(1.0, 0.25 * width)
    z0 = np.clip(z0, qp.lower + np.where(np.isfinite(qp.lower), nudge * 1e-3, 0.0),
                 qp.upper - np.where(np.isfinite(qp.upper), nudge * 1e-3, 0.0))
    w0 = float(qp.plane_values(z0).max()) + 1.0 + 0.1 * abs(float(qp.plane_values(z0).max()))
    u = np.concatenate([z0, [w0]])
    s = b - a @ u
    s = np.maximum(s, 1e-6 * (1.0 + np.abs(b)))
    lam = np.ones(n)

    best = (np.inf, u.copy(), lam.copy(), 1)
    for it in range(1, max_iter + 1):
        r_dual = h * u + g + a.T @ lam
        r_prim = a @ u - b + s
        mu_gap = float(lam @ s) / n
        err = max(float(np.abs(r_dual).max()), float(np.abs(r_prim).max()), abs(mu_gap))
        if err < best[0]:
            best = (err, u.copy(), lam.copy(), it)
        if err <= 1e-13 * (1.0 + float(np.abs(g).max())):
            break

        def newton(sigma):
            d_scale = lam / s
            m_mat = (a.T * d_scale) @ a
            m_mat[np.arange(d + 1), np.arange(d + 1)] += h
            rhs_s = -(lam * s - sigma * mu_gap) / s
            rhs = -r_dual + a.T @ (d_scale * r_prim - rhs_s)
            try:
                du = _equilibrated_solve(m_mat, rhs)
            except np.linalg.LinAlgError:
                m_mat[np.arange(d + 1), np.arange(d + 1)] += 1e-12 * (1.0 + m_mat.max())
                du = _equilibrated_solve(m_mat, rhs)
            ds = -r_prim - a @ du
            dlam = -(lam * s - sigma * mu_gap) / s - d_scale * ds
            return du, ds, dlam

        # predictor for the centering weight, then one corrector step
        du, ds, dlam = newton(0.0)
        alpha_aff = _ipm_step_len(s, ds, lam, dlam)
        mu_aff = float((lam + alpha_aff * dlam) @ (s + alpha_aff * ds)) / n
        sigma = (mu_aff / max(mu_gap, 1e-300)) ** 3 if mu_gap > 0 else 0.1
        du, ds, dlam = newton(min(max(sigma, 1e-6), 0.9))
        alpha = 0.995 * _ipm_step_len(s, ds, lam, dlam)
        if not np.isfinite(alpha) or alpha <= 0.0:
            break
        u = u + alpha * du
        s = np.maximum(s + alpha * ds, 1e-300)
        lam = np.maximum(lam + alpha * dlam, 0.0)
    return best[1], best[2], best[3]


def _ipm_step_len(s, ds, lam, dlam):
    alpha = 1.0
    neg = ds < 0
    if np.any(neg):
        alpha = min(alpha, float((-s[neg] / ds[neg]).min()))
    neg = dlam < 0
    if np.any(neg):
        alpha = min(alpha, float((-lam[neg] / dlam[neg]).min()))
    return alpha


def _refine(data: _QpData, u, lam):
    """Re-solve on the active set guessed from (u, lam) for exact stationarity."""
    s = data.b_vals - data.a_rows @ u
    scale_s = 1.0 + np.abs(data.b_vals)
    guess = np.nonzero((lam > s / scale_s) | (s <= 1e-10 * scale_s))[0]
    is_plane = data.con_ids < data.m
    if not np.any(is_plane[guess]):
        planes = np.nonzero(is_plane)[0]
        vals = data.a_rows[planes] @ u - data.b_vals[planes]
        guess = np.append(guess, planes[int(np.argmax(vals))])
    # drop rows until the working set is independent (keep first occurrences)
    picked = []
    for cand in guess.tolist():
        trial = data.a_rows[picked + [cand]]
        if np.linalg.matrix_rank(trial, tol=1e-10 * max(1.0, float(np.abs(trial).max()))) == len(picked) + 1:
            picked.append(cand)
    try:
        u_ref, lam_ref = _solve_eqp(data, picked)
    except np.linalg.LinAlgError:
        return None
    return u_ref, _expand_lam(data, picked, lam_ref), picked


def solve_bundle_qp(
    qp: BundleQp,
    tolerance: float = DEFAULT_TOLERANCE,
    warm_start=None,
) -> QpSolution:
    """Globally solve one bundle QP.

    A primal active-set phase handles the common well-conditioned case with
    direct KKT solves; if it stalls (degenerate, near-parallel planes), a
    primal-dual interior-point pass followed by an exact re-solve on the
    identified active set takes over.  `warm_start` may carry the active-set
    descriptors of a related solve (`QpSolution.active_set`).  Returns the
    minimizer with its KKT residual.  Raises `QpInfeasibleError` for an
    empty box and `QpAccuracyError` (carrying the best iterate) if no phase
    reaches `tolerance` within the iteration budget.
    """
    if np.any(qp.lower > qp.upper):
        raise QpInfeasibleError("box lower bound exceeds upper bound")
    data = _QpData(qp)
    d, m = data.d, data.m
    cap = max(20, 10 * (d + 1 + m) ** 2)
    # enough for a well-behaved solve; thrashing instances fail fast into
    # the interior-point phase instead of burning the full cap
    as_budget = min(cap, max(40, 4 * (d + 1) + data.n_con))

    candidates = []
    u, lam, used, clean, working = _active_set_phase(data, as_budget, warm_start)
    candidates.append(data.solution_from(u, lam, used, working))
    if clean and candidates[0].kkt_residual <= tolerance:
        return candidates[0]

    u_ipm, lam_ipm, it_ipm = _interior_point_phase(data)
    total = used + it_ipm
    candidates.append(data.solution_from(u_ipm, lam_ipm, total))
    refined = _refine(data, u_ipm, lam_ipm)
    if refined is not None:
        candidates.append(data.solution_from(refined[0], refined[1], total, refined[2]))

    best = min(candidates, key=lambda sol: sol.kkt_residual)
    if best.kkt_residual > tolerance:
        raise QpAccuracyError(
            f"KKT residual {best.kkt_residual:.3e} above tolerance {tolerance:.3e} "
            f"after {best.iterations} iterations",
            best,
        )
    return best
