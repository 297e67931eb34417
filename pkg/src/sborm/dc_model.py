"""Adaptive linearization and the exact DC split of the penalized objective.

Component limit states are linearized at the current candidate design.
The penalized model objective built from those affine pieces decomposes
exactly into a difference of two convex functions, each with a cheap
subgradient rule.  The reference operations in this module follow the
per-sample algebra directly; `DcPenaltyOracle` is the vectorized engine
the solver uses, and the tests pin the two against each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .reliability import ProblemDefinition, SampleSet, SystemStructure

__all__ = [
    "Linearization",
    "PenaltyConfig",
    "DcValue",
    "OracleError",
    "linearize",
    "evaluate_pk",
    "evaluate_psi_phi",
    "evaluate_gamma_lambda",
    "dc_oracle",
    "model_objective",
    "penalized_objective",
    "DcPenaltyOracle",
]


class OracleError(RuntimeError):
    """A user-supplied component oracle failed; carries the sample index."""


@dataclass(frozen=True)
class Linearization:
    """Affine expansions of every component limit state at one design point.

    For active sample row n and component q the affine model is
    beta[n, q] + <alpha[n, q], x>, exact at the expansion point.

    Attributes:
        expansion_point: the design x at which gradients were taken, (D,).
        sample_indices: original sample indices of the rows, (n_active,).
        weights: probability weights of the active samples, (n_active,).
        alphas: slopes, (n_active, Q, D).
        betas: intercepts, (n_active, Q).
        structure: the cut-set structure the components belong to.
    """

    expansion_point: np.ndarray
    sample_indices: np.ndarray
    weights: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray
    structure: SystemStructure

    def __post_init__(self):
        object.__setattr__(self, "expansion_point", np.asarray(self.expansion_point, float).ravel())
        object.__setattr__(self, "sample_indices", np.asarray(self.sample_indices, dtype=np.intp).ravel())
        object.__setattr__(self, "weights", np.asarray(self.weights, float).ravel())
        object.__setattr__(self, "alphas", np.asarray(self.alphas, float))
        object.__setattr__(self, "betas", np.asarray(self.betas, float))
        n, q = self.betas.shape
        if self.alphas.shape[:2] != (n, q):
            raise ValueError("alphas and betas disagree on active-sample/component counts")
        if self.sample_indices.shape != (n,) or self.weights.shape != (n,):
            raise ValueError("sample indices and weights must have one entry per active row")
        if q != self.structure.component_count:
            raise ValueError("component axis does not match the system structure")

    @property
    def active_count(self) -> int:
        return self.betas.shape[0]

    @property
    def dimension(self) -> int:
        return self.expansion_point.size

    def affine_values(self, x) -> np.ndarray:
        """All linearized component values at x, shape (n_active, Q)."""
        x = np.asarray(x, dtype=float).ravel()
        return self.betas + self.alphas @ x

    def row_of(self, sample_index: int) -> int:
        rows = np.nonzero(self.sample_indices == sample_index)[0]
        if rows.size == 0:
            raise KeyError(f"sample {sample_index} is not part of this linearization")
        return int(rows[0])


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty weight and constants of the penalized objective."""

    theta: float
    target_bpf: float
    lipschitz_overestimate: float = 0.0

    def __post_init__(self):
        if self.theta <= 0.0:
            raise ValueError("penalty weight theta must be positive")
        if not 0.0 < self.target_bpf < 1.0:
            raise ValueError("target buffered failure probability must lie in (0, 1)")
        if self.lipschitz_overestimate < 0.0:
            raise ValueError("lipschitz overestimate must be nonnegative")


@dataclass(frozen=True)
class DcValue:
    """Values and subgradients of the two convex components at one (x, gamma)."""

    f1: float
    f2: float
    s1: np.ndarray
    s2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "s1", np.asarray(self.s1, dtype=float).ravel())
        object.__setattr__(self, "s2", np.asarray(self.s2, dtype=float).ravel())
        if not (np.isfinite(self.f1) and np.isfinite(self.f2)):
            raise ValueError("DC component values must be finite")
        if not (np.all(np.isfinite(self.s1)) and np.all(np.isfinite(self.s2))):
            raise ValueError("DC subgradients must be finite")

    @property
    def value(self) -> float:
        return self.f1 - self.f2


def linearize(
    problem: ProblemDefinition,
    x_hat,
    active_samples: Sequence[int],
    sample_set: SampleSet,
) -> Linearization:
    """Expand every component limit state around x_hat for the active samples.

    The slope of component q at sample v is the design gradient of
    g_q(., v) at x_hat and the intercept makes the affine model reproduce
    g_q(x_hat, v) exactly.
    """
    x_hat = np.asarray(x_hat, dtype=float).ravel()
    if not problem.contains(x_hat):
        raise ValueError("expansion point lies outside the design box")
    active = np.asarray(active_samples, dtype=np.intp).ravel()
    n = active.size
    q_count = problem.structure.component_count
    if problem.gradients_batch is not None:
        try:
            values, alphas = problem.gradients_batch(x_hat, sample_set.samples[active])
        except Exception as exc:
            raise OracleError(f"component oracle failed on the active block: {exc}") from exc
        alphas = np.asarray(alphas, dtype=float)
        betas = np.asarray(values, dtype=float) - alphas @ x_hat
    else:
        alphas = np.empty((n, q_count, problem.dimension))
        betas = np.empty((n, q_count))
        for i, idx in enumerate(active):
            v = sample_set.samples[idx]
            try:
                ev = problem.components(x_hat, v)
            except Exception as exc:  # surface which sample broke the oracle
                raise OracleError(f"component oracle failed at sample {int(idx)}: {exc}") from exc
            alphas[i] = ev.gradients
            betas[i] = ev.values - ev.gradients @ x_hat
    return Linearization(
        expansion_point=x_hat,
        sample_indices=active,
        weights=sample_set.weights[active],
        alphas=alphas,
        betas=betas,
        structure=problem.structure,
    )


def evaluate_pk(lin: Linearization, cut_set: Sequence[int], x, gamma: float, sample: int):
    """Convex cut-set term p_k and one subgradient over (x, gamma).

    `sample` indexes a row of the linearization.  Returns (value, sg) with
    sg of length D+1.  The maximizing leave-one-out component is the affine
    minimum of the cut-set, ties broken by the lowest position in the
    cut-set listing.
    """
    cut = list(cut_set)
    if len(cut) == 0:
        raise ValueError("cut-set must be nonempty")
    x = np.asarray(x, dtype=float).ravel()
    a = lin.betas[sample, cut] + lin.alphas[sample, cut, :] @ x
    j = int(np.argmin(a))
    value = float(gamma - a[j])
    sg = np.empty(x.size + 1)
    sg[: x.size] = -lin.alphas[sample, cut[j], :]
    sg[-1] = 1.0
    return value, sg


def evaluate_psi_phi(pk_values):
    """Split max_k(-p_k) into the difference of two convex functions.

    Args:
        pk_values: sequence of (value, subgradient) pairs, one per cut-set.

    Returns:
        (psi, phi, s_psi, s_phi) where phi sums all p_k and psi is the
        largest leave-one-out sum; psi - phi = -min_k p_k.
    """
    values = np.array([v for v, _ in pk_values], dtype=float)
    if values.size < 1:
        raise ValueError("need at least one cut-set term")
    sgs = np.vstack([np.asarray(s, dtype=float) for _, s in pk_values])
    phi = float(values.sum())
    s_phi = sgs.sum(axis=0)
    k_star = int(np.argmin(values))
    psi = phi - float(values[k_star])
    s_psi = s_phi - sgs[k_star]
    return psi, phi, s_psi, s_phi


def evaluate_gamma_lambda(
    lin: Linearization,
    x,
    gamma: float,
    weights,
    active_samples,
    target_bpf: float,
):
    """Reference evaluation of the two convex sample aggregates.

    Gamma carries the +gamma term and aggregates max{psi_n, phi_n} over the
    active samples; Lambda aggregates phi_n.  Their difference equals the
    buffered-constraint expression of the linearized model.  The psi branch
    supplies the subgradient whenever psi_n >= phi_n.
    """
    if not 0.0 < target_bpf < 1.0:
        raise ValueError("target buffered failure probability must lie in (0, 1)")
    x = np.asarray(x, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    dim = x.size
    gamma = float(gamma)
    inv = 1.0 / target_bpf
    big_gamma = gamma
    big_lambda = 0.0
    s_gamma = np.zeros(dim + 1)
    s_gamma[-1] = 1.0
    s_lambda = np.zeros(dim + 1)
    for idx in np.asarray(active_samples, dtype=np.intp).ravel():
        row = lin.row_of(int(idx))
        p_n = float(weights[idx])
        pk_pairs = [evaluate_pk(lin, cs, x, gamma, row) for cs in lin.structure.cut_sets]
        psi, phi, s_psi, s_phi = evaluate_psi_phi(pk_pairs)
        big_lambda += p_n * phi
        s_lambda += p_n * s_phi
        if psi >= phi:
            big_gamma += inv * p_n * psi
            s_gamma += inv * p_n * s_psi
        else:
            big_gamma += inv * p_n * phi
            s_gamma += inv * p_n * s_phi
    big_lambda *= inv
    s_lambda *= inv
    return big_gamma, big_lambda, s_gamma, s_lambda


class DcPenaltyOracle:
    """Vectorized DC oracle for one linearization and penalty setting.

    Callable on z = (x, gamma) stacked into one vector, returning a
    `DcValue`; also evaluates the model objective directly from the nested
    max/min/max expression for identity checks and descent bookkeeping.
    """

    def __init__(self, problem: ProblemDefinition, penalty: PenaltyConfig, lin: Linearization):
        self.problem = problem
        self.penalty = penalty
        self.lin = lin
        self.dim = lin.dimension
        structure = lin.structure
        self._cuts = [np.asarray(cs, dtype=np.intp) for cs in structure.cut_sets]
        self._k = len(self._cuts)
        self._w = lin.weights
        # cut sets padded to equal length for one vectorized argmin; the
        # padding repeats the first member, which never wins a strict min
        # because ties resolve to the lowest position
        width = max(len(cs) for cs in self._cuts)
        padded = np.empty((self._k, width), dtype=np.intp)
        for k, cs in enumerate(self._cuts):
            padded[k, : len(cs)] = cs
            padded[k, len(cs) :] = cs[0]
        self._padded = padded

    # -- internals ---------------------------------------------------------

    def _cut_minima(self, aff: np.ndarray):
        """Per-cut-set minima and argmin component indices, shapes (n, K)."""
        n = aff.shape[0]
        block = aff[:, self._padded]            # (n, K, width)
        j = block.argmin(axis=2)
        rows = np.arange(n)[:, None]
        mins = block[rows, np.arange(self._k)[None, :], j]
        argmins = self._padded[np.arange(self._k)[None, :], j]
        return mins, argmins

    def gamma_lambda(self, x, gamma: float):
        """(Gamma, Lambda, s_Gamma, s_Lambda) over the active rows."""
        x = np.asarray(x, dtype=float).ravel()
        aff = self.lin.affine_values(x)
        mins, argmins = self._cut_minima(aff)
        n = aff.shape[0]
        k = self._k
        w = self._w
        inv = 1.0 / self.penalty.target_bpf

        pk = gamma - mins                      # (n, K)
        phi = pk.sum(axis=1)                   # (n,)
        k_star = np.argmax(mins, axis=1)       # argmin of pk, ties -> lowest k
        rows = np.arange(n)
        psi = phi - pk[rows, k_star]

        # per-sample subgradients: s_phi = (-sum_k alpha_{q*_k}, K)
        gathered = self.lin.alphas[rows[:, None], argmins, :]          # (n, K, D)
        s_phi_x = -gathered.sum(axis=1)                                # (n, D)
        s_psi_x = s_phi_x + gathered[rows, k_star]                     # drop k*'s term

        big_lambda = inv * float(np.dot(w, phi))
        s_lambda = np.empty(self.dim + 1)
        s_lambda[: self.dim] = inv * (w[:, None] * s_phi_x).sum(axis=0)
        s_lambda[-1] = inv * float(w.sum()) * k

        use_psi = psi >= phi
        big_gamma = gamma + inv * float(np.dot(w, np.where(use_psi, psi, phi)))
        branch_x = np.where(use_psi[:, None], s_psi_x, s_phi_x)
        s_gamma = np.empty(self.dim + 1)
        s_gamma[: self.dim] = inv * (w[:, None] * branch_x).sum(axis=0)
        s_gamma[-1] = 1.0 + inv * float(np.dot(w, np.where(use_psi, k - 1.0, float(k))))
        return big_gamma, big_lambda, s_gamma, s_lambda

    # -- public surface ----------------------------------------------------

    def dc_value(self, x, gamma: float) -> DcValue:
        x = np.asarray(x, dtype=float).ravel()
        big_gamma, big_lambda, s_gamma, s_lambda = self.gamma_lambda(x, gamma)
        c_val, c_grad = self.problem.cost(x)
        theta = self.penalty.theta
        l_bar = self.penalty.lipschitz_overestimate
        half_l_norm = 0.5 * l_bar * float(x @ x)

        s1 = np.zeros(self.dim + 1)
        s1[: self.dim] = np.asarray(c_grad, dtype=float).ravel() + l_bar * x
        s2 = np.zeros(self.dim + 1)
        s2[: self.dim] = l_bar * x

        if big_gamma >= big_lambda:  # ties resolved on the Gamma branch
            f1 = c_val + half_l_norm + theta * big_gamma
            s1 += theta * s_gamma
        else:
            f1 = c_val + half_l_norm + theta * big_lambda
            s1 += theta * s_lambda
        f2 = half_l_norm + theta * big_lambda
        s2 += theta * s_lambda
        return DcValue(f1=float(f1), f2=float(f2), s1=s1, s2=s2)

    def model_objective(self, x, gamma: float) -> float:
        """Direct evaluation of the penalized model objective (no DC split)."""
        x = np.asarray(x, dtype=float).ravel()
        aff = self.lin.affine_values(x)
        mins, _ = self._cut_minima(aff)
        g_lin = mins.max(axis=1)
        inv = 1.0 / self.penalty.target_bpf
        constraint = gamma + inv * float(np.dot(self._w, np.maximum(0.0, g_lin - gamma)))
        c_val, _ = self.problem.cost(x)
        return float(c_val + self.penalty.theta * max(0.0, constraint))

    def __call__(self, z: np.ndarray) -> DcValue:
        z = np.asarray(z, dtype=float).ravel()
        return self.dc_value(z[: self.dim], float(z[self.dim]))


def dc_oracle(
    problem: ProblemDefinition,
    penalty: PenaltyConfig,
    lin: Linearization,
    x,
    gamma: float,
) -> DcValue:
    """Values and subgradients of the exact DC split at one point."""
    return DcPenaltyOracle(problem, penalty, lin).dc_value(x, gamma)


def model_objective(
    problem: ProblemDefinition,
    penalty: PenaltyConfig,
    lin: Linearization,
    x,
    gamma: float,
) -> float:
    """Penalized model objective from the nested max/min/max expression."""
    return DcPenaltyOracle(problem, penalty, lin).model_objective(x, gamma)


def penalized_objective(
    problem: ProblemDefinition,
    penalty: PenaltyConfig,
    x,
    gamma: float,
    sample_set: SampleSet,
    active_samples,
) -> float:
    """Penalized objective with the true (nonlinear) limit-state oracles.

    Evaluates over the given active samples only; this is the function the
    outer descent test compares against the model.
    """
    x = np.asarray(x, dtype=float).ravel()
    active = np.asarray(active_samples, dtype=np.intp).ravel()
    g = problem.system_values(x, sample_set.samples[active])
    w = sample_set.weights[active]
    inv = 1.0 / penalty.target_bpf
    constraint = gamma + inv * float(np.dot(w, np.maximum(0.0, g - gamma)))
    c_val, _ = problem.cost(x)
    return float(c_val + penalty.theta * max(0.0, constraint))
