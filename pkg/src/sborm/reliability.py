"""Core data types and finite-sample reliability estimators.

The central objects are weighted sample sets of a random vector, cut-set
system structures, and the estimators built on top of them: failure
probability, quantile, superquantile and buffered failure probability of
the system limit-state value.  Sign convention throughout: a limit-state
value strictly greater than zero means failure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

__all__ = [
    "SampleSet",
    "SystemStructure",
    "ComponentEvaluation",
    "ProblemDefinition",
    "SystemLimitState",
    "system_limit_state",
    "estimate_failure_probability",
    "empirical_quantile",
    "empirical_superquantile",
    "buffered_failure_probability",
]

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class SampleSet:
    """Weighted realizations of a random vector.

    Attributes:
        samples: array of shape (N, M), one realization per row.
        weights: array of shape (N,), nonnegative, summing to one.
    """

    samples: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        weights = np.asarray(self.weights, dtype=float).ravel()
        if samples.shape[0] < 1:
            raise ValueError("sample set must contain at least one realization")
        if weights.shape[0] != samples.shape[0]:
            raise ValueError("weights length must match the number of samples")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights must sum to 1 (got {weights.sum()!r})")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def equally_weighted(cls, samples: np.ndarray) -> "SampleSet":
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        n = samples.shape[0]
        return cls(samples, np.full(n, 1.0 / n))

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    @property
    def dimension(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class SystemStructure:
    """Cut-set representation of a general system.

    The system fails when every component of at least one cut-set fails,
    i.e. the system limit state is the max over cut-sets of the min over
    the cut-set's component limit states.

    Attributes:
        cut_sets: K nonempty tuples of component indices.
        component_count: number of distinct component limit-state functions.
    """

    cut_sets: tuple
    component_count: int

    def __post_init__(self):
        cut_sets = tuple(tuple(int(q) for q in cs) for cs in self.cut_sets)
        if len(cut_sets) < 1:
            raise ValueError("structure must contain at least one cut-set")
        for k, cs in enumerate(cut_sets):
            if len(cs) == 0:
                raise ValueError(f"cut-set {k} is empty")
            for q in cs:
                if not 0 <= q < self.component_count:
                    raise ValueError(
                        f"cut-set {k} references component {q}, valid range "
                        f"is [0, {self.component_count})"
                    )
        object.__setattr__(self, "cut_sets", cut_sets)
        flat = np.concatenate([np.asarray(cs, dtype=np.intp) for cs in cut_sets])
        offsets = np.cumsum([0] + [len(cs) for cs in cut_sets[:-1]])
        object.__setattr__(self, "_flat", flat)
        object.__setattr__(self, "_offsets", np.asarray(offsets, dtype=np.intp))

    @property
    def cut_set_count(self) -> int:
        return len(self.cut_sets)

    def cut_set_minima(self, values: np.ndarray) -> np.ndarray:
        """Per-cut-set minima for batched component values.

        Args:
            values: array (..., component_count) of component limit states.

        Returns:
            array (..., K) of min over each cut-set.
        """
        values = np.asarray(values, dtype=float)
        return np.minimum.reduceat(values[..., self._flat], self._offsets, axis=-1)

    def system_values(self, values: np.ndarray) -> np.ndarray:
        """Batched system limit states: max over cut-sets of cut-set minima."""
        return self.cut_set_minima(values).max(axis=-1)


class SystemLimitState(NamedTuple):
    """System limit-state value with the attaining indices."""

    value: float
    cut_set_index: int
    component_index: int
    argmin_components: tuple


def system_limit_state(values: Sequence[float], structure: SystemStructure) -> SystemLimitState:
    """Max-min system limit state for one vector of component values.

    Returns the system value together with the attaining cut-set index, the
    attaining component within that cut-set, and the argmin component of
    every cut-set.  Ties are broken by the lowest index.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.shape[0] < structure.component_count:
        raise IndexError(
            f"need {structure.component_count} component values, got {values.shape[0]}"
        )
    argmins = []
    minima = np.empty(structure.cut_set_count)
    for k, cs in enumerate(structure.cut_sets):
        vals_k = values[list(cs)]
        j = int(np.argmin(vals_k))
        argmins.append(cs[j])
        minima[k] = vals_k[j]
    k_star = int(np.argmax(minima))
    return SystemLimitState(
        value=float(minima[k_star]),
        cut_set_index=k_star,
        component_index=argmins[k_star],
        argmin_components=tuple(argmins),
    )


def _check_values_weights(values, weights):
    values = np.asarray(values, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("empty value array")
    if weights.shape != values.shape:
        raise ValueError("values and weights must have equal length")
    return values, weights


def estimate_failure_probability(system_values, weights) -> float:
    """Weighted empirical failure probability, P[g > 0].

    The inequality is strict: a limit-state value of exactly zero counts as
    survival.
    """
    values, weights = _check_values_weights(system_values, weights)
    return float(weights[values > 0].sum())


def empirical_quantile(values, weights, alpha: float) -> float:
    """Left-continuous generalized inverse CDF of a weighted sample.

    Returns the smallest value whose cumulative weight is >= alpha.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    values, weights = _check_values_weights(values, weights)
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    cum = np.cumsum(weights[order])
    idx = int(np.searchsorted(cum, alpha, side="left"))
    idx = min(idx, sorted_vals.size - 1)
    return float(sorted_vals[idx])


def _superquantile_sorted(sorted_vals, sorted_w, cum, total_mean, alpha):
    """Superquantile from ascending-sorted values and cumulative weights."""
    if alpha == 0.0:
        return total_mean
    idx = min(int(np.searchsorted(cum, alpha, side="left")), sorted_vals.size - 1)
    q = sorted_vals[idx]
    # sum of w * max(0, v - q): only entries strictly above q contribute
    j = int(np.searchsorted(sorted_vals, q, side="right"))
    excess = float(np.dot(sorted_vals[j:] - q, sorted_w[j:])) if j < sorted_vals.size else 0.0
    return q + excess / (1.0 - alpha)


def empirical_superquantile(values, weights, alpha: float) -> float:
    """Exact superquantile (CVaR) of a weighted discrete sample.

    Evaluates min over gamma of gamma + (1/(1-alpha)) * E[max(0, Y - gamma)],
    which for a discrete distribution is attained at the alpha-quantile.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    values, weights = _check_values_weights(values, weights)
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    w = weights[order]
    cum = np.cumsum(w)
    mean = float(np.dot(values, weights))
    return float(_superquantile_sorted(sorted_vals, w, cum, mean, alpha))


def buffered_failure_probability(values, weights, alpha_tol: float = 1e-12) -> float:
    """Buffered probability of the event Y > 0 for a weighted sample.

    Returns 1 - alpha0 where the alpha0-superquantile equals zero, located
    by bisection on alpha against the exact sorted-sum superquantile.
    Conventions at the edges: 1 if the weighted mean is >= 0, 0 if the
    largest value is negative, and the weight mass of the maximum when the
    maximum is exactly zero.
    """
    values, weights = _check_values_weights(values, weights)
    mean = float(np.dot(values, weights))
    if mean >= 0.0:
        return 1.0
    vmax = float(values.max())
    if vmax < 0.0:
        return 0.0
    w_max = float(weights[values == vmax].sum())
    if vmax == 0.0:
        return w_max
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    w = weights[order]
    cum = np.cumsum(w)
    lo, hi = 0.0, 1.0 - w_max  # superquantile(hi) = vmax > 0, superquantile(lo) = mean < 0
    while hi - lo > alpha_tol:
        mid = 0.5 * (lo + hi)
        if _superquantile_sorted(sorted_vals, w, cum, mean, mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 1.0 - 0.5 * (lo + hi)


@dataclass(frozen=True)
class ComponentEvaluation:
    """Component limit-state values and design gradients at one (x, v).

    Attributes:
        values: array (Q,) of g_q(x, v).
        gradients: array (Q, D) of gradients with respect to x.
    """

    values: np.ndarray
    gradients: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        gradients = np.atleast_2d(np.asarray(self.gradients, dtype=float))
        if gradients.shape[0] != values.shape[0]:
            raise ValueError("gradients must have one row per component value")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "gradients", gradients)


@dataclass(frozen=True)
class ProblemDefinition:
    """A reliability optimization problem.

    Attributes:
        dimension: number of design variables D.
        lower, upper: box bounds on the design vector.
        cost: oracle x -> (c(x), grad c(x)).
        components: oracle (x, v) -> ComponentEvaluation for one sample v.
        structure: cut-set system structure over the components.
        target_bpf: target buffered failure probability, in (0, 1).
        lipschitz_overestimate: overestimate of the cost gradient's
            Lipschitz constant; zero is valid for convex costs.
        values_batch: optional vectorized oracle (x, V) -> (N, Q) component
            values for an (N, M) sample block; used for large sample scans.
        gradients_batch: optional vectorized oracle (x, V) -> (values (N, Q),
            gradients (N, Q, D)); speeds up linearization over active blocks.
    """

    dimension: int
    lower: np.ndarray
    upper: np.ndarray
    cost: Callable[[np.ndarray], tuple]
    components: Callable[[np.ndarray, np.ndarray], ComponentEvaluation]
    structure: SystemStructure
    target_bpf: float
    lipschitz_overestimate: float = 0.0
    values_batch: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    gradients_batch: Optional[Callable[[np.ndarray, np.ndarray], tuple]] = None
    name: str = "custom"

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()
        if lower.shape != (self.dimension,) or upper.shape != (self.dimension,):
            raise ValueError("box bounds must have length equal to the design dimension")
        if np.any(lower >= upper):
            raise ValueError("lower bounds must be strictly below upper bounds")
        if not 0.0 < self.target_bpf < 1.0:
            raise ValueError("target buffered failure probability must lie in (0, 1)")
        if self.lipschitz_overestimate < 0.0:
            raise ValueError("lipschitz overestimate must be nonnegative")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def component_values(self, x: np.ndarray, samples: np.ndarray) -> np.ndarray:
        """Component values for a block of samples, shape (N, Q)."""
        x = np.asarray(x, dtype=float)
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if self.values_batch is not None:
            return np.asarray(self.values_batch(x, samples), dtype=float)
        out = np.empty((samples.shape[0], self.structure.component_count))
        for n in range(samples.shape[0]):
            out[n] = self.components(x, samples[n]).values
        return out

    def system_values(self, x: np.ndarray, samples: np.ndarray) -> np.ndarray:
        """System limit states g_sys(x, v_n) for a block of samples."""
        return self.structure.system_values(self.component_values(x, samples))

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))
