"""The three benchmark problems, sample generation, and dataset ingestion.

Each builder returns a `ProblemDefinition` with closed-form component
limit states and gradients plus a vectorized batch evaluator, and has a
matching sample generator.  The truss problem is data-driven: its failure
modes (member sequences with force coefficients) are ingested from a JSON
dataset rather than derived at run time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .reliability import ComponentEvaluation, ProblemDefinition, SampleSet, SystemStructure
from .sampling import generator, latin_hypercube, open_uniforms, standard_normals

__all__ = [
    "beam_problem",
    "truss_problem",
    "power_problem",
    "build_problem",
    "draw_samples",
    "sample_count_from_cov",
    "FailureModeTable",
    "load_failure_modes",
    "default_truss_dataset_path",
    "latin_hypercube",
]

PROBLEM_NAMES = ("beam", "truss", "power")

TRUSS_MODE_COUNT = 108


# ---------------------------------------------------------------------------
# cantilever beam propped by a brittle bar

_BEAM_HALF_SPAN = 5.0
_BEAM_SIGMA_M = 300.0
_BEAM_SIGMA_T = 20.0
_BEAM_MU_P = 150.0
_BEAM_SIGMA_P = 30.0
# rows: components; columns: (x1, x2) slopes
_BEAM_GRADS = np.array(
    [
        [0.0, -1.0],
        [-1.0, 0.0],
        [-1.0, 0.0],
        [-1.0, 0.0],
        [-1.0, -2.0 * _BEAM_HALF_SPAN],
    ]
)


def _beam_values(x, v):
    """Component limit states of the propped cantilever; v = (vM, vT, vP)."""
    length = _BEAM_HALF_SPAN
    x1, x2 = x[0], x[1]
    v1, v2, v3 = v[..., 0], v[..., 1], v[..., 2]
    g1 = -(x2 + v2 - 5.0 * v3 / 16.0)
    g2 = -(x1 + v1 - length * v3)
    g3 = -(x1 + v1 - 3.0 * length * v3 / 8.0)
    g4 = -(x1 + v1 - length * v3 / 3.0)
    g5 = -(x1 + v1 + 2.0 * length * (x2 + v2) - length * v3)
    return np.stack([g1, g2, g3, g4, g5], axis=-1)


def beam_problem(target_bpf: float = 1e-3) -> ProblemDefinition:
    """Propped cantilever with plastic moment and bar strength as design means.

    Two design variables: the mean moment capacity in [500, 1500] and the
    mean bar strength in [50, 150]; cost 2*x1 + x2.  Three cut-sets over
    five affine component limit states.
    """

    def cost(x):
        return 2.0 * x[0] + x[1], np.array([2.0, 1.0])

    def components(x, v):
        return ComponentEvaluation(values=_beam_values(x, v), gradients=_BEAM_GRADS)

    def gradients_batch(x, v):
        values = _beam_values(x, v)
        return values, np.broadcast_to(_BEAM_GRADS, values.shape + (2,))

    structure = SystemStructure(cut_sets=((0, 1), (2, 3), (2, 4)), component_count=5)
    return ProblemDefinition(
        dimension=2,
        lower=np.array([500.0, 50.0]),
        upper=np.array([1500.0, 150.0]),
        cost=cost,
        components=components,
        structure=structure,
        target_bpf=target_bpf,
        values_batch=_beam_values,
        gradients_batch=gradients_batch,
        name="beam",
    )


def beam_samples(n: int, seed: int) -> SampleSet:
    rng = generator(seed)
    z = standard_normals(rng, (n, 3))
    samples = np.empty((n, 3))
    samples[:, 0] = _BEAM_SIGMA_M * z[:, 0]
    samples[:, 1] = _BEAM_SIGMA_T * z[:, 1]
    samples[:, 2] = _BEAM_MU_P + _BEAM_SIGMA_P * z[:, 2]
    return SampleSet.equally_weighted(samples)


# ---------------------------------------------------------------------------
# truss bridge with ingested failure-mode dataset

_TRUSS_MU_R = 276.0
_TRUSS_SIGMA_R = 13.8
_TRUSS_MU_P = 190.0
_TRUSS_SIGMA_P = 19.0
_TRUSS_MEMBER_COUNT = 10
_TRUSS_GROUP_COUNT = 4


@dataclass(frozen=True)
class FailureModeTable:
    """Failure-mode dataset: member metadata plus per-mode force coefficients.

    Attributes:
        member_groups: (10,) 0-based design-group index of each member.
        member_lengths: (10,) member lengths.
        mode_members: tuple of K tuples of 0-based member indices.
        mode_deltas: tuple of K tuples of force coefficients, aligned.
    """

    member_groups: np.ndarray
    member_lengths: np.ndarray
    mode_members: tuple
    mode_deltas: tuple

    @property
    def mode_count(self) -> int:
        return len(self.mode_members)


class DatasetError(ValueError):
    """The failure-mode dataset file violates the expected schema."""


def default_truss_dataset_path() -> Path:
    return Path(resources.files("sborm").joinpath("data/truss_modes.json"))


def load_failure_modes(
    path: Union[str, Path],
    expected_modes: Optional[int] = None,
) -> FailureModeTable:
    """Load and validate a truss failure-mode dataset.

    The file must be a UTF-8 JSON object with exactly the keys "members"
    (10 records with id 1..10, group 1..4 and a positive length) and
    "modes" (records with aligned "members" and "delta" arrays).  Schema
    violations raise `DatasetError` naming the offending record; when
    `expected_modes` is given, the mode count must match exactly.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except (OSError, ValueError) as exc:
        raise DatasetError(f"{path}: not parseable as JSON: {exc}") from exc
    if not isinstance(raw, dict) or set(raw.keys()) != {"members", "modes"}:
        raise DatasetError(f"{path}: top level must be an object with keys 'members' and 'modes'")

    members = raw["members"]
    if not isinstance(members, list) or len(members) != _TRUSS_MEMBER_COUNT:
        raise DatasetError(f"{path}: 'members' must list exactly {_TRUSS_MEMBER_COUNT} records")
    groups = np.full(_TRUSS_MEMBER_COUNT, -1, dtype=np.intp)
    lengths = np.zeros(_TRUSS_MEMBER_COUNT)
    for i, rec in enumerate(members):
        if not isinstance(rec, dict) or set(rec.keys()) != {"id", "group", "length"}:
            raise DatasetError(f"{path}: member record {i} must have keys id/group/length")
        mid, grp, length = rec["id"], rec["group"], rec["length"]
        if not (isinstance(mid, int) and 1 <= mid <= _TRUSS_MEMBER_COUNT):
            raise DatasetError(f"{path}: member record {i}: id {mid!r} outside 1..10")
        if groups[mid - 1] >= 0:
            raise DatasetError(f"{path}: member record {i}: duplicate id {mid}")
        if not (isinstance(grp, int) and 1 <= grp <= _TRUSS_GROUP_COUNT):
            raise DatasetError(f"{path}: member record {i}: group {grp!r} outside 1..4")
        if not (isinstance(length, (int, float)) and math.isfinite(length) and length > 0):
            raise DatasetError(f"{path}: member record {i}: length {length!r} must be positive")
        groups[mid - 1] = grp - 1
        lengths[mid - 1] = float(length)

    modes = raw["modes"]
    if not isinstance(modes, list) or len(modes) < 1:
        raise DatasetError(f"{path}: 'modes' must be a nonempty list")
    mode_members = []
    mode_deltas = []
    for k, rec in enumerate(modes):
        if not isinstance(rec, dict) or set(rec.keys()) != {"members", "delta"}:
            raise DatasetError(f"{path}: mode record {k} must have keys members/delta")
        ms, ds = rec["members"], rec["delta"]
        if not (isinstance(ms, list) and isinstance(ds, list)) or len(ms) != len(ds) or len(ms) < 1:
            raise DatasetError(f"{path}: mode record {k}: members/delta must be nonempty and aligned")
        for q in ms:
            if not (isinstance(q, int) and 1 <= q <= _TRUSS_MEMBER_COUNT):
                raise DatasetError(f"{path}: mode record {k}: member index {q!r} outside 1..10")
        for d in ds:
            if not (isinstance(d, (int, float)) and math.isfinite(d)):
                raise DatasetError(f"{path}: mode record {k}: delta {d!r} must be finite")
        mode_members.append(tuple(int(q) - 1 for q in ms))
        mode_deltas.append(tuple(float(d) for d in ds))

    if expected_modes is not None and len(mode_members) != expected_modes:
        raise DatasetError(
            f"{path}: expected {expected_modes} failure modes, found {len(mode_members)}"
        )
    return FailureModeTable(
        member_groups=groups,
        member_lengths=lengths,
        mode_members=tuple(mode_members),
        mode_deltas=tuple(mode_deltas),
    )


def truss_problem(
    target_bpf: float = 1e-3,
    dataset: Union[None, str, Path, FailureModeTable] = None,
) -> ProblemDefinition:
    """Indeterminate truss bridge sized by four cross-section groups.

    Component limit states come from the failure-mode dataset: each mode is
    a cut-set and each (mode, member) pair is one component with limit
    state v0 * delta - x_group * v_member.  Random vector: the load
    followed by the ten member strengths.
    """
    if dataset is None or isinstance(dataset, (str, Path)):
        path = default_truss_dataset_path() if dataset is None else Path(dataset)
        expected = TRUSS_MODE_COUNT if dataset is None else None
        table = load_failure_modes(path, expected_modes=expected)
    else:
        table = dataset

    # flatten (mode, position) pairs into components
    comp_member = []
    comp_delta = []
    cut_sets = []
    for ms, ds in zip(table.mode_members, table.mode_deltas):
        start = len(comp_member)
        comp_member.extend(ms)
        comp_delta.extend(ds)
        cut_sets.append(tuple(range(start, start + len(ms))))
    comp_member = np.asarray(comp_member, dtype=np.intp)
    comp_delta = np.asarray(comp_delta, dtype=float)
    comp_group = table.member_groups[comp_member]
    q_count = comp_member.size
    structure = SystemStructure(cut_sets=tuple(cut_sets), component_count=q_count)

    group_lengths = np.zeros(_TRUSS_GROUP_COUNT)
    for m in range(_TRUSS_MEMBER_COUNT):
        group_lengths[table.member_groups[m]] += table.member_lengths[m]

    def cost(x):
        return float(group_lengths @ x), group_lengths.copy()

    def values_batch(x, v):
        # v columns: load v0, then strengths of members 1..10
        return v[..., 0, None] * comp_delta - x[comp_group] * v[..., comp_member + 1]

    def components(x, v):
        values = values_batch(x, np.asarray(v, dtype=float))
        grads = np.zeros((q_count, _TRUSS_GROUP_COUNT))
        grads[np.arange(q_count), comp_group] = -np.asarray(v, dtype=float)[comp_member + 1]
        return ComponentEvaluation(values=values, gradients=grads)

    def gradients_batch(x, v):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        grads = np.zeros((v.shape[0], q_count, _TRUSS_GROUP_COUNT))
        grads[:, np.arange(q_count), comp_group] = -v[:, comp_member + 1]
        return values_batch(x, v), grads

    return ProblemDefinition(
        dimension=_TRUSS_GROUP_COUNT,
        lower=np.ones(_TRUSS_GROUP_COUNT),
        upper=np.full(_TRUSS_GROUP_COUNT, 2.0),
        cost=cost,
        components=components,
        structure=structure,
        target_bpf=target_bpf,
        values_batch=values_batch,
        gradients_batch=gradients_batch,
        name="truss",
    )


def truss_samples(n: int, seed: int) -> SampleSet:
    rng = generator(seed)
    z = standard_normals(rng, (n, 11))
    samples = np.empty((n, 11))
    samples[:, 0] = _TRUSS_MU_P + _TRUSS_SIGMA_P * z[:, 0]
    samples[:, 1:] = _TRUSS_MU_R + _TRUSS_SIGMA_R * z[:, 1:]
    return SampleSet.equally_weighted(samples)


# ---------------------------------------------------------------------------
# testing-time allocation on substation components under reliability growth

_POWER_ALPHA = 9.0
_POWER_BETA = 2.0
_POWER_DT = 365.0
# component types: DS, CB, PT, DB, TB, FB, assigned by stage: the entry
# switch pair, the high-side bus tie (the sole TB), the two parallel
# three-stage chains with the low-side tie grouped among the drawout
# breakers, and the outgoing feeder pair
_POWER_TYPE_OF = np.array([0, 0, 4, 1, 1, 2, 2, 3, 3, 3, 5, 5], dtype=np.intp)
_POWER_CUT_SETS = (
    (1, 2), (4, 5), (4, 7), (4, 9), (5, 6), (6, 7), (6, 9), (5, 8), (7, 8),
    (8, 9), (11, 12), (1, 3, 5), (1, 3, 7), (1, 3, 9), (2, 3, 4), (2, 3, 6),
    (2, 3, 8), (4, 10, 12), (6, 10, 12), (8, 10, 12), (5, 10, 11),
    (7, 10, 11), (9, 10, 11), (1, 3, 10, 12), (2, 3, 10, 11),
)


def power_problem(target_bpf: float = 1e-3, upper_bound: float = 10.0) -> ProblemDefinition:
    """Allocate testing time over six component types of a substation.

    Each component's time-to-fault is exponential with a rate that decays
    with the testing time of its type; the limit state is positive when a
    fault arrives within the target operation window.  Twenty-five minimum
    cut sets over twelve components.

    The default upper bound keeps exp(2x) within a range where the
    penalized objective stays numerically meaningful in double precision;
    all known optimal allocations sit well below it.
    """
    cut_sets = tuple(tuple(q - 1 for q in cs) for cs in _POWER_CUT_SETS)
    structure = SystemStructure(cut_sets=cut_sets, component_count=12)
    ab = _POWER_ALPHA * _POWER_BETA

    def cost(x):
        return float(np.sum(x)), np.ones(6)

    def _check(v):
        if np.any(v <= 0.0) or np.any(v >= 1.0):
            raise ValueError("uniform realizations must lie strictly inside (0, 1)")

    def values_batch(x, v):
        _check(v)
        growth = np.exp(_POWER_BETA * x[_POWER_TYPE_OF]) / ab
        return _POWER_DT + np.log(v) * growth

    def components(x, v):
        v = np.asarray(v, dtype=float)
        _check(v)
        growth = np.exp(_POWER_BETA * x[_POWER_TYPE_OF])
        values = _POWER_DT + np.log(v) * growth / ab
        grads = np.zeros((12, 6))
        grads[np.arange(12), _POWER_TYPE_OF] = np.log(v) * growth / _POWER_ALPHA
        return ComponentEvaluation(values=values, gradients=grads)

    def gradients_batch(x, v):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        _check(v)
        growth = np.exp(_POWER_BETA * x[_POWER_TYPE_OF])
        logv = np.log(v)
        grads = np.zeros((v.shape[0], 12, 6))
        grads[:, np.arange(12), _POWER_TYPE_OF] = logv * growth / _POWER_ALPHA
        return _POWER_DT + logv * growth / ab, grads

    return ProblemDefinition(
        dimension=6,
        lower=np.ones(6),
        upper=np.full(6, float(upper_bound)),
        cost=cost,
        components=components,
        structure=structure,
        target_bpf=target_bpf,
        values_batch=values_batch,
        gradients_batch=gradients_batch,
        name="power",
    )


def power_samples(n: int, seed: int) -> SampleSet:
    rng = generator(seed)
    u = open_uniforms(rng, (n, 12))
    # also exclude the (never observed in practice) upper boundary
    mask = u >= 1.0
    while np.any(mask):
        u[mask] = open_uniforms(rng, int(mask.sum()))
        mask = u >= 1.0
    return SampleSet.equally_weighted(u)


# ---------------------------------------------------------------------------

_BUILDERS = {"beam": beam_problem, "truss": truss_problem, "power": power_problem}
_SAMPLERS = {"beam": beam_samples, "truss": truss_samples, "power": power_samples}


def build_problem(kind: str, target_bpf: float = 1e-3, **kwargs) -> ProblemDefinition:
    """Build one of the named benchmark problems."""
    if kind not in _BUILDERS:
        raise ValueError(f"unknown problem kind {kind!r}; choose from {PROBLEM_NAMES}")
    return _BUILDERS[kind](target_bpf=target_bpf, **kwargs)


def draw_samples(kind: str, n: int, seed: int) -> SampleSet:
    """Draw the random-vector sample set for one of the named problems.

    Deterministic for a fixed seed: the underlying stream is counter-based
    and normals are produced by inverse-CDF transform.
    """
    if kind not in _SAMPLERS:
        raise ValueError(f"unknown problem kind {kind!r}; choose from {PROBLEM_NAMES}")
    if n < 1:
        raise ValueError("need at least one sample")
    return _SAMPLERS[kind](n, seed)


def sample_count_from_cov(target_bpf: float, target_cov: float) -> int:
    """Sample count achieving a target coefficient of variation.

    Evaluates ceil((1 - p) / (p * cov^2)) with a guard so values that are
    integral up to round-off do not get bumped to the next integer.
    """
    if not 0.0 < target_bpf < 1.0:
        raise ValueError("target probability must lie in (0, 1)")
    if not 0.0 < target_cov <= 1.0:
        raise ValueError("target coefficient of variation must lie in (0, 1]")
    raw = (1.0 - target_bpf) / (target_bpf * target_cov**2)
    nearest = round(raw)
    if abs(raw - nearest) <= 1e-9 * max(raw, 1.0):
        return int(nearest)
    return int(math.ceil(raw))
