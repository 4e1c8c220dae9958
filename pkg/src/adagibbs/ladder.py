"""The ladder chain: a state-coupled weight rule that can defeat ergodicity.

State space ``{(i, j) : i = j or i = j + 1}`` with target mass ``j**-2``.
The adaptive rule tilts the coordinate-selection weights by ``4 / a_n``
towards whichever coordinate can climb, with a tuning sequence ``a_n`` that
grows so slowly (``10 + log k`` on geometrically stretching blocks) that the
accumulated upward drift never dies out: started at (1, 1) the chain is
transient with positive probability even though the weights converge to
(1/2, 1/2) and every fixed-weight sampler is ergodic.

Everything computable around that construction lives here: the block
schedule, the two-point conditionals, the exact one-step increment law of
``X_1 + X_2 - 2``, the dominating three-point walk with its stochastic-order
certificate, the Hoeffding tail budget showing the escape event has positive
probability, and seeded transience experiments (with a fixed-weight control
arm).  A truncated variant of the space is ergodic again; the exact chain-law
evolution for that case is also provided.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .kernels import single_coordinate_kernel, target_distribution
from .samplers import adap_rsg_run, derive_seed, rsg_run
from .targets import FiniteProductTarget
from .weights import SelectionWeights


@dataclass(frozen=True)
class LadderState:
    """A rung of the ladder: either (i, i) or (i + 1, i)."""

    i: int
    j: int

    def __post_init__(self):
        if self.i < 1 or self.j < 1:
            raise ValueError(f"ladder coordinates must be >= 1, got {(self.i, self.j)}")
        if self.i != self.j and self.i != self.j + 1:
            raise ValueError(f"({self.i}, {self.j}) is not on the ladder")

    def as_tuple(self) -> tuple:
        return (self.i, self.j)


def _ij(x) -> tuple:
    if isinstance(x, LadderState):
        return x.as_tuple()
    state = LadderState(int(x[0]), int(x[1]))
    return state.as_tuple()


class Schedule:
    """Block tuning sequence: a_n = 10 + log(k) on the k-th block.

    Block lengths start at ``b_1 = 1000`` and stretch by the factor
    ``1 + 1/(10 + log n)``; block boundaries are the partial sums ``c_n``.
    Lengths are kept as reals (they are not integers) and looked up by
    binary search over the memoised boundaries.
    """

    def __init__(self, b1: float = 1000.0):
        if b1 <= 0:
            raise ValueError(f"first block length must be positive, got {b1}")
        self._b = [0.0, float(b1)]
        self._c = [0.0, float(b1)]

    def _extend_to_block(self, k: int):
        while len(self._b) <= k:
            n = len(self._b)
            b = self._b[-1] * (1.0 + 1.0 / (10.0 + math.log(n)))
            self._b.append(b)
            self._c.append(self._c[-1] + b)

    def block_length(self, k: int) -> float:
        if k < 1:
            raise ValueError(f"block index must be >= 1, got {k}")
        self._extend_to_block(k)
        return self._b[k]

    def block_boundary(self, k: int) -> float:
        if k < 0:
            raise ValueError(f"block index must be >= 0, got {k}")
        self._extend_to_block(k)
        return self._c[k]

    def block_of(self, n: int) -> int:
        """The unique k with c_{k-1} < n <= c_k."""
        if n < 1:
            raise ValueError(f"step index must be >= 1, got {n}")
        while self._c[-1] < n:
            self._extend_to_block(len(self._b))
        return bisect_left(self._c, n)

    def a(self, n: int) -> float:
        return 10.0 + math.log(self.block_of(n))


_DEFAULT_SCHEDULE = Schedule()


def schedule_a(n: int, schedule: Optional[Schedule] = None) -> float:
    """Tuning value a_n for step ``n`` under the block schedule."""
    return (_DEFAULT_SCHEDULE if schedule is None else schedule).a(n)


def ladder_epsilon(schedule: Optional[Schedule] = None) -> float:
    """Weight floor valid for the whole run: the first block has the
    smallest tuning value, hence the most lopsided weights."""
    return 0.5 - 4.0 / schedule_a(1, schedule)


def ladder_update_rule(x, n: int, schedule: Optional[Schedule] = None) -> SelectionWeights:
    """Weight rule of the counter-example.

    Returns ``(1/2 + 4/a_n, 1/2 - 4/a_n)`` on diagonal states (i = j) and the
    swap on off-diagonal states; both entries stay inside (0, 1) because the
    schedule keeps ``a_n > 8``.
    """
    i, j = _ij(x)
    a = schedule_a(n, schedule)
    tilt = 4.0 / a
    if i == j:
        w = (0.5 + tilt, 0.5 - tilt)
    else:
        w = (0.5 - tilt, 0.5 + tilt)
    return SelectionWeights(w, 0.5 - 4.0 / schedule_a(1, schedule))


def ladder_conditionals(x):
    """Exact full conditionals at a ladder state.

    Returns two ``(values, probs)`` pairs: the law of the first coordinate
    given ``j`` (uniform on {j, j+1}, both rungs carry mass ``j**-2``) and
    the law of the second coordinate given ``i`` (masses proportional to
    ``(i**2, (i-1)**2)`` on ``(i-1, i)``; a point mass at 1 when ``i = 1``).
    """
    i, j = _ij(x)
    first = ((j, j + 1), (0.5, 0.5))
    if i == 1:
        second = ((1,), (1.0,))
    else:
        denom = float(i * i + (i - 1) * (i - 1))
        second = ((i - 1, i), (i * i / denom, (i - 1) * (i - 1) / denom))
    return first, second


class LadderTarget:
    """Sampler-facing view of the ladder target (optionally truncated).

    Exposes the ``conditional`` / ``conditional_cdf`` / ``contains`` interface
    the run loops expect, using the closed-form conditionals so the unbounded
    space needs no enumeration.
    """

    def __init__(self, truncation: Optional[int] = None):
        if truncation is not None and truncation < 2:
            raise ValueError(f"truncation must be >= 2, got {truncation}")
        self.truncation = truncation

    @property
    def d(self) -> int:
        return 2

    def contains(self, x) -> bool:
        try:
            i, j = _ij(x)
        except ValueError:
            return False
        if self.truncation is not None and (i > self.truncation or j > self.truncation):
            return False
        return True

    def conditional(self, coord: int, x):
        i, j = _ij(x)
        if coord == 0:
            if self.truncation is not None and j == self.truncation:
                return (j,), (1.0,)
            return (j, j + 1), (0.5, 0.5)
        if i == 1:
            return (1,), (1.0,)
        denom = float(i * i + (i - 1) * (i - 1))
        return (i - 1, i), (i * i / denom, (i - 1) * (i - 1) / denom)

    def conditional_cdf(self, coord: int, x):
        values, probs = self.conditional(coord, x)
        if len(values) == 1:
            return values, (1.0,)
        return values, (probs[0], 1.0)


def truncated_ladder_target(truncation: int) -> FiniteProductTarget:
    """Finite enumeration of the ladder capped at ``truncation`` rungs."""
    if truncation < 2:
        raise ValueError(f"truncation must be >= 2, got {truncation}")
    rng_states = range(1, truncation + 1)
    return FiniteProductTarget(
        (rng_states, rng_states),
        mass=lambda x: x[1] ** -2.0,
        support=lambda x: x[0] == x[1] or x[0] == x[1] + 1,
    )


def ladder_step_law(x, n: int, schedule: Optional[Schedule] = None) -> dict:
    """Exact one-step law of the increment of ``X_1 + X_2 - 2``.

    Composed from the weight rule and the conditionals exactly as the
    sampler executes them, so it remains valid on the degenerate bottom
    rung where the naive closed form would assign mass to a missing state.
    """
    i, j = _ij(x)
    alpha = ladder_update_rule((i, j), n, schedule).weights
    (first_vals, first_probs), (second_vals, second_probs) = ladder_conditionals((i, j))
    law = {-1: 0.0, 0: 0.0, 1: 0.0}
    for v, p in zip(first_vals, first_probs):
        law[v - i] += alpha[0] * p
    for v, p in zip(second_vals, second_probs):
        law[v - j] += alpha[1] * p
    return law


def dominating_walk_law(n: int, schedule: Optional[Schedule] = None) -> dict:
    """Three-point increment law of the comparison walk.

    ``{1/4 - 1/a_n, 1/2, 1/4 + 1/a_n}`` on {-1, 0, +1}; its mean is
    ``2 / a_n``, the drift the ladder inherits once it is high enough.
    """
    a = schedule_a(n, schedule)
    return {-1: 0.25 - 1.0 / a, 0: 0.5, 1: 0.25 + 1.0 / a}


def ladder_increment_floor(i: int, n: int, schedule: Optional[Schedule] = None) -> dict:
    """Three-point law dominated by the ladder increment at height ``i``.

    The down mass is inflated by ``(1 + 2/i)`` and the up mass deflated by
    ``(1 - 2/max(4, i))`` relative to (1/4 -+ 2/a_n), which wipes out the
    height dependence of the exact increment law.
    """
    if i < 1:
        raise ValueError(f"height must be >= 1, got {i}")
    a = schedule_a(n, schedule)
    down = (0.25 - 2.0 / a) * (1.0 + 2.0 / i)
    up = (0.25 + 2.0 / a) * (1.0 - 2.0 / max(4, i))
    return {-1: down, 0: 1.0 - down - up, 1: up}


_DOMINANCE_TOL = 1e-12


def stochastically_dominates(law_hi: dict, law_lo: dict, tol: float = _DOMINANCE_TOL) -> bool:
    """CDF comparison on {-1, 0, +1}: every CDF value of ``law_hi`` is below
    (up to ``tol``) the matching CDF value of ``law_lo``."""
    cdf_hi = law_hi[-1]
    cdf_lo = law_lo[-1]
    if cdf_hi > cdf_lo + tol:
        return False
    cdf_hi += law_hi[0]
    cdf_lo += law_lo[0]
    return cdf_hi <= cdf_lo + tol


def dominance_holds(i: int, n: int, schedule: Optional[Schedule] = None) -> bool:
    """Whether the floor law at height ``i`` dominates the comparison walk.

    Decided by direct CDF comparison; it coincides with the analytic
    criterion ``2 i - 8 >= a_n`` (checked property-wise in the tests).
    """
    return stochastically_dominates(
        ladder_increment_floor(i, n, schedule), dominating_walk_law(n, schedule)
    )


def hoeffding_tail(n_terms: int, t: float) -> float:
    """Hoeffding bound ``exp(-n t^2 / 2)`` for a mean-zero sum of ``n_terms``
    increments confined to [-1, 1], evaluated at deviation ``n_terms * t``."""
    if n_terms < 0:
        raise ValueError(f"n_terms must be >= 0, got {n_terms}")
    return math.exp(-0.5 * n_terms * t * t)


@dataclass(frozen=True)
class FailureBudget:
    """Per-block failure probabilities and the survival product.

    ``p[k-1]`` bounds the probability that the comparison walk loses half its
    expected progress on block ``k``; ``log_p`` carries the same information
    without underflow; ``product`` is ``prod_{k=2..K} (1 - p_k)``.
    """

    p: np.ndarray
    log_p: np.ndarray
    product: float


def failure_probability_budget(
    n_max: int, schedule: Optional[Schedule] = None
) -> FailureBudget:
    """Hoeffding failure budget over the first ``n_max`` blocks.

    Block ``k`` fails with probability at most
    ``exp(-b_k / (2 (10 + log k)^2))``; the budget is summable, so the
    product of survival probabilities stays away from zero.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    sched = _DEFAULT_SCHEDULE if schedule is None else schedule
    log_p = np.empty(n_max)
    for k in range(1, n_max + 1):
        log_p[k - 1] = -0.5 * sched.block_length(k) / (10.0 + math.log(k)) ** 2
    p = np.exp(log_p)
    survival = math.fsum(math.log1p(-v) for v in p[1:] if v > 0.0)
    return FailureBudget(p=p, log_p=log_p, product=math.exp(survival))


def last_half_slope(values: Sequence[float]) -> float:
    """Least-squares slope of the last half of a trace (burn-in ignored)."""
    arr = np.asarray(values, dtype=np.float64)
    half = arr[len(arr) // 2:]
    if len(half) < 2:
        raise ValueError("trace too short for a slope")
    ns = np.arange(len(half), dtype=np.float64)
    return float(np.polyfit(ns, half, 1)[0])


@dataclass(frozen=True)
class RunRecord:
    seed: int
    final_height: int
    slope: float


@dataclass(frozen=True)
class TransienceSummary:
    """Per-replicate diagnostics for the escape experiment and its control."""

    adaptive: tuple
    control: tuple
    n_steps: int
    base_seed: int

    def adaptive_escapes(self, height: int, require_positive_slope: bool = True) -> int:
        return sum(
            1
            for r in self.adaptive
            if r.final_height > height and (not require_positive_slope or r.slope > 0.0)
        )

    def control_contained(self, height: int) -> int:
        return sum(1 for r in self.control if r.final_height <= height)


def transience_experiment(
    n_steps: int,
    n_runs: int,
    base_seed: int,
    schedule: Optional[Schedule] = None,
    trace_hook: Optional[Callable] = None,
) -> TransienceSummary:
    """Escape experiment: adaptive ladder runs against a fixed-weight control.

    Each replicate starts at (1, 1).  The adaptive arm follows the tilt rule;
    the control arm fixes the weights at (1/2, 1/2), which is positive
    recurrent.  Per run the final height ``X_{n,1}`` and the last-half slope
    of its trace are recorded; ``trace_hook(arm, run_index, trace)`` sees each
    height trace before it is discarded (used for emitting plot data).
    """
    target = LadderTarget()
    sched = _DEFAULT_SCHEDULE if schedule is None else schedule
    eps = ladder_epsilon(sched)
    alpha0 = SelectionWeights((0.5, 0.5), eps)
    control_alpha = SelectionWeights((0.5, 0.5), 0.5)

    def rule(n, alpha_prev, x_prev, scratch):
        return ladder_update_rule(x_prev, n, sched)

    adaptive = []
    control = []
    for r in range(n_runs):
        seed = derive_seed(base_seed, r)
        traj = adap_rsg_run(target, rule, (1, 1), alpha0, n_steps, seed)
        heights = traj.coordinate_trace(0)
        if trace_hook is not None:
            trace_hook("adaptive", r, heights)
        adaptive.append(
            RunRecord(seed, int(heights[-1]), last_half_slope(heights))
        )
    for r in range(n_runs):
        seed = derive_seed(base_seed, n_runs + r)
        traj = rsg_run(target, control_alpha, (1, 1), n_steps, seed)
        heights = traj.coordinate_trace(0)
        if trace_hook is not None:
            trace_hook("control", r, heights)
        control.append(
            RunRecord(seed, int(heights[-1]), last_half_slope(heights))
        )
    return TransienceSummary(tuple(adaptive), tuple(control), n_steps, base_seed)


def linear_schedule(offset: float = 10.0, slope: float = 5.0) -> Callable[[int], float]:
    """Admissible fast tuning sequence ``a_n = offset + slope * n``.

    Still of the rule's required form (bigger than 8 and increasing to
    infinity), but fast enough that the truncated chain's ergodicity is
    visible at desk scale; the block schedule needs astronomically many steps
    for that because its weights stay tilted by ~0.3 for any feasible horizon.
    """
    if offset <= 8.0 or slope <= 0.0:
        raise ValueError("need offset > 8 and slope > 0 for an admissible sequence")
    return lambda n: offset + slope * n


@dataclass(frozen=True)
class TruncatedLadderEvolution:
    """Exact chain-law trace on the truncated ladder."""

    tv: np.ndarray
    horizon: Optional[int]
    tv_target: float
    truncation: int

    @property
    def reached(self) -> bool:
        return self.horizon is not None


def truncated_ladder_evolution(
    truncation: int,
    a_of_n: Callable[[int], float],
    tv_target: float = 1e-3,
    max_steps: int = 200_000,
    start=(1, 1),
) -> TruncatedLadderEvolution:
    """Exact evolution of the adaptive chain law on the truncated ladder.

    The weights enter each row affinely through the tilt ``4 / a_n``, so the
    step kernel is ``K_half + (4 / a_n) * B`` for two fixed matrices: the
    half-half Gibbs kernel and the signed coordinate-kernel difference.  The
    law is pushed forward with two mat-vecs per step until the total
    variation distance to the target drops below ``tv_target`` (the horizon)
    or ``max_steps`` is hit.
    """
    target = truncated_ladder_target(truncation)
    p1 = single_coordinate_kernel(target, 0).matrix
    p2 = single_coordinate_kernel(target, 1).matrix
    k_half = 0.5 * (p1 + p2)
    sign = np.asarray([1.0 if x[0] == x[1] else -1.0 for x in target.states])
    bias = sign[:, np.newaxis] * (p1 - p2)

    pi = target.probabilities()
    v = np.zeros(len(target.states))
    v[target.states.index(tuple(start))] = 1.0

    tv = np.empty(max_steps + 1)
    tv[0] = 0.5 * np.abs(v - pi).sum()
    horizon = None
    for n in range(1, max_steps + 1):
        tilt = 4.0 / a_of_n(n)
        v = v @ k_half + tilt * (v @ bias)
        tv[n] = 0.5 * np.abs(v - pi).sum()
        if tv[n] < tv_target:
            horizon = n
            break
    end = horizon if horizon is not None else max_steps
    return TruncatedLadderEvolution(
        tv=tv[: end + 1], horizon=horizon, tv_target=tv_target, truncation=truncation
    )


@dataclass(frozen=True)
class UnboundedLadderLaw:
    """Exact law of the unbounded adaptive chain at a finite horizon.

    ``tv_to_target`` is the exact total variation distance to the unbounded
    target (the enumerated part plus the target's mass beyond the horizon's
    reachable support).
    """

    states: tuple
    probs: np.ndarray
    n_steps: int
    tv_to_target: float


def unbounded_ladder_law(
    n_steps: int, a_of_n: Optional[Callable[[int], float]] = None, start=(1, 1)
) -> UnboundedLadderLaw:
    """Exact chain law of the unbounded adaptive ladder after ``n_steps``.

    The height climbs at most one rung per step, so the reachable support at
    the horizon fits inside the truncation at ``start height + n_steps + 1``
    and the truncated dynamics agree with the unbounded ones on every state
    the law can touch: no truncation bias.  The total variation distance to
    the unbounded target is then exact, the unreachable tail contributing its
    full target mass.
    """
    sched = a_of_n if a_of_n is not None else (_DEFAULT_SCHEDULE).a
    truncation = int(max(start)) + n_steps + 1
    target = truncated_ladder_target(truncation)
    p1 = single_coordinate_kernel(target, 0).matrix
    p2 = single_coordinate_kernel(target, 1).matrix
    k_half = 0.5 * (p1 + p2)
    sign = np.asarray([1.0 if x[0] == x[1] else -1.0 for x in target.states])
    bias = sign[:, np.newaxis] * (p1 - p2)
    v = np.zeros(len(target.states))
    v[target.states.index(tuple(start))] = 1.0
    for n in range(1, n_steps + 1):
        tilt = 4.0 / sched(n)
        v = v @ k_half + tilt * (v @ bias)

    # unbounded target: mass j**-2 on both (j, j) and (j+1, j)
    total = 2.0 * (math.pi**2 / 6.0)
    pi_enum = np.asarray([x[1] ** -2.0 / total for x in target.states])
    tail = 1.0 - pi_enum.sum()
    tv = 0.5 * (float(np.abs(v - pi_enum).sum()) + tail)
    return UnboundedLadderLaw(
        states=target.states, probs=v, n_steps=n_steps, tv_to_target=tv
    )


def truncated_ladder_kernel(
    truncation: int, n: int, a_of_n: Callable[[int], float]
):
    """Step-``n`` kernel of the truncated adaptive chain as a TransitionMatrix
    (reference path for :func:`truncated_ladder_evolution`)."""
    from .kernels import state_dependent_gibbs_kernel

    target = truncated_ladder_target(truncation)
    a = a_of_n(n)
    eps = 0.5 - 4.0 / a_of_n(1)

    def weights_at(x):
        tilt = 4.0 / a
        if x[0] == x[1]:
            return SelectionWeights((0.5 + tilt, 0.5 - tilt), eps)
        return SelectionWeights((0.5 - tilt, 0.5 + tilt), eps)

    return state_dependent_gibbs_kernel(target, weights_at)


def truncated_ladder_target_vector(truncation: int):
    return target_distribution(truncated_ladder_target(truncation))
