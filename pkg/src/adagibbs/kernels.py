"""Exact transition matrices and chain-law computations on finite spaces.

This is the oracle layer: random scan Gibbs and Metropolis-within-Gibbs
kernels are materialised as row-stochastic matrices, the law of the chain is
pushed forward exactly, and total-variation quantities are computed without
sampling error.  Every closed-form bound elsewhere in the package is checked
against numbers produced here.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .targets import FiniteProductTarget
from .weights import SelectionWeights

ROW_SUM_TOL = 1e-12
NEGATIVE_TOL = 1e-15


class EnumerationMismatchError(ValueError):
    """Raised when two objects disagree on the state enumeration."""


class StationaryConvergenceError(RuntimeError):
    """Raised when no stationary vector could be computed."""


def _check_states_equal(a, b):
    if a != b:
        raise EnumerationMismatchError("state enumerations differ")


def state_label(state) -> str:
    """Compact tuple string used in CSV headers, e.g. ``(2,1)``."""
    if isinstance(state, tuple):
        if len(state) == 1:
            return f"({state[0]},)"
        return "(" + ",".join(str(v) for v in state) + ")"
    return str(state)


@dataclass(frozen=True)
class DistributionVector:
    """Probability vector over an explicit state enumeration."""

    states: tuple
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 1 or len(p) != len(self.states):
            raise ValueError("probability vector must align with the enumeration")
        if p.min(initial=0.0) < -NEGATIVE_TOL:
            raise ValueError(f"negative probability entry: {p.min()!r}")
        if abs(p.sum() - 1.0) > ROW_SUM_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, expected 1")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return len(self.states)

    def dump_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([state_label(s) for s in self.states])
            writer.writerow([repr(float(v)) for v in self.probs])


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic matrix over an explicit state enumeration."""

    states: tuple
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        m = np.array(self.matrix, dtype=np.float64)
        n = len(self.states)
        if m.shape != (n, n):
            raise ValueError(f"matrix shape {m.shape} does not match {n} states")
        if m.min(initial=0.0) < -NEGATIVE_TOL:
            raise ValueError(f"negative transition entry: {m.min()!r}")
        row_err = np.abs(m.sum(axis=1) - 1.0).max(initial=0.0)
        if row_err > ROW_SUM_TOL:
            raise ValueError(f"row sums deviate from 1 by {row_err!r}")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return len(self.states)

    def dump_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([state_label(s) for s in self.states])
            for row in self.matrix:
                writer.writerow([repr(float(v)) for v in row])


def tv_distance(p: DistributionVector, q: DistributionVector) -> float:
    """Total variation distance, half the L1 distance between the vectors."""
    _check_states_equal(p.states, q.states)
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


def kernel_tv_sup(p1: TransitionMatrix, p2: TransitionMatrix) -> float:
    """Worst-case row total variation distance between two kernels."""
    _check_states_equal(p1.states, p2.states)
    return 0.5 * float(np.abs(p1.matrix - p2.matrix).sum(axis=1).max())


def target_distribution(target: FiniteProductTarget) -> DistributionVector:
    """The normalised target as a vector over the target's enumeration."""
    return DistributionVector(target.states, target.probabilities())


def single_coordinate_kernel(target: FiniteProductTarget, i: int) -> TransitionMatrix:
    """One Gibbs step that redraws coordinate ``i`` from its conditional."""
    n = len(target.states)
    m = np.zeros((n, n))
    index = {x: k for k, x in enumerate(target.states)}
    for r, x in enumerate(target.states):
        values, probs = target.conditional(i, x)
        for v, p in zip(values, probs):
            y = x[:i] + (v,) + x[i + 1:]
            m[r, index[y]] += p
    return TransitionMatrix(target.states, m)


def gibbs_kernel_matrix(
    target: FiniteProductTarget, alpha: SelectionWeights
) -> TransitionMatrix:
    """Random scan Gibbs kernel: coordinate ``i`` with probability ``alpha_i``,
    then an exact conditional redraw of that coordinate."""
    if alpha.d != target.d:
        raise ValueError(f"weights have d={alpha.d}, target has d={target.d}")
    m = np.zeros((len(target.states),) * 2)
    for i, w in enumerate(alpha.weights):
        m += w * single_coordinate_kernel(target, i).matrix
    return TransitionMatrix(target.states, m)


def state_dependent_gibbs_kernel(
    target: FiniteProductTarget,
    weights_at: Callable[[tuple], SelectionWeights],
) -> TransitionMatrix:
    """Gibbs kernel whose selection weights may depend on the current state.

    This realises one step of an adaptive rule of the form
    ``alpha_n = R(n, X_{n-1})`` as an ordinary (time-frozen) kernel; the
    resulting matrix is generally not stationary for the target.
    """
    parts = [single_coordinate_kernel(target, i).matrix for i in range(target.d)]
    n = len(target.states)
    m = np.zeros((n, n))
    for r, x in enumerate(target.states):
        w = weights_at(x)
        if w.d != target.d:
            raise ValueError(f"weights have d={w.d}, target has d={target.d}")
        for i, wi in enumerate(w.weights):
            m[r, :] += wi * parts[i][r, :]
    return TransitionMatrix(target.states, m)


def systematic_scan_kernel(target: FiniteProductTarget) -> TransitionMatrix:
    """Deterministic-scan Gibbs kernel updating coordinates 1..d in sequence."""
    m = single_coordinate_kernel(target, 0).matrix
    for i in range(1, target.d):
        m = m @ single_coordinate_kernel(target, i).matrix
    return TransitionMatrix(target.states, m)


def mwg_kernel_matrix(
    target: FiniteProductTarget,
    alpha: SelectionWeights,
    proposals: Union[Sequence[np.ndarray], Mapping[int, np.ndarray]],
) -> TransitionMatrix:
    """Random scan Metropolis-within-Gibbs kernel with finite proposals.

    ``proposals[i]`` is a row-stochastic matrix over coordinate ``i``'s state
    list.  A proposed value is accepted with the usual ratio
    ``min(1, pi(y) q(y -> x) / (pi(x) q(x -> y)))`` where the target masses are
    taken with the other coordinates frozen; proposals leaving the support are
    rejected through a zero numerator rather than treated as errors.
    """
    if alpha.d != target.d:
        raise ValueError(f"weights have d={alpha.d}, target has d={target.d}")
    prop = {}
    for i in range(target.d):
        q = np.asarray(proposals[i], dtype=np.float64)
        size = len(target.coordinate_states[i])
        if q.shape != (size, size):
            raise ValueError(f"proposal {i} has shape {q.shape}, expected {(size, size)}")
        if q.min(initial=0.0) < -NEGATIVE_TOL or np.abs(q.sum(axis=1) - 1.0).max() > ROW_SUM_TOL:
            raise ValueError(f"proposal {i} is not row-stochastic")
        prop[i] = q
    value_index = [
        {v: k for k, v in enumerate(states)} for states in target.coordinate_states
    ]

    n = len(target.states)
    m = np.zeros((n, n))
    index = {x: k for k, x in enumerate(target.states)}
    for r, x in enumerate(target.states):
        mass_x = target.mass(x)
        if mass_x <= 0.0:
            raise ValueError(f"state {x!r} has zero mass; invariant violated upstream")
        moved = 0.0
        for i, wi in enumerate(alpha.weights):
            q = prop[i]
            xi = value_index[i][x[i]]
            for yi, v in enumerate(target.coordinate_states[i]):
                if yi == xi:
                    continue
                q_fwd = q[xi, yi]
                if q_fwd == 0.0:
                    continue
                y = x[:i] + (v,) + x[i + 1:]
                mass_y = target.mass(y)
                accept = min(1.0, (mass_y * q[yi, xi]) / (mass_x * q_fwd))
                p_move = wi * q_fwd * accept
                if p_move > 0.0:
                    m[r, index[y]] += p_move
                    moved += p_move
        m[r, r] += 1.0 - moved
    return TransitionMatrix(target.states, m)


def exact_marginal_evolution(
    init: DistributionVector,
    kernel_at_step: Union[Callable[[int], TransitionMatrix], Mapping[int, TransitionMatrix]],
    n_steps: int,
):
    """Push the chain law forward exactly: returns ``[pi_0, ..., pi_n]``.

    ``kernel_at_step(n)`` supplies the kernel used to obtain step ``n`` from
    step ``n - 1`` (n = 1..n_steps), so time-inhomogeneous rules where the
    weights are a deterministic function of ``(n, X_{n-1})`` evolve exactly.
    A kernel whose enumeration strictly contains the current one embeds the
    current law (useful when the reachable support grows with the horizon);
    any other mismatch is an error.
    """
    if isinstance(kernel_at_step, Mapping):
        lookup = kernel_at_step.__getitem__
    else:
        lookup = kernel_at_step
    out = [init]
    states = init.states
    v = np.array(init.probs)
    for n in range(1, n_steps + 1):
        kernel = lookup(n)
        if kernel.states != states:
            embedded = _embed(v, states, kernel.states)
            states = kernel.states
            v = embedded
        v = v @ kernel.matrix
        out.append(DistributionVector(states, v))
    return out


def _embed(v: np.ndarray, states, larger_states) -> np.ndarray:
    index = {x: k for k, x in enumerate(larger_states)}
    out = np.zeros(len(larger_states))
    for x, p in zip(states, v):
        k = index.get(x)
        if k is None:
            raise EnumerationMismatchError(
                f"state {x!r} is absent from the step kernel's enumeration"
            )
        out[k] = p
    return out


POWER_ITERATION_CAP = 10**6
POWER_RESIDUAL = 1e-13


def stationary_distribution(
    p: TransitionMatrix,
    method: str = "power",
    residual: float = POWER_RESIDUAL,
    max_iterations: int = POWER_ITERATION_CAP,
) -> DistributionVector:
    """Left fixed probability vector of ``p``.

    ``method="power"`` iterates ``v <- v P`` until the sup-norm residual drops
    below ``residual``, falling back to a linear solve if the cap is hit;
    ``method="solve"`` goes straight to the linear solve.  The caller is
    responsible for irreducibility and aperiodicity; failure to converge is
    reported, naming the iteration cap.
    """
    if method not in ("power", "solve"):
        raise ValueError(f"unknown method {method!r}")
    m = p.matrix
    if method == "power":
        v = np.full(p.n, 1.0 / p.n)
        for _ in range(max_iterations):
            w = v @ m
            if np.abs(w - v).max() <= residual:
                w = np.maximum(w, 0.0)
                return DistributionVector(p.states, w / w.sum())
            v = w
    solved = _stationary_solve(m)
    if solved is not None and np.abs(solved @ m - solved).max() <= 1e-10:
        return DistributionVector(p.states, solved)
    raise StationaryConvergenceError(
        f"no stationary vector within {max_iterations} power iterations "
        f"(residual target {residual}) and the linear solve did not help"
    )


def _stationary_solve(m: np.ndarray):
    n = m.shape[0]
    a = np.vstack([m.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    try:
        v, *_ = np.linalg.lstsq(a, b, rcond=None)
    except np.linalg.LinAlgError:
        return None
    if v.min() < -1e-10:
        return None
    v = np.maximum(v, 0.0)
    s = v.sum()
    if s <= 0:
        return None
    return v / s


def random_reversible_chain(rng: np.random.Generator, n_states: int):
    """Random ergodic reversible chain, as ``(TransitionMatrix, DistributionVector)``.

    Built from a symmetric positive rate matrix scaled to leave strictly
    positive diagonals, so the chain is irreducible, aperiodic and reversible
    with respect to the drawn stationary vector by construction.
    """
    pi = rng.dirichlet(np.ones(n_states)) * 0.8 + 0.2 / n_states
    pi = pi / pi.sum()
    u = rng.uniform(0.2, 1.0, size=(n_states, n_states))
    a = 0.5 * (u + u.T)
    m = a * pi[np.newaxis, :]
    np.fill_diagonal(m, 0.0)
    scale = 0.9 / m.sum(axis=1).max()
    m *= scale
    np.fill_diagonal(m, 1.0 - m.sum(axis=1))
    states = tuple((k,) for k in range(n_states))
    return TransitionMatrix(states, m), DistributionVector(states, pi)
