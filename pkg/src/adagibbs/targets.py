"""Target distributions over product spaces.

Two concrete families are supported:

* :class:`FiniteProductTarget` -- an unnormalised positive mass function on a
  finite product of coordinate state lists, optionally restricted by a support
  predicate (for non-rectangular spaces).  This powers both exact kernel
  construction and exact conditional sampling.
* :class:`ContinuousProductTarget` -- a product of identically shaped one
  dimensional densities ``scale_i * g(scale_i * x_i)`` with ``g`` compactly
  supported, together with a linear observable ``f(x) = a0 + sum_i a_i x_i``.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad


class TargetError(ValueError):
    """Raised when a target violates its construction invariants."""


class FiniteProductTarget:
    """Unnormalised strictly positive mass function on a finite product space.

    Args:
        coordinate_states: one finite list of admissible values per coordinate.
        mass: callable mapping a full state tuple to an unnormalised mass.
        support: optional predicate; states where it is falsy are excluded
            from the space (used e.g. for ladder-shaped spaces).
    """

    def __init__(
        self,
        coordinate_states: Sequence[Sequence],
        mass: Callable[[tuple], float],
        support: Optional[Callable[[tuple], bool]] = None,
    ):
        self.coordinate_states = tuple(tuple(c) for c in coordinate_states)
        if any(len(c) == 0 for c in self.coordinate_states):
            raise TargetError("every coordinate needs at least one state")
        self._mass_fn = mass
        self._support = support

        states = []
        masses = []
        for x in itertools.product(*self.coordinate_states):
            if support is not None and not support(x):
                continue
            m = float(mass(x))
            if not math.isfinite(m) or m <= 0.0:
                raise TargetError(f"state {x!r} has non-positive mass {m!r}")
            states.append(x)
            masses.append(m)
        if not states:
            raise TargetError("empty state space after applying the support predicate")
        self.states = tuple(states)
        self._masses = np.asarray(masses, dtype=np.float64)
        self._total = float(self._masses.sum())
        if not math.isfinite(self._total) or self._total <= 0.0:
            raise TargetError(f"total mass {self._total!r} is not positive and finite")
        self._index = {x: k for k, x in enumerate(self.states)}
        self._cond_cache: dict = {}

    @property
    def d(self) -> int:
        return len(self.coordinate_states)

    def contains(self, x: tuple) -> bool:
        return tuple(x) in self._index

    def mass(self, x: tuple) -> float:
        """Unnormalised mass; zero for states outside the support."""
        k = self._index.get(tuple(x))
        return float(self._masses[k]) if k is not None else 0.0

    def probabilities(self) -> np.ndarray:
        """Normalised probability vector aligned with ``self.states``."""
        return self._masses / self._total

    def conditional(self, i: int, x: tuple):
        """Conditional law of coordinate ``i`` given the other coordinates.

        Returns ``(values, probs)`` over the admissible values of coordinate
        ``i`` with the remaining coordinates frozen at ``x``.  Cached per
        ``(i, x_without_i)`` because samplers revisit the same sections.
        """
        values, probs, _ = self._conditional_tables(i, tuple(x))
        return values, probs

    def conditional_cdf(self, i: int, x: tuple):
        """Like :meth:`conditional` but returning cumulative probabilities."""
        values, _, cum = self._conditional_tables(i, tuple(x))
        return values, cum

    def _conditional_tables(self, i: int, x: tuple):
        key = (i, x[:i], x[i + 1:])
        cached = self._cond_cache.get(key)
        if cached is not None:
            return cached
        values = []
        masses = []
        for v in self.coordinate_states[i]:
            y = x[:i] + (v,) + x[i + 1:]
            k = self._index.get(y)
            if k is not None:
                values.append(v)
                masses.append(self._masses[k])
        if not values:
            raise TargetError(f"no admissible values for coordinate {i} given {x!r}")
        total = math.fsum(masses)
        probs = tuple(m / total for m in masses)
        cum = []
        acc = 0.0
        for p in probs:
            acc += p
            cum.append(acc)
        cum[-1] = 1.0
        tables = (tuple(values), probs, tuple(cum))
        self._cond_cache[key] = tables
        return tables


def raised_cosine(z: float) -> float:
    """Smooth unimodal density (1 + cos(pi z)) / 2 on [-1, 1]."""
    if -1.0 <= z <= 1.0:
        return 0.5 * (1.0 + math.cos(math.pi * z))
    return 0.0


RAISED_COSINE_VARIANCE = 1.0 / 3.0 - 2.0 / math.pi**2


class ContinuousProductTarget:
    """Product density ``prod_i scale_i * g(scale_i * x_i)`` on R^d.

    ``g`` must be a one dimensional density with compact support
    ``[support[0], support[1]]`` and finite positive variance; both are
    verified by quadrature at construction.  ``a0`` and ``a`` define the
    linear observable ``f(x) = a0 + sum_i a_i x_i``.
    """

    DENSITY_QUAD_TOL = 1e-8

    def __init__(
        self,
        scales: Sequence[float],
        g: Callable[[float], float],
        support: tuple,
        a0: float = 0.0,
        a: Optional[Sequence[float]] = None,
    ):
        self.scales = tuple(float(c) for c in scales)
        if any(c <= 0 or not math.isfinite(c) for c in self.scales):
            raise TargetError(f"scales must be strictly positive, got {self.scales}")
        self.g = g
        lo, hi = float(support[0]), float(support[1])
        if not lo < hi:
            raise TargetError(f"empty support interval [{lo}, {hi}]")
        self.support = (lo, hi)
        self.a0 = float(a0)
        self.a = tuple(float(v) for v in (a if a is not None else [1.0] * len(self.scales)))
        if len(self.a) != len(self.scales):
            raise TargetError("linear coefficients and scales must share the dimension")

        total, _ = quad(g, lo, hi, limit=200)
        if abs(total - 1.0) > self.DENSITY_QUAD_TOL:
            raise TargetError(f"base density integrates to {total!r}, expected 1")
        mean, _ = quad(lambda z: z * g(z), lo, hi, limit=200)
        second, _ = quad(lambda z: z * z * g(z), lo, hi, limit=200)
        var = second - mean * mean
        if not math.isfinite(var) or var <= 0.0:
            raise TargetError(f"base density variance {var!r} is not positive and finite")
        self.g_mean = mean
        self.g_variance = var

    @property
    def d(self) -> int:
        return len(self.scales)

    def conditional_density(self, i: int, x: tuple, y: float) -> float:
        """Unnormalised conditional density of coordinate ``i`` at value ``y``.

        The product form makes this independent of the frozen coordinates;
        the ``x`` argument is kept so the signature matches general targets.
        """
        c = self.scales[i]
        return c * self.g(c * y)

    def coordinate_support(self, i: int) -> tuple:
        lo, hi = self.support
        c = self.scales[i]
        return (lo / c, hi / c)

    def coordinate_variance(self, i: int) -> float:
        return self.g_variance / self.scales[i] ** 2

    def f(self, x: Sequence[float]) -> float:
        return self.a0 + math.fsum(ai * xi for ai, xi in zip(self.a, x))

    def observable_trace(self, states: Sequence[Sequence[float]]) -> np.ndarray:
        """Evaluate ``f`` along a trajectory's states."""
        arr = np.asarray(states, dtype=np.float64)
        return self.a0 + arr @ np.asarray(self.a)
