"""Reproducible experiment harness.

Every experiment the CLI can run lives here as a pure function taking a
validated :class:`ExperimentConfig` and returning rows, a summary and a
pass/fail verdict; :func:`run_experiment` adds the filesystem side (CSV
outputs plus a manifest recording the canonical config digest and seed).
Identical config and seed produce byte-identical data files regardless of
worker count.
"""

from __future__ import annotations

import concurrent.futures
import csv
import datetime
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import __version__
from .adaptation import ComponentwiseAdaptation
from .bounds import (
    geometric_counterexample_gap,
    minorization_search,
    strong_uniform_constants,
    tv_lipschitz_bound,
    uniform_ergodicity_bound,
)
from .kernels import (
    TransitionMatrix,
    gibbs_kernel_matrix,
    kernel_tv_sup,
    random_reversible_chain,
)
from .ladder import (
    Schedule,
    linear_schedule,
    transience_experiment,
    truncated_ladder_evolution,
)
from .samplers import adap_rsmwg_run, gaussian_random_walk_family
from .targets import ContinuousProductTarget, FiniteProductTarget, raised_cosine
from .variance import (
    ReversibleChain,
    iact_estimate,
    lazy_variance,
    spectral_asymptotic_variance,
    stationary_variance,
)
from .weights import SelectionWeights, make_selection_weights


class ConfigError(ValueError):
    """Raised for malformed experiment configurations, naming the field."""


EXPERIMENT_KINDS = (
    "counterexample",
    "truncated-ladder",
    "bounds",
    "lazy-variance",
    "optimal-scan",
    "geometric-gap",
)

# Per-kind parameter schemas: name -> (caster, predicate, default).
_POSITIVE_INT = (int, lambda v: v >= 1)
_SEED_LIKE = (int, lambda v: v >= 0)
_UNIT_OPEN = (float, lambda v: 0.0 < v < 1.0)

PARAM_SPECS: dict = {
    "lazy-variance": {
        "n_chains": (*_POSITIVE_INT, 100),
        "max_states": (int, lambda v: 2 <= v <= 32, 8),
        "deltas": (
            lambda v: tuple(float(x) for x in v),
            lambda v: all(0.0 < x <= 1.0 for x in v),
            (0.1, 0.3, 0.5, 0.9, 1.0),
        ),
        "tolerance": (float, lambda v: v > 0.0, 1e-10),
    },
    "bounds": {
        "families": (
            lambda v: tuple(str(x) for x in v),
            lambda v: all(x in ("lipschitz", "uniform", "strong") for x in v),
            ("lipschitz", "uniform", "strong"),
        ),
        "n_targets": (*_POSITIVE_INT, 100),
        "epsilon": (_UNIT_OPEN[0], _UNIT_OPEN[1], 0.1),
        "n_alphas": (*_POSITIVE_INT, 20),
        "horizon": (*_POSITIVE_INT, 200),
        "n_chains": (*_POSITIVE_INT, 50),
    },
    "counterexample": {
        "n_steps": (*_POSITIVE_INT, 100_000),
        "n_runs": (*_POSITIVE_INT, 20),
        "final_threshold": (*_POSITIVE_INT, 500),
        "control_threshold": (*_POSITIVE_INT, 50),
        "min_successes": (*_POSITIVE_INT, 16),
        "workers": (*_POSITIVE_INT, 1),
        "trace_stride": (*_POSITIVE_INT, 100),
        "emit_traces": (bool, lambda v: True, True),
    },
    "truncated-ladder": {
        "truncation": (int, lambda v: v >= 2, 20),
        "tv_target": (float, lambda v: 0.0 < v < 1.0, 1e-3),
        "max_steps": (*_POSITIVE_INT, 200_000),
        "schedule": (str, lambda v: v in ("linear", "block"), "linear"),
        "schedule_offset": (float, lambda v: v > 8.0, 10.0),
        "schedule_slope": (float, lambda v: v > 0.0, 2.0),
        "tail_fraction": (float, lambda v: 0.0 < v <= 0.5, 0.1),
    },
    "geometric-gap": {
        "p_values": (
            lambda v: tuple(float(x) for x in v),
            lambda v: all(0.0 < x < 1.0 for x in v),
            (0.3, 0.5, 0.7),
        ),
        "n_min": (*_POSITIVE_INT, 10),
        "n_max": (*_POSITIVE_INT, 40),
        "check_p": (_UNIT_OPEN[0], _UNIT_OPEN[1], 0.5),
        "proposal_n": (*_POSITIVE_INT, 30),
        "proposal_tolerance": (float, lambda v: v > 0.0, 1e-8),
        "kernel_n": (*_POSITIVE_INT, 25),
        "kernel_band": (
            lambda v: tuple(float(x) for x in v),
            lambda v: len(v) == 2 and v[0] < v[1],
            (0.45, 0.5),
        ),
    },
    "optimal-scan": {
        "scales": (
            lambda v: tuple(float(x) for x in v),
            lambda v: all(x > 0.0 for x in v),
            (1.0, 2.0, 4.0, 8.0, 16.0),
        ),
        "a": (
            lambda v: tuple(float(x) for x in v),
            lambda v: True,
            (1.0, 1.0, 1.0, 1.0, 1.0),
        ),
        "epsilon": (_UNIT_OPEN[0], _UNIT_OPEN[1], 0.02),
        "n_batches": (*_POSITIVE_INT, 2000),
        "window_batches": (*_POSITIVE_INT, 100),
        "weight_tolerance": (float, lambda v: v > 0.0, 0.05),
        "acceptance_band": (
            lambda v: tuple(float(x) for x in v),
            lambda v: len(v) == 2 and 0.0 < v[0] < v[1] < 1.0,
            (0.34, 0.54),
        ),
        "eval_steps": (*_POSITIVE_INT, 200_000),
        "eval_burn_in": (int, lambda v: v >= 0, 2_000),
        "variance_ratio_slack": (float, lambda v: v >= 1.0, 1.25),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description.

    The canonical digest covers kind, seed and parameters (not the output
    directory), so relocating results does not change their identity.
    """

    kind: str
    seed: int
    params: dict
    out: Optional[str] = None

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"kind: unknown experiment kind {self.kind!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed: must be a nonnegative integer, got {self.seed!r}")
        spec = PARAM_SPECS[self.kind]
        cleaned = {}
        for name, value in self.params.items():
            if name not in spec:
                raise ConfigError(f"params.{name}: unknown parameter for kind {self.kind!r}")
        for name, (caster, predicate, default) in spec.items():
            raw = self.params.get(name, default)
            try:
                value = caster(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"params.{name}: cannot parse {raw!r} ({exc})") from exc
            if not predicate(value):
                raise ConfigError(f"params.{name}: value {value!r} out of range")
            cleaned[name] = value
        object.__setattr__(self, "params", cleaned)

    def canonical_json(self) -> str:
        payload = {"kind": self.kind, "seed": self.seed, "params": self.params}
        return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=list)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        kind = data.pop("kind", None)
        if kind is None:
            raise ConfigError("kind: missing")
        seed = data.pop("seed", 0)
        out = data.pop("out", None)
        params = data.pop("params", None)
        if params is None:
            params = data
        elif data:
            extra = ", ".join(sorted(data))
            raise ConfigError(f"unexpected top-level keys next to 'params': {extra}")
        return cls(kind=str(kind), seed=seed, params=dict(params), out=out)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path}: expected an object at top level")
        return cls.from_dict(data)

    def with_overrides(self, seed: Optional[int] = None, out: Optional[str] = None):
        return ExperimentConfig(
            kind=self.kind,
            seed=self.seed if seed is None else seed,
            params=dict(self.params),
            out=self.out if out is None else out,
        )


@dataclass(frozen=True)
class RunManifest:
    """Record of one harness invocation; digest + seed identify the outputs."""

    digest: str
    kind: str
    seed: int
    version: str
    created_utc: str
    config: dict
    outputs: tuple

    def write(self, path):
        payload = {
            "digest": self.digest,
            "kind": self.kind,
            "seed": self.seed,
            "version": self.version,
            "created_utc": self.created_utc,
            "config": self.config,
            "outputs": list(self.outputs),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=list)
            fh.write("\n")


@dataclass
class ExperimentResult:
    """Rows, summary and verdict produced by one experiment function."""

    kind: str
    summary: dict
    tables: dict = field(default_factory=dict)
    passed: bool = True
    checks: dict = field(default_factory=dict)


def _record_check(result: ExperimentResult, name: str, ok: bool, detail: str):
    result.checks[name] = {"passed": bool(ok), "detail": detail}
    result.passed = result.passed and bool(ok)


# ---------------------------------------------------------------------------
# shared random generators


def random_finite_product_target(rng: np.random.Generator, d: int, max_states: int = 4):
    """Random strictly positive product-space target with 2..max_states
    values per coordinate and log-normal masses."""
    sizes = [int(rng.integers(2, max_states + 1)) for _ in range(d)]
    coordinate_states = [tuple(range(s)) for s in sizes]
    n_total = int(np.prod(sizes))
    masses = np.exp(rng.normal(0.0, 1.0, size=n_total))
    strides = np.ones(d, dtype=int)
    for i in range(d - 2, -1, -1):
        strides[i] = strides[i + 1] * sizes[i + 1]

    def mass(x):
        flat = int(sum(strides[i] * x[i] for i in range(d)))
        return float(masses[flat])

    return FiniteProductTarget(coordinate_states, mass)


def random_weights_on_floored_simplex(
    rng: np.random.Generator, d: int, epsilon: float
) -> SelectionWeights:
    return make_selection_weights(rng.dirichlet(np.ones(d)), epsilon)


# ---------------------------------------------------------------------------
# lazy-variance


def lazy_variance_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Check the exact lazy-variance identity on random reversible chains."""
    p = config.params
    rng = np.random.Generator(np.random.Philox(config.seed))
    rows = []
    worst = 0.0
    for chain_id in range(p["n_chains"]):
        n_states = int(rng.integers(2, p["max_states"] + 1))
        kernel, pi = random_reversible_chain(rng, n_states)
        chain = ReversibleChain(kernel, pi)
        h = rng.normal(size=n_states)
        h = h - float(pi.probs @ h)
        sigma2 = spectral_asymptotic_variance(chain, h)
        pi_h2 = stationary_variance(chain, h)
        for delta in p["deltas"]:
            mixed = TransitionMatrix(
                kernel.states,
                (1.0 - delta) * np.eye(n_states) + delta * kernel.matrix,
            )
            direct = spectral_asymptotic_variance(ReversibleChain(mixed, pi), h)
            via_identity = lazy_variance(sigma2, delta, pi_h2)
            residual = abs(direct - via_identity)
            worst = max(worst, residual)
            rows.append([chain_id, n_states, delta, direct, via_identity, residual])
    result = ExperimentResult(
        kind=config.kind,
        summary={"max_residual": worst, "tolerance": p["tolerance"]},
        tables={"residuals": (["chain", "n_states", "delta", "lazy_spectral", "identity", "residual"], rows)},
    )
    _record_check(
        result,
        "lazy_identity",
        worst <= p["tolerance"],
        f"max residual {worst:.3e} vs tolerance {p['tolerance']:.1e}",
    )
    return result


# ---------------------------------------------------------------------------
# bounds (three families)


def _bounds_targets(rng: np.random.Generator, n_targets: int):
    out = []
    for _ in range(n_targets):
        d = int(rng.integers(2, 4))
        out.append(random_finite_product_target(rng, d))
    return out


def bounds_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Dominance checks: every closed-form bound against its exact quantity."""
    p = config.params
    rng = np.random.Generator(np.random.Philox(config.seed))
    result = ExperimentResult(kind=config.kind, summary={})
    targets = _bounds_targets(rng, p["n_targets"])

    if "lipschitz" in p["families"]:
        rows = []
        violations = 0
        for t_id, target in enumerate(targets):
            alpha = random_weights_on_floored_simplex(rng, target.d, p["epsilon"])
            alpha_prime = random_weights_on_floored_simplex(rng, target.d, p["epsilon"])
            exact = kernel_tv_sup(
                gibbs_kernel_matrix(target, alpha),
                gibbs_kernel_matrix(target, alpha_prime),
            )
            bound = tv_lipschitz_bound(alpha, alpha_prime, p["epsilon"])
            bad = exact > bound + 1e-12
            violations += bad
            rows.append([t_id, target.d, exact, bound, int(bad)])
        result.tables["lipschitz"] = (
            ["target", "d", "exact_sup_tv", "bound", "violation"],
            rows,
        )
        _record_check(
            result,
            "lipschitz",
            violations == 0,
            f"{violations} violations over {len(rows)} weight pairs",
        )

    if "uniform" in p["families"]:
        rows = []
        violations = 0
        for t_id, target in enumerate(targets):
            beta = SelectionWeights((1.0 / target.d,) * target.d, p["epsilon"])
            p_beta = gibbs_kernel_matrix(target, beta)
            cert = None
            for m in range(target.d, 2 * target.d + 1):
                cert = minorization_search(p_beta, m)
                if cert.s > 0.0:
                    break
            pi = target.probabilities()
            for a_id in range(p["n_alphas"]):
                alpha = random_weights_on_floored_simplex(rng, target.d, p["epsilon"])
                power = np.eye(len(target.states))
                kernel = gibbs_kernel_matrix(target, alpha).matrix
                min_margin = math.inf
                worst_exact = worst_bound = 0.0
                for n in range(1, p["horizon"] + 1):
                    power = power @ kernel
                    exact = 0.5 * np.abs(power - pi[np.newaxis, :]).sum(axis=1).max()
                    bound = uniform_ergodicity_bound(cert, p["epsilon"], target.d, n)
                    if bound - exact < min_margin:
                        min_margin = bound - exact
                        worst_exact, worst_bound = exact, bound
                bad = min_margin < -1e-12
                violations += bad
                rows.append(
                    [t_id, a_id, cert.m, cert.s, worst_exact, worst_bound, min_margin, int(bad)]
                )
        result.tables["uniform"] = (
            ["target", "alpha", "cert_m", "cert_s", "exact_at_worst_n",
             "bound_at_worst_n", "min_margin", "violation"],
            rows,
        )
        _record_check(
            result,
            "uniform",
            violations == 0,
            f"{violations} violations over {len(rows)} weight draws",
        )

    if "strong" in p["families"]:
        rows = []
        violations = 0
        for c_id in range(p["n_chains"]):
            n_states = int(rng.integers(3, 9))
            kernel, pi = random_reversible_chain(rng, n_states)
            cert = minorization_search(kernel, 1)
            m_star, s_star = strong_uniform_constants(cert.m, cert.s)
            power = np.linalg.matrix_power(kernel.matrix, m_star)
            margin = float((power - s_star * pi.probs[np.newaxis, :]).min())
            bad = margin < -1e-12
            violations += bad
            rows.append([c_id, n_states, cert.s, m_star, s_star, margin, int(bad)])
        result.tables["strong"] = (
            ["chain", "n_states", "cert_s", "m_star", "s_star", "min_margin", "violation"],
            rows,
        )
        _record_check(
            result,
            "strong",
            violations == 0,
            f"{violations} violations over {len(rows)} chains",
        )

    result.summary = {name: check["detail"] for name, check in result.checks.items()}
    return result


# ---------------------------------------------------------------------------
# counterexample


def counterexample_experiment(
    config: ExperimentConfig, trace_sink: Optional[Callable] = None
) -> ExperimentResult:
    """Transience of the adaptive ladder against its fixed-weight control."""
    p = config.params
    hook = None
    if trace_sink is not None and p["emit_traces"]:
        stride = p["trace_stride"]

        def hook(arm, run, heights):
            trace_sink(arm, run, heights[::stride], stride)

    summary = _run_transience(
        p["n_steps"], p["n_runs"], config.seed, p["workers"], hook
    )
    rows = []
    for arm, records in (("adaptive", summary.adaptive), ("control", summary.control)):
        for run, rec in enumerate(records):
            rows.append([arm, run, rec.seed, rec.final_height, rec.slope])
    escapes = summary.adaptive_escapes(p["final_threshold"])
    contained = summary.control_contained(p["control_threshold"])
    result = ExperimentResult(
        kind=config.kind,
        summary={
            "escapes": escapes,
            "contained": contained,
            "n_runs": p["n_runs"],
            "final_threshold": p["final_threshold"],
            "control_threshold": p["control_threshold"],
        },
        tables={"runs": (["arm", "run", "seed", "final_height", "last_half_slope"], rows)},
    )
    _record_check(
        result,
        "adaptive_escapes",
        escapes >= p["min_successes"],
        f"{escapes}/{p['n_runs']} runs ended above {p['final_threshold']} with positive slope "
        f"(need {p['min_successes']})",
    )
    _record_check(
        result,
        "control_contained",
        contained >= p["min_successes"],
        f"{contained}/{p['n_runs']} control runs ended at or below {p['control_threshold']} "
        f"(need {p['min_successes']})",
    )
    return result


def _run_transience(n_steps, n_runs, seed, workers, hook):
    if workers <= 1:
        return transience_experiment(n_steps, n_runs, seed, trace_hook=hook)

    # Replicates carry derived seeds, so distribution over workers cannot
    # change any result; traces are surfaced in index order afterwards.
    from .ladder import (
        LadderTarget,
        RunRecord,
        TransienceSummary,
        ladder_epsilon,
        ladder_update_rule,
        last_half_slope,
    )
    from .samplers import adap_rsg_run, derive_seed, rsg_run

    target = LadderTarget()
    alpha0 = SelectionWeights((0.5, 0.5), ladder_epsilon())
    control_alpha = SelectionWeights((0.5, 0.5), 0.5)

    def rule(n, alpha_prev, x_prev, scratch):
        return ladder_update_rule(x_prev, n)

    def one(job):
        arm, run = job
        if arm == "adaptive":
            run_seed = derive_seed(seed, run)
            traj = adap_rsg_run(target, rule, (1, 1), alpha0, n_steps, run_seed)
        else:
            run_seed = derive_seed(seed, n_runs + run)
            traj = rsg_run(target, control_alpha, (1, 1), n_steps, run_seed)
        heights = traj.coordinate_trace(0)
        record = RunRecord(run_seed, int(heights[-1]), last_half_slope(heights))
        return (arm, run, record, heights if hook is not None else None)

    jobs = [("adaptive", r) for r in range(n_runs)] + [("control", r) for r in range(n_runs)]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(one, jobs))
    adaptive = [None] * n_runs
    control = [None] * n_runs
    for arm, run, record, heights in outcomes:
        (adaptive if arm == "adaptive" else control)[run] = record
        if hook is not None:
            hook(arm, run, heights)
    return TransienceSummary(tuple(adaptive), tuple(control), n_steps, seed)


# ---------------------------------------------------------------------------
# truncated ladder


def truncated_ladder_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Exact chain-law convergence of the truncated adaptive ladder."""
    p = config.params
    if p["schedule"] == "linear":
        a_of_n = linear_schedule(p["schedule_offset"], p["schedule_slope"])
    else:
        a_of_n = Schedule().a
    evolution = truncated_ladder_evolution(
        p["truncation"], a_of_n, tv_target=p["tv_target"], max_steps=p["max_steps"]
    )
    tv = evolution.tv
    monotone = True
    if evolution.reached:
        tail_start = int(len(tv) * (1.0 - p["tail_fraction"]))
        tail = tv[tail_start:]
        monotone = bool(np.all(np.diff(tail) <= 1e-12))
    rows = [[n, float(v)] for n, v in enumerate(tv)]
    result = ExperimentResult(
        kind=config.kind,
        summary={
            "horizon": evolution.horizon,
            "reached": evolution.reached,
            "tv_target": p["tv_target"],
            "final_tv": float(tv[-1]),
            "schedule": p["schedule"],
        },
        tables={"tv_trace": (["step", "tv"], rows)},
    )
    _record_check(
        result,
        "tv_target_reached",
        evolution.reached,
        f"horizon {evolution.horizon} within cap {p['max_steps']} (final TV {tv[-1]:.3e})",
    )
    _record_check(
        result,
        "tv_tail_monotone",
        monotone,
        f"TV nonincreasing over the final {p['tail_fraction']:.0%} of the horizon",
    )
    return result


# ---------------------------------------------------------------------------
# geometric gap


def geometric_gap_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Proposal-TV versus kernel-TV gaps for the geometric-target example."""
    p = config.params
    rows = []
    by_p = {}
    for pv in p["p_values"]:
        gaps = []
        for n in range(p["n_min"], p["n_max"] + 1):
            g = geometric_counterexample_gap(pv, n)
            gaps.append(g)
            rows.append([pv, n, g.proposal_gap, g.kernel_gap, g.k_max])
        by_p[pv] = gaps
    result = ExperimentResult(
        kind=config.kind,
        summary={},
        tables={"gaps": (["p", "n", "proposal_gap", "kernel_gap", "k_max"], rows)},
    )

    check_p = p["check_p"]
    proposal_point = geometric_counterexample_gap(check_p, p["proposal_n"]).proposal_gap
    _record_check(
        result,
        "proposal_gap_vanishes",
        proposal_point < p["proposal_tolerance"],
        f"proposal gap {proposal_point:.3e} at n={p['proposal_n']}, p={check_p}",
    )
    kernel_point = geometric_counterexample_gap(check_p, p["kernel_n"]).kernel_gap
    lo, hi = p["kernel_band"]
    _record_check(
        result,
        "kernel_gap_persists",
        lo <= kernel_point <= hi,
        f"kernel gap {kernel_point:.6f} at n={p['kernel_n']} vs band [{lo}, {hi}]",
    )
    trend_ok = True
    for pv, gaps in by_p.items():
        series = [g.kernel_gap for g in gaps]
        diffs = np.diff(series)
        limit = 1.0 - pv
        if np.any(diffs < -1e-12) or abs(series[-1] - limit) > 1e-5:
            trend_ok = False
    _record_check(
        result,
        "kernel_gap_trend",
        trend_ok,
        f"kernel gaps nondecreasing toward 1-p for p in {tuple(by_p)}",
    )
    result.summary = {
        "proposal_gap": proposal_point,
        "kernel_gap": kernel_point,
    }
    return result


# ---------------------------------------------------------------------------
# optimal scan (acceptance-targeting adaptation on a scaled product target)


def optimal_scan_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run the acceptance-targeting doubly adaptive sampler and verify that
    the weights land on the square-root rule and that it pays off in
    asymptotic variance."""
    from .samplers import adap_rs_adap_mwg_run

    p = config.params
    scales = p["scales"]
    a = p["a"]
    d = len(scales)
    if len(a) != d:
        raise ConfigError("params.a: must match the length of params.scales")
    epsilon = p["epsilon"]
    target = ContinuousProductTarget(scales, raised_cosine, (-1.0, 1.0), a=a)
    proposals = gaussian_random_walk_family()
    adaptation = ComponentwiseAdaptation("rr", a, epsilon)
    n_steps = p["n_batches"] * adaptation.state.batch_size
    x0 = (0.0,) * d
    alpha0 = SelectionWeights((1.0 / d,) * d, epsilon)
    gamma0 = tuple(float(v) for v in adaptation.state.proposal_variances)

    trajectory = adap_rs_adap_mwg_run(
        target.conditional_density,
        proposals,
        adaptation.weight_rule,
        adaptation.proposal_rule,
        x0,
        alpha0,
        gamma0,
        n_steps,
        config.seed,
        observer=adaptation.observer,
    )

    ideal = make_selection_weights([1.0 / c for c in scales], epsilon)
    window = adaptation.batch_log[-p["window_batches"]:]
    weight_gap = max(
        max(abs(w - t) for w, t in zip(entry["weights"], ideal.weights))
        for entry in window
    )
    rows = [
        [entry["batch"], *entry["weights"], *entry["variances"], *entry["acceptance"]]
        for entry in adaptation.batch_log
    ]
    header = (
        ["batch"]
        + [f"alpha_{k}" for k in range(1, d + 1)]
        + [f"variance_{k}" for k in range(1, d + 1)]
        + [f"acceptance_{k}" for k in range(1, d + 1)]
    )

    window_fractions = _window_acceptance(adaptation, p["window_batches"])
    lo, hi = p["acceptance_band"]
    acceptance_ok = all(lo <= frac <= hi for frac in window_fractions)

    # Variance arms: freeze the adapted proposal scales, compare the adapted
    # weights against the uniform scan on the same kernels.
    final_weights = adaptation.state.weights
    final_gamma = tuple(float(v) for v in adaptation.state.proposal_variances)
    uniform_alpha = SelectionWeights((1.0 / d,) * d, epsilon)
    x_eval = trajectory.states[-1]
    ratio, arm_stats = _variance_ratio(
        target,
        proposals,
        final_gamma,
        final_weights,
        uniform_alpha,
        x_eval,
        p["eval_steps"],
        p["eval_burn_in"],
        config.seed,
    )
    inv = [1.0 / c for c in scales]
    theory_ratio = (math.fsum(inv)) ** 2 / (d * math.fsum(v * v for v in inv))
    ratio_limit = p["variance_ratio_slack"] * theory_ratio

    result = ExperimentResult(
        kind=config.kind,
        summary={
            "weight_gap": weight_gap,
            "ideal_weights": list(ideal.weights),
            "final_weights": list(final_weights.weights),
            "window_acceptance": list(window_fractions),
            "variance_ratio": ratio,
            "theory_ratio": theory_ratio,
            "ratio_limit": ratio_limit,
            **arm_stats,
        },
        tables={"batches": (header, rows)},
    )
    _record_check(
        result,
        "weights_near_ideal",
        weight_gap < p["weight_tolerance"],
        f"sup weight gap {weight_gap:.4f} over last {len(window)} batches "
        f"vs {p['weight_tolerance']}",
    )
    _record_check(
        result,
        "acceptance_targeted",
        acceptance_ok,
        f"window acceptance fractions {['%.3f' % f for f in window_fractions]} within [{lo}, {hi}]",
    )
    _record_check(
        result,
        "variance_ratio",
        ratio <= ratio_limit,
        f"asymptotic variance ratio {ratio:.4f} vs limit {ratio_limit:.4f} "
        f"(theory {theory_ratio:.4f})",
    )
    return result


def _window_acceptance(adaptation: ComponentwiseAdaptation, window_batches: int):
    window = adaptation.batch_log[-window_batches:]
    d = adaptation.state.d
    fractions = []
    for i in range(d):
        accepts = sum(e["accepts"][i] for e in window)
        proposals = sum(e["proposals"][i] for e in window)
        fractions.append(accepts / proposals if proposals else math.nan)
    return fractions


def _variance_ratio(
    target,
    proposals,
    gamma,
    adapted_alpha,
    uniform_alpha,
    x0,
    eval_steps,
    burn_in,
    seed,
):
    stats = {}
    sigmas = {}
    for label, alpha, arm_seed in (
        ("adaptive", adapted_alpha, seed ^ 0x5CA1AB1E),
        ("uniform", uniform_alpha, seed ^ 0x0DDBA11),
    ):
        rule = _constant_rule(alpha)
        traj = adap_rsmwg_run(
            target.conditional_density,
            proposals,
            gamma,
            rule,
            x0,
            alpha,
            eval_steps,
            arm_seed,
        )
        trace = target.observable_trace(traj.states[burn_in:])
        tau = iact_estimate(trace)
        var = float(np.var(trace))
        sigmas[label] = tau * var
        stats[f"tau_{label}"] = tau
        stats[f"var_{label}"] = var
    return sigmas["adaptive"] / sigmas["uniform"], stats


def _constant_rule(alpha: SelectionWeights):
    def rule(n, alpha_prev, x_prev, scratch):
        return alpha

    return rule


EXPERIMENT_FUNCTIONS = {
    "lazy-variance": lazy_variance_experiment,
    "bounds": bounds_experiment,
    "counterexample": counterexample_experiment,
    "truncated-ladder": truncated_ladder_experiment,
    "geometric-gap": geometric_gap_experiment,
    "optimal-scan": optimal_scan_experiment,
}


# ---------------------------------------------------------------------------
# filesystem side


def _write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def emit_plot_data(trace_file, columns, out_path):
    """Extract two named columns from a CSV into a two-column plot file."""
    if len(columns) != 2:
        raise ValueError(f"need exactly two columns, got {columns!r}")
    with open(trace_file, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"trace file {trace_file} is empty")
        try:
            idx = [header.index(c) for c in columns]
        except ValueError as exc:
            raise ValueError(
                f"trace file {trace_file} lacks a requested column: {exc}"
            ) from exc
        rows = [[row[idx[0]], row[idx[1]]] for row in reader]
    if not rows:
        raise ValueError(f"trace file {trace_file} holds no data rows")
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(columns))
        writer.writerows(rows)
    return out_path


def run_experiment(
    config: ExperimentConfig, out_dir: Optional[str] = None, check: bool = False
):
    """Execute one experiment and persist tables, summary and manifest.

    Returns ``(manifest, result)``; when ``check`` is set the caller maps
    ``result.passed`` onto the exit status.
    """
    digest = config.digest()
    out = out_dir or config.out or os.path.join("runs", f"{config.kind}-{digest[:8]}")
    os.makedirs(out, exist_ok=True)
    outputs = []

    if config.kind == "counterexample":
        trace_paths = {}

        def trace_sink(arm, run, heights, stride):
            path = os.path.join(out, f"trace_{arm}_{run:02d}.csv")
            _write_table(
                path,
                ["step", "x_1"],
                [[k * stride, float(h)] for k, h in enumerate(heights)],
            )
            trace_paths[(arm, run)] = path
            outputs.append(os.path.basename(path))

        result = counterexample_experiment(config, trace_sink=trace_sink)
        if ("adaptive", 0) in trace_paths:
            plot_path = os.path.join(out, "plot_adaptive_run0.csv")
            emit_plot_data(trace_paths[("adaptive", 0)], ("step", "x_1"), plot_path)
            outputs.append(os.path.basename(plot_path))
    else:
        result = EXPERIMENT_FUNCTIONS[config.kind](config)

    for name, (header, rows) in result.tables.items():
        path = os.path.join(out, f"{name}.csv")
        _write_table(path, header, rows)
        outputs.append(os.path.basename(path))

    summary_path = os.path.join(out, "summary.json")
    with open(summary_path, "w") as fh:
        json.dump(
            {"summary": result.summary, "checks": result.checks, "passed": result.passed},
            fh,
            indent=2,
            sort_keys=True,
            default=_json_default,
        )
        fh.write("\n")
    outputs.append(os.path.basename(summary_path))

    manifest = RunManifest(
        digest=digest,
        kind=config.kind,
        seed=config.seed,
        version=__version__,
        created_utc=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        config=json.loads(config.canonical_json()),
        outputs=tuple(sorted(outputs)),
    )
    manifest.write(os.path.join(out, "manifest.json"))
    return manifest, result


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)
