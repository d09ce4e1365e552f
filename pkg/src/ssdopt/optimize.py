"""Stochastic descent loops, step schedules, and rate diagnostics.

The steepest-descent loop draws an independent scenario each iteration,
computes the unit direction minimizing the sampled derivative over the unit
ball, and steps u <- u + t_n v_n. The gradient loop (Hilbert case p = 2)
steps along the unnormalized negative Riesz representative instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import duality
from .fem import LinearSolveError, NewtonError, NodalFunction


@dataclass(frozen=True)
class StepSchedule:
    """Power-law steps t_n = t0 * n^(-gamma); the default n^(-1) satisfies
    the divergence condition sum t_j / (sum_{n<=j} t_n) = infinity."""

    t0: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.t0 <= 0:
            raise ValueError("t0 must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")

    def __call__(self, n: int) -> float:
        return self.t0 * float(n) ** (-self.gamma)


@dataclass
class DescentHistory:
    """Per-iteration record of the run: step sizes, sampled dual norms,
    cumulative step sums, running minima, and optional energy estimates."""

    n: list = field(default_factory=list)
    t: list = field(default_factory=list)
    dual_norm: list = field(default_factory=list)
    cum_t: list = field(default_factory=list)
    running_min: list = field(default_factory=list)
    energy: list = field(default_factory=list)  # None where not logged
    seeds: list = field(default_factory=list)
    max_iterate_norm: float = 0.0

    def record(self, n, t, dual_norm, seed, energy=None, iterate_norm=0.0):
        self.n.append(int(n))
        self.t.append(float(t))
        self.dual_norm.append(float(dual_norm))
        self.cum_t.append((self.cum_t[-1] if self.cum_t else 0.0) + float(t))
        prev = self.running_min[-1] if self.running_min else np.inf
        self.running_min.append(min(prev, float(dual_norm)))
        self.energy.append(energy if energy is None else float(energy))
        self.seeds.append(int(seed))
        self.max_iterate_norm = max(self.max_iterate_norm, float(iterate_norm))

    def __len__(self):
        return len(self.n)

    def rate_product(self) -> np.ndarray:
        """min_{n<=j} dual_norm * sum_{n<=j} t_n, the bounded witness of the
        convergence rate."""
        return np.asarray(self.running_min) * np.asarray(self.cum_t)


class DescentAborted(RuntimeError):
    """A solver failure stopped the run; the partial history is preserved."""

    def __init__(self, cause, history, iterate):
        super().__init__(f"descent aborted at iteration {len(history) + 1}: {cause}")
        self.cause = cause
        self.history = history
        self.iterate = iterate


def _iteration_seeds(seed, iterations):
    master = np.random.default_rng(seed)
    scenario = master.integers(0, 2**63 - 1, size=iterations, dtype=np.int64)
    energy = master.integers(0, 2**63 - 1, size=iterations, dtype=np.int64)
    return scenario, energy


def ssd_run(
    problem,
    u0: NodalFunction,
    schedule,
    iterations: int,
    seed: int,
    *,
    energy_every: int = 0,
    energy_samples: int = 20,
    dual_norm_samples: int = 1,
    scale_step_by_dual_norm: bool = False,
    callback=None,
):
    """Run the stochastic steepest descent loop.

    Each iteration draws a fresh scenario (seeded from `seed`, recorded in
    the history), evaluates the sampled derivative at the current iterate,
    and steps along the unit steepest-descent direction. A zero dual norm
    leaves the iterate unchanged but still consumes its step.

    energy_every > 0 logs a Monte-Carlo energy estimate of the post-step
    iterate every that many iterations (problems without an energy notion
    are left unlogged). dual_norm_samples > 1 records an average of the
    dual norm over extra independent draws instead of the single-sample
    value; the step itself always follows the first draw.
    scale_step_by_dual_norm multiplies each step by the sampled dual norm,
    which at p = 2 reproduces the gradient method with the base schedule.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    scenario_seeds, energy_seeds = _iteration_seeds(seed, iterations)
    u = u0.copy()
    history = DescentHistory()
    for i in range(iterations):
        n = i + 1
        t = schedule(n)
        try:
            s = problem.sample(int(scenario_seeds[i]))
            F = problem.derivative(u, s)
            v, dual_norm = problem.direction(F)
            if callback is not None:
                callback(n, u, s, v, dual_norm)
            recorded = dual_norm
            if dual_norm_samples > 1:
                extra_rng = np.random.default_rng([int(scenario_seeds[i]), 1])
                extras = [dual_norm]
                for _ in range(dual_norm_samples - 1):
                    s_extra = problem.sample(extra_rng)
                    _, dn_extra = problem.direction(problem.derivative(u, s_extra))
                    extras.append(dn_extra)
                recorded = float(np.mean(extras))
            step = t * dual_norm if scale_step_by_dual_norm else t
            if dual_norm > 0.0:
                u = u + step * v
            energy = None
            if energy_every > 0 and n % energy_every == 0 and hasattr(problem, "mc_energy"):
                energy_rng = np.random.default_rng([int(energy_seeds[i]), 1])
                energy = problem.mc_energy(u, energy_samples, energy_rng)
        except (NewtonError, LinearSolveError) as exc:
            raise DescentAborted(exc, history, u) from exc
        history.record(n, t, recorded, scenario_seeds[i], energy, problem.norm(u))
    return u, history


def sgd_run(
    problem,
    u0: NodalFunction,
    schedule,
    iterations: int,
    seed: int,
    *,
    energy_every: int = 0,
    energy_samples: int = 20,
    callback=None,
):
    """Stochastic gradient loop for the Hilbert case.

    Steps along the unnormalized negative Riesz representative of the
    sampled derivative; the recorded dual norm is its H-norm. Refuses
    problems with p != 2.
    """
    if problem.space.p != 2.0:
        raise ValueError("the gradient method requires the Hilbert exponent p = 2")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    settings = problem.config.settings
    scenario_seeds, energy_seeds = _iteration_seeds(seed, iterations)
    u = u0.copy()
    history = DescentHistory()
    for i in range(iterations):
        n = i + 1
        t = schedule(n)
        try:
            s = problem.sample(int(scenario_seeds[i]))
            F = problem.derivative(u, s)
            v, h_norm = duality.riesz_representative(F, settings)
            if callback is not None:
                callback(n, u, s, v, h_norm)
            if h_norm > 0.0:
                u = u + t * v
            energy = None
            if energy_every > 0 and n % energy_every == 0 and hasattr(problem, "mc_energy"):
                energy_rng = np.random.default_rng([int(energy_seeds[i]), 1])
                energy = problem.mc_energy(u, energy_samples, energy_rng)
        except (NewtonError, LinearSolveError) as exc:
            raise DescentAborted(exc, history, u) from exc
        history.record(n, t, h_norm, scenario_seeds[i], energy, problem.norm(u))
    return u, history


def rate_diagnostic(history: DescentHistory):
    """Sequences witnessing the convergence rate: iteration indices, the
    product min dual norm * cumulative steps, and the reference curve
    (sum t_n)^(-1)."""
    if len(history) == 0:
        raise ValueError("history is empty")
    j = np.asarray(history.n)
    cum = np.asarray(history.cum_t)
    return j, history.rate_product(), 1.0 / cum


@dataclass
class ScheduleReport:
    """Partial sums of t_j / sum_{n<=j} t_n and a divergence verdict."""

    terms: np.ndarray
    partial_sums: np.ndarray
    diverges: bool
    tail_increment: float


def check_schedule(step_fn, horizon: int, tail_threshold: float = 1e-3) -> ScheduleReport:
    """Numerically probe the step-size divergence condition up to `horizon`.

    The heuristic flags divergence when the partial sums still grow over the
    last half of the horizon (power-law schedules grow at least like
    log log j, geometric ones stall); it needs a moderately large horizon
    (>= ~50) to separate the two.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    t = np.array([float(step_fn(n)) for n in range(1, horizon + 1)])
    if np.any(t <= 0):
        raise ValueError("step sizes must be positive")
    cum = np.cumsum(t)
    terms = t / cum
    sums = np.cumsum(terms)
    half = max(horizon // 2, 1) - 1
    tail = float(sums[-1] - sums[half])
    return ScheduleReport(terms, sums, bool(tail > tail_threshold), tail)
