"""Surrogate-assisted constrained differential evolution.

Generational DE/rand/1/bin over cheap evaluations.  A pluggable surrogate
ranks each generation's offspring and only the most promising few are
actually evaluated (infill); survivor selection is one-to-one against the
parent under feasibility dominance.  The phase ends once enough variables
have collapsed to a small fraction of their range, handing the rest to
the local optimizer.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class EvalRecord:
    """One truly evaluated candidate."""

    x: np.ndarray
    objective: float
    slack: np.ndarray

    @property
    def feasible(self) -> bool:
        return bool(np.all(self.slack >= 0.0))

    @property
    def violation(self) -> float:
        return float(np.sum(np.maximum(0.0, -self.slack)))


@dataclass
class Problem:
    """Bounded minimization with signed constraint margins.

    ``objective`` and ``constraints`` may be given separately, or a fused
    ``evaluate`` returning (objective, slack) supplied to avoid duplicate
    work when both come from one simulation.
    """

    bounds: np.ndarray  # shape (d, 2)
    objective: Callable[[np.ndarray], float] | None = None
    constraints: Callable[[np.ndarray], np.ndarray] | None = None
    evaluate: Callable[[np.ndarray], tuple[float, np.ndarray]] | None = None

    def __post_init__(self) -> None:
        self.bounds = np.asarray(self.bounds, dtype=float)
        if self.bounds.ndim != 2 or self.bounds.shape[1] != 2:
            raise ConfigError("bounds must have shape (d, 2)")
        if np.any(self.bounds[:, 0] >= self.bounds[:, 1]):
            raise ConfigError("each bound must satisfy lo < hi")
        if self.evaluate is None and (self.objective is None or self.constraints is None):
            raise ConfigError("need either evaluate or objective+constraints")

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    def run(self, x: np.ndarray) -> EvalRecord:
        if self.evaluate is not None:
            obj, slack = self.evaluate(x)
        else:
            obj = self.objective(x)
            slack = self.constraints(x)
        # Copy: the caller may hand in a row view of a mutable population.
        return EvalRecord(
            x=np.array(x, dtype=float, copy=True),
            objective=float(obj),
            slack=np.atleast_1d(np.array(slack, dtype=float, copy=True)),
        )


class Surrogate(Protocol):
    """Minimal contract for offspring ranking models."""

    def train(self, x: np.ndarray, objective: np.ndarray, slack: np.ndarray) -> None: ...
    def predict(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...
    @property
    def trained(self) -> bool: ...


class IdwSurrogate:
    """Inverse-distance-weighted k-nearest regression in normalized space.

    Deliberately simple default; anything implementing the Surrogate
    protocol can be dropped in instead.
    """

    def __init__(self, bounds: np.ndarray, k: int = 5, min_points: int | None = None):
        self.bounds = np.asarray(bounds, dtype=float)
        self.span = self.bounds[:, 1] - self.bounds[:, 0]
        self.k = k
        self.min_points = min_points if min_points is not None else len(self.bounds) + 1
        self._x: np.ndarray | None = None
        self._obj: np.ndarray | None = None
        self._slack: np.ndarray | None = None

    @property
    def trained(self) -> bool:
        return self._x is not None and len(self._x) >= self.min_points

    def train(self, x: np.ndarray, objective: np.ndarray, slack: np.ndarray) -> None:
        self._x = np.asarray(x, dtype=float)
        self._obj = np.asarray(objective, dtype=float)
        self._slack = np.asarray(slack, dtype=float)

    def predict(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if not self.trained:
            raise ConfigError("surrogate queried before training")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xn = (x - self.bounds[:, 0]) / self.span
        an = (self._x - self.bounds[:, 0]) / self.span
        obj = np.empty(len(x))
        slack = np.empty((len(x), self._slack.shape[1]))
        k = min(self.k, len(an))
        for row, point in enumerate(xn):
            dist = np.linalg.norm(an - point, axis=1)
            nearest = np.argsort(dist, kind="stable")[:k]
            w = 1.0 / (dist[nearest] + 1e-12)
            w = w / w.sum()
            obj[row] = w @ self._obj[nearest]
            slack[row] = w @ self._slack[nearest]
        return obj, slack


@dataclass(frozen=True)
class GlobalParams:
    """DE hyperparameters; defaults are standard robust settings."""

    pop_size: int | None = None          # default 10*d
    f_weight: float = 0.5
    cr: float = 0.9
    k_infill: int | None = None          # default max(2, pop_size // 5)
    theta_conv: float = 0.02
    n_conv_target: int | None = None     # default ceil(0.7*d)
    max_evals: int = 5000
    seed: int = 0
    workers: int | None = None

    def resolved(self, dim: int) -> "GlobalParams":
        pop = self.pop_size if self.pop_size is not None else 10 * dim
        infill = self.k_infill if self.k_infill is not None else max(2, pop // 5)
        target = (
            self.n_conv_target
            if self.n_conv_target is not None
            else int(np.ceil(0.7 * dim))
        )
        return GlobalParams(
            pop_size=pop,
            f_weight=self.f_weight,
            cr=self.cr,
            k_infill=infill,
            theta_conv=self.theta_conv,
            n_conv_target=target,
            max_evals=self.max_evals,
            seed=self.seed,
            workers=self.workers,
        )


@dataclass
class OptimizerState:
    """Result and final state of the global phase."""

    population: list[EvalRecord]
    archive: list[EvalRecord]
    best: EvalRecord | None
    best_x: np.ndarray
    mask: np.ndarray          # True where a variable has converged
    generation: int
    evals: int
    warning: str | None = None
    history: list[dict] = field(default_factory=list)


def init_population(bounds: np.ndarray, pop_size: int, seed: int) -> np.ndarray:
    """Latin-hypercube sample: one point per stratum along every axis."""
    if pop_size < 5:
        raise ConfigError(f"population size must be >= 5, got {pop_size}")
    bounds = np.asarray(bounds, dtype=float)
    rng = np.random.default_rng(seed)
    d = bounds.shape[0]
    u = (rng.random((pop_size, d)) + np.arange(pop_size)[:, None]) / pop_size
    for j in range(d):
        u[:, j] = u[rng.permutation(pop_size), j]
    return bounds[:, 0] + u * (bounds[:, 1] - bounds[:, 0])


def de_offspring(
    population: np.ndarray,
    f_weight: float,
    cr: float,
    rng: np.random.Generator,
    bounds: np.ndarray,
) -> np.ndarray:
    """DE/rand/1/bin offspring, one per parent, clipped to bounds."""
    pop = np.asarray(population, dtype=float)
    p, d = pop.shape
    if p < 4:
        raise ConfigError(f"differential evolution needs >= 4 members, got {p}")
    out = np.empty_like(pop)
    for i in range(p):
        choices = np.delete(np.arange(p), i)
        a, b, c = rng.choice(choices, size=3, replace=False)
        v = pop[a] + f_weight * (pop[b] - pop[c])
        j_rand = rng.integers(d)
        cross = rng.random(d) < cr
        cross[j_rand] = True
        out[i] = np.where(cross, v, pop[i])
    return np.clip(out, bounds[:, 0], bounds[:, 1])


def surrogate_rank(
    surrogate: Surrogate | None,
    candidates: np.ndarray,
    k_infill: int,
) -> np.ndarray:
    """Indices of candidates to truly evaluate, best predicted first.

    Untrained (or absent) surrogate passes every candidate through in
    order.  Otherwise candidates sort by predicted total violation, then
    predicted objective.
    """
    n = len(candidates)
    if surrogate is None or not surrogate.trained:
        return np.arange(n)
    obj, slack = surrogate.predict(candidates)
    violation = np.sum(np.maximum(0.0, -slack), axis=1)
    order = np.lexsort((obj, violation))
    return order[:k_infill]


def feasibility_better(a: EvalRecord, b: EvalRecord) -> bool:
    """Deb's rules: is a strictly better than b?"""
    if a.feasible and not b.feasible:
        return True
    if not a.feasible and b.feasible:
        return False
    if a.feasible:
        return a.objective < b.objective
    return a.violation < b.violation


def detect_convergence(
    population: np.ndarray,
    bounds: np.ndarray,
    theta_conv: float,
) -> np.ndarray:
    """Per-variable flag: population spread below theta_conv of the range."""
    pop = np.asarray(population, dtype=float)
    span = bounds[:, 1] - bounds[:, 0]
    return pop.std(axis=0) / span < theta_conv


def _evaluate_many(
    problem: Problem, xs: list[np.ndarray], pool: ProcessPoolExecutor | None
) -> list[EvalRecord]:
    if pool is not None and len(xs) > 1:
        return list(pool.map(problem.run, xs))
    return [problem.run(x) for x in xs]


def run_global(problem: Problem, params: GlobalParams) -> OptimizerState:
    """Full global phase; deterministic in the seed, worker-count invariant."""
    params = params.resolved(problem.dim)
    pool = (
        ProcessPoolExecutor(max_workers=params.workers)
        if params.workers and params.workers > 1
        else None
    )
    try:
        return _run_global(problem, params, pool)
    finally:
        if pool is not None:
            pool.shutdown()


def _run_global(
    problem: Problem, params: GlobalParams, pool: ProcessPoolExecutor | None
) -> OptimizerState:
    rng = np.random.default_rng(params.seed)
    bounds = problem.bounds

    pop_x = init_population(bounds, params.pop_size, params.seed)
    budget = params.max_evals
    state = OptimizerState(
        population=[],
        archive=[],
        best=None,
        best_x=pop_x[0].copy(),
        mask=detect_convergence(pop_x, bounds, params.theta_conv),
        generation=0,
        evals=0,
    )
    if budget <= 0:
        state.warning = "evaluation budget exhausted before any evaluation"
        return state

    n_init = min(params.pop_size, budget)
    records = _evaluate_many(problem, [pop_x[i] for i in range(n_init)], pool)
    state.population = records
    state.archive.extend(records)
    state.evals = n_init
    pop_x = pop_x[:n_init]
    for rec in records:
        if state.best is None or feasibility_better(rec, state.best):
            state.best = rec
    state.best_x = state.best.x.copy()

    surrogate = IdwSurrogate(bounds)

    def log_generation() -> None:
        state.history.append(
            {
                "generation": state.generation,
                "evals": state.evals,
                "best_objective": state.best.objective,
                "best_violation": state.best.violation,
                "n_converged": int(state.mask.sum()),
            }
        )

    state.mask = detect_convergence(pop_x, bounds, params.theta_conv)
    log_generation()

    while int(state.mask.sum()) < params.n_conv_target and state.evals < params.max_evals:
        arch_x = np.array([r.x for r in state.archive])
        arch_obj = np.array([r.objective for r in state.archive])
        arch_slack = np.array([r.slack for r in state.archive])
        surrogate.train(arch_x, arch_obj, arch_slack)

        offspring = de_offspring(pop_x, params.f_weight, params.cr, rng, bounds)
        chosen = surrogate_rank(surrogate, offspring, params.k_infill)
        chosen = chosen[: params.max_evals - state.evals]

        records = _evaluate_many(problem, [offspring[i] for i in chosen], pool)
        state.evals += len(records)
        for idx, rec in zip(chosen, records):
            state.archive.append(rec)
            if feasibility_better(rec, state.population[idx]):
                state.population[idx] = rec
                pop_x[idx] = rec.x
            if feasibility_better(rec, state.best):
                state.best = rec
                state.best_x = rec.x.copy()

        state.generation += 1
        state.mask = detect_convergence(pop_x, bounds, params.theta_conv)
        log_generation()

    if state.best is not None and not state.best.feasible:
        state.warning = "no feasible point found; returning least-violating"
    return state


def write_history_csv(history: list[dict], path_or_buf) -> None:
    """Per-generation trace supporting convergence plots."""
    own = isinstance(path_or_buf, (str, bytes))
    buf = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["generation", "evals", "best_objective", "best_violation", "n_converged"]
        )
        for row in history:
            writer.writerow(
                [
                    row["generation"],
                    row["evals"],
                    row["best_objective"],
                    row["best_violation"],
                    row["n_converged"],
                ]
            )
    finally:
        if own:
            buf.close()
