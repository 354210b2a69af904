"""Blended Hooke-Jeeves pattern search with selective rollback.

Classic coordinate-probe pattern search over the unconverged variables,
with a twist: every few accepted moves the expensive evaluator is
consulted.  If a penalty built from expensive-side regression outweighs
the cheap objective, the search rolls back to the last expensive-verified
point, shrinks its steps, and shifts trust toward the expensive signal by
raising the blend weight.  Frozen coordinates are never touched.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError

SHRINK = 0.5
MAX_EXTRAPOLATIONS = 8


@dataclass(frozen=True)
class LocalParams:
    delta_init: float = 0.1        # initial step, fraction of each variable's range
    expensive_every: float = 5     # accepted moves between expensive checks; inf = never
    penalty_scale: float = 1.0     # multiplies expensive regression in the penalty
    delta_w: float = 0.1           # blend-weight increment after each rollback
    eps: float = 1e-3              # terminate when ||delta[free]|| drops below this
    w0: float = 0.5
    max_iter: int = 200
    blend_at: str = "candidate"    # cheap value used in the blend: candidate | backup

    def __post_init__(self) -> None:
        if self.expensive_every < 1:
            raise ConfigError("expensive_every must be >= 1")
        if self.penalty_scale <= 0 or self.eps <= 0:
            raise ConfigError("penalty_scale and eps must be positive")
        if not 0.0 < self.delta_w <= 1.0:
            raise ConfigError("delta_w must be in (0, 1]")
        if self.blend_at not in ("candidate", "backup"):
            raise ConfigError(f"unknown blend_at {self.blend_at!r}")


@dataclass
class LocalResult:
    x_best: np.ndarray
    f_cheap: float
    f_expensive: float | None
    iterations: int
    rollbacks: int
    n_cheap: int
    n_expensive: int
    history: list[dict] = field(default_factory=list)


def blend_decision(
    f_cheap_val: float,
    f_exp_val: float,
    f_backup: float,
    w: float,
    penalty_scale: float,
) -> tuple[float, bool]:
    """Blend the cheap objective with an expensive-regression penalty.

    penalty = penalty_scale * max(0, f_exp - f_backup); the blend is
    (1-w)*cheap + w*penalty, and a rollback triggers when the blend
    exceeds the cheap value alone (i.e. the penalty outweighs it).  A
    failed expensive evaluation arrives as +inf and always penalizes,
    even when the backup value itself is +inf; with w = 0 the expensive
    side carries no weight at all.
    """
    if math.isinf(f_exp_val) and f_exp_val > 0:
        penalty = math.inf
    else:
        penalty = penalty_scale * max(0.0, f_exp_val - f_backup)
    f_blend = (1.0 - w) * f_cheap_val + (w * penalty if w > 0.0 else 0.0)
    return f_blend, f_blend > f_cheap_val


def exploratory_search(
    x: np.ndarray,
    delta: np.ndarray,
    mask: np.ndarray,
    f_cheap: Callable[[np.ndarray], float],
    bounds: np.ndarray,
    f_at_x: float | None = None,
) -> tuple[np.ndarray, float] | None:
    """Coordinate probe around x, skipping frozen dims.

    Per free dim, try +delta then -delta (in range units), accepting
    greedily; probes clip to bounds.  Returns the improved point and its
    value, or None if no probe improved.
    """
    x = np.asarray(x, dtype=float)
    span = bounds[:, 1] - bounds[:, 0]
    current = x.copy()
    f_cur = f_cheap(current) if f_at_x is None else f_at_x
    improved = False
    for j in range(len(x)):
        if mask[j]:
            continue
        step = delta[j] * span[j]
        for direction in (1.0, -1.0):
            cand = current.copy()
            cand[j] = min(max(current[j] + direction * step, bounds[j, 0]), bounds[j, 1])
            if cand[j] == current[j]:
                continue
            f_cand = f_cheap(cand)
            if f_cand < f_cur:
                current, f_cur = cand, f_cand
                improved = True
                break
    return (current, f_cur) if improved else None


def run_local(
    x0: np.ndarray,
    mask: np.ndarray,
    f_cheap: Callable[[np.ndarray], float],
    f_expensive: Callable[[np.ndarray], float] | None,
    params: LocalParams,
    bounds: np.ndarray,
) -> LocalResult:
    """Refine the free coordinates of x0; frozen ones pass through untouched.

    The cheap objective should be normalized nonnegative, otherwise the
    rollback test degenerates.  An expensive evaluator that raises or
    returns a non-finite value counts as +inf, which forces the rollback
    path rather than aborting the run.
    """
    x0 = np.asarray(x0, dtype=float)
    bounds = np.asarray(bounds, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    free = ~mask
    d = len(x0)
    if bounds.shape != (d, 2):
        raise ConfigError("bounds shape must match x0")

    counts = {"cheap": 0, "expensive": 0}

    def cheap(x: np.ndarray) -> float:
        counts["cheap"] += 1
        return float(f_cheap(x))

    def expensive(x: np.ndarray) -> float:
        counts["expensive"] += 1
        try:
            val = float(f_expensive(x))
        except Exception:
            return math.inf
        return val if math.isfinite(val) else math.inf

    delta = np.where(free, params.delta_init, 0.0)
    x_best = x0.copy()
    x_backup = x0.copy()
    w = params.w0
    c = 0
    rollbacks = 0
    history: list[dict] = []

    f_cheap_best = cheap(x_best)
    f_cheap_backup = f_cheap_best
    f_exp_best: float | None = None
    last_exp: tuple[np.ndarray, float] | None = None
    f_backup = 0.0
    if f_expensive is not None:
        f_exp_best = expensive(x_best)
        f_backup = f_exp_best
        last_exp = (x_best.copy(), f_exp_best)

    lam = params.expensive_every
    iteration = 0
    for iteration in range(1, params.max_iter + 1):
        sampled_exp: float | None = None
        rolled = False
        found = exploratory_search(
            x_best, delta, mask, cheap, bounds, f_at_x=f_cheap_best
        )
        if found is not None:
            x_new, f_new = found
            # Pattern move: keep extrapolating along the accepted direction
            # while it improves, doubling the stride, capped.
            step = x_new - x_best
            x_curr, f_curr = x_new, f_new
            for _ in range(MAX_EXTRAPOLATIONS):
                x_try = np.clip(x_curr + step, bounds[:, 0], bounds[:, 1])
                if np.array_equal(x_try, x_curr):
                    break
                f_try = cheap(x_try)
                if f_try < f_curr:
                    x_curr, f_curr = x_try, f_try
                    step = step * 2.0
                else:
                    break
            x_best, f_cheap_best = x_curr, f_curr
            c += 1
            if f_expensive is not None and math.isfinite(lam) and c % int(lam) == 0:
                f_exp = expensive(x_best)
                sampled_exp = f_exp
                cheap_ref = (
                    f_cheap_best if params.blend_at == "candidate" else f_cheap_backup
                )
                _, rollback = blend_decision(
                    cheap_ref, f_exp, f_backup, w, params.penalty_scale
                )
                if rollback:
                    x_best = x_backup.copy()
                    f_cheap_best = f_cheap_backup
                    delta[free] *= SHRINK
                    w = min(w + params.delta_w, 1.0)
                    rollbacks += 1
                    rolled = True
                else:
                    x_backup = x_best.copy()
                    f_backup = f_exp
                    f_cheap_backup = f_cheap_best
                    last_exp = (x_best.copy(), f_exp)
        else:
            delta[free] *= SHRINK

        norm = float(np.linalg.norm(delta[free])) if free.any() else 0.0
        history.append(
            {
                "iteration": iteration,
                "f_cheap": f_cheap_best,
                "f_expensive": sampled_exp,
                "w": w,
                "delta_norm": norm,
                "rollback": rolled,
            }
        )
        if norm < params.eps:
            break

    if f_expensive is not None:
        if last_exp is not None and np.array_equal(last_exp[0], x_best):
            f_exp_best = last_exp[1]
        else:
            f_exp_best = expensive(x_best)

    return LocalResult(
        x_best=x_best,
        f_cheap=f_cheap_best,
        f_expensive=f_exp_best,
        iterations=iteration,
        rollbacks=rollbacks,
        n_cheap=counts["cheap"],
        n_expensive=counts["expensive"],
        history=history,
    )


def write_history_csv(history: list[dict], path_or_buf) -> None:
    """Per-iteration trace of the local phase."""
    own = isinstance(path_or_buf, (str, bytes))
    buf = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["iteration", "f_cheap", "f_expensive", "w", "delta_norm", "rollback"]
        )
        for row in history:
            writer.writerow(
                [
                    row["iteration"],
                    row["f_cheap"],
                    "" if row["f_expensive"] is None else row["f_expensive"],
                    row["w"],
                    row["delta_norm"],
                    int(row["rollback"]),
                ]
            )
    finally:
        if own:
            buf.close()
