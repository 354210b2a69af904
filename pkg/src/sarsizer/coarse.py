"""Cheap single-point measurements and constraint aggregation.

Three measurements, each deterministic and independent per candidate:
a noise-free full-scale conversion (sampling error, step ratios, timing),
a closed-form thermal-noise total, and an average-power estimate over a
fixed input grid.  Slacks are signed margins, positive when satisfied,
so optimizers always get a continuous feasibility signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .adc import AdcModel, convert, conversion_energy, sample_input
from .errors import SpecError
from .specs import DerivedSpecs

# Substitute for step ratios that cannot be formed (dead or zero steps);
# large enough to dominate any bound, finite so violation sums stay usable.
SSRE_INVALID = 1e9

POWER_GRID_POINTS = 8


@dataclass
class CoarseReport:
    """Single-candidate result of the cheap evaluation phase."""

    sampling_error: float      # V
    ssre: np.ndarray           # measured step-ratio errors, i = 1..N-1
    noise_rms: float           # V
    power: float               # W
    timing_ok: bool
    slack: np.ndarray          # signed margins: ssre..., sampling, noise, timing

    @property
    def feasible(self) -> bool:
        return bool(np.all(self.slack >= 0.0))

    @property
    def violation(self) -> float:
        return float(np.sum(np.maximum(0.0, -self.slack)))


def step_ratio_errors(steps: np.ndarray) -> np.ndarray:
    """|step_i / step_{i+1} - 2| for adjacent applied steps.

    Pairs involving a missing step (typically a timing-dead bit) get the
    finite SSRE_INVALID sentinel instead of inf/nan.
    """
    steps = np.asarray(steps, dtype=float)
    out = np.full(len(steps) - 1, SSRE_INVALID)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = steps[:-1] / steps[1:]
    valid = (steps[:-1] > 0) & (steps[1:] > 0)
    out[valid] = np.abs(ratio[valid] - 2.0)
    return out


def single_point_test(model: AdcModel) -> tuple[float, np.ndarray, bool]:
    """One noise-free conversion with the differential input at the supply.

    Every decision goes the same way, so all DAC steps are exercised in
    one direction.  Returns the sampling error, the step-ratio errors of
    adjacent applied steps, and the timing flag.
    """
    v_in = model.cfg.v_dd
    sampled = sample_input(model, v_in, v_prev=0.0, rng_key=None)
    sampling_error = abs(v_in - sampled)
    trace = convert(model, sampled, rng_key=None)
    return sampling_error, step_ratio_errors(trace.applied_step), trace.timing_ok


def thermal_noise_estimate(model: AdcModel) -> float:
    """Total rms noise: sampled kT/C plus comparator input-referred noise."""
    return math.sqrt(model.kt_c_sigma**2 + model.design.sigma_cmp**2)


def power_grid(model: AdcModel) -> np.ndarray:
    """Fixed differential inputs spanning full scale for the power average."""
    half = model.v_fs / 2.0
    return np.linspace(-half, half, POWER_GRID_POINTS)


def power_estimate(model: AdcModel) -> float:
    """Average supply power over the deterministic input grid."""
    energies = []
    for v_in in power_grid(model):
        sampled = sample_input(model, float(v_in), v_prev=0.0, rng_key=None)
        trace = convert(model, sampled, rng_key=None)
        energies.append(conversion_energy(trace, model))
    return float(np.mean(energies)) * model.cfg.f_s


def evaluate_coarse(model: AdcModel, specs: DerivedSpecs) -> CoarseReport:
    """All three measurements plus the signed constraint-margin vector.

    Slack layout matches specs.constraint_labels(): N-1 step-ratio margins,
    sampling, noise, then timing mapped to +1/-1.
    """
    if specs.n_bits != model.cfg.n_bits:
        raise SpecError(
            f"spec resolution {specs.n_bits} != model resolution {model.cfg.n_bits}"
        )
    sampling_error, ssre, timing_ok = single_point_test(model)
    noise_rms = thermal_noise_estimate(model)
    power = power_estimate(model)

    slack = np.concatenate(
        [
            specs.ssre_bound - ssre,
            [specs.sampling_bound - sampling_error],
            [specs.noise_bound - noise_rms],
            [1.0 if timing_ok else -1.0],
        ]
    )
    return CoarseReport(
        sampling_error=sampling_error,
        ssre=ssre,
        noise_rms=noise_rms,
        power=power,
        timing_ok=timing_ok,
        slack=slack,
    )
