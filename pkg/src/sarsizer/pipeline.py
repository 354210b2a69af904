"""Run configuration, the derive/global/freeze/local/verify pipeline, and
run persistence.

A run directory holds: run_record.json (fully reproducible from config +
seed, no timestamps), timings.json (wall clock, intentionally kept out of
the record), the evaluation/convergence CSV traces, the final capture and
spectrum CSVs, and the final design as a standalone JSON file.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import global_opt, local_opt
from .adc import DESIGN_FIELDS, AdcConfig, DesignPoint, build_model
from .coarse import CoarseReport, evaluate_coarse
from .errors import ConfigError
from .global_opt import GlobalParams, OptimizerState, Problem, run_global
from .local_opt import LocalParams, LocalResult, run_local
from .problem import CheapObjective, CoarseProblem, ExpensiveObjective, bounds_array
from .sndr import (
    SpectrumReport,
    enob_from_sndr,
    plan_test,
    run_segments,
    spectrum_metrics,
    write_capture_csv,
    write_spectrum_csv,
)
from .specs import DerivedSpecs

RECORD_NAME = "run_record.json"
SCHEMA_VERSION = 1


def default_bounds(cfg: AdcConfig) -> dict[str, tuple[float, float]]:
    """Sizing box used when a config gives no explicit bounds.

    Timing-related ranges scale with the conversion period so the box
    stays meaningful across sampling rates.
    """
    t_conv = cfg.t_conv
    return {
        "c_unit": (0.5e-15, 50e-15),
        "r_sw": (10.0, 20e3),
        "t_sample": (0.02 * t_conv, 0.4 * t_conv),
        "sigma_cmp": (5e-6, 5e-3),
        "t_d0": (1e-12, 0.02 * t_conv),
        "tau_reg": (0.5e-12, 0.01 * t_conv),
        "r_drv_msb": (50.0, 20e3),
        "t_dff": (1e-12, 0.02 * t_conv),
    }


@dataclass(frozen=True)
class HarnessConfig:
    k_points: int = 1024
    m_segments: int = 4
    f_target_frac: float = 0.097    # of f_s; planner snaps to a coherent bin
    amplitude_frac: float = 0.95    # of full-scale half-range
    noise: bool = True
    verify_scale: int = 4


@dataclass
class RunConfig:
    adc: AdcConfig
    alpha: float
    bounds: dict[str, tuple[float, float]]
    global_params: GlobalParams
    local_params: LocalParams
    harness: HarnessConfig
    seed: int
    out_dir: str | None = None
    workers: int | None = None
    defaults_applied: dict = field(default_factory=dict)

    def effective_dict(self) -> dict:
        return {
            "adc": {
                "n_bits": self.adc.n_bits,
                "f_s": self.adc.f_s,
                "v_dd": self.adc.v_dd,
                "temp_k": self.adc.temp_k,
                "kappa_cmp": self.adc.kappa_cmp,
                "kappa_sw": self.adc.kappa_sw,
                "e_dff": self.adc.e_dff,
                "r_drv_cap": self.adc.r_drv_cap,
                "v_floor": self.adc.v_floor,
            },
            "alpha": self.alpha,
            "bounds": {k: list(v) for k, v in self.bounds.items()},
            "global": {
                "pop_size": self.global_params.pop_size,
                "f_weight": self.global_params.f_weight,
                "cr": self.global_params.cr,
                "k_infill": self.global_params.k_infill,
                "theta_conv": self.global_params.theta_conv,
                "n_conv_target": self.global_params.n_conv_target,
                "max_evals": self.global_params.max_evals,
            },
            "local": {
                "delta_init": self.local_params.delta_init,
                "expensive_every": self.local_params.expensive_every,
                "penalty_scale": self.local_params.penalty_scale,
                "delta_w": self.local_params.delta_w,
                "eps": self.local_params.eps,
                "w0": self.local_params.w0,
                "max_iter": self.local_params.max_iter,
                "blend_at": self.local_params.blend_at,
            },
            "harness": {
                "k_points": self.harness.k_points,
                "m_segments": self.harness.m_segments,
                "f_target_frac": self.harness.f_target_frac,
                "amplitude_frac": self.harness.amplitude_frac,
                "noise": self.harness.noise,
                "verify_scale": self.harness.verify_scale,
            },
            "seed": self.seed,
            "defaults_applied": self.defaults_applied,
        }


_KNOWN_TOP_KEYS = {
    "N", "n_bits", "fs", "f_s", "V_DD", "v_dd", "T", "temp_k",
    "kappa_cmp", "kappa_sw", "e_dff", "r_drv_cap", "v_floor",
    "alpha", "bounds", "global", "local", "harness", "seed", "out",
    "workers",
}


def _pick(raw: dict, *names, default=None, applied=None, label=None):
    for name in names:
        if name in raw:
            return raw[name]
    if applied is not None:
        applied[label or names[-1]] = default
    return default


def load_config(path_or_text: str | Path, is_text: bool = False) -> RunConfig:
    """Parse and validate a YAML run configuration.

    Minimal configs need only resolution, sampling rate, and supply;
    everything else defaults, and each applied default is echoed into the
    run record.  Unknown top-level keys warn but do not fail.
    """
    if is_text:
        text = str(path_or_text)
        where = "<string>"
    else:
        text = Path(path_or_text).read_text()
        where = str(path_or_text)
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {where}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: top level must be a mapping")

    unknown = sorted(set(raw) - _KNOWN_TOP_KEYS)
    if unknown:
        warnings.warn(f"{where}: ignoring unknown keys {unknown}", stacklevel=2)

    applied: dict = {}
    n_bits = _pick(raw, "N", "n_bits", label="n_bits")
    f_s = _pick(raw, "fs", "f_s", label="f_s")
    v_dd = _pick(raw, "V_DD", "v_dd", label="v_dd")
    for name, value in (("n_bits", n_bits), ("f_s", f_s), ("v_dd", v_dd)):
        if value is None:
            raise ConfigError(f"{where}: missing required key {name}")

    adc = AdcConfig(
        n_bits=int(n_bits),
        f_s=float(f_s),
        v_dd=float(v_dd),
        temp_k=float(_pick(raw, "T", "temp_k", default=300.0,
                           applied=applied, label="temp_k")),
        kappa_cmp=float(_pick(raw, "kappa_cmp", default=1e-25,
                              applied=applied, label="kappa_cmp")),
        kappa_sw=float(_pick(raw, "kappa_sw", default=1e-13,
                             applied=applied, label="kappa_sw")),
        e_dff=float(_pick(raw, "e_dff", default=1e-15,
                          applied=applied, label="e_dff")),
        r_drv_cap=float(_pick(raw, "r_drv_cap", default=100e3,
                              applied=applied, label="r_drv_cap")),
        v_floor=float(_pick(raw, "v_floor", default=1e-6,
                            applied=applied, label="v_floor")),
    )

    alpha = float(_pick(raw, "alpha", default=1.0, applied=applied, label="alpha"))
    if alpha <= 0:
        raise ConfigError(f"{where}: alpha must be positive, got {alpha}")

    bounds = default_bounds(adc)
    user_bounds = raw.get("bounds") or {}
    if not isinstance(user_bounds, dict):
        raise ConfigError(f"{where}: bounds must be a mapping")
    for key, pair in user_bounds.items():
        if key not in DESIGN_FIELDS:
            raise ConfigError(f"{where}: unknown design variable {key!r} in bounds")
        lo, hi = float(pair[0]), float(pair[1])
        if not 0 < lo < hi:
            raise ConfigError(f"{where}: bounds for {key} need 0 < lo < hi")
        bounds[key] = (lo, hi)
    if not user_bounds:
        applied["bounds"] = "default sizing box"

    g = raw.get("global") or {}
    global_params = GlobalParams(
        pop_size=g.get("pop_size"),
        f_weight=float(g.get("F", g.get("f_weight", 0.5))),
        cr=float(g.get("CR", g.get("cr", 0.9))),
        k_infill=g.get("k_infill"),
        theta_conv=float(g.get("theta_conv", 0.02)),
        n_conv_target=g.get("n_conv_target"),
        max_evals=int(g.get("max_evals", 5000)),
    )
    if not g:
        applied["global"] = "defaults"

    lo = raw.get("local") or {}
    lam = lo.get("lambda", lo.get("expensive_every", 5))
    local_params = LocalParams(
        delta_init=float(lo.get("delta_init", 0.1)),
        expensive_every=float("inf") if lam in ("inf", None) else float(lam),
        penalty_scale=float(lo.get("a", lo.get("penalty_scale", 1.0))),
        delta_w=float(lo.get("delta_w", 0.1)),
        eps=float(lo.get("eps", 1e-3)),
        w0=float(lo.get("w0", 0.5)),
        max_iter=int(lo.get("max_iter", 200)),
        blend_at=str(lo.get("blend_at", "candidate")),
    )
    if not lo:
        applied["local"] = "defaults"

    h = raw.get("harness") or {}
    harness = HarnessConfig(
        k_points=int(h.get("K", h.get("k_points", 1024))),
        m_segments=int(h.get("M", h.get("m_segments", 4))),
        f_target_frac=float(h.get("f_target_frac", 0.097)),
        amplitude_frac=float(h.get("amplitude_frac", 0.95)),
        noise=bool(h.get("noise", True)),
        verify_scale=int(h.get("verify_scale", 4)),
    )
    if not h:
        applied["harness"] = "defaults"

    seed = raw.get("seed")
    if seed is None:
        applied["seed"] = 0
        seed = 0

    return RunConfig(
        adc=adc,
        alpha=alpha,
        bounds=bounds,
        global_params=global_params,
        local_params=local_params,
        harness=harness,
        seed=int(seed),
        out_dir=raw.get("out"),
        workers=raw.get("workers"),
        defaults_applied=applied,
    )


@dataclass
class RunResult:
    config: RunConfig
    design: DesignPoint
    specs: DerivedSpecs
    coarse: CoarseReport
    spectrum: SpectrumReport
    global_state: OptimizerState
    local_result: LocalResult | None
    warning: str | None
    phase_timings: dict[str, float]
    trace_files: dict[str, str]

    def record_dict(self) -> dict:
        """Deterministic summary: reproducible from (config, seed) alone."""
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.effective_dict(),
            "design": self.design.to_dict(),
            "specs": self.specs.to_dict(),
            "coarse": {
                "sampling_error": self.coarse.sampling_error,
                "ssre": self.coarse.ssre.tolist(),
                "noise_rms": self.coarse.noise_rms,
                "power": self.coarse.power,
                "timing_ok": self.coarse.timing_ok,
                "slack": self.coarse.slack.tolist(),
                "feasible": self.coarse.feasible,
            },
            "spectrum": self.spectrum.to_dict(),
            "global": {
                "generations": self.global_state.generation,
                "evals": self.global_state.evals,
                "n_converged": int(self.global_state.mask.sum()),
                "mask": self.global_state.mask.tolist(),
                "warning": self.global_state.warning,
            },
            "local": None
            if self.local_result is None
            else {
                "iterations": self.local_result.iterations,
                "rollbacks": self.local_result.rollbacks,
                "n_cheap": self.local_result.n_cheap,
                "n_expensive": self.local_result.n_expensive,
                "f_cheap": self.local_result.f_cheap,
                "f_expensive": self.local_result.f_expensive,
            },
            "warning": self.warning,
            "trace_files": self.trace_files,
        }

    def record_json(self) -> str:
        return json.dumps(self.record_dict(), sort_keys=True, indent=2) + "\n"


def optimization_plan(f_s: float, v_dd: float, h: HarnessConfig, seed: int):
    return plan_test(
        f_s,
        h.k_points,
        h.m_segments,
        h.f_target_frac * f_s,
        h.amplitude_frac * v_dd / 2.0,
        seed=seed,
    )


def verification_plan(f_s: float, v_dd: float, h: HarnessConfig, seed: int):
    """Final reporting plan: the optimization tone at a longer capture."""
    base = optimization_plan(f_s, v_dd, h, seed)
    return plan_test(
        f_s,
        h.k_points * h.verify_scale,
        h.m_segments,
        base.f_in,
        base.amplitude,
        seed=seed,
    )


def run_pipeline(cfg: RunConfig, out_dir: str | Path | None = None) -> RunResult:
    """Derive budgets, explore globally, freeze, refine locally, verify.

    The final design is the local end point when it meets every coarse
    constraint; otherwise the best coarse-feasible point seen during the
    local phase; otherwise the least-violating point with a warning.
    """
    timings: dict[str, float] = {}
    warning_parts: list[str] = []

    t0 = time.perf_counter()
    specs = DerivedSpecs.derive(cfg.adc.n_bits, cfg.adc.v_dd, cfg.alpha)
    coarse_problem = CoarseProblem(cfg=cfg.adc, specs=specs, bounds=cfg.bounds)
    problem = Problem(bounds=bounds_array(cfg.bounds), evaluate=coarse_problem)
    timings["derive"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    gparams = GlobalParams(
        pop_size=cfg.global_params.pop_size,
        f_weight=cfg.global_params.f_weight,
        cr=cfg.global_params.cr,
        k_infill=cfg.global_params.k_infill,
        theta_conv=cfg.global_params.theta_conv,
        n_conv_target=cfg.global_params.n_conv_target,
        max_evals=cfg.global_params.max_evals,
        seed=cfg.seed,
        workers=cfg.workers,
    )
    gstate = run_global(problem, gparams)
    if gstate.warning:
        warning_parts.append(f"global: {gstate.warning}")
    timings["global"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    x_start = gstate.best_x.copy()
    plan = optimization_plan(cfg.adc.f_s, cfg.adc.v_dd, cfg.harness, cfg.seed)
    local_result: LocalResult | None = None
    x_final = x_start
    if gstate.best is not None:
        cheap = CheapObjective.anchored_at(coarse_problem, x_start)
        expensive = ExpensiveObjective(
            cfg=cfg.adc, plan=plan, bounds=cfg.bounds, noise=cfg.harness.noise
        )
        feasible_tracker = _FeasibleTracker(cheap)
        local_result = run_local(
            x_start,
            gstate.mask,
            feasible_tracker,
            expensive,
            cfg.local_params,
            bounds_array(cfg.bounds),
        )
        x_final = local_result.x_best
        if not coarse_problem.report(x_final).feasible:
            fallback = feasible_tracker.best_feasible_x
            if fallback is not None:
                x_final = fallback
                warning_parts.append(
                    "local: end point violated a coarse constraint; "
                    "kept best feasible point from the local trajectory"
                )
            else:
                warning_parts.append("local: no coarse-feasible point found")
    timings["local"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    design = DesignPoint.from_vector(x_final)
    model = build_model(design, cfg.adc, cfg.bounds)
    final_coarse = evaluate_coarse(model, specs)
    verify_plan = verification_plan(cfg.adc.f_s, cfg.adc.v_dd, cfg.harness, cfg.seed)
    codes = run_segments(
        model, verify_plan, noise=cfg.harness.noise, workers=cfg.workers
    )
    spectrum = spectrum_metrics(codes, verify_plan, final_coarse.power, cfg.adc.n_bits)
    timings["verify"] = time.perf_counter() - t0

    result = RunResult(
        config=cfg,
        design=design,
        specs=specs,
        coarse=final_coarse,
        spectrum=spectrum,
        global_state=gstate,
        local_result=local_result,
        warning="; ".join(warning_parts) or None,
        phase_timings=timings,
        trace_files={},
    )
    if out_dir is not None:
        persist_run(result, Path(out_dir), verify_plan, codes)
    return result


class _FeasibleTracker:
    """Wrap the cheap objective, remembering the best coarse-feasible point
    visited, so the pipeline can fall back to it if the local end point
    trades a small violation for power."""

    def __init__(self, cheap: CheapObjective):
        self.cheap = cheap
        self.best_feasible_x: np.ndarray | None = None
        self._best_val = float("inf")

    def __call__(self, x: np.ndarray) -> float:
        power, slack = self.cheap.problem(x)
        value = self.cheap.value_from(power, slack)
        if np.all(slack >= 0.0) and value < self._best_val:
            self._best_val = value
            self.best_feasible_x = np.asarray(x, dtype=float).copy()
        return value


def write_eval_log_csv(archive, n_constraints: int, path: str) -> None:
    """Per-candidate log of the global phase: id, variables, slacks, power."""
    import csv as _csv

    with open(path, "w", newline="") as buf:
        writer = _csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["candidate"]
            + list(DESIGN_FIELDS)
            + [f"slack_{i}" for i in range(n_constraints)]
            + ["power"]
        )
        for cid, rec in enumerate(archive):
            writer.writerow(
                [cid] + rec.x.tolist() + rec.slack.tolist() + [rec.objective]
            )


def persist_run(result: RunResult, out: Path, plan, codes) -> None:
    out.mkdir(parents=True, exist_ok=True)
    traces = {
        "global_history": "global_history.csv",
        "local_history": "local_history.csv",
        "eval_log": "eval_log.csv",
        "capture": "capture.csv",
        "spectrum": "spectrum.csv",
        "design": "design.json",
        "specs": "specs.json",
    }
    result.trace_files = traces

    global_opt.write_history_csv(result.global_state.history, str(out / traces["global_history"]))
    local_opt.write_history_csv(
        result.local_result.history if result.local_result else [],
        str(out / traces["local_history"]),
    )
    write_eval_log_csv(
        result.global_state.archive,
        len(result.coarse.slack),
        str(out / traces["eval_log"]),
    )
    write_capture_csv(plan, codes, str(out / traces["capture"]))
    write_spectrum_csv(result.spectrum, str(out / traces["spectrum"]))
    (out / traces["design"]).write_text(
        json.dumps(result.design.to_dict(), sort_keys=True, indent=2) + "\n"
    )
    (out / traces["specs"]).write_text(result.specs.to_json(indent=2) + "\n")
    (out / RECORD_NAME).write_text(result.record_json())
    (out / "timings.json").write_text(
        json.dumps(result.phase_timings, sort_keys=True, indent=2) + "\n"
    )
    emit_report(result.record_dict(), out)


def summary_from_record(record: dict) -> str:
    """Human-readable run summary built purely from the persisted record,
    so regenerated reports cannot drift from the stored figures."""
    adc = record["config"]["adc"]
    specs = record["specs"]
    c = record["coarse"]
    s = record["spectrum"]
    enob_check = enob_from_sndr(s["sndr_db"])
    ssre_slack = np.asarray(specs["ssre_bound"]) - np.asarray(c["ssre"])
    lines = [
        "sizing run summary",
        "==================",
        f"resolution      : {adc['n_bits']} bits",
        f"sampling rate   : {adc['f_s']:.6g} Hz",
        f"supply          : {adc['v_dd']:.6g} V",
        f"alpha           : {record['config']['alpha']:.6g}",
        f"seed            : {record['config']['seed']}",
        "",
        "final design (SI units)",
    ]
    for name in DESIGN_FIELDS:
        lines.append(f"  {name:<10} = {record['design'][name]:.9e}")
    lines += [
        "",
        "coarse evaluation",
        f"  sampling error = {c['sampling_error']:.6e} V "
        f"(bound {specs['sampling_bound']:.6e})",
        f"  thermal noise  = {c['noise_rms']:.6e} V rms "
        f"(bound {specs['noise_bound']:.6e})",
        f"  worst ssre slack = {float(ssre_slack.min()):.6e}",
        f"  timing ok      = {c['timing_ok']}",
        f"  power          = {c['power']:.6e} W",
        f"  all feasible   = {c['feasible']}",
        "",
        "sine-test metrics",
        f"  SNDR  = {s['sndr_db']:.2f} dB (budget ceiling "
        f"{specs['sndr_ceiling']:.2f} dB)",
        f"  SFDR  = {s['sfdr_db']:.2f} dB",
        f"  ENOB  = {s['enob']:.3f} bits (cross-check {enob_check:.3f})",
        f"  FoM_W = {s['fom_w'] * 1e15:.3f} fJ/conv-step",
        f"  FoM_S = {s['fom_s']:.2f} dB",
        "",
    ]
    local = record["local"]
    if local is None or local["iterations"] == 0:
        lines.append("local phase: no iterations")
    else:
        lines.append(
            f"local phase: {local['iterations']} iterations, "
            f"{local['rollbacks']} rollbacks"
        )
    g = record["global"]
    lines.append(
        f"global phase: {g['generations']} generations, {g['evals']} evaluations, "
        f"{g['n_converged']} variables converged"
    )
    if record["warning"]:
        lines.append(f"warning: {record['warning']}")
    lines.append("")
    return "\n".join(lines)


def summary_text(result: RunResult) -> str:
    return summary_from_record(result.record_dict())


def emit_report(record: dict, out: Path) -> dict[str, str]:
    """Write the human-readable summary and the flat metrics table."""
    import csv as _csv

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.txt").write_text(summary_from_record(record))
    with open(out / "metrics.csv", "w", newline="") as buf:
        writer = _csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "value"])
        writer.writerow(["power_w", record["coarse"]["power"]])
        for key in ("sndr_db", "sfdr_db", "enob", "fom_w", "fom_s"):
            writer.writerow([key, record["spectrum"][key]])
        writer.writerow(["coarse_feasible", record["coarse"]["feasible"]])
    return {"summary": "summary.txt", "metrics": "metrics.csv"}


def load_design(path: str | Path) -> DesignPoint:
    raw = json.loads(Path(path).read_text())
    missing = [name for name in DESIGN_FIELDS if name not in raw]
    if missing:
        raise ConfigError(f"design file missing fields: {missing}")
    return DesignPoint(**{name: float(raw[name]) for name in DESIGN_FIELDS})


def audit_run(run_dir: str | Path) -> dict:
    """Recompute every summary number from the persisted raw artifacts.

    Returns a dict of checks, each mapping to (recorded, recomputed).
    Raises ConfigError when any check disagrees.
    """
    run_dir = Path(run_dir)
    record = json.loads((run_dir / RECORD_NAME).read_text())
    cfg_dict = record["config"]
    adc = AdcConfig(**{
        key: cfg_dict["adc"][key]
        for key in ("n_bits", "f_s", "v_dd", "temp_k", "kappa_cmp",
                    "kappa_sw", "e_dff", "r_drv_cap", "v_floor")
    })
    specs = DerivedSpecs.derive(adc.n_bits, adc.v_dd, cfg_dict["alpha"])
    bounds = {k: tuple(v) for k, v in cfg_dict["bounds"].items()}
    design = load_design(run_dir / record["trace_files"]["design"])
    model = build_model(design, adc, bounds)
    coarse = evaluate_coarse(model, specs)

    rows = (run_dir / record["trace_files"]["capture"]).read_text().splitlines()[1:]
    codes = np.array([int(r.split(",")[2]) for r in rows])
    harness = HarnessConfig(**cfg_dict["harness"])
    verify_plan = verification_plan(adc.f_s, adc.v_dd, harness, cfg_dict["seed"])
    spectrum = spectrum_metrics(codes, verify_plan, coarse.power, adc.n_bits)

    checks = {
        "power": (record["coarse"]["power"], coarse.power),
        "sampling_error": (record["coarse"]["sampling_error"], coarse.sampling_error),
        "noise_rms": (record["coarse"]["noise_rms"], coarse.noise_rms),
        "sndr_db": (record["spectrum"]["sndr_db"], spectrum.sndr_db),
        "sfdr_db": (record["spectrum"]["sfdr_db"], spectrum.sfdr_db),
        "enob": (record["spectrum"]["enob"], spectrum.enob),
        "fom_w": (record["spectrum"]["fom_w"], spectrum.fom_w),
        "fom_s": (record["spectrum"]["fom_s"], spectrum.fom_s),
        "enob_identity": (
            record["spectrum"]["enob"],
            enob_from_sndr(record["spectrum"]["sndr_db"]),
        ),
    }
    bad = {
        name: pair
        for name, pair in checks.items()
        if not np.isclose(pair[0], pair[1], rtol=1e-12, atol=1e-12)
    }
    if bad:
        raise ConfigError(f"audit mismatches: {bad}")
    return checks
