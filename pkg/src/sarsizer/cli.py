"""Command-line entry point.

Subcommands:
  run     execute the full sizing pipeline from a YAML config
  eval    coarse-evaluate a specific design against derived budgets
  sndr    run the coherent sine test on a specific design
  report  regenerate and audit the report files of a finished run
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .adc import build_model
from .coarse import evaluate_coarse, power_estimate
from .pipeline import (
    RECORD_NAME,
    RunConfig,
    audit_run,
    emit_report,
    load_config,
    load_design,
    optimization_plan,
    run_pipeline,
    summary_text,
)
from .sndr import (
    run_segments_detailed,
    spectrum_metrics,
    write_capture_csv,
    write_spectrum_csv,
)
from .specs import DerivedSpecs


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--workers", type=int, default=None, help="worker pool size")
    parser.add_argument("--out", type=str, default=None, help="output directory")


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg


def _out_dir(cfg) -> Path:
    if cfg.out_dir:
        return Path(cfg.out_dir)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    return Path("runs") / f"run-{stamp}-seed{cfg.seed}"


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    result = run_pipeline(cfg, out_dir=out)
    print(summary_text(result))
    print(f"artifacts written to {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load(args)
    design = load_design(args.design)
    specs = DerivedSpecs.derive(cfg.adc.n_bits, cfg.adc.v_dd, cfg.alpha)
    model = build_model(design, cfg.adc, cfg.bounds)
    report = evaluate_coarse(model, specs)
    labels = specs.constraint_labels()
    print(f"power           = {report.power:.6e} W")
    print(f"sampling error  = {report.sampling_error:.6e} V")
    print(f"thermal noise   = {report.noise_rms:.6e} V rms")
    print(f"timing ok       = {report.timing_ok}")
    print("slack (positive = satisfied):")
    for label, slack in zip(labels, report.slack):
        print(f"  {label:<16} {slack:+.6e}")
    print(f"feasible        = {report.feasible}")
    return 0 if report.feasible else 1


def cmd_sndr(args) -> int:
    cfg = _load(args)
    design = load_design(args.design)
    model = build_model(design, cfg.adc, cfg.bounds)
    harness = cfg.harness
    if args.segments is not None:
        harness = replace(harness, m_segments=args.segments)
    plan = optimization_plan(cfg.adc.f_s, cfg.adc.v_dd, harness, cfg.seed)
    codes, ok = run_segments_detailed(
        model, plan, noise=harness.noise, workers=cfg.workers
    )
    power = power_estimate(model)
    report = spectrum_metrics(codes, plan, power, cfg.adc.n_bits)
    print(f"capture         = {plan.k_points} points, {plan.m_segments} segments")
    print(f"input frequency = {plan.f_in:.6e} Hz ({plan.j_cycles} cycles)")
    print(f"timing failures = {int((~ok).sum())}")
    print(f"SNDR            = {report.sndr_db:.2f} dB")
    print(f"SFDR            = {report.sfdr_db:.2f} dB")
    print(f"ENOB            = {report.enob:.3f} bits")
    print(f"FoM_W           = {report.fom_w * 1e15:.3f} fJ/conv-step")
    print(f"FoM_S           = {report.fom_s:.2f} dB")
    if args.export:
        out = Path(args.export)
        out.mkdir(parents=True, exist_ok=True)
        write_capture_csv(plan, codes, str(out / "capture.csv"))
        write_spectrum_csv(report, str(out / "spectrum.csv"))
        print(f"exports written to {out}")
    return 0


def cmd_report(args) -> int:
    checks = audit_run(args.run_dir)
    print(f"audit of {args.run_dir}: {len(checks)} checks passed")
    for name, (recorded, recomputed) in checks.items():
        print(f"  {name:<16} recorded={recorded!r} recomputed={recomputed!r}")
    record = json.loads((Path(args.run_dir) / RECORD_NAME).read_text())
    files = emit_report(record, Path(args.run_dir))
    print(f"report files regenerated: {', '.join(sorted(files.values()))}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sarsizer",
        description="behavioral SAR ADC sizing via global-local optimization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the full sizing pipeline")
    p_run.add_argument("config")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="coarse-evaluate a design")
    p_eval.add_argument("config")
    p_eval.add_argument("--design", required=True)
    _add_common(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_sndr = sub.add_parser("sndr", help="sine-test a design")
    p_sndr.add_argument("config")
    p_sndr.add_argument("--design", required=True)
    p_sndr.add_argument("--segments", type=int, default=None)
    p_sndr.add_argument("--export", type=str, default=None)
    _add_common(p_sndr)
    p_sndr.set_defaults(func=cmd_sndr)

    p_rep = sub.add_parser("report", help="audit and report a finished run")
    p_rep.add_argument("run_dir")
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    np.seterr(over="ignore")  # saturating exponentials are expected
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
