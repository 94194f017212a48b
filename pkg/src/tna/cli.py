"""Command-line entry point.

Subcommands: synth, tilt, calibrate, search, eval, verify, export-curves.
Exit codes: 0 success, 2 usage error, 3 data/format error, 4 verification
failure. Every command with a --seed flag is bit-reproducible end to end.
A JSON config file can be supplied via --config; explicit flags override
file values. TNA_WORKERS sets the default worker-pool size.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bundle as bundle_io
from . import calibration as cal
from . import verify as verify_mod
from .core import TiltPlan, logit_matrix, tna
from .errors import BundleError, DomainError, SaturationError, UnfittedMapError
from .metrics import evaluate
from .search import SearchSpec, repeat_search
from .rng import SeededRng

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_VERIFY = 4


def _default_workers():
    env = os.environ.get("TNA_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def fmt_mean_std(mean, std, digits=2):
    """Table-style "mean with subscripted std" text, e.g. 1.66_.10."""
    return f"{mean:.{digits}f}_{std:.{digits}f}"


def _add_plan_flags(p):
    p.add_argument("--target-mrc", type=float, default=0.0, help="target mRC in degrees [0, 90]")
    p.add_argument("--theta-s", type=float, default=0.9, help="max elementary angle (radians)")
    p.add_argument("--alpha", type=float, default=5.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--n-t", type=int, default=50, help="factors per mRC check")
    p.add_argument("--n-e", type=int, default=10, help="ensemble size")
    p.add_argument("--max-factors", type=int, default=None)


def _plan_from_args(args, seed):
    return TiltPlan(
        target_mrc_deg=args.target_mrc,
        theta_s=args.theta_s,
        alpha=args.alpha,
        beta=args.beta,
        n_t=args.n_t,
        n_e=args.n_e,
        seed=seed,
        max_factors=args.max_factors,
    )


def build_parser():
    parser = argparse.ArgumentParser(prog="tna", description=__doc__)
    parser.add_argument("--config", type=str, default=None, help="JSON file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic feature bundle")
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--separation", type=float, default=3.0)
    p.add_argument("--weight-scale", type=float, default=3.0)
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)

    p = sub.add_parser("tilt", help="run tilt-and-average, write the averaged weight")
    p.add_argument("--bundle", required=True)
    _add_plan_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=_default_workers())
    p.add_argument("--out", required=True)

    p = sub.add_parser("calibrate", help="fit a named calibration map")
    p.add_argument("--bundle", required=True)
    p.add_argument("--map-kind", choices=cal.MAP_ORDER, required=True)
    p.add_argument("--weights", default=None, help="averaged-weight directory (default: original)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("search", help="sparse/complete search over (angle, map) pairs")
    p.add_argument("--bundle", required=True)
    p.add_argument("--mode", choices=("sparse", "complete"), default="sparse")
    p.add_argument("--objective", choices=("ece", "adaece", "nll"), default="ece")
    p.add_argument("--grid-step", type=float, default=5.0)
    p.add_argument("--maps", nargs="+", choices=cal.MAP_ORDER, default=list(cal.MAP_ORDER))
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--bins", type=int, default=15)
    _add_plan_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=_default_workers())
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("eval", help="evaluate a (weights, map) pair on a split")
    p.add_argument("--bundle", required=True)
    p.add_argument("--weights", default=None)
    p.add_argument("--map", default=None, help="calibration map JSON (default: identity)")
    p.add_argument("--split", default="test")
    p.add_argument("--bins", type=int, default=15)
    p.add_argument("--out", default=None, help="output prefix (.json/.csv appended)")

    p = sub.add_parser("verify", help="run the Monte-Carlo oracle suite")
    p.add_argument("--suite", choices=("thm1", "prop1", "concentration", "all"), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=200_000)

    p = sub.add_parser("export-curves", help="emit figure curve data as CSV")
    p.add_argument("--bundle", required=True)
    p.add_argument("--which", choices=("fig2", "fig3", "fig4", "angles"), required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_plan_flags(p)
    p.add_argument("--out", required=True)

    return parser


def cmd_synth(args):
    b = bundle_io.synth_generate(
        n=args.n,
        num_classes=args.classes,
        m=args.samples,
        class_separation=args.separation,
        weight_scale=args.weight_scale,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    bundle_io.save_bundle(b, args.out)
    print(f"wrote bundle: m={b.m} n={b.n} C={b.num_classes} -> {args.out}")
    return EXIT_OK


def cmd_tilt(args):
    b = bundle_io.load_bundle(args.bundle)
    plan = _plan_from_args(args, args.seed)
    aw = tna(b.layer, plan, workers=args.workers)
    bundle_io.save_averaged_weight(aw, args.out)
    achieved = [p["achieved_mrc_deg"] for p in aw.provenance]
    print(
        f"tilted {plan.n_e} members to target {plan.target_mrc_deg} deg "
        f"(achieved mean {np.mean(achieved):.3f} deg) -> {args.out}"
    )
    return EXIT_OK


def _pick_weights(args, b):
    if args.weights:
        aw = bundle_io.load_averaged_weight(args.weights)
        return aw.weights, aw.bias
    return b.layer.weights, b.layer.bias


def cmd_calibrate(args):
    from .search import fit_map

    b = bundle_io.load_bundle(args.bundle)
    w, bias = _pick_weights(args, b)
    feats, labels = b.split_view("calibration")
    fitted = fit_map(args.map_kind, logit_matrix(w, bias, feats), labels)
    cal.save_map(fitted, args.out)
    print(f"fitted {args.map_kind} map on {labels.size} calibration samples -> {args.out}")
    return EXIT_OK


def cmd_search(args):
    b = bundle_io.load_bundle(args.bundle)
    grid = tuple(np.arange(0.0, 90.0 + 1e-9, args.grid_step))
    plan = _plan_from_args(args, args.seed)
    spec = SearchSpec(
        angle_grid=grid,
        maps=tuple(args.maps),
        mode=args.mode,
        plan=plan,
        repeats=args.repeats,
        objective=args.objective,
        bins=args.bins,
    )
    results = repeat_search(b, spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    test_f, test_y = b.split_view("test")
    reports = []
    for r, res in enumerate(results):
        res.save_json(out / f"result_r{r}.json")
        res.save_curve_csv(out / f"curve_r{r}.csv")
        rep = evaluate(res.best_weights.weights, res.best_weights.bias, res.best_map,
                       test_f, test_y, args.bins)
        rep.save_json(out / f"test_report_r{r}.json")
        reports.append(rep)
    summary = {
        "mode": args.mode,
        "objective": args.objective,
        "repeats": args.repeats,
        "best_theta_deg": [res.best_theta_deg for res in results],
        "best_map_kind": [res.best_map_kind for res in results],
        "test_accuracy_pct_mean": float(np.mean([r.accuracy_pct for r in reports])),
        "test_accuracy_pct_std": float(np.std([r.accuracy_pct for r in reports])),
        "test_ece_pct_mean": float(np.mean([r.ece_pct for r in reports])),
        "test_ece_pct_std": float(np.std([r.ece_pct for r in reports])),
        "test_adaece_pct_mean": float(np.mean([r.adaece_pct for r in reports])),
        "test_adaece_pct_std": float(np.std([r.adaece_pct for r in reports])),
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    acc = fmt_mean_std(summary["test_accuracy_pct_mean"], summary["test_accuracy_pct_std"])
    e = fmt_mean_std(summary["test_ece_pct_mean"], summary["test_ece_pct_std"])
    a = fmt_mean_std(summary["test_adaece_pct_mean"], summary["test_adaece_pct_std"])
    print(f"{args.mode} search: Acc {acc}  ECE {e}  AdaECE {a}  -> {out}")
    return EXIT_OK


def cmd_eval(args):
    b = bundle_io.load_bundle(args.bundle)
    w, bias = _pick_weights(args, b)
    cal_map = cal.load_map(args.map) if args.map else cal.IdentityMap()
    feats, labels = b.split_view(args.split)
    report = evaluate(w, bias, cal_map, feats, labels, args.bins)
    print(
        f"split={args.split} map={report.map_type} samples={report.num_samples}\n"
        f"Acc {report.accuracy_pct:.2f}%  ECE {report.ece_pct:.2f}%  "
        f"AdaECE {report.adaece_pct:.2f}%  NLL {report.nll:.4f}"
    )
    if args.out:
        report.save_json(str(args.out) + ".json")
        report.save_csv(str(args.out) + ".csv")
    return EXIT_OK


def cmd_verify(args):
    failures = []

    def check(name, ok, detail):
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        if not ok:
            failures.append(name)

    if args.suite in ("thm1", "all"):
        rep = verify_mod.thm1_mode_check(
            n=2048, psi_deg=60.0, theta_deg=30.0, samples=args.samples, seed=args.seed
        )
        check(
            "mode-oracle",
            rep.gap_deg <= 0.5,
            f"empirical {rep.empirical_mode_deg:.4f} vs closed-form "
            f"{rep.closed_form_mode_deg:.4f} deg (gap {rep.gap_deg:.4f})",
        )
    if args.suite in ("prop1", "all"):
        ok_all = True
        for theta in np.arange(5.0, 90.0, 10.0):
            holds, _, _ = verify_mod.prop1_check([30.0, 80.0], theta, [1.0, 1.0], z_norm=5.0)
            ok_all = ok_all and holds
        holds0, p0, p0b = verify_mod.prop1_check([30.0, 80.0], 0.0, [1.0, 1.0], z_norm=5.0)
        ok_all = ok_all and holds0
        check("confidence-relaxation", ok_all, "tilted confidence strictly below original")
    if args.suite in ("concentration", "all"):
        mean, std = verify_mod.orthogonality_concentration(2000, 10_000, args.seed)
        check(
            "orthogonality-concentration",
            abs(mean - 90.0) <= 0.5 and std < 2.0,
            f"mean {mean:.3f} deg, std {std:.3f} deg at n=2000",
        )
    return EXIT_VERIFY if failures else EXIT_OK


def cmd_export_curves(args):
    b = bundle_io.load_bundle(args.bundle)
    plan = _plan_from_args(args, args.seed)
    count = verify_mod.emit_figure_curves(b, plan, args.which, args.out)
    print(f"wrote {count} rows -> {args.out}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "tilt": cmd_tilt,
    "calibrate": cmd_calibrate,
    "search": cmd_search,
    "eval": cmd_eval,
    "verify": cmd_verify,
    "export-curves": cmd_export_curves,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    # apply config-file defaults before the real parse; explicit flags win
    if "--config" in argv:
        cfg_path = argv[argv.index("--config") + 1]
        with open(cfg_path) as fh:
            cfg = json.load(fh)
        for action in parser._subparsers._group_actions[0].choices.values():
            known = {a.dest for a in action._actions}
            action.set_defaults(**{k: v for k, v in cfg.items() if k in known})
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (DomainError, BundleError, SaturationError, UnfittedMapError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
