"""Command-line entry point: ``envdamp <subcommand> [options]``.

Subcommands: ``generate``, ``optimize``, ``estimate``, ``sweep``,
``interfere`` and ``compare``. Every one accepts ``--config`` and ``--seed``;
the seed defaults to ``$ENVDAMP_SEED`` and then 0. Exit status is 0 on
success, 1 on a runtime or configuration error and 2 on bad usage.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from ._accel import backend_name
from .config import (ConfigError, RunConfig, apply_paper_scale, apply_seed, describe,
                     load_config, parse_methods, resolve_seed)
from .damping import EnsembleConfig, EstimationError, estimate_from_ensemble
from .envelope import ALL_FORMS, KernelForm, KernelSpec
from .harness import (COMPARE_METHODS, ENVELOPE_METHODS, SCENARIOS, FitRegistry,
                      MissingFitError, noiseless_fixture, plan_interference_study,
                      plan_scenario_sweep, run_comparison, run_interference_study,
                      run_scenario_sweep, train_fits, training_spec, write_study)
from .optimize import OptimizationError
from .segment import SegmentError
from .signal_model import TimeRecord, generate_dataset, load_dataset, save_dataset

logger = logging.getLogger("envdamp")

DEFAULT_ESTIMATE_KERNEL = (KernelForm.GAUSSIAN_WINDOW, 0.3)


class CliError(RuntimeError):
    pass


def _common(parser):
    parser.add_argument("--config", type=Path, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=None,
                        help="random seed (overrides the config and $ENVDAMP_SEED)")
    parser.add_argument("--paper-scale", action="store_true",
                        help="full-size training set and 100 recordings per ensemble")
    parser.add_argument("-v", "--verbose", action="count", default=0)


def _scenario_arg(parser):
    parser.add_argument("--scenario", choices=sorted(SCENARIOS),
                        help="built-in scenario (default: the config's, else scenario1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="envdamp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("generate", help="write a labelled training dataset")
    _common(p)
    _scenario_arg(p)
    p.add_argument("--out", type=Path, required=True, help="output .npz path")
    p.add_argument("--n-records", type=int, help="override the dataset size")

    p = sub.add_parser("optimize", help="fit theta for envelope kernels; writes fits.json")
    _common(p)
    _scenario_arg(p)
    p.add_argument("--forms", default="all", help="'all' or a comma-separated list of forms")
    p.add_argument("--modes", default=None,
                   help="comma-separated mode indices (default: the scenario target)")
    p.add_argument("--out", type=Path, default=Path("fits.json"), help="fit registry path")
    p.add_argument("--merge", action="store_true", help="add to an existing registry")

    p = sub.add_parser("estimate", help="damping ratio of one ensemble of records")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--fixture", choices=["noiseless"], help="built-in test ensemble")
    src.add_argument("--records", type=Path, help="dataset .npz whose records form the ensemble")
    p.add_argument("--freq", type=float, help="modal frequency in Hz (fixture: 15.56)")
    p.add_argument("--form", default=None, help="kernel form (default gaussian_window)")
    p.add_argument("--theta", type=float, default=None, help="kernel width")
    p.add_argument("--fits", type=Path, help="take theta from this registry")
    p.add_argument("--fit-key", default="scenario1:1",
                   help="registry scenario:mode used with --fits")
    p.add_argument("--json", action="store_true", help="print the estimate as JSON")

    for name, helptext in (("sweep", "SNR sweep of one scenario"),
                           ("interfere", "closely spaced mode study"),
                           ("compare", "envelope estimators against frequency-domain baselines")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        if name != "interfere":
            _scenario_arg(p)
        p.add_argument("--fits", type=Path, default=Path("fits.json"), help="fit registry")
        p.add_argument("--out", type=Path, default=Path("out") / name, help="output directory")
        p.add_argument("--methods", default=None, help="'all' or a comma-separated list")
        p.add_argument("--trials", type=int, help="override the number of trials")
        p.add_argument("--recordings", type=int, help="override recordings per ensemble")
        p.add_argument("--workers", type=int, help="worker threads")
        p.add_argument("--timing", action="store_true", help="fill the wall_ms column")
        p.add_argument("--dry-run", action="store_true",
                       help="validate the configuration and print the planned grid")
    return parser


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _effective_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "scenario", None):
        cfg = cfg.with_(scenario=SCENARIOS[args.scenario].with_(
            observation=cfg.scenario.observation))
    if args.paper_scale:
        cfg = apply_paper_scale(cfg)
    return apply_seed(cfg, resolve_seed(args.seed, cfg))


def _load_fits(path: Path) -> FitRegistry:
    if not path.exists():
        raise CliError(f"fit registry {path} not found; run `envdamp optimize` first")
    try:
        return FitRegistry.load(path)
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(f"malformed fit registry {path}: {exc}") from exc


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_generate(args, cfg: RunConfig):
    training = cfg.training
    if args.n_records is not None:
        if args.n_records < 2:
            raise CliError("--n-records must be at least 2")
        n_val = max(1, args.n_records // 5)
        training = replace(training, n_records=args.n_records,
                           split=(args.n_records - n_val, n_val))
    spec = training_spec(cfg.scenario, training, cfg.policy)
    npz, manifest = save_dataset(generate_dataset(spec), args.out)
    print(f"wrote {spec.n_records} records to {npz} (manifest {manifest.name})")


def cmd_optimize(args, cfg: RunConfig):
    forms = [KernelForm.parse(f) for f in parse_methods(args.forms)
             if f in ENVELOPE_METHODS]
    if args.forms.strip().lower() != "all" and len(forms) != len(parse_methods(args.forms)):
        raise CliError("optimize only accepts envelope kernel forms")
    forms = forms or list(ALL_FORMS)
    modes = None
    if args.modes:
        modes = [int(m) for m in args.modes.split(",")]
    registry = _load_fits(args.out) if args.merge and args.out.exists() else FitRegistry()
    registry, fits = train_fits(cfg.scenario, forms, cfg.training, cfg.policy, modes, registry)
    registry.save(args.out)
    traces = args.out.with_name(args.out.stem + "_traces.csv")
    with traces.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "form", "theta_init", "theta_final", "train_loss", "val_loss"])
        for fit in fits:
            for t in fit.restart_traces:
                w.writerow([cfg.scenario.name, fit.form.value, repr(t.theta_init),
                            repr(t.theta_final), repr(t.final_loss), repr(t.val_loss)])
    for fit in fits:
        print(f"{fit.form.value:16s} theta={fit.theta_opt:.6g} {fit.form.theta_unit:5s} "
              f"train={fit.train_loss:.5g} val={fit.val_loss:.5g}")
    print(f"wrote {len(fits)} fits to {args.out}")


def cmd_estimate(args, cfg: RunConfig):
    if args.fixture:
        records, mode = noiseless_fixture(seed=cfg.seed or 0)
        freq = args.freq or mode.damped_freq_hz
    else:
        ds = load_dataset(args.records)
        records = [TimeRecord(r, ds.sample_rate_hz) for r in ds.records]
        if args.freq is None:
            raise CliError("--freq is required with --records")
        freq = args.freq
    form = KernelForm.parse(args.form) if args.form else DEFAULT_ESTIMATE_KERNEL[0]
    if args.theta is not None:
        theta = args.theta
    elif args.fits:
        scenario, _, mode_index = args.fit_key.partition(":")
        theta = _load_fits(args.fits).theta(scenario, int(mode_index or 0), form)
    elif form is DEFAULT_ESTIMATE_KERNEL[0]:
        theta = DEFAULT_ESTIMATE_KERNEL[1]
    else:
        raise CliError(f"--theta or --fits is required for {form.value}")
    est = estimate_from_ensemble(records, EnsembleConfig(KernelSpec(form, theta, freq), cfg.policy),
                                 freq)
    if args.json:
        _print_json({"zeta_hat": est.zeta, "slope": est.slope, "segment": list(est.segment),
                     "r_squared": est.r_squared, "form": form.value, "theta": theta,
                     "freq_hz": freq, "n_records": len(records)})
    else:
        print(f"zeta_hat={est.zeta * 100:.4f}%  ({form.value}, theta={theta:g}, "
              f"{len(records)} records, segment {est.segment[0]}..{est.segment[1]})")


def _study(args, cfg: RunConfig, kind: str):
    default_methods = {"sweep": ENVELOPE_METHODS, "interfere": ENVELOPE_METHODS,
                       "compare": COMPARE_METHODS}[kind]
    if args.methods:
        methods = parse_methods(args.methods)
    else:
        methods = cfg.methods or default_methods
    scen_changes = {}
    if args.trials is not None:
        scen_changes["n_trials"] = args.trials
    if args.recordings is not None:
        scen_changes["n_recordings"] = args.recordings
    workers = args.workers or cfg.workers
    timing = args.timing or cfg.timing
    if kind == "interfere":
        icfg = replace(cfg.interference, **scen_changes)
        plan = plan_interference_study(icfg, methods)
    else:
        scfg = cfg.scenario.with_(**scen_changes)
        plan = plan_scenario_sweep(scfg, methods)
    plan.update(seed=cfg.seed, out=str(args.out), fits=str(args.fits))
    if args.dry_run:
        plan["study"] = kind
        _print_json(plan)
        return
    fits = _load_fits(args.fits)
    common = dict(options=cfg.baselines, policy=cfg.policy, timing=timing, workers=workers)
    if kind == "interfere":
        result = run_interference_study(icfg, methods, fits, **common)
    elif kind == "compare":
        result = run_comparison(scfg, fits, methods, **common)
    else:
        result = run_scenario_sweep(scfg, methods, fits, **common)
    meta = {"study": kind, "seed": cfg.seed, "backend": backend_name(), "config": describe(cfg),
            "plan": plan}
    paths = write_study(result, args.out, meta)
    n_invalid = sum(not r.valid for r in result.rows)
    print(f"{len(result.rows)} rows ({n_invalid} invalid) -> {paths['results']}")
    print(f"summary -> {paths['summary']}")


COMMANDS = {
    "generate": cmd_generate,
    "optimize": cmd_optimize,
    "estimate": cmd_estimate,
    "sweep": lambda a, c: _study(a, c, "sweep"),
    "interfere": lambda a, c: _study(a, c, "interfere"),
    "compare": lambda a, c: _study(a, c, "compare"),
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _effective_config(args)
        COMMANDS[args.command](args, cfg)
    except (CliError, ConfigError, MissingFitError, OptimizationError, EstimationError,
            SegmentError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"envdamp: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
