"""Command-line interface.

Subcommands: synth renders one stimulus config to raw or PNG frames;
spectrum evaluates the analytic power spectrum onto an npz file;
validate runs the check registry and emits a machine-readable report;
simulate plays a synthetic observer through full sessions and writes
their JSONL files; fit aggregates sessions, fits each condition, and
inverts the fits into an observer model; serve runs the HTTP service.

All domain failures print their message verbatim on stderr and exit
nonzero; stdout stays machine-parsable (key-value lines or JSON).
"""

import argparse
import glob
import json
import sys
import time
from pathlib import Path

import numpy as np

from .appconfig import AppConfig, load_app_config
from .errors import FitError, MCLabError
from .experiment import (SessionStore, aggregate, build_schedule,
                         load_session, persist_session,
                         write_aggregate_csv)
from .frameio import write_png_dir, write_raw_stack
from .grid import GridSpec
from .observer import ObserverModel, psi, simulate_observer
from .params import params_from_config
from .psychfit import fit_psychometric, recover_prior_likelihood
from .spectrum import power_spectrum_grid
from .synth import synth_frames
from .validation import report_as_dict, run_validation

__all__ = ["main", "simulation_observer"]

# synthetic observer played by the simulate subcommand: one likelihood
# width and one prior slope per frequency cell, assigned in ascending
# frequency order and cycled if the protocol has more cells
_SIM_SIGMAS = (0.30, 0.28, 0.25, 0.27, 0.26)
_SIM_SLOPES = (-1.1, -0.9, -0.8, -0.95, -0.85)


def simulation_observer(config) -> ObserverModel:
    """The known observer model the simulate subcommand plays."""
    z_values = sorted({config.z_star} |
                      {config.z_star + dz for dz in config.delta_z})
    sigma_by_z = {z: _SIM_SIGMAS[i % len(_SIM_SIGMAS)]
                  for i, z in enumerate(z_values)}
    a_by_z = {z: _SIM_SLOPES[i % len(_SIM_SLOPES)]
              for i, z in enumerate(z_values)}
    return ObserverModel(sigma_by_z=sigma_by_z, a_by_z=a_by_z)


def _load_stimulus_config(path):
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise MCLabError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise MCLabError(f"config {path} is not valid JSON: {exc}")
    if not isinstance(data, dict) or "params" not in data \
            or "grid" not in data:
        raise MCLabError(
            f"config {path} must be a JSON object with at least "
            f"'params' and 'grid' blocks")
    params = params_from_config(data["params"])
    grid = GridSpec.from_dict(data["grid"])
    return params, grid, data.get("n_frames")


def _cmd_synth(args) -> int:
    params, grid, config_frames = _load_stimulus_config(args.config)
    n_frames = args.frames if args.frames is not None else config_frames
    if n_frames is None:
        raise MCLabError(
            "n_frames missing: set it in the config or pass --frames")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    started = time.perf_counter()
    stack = synth_frames(params, grid, int(n_frames), args.seed)
    elapsed = time.perf_counter() - started

    print(f"sigma_i {float(stack.frames.std())!r}")
    print(f"frames_per_second {len(stack.frames) / elapsed:.1f}")
    if args.format == "raw":
        raw_path, meta_path = write_raw_stack(stack, out_dir / "stimulus")
        print(f"wrote {raw_path}")
        print(f"wrote {meta_path}")
    else:
        meta_path = write_png_dir(stack, out_dir)
        print(f"wrote {stack.frames.shape[0]} png frames to {out_dir}")
        print(f"wrote {meta_path}")
    return 0


def _cmd_spectrum(args) -> int:
    params, grid, config_frames = _load_stimulus_config(args.config)
    n_frames = args.frames if args.frames is not None else config_frames
    if n_frames is None:
        raise MCLabError(
            "n_frames missing: set it in the config or pass --frames")
    power = power_spectrum_grid(grid.xi_x, grid.xi_y,
                                grid.taus(int(n_frames)), params,
                                kind=args.kind)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savez(out, power=power, xi_x=grid.xi_x, xi_y=grid.xi_y,
             taus=grid.taus(int(n_frames)))
    print(f"wrote {out}")
    print(f"power_max {float(power.max())!r}")
    return 0


def _corrupting_spectrum_check():
    from .validation import check_spectrum_match
    return check_spectrum_match(
        tamper=lambda state: setattr(state, "a1", 0.5 * state.a1))


def _cmd_validate(args) -> int:
    check_ids = args.checks.split(",") if args.checks else None
    if args.corrupt_coefficients:
        # fault-injection hook: run the requested checks but replace the
        # spectrum check with a deliberately corrupted stream recursion,
        # proving the suite can fail
        from . import validation
        ids = check_ids if check_ids is not None else (
            validation.QUICK_CHECK_IDS if args.level == "quick"
            else validation.CHECK_IDS)
        results = []
        for check_id in ids:
            if check_id == "spectrum-match":
                results.append(_corrupting_spectrum_check())
            else:
                results.extend(run_validation(check_ids=(check_id,)))
    else:
        results = run_validation(args.level, check_ids=check_ids)
    report = report_as_dict(results, args.level)
    text = json.dumps(report, indent=2)
    print(text)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n")
    return 0 if report["passed"] else 1


def _cmd_simulate(args) -> int:
    app = load_app_config(args.config, master_seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = simulation_observer(app.experiment)
    for i in range(args.count):
        seed = app.master_seed + i
        trials = build_schedule(app.experiment, seed)
        session = SessionStore(session_id=f"sim-{seed:08d}",
                               config=app.experiment, trials=trials)
        responses = simulate_observer(trials, model, seed + 990000)
        for trial, response in zip(trials, responses):
            session.record_response(trial.trial_id, response)
        path = out_dir / f"session-{seed:08d}.jsonl"
        persist_session(session, path)
        print(f"wrote {path}")
    return 0


def _parse_a_zstar(text):
    if text.strip().upper() == "AUTO":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise MCLabError(
            f"a-zstar must be AUTO or a number, got {text!r}")


def _psychometric_points(trials):
    """Per-condition empirical choice fractions on the log-speed axis,
    mirroring the grouping the fitter uses."""
    from .observer import log_speed
    groups = {}
    for trial in trials:
        if trial.response is None or trial.flagged:
            continue
        j = trial.u_offset_interval
        u_off, z_star = trial.pair[j]
        u_star, z = trial.pair[1 - j]
        key = (round(z, 9), round(z_star, 9), round(u_star, 9),
               round(trial.t_star, 9))
        offset = round(log_speed(u_off) - log_speed(u_star), 12)
        counts = groups.setdefault(key, {}).setdefault(offset, [0, 0])
        counts[0] += 1
        counts[1] += int((trial.response == "first") == (j == 0))
    return groups


def _cmd_fit(args) -> int:
    paths = sorted(glob.glob(args.sessions))
    if not paths:
        raise MCLabError(f"no sessions match {args.sessions!r}")
    sessions = [load_session(p) for p in paths]
    trials = [t for s in sessions for t in s.trials]

    fits = fit_psychometric(trials)
    a_zstar = _parse_a_zstar(args.a_zstar)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    conditions = []
    for key in sorted(fits):
        fit = fits[key]
        z, z_star, u_star, t_star = key
        conditions.append({
            "z": z, "z_star": z_star, "u_star": u_star, "t_star": t_star,
            "mu": fit.mu, "lam": fit.lam,
            "mu_se": fit.mu_se, "lam_se": fit.lam_se,
            "n_trials": fit.n_trials, "deviance": fit.deviance,
        })

    # one observer recovery per protocol: mixing reference speeds or
    # durations in a single inversion would conflate their priors
    by_protocol = {}
    for key, fit in fits.items():
        by_protocol.setdefault(key[1:], {})[key] = fit
    observers = []
    for proto in sorted(by_protocol):
        entry = {"z_star": proto[0], "u_star": proto[1],
                 "t_star": proto[2]}
        try:
            model = recover_prior_likelihood(by_protocol[proto],
                                             a_zstar=a_zstar)
        except FitError as exc:
            # per-condition fits stand on their own; observer recovery
            # is best effort when the data are too weak to invert
            entry["error"] = str(exc)
        else:
            entry.update({
                "sigma_by_z": {
                    repr(z): s
                    for z, s in sorted(model.sigma_by_z.items())},
                "a_by_z": {repr(z): a
                           for z, a in sorted(model.a_by_z.items())},
                "u_max": model.u_max,
            })
        observers.append(entry)

    report = {
        "n_sessions": len(sessions),
        "n_trials": len(trials),
        "a_zstar": a_zstar,
        "conditions": conditions,
        "observers": observers,
    }
    fit_path = out_dir / "fit.json"
    fit_path.write_text(json.dumps(report, indent=2) + "\n")
    print(f"wrote {fit_path}")

    pooled = SessionStore(session_id="pooled", config=sessions[0].config,
                          trials=trials)
    csv_path = out_dir / "matrix.csv"
    write_aggregate_csv(aggregate(pooled), csv_path)
    print(f"wrote {csv_path}")

    points = _psychometric_points(trials)
    curves = []
    for key in sorted(fits):
        fit = fits[key]
        offsets = sorted(points.get(key, {}))
        if offsets:
            lo, hi = min(offsets), max(offsets)
            pad = 0.1 * (hi - lo) if hi > lo else 0.5
        else:
            lo, hi, pad = -1.0, 1.0, 0.0
        x = np.linspace(lo - pad, hi + pad, 101)
        curves.append({
            "condition": list(key),
            "x": x.tolist(),
            "p": psi((x - fit.mu) / fit.lam).tolist(),
            "points": {
                "x": offsets,
                "phat": [points[key][o][1] / points[key][o][0]
                         for o in offsets],
                "n": [points[key][o][0] for o in offsets],
            },
        })
    plot_path = out_dir / "plot.json"
    plot_path.write_text(json.dumps({"curves": curves}) + "\n")
    print(f"wrote {plot_path}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    app_config = load_app_config(args.config, port=args.port,
                                 cache_dir=args.cache)
    app = create_app(app_config)
    uvicorn.run(app, host=args.host, port=app_config.port)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mclab",
        description="Motion cloud textures: synthesis, validation, "
                    "simulated observers, psychometric fits, and the "
                    "experiment service.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a stimulus to frames")
    p.add_argument("--config", required=True,
                   help="JSON file with params, grid, and n_frames")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("raw", "png"), default="raw")
    p.add_argument("--frames", type=int, default=None,
                   help="override n_frames from the config")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("spectrum", help="evaluate the analytic spectrum")
    p.add_argument("--config", required=True,
                   help="JSON file with params, grid, and n_frames")
    p.add_argument("--out", required=True, help="output .npz path")
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--kind", choices=("gaussian", "spde_exact"),
                   default="spde_exact")
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("validate", help="run the validation checks")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.add_argument("--checks", default=None,
                   help="comma-separated check ids (overrides --level)")
    p.add_argument("--out", default=None, help="also write the JSON here")
    p.add_argument("--corrupt-coefficients", action="store_true",
                   help=argparse.SUPPRESS)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("simulate",
                       help="write sessions played by a synthetic observer")
    p.add_argument("--config", default=None,
                   help="app config JSON (experiment block and defaults)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=1,
                   help="number of sessions")
    p.add_argument("--seed", type=int, default=None,
                   help="master seed (overrides config)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="fit sessions and invert to a model")
    p.add_argument("--sessions", required=True,
                   help="glob of session JSONL files")
    p.add_argument("--a-zstar", default="AUTO",
                   help="reference prior slope: AUTO or a number")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("serve", help="run the experiment HTTP service")
    p.add_argument("--config", default=None, help="app config JSON")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--cache", default=None,
                   help="cache directory (overrides MCLAB_CACHE)")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MCLabError as exc:
        print(str(exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
