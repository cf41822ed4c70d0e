"""Command-line interface: granular <subcommand> --config ...

Subcommands: simulate, selfsim (rescaled-frame simulate), qcheck,
haff, tail, transfer, preset, report. Exit code 0 iff every check in
the produced report passes.
"""

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import io as gio
from .config import ConfigError, PRESET_NAMES, parse_config, preset, validate_config
from .dsmc import FRAME_RESCALED, run
from .observables import haff_fit, histogram_from_speeds, tail_fit
from .rescale import ScalingState, transfer_moment_series
from .reporting import emit_report, run_preset


def _load_config(args):
    if args.config:
        cfg = parse_config(args.config)
    else:
        cfg = validate_config({})
    if args.seed is not None:
        cfg["seed"] = args.seed
        cfg = validate_config(dict(cfg))
    return cfg


def _out_dir(args, cfg):
    out = args.out or cfg["output"]["directory"]
    os.makedirs(out, exist_ok=True)
    return out


def _run_one_replica(payload):
    cfg_dict, seed, out_dir = payload
    cfg = validate_config(cfg_dict)
    cfg["seed"] = seed
    sim = cfg.sim_config()
    out, ens = run(sim)
    os.makedirs(out_dir, exist_ok=True)
    meta = {"config_hash": cfg.hash, "seed": seed}
    gio.write_moments_csv(os.path.join(out_dir, "moments.csv"), out, meta)
    for t_snap, vel in out.snapshots:
        speeds = np.linalg.norm(vel, axis=1)
        h = histogram_from_speeds(speeds, ens.weight, sim.dim, n_bins=sim.bins,
                                  frame=sim.frame, time=t_snap)
        gio.write_hist_csv(os.path.join(out_dir, f"hist_t{t_snap:g}.csv"), h, meta)
    gio.write_snapshot_json(os.path.join(out_dir, "snapshot_final.json"), out,
                            out.times[-1], extra_meta=meta)
    return os.path.join(out_dir, "moments.csv")


def cmd_simulate(args, force_frame=None):
    cfg = _load_config(args)
    if force_frame:
        cfg["frame"] = force_frame
    out_dir = _out_dir(args, cfg)
    replicas = cfg["numerics"]["replicas"]
    if replicas == 1:
        _run_one_replica((dict(cfg), cfg["seed"], out_dir))
        print(f"wrote {out_dir}/moments.csv")
        return 0
    jobs = [
        (dict(cfg), cfg["seed"] + k, os.path.join(out_dir, f"replica_{k}"))
        for k in range(replicas)
    ]
    workers = min(replicas, int(os.environ.get("GRANULAR_THREADS", "1")))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            paths = list(pool.map(_run_one_replica, jobs))
    else:
        paths = [_run_one_replica(j) for j in jobs]
    _merge_replicas(paths, os.path.join(out_dir, "moments.csv"))
    print(f"wrote {out_dir}/moments.csv (merged over {replicas} replicas)")
    return 0


def _merge_replicas(paths, out_path):
    """Average the moment series of replicas (identical cadence grids);
    merging is associative and order-independent."""
    tables = [gio.read_moments_csv(p) for p in sorted(paths)]
    base = tables[0]
    cols = base["columns"]
    data = np.stack(
        [np.stack([t[c] for c in cols], axis=1) for t in tables], axis=0
    )
    merged = data.mean(axis=0)
    merged[:, 0] = base["t"]  # identical time grids by construction
    with open(out_path, "w") as fh:
        meta = dict(base["meta"])
        meta["kind"] = "moments-merged"
        meta["replicas"] = len(tables)
        fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        fh.write(",".join(cols) + "\n")
        for row in merged:
            fh.write(",".join(gio.fmt(x) for x in row) + "\n")


def cmd_qcheck(args):
    cfg = _load_config(args)
    out_dir = _out_dir(args, cfg)
    from .reporting import _run_operator_check, emit_report as _emit

    gio.write_json(os.path.join(out_dir, "config.json"),
                   {"preset": "operator-check", "config": dict(cfg), "hash": cfg.hash})
    _run_operator_check(cfg, out_dir)
    report = _emit(out_dir)
    print(open(os.path.join(out_dir, "report.txt")).read())
    return 0 if report["all_pass"] else 1


def cmd_haff(args):
    mom = gio.read_moments_csv(args.input)
    times, energy = mom["t"], mom["energy"]
    if mom["meta"].get("frame") == FRAME_RESCALED:
        state = ScalingState(1.0, int(mom["meta"]["dim"]))
        times, energy, _ = transfer_moment_series(times, energy, 2, "g2f", state)
    fit = haff_fit(times, energy, tuple(args.window))
    check = {
        "check": "haff_slope",
        "pass": abs(fit["slope"] + 2.0) <= args.tolerance,
        "value": fit["slope"],
        "tolerance": f"-2.0 +- {args.tolerance}",
        "ref": "hafflaw",
        "stderr": fit["stderr"],
        "window": list(args.window),
    }
    payload = {"checks": [check], "all_pass": check["pass"]}
    if args.out:
        gio.write_json(args.out, payload)
    print(json.dumps(payload, indent=2))
    return 0 if check["pass"] else 1


def cmd_tail(args):
    hist = gio.read_hist_csv(args.input)
    window = tuple(args.window) if args.window else None
    fit = tail_fit(hist, window=window)
    check = {
        "check": "tail_order_one",
        "pass": fit.s == 1.0 and fit.a2 > 0,
        "value": {"selected_s": fit.s, "a1": fit.a1, "a2": fit.a2, "rms": fit.rms},
        "tolerance": "s=1 residual < s=2 residual",
        "ref": "BGPtail",
        "window": list(fit.window),
        "candidates": {str(s): list(c) for s, c in fit.candidates.items()},
    }
    payload = {"checks": [check], "all_pass": check["pass"]}
    if args.out:
        gio.write_json(args.out, payload)
    print(json.dumps(payload, indent=2))
    return 0 if check["pass"] else 1


def cmd_transfer(args):
    mom = gio.read_moments_csv(args.input)
    state = ScalingState(args.c_star, int(mom["meta"].get("dim", 3)))
    col = {0: "mass", 2: "energy"}.get(args.k, f"m{args.k}")
    if col not in mom:
        print(f"error: column {col} not present in {args.input}", file=sys.stderr)
        return 2
    tgt, vals, src = transfer_moment_series(mom["t"], mom[col], args.k, args.direction, state)
    gio.write_transfer_csv(args.out, src, tgt, vals, args.k, args.direction,
                           {"config_hash": mom["meta"].get("config_hash", "none")})
    print(f"wrote {args.out}")
    return 0


def cmd_preset(args):
    report = run_preset(args.name, args.out or args.name, seed=args.seed)
    print(open(os.path.join(args.out or args.name, "report.txt")).read())
    return 0 if report["all_pass"] else 1


def cmd_report(args):
    try:
        report = emit_report(args.dir)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(open(os.path.join(args.dir, "report.txt")).read())
    return 0 if report["all_pass"] else 1


def build_parser():
    p = argparse.ArgumentParser(
        prog="granular",
        description="Inelastic hard-sphere gas: DSMC runs, operator checks, fits",
    )
    sub = p.add_subparsers(dest="cmd", required=True)

    def add_common(sp):
        sp.add_argument("--config", help="JSON config path")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("simulate", help="run DSMC in the configured frame")
    add_common(sp)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("selfsim", help="run DSMC in the rescaled frame")
    add_common(sp)
    sp.set_defaults(fn=lambda a: cmd_simulate(a, force_frame=FRAME_RESCALED))

    sp = sub.add_parser("qcheck", help="deterministic operator cross-validation")
    add_common(sp)
    sp.set_defaults(fn=cmd_qcheck)

    sp = sub.add_parser("haff", help="fit the cooling exponent of a moments.csv")
    sp.add_argument("--input", required=True)
    sp.add_argument("--window", nargs=2, type=float, default=[10.0, 100.0])
    sp.add_argument("--tolerance", type=float, default=0.15)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_haff)

    sp = sub.add_parser("tail", help="fit tail order of a histogram CSV")
    sp.add_argument("--input", required=True)
    sp.add_argument("--window", nargs=2, type=float, default=None)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_tail)

    sp = sub.add_parser("transfer", help="map a moment series between frames")
    sp.add_argument("--input", required=True)
    sp.add_argument("--direction", choices=["g2f", "f2g"], required=True)
    sp.add_argument("-k", type=int, default=2, help="moment order |v|^k")
    sp.add_argument("--c-star", type=float, default=1.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_transfer)

    sp = sub.add_parser("preset", help="run a named end-to-end experiment")
    sp.add_argument("--name", choices=list(PRESET_NAMES), required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_preset)

    sp = sub.add_parser("report", help="rebuild report + plots from raw outputs")
    sp.add_argument("--dir", required=True)
    sp.set_defaults(fn=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
