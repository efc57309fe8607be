"""Command-line entry point: ``lamai <subcommand> [options]``.

Options may also come from a JSON file (``--config``); explicit flags win.
Outputs go to ``--output`` or, by default, to ``$LAMAI_OUTPUT_DIR`` (or the
working directory) under a per-subcommand file name.
"""

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from lamai.constellation import load_json, make_standard
from lamai.detector import DETECTORS
from lamai.harness import (
    CampaignConfig,
    compare_to_se,
    default_output_dir,
    emit_results,
    run_campaign,
)
from lamai.simulation import SystemConfig, evm_to_nt, sample_batch, snr_to_n0, trial_rng
from lamai.state_evolution import (
    DEFAULT_GRID,
    PsiSpec,
    classify_regime,
    psi_table,
    predicted_ser,
    se_recursion,
    thresholds,
)

log = logging.getLogger("lamai")

DEFAULTS = {
    "mr": 128,
    "mt": 8,
    "constellation": "QPSK",
    "snr_start": 0.0,
    "snr_stop": 20.0,
    "snr_step": 2.0,
    "snr_db": 10.0,
    "evm_db": -10.0,
    "detector": "all",
    "tmax": 10,
    "trials": 10_000,
    "min_errors": 200,
    "seed": 0,
    "workers": 1,
    "chunk": 250,
    "samples": 1_000_000,
    "grid": list(DEFAULT_GRID),
    "beta": None,
    "n0": None,
    "format": None,
    "compare": False,
    "beta_points": [0.25, 0.5, 1.0, 1.5, 2.0, 2.5],
    "n0_points": [0.01, 0.03, 0.1, 0.3, 1.0],
}


def _float_or_inf(s: str) -> float:
    return -math.inf if s.strip().lower() in ("-inf", "-infinity", "none", "off") else float(s)


def _add_common(p, *names):
    opts = {
        "mr": dict(type=int, help="receive antennas"),
        "mt": dict(type=int, help="transmit antennas (users)"),
        "constellation": dict(help="QPSK, BPSK, 16QAM, 64QAM, 8PSK or a JSON file of {re, im, prior}"),
        "snr_db": dict(type=float, help="receive SNR in dB"),
        "snr": dict(type=float, nargs=3, metavar=("START", "STOP", "STEP"), help="SNR sweep in dB"),
        "evm_db": dict(type=_float_or_inf, help="EVM in dB ('off' or =-inf for no impairment)"),
        "tmax": dict(type=int, help="detector iterations"),
        "trials": dict(type=int, help="trials (max per point for campaigns)"),
        "seed": dict(type=int, help="master seed"),
        "samples": dict(type=int, help="Monte Carlo samples for psi"),
        "beta": dict(type=float, help="system ratio mt/mr (overrides antennas)"),
        "n0": dict(type=float, help="receive-noise variance (overrides SNR)"),
        "grid": dict(type=float, nargs=3, metavar=("LO", "HI", "N"), help="log sigma2 grid"),
    }
    for n in names:
        p.add_argument("--" + n.replace("_", "-"), dest=n, default=None, **opts[n])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lamai", description="Large-MIMO detection under transmit impairments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="JSON file with option values")
        p.add_argument("-o", "--output", type=Path, default=None)
        return p

    p = cmd("ser", "Monte Carlo SER campaign")
    _add_common(p, "mr", "mt", "constellation", "snr", "evm_db", "tmax", "trials", "seed", "samples")
    p.add_argument("--detector", choices=[*DETECTORS, "all"], action="append", default=None)
    p.add_argument("--min-errors", dest="min_errors", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--chunk", type=int, default=None)
    p.add_argument("--format", choices=["csv", "json"], default=None)
    p.add_argument("--compare", action="store_true", default=None,
                   help="also write Monte Carlo vs predicted SER")

    p = cmd("se", "state-evolution trace and fixed point")
    _add_common(p, "mr", "mt", "constellation", "snr_db", "evm_db", "tmax", "samples", "seed", "beta", "n0")

    p = cmd("thresholds", "recovery thresholds and critical noise levels (JSON)")
    _add_common(p, "constellation", "evm_db", "samples", "seed", "beta", "n0", "grid")

    p = cmd("phase", "regime map over beta x n0 (CSV)")
    _add_common(p, "constellation", "evm_db", "samples", "seed", "grid")
    p.add_argument("--beta-points", dest="beta_points", type=float, nargs="+", default=None)
    p.add_argument("--n0-points", dest="n0_points", type=float, nargs="+", default=None)

    p = cmd("predict-ser", "large-system SER over an SNR sweep (CSV)")
    _add_common(p, "mr", "mt", "constellation", "snr", "evm_db", "samples", "seed")

    p = cmd("trace", "per-iteration detector trace vs state evolution (CSV)")
    _add_common(p, "mr", "mt", "constellation", "snr_db", "evm_db", "tmax", "trials", "seed", "samples")
    p.add_argument("--detector", choices=[*DETECTORS, "all"], action="append", default=None)
    return ap


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the JSON config file and explicit flags (in that order)."""
    opts = dict(DEFAULTS)
    file_opts = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_opts = json.load(fh)
    opts.update(file_opts)
    for k, v in vars(args).items():
        if v is not None and k not in ("config",):
            opts[k] = v
    snr = opts.get("snr_db")
    if isinstance(snr, (list, tuple)):
        if len(snr) != 3:
            raise SystemExit("snr_db sweep must be [start, stop, step]")
        opts["snr"] = list(snr)
        opts["snr_db"] = snr[0]
    elif args.command in ("ser", "predict-ser") and "snr_db" in file_opts and opts.get("snr") is None:
        opts["snr"] = [snr, snr, 1.0]
    if opts.get("snr") is not None:
        opts["snr_start"], opts["snr_stop"], opts["snr_step"] = opts["snr"]
    if isinstance(opts.get("evm_db"), str):
        opts["evm_db"] = _float_or_inf(opts["evm_db"])
    if opts.get("evm_db") is None:
        opts["evm_db"] = -math.inf
    return opts


def _constellation(name):
    if str(name).lower().endswith(".json"):
        return load_json(name)
    return make_standard(name)


def _output(opts, default_name):
    out = opts.get("output")
    return Path(out) if out else default_output_dir() / default_name


def _write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def _beta_n0(opts, c):
    beta = opts["beta"] if opts.get("beta") is not None else opts["mt"] / opts["mr"]
    n0 = opts["n0"] if opts.get("n0") is not None else snr_to_n0(opts["snr_db"], beta, c.energy)
    return beta, n0


def _spec(opts, c):
    return PsiSpec(c, evm_to_nt(opts["evm_db"], c.energy), samples=int(opts["samples"]), seed=int(opts["seed"]))


def cmd_ser(opts):
    dets = opts["detector"]
    dets = [dets] if isinstance(dets, str) else list(dets)
    if "all" in dets:
        dets = list(DETECTORS)
    cfg = CampaignConfig(
        mr=int(opts["mr"]), mt=int(opts["mt"]), constellation=opts["constellation"],
        snr_start=float(opts["snr_start"]), snr_stop=float(opts["snr_stop"]), snr_step=float(opts["snr_step"]),
        evm_db=float(opts["evm_db"]), detectors=tuple(dict.fromkeys(dets)), tmax=int(opts["tmax"]),
        max_trials=int(opts["trials"]), min_errors=int(opts["min_errors"]), seed=int(opts["seed"]),
        chunk=int(opts["chunk"]), output=str(opts["output"]) if opts.get("output") else None,
    )
    records = run_campaign(cfg, workers=int(opts["workers"]))
    path = _output(opts, "ser.csv")
    fmt = opts.get("format") or (path.suffix.lstrip(".") if path.suffix else "csv")
    emit_results(records, path, fmt, cfg)
    for r in records:
        flag = "  FLAGGED" if r.flagged else ""
        print(f"{r.detector:14s} snr={r.snr_db:6.2f} trials={r.trials:7d} errors={r.errors:7d} ser={r.ser:.3e}{flag}")
    if opts.get("compare"):
        rows = compare_to_se(cfg, records, samples=int(opts["samples"]))
        cols = list(rows[0]) if rows else ["detector"]
        _write_csv(path.with_name(path.stem + "_vs_se.csv"), cols, [[r[k] for k in cols] for r in rows])
    return path


def cmd_se(opts):
    c = _constellation(opts["constellation"])
    beta, n0 = _beta_n0(opts, c)
    tr = se_recursion(_spec(opts, c), beta, n0, tmax=int(opts["tmax"]))
    path = _write_csv(_output(opts, "se.csv"), ["t", "sigma2"],
                      [[t + 1, repr(float(s))] for t, s in enumerate(tr.sigma2)])
    print(f"fixed point sigma2* = {tr.fixed_point:.10g} (converged={tr.converged}, residual={tr.residual:.2e})")
    return path


def cmd_thresholds(opts):
    c = _constellation(opts["constellation"])
    rep = thresholds(_spec(opts, c), beta=opts.get("beta"), n0=opts.get("n0"), grid=tuple(opts["grid"]))
    path = _output(opts, "thresholds.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(rep.to_dict(), fh, indent=2)
    print(json.dumps(rep.to_dict(), indent=2))
    return path


def cmd_phase(opts):
    c = _constellation(opts["constellation"])
    spec = _spec(opts, c)
    table = psi_table(spec, tuple(opts["grid"]))
    base = thresholds(spec, table=table)
    rows = []
    for beta in opts["beta_points"]:
        rep = thresholds(spec, beta=beta, table=table)
        for n0 in opts["n0_points"]:
            regime = classify_regime(beta, n0, base.beta_min, base.beta_max, rep.n0_min, rep.n0_max)
            rows.append([beta, n0, regime, rep.n0_min, rep.n0_max])
    return _write_csv(_output(opts, "phase.csv"), ["beta", "n0", "regime", "n0_min", "n0_max"], rows)


def cmd_predict_ser(opts):
    c = _constellation(opts["constellation"])
    spec = _spec(opts, c)
    beta = opts["mt"] / opts["mr"]
    cfg = CampaignConfig(snr_start=opts["snr_start"], snr_stop=opts["snr_stop"], snr_step=opts["snr_step"])
    rows = []
    for snr in cfg.snr_points:
        n0 = snr_to_n0(snr, beta, c.energy)
        s2 = se_recursion(spec, beta, n0).fixed_point
        rows.append([snr, opts["evm_db"], n0, s2, predicted_ser(spec, beta, n0, c, sigma2=s2)])
    return _write_csv(_output(opts, "predict_ser.csv"),
                      ["snr_db", "evm_db", "n0", "sigma2", "predicted_ser"], rows)


def cmd_trace(opts):
    c = _constellation(opts["constellation"])
    system = SystemConfig.from_db(int(opts["mr"]), int(opts["mt"]), opts["snr_db"], opts["evm_db"], c,
                                  int(opts["seed"]))
    tmax = int(opts["tmax"])
    trials = int(opts["trials"])
    batch = sample_batch(system, [trial_rng(system.seed, 0, t) for t in range(trials)])
    se = se_recursion(_spec(opts, c), system.beta, system.n0, tmax=tmax)
    se_s2 = np.concatenate([se.sigma2, np.full(max(0, tmax - se.sigma2.size), se.fixed_point)])
    dets = opts["detector"]
    dets = [dets] if isinstance(dets, str) else list(dets)
    if "all" in dets:
        dets = list(DETECTORS)
    rows = []
    for name in dets:
        res = DETECTORS[name](batch.y, batch.h, system, tmax=tmax, record=True, raise_on_divergence=False)
        for t in range(res.iterations):
            tau = res.tau_trace[t]
            mse = float(np.mean(np.abs(res.z_trace[t] - batch.x) ** 2))
            rows.append([name, t + 1, float(np.mean(tau)), float(np.mean(system.n0 * (1 + tau))), mse,
                         float(se_s2[t])])
    return _write_csv(_output(opts, "trace.csv"),
                      ["detector", "t", "tau", "sigma2_postulated", "empirical_mse", "se_sigma2"], rows)


COMMANDS = {
    "ser": cmd_ser,
    "se": cmd_se,
    "thresholds": cmd_thresholds,
    "phase": cmd_phase,
    "predict-ser": cmd_predict_ser,
    "trace": cmd_trace,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    opts = resolve(args)
    path = COMMANDS[args.command](opts)
    print(f"wrote {path}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
