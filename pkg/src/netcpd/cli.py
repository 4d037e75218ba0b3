"""Command-line interface: ``netcpd simulate | detect | evaluate | gof``.

Every command writes plain CSV/JSON files. Exit status is 0 on success,
1 on a runtime failure and 2 on bad usage or invalid input.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import decoder as dec
from .admm import AdmmConfig, read_matrix_csv, write_diagnostics_csv, write_matrix_csv
from .evaluation import interval_holdout_score, metric_row, write_holdout_csv, write_metrics_csv
from .graphs import (GraphFormatError, degree_histogram, esp_histogram, load_graph_sequence,
                     save_graph_sequence, validate_change_points)
from .langevin import LangevinConfig, stream
from .localization import LocalizationConfig, detect, write_magnitudes_csv
from .selection import refit_and_pick, select_lambda, write_cv_csv
from .simulation import GeneratorSpec, SbmSpec, simulate_generator, simulate_sbm, write_truth

log = logging.getLogger("netcpd")


class UsageError(Exception):
    """Invalid flags or inputs (exit status 2)."""


# defaults for tunables that may also come from --config
DETECT_DEFAULTS = {
    "method": "data_driven", "q": 0.9, "alpha": 0.01, "m": None,
    "eps_spc": 5, "eps_end": 5, "lam": None, "grid": None, "repeats": 3,
    "iterations": 50, "decoder_steps": 20, "bcd_sweeps": 20, "lr": 0.01, "kappa": 10.0,
    "tol": 1e-5, "patience": 5, "latent_dim": 10, "rank": 5, "hidden": 64,
    "step_size": 0.5, "langevin_steps": 30, "samples": 200, "loglik_samples": None,
}
GRIDS = {"data_driven": (10.0, 20.0, 50.0, 100.0), "gamma": (5.0, 10.0, 20.0, 50.0)}


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def resolve_seed(flag):
    if flag is not None:
        return flag
    env = os.environ.get("NETCPD_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"NETCPD_SEED must be an integer, got {env!r}")


def merged_options(args, defaults):
    """Flags override the JSON config file, which overrides built-in defaults."""
    cfg = {}
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(cfg) - set(defaults) - {"seed"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else cfg.get(key, default)
    if args.seed is None and "seed" in cfg:
        args.seed = int(cfg["seed"])
    return out


def _write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_graphs(path):
    if not Path(path).is_file():
        raise UsageError(f"input file not found: {path}")
    return load_graph_sequence(path)


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args):
    seed = resolve_seed(args.seed)
    T = args.T
    cps = args.change_points
    if cps is None:
        cps = [round(T * j / 4) + 1 for j in (1, 2, 3)] if T >= 8 else []
    if T < 2:
        raise UsageError("--T must be at least 2")
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    try:
        cps = validate_change_points(cps, T)
        if args.scenario == "sbm":
            spec = SbmSpec(n=args.n, T=T, change_points=tuple(cps), rho=args.rho,
                           directed=not args.undirected, seed=seed)
            g, truth = simulate_sbm(spec)
        else:
            spec = GeneratorSpec(n=args.n, T=T, change_points=tuple(cps),
                                 latent_dim=args.latent_dim, directed=not args.undirected,
                                 seed=seed)
            g, truth = simulate_generator(spec)
    except ValueError as exc:
        raise UsageError(str(exc))
    out = _out_dir(args.out)
    save_graph_sequence(g, out / f"{args.name}.json")
    write_truth(truth, out / f"{args.name}_truth.json")
    log.info("wrote %s and its truth sidecar", out / f"{args.name}.json")
    return 0


# ---------------------------------------------------------------------------
# detect

def build_configs(opts, seed):
    s = opts["samples"]
    lang = LangevinConfig(step_size=opts["step_size"], n_steps=opts["langevin_steps"],
                          n_samples=s, seed=seed)
    admm_cfg = AdmmConfig(lam=opts["lam"] if opts["lam"] is not None else 50.0,
                          kappa=opts["kappa"], n_iter=opts["iterations"],
                          decoder_steps=opts["decoder_steps"], bcd_sweeps=opts["bcd_sweeps"],
                          lr=opts["lr"], tol=opts["tol"], patience=opts["patience"],
                          latent_dim=opts["latent_dim"], rank=opts["rank"],
                          hidden=opts["hidden"], langevin=lang,
                          loglik_samples=opts["loglik_samples"] or s, seed=seed)
    loc_cfg = LocalizationConfig(method=opts["method"], alpha=opts["alpha"], m=opts["m"],
                                 q=opts["q"], eps_spc=opts["eps_spc"], eps_end=opts["eps_end"],
                                 seed=seed)
    return admm_cfg, loc_cfg


def cmd_detect(args):
    opts = merged_options(args, DETECT_DEFAULTS)
    seed = resolve_seed(args.seed)
    g = _load_graphs(args.input)
    try:
        admm_cfg, loc_cfg = build_configs(opts, seed)
    except ValueError as exc:
        raise UsageError(str(exc))
    if g.T < 3:
        raise UsageError("detection needs at least 3 graphs")
    out = _out_dir(args.out)
    lam = opts["lam"]
    if lam is None:
        grid = opts["grid"] or GRIDS[loc_cfg.method]
        log.info("cross-validating lambda over %s", list(grid))
        lam, scores = select_lambda(g, grid, admm_cfg, n_jobs=args.threads)
        write_cv_csv(scores, lam, out / "cv.csv")
    log.info("refitting with lambda=%g, %d repeats", lam, opts["repeats"])
    result, covs = refit_and_pick(g, lam, admm_cfg, repeats=opts["repeats"])
    found = detect(result.mu, loc_cfg)
    write_matrix_csv(result.mu, out / "mu.csv")
    write_magnitudes_csv(found, out / "magnitudes.csv")
    write_diagnostics_csv(result, out / "diagnostics.csv")
    dec.save_decoder(result.params, out / "decoder.json")
    _write_json({"change_points": [int(p) for p in found.points], "T": g.T,
                 "lambda": float(lam), "method": loc_cfg.method, "seed": seed,
                 "refit_cov": [float(c) for c in covs], "converged": bool(result.converged)},
                out / "change_points.json")
    print(json.dumps({"change_points": [int(p) for p in found.points]}))
    return 0


# ---------------------------------------------------------------------------
# evaluate

def _read_points(path):
    if not Path(path).is_file():
        raise UsageError(f"file not found: {path}")
    try:
        doc = json.loads(Path(path).read_text())
        return [int(c) for c in doc["change_points"]], doc.get("T")
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise UsageError(f"{path}: expected a JSON object with 'change_points' ({exc})")


def cmd_evaluate(args):
    det, det_T = _read_points(args.detected)
    graphs = _load_graphs(args.graphs) if args.graphs else None
    T = args.T or det_T or (graphs.T if graphs is not None else None)
    if T is None:
        raise UsageError("series length unknown: pass --T or --graphs")
    for name, other in (("--T", args.T), ("detected file", det_T),
                        ("graphs", graphs.T if graphs is not None else None)):
        if other is not None and other != T:
            raise UsageError(f"mismatched T: {name} has {other}, expected {T}")
    truth = None
    if args.truth:
        truth, truth_T = _read_points(args.truth)
        if truth_T is not None and truth_T != T:
            raise UsageError(f"mismatched T: truth has {truth_T}, expected {T}")
    try:
        validate_change_points(det, T)
        if truth is not None:
            validate_change_points(truth, T)
    except ValueError as exc:
        raise UsageError(f"mismatched T: {exc}")
    out = _out_dir(args.out)
    if args.dcsbm:
        if graphs is None:
            raise UsageError("--dcsbm needs --graphs")
        candidates = [("detected", det), ("no_change", [])]
        if truth is not None:
            candidates.insert(1, ("truth", truth))
        rows = []
        for gap in args.gap:
            try:
                for name, pts in candidates:
                    rows.append((gap, name, interval_holdout_score(graphs, pts, gap).total))
            except ValueError as exc:
                raise UsageError(str(exc))
        write_holdout_csv(rows, out / "holdout.csv")
    if truth is not None:
        write_metrics_csv([metric_row(truth, det, T)], out / "metrics.csv")
    elif not args.dcsbm:
        raise UsageError("nothing to evaluate: pass --truth and/or --dcsbm")
    return 0


# ---------------------------------------------------------------------------
# goodness of fit

def _histogram_rows(observed, generated):
    """Rows ``(value, observed, mean, q05, q95)`` over the common support."""
    size = max(len(observed), max(len(h) for h in generated))
    obs = np.zeros(size)
    obs[:len(observed)] = observed
    gen = np.zeros((len(generated), size))
    for i, h in enumerate(generated):
        gen[i, :len(h)] = h
    lo, hi = np.quantile(gen, [0.05, 0.95], axis=0)
    return [(v, int(obs[v]), float(gen[:, v].mean()), float(lo[v]), float(hi[v]))
            for v in range(size)]


def _write_hist(path, blocks):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "value", "observed", "generated_mean", "generated_q05",
                    "generated_q95"])
        for kind, rows in blocks:
            for v, o, m, lo, hi in rows:
                w.writerow([kind, v, o, repr(m), repr(lo), repr(hi)])


def cmd_gof(args):
    g = _load_graphs(args.input)
    model = Path(args.model)
    try:
        params = dec.load_decoder(model / "decoder.json")
        mu = read_matrix_csv(model / "mu.csv")
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load model from {model}: {exc}")
    if mu.shape[0] != g.T or params.n != g.n or params.directed != g.directed:
        raise UsageError("model does not match the graph sequence")
    if args.samples < 1:
        raise UsageError("--samples must be at least 1")
    for t in args.times:
        if not 1 <= t <= g.T:
            raise UsageError(f"time {t} out of range 1..{g.T}")
    seed = resolve_seed(args.seed)
    out = _out_dir(args.out)
    for t in args.times:
        rng = stream(seed, 4, t)
        z = mu[t - 1] + rng.standard_normal((args.samples, mu.shape[1]))
        sims = dec.sample_graphs(params, z, rng)
        obs = g[t]
        if g.directed:
            o_out, o_in = degree_histogram(obs, True)
            gen = [degree_histogram(y, True) for y in sims]
            blocks = [("out", _histogram_rows(o_out, [h[0] for h in gen])),
                      ("in", _histogram_rows(o_in, [h[1] for h in gen]))]
        else:
            blocks = [("all", _histogram_rows(degree_histogram(obs, False),
                                              [degree_histogram(y, False) for y in sims]))]
        _write_hist(out / f"degree_t{t}.csv", blocks)
        _write_hist(out / f"esp_t{t}.csv",
                    [("esp", _histogram_rows(esp_histogram(obs), [esp_histogram(y) for y in sims]))])
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netcpd",
                                description="Change-point detection for dynamic networks "
                                            "with a learned latent-space prior.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None,
                        help="random seed (default: $NETCPD_SEED, else 0)")
        sp.add_argument("--out", default=".", help="output directory (default: current)")

    s = sub.add_parser("simulate", help="generate a synthetic graph sequence")
    common(s)
    s.add_argument("--scenario", choices=["sbm", "generator"], required=True)
    s.add_argument("--n", type=int, default=50, help="number of nodes")
    s.add_argument("--T", type=int, default=100, help="number of time points")
    s.add_argument("--change-points", type=_int_list, default=None,
                   help="comma-separated change points (default: quarters of T)")
    s.add_argument("--rho", type=float, default=0.5, help="edge persistence (sbm)")
    s.add_argument("--latent-dim", type=int, default=10, help="latent dimension (generator)")
    s.add_argument("--undirected", action="store_true")
    s.add_argument("--name", default="graphs", help="output file stem")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("detect", help="fit the model and declare change points")
    common(d)
    d.add_argument("--input", required=True, help="graph-sequence JSON file")
    d.add_argument("--config", help="JSON file of option values; flags take precedence")
    d.add_argument("--threads", type=int, default=1, help="parallel workers for cross-validation")
    d.add_argument("--method", choices=["data_driven", "gamma"], default=None)
    d.add_argument("--q", type=float, default=None, help="normal quantile level (data_driven)")
    d.add_argument("--alpha", type=float, default=None, help="level (gamma)")
    d.add_argument("--m", type=int, default=None, help="Monte Carlo draws (gamma)")
    d.add_argument("--eps-spc", type=int, default=None, help="minimum spacing")
    d.add_argument("--eps-end", type=int, default=None, help="endpoint trim")
    d.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="fusion strength; skips cross-validation")
    d.add_argument("--grid", type=_float_list, default=None, help="lambda grid for CV")
    d.add_argument("--repeats", type=int, default=None, help="refits on the full series")
    d.add_argument("--iterations", type=int, default=None, help="outer ADMM iterations")
    d.add_argument("--decoder-steps", type=int, default=None)
    d.add_argument("--bcd-sweeps", type=int, default=None)
    d.add_argument("--lr", type=float, default=None, help="Adam learning rate")
    d.add_argument("--kappa", type=float, default=None, help="initial ADMM penalty")
    d.add_argument("--tol", type=float, default=None)
    d.add_argument("--patience", type=int, default=None)
    d.add_argument("--latent-dim", type=int, default=None)
    d.add_argument("--rank", type=int, default=None)
    d.add_argument("--hidden", type=int, default=None)
    d.add_argument("--step-size", type=float, default=None, help="Langevin step size")
    d.add_argument("--langevin-steps", type=int, default=None)
    d.add_argument("--samples", type=int, default=None, help="posterior samples per time point")
    d.add_argument("--loglik-samples", type=int, default=None)
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("evaluate", help="score detections against truth or held-out graphs")
    common(e)
    e.add_argument("--detected", required=True, help="change-point JSON from detect")
    e.add_argument("--truth", help="truth JSON ({'change_points': [...]})")
    e.add_argument("--graphs", help="graph-sequence JSON (needed for --dcsbm)")
    e.add_argument("--T", type=int, default=None, help="series length")
    e.add_argument("--dcsbm", action="store_true", help="held-out block-model scores")
    e.add_argument("--gap", type=_int_list, default=[6], help="holdout spacing(s)")
    e.set_defaults(func=cmd_evaluate)

    f = sub.add_parser("gof", help="degree and shared-partner histograms, observed vs generated")
    common(f)
    f.add_argument("--input", required=True, help="graph-sequence JSON file")
    f.add_argument("--model", required=True, help="directory written by detect")
    f.add_argument("--times", type=_int_list, required=True, help="comma-separated times")
    f.add_argument("--samples", type=int, default=200, help="generated graphs per time")
    f.set_defaults(func=cmd_gof)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, GraphFormatError) as exc:
        print(f"netcpd {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (FloatingPointError, RuntimeError, ValueError, OSError) as exc:
        print(f"netcpd {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
