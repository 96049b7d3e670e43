"""Command-line front end: ``condensate-ldp <command> [flags]``.

Every run resolves its parameters from the built-in defaults, then the
command-line flags, then ``--config`` (which wins). The resolved record is
written next to the output as ``<out>.config.json`` and can be passed back
through ``--config`` to reproduce the run byte for byte. Each output begins
with ``# config_hash=...`` (CSV) or carries ``config_hash`` (JSON).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from . import exactlaw, montecarlo, ratefn, zrp
from ._io import canonical_json, config_hash, render_csv, render_json
from .exceptions import ConfigurationError, DomainError, NoSolutionError, ResourceError
from .model import derive_params

EXIT_INPUT = 2
EXIT_RESOURCE = 3
THREADS_ENV = "CONDENSATE_LDP_THREADS"
# keys written to the manifest that do not affect results
MANIFEST_META = ("config_hash", "threads", "format")


def _int_list(text: str) -> list[int]:
    return [int(v) for v in str(text).split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


@dataclass(frozen=True)
class Field:
    name: str
    kind: Callable
    default: Any
    help: str
    flag: Optional[str] = None

    @property
    def option(self) -> str:
        return self.flag or "--" + self.name.replace("_", "-")


ALPHA = Field("alpha", float, 0.5, "tail exponent in (0, 1)")
SEED = Field("seed", int, 0, "64-bit seed")

FIELDS: dict[str, list[Field]] = {
    "thresholds": [ALPHA],
    "ratefn": [
        ALPHA,
        Field("s", float, 30.0, "rescaled excess"),
        Field("y_max", float, None, "largest y on the grid (default: s)"),
        Field("grid_step", float, None, "lattice spacing (default: budget-limited)"),
        Field("tol", float, 1e-9, "value-iteration sup-change tolerance"),
        Field("max_iter", int, 500, "value-iteration sweep limit"),
    ],
    "exact": [
        ALPHA,
        Field("s", float, 1.0, "rescaled excess"),
        Field("n", _int_list, [8], "comma-separated powers of two"),
        Field("task", str, "slope_sum", "slope_sum | slope_max | residual | max_cdf"),
        Field("window", _float_list, [0.0, 1.0], "y window lo,hi for slope_max"),
        Field("kappa", float, 1.0, "truncation level for residual"),
    ],
    "mc": [
        ALPHA,
        Field("s", float, 1.0, "rescaled excess"),
        Field("n", int, 64, "number of variables"),
        SEED,
        Field("kappa", float, 2.0, "truncation level in units of n^gamma"),
        Field("batches", int, 10, "independent batches"),
        Field("batch_size", int, 20000, "samples per batch"),
        Field("bins", _float_list, [], "max-histogram bin edges in units of n^gamma (empty: conditioned probability)"),
    ],
    "zrp": [
        ALPHA,
        Field("n", int, 3, "number of sites"),
        Field("n_particles", int, 6, "number of particles"),
        SEED,
        Field("task", str, "stationary", "stationary | run | condensation"),
        Field("topology", str, "complete", "complete | ring"),
        Field("initial", str, "uniform_spread", "uniform_spread | all_at_site_1 | comma-separated vector"),
        Field("run_length", int, 1_000_000, "jumps for the stationarity check"),
        Field("thin", int, 1, "record every thin-th visited state"),
        Field("max_jumps", int, 10_000, "jump budget for task=run"),
        Field("max_time", float, 1e4, "time horizon (run, condensation censoring)"),
        Field("observe_every", int, 100, "snapshot spacing in jumps for task=run"),
        Field("theta", float, 0.5, "condensate fraction of the excess"),
        Field("replicas", int, 16, "replicas for task=condensation"),
    ],
}


def _default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="condensate-ldp",
        description="Rate functions, exact and Monte-Carlo conditioned laws, and zero-range simulation.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fields in FIELDS.items():
        p = sub.add_parser(name, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        for f in fields:
            default = f.default
            if isinstance(default, list):
                default = ",".join(str(v) for v in default)
            p.add_argument(f.option, dest=f.name, type=str if f.kind in (_int_list, _float_list) else f.kind,
                           default=default, help=f.help)
        p.add_argument("--out", default=None, help="output path; stdout when omitted")
        p.add_argument("--format", choices=("csv", "json"), default="csv", help="output format")
        p.add_argument("--threads", type=int, default=_default_threads(),
                       help=f"worker threads (fallback: ${THREADS_ENV}); never changes results")
        p.add_argument("--config", default=None, help="JSON file whose fields override the flags; none when omitted")
        if name == "exact":
            p.add_argument("--oracle", action="store_true",
                           help="compare against full enumeration (n <= 4, testing only)")
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Merge flag values and the optional config file; reject unknown keys."""
    fields = {f.name: f for f in FIELDS[command]}
    cfg = {}
    for name, f in fields.items():
        v = getattr(args, name)
        if v is not None and f.kind in (_int_list, _float_list):
            v = f.kind(v)
        cfg[name] = v
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            extra = json.load(fh)
        if not isinstance(extra, dict):
            raise ConfigurationError("config file must hold a JSON object")
        extra = dict(extra)
        for meta in MANIFEST_META:
            extra.pop(meta, None)
        if extra.pop("command", command) != command:
            raise ConfigurationError("config file is for a different command")
        unknown = sorted(set(extra) - set(fields))
        if unknown:
            raise ConfigurationError(f"unknown config fields: {', '.join(unknown)}")
        for k, v in extra.items():
            f = fields[k]
            if v is None:
                cfg[k] = None
            elif f.kind in (_int_list, _float_list):
                cfg[k] = f.kind(",".join(map(str, v))) if isinstance(v, list) else f.kind(v)
            else:
                cfg[k] = f.kind(v)
    return {"command": command, **cfg}


# -- commands ---------------------------------------------------------------


def cmd_thresholds(cfg: dict, threads: int):
    p = derive_params(cfg["alpha"])
    th = ratefn.thresholds(p)
    rec = {
        "c": p.c,
        "mu": p.mu,
        "sigma2": p.sigma2,
        "gamma": p.gamma,
        "y_star": th.y_star,
        "s0": th.s0,
        "s1": th.s1,
        "s2": ratefn.s2(p),
    }
    return list(rec), [list(rec.values())], rec


def cmd_ratefn(cfg: dict, threads: int):
    p = derive_params(cfg["alpha"])
    s = cfg["s"]
    table = ratefn.f_table(p, s, y_max=cfg["y_max"], grid_step=cfg["grid_step"],
                           tol=cfg["tol"], max_iter=cfg["max_iter"])
    ys = table.y_grid[table.y_grid <= s]
    f = table.row(s)[: len(ys)]
    gv = ratefn.g(p, s, ys)
    gaps = ratefn.gap_set(p, s)
    flag = np.zeros(len(ys), dtype=bool)
    for lo, hi in gaps:
        flag |= (ys > lo) & (ys < hi)
    rows = [[s, y, fv, gv_, bool(fl)] for y, fv, gv_, fl in zip(ys, f, gv, flag)]
    lan = ratefn.landscape(p, s)
    payload = {
        "thresholds": dict(ratefn.thresholds(p)._asdict(), s2=ratefn.s2(p)),
        "critical_points": {"y1": lan.y1, "y2": lan.y2, "y0": lan.y0},
        "gap_set": [list(iv) for iv in gaps],
        "iterations": table.iterations,
        "grid_step": table.grid_step,
        "rows": rows,
    }
    return ["s", "y", "f", "g", "gap_flag"], rows, payload


def cmd_exact(cfg: dict, threads: int, oracle: bool = False):
    p = derive_params(cfg["alpha"])
    s, ns = cfg["s"], cfg["n"]
    if oracle:
        return _exact_oracle(p, ns)
    task = cfg["task"]
    if task == "slope_sum":
        rep = exactlaw.ldp_slope_sum(p, s, ns, threads)
    elif task == "slope_max":
        lo, hi = cfg["window"]
        rep = exactlaw.ldp_slope_max(p, s, (lo, hi), ns, threads)
    elif task == "residual":
        vals = exactlaw.normal_residual(p, s, cfg["kappa"], ns)
        rows = [[n, v] for n, v in zip(ns, vals)]
        return ["n", "residual_ratio"], rows, {"rows": rows}
    elif task == "max_cdf":
        rows = []
        for n in ns:
            N, _ = exactlaw.lattice_target(p, s, n)
            single, tie = exactlaw.max_law_decomposition(p, n, N)
            rows += [[n, N, m, a, b] for m, (a, b) in enumerate(zip(single, tie))]
        return ["n", "N", "m", "p_single", "p_tie"], rows, {"rows": rows}
    else:
        raise ConfigurationError(f"unknown exact task {task!r}")
    rows = [list(r) for r in rep.rows()]
    payload = {"prediction": rep.limit_prediction, "targets": rep.targets,
               "log_probs": rep.log_probs, "rows": rows}
    return ["n", "slope", "prediction", "residual_ratio"], rows, payload


def _exact_oracle(p, ns):
    rows = []
    for n in ns:
        if n > 4:
            raise ConfigurationError("oracle comparison needs n <= 4")
        N_max = 12
        law = exactlaw.sum_law(p, n, N_max)
        brute = exactlaw.brute_force_law(p, n, N_max)
        tot = np.zeros(N_max + 1)
        for tup, pr in brute.items():
            tot[sum(tup)] += pr
        for N in range(N_max + 1):
            conv = law.prob(N)
            rows.append([n, N, conv, tot[N], abs(conv - tot[N]) / tot[N]])
    return ["n", "N", "convolution", "enumeration", "rel_err"], rows, {"rows": rows}


def cmd_mc(cfg: dict, threads: int):
    p = derive_params(cfg["alpha"])
    n, s, kappa, seed = cfg["n"], cfg["s"], cfg["kappa"], cfg["seed"]
    header = ["bin", "estimate", "SE", "hits", "seed"]
    if cfg["bins"]:
        h = montecarlo.mc_max_histogram(p, n, s, kappa, cfg["bins"], seed,
                                        cfg["batches"], cfg["batch_size"], threads)
        rows = [[f"[{float(lo)!r},{float(hi)!r})", pr, se, int(k), seed]
                for lo, hi, pr, se, k in zip(h.edges[:-1], h.edges[1:], h.probabilities,
                                             h.standard_errors, h.hits)]
        return header, rows, {"N": h.N, "rows": rows}
    sampler = montecarlo.build_sampler(p, n, s, kappa, seed)
    N, _ = exactlaw.lattice_target(p, s, n)
    est = montecarlo.estimate_conditioned(sampler, n, N, cfg["batches"], cfg["batch_size"], threads)
    exact = exactlaw.log_sum_prob(p, n, N, sampler.cutoff)
    rows = [["all", est.log_probability, est.standard_error_log, est.hit_count, seed, exact]]
    payload = {"N": N, "cutoff": sampler.cutoff, "tilt": sampler.t, "rows": rows}
    return header + ["exact"], rows, payload


def _zrp_config(cfg: dict) -> zrp.ZrpConfig:
    init = cfg["initial"]
    if init not in ("uniform_spread", "all_at_site_1"):
        init = tuple(_int_list(init))
    return zrp.ZrpConfig(cfg["n"], cfg["n_particles"], cfg["alpha"], cfg["topology"], cfg["seed"], init)


def cmd_zrp(cfg: dict, threads: int):
    zc = _zrp_config(cfg)
    task = cfg["task"]
    if task == "stationary":
        rep = zrp.stationary_check(zc, cfg["run_length"], cfg["thin"])
        rows = [[" ".join(map(str, st)), e, m] for st, e, m in zip(rep.states, rep.exact, rep.empirical)]
        payload = {"tv": rep.tv, "jumps": rep.jumps, "samples": rep.n_samples,
                   "detailed_balance": zrp.detailed_balance_residual(zc), "rows": rows}
        rows = rows + [["TV", rep.tv, rep.tv]]
        return ["state", "exact", "empirical"], rows, payload
    if task == "run":
        res = zrp.run(zc, max_time=cfg["max_time"], max_jumps=cfg["max_jumps"],
                      observe_every=cfg["observe_every"])
        rows = [[j, t, " ".join(map(str, occ)), cfg["seed"]] for j, t, occ in res.samples]
        payload = {"elapsed": res.elapsed, "jumps": res.jumps,
                   "final": res.final.occupations, "rows": rows}
        return ["jump", "time", "occupations", "seed"], rows, payload
    if task == "condensation":
        h = zrp.condensation_time(zc, cfg["theta"], cfg["replicas"], cfg["max_time"], threads)
        rows = [[r, t, bool(c), cfg["seed"]] for r, (t, c) in enumerate(zip(h.times, h.censored))]
        payload = {"threshold": h.threshold, "median": h.median, "mean": h.mean,
                   "censored_fraction": h.censored_fraction, "rows": rows}
        return ["replica", "time", "censored", "seed"], rows, payload
    raise ConfigurationError(f"unknown zrp task {task!r}")


COMMANDS = {
    "thresholds": cmd_thresholds,
    "ratefn": cmd_ratefn,
    "exact": cmd_exact,
    "mc": cmd_mc,
    "zrp": cmd_zrp,
}


def _write(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        chash = config_hash(cfg)
        fn = COMMANDS[args.command]
        if args.command == "exact":
            header, rows, payload = fn(cfg, args.threads, oracle=args.oracle)
        else:
            header, rows, payload = fn(cfg, args.threads)
    except (DomainError, ConfigurationError, NoSolutionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ResourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    if args.format == "csv":
        text = render_csv(header, rows, chash)
    else:
        text = render_json(payload, cfg, chash)
    _write(text, args.out)
    if args.out is not None:
        manifest = dict(cfg, config_hash=chash, threads=args.threads, format=args.format)
        _write(canonical_json(manifest) + "\n", args.out + ".config.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
