"""Command-line interface.

Every command requires an explicit --seed: silent nondeterminism is the main
reproducibility hazard in Monte Carlo tooling, so there is no implicit
random seed.  Re-running a command with identical flags writes byte-identical
data files (no timestamps, sorted JSON keys, fixed CSV column order).

Exit codes: 0 success, 1 runtime error (budget exhausted, no bracket,
failed check), 2 usage error.
"""

import argparse
import csv
import json
import sys
from dataclasses import asdict

from .balance import abelian_check
from .engine import KERNEL, BudgetExceeded, SimParams
from .experiments import (
    _TAG_INIT,
    InitialCondition,
    NoBracket,
    density_curve,
    estimate_tail,
    estimate_zeta_c,
    replica_seed,
    run_replica,
    sample_initial,
    single_particle_oracle,
    wilson_interval,
)
from .instructions import GENERATOR_ID, derive_seed
from .lattice import box

SCHEDULERS = ("fifo", "lifo", "random", "cycle")


def _float_grid(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty grid")
    return values


def _add_common(sp, *, replicas=None):
    sp.add_argument("--seed", type=int, required=True,
                    help="master seed (required; no implicit randomness)")
    sp.add_argument("--budget", type=int, default=10**9,
                    help="instruction cap per stabilization run")
    sp.add_argument("--scheduler", choices=SCHEDULERS, default="lifo")
    sp.add_argument("--out", metavar="PATH", help="data file destination")
    sp.add_argument("--format", choices=("csv", "json"), default="json",
                    dest="fmt", help="data file format")
    if replicas is not None:
        sp.add_argument("--replicas", type=int, default=replicas)


def build_parser():
    p = argparse.ArgumentParser(
        prog="arwsim",
        description="Activated random walk stabilization and experiments "
                    "on the box {-N..N}^2")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("stabilize", help="stabilize one configuration")
    sp.add_argument("-N", type=int, required=True, dest="N")
    sp.add_argument("--lambda", type=float, required=True, dest="lam")
    sp.add_argument("--init", required=True)
    sp.add_argument("--zeta", type=float)
    sp.add_argument("--fields", action="store_true",
                    help="emit per-site fields (csv format only)")
    _add_common(sp)

    sp = sub.add_parser("abelian-check",
                        help="compare scheduler policies on one run")
    sp.add_argument("-N", type=int, required=True, dest="N")
    sp.add_argument("--lambda", type=float, required=True, dest="lam")
    sp.add_argument("--init", required=True)
    sp.add_argument("--zeta", type=float)
    sp.add_argument("--policies", default="fifo,lifo,random,cycle")
    _add_common(sp)

    sp = sub.add_parser("tail", help="sleeping-particle tail probability")
    sp.add_argument("-N", type=int, required=True, dest="N")
    sp.add_argument("--lambda", type=float, required=True, dest="lam")
    sp.add_argument("--rho", type=float, required=True)
    sp.add_argument("--init", required=True)
    sp.add_argument("--zeta", type=float)
    _add_common(sp, replicas=1000)

    sp = sub.add_parser("curve", help="sleeping density over a grid")
    sp.add_argument("-N", type=int, required=True, dest="N")
    sp.add_argument("--lambda", type=_float_grid, required=True, dest="lam",
                    help="comma-separated sleep-rate grid")
    sp.add_argument("--zeta", type=_float_grid, required=True,
                    help="comma-separated density grid")
    _add_common(sp, replicas=200)

    sp = sub.add_parser("zeta-c", help="heuristic critical-density bracket")
    sp.add_argument("-N", type=int, required=True, dest="N")
    sp.add_argument("--lambda", type=float, required=True, dest="lam")
    sp.add_argument("--tolerance", type=float, default=0.02)
    _add_common(sp, replicas=100)

    sp = sub.add_parser("oracle-check",
                        help="single-particle sleep probability: Monte Carlo "
                             "against the linear-system value")
    sp.add_argument("-N", type=int, required=True, dest="N")
    sp.add_argument("--lambda", type=float, required=True, dest="lam")
    _add_common(sp, replicas=100_000)

    return p


def _validate(args, parser):
    lam = args.lam
    for v in lam if isinstance(lam, list) else [lam]:
        if v < 0:
            parser.error(f"--lambda must be >= 0, got {v}")
    if args.N < 0:
        parser.error(f"-N must be >= 0, got {args.N}")
    if getattr(args, "replicas", 1) < 1:
        parser.error("--replicas must be >= 1")
    if args.budget < 1:
        parser.error("--budget must be >= 1")
    if getattr(args, "rho", 1.0) <= 0:
        parser.error("--rho must be > 0")
    if getattr(args, "tolerance", 1.0) <= 0:
        parser.error("--tolerance must be > 0")
    if getattr(args, "fields", False) and args.fmt != "csv":
        parser.error("--fields requires --format csv")


def _parse_init(args, parser):
    kind = args.init
    if kind.startswith("file="):
        path = kind[len("file="):]
        try:
            with open(path, encoding="utf-8") as fh:
                triples = json.load(fh)
            sites = tuple((int(x), int(y), int(c)) for x, y, c in triples)
        except (OSError, ValueError, TypeError) as exc:
            parser.error(f"--init file {path!r}: {exc}")
        return InitialCondition("explicit", sites=sites)
    if kind not in ("full", "bernoulli", "poisson", "single"):
        parser.error(f"--init must be full, bernoulli, poisson, single or "
                     f"file=PATH, got {kind!r}")
    if kind in ("bernoulli", "poisson"):
        if args.zeta is None:
            parser.error(f"--init {kind} requires --zeta")
        try:
            return InitialCondition(kind, zeta=args.zeta)
        except ValueError as exc:
            parser.error(str(exc))
    return InitialCondition(kind)


def _echo(args, extra=None):
    """Params echo printed for every command and embedded in data files."""
    doc = {"command": args.command, "generator": GENERATOR_ID,
           "seed": args.seed}
    for name in ("N", "lam", "zeta", "rho", "replicas", "scheduler",
                 "budget", "tolerance", "init", "policies"):
        if hasattr(args, name):
            doc[name] = getattr(args, name)
    if extra:
        doc.update(extra)
    return doc


def _print_echo(echo):
    print("params " + json.dumps(echo, sort_keys=True))
    print(f"kernel {KERNEL}")


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _cmd_stabilize(args, parser):
    init = _parse_init(args, parser)
    echo = _echo(args, {"init": init.describe()})
    _print_echo(echo)
    params = SimParams(N=args.N, lam=args.lam, master_seed=args.seed,
                       init=init, scheduler=args.scheduler,
                       budget=args.budget)
    eta0, result = run_replica(params, 0)
    s = result.summary()
    print(f"S_total={s['sleepers']} Phi_total={s['exited']} "
          f"M_total={s['odometer_total']} instructions={s['instructions']}")
    if args.out:
        if args.fmt == "json":
            _write_json(args.out, {"params": echo, "results": s})
        else:
            b = result.box
            if args.fields:
                rows = [["site", x, y, int(result.final_config[i]),
                         int(result.odometer[i]), int(result.sleep_field[i]), ""]
                        for i, (x, y) in enumerate(b.sites)]
                rows += [["boundary", x, y, "", "", "",
                          int(result.exit_measure[j])]
                         for j, (x, y) in enumerate(b.boundary_sites)]
                _write_csv(args.out,
                           ["kind", "x", "y", "state", "odometer",
                            "sleeping", "phi"], rows)
            else:
                _write_csv(args.out, sorted(s),
                           [[s[k] for k in sorted(s)]])
    return 0


def _cmd_abelian(args, parser):
    init = _parse_init(args, parser)
    policies = tuple(p.strip() for p in args.policies.split(","))
    for p in policies:
        if p not in SCHEDULERS:
            parser.error(f"unknown policy {p!r}")
    echo = _echo(args, {"init": init.describe(), "policies": list(policies)})
    _print_echo(echo)
    seed0 = replica_seed(args.seed, 0)
    eta0 = sample_initial(init, box(args.N), derive_seed(seed0, _TAG_INIT))
    report = abelian_check(
        eta0, SimParams(N=args.N, lam=args.lam, master_seed=seed0,
                        budget=args.budget), policies)
    print("PASS" if report.passed else
          f"FAIL first divergence: {report.first_divergence}")
    if args.out:
        doc = {"params": echo, "pass": report.passed,
               "first_divergence": report.first_divergence}
        if args.fmt == "json":
            _write_json(args.out, doc)
        else:
            _write_csv(args.out, ["pass", "policies"],
                       [[int(report.passed), " ".join(policies)]])
    return 0 if report.passed else 1


def _cmd_tail(args, parser):
    init = _parse_init(args, parser)
    echo = _echo(args, {"init": init.describe()})
    _print_echo(echo)
    params = SimParams(N=args.N, lam=args.lam, master_seed=args.seed,
                       init=init, scheduler=args.scheduler,
                       budget=args.budget, replicas=args.replicas)
    est = estimate_tail(params, args.rho)
    chern = ("n/a (vacuous)" if est.chernoff_log_bound is None
             else repr(est.chernoff_log_bound))
    print(f"p_hat={est.p_hat!r} hits={est.hits}/{est.replicas} "
          f"wilson=[{est.wilson_lo!r}, {est.wilson_hi!r}] "
          f"chernoff_log_bound={chern}")
    if args.out:
        if args.fmt == "json":
            _write_json(args.out, {
                "params": echo,
                "results": {
                    "p_hat": est.p_hat, "hits": est.hits,
                    "replicas": est.replicas,
                    "wilson_lo": est.wilson_lo, "wilson_hi": est.wilson_hi,
                    "chernoff_log_bound": est.chernoff_log_bound,
                }})
        else:
            thresh = args.rho * box(args.N).n_sites
            _write_csv(args.out, ["replica", "sleepers", "hit"],
                       [[r, c, int(c >= thresh)]
                        for r, c in enumerate(est.sleeper_counts)])
    return 0


def _cmd_curve(args, parser):
    echo = _echo(args)
    _print_echo(echo)
    points = density_curve(args.lam, args.zeta, args.N, args.replicas,
                           args.seed, scheduler=args.scheduler,
                           budget=args.budget)
    for pt in points:
        print(f"lambda={pt.lam!r} zeta={pt.zeta!r} "
              f"mean_density={pt.mean_density!r} std_error={pt.std_error!r}")
    if args.out:
        if args.fmt == "json":
            _write_json(args.out, {
                "params": echo,
                "points": [asdict(pt) for pt in points]})
        else:
            _write_csv(args.out,
                       ["lambda", "zeta", "N", "replicas", "mean_density",
                        "std_error"],
                       [[pt.lam, pt.zeta, pt.N, pt.replicas,
                         pt.mean_density, pt.std_error] for pt in points])
    return 0


def _cmd_zeta_c(args, parser):
    echo = _echo(args)
    _print_echo(echo)
    try:
        est = estimate_zeta_c(args.lam, args.N, args.replicas,
                              args.tolerance, args.seed,
                              scheduler=args.scheduler, budget=args.budget)
    except NoBracket as exc:
        print(f"NO-BRACKET ({exc}) [HEURISTIC]")
        if args.out:
            _write_json(args.out, {"params": echo, "bracketed": False,
                                   "reason": str(exc),
                                   "evaluations": exc.evaluations,
                                   "label": "HEURISTIC"})
        return 1
    print(f"zeta_c in [{est.lo!r}, {est.hi!r}] midpoint={est.midpoint!r} "
          f"[{est.label}]")
    if args.out:
        if args.fmt == "json":
            _write_json(args.out, {
                "params": echo, "bracketed": True, "lo": est.lo,
                "hi": est.hi, "midpoint": est.midpoint, "label": est.label,
                "evaluations": list(est.evaluations)})
        else:
            _write_csv(args.out,
                       ["zeta", "retained_fraction", "particles", "sleepers"],
                       [[e["zeta"], e["retained_fraction"], e["particles"],
                         e["sleepers"]] for e in est.evaluations])
    return 0


def _cmd_oracle_check(args, parser):
    echo = _echo(args)
    _print_echo(echo)
    oracle = single_particle_oracle(args.lam, args.N)
    params = SimParams(N=args.N, lam=args.lam, master_seed=args.seed,
                       init=InitialCondition("single"),
                       scheduler=args.scheduler, budget=args.budget,
                       replicas=args.replicas)
    hits = 0
    for r in range(args.replicas):
        _, result = run_replica(params, r)
        hits += result.sleepers
    p_hat = hits / args.replicas
    sigma = (oracle * (1.0 - oracle) / args.replicas) ** 0.5
    z = 0.0 if sigma == 0.0 else (p_hat - oracle) / sigma
    passed = abs(p_hat - oracle) <= 3.0 * sigma
    lo, hi = wilson_interval(hits, args.replicas)
    print(f"oracle={oracle!r} p_hat={p_hat!r} z={z!r} "
          f"wilson=[{lo!r}, {hi!r}] {'PASS' if passed else 'FAIL'}")
    if args.out:
        _write_json(args.out, {
            "params": echo,
            "results": {"oracle": oracle, "p_hat": p_hat, "z": z,
                        "hits": hits, "pass": passed}})
    return 0 if passed else 1


_COMMANDS = {
    "stabilize": _cmd_stabilize,
    "abelian-check": _cmd_abelian,
    "tail": _cmd_tail,
    "curve": _cmd_curve,
    "zeta-c": _cmd_zeta_c,
    "oracle-check": _cmd_oracle_check,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(args, parser)
    try:
        return _COMMANDS[args.command](args, parser)
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
