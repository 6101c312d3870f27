"""Command-line entry point ``mimo-dscat``.

Exit codes: 0 on success, 1 on invalid input or a module error, 2 when a
result invariant is violated.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .channel import network_statistics
from .config import ConfigError, NetworkConfig, load_config
from .estimation import EstimationContext, assign_pilots
from .harness import (CdfSeries, DropError, ExperimentSpec, InvariantViolation, run_power_sweep,
                      run_se_validation)
from .power import (InterferenceFunction, QoSTargets, check_feasibility_and_optimality,
                    fixed_point_iteration)
from .spectral import SinrCoefficients

log = logging.getLogger("mimo_dscat")


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _config(args) -> NetworkConfig:
    cfg = load_config(args.config) if args.config else NetworkConfig()
    if getattr(args, "M", None) is not None:
        cfg = cfg.with_(M=args.M)
    return cfg


def cmd_validate_se(args) -> int:
    cfg = _config(args)
    spec = ExperimentSpec(config=cfg, M_list=(cfg.M,), n_drops=args.drops,
                          n_mc_trials=args.trials, master_seed=args.seed,
                          out_dir=args.out, threads=args.threads)
    res = run_se_validation(spec)
    if args.trials:
        err = res.rel_errors(cfg.M)
        frac = float(np.mean(err <= 0.03))
        print(f"M={cfg.M}: mean SE {res.cdf_cf[cfg.M].mean:.4f} (closed form), "
              f"{res.cdf_mc[cfg.M].mean:.4f} (Monte-Carlo); "
              f"{100 * frac:.1f}% of users within 3%")
    else:
        print(f"M={cfg.M}: mean SE {res.cdf_cf[cfg.M].mean:.4f} (closed form)")
    return 0


def cmd_optimize(args) -> int:
    cfg = _config(args)
    _, stats = network_statistics(cfg, args.seed)
    coeffs = SinrCoefficients(EstimationContext(stats, assign_pilots(cfg), cfg))
    targets = QoSTargets.from_se(args.xi, cfg)
    alloc = fixed_point_iteration(InterferenceFunction(coeffs, targets), cfg.p_max,
                                  args.algorithm, args.eps, args.max_iter)
    report = check_feasibility_and_optimality(coeffs, targets, cfg.p_max, alloc.p,
                                              rtol=args.rtol, brute_force=False, lp=False)
    if not report.within_box or not np.all(np.isfinite(alloc.p)):
        raise InvariantViolation("power allocation outside [0, P_max]")
    result = {
        "p*": alloc.p.tolist(),
        "satisfied": alloc.satisfied.tolist(),
        "iterations": alloc.iterations,
        "converged": alloc.converged,
        "total_power": alloc.total_power,
        "feasible_problem": report.feasible_problem,
        "optimal": report.optimal,
        "trace": alloc.trace_total,
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "optimize.json", "w") as fh:
        json.dump(result, fh, indent=2)
    L, K = alloc.p.shape
    with open(out / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "total_power"] + [f"p_{l}_{k}" for l in range(L) for k in range(K)])
        for n, (tot, p) in enumerate(zip(alloc.trace_total, alloc.trace_p)):
            w.writerow([n, repr(tot)] + [repr(float(x)) for x in p.ravel()])
    print(f"algorithm {args.algorithm}: total power {alloc.total_power:.3f} mW, "
          f"{int(alloc.satisfied.sum())}/{alloc.satisfied.size} users satisfied, "
          f"{alloc.iterations} iterations" + ("" if alloc.converged else " (not converged)"))
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    spec = ExperimentSpec(config=cfg, xi_list=args.xi, algorithms=args.algorithms,
                          n_drops=args.drops, master_seed=args.seed, out_dir=args.out,
                          threads=args.threads, eps=args.eps, max_iter=args.max_iter)
    res = run_power_sweep(spec)
    for (xi, alg), (pu, pd) in res.satisfied.items():
        print(f"xi={xi} alg={alg}: satisfied per user {pu:.3f}, per drop {pd:.3f}, "
              f"feasible drops {int(res.feasible[xi].sum())}/{spec.n_drops}, "
              f"not converged {res.nonconverged[(xi, alg)]}")
    for cdf in list(res.cdf_feasible.values()) + list(res.cdf_infeasible.values()):
        _check_cdf(cdf)
    return 0


def _check_cdf(cdf: CdfSeries) -> None:
    if cdf.values.size and (np.any(np.diff(cdf.values) < 0) or cdf.fractions[-1] != 1.0):
        raise InvariantViolation(f"malformed CDF {cdf.label}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimo-dscat", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON network configuration")
        p.add_argument("--M", type=int, help="override the number of BS antennas")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="out")

    p = sub.add_parser("validate-se", help="closed-form vs Monte-Carlo SE at full power")
    common(p)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--drops", type=int, default=1)
    p.set_defaults(func=cmd_validate_se)

    p = sub.add_parser("optimize", help="minimize total power for one drop")
    common(p)
    p.add_argument("--xi", type=float, required=True, help="SE target [b/s/Hz]")
    p.add_argument("--algorithm", type=int, choices=(1, 2), default=1)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--rtol", type=float, default=1e-6)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", help="power control over many drops and SE targets")
    common(p)
    p.add_argument("--xi", type=_float_list, default=(1.5, 1.75, 2.0))
    p.add_argument("--algorithms", type=_int_list, default=(1, 2))
    p.add_argument("--drops", type=int, default=200)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int, default=10_000)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 2
    except DropError as exc:
        if isinstance(exc.__cause__, InvariantViolation):
            print(f"invariant violated: {exc}", file=sys.stderr)
            return 2
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
