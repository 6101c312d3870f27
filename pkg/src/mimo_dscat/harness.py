"""Batch experiments over random network drops.

Every drop gets its own seed derived from the master seed and the drop
counter, so results are reproducible regardless of how many worker
threads run the drops.  Aggregation always follows drop order.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import network_statistics
from .config import NetworkConfig
from .estimation import EstimationContext, assign_pilots
from .power import (InterferenceFunction, PowerAllocation, QoSTargets, fixed_point_iteration,
                    satisfied_probability)
from .spectral import SinrCoefficients, monte_carlo_moments, spectral_efficiency

log = logging.getLogger(__name__)

ORDERING_NOTE = (
    "Absolute SE and power levels depend on the covariance model; "
    "only orderings between sweep points are meaningful."
)


class DropError(RuntimeError):
    """A module error raised while processing a specific drop."""


class InvariantViolation(RuntimeError):
    pass


def drop_seed(master_seed: int, index: int) -> int:
    """64-bit seed of drop ``index``, derived by counter."""
    state = np.random.SeedSequence(master_seed, spawn_key=(index,)).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


@dataclass(frozen=True)
class CdfSeries:
    values: np.ndarray
    fractions: np.ndarray
    label: str = ""

    @classmethod
    def from_samples(cls, samples, label: str = "") -> "CdfSeries":
        values = np.sort(np.asarray(samples, dtype=float).ravel())
        n = values.size
        return cls(values, np.arange(1, n + 1) / n, label)

    @property
    def mean(self) -> float:
        return float(self.values.mean()) if self.values.size else float("nan")

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.values, q))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["value", "cum_fraction"])
            for v, f in zip(self.values, self.fractions):
                w.writerow([repr(float(v)), repr(float(f))])


@dataclass
class ExperimentSpec:
    config: NetworkConfig = field(default_factory=NetworkConfig)
    M_list: tuple = (50, 100, 150)
    xi_list: tuple = (1.5, 1.75, 2.0)
    algorithms: tuple = (1, 2)
    n_drops: int = 200
    n_mc_trials: int = 0
    master_seed: int = 0
    out_dir: str | Path | None = None
    threads: int = 1
    eps: float = 1e-3
    max_iter: int = 10_000

    def __post_init__(self):
        if self.n_drops < 1:
            raise ValueError("n_drops must be >= 1")
        for name in ("M_list", "xi_list", "algorithms"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must be non-empty")
        if any(a not in (1, 2) for a in self.algorithms):
            raise ValueError("algorithms must be 1 and/or 2")
        if self.n_mc_trials < 0:
            raise ValueError("n_mc_trials must be >= 0")


def _map_drops(fn, n: int, threads: int):
    def guarded(i):
        try:
            return fn(i)
        except Exception as exc:  # attach the drop index
            raise DropError(f"drop {i}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(guarded, range(n)))
    return [guarded(i) for i in range(n)]


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


# -- SE validation ------------------------------------------------------------

SE_COLUMNS = ["M", "drop", "drop_seed", "cell", "user",
              "sinr_cf", "sinr_mc", "se_cf", "se_mc", "rel_err"]


@dataclass
class SeValidationResult:
    cdf_cf: dict
    cdf_mc: dict
    rows: list

    def rel_errors(self, M: int) -> np.ndarray:
        return np.array([r[-1] for r in self.rows if r[0] == M and r[-1] != ""], dtype=float)


def _se_drop(spec: ExperimentSpec, M: int, i: int):
    cfg = spec.config.with_(M=M)
    seed = drop_seed(spec.master_seed, i)
    _, stats = network_statistics(cfg, seed)
    plan = assign_pilots(cfg)
    ctx = EstimationContext(stats, plan, cfg)
    p = cfg.p_max
    sinr_cf = SinrCoefficients(ctx).sinr(p)
    se_cf = spectral_efficiency(sinr_cf, cfg).se
    if spec.n_mc_trials:
        moments = monte_carlo_moments(stats, plan, cfg, spec.n_mc_trials,
                                      seed=[seed, M], ctx=ctx)
        sinr_mc = moments.terms(p, cfg.sigma2, plan).sinr
        se_mc = spectral_efficiency(sinr_mc, cfg).se
    else:
        sinr_mc = se_mc = None
    if not np.all(np.isfinite(sinr_cf)) or np.any(sinr_cf < 0):
        raise InvariantViolation(f"drop {i}: invalid closed-form SINR")
    rows = []
    for (l, k), s in np.ndenumerate(sinr_cf):
        if sinr_mc is None:
            mc = ["", "", ""]
        else:
            mc = [float(sinr_mc[l, k]), float(se_mc[l, k]), float(abs(sinr_mc[l, k] - s) / s)]
        rows.append([M, i, seed, l, k, float(s), mc[0], float(se_cf[l, k]), mc[1], mc[2]])
    return se_cf, se_mc, rows


def run_se_validation(spec: ExperimentSpec) -> SeValidationResult:
    """Full-power SE per user by the closed form (and Monte-Carlo if requested)."""
    cdf_cf, cdf_mc, rows = {}, {}, []
    for M in spec.M_list:
        drops = _map_drops(lambda i: _se_drop(spec, M, i), spec.n_drops, spec.threads)
        cdf_cf[M] = CdfSeries.from_samples(np.concatenate([d[0].ravel() for d in drops]),
                                           f"closed-form M={M}")
        if spec.n_mc_trials:
            cdf_mc[M] = CdfSeries.from_samples(np.concatenate([d[1].ravel() for d in drops]),
                                               f"monte-carlo M={M}")
        for d in drops:
            rows.extend(d[2])
        log.info("M=%d: mean SE %.3f b/s/Hz", M, cdf_cf[M].mean)
    result = SeValidationResult(cdf_cf, cdf_mc, rows)
    if spec.out_dir is not None:
        out = Path(spec.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / "se_validation.csv", SE_COLUMNS, rows)
        for M, cdf in cdf_cf.items():
            cdf.write_csv(out / f"cdf_se_M{M}_cf.csv")
        for M, cdf in cdf_mc.items():
            cdf.write_csv(out / f"cdf_se_M{M}_mc.csv")
        meta = {
            "experiment": "se_validation",
            "master_seed": spec.master_seed,
            "n_drops": spec.n_drops,
            "n_mc_trials": spec.n_mc_trials,
            "M_list": list(spec.M_list),
            "mean_se_cf": {str(M): c.mean for M, c in cdf_cf.items()},
            "mean_se_mc": {str(M): c.mean for M, c in cdf_mc.items()},
            "config": spec.config.to_dict(),
            "note": ORDERING_NOTE,
        }
        with open(out / "se_validation.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
    return result


# -- power control sweep ------------------------------------------------------

POWER_COLUMNS = ["xi", "algorithm", "drop", "drop_seed", "cell", "user", "p",
                 "satisfied", "feasible_drop", "converged", "iterations"]


@dataclass
class PowerSweepResult:
    allocations: dict  # (xi, alg) -> list[PowerAllocation] in drop order
    feasible: dict  # xi -> bool array over drops (Algorithm 1 classification)
    cdf_feasible: dict  # (xi, alg) -> CdfSeries of per-user power
    cdf_infeasible: dict
    satisfied: dict  # (xi, alg) -> (per_user, per_drop)
    nonconverged: dict  # (xi, alg) -> count
    rows: list

    def total_power(self, xi, alg) -> np.ndarray:
        return np.array([a.total_power for a in self.allocations[(xi, alg)]])


def _check_allocation(a: PowerAllocation, p_max, i: int) -> None:
    if np.any(a.p < 0) or np.any(a.p > p_max * (1 + 1e-12)):
        raise InvariantViolation(f"drop {i}: power outside [0, P_max]")
    if a.trace_p is not None and (np.any(a.trace_p < 0)
                                  or np.any(a.trace_p > p_max * (1 + 1e-12))):
        raise InvariantViolation(f"drop {i}: iterate outside [0, P_max]")


def _power_drop(spec: ExperimentSpec, M: int, i: int):
    cfg = spec.config.with_(M=M)
    seed = drop_seed(spec.master_seed, i)
    _, stats = network_statistics(cfg, seed)
    coeffs = SinrCoefficients(EstimationContext(stats, assign_pilots(cfg), cfg))
    out = {}
    # algorithm 1 always runs: it classifies drops as feasible
    algs = sorted(set(spec.algorithms) | {1})
    for xi in spec.xi_list:
        interference = InterferenceFunction(coeffs, QoSTargets.from_se(xi, cfg))
        for alg in algs:
            a = fixed_point_iteration(interference, cfg.p_max, alg, spec.eps, spec.max_iter)
            _check_allocation(a, cfg.p_max, i)
            a.trace_p = None
            out[(xi, alg)] = a
    return seed, out


def run_power_sweep(spec: ExperimentSpec, M: int | None = None) -> PowerSweepResult:
    """Solve every drop for every SE target with each algorithm.

    A drop is feasible for a target iff Algorithm 1's fixed point meets
    every constraint.  Non-converged runs are excluded from the CDFs and
    counted separately.
    """
    M = spec.config.M if M is None else M
    drops = _map_drops(lambda i: _power_drop(spec, M, i), spec.n_drops, spec.threads)
    allocations, feasible, cdf_f, cdf_inf, sat, noncv, rows = {}, {}, {}, {}, {}, {}, []
    for xi in spec.xi_list:
        feas = np.array([d[1][(xi, 1)].satisfied.all() for d in drops])
        feasible[xi] = feas
        for alg in spec.algorithms:
            allocs = [d[1][(xi, alg)] for d in drops]
            allocations[(xi, alg)] = allocs
            ok = np.array([a.converged for a in allocs])
            noncv[(xi, alg)] = int((~ok).sum())
            cdf_f[(xi, alg)] = CdfSeries.from_samples(
                [a.p for a, f, c in zip(allocs, feas, ok) if f and c] or np.empty(0),
                f"feasible xi={xi} alg={alg}")
            cdf_inf[(xi, alg)] = CdfSeries.from_samples(
                [a.p for a, f, c in zip(allocs, feas, ok) if not f and c] or np.empty(0),
                f"infeasible xi={xi} alg={alg}")
            sat[(xi, alg)] = satisfied_probability(allocs)
            for i, ((seed, _), a) in enumerate(zip(drops, allocs)):
                for (l, k), p in np.ndenumerate(a.p):
                    rows.append([float(xi), alg, i, seed, l, k, float(p),
                                 int(a.satisfied[l, k]), int(feas[i]), int(a.converged),
                                 a.iterations])
    result = PowerSweepResult(allocations, feasible, cdf_f, cdf_inf, sat, noncv, rows)
    if spec.out_dir is not None:
        _write_power_outputs(spec, M, result)
    return result


def _write_power_outputs(spec: ExperimentSpec, M: int, res: PowerSweepResult) -> None:
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "power_samples.csv", POWER_COLUMNS, res.rows)
    for (xi, alg), cdf in res.cdf_feasible.items():
        cdf.write_csv(out / f"cdf_power_xi{xi}_alg{alg}_feasible.csv")
    for (xi, alg), cdf in res.cdf_infeasible.items():
        cdf.write_csv(out / f"cdf_power_xi{xi}_alg{alg}_infeasible.csv")
    sat_rows = []
    for (xi, alg), (pu, pd) in res.satisfied.items():
        sat_rows.append([float(xi), alg, pu, pd, int(res.feasible[xi].sum()),
                         res.nonconverged[(xi, alg)]])
    _write_rows(out / "satisfied_probability.csv",
                ["xi", "algorithm", "per_user", "per_drop", "feasible_drops", "nonconverged"],
                sat_rows)
    meta = {
        "experiment": "power_sweep",
        "M": M,
        "master_seed": spec.master_seed,
        "n_drops": spec.n_drops,
        "xi_list": list(spec.xi_list),
        "algorithms": list(spec.algorithms),
        "eps": spec.eps,
        "feasible_drops": {str(xi): int(f.sum()) for xi, f in res.feasible.items()},
        "nonconverged": {f"{xi}/{alg}": n for (xi, alg), n in res.nonconverged.items()},
        "config": spec.config.to_dict(),
        "note": ORDERING_NOTE,
    }
    with open(out / "sweep.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
