"""Total uplink power minimization under SE targets.

The SINR constraint of user ``(l, k)`` is rewritten as ``p_lk >= I_lk(p)``
with the standard interference function ``I``; because every term of the
closed-form SINR is linear in the powers, ``I(p) = A p + b`` with
``A >= 0`` and ``b > 0`` elementwise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .spectral import SinrCoefficients

SATISFIED_RTOL = 1e-6


def sinr_target(xi, tau_c: int, tau_p: int, form: str = "exponent"):
    """SINR threshold equivalent to an SE target ``xi`` [b/s/Hz].

    ``form="exponent"`` evaluates ``2**(xi*tau_c/(tau_c - tau_p)) - 1``,
    ``form="prelog"`` evaluates ``2**(xi/(1 - tau_p/tau_c)) - 1``.  The two
    are algebraically identical; both are kept so the unit convention is
    explicit.
    """
    xi = np.asarray(xi, dtype=float)
    if form == "exponent":
        return 2.0 ** (xi * tau_c / (tau_c - tau_p)) - 1.0
    if form == "prelog":
        return 2.0 ** (xi / (1.0 - tau_p / tau_c)) - 1.0
    raise ValueError(f"unknown form {form!r}")


@dataclass(frozen=True)
class QoSTargets:
    xi: np.ndarray
    nu: np.ndarray

    @classmethod
    def from_se(cls, xi, config, form: str = "exponent") -> "QoSTargets":
        xi = np.broadcast_to(np.asarray(xi, dtype=float), (config.L, config.K)).copy()
        if np.any(xi <= 0):
            raise ValueError("SE targets must be positive")
        return cls(xi, sinr_target(xi, config.tau_c, config.tau_p, form))


class InterferenceFunction:
    """``I_lk(p) = nu_lk (NI_lk(p) + CI_lk(p) + NO_lk) / (z |tr(R Psi R)|^2)``.

    Evaluated synchronously on the whole power vector; powers are arrays
    of shape (L, K).
    """

    def __init__(self, coeffs: SinrCoefficients, targets: QoSTargets):
        self.coeffs = coeffs
        self.targets = targets
        scale = targets.nu / coeffs.gain
        L, K = scale.shape
        self.A = (scale[:, :, None, None] * coeffs.D).reshape(L * K, L * K)
        self.b = (scale * coeffs.noise).ravel()
        self.shape = (L, K)

    def __call__(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if np.any(p < 0):
            raise ValueError("powers must be non-negative")
        return (self.A @ p.ravel() + self.b).reshape(self.shape)

    def sinr(self, p) -> np.ndarray:
        return self.coeffs.sinr(p)

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def least_fixed_point(self) -> np.ndarray | None:
        """Solution of ``p = A p + b`` if ``rho(A) < 1``, else ``None``."""
        if self.spectral_radius() >= 1.0:
            return None
        n = self.A.shape[0]
        return np.linalg.solve(np.eye(n) - self.A, self.b).reshape(self.shape)


@dataclass
class PowerAllocation:
    p: np.ndarray
    satisfied: np.ndarray
    sinr: np.ndarray
    iterations: int
    converged: bool
    algorithm: int
    trace_total: list = field(default_factory=list)
    trace_p: np.ndarray | None = None

    @property
    def total_power(self) -> float:
        return float(self.p.sum())

    def to_json(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "p": self.p.tolist(),
            "satisfied": self.satisfied.tolist(),
            "sinr": self.sinr.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "trace_total": list(self.trace_total),
        }


def _update_alg1(Ip, p_max):
    return np.minimum(Ip, p_max)


def _update_alg2(Ip, p_max):
    return np.where(Ip <= p_max, Ip, p_max ** 2 / Ip)


UPDATE_RULES = {1: _update_alg1, 2: _update_alg2}


def fixed_point_iteration(interference: InterferenceFunction, p_max, algorithm: int = 1,
                          eps: float = 1e-3, max_iter: int = 10_000,
                          keep_powers: bool = True) -> PowerAllocation:
    """Run Algorithm 1 (cap at ``p_max``) or Algorithm 2 (``p_max^2 / I``).

    Starts from ``p(0) = p_max`` and stops when the relative change of the
    total power drops to ``eps``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    update = UPDATE_RULES[algorithm]
    p_max = np.asarray(p_max, dtype=float)
    p = p_max.copy()
    totals = [float(p.sum())]
    powers = [p.copy()] if keep_powers else None
    converged = False
    n = 0
    while n < max_iter:
        n += 1
        p_new = update(interference(p), p_max)
        totals.append(float(p_new.sum()))
        if keep_powers:
            powers.append(p_new.copy())
        gamma = abs(totals[-1] - totals[-2]) / totals[-2]
        p = p_new
        if gamma <= eps:
            converged = True
            break
    sinr = interference.sinr(p)
    nu = interference.targets.nu
    return PowerAllocation(
        p=p,
        satisfied=sinr >= nu * (1.0 - SATISFIED_RTOL),
        sinr=sinr,
        iterations=n,
        converged=converged,
        algorithm=algorithm,
        trace_total=totals,
        trace_p=np.asarray(powers) if keep_powers else None,
    )


def algorithm1_solve(coeffs: SinrCoefficients, targets: QoSTargets, p_max,
                     eps: float = 1e-3, max_iter: int = 10_000) -> PowerAllocation:
    """Spend maximum power on unsatisfied users."""
    return fixed_point_iteration(InterferenceFunction(coeffs, targets), p_max, 1, eps, max_iter)


def algorithm2_solve(coeffs: SinrCoefficients, targets: QoSTargets, p_max,
                     eps: float = 1e-3, max_iter: int = 10_000) -> PowerAllocation:
    """Softly remove unsatisfied users by backing off to ``p_max^2 / I``."""
    return fixed_point_iteration(InterferenceFunction(coeffs, targets), p_max, 2, eps, max_iter)


# -- verification -------------------------------------------------------------

@dataclass
class FeasibilityReport:
    constraints_met: np.ndarray
    within_box: bool
    tight: np.ndarray
    feasible_problem: bool
    optimal: bool
    total_power: float
    optimum: np.ndarray | None
    lp_optimum: np.ndarray | None = None
    brute_force: np.ndarray | None = None
    brute_force_step: float | None = None

    @property
    def candidate_feasible(self) -> bool:
        return bool(self.within_box and self.constraints_met.all())


def lp_solve(interference: InterferenceFunction, p_max) -> np.ndarray | None:
    """Solve the power-minimization LP with HiGHS; ``None`` if infeasible."""
    n = interference.A.shape[0]
    # rescale to mW-of-order-one units for the solver
    scale = float(np.max(p_max))
    res = linprog(np.ones(n), A_ub=interference.A - np.eye(n), b_ub=-interference.b / scale,
                  bounds=[(0.0, float(u) / scale) for u in np.ravel(p_max)],
                  method="highs", options={"primal_feasibility_tolerance": 1e-10,
                                            "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        return None
    return res.x.reshape(interference.shape) * scale


def brute_force_min_power(interference: InterferenceFunction, p_max, points: int = 21,
                          rounds: int = 12):
    """Grid search with refinement for the least-total-power feasible vector.

    Only for tiny instances (``L*K <= 6``).  Returns ``(p, step)`` where
    ``step`` is the final grid spacing, or ``(None, step)`` if no grid point
    is feasible.
    """
    p_max = np.asarray(p_max, dtype=float).ravel()
    n = p_max.size
    if n > 6:
        raise ValueError("brute force limited to L*K <= 6")
    lo, hi = np.zeros(n), p_max.copy()
    best = None
    step = None
    for _ in range(rounds):
        axes = [np.linspace(lo[i], hi[i], points) for i in range(n)]
        step = max((hi[i] - lo[i]) / (points - 1) for i in range(n))
        grid = np.array(list(itertools.product(*axes)))
        Ip = grid @ interference.A.T + interference.b
        ok = np.all(grid >= Ip, axis=1)
        if not ok.any():
            if best is None:
                return None, step
            break
        cand = grid[ok]
        best = cand[np.argmin(cand.sum(axis=1))]
        width = (hi - lo) / (points - 1)
        lo = np.maximum(best - 2 * width, 0.0)
        hi = np.minimum(best + 2 * width, p_max)
    return best.reshape(interference.shape), step


def check_feasibility_and_optimality(coeffs: SinrCoefficients, targets: QoSTargets, p_max,
                                     p_candidate, rtol: float = 1e-6,
                                     brute_force: bool | None = None,
                                     lp: bool = True) -> FeasibilityReport:
    """Check the SINR constraints at ``p_candidate`` and certify optimality.

    A feasible problem has a unique optimum: the least fixed point of
    ``p = I(p)``, at which every constraint is tight.  The candidate is
    declared optimal iff it lies in the box and meets every constraint
    with equality up to ``rtol``.
    """
    interference = InterferenceFunction(coeffs, targets)
    p = np.asarray(p_candidate, dtype=float)
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), p.shape)
    within_box = bool(np.all(p >= 0) and np.all(p <= p_max * (1 + 1e-12)))
    Ip = interference(p)
    met = p >= Ip * (1.0 - rtol)
    tight = np.abs(p - Ip) <= rtol * np.maximum(p, Ip)
    optimum = interference.least_fixed_point()
    feasible = optimum is not None and bool(np.all(optimum <= p_max * (1 + 1e-12)))
    if not feasible:
        optimum = None
    report = FeasibilityReport(
        constraints_met=met,
        within_box=within_box,
        tight=tight,
        feasible_problem=feasible,
        optimal=bool(feasible and within_box and tight.all()),
        total_power=float(p.sum()),
        optimum=optimum,
    )
    if lp:
        report.lp_optimum = lp_solve(interference, p_max)
    if brute_force is None:
        brute_force = p.size <= 6
    if brute_force:
        report.brute_force, report.brute_force_step = brute_force_min_power(interference, p_max)
    return report


def satisfied_probability(allocations) -> tuple[float, float]:
    """Fractions of (drop, user) pairs and of drops meeting their SE target.

    Returns ``(per_user, per_drop)``.
    """
    allocations = list(allocations)
    if not allocations:
        raise ValueError("need at least one solved drop")
    flags = [np.asarray(a.satisfied, dtype=bool) for a in allocations]
    per_user = float(np.mean(np.concatenate([f.ravel() for f in flags])))
    per_drop = float(np.mean([f.all() for f in flags]))
    return per_user, per_drop
