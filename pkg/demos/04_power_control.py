"""Minimum total power for an SE target, with and without congestion.

Run with ``python demos/04_power_control.py``.
"""
# %%
import numpy as np

from mimo_dscat import (EstimationContext, NetworkConfig, QoSTargets, SinrCoefficients,
                        algorithm1_solve, algorithm2_solve, assign_pilots,
                        check_feasibility_and_optimality, network_statistics)

cfg = NetworkConfig()
_, st = network_statistics(cfg, seed=0)
co = SinrCoefficients(EstimationContext(st, assign_pilots(cfg), cfg))

# %% a modest target that every user can meet
targets = QoSTargets.from_se(0.5, cfg)
a1 = algorithm1_solve(co, targets, cfg.p_max, eps=1e-10)
rep = check_feasibility_and_optimality(co, targets, cfg.p_max, a1.p)
print(f"xi = 0.5: total {a1.total_power:.2f} mW after {a1.iterations} iterations, "
      f"all satisfied {a1.satisfied.all()}, optimal {rep.optimal}")
print("gap to the LP solution:", np.abs(rep.lp_optimum - a1.p).max(), "mW")

# %% a demanding target: the network is congested
targets = QoSTargets.from_se(2.0, cfg)
a1 = algorithm1_solve(co, targets, cfg.p_max)
a2 = algorithm2_solve(co, targets, cfg.p_max)
for a in (a1, a2):
    print(f"algorithm {a.algorithm}: total {a.total_power:.1f} mW, "
          f"{int(a.satisfied.sum())}/20 satisfied, "
          f"unsatisfied users at {np.round(a.p[~a.satisfied], 1).tolist()} mW")

# %% total power along the iterations
print("algorithm 1 trace:", np.round(a1.trace_total[:8], 1).tolist(), "...")
print("algorithm 2 trace:", np.round(a2.trace_total[:8], 1).tolist(), "...")
