"""Batch experiments over many drops, written to CSV/JSON.

Run with ``python demos/05_experiment_sweeps.py [out_dir]``.
"""
# %%
import sys

from mimo_dscat import ExperimentSpec, NetworkConfig, run_power_sweep, run_se_validation

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
spec = ExperimentSpec(config=NetworkConfig(), M_list=(50, 100, 150), xi_list=(1.5, 1.75, 2.0),
                      n_drops=40, master_seed=7, out_dir=out, threads=2)

# %% SE distribution per antenna count (closed form only)
se = run_se_validation(spec)
for M, cdf in se.cdf_cf.items():
    print(f"M = {M}: mean SE {cdf.mean:.3f}, 10th percentile {cdf.quantile(0.1):.3f}")

# %% power control for three SE targets
res = run_power_sweep(spec)
for (xi, alg), (per_user, per_drop) in res.satisfied.items():
    print(f"xi = {xi}, algorithm {alg}: satisfied users {per_user:.2f}, "
          f"fully served drops {per_drop:.2f}, mean total power "
          f"{res.total_power(xi, alg).mean():.0f} mW")
print("files written to", out)
