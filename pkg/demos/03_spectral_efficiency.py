"""Closed-form SE against simulation, and the effect of more antennas.

Run with ``python demos/03_spectral_efficiency.py`` (about a minute).
"""
# %%
import numpy as np

from mimo_dscat import (EstimationContext, NetworkConfig, SinrCoefficients, assign_pilots,
                        monte_carlo_sinr, network_statistics, spectral_efficiency)

cfg = NetworkConfig(M=50)
_, st = network_statistics(cfg, seed=5)
plan = assign_pilots(cfg)
ctx = EstimationContext(st, plan, cfg)

# %% full power for everybody
p = cfg.p_max
cf = SinrCoefficients(ctx).sinr(p)
mc = monte_carlo_sinr(st, plan, cfg, p, n_trials=10_000, seed=0, ctx=ctx).sinr
print("closed-form SE [b/s/Hz]:\n", spectral_efficiency(cf, cfg).se.round(3))
print("relative SINR gap to simulation:\n", np.abs(mc / cf - 1).round(4))

# %% terms of the SINR for one user
t = SinrCoefficients(ctx).terms(p)
print("user (0, 0): signal %.3g, non-coherent %.3g, coherent %.3g, noise %.3g"
      % (t.signal[0, 0], t.NI[0, 0], t.CI[0, 0], t.NO[0, 0]))

# %% array gain: same drop, more antennas
for M in (50, 100, 150):
    c = cfg.with_(M=M)
    _, s = network_statistics(c, seed=5)
    se = spectral_efficiency(SinrCoefficients(EstimationContext(s, plan, c)).sinr(p), c).se
    print(f"M = {M}: mean SE {se.mean():.3f} b/s/Hz")
