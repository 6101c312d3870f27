"""LMMSE estimation with pilots reused in every cell.

Run with ``python demos/02_channel_estimation.py``.
"""
# %%
import numpy as np

from mimo_dscat import EstimationContext, NetworkConfig, assign_pilots, network_statistics
from mimo_dscat.channel import ChannelSampler
from mimo_dscat.estimation import lmmse_estimate, processed_pilot_signal

cfg = NetworkConfig(M=32)
_, st = network_statistics(cfg, seed=3)
plan = assign_pilots(cfg)
ctx = EstimationContext(st, plan, cfg)
print("users sharing the pilot of user 0 in cell 0:", plan.reuse_set(0, 0))

# %% draw channels and pilot noise, then estimate every channel at every BS
rng = np.random.default_rng(0)
h = ChannelSampler(st).draw(rng, 2000)
y = processed_pilot_signal(h, plan, cfg, rng=rng)
h_hat = lmmse_estimate(y, ctx)

# %% normalized MSE of the own-cell channels; contamination keeps it above zero
own = np.arange(cfg.L)
err = np.sum(np.abs(h - h_hat) ** 2, axis=-1).mean(axis=0)
power = np.sum(np.abs(h) ** 2, axis=-1).mean(axis=0)
print("NMSE per user [dB]:\n", (10 * np.log10(err / power))[own, own].round(1))

# %% the estimation error is uncorrelated with the estimate
cross = np.einsum("ni,nj->ij", h[:, 0, 0, 0] - h_hat[:, 0, 0, 0], h_hat[:, 0, 0, 0].conj()) / 2000
print("max |E{(h - h_hat) h_hat^H}| / beta:", np.abs(cross).max() / st.beta[0, 0, 0])
