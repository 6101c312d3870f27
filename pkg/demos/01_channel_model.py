"""Drop a network and look at double-scattering channels.

Run with ``python demos/01_channel_model.py``.
"""
# %%
import numpy as np
from scipy import stats

from mimo_dscat import NetworkConfig, network_statistics
from mimo_dscat.channel import ChannelSampler, NetworkStatistics

cfg = NetworkConfig()
geo, st = network_statistics(cfg, seed=1)

# %% geometry: 4 cells of 500 m, users at least 35 m from their BS
own = np.arange(cfg.L)
print("BS positions [m]:\n", geo.bs_positions)
print("serving distances [m]:\n", geo.distances[own, own].round(1))

# %% large-scale fading towards the serving BS, in dB
print("serving beta [dB]:\n", (10 * np.log10(st.beta[own, own])).round(1))

# %% BS-side correlation: eigenvalue spread of a 100-antenna array
w = np.linalg.eigvalsh(st.R[0, 0, 0])[::-1]
print("largest eigenvalues of R:", w[:12].round(2))
print("effective rank (tr^2 / tr(R^2)):", round(w.sum() ** 2 / (w ** 2).sum(), 1))

# %% finite scatterer counts make the channel heavy-tailed
for S in (1, 21, 500):
    link = NetworkStatistics.uncorrelated(np.ones((1, 1, 1)), 8, S)
    h = ChannelSampler(link).draw(np.random.default_rng(S), 50_000)[:, 0, 0, 0]
    kurt = stats.kurtosis(h.real.ravel(), fisher=False)
    print(f"S = {S:3d}: kurtosis of Re(h) = {kurt:.3f} (double scattering: {3 * (1 + 1 / S):.3f})")
