import json

import numpy as np
import pytest

from mimo_dscat.channel import (ChannelSampler, NetworkStatistics, exponential_corr,
                                local_scattering_corr, network_statistics)
from mimo_dscat.config import NetworkConfig
from mimo_dscat.estimation import (EstimationContext, PilotError, PilotPlan, assign_pilots,
                                   lmmse_estimate, processed_pilot_signal)

from conftest import sample_cov


def contaminated_cells(M=4, beta_own=1e-10, beta_cross=2e-11, S=21):
    """Four cells, one user each, all on the same pilot; correlated BS-side matrices."""
    cfg = NetworkConfig(L=4, K=1, M=M, tau_p=1, S=S)
    angles = np.random.default_rng(42).uniform(-1.2, 1.2, (4, 4))  # [bs, cell]
    beta = np.where(np.eye(4, dtype=bool), beta_own, beta_cross)[:, :, None]
    R = np.empty((4, 4, 1, M, M), dtype=complex)
    for lb, l in np.ndindex(4, 4):
        R[lb, l, 0] = local_scattering_corr(M, angles[lb, l], 10.0)
    Rt = np.broadcast_to(exponential_corr(S, 0.5), (4, 4, 1, S, S)).copy()
    return NetworkStatistics.from_arrays(beta, R, Rt), cfg


# -- pilot plans --------------------------------------------------------------

def test_default_reuse_sets():
    plan = assign_pilots(NetworkConfig())
    # second user of the first cell shares its pilot with the second user of every cell
    assert sorted(plan.reuse_set(0, 1)) == [(0, 1), (1, 1), (2, 1), (3, 1)]
    assert np.array_equal(plan.pilot_index, np.tile(np.arange(5), (4, 1)))


def test_single_cell_has_no_contamination():
    plan = assign_pilots(NetworkConfig(L=1))
    for k in range(5):
        assert plan.reuse_set(0, k) == [(0, k)]


def test_reuse_sets_partition_users():
    rng = np.random.default_rng(0)
    for _ in range(20):
        idx = np.array([rng.permutation(7)[:5] for _ in range(4)])
        plan = PilotPlan(idx, 7)
        groups = plan.groups()
        members = sorted(u for g in groups.values() for u in g)
        assert members == [(l, k) for l in range(4) for k in range(5)]
        assert len(groups) <= 7
        for (l, k) in members:
            rs = plan.reuse_set(l, k)
            assert (l, k) in rs
            assert all(plan.pilot_index[u] == plan.pilot_index[l, k] for u in rs)
            assert plan.shares_pilot[l, k].sum() == len(rs)


def test_pilot_plan_errors():
    with pytest.raises(PilotError):
        assign_pilots(NetworkConfig(tau_p=4))
    with pytest.raises(PilotError):
        PilotPlan(np.array([[0, 0, 1]]), 3)
    with pytest.raises(PilotError):
        PilotPlan(np.array([[0, 3]]), 3)


# -- processed pilot signal ---------------------------------------------------

def test_processed_signal_matches_full_pilot_matrix():
    cfg = NetworkConfig(M=6)
    _, st = network_statistics(cfg, 2)
    plan = assign_pilots(cfg)
    rng = np.random.default_rng(0)
    h = ChannelSampler(st).draw(rng, 1)[0]  # (L, L, K, M)
    tau_p = cfg.tau_p
    # orthogonal pilot book: DFT columns with unit-modulus entries
    phi = np.exp(-2j * np.pi * np.outer(np.arange(tau_p), np.arange(tau_p)) / tau_p)
    N = np.sqrt(cfg.sigma2 / 2) * (rng.standard_normal((cfg.L, cfg.M, tau_p))
                                   + 1j * rng.standard_normal((cfg.L, cfg.M, tau_p)))
    y_full = np.empty((cfg.L, tau_p, cfg.M), dtype=complex)
    for lb in range(cfg.L):
        Y = N[lb].copy()
        for l in range(cfg.L):
            for k in range(cfg.K):
                Y += np.sqrt(cfg.hat_p[l, k]) * np.outer(h[lb, l, k], phi[:, plan.pilot_index[l, k]])
        y_full[lb] = (Y @ phi.conj()).T
    noise = np.stack([(N[lb] @ phi.conj()).T for lb in range(cfg.L)])
    y = processed_pilot_signal(h, plan, cfg, noise=noise)
    assert np.allclose(y, y_full, rtol=1e-12, atol=1e-12 * np.abs(y_full).max())


def test_processed_signal_single_user_noiseless():
    cfg = NetworkConfig(L=1, K=1, M=3, tau_p=1)
    h = np.arange(1, 4, dtype=complex)[None, None, None]
    y = processed_pilot_signal(h, assign_pilots(cfg), cfg, noise=np.zeros((1, 1, 3)))
    assert np.allclose(y[0, 0], np.sqrt(200.0) * h[0, 0, 0])


def test_processed_noise_covariance():
    cfg = NetworkConfig(L=1, K=1, M=4, tau_p=3)
    n = 100_000
    h = np.zeros((n, 1, 1, 1, 4), dtype=complex)
    y = processed_pilot_signal(h, assign_pilots(cfg), cfg, rng=0)
    C = sample_cov(y[:, 0, 0])
    scale = cfg.sigma2 * cfg.tau_p
    assert np.abs(C - scale * np.eye(4)).max() <= 0.02 * scale


# -- LMMSE --------------------------------------------------------------------

def test_scalar_lmmse_for_identity_statistics():
    cfg = NetworkConfig(L=1, K=1, M=5, tau_p=1)
    beta = 4e-12
    st = NetworkStatistics.uncorrelated(np.full((1, 1, 1), beta), 5, 21)
    ctx = EstimationContext(st, assign_pilots(cfg), cfg)
    y = np.random.default_rng(0).standard_normal((1, 1, 5)) * 1e-4 + 0j
    gain = cfg.pilot_power * beta * cfg.tau_p
    expected = gain / (gain + cfg.sigma2) * y[0, 0] / (np.sqrt(cfg.pilot_power) * cfg.tau_p)
    assert np.allclose(lmmse_estimate(y, ctx)[0, 0, 0], expected, rtol=1e-12)


def test_estimate_shrinks_under_heavy_noise():
    cfg = NetworkConfig(L=1, K=1, M=4, tau_p=1)
    st = NetworkStatistics.uncorrelated(np.full((1, 1, 1), 1e-12), 4, 21)
    y = np.ones((1, 1, 4), dtype=complex)
    norms = []
    for noise_dbm in (-96.0, -40.0, 20.0):
        c = cfg.with_(noise_power_dbm=noise_dbm)
        norms.append(np.abs(lmmse_estimate(y, EstimationContext(st, assign_pilots(c), c))).max())
    assert norms[0] > norms[1] > norms[2]
    assert norms[2] / norms[0] < 1e-8


def test_psi_is_inverse():
    cfg = NetworkConfig(M=12)
    _, st = network_statistics(cfg, 0)
    ctx = EstimationContext(st, assign_pilots(cfg), cfg)
    eye = np.eye(12)
    for lb in range(cfg.L):
        for t in range(cfg.tau_p):
            P = ctx.psi_inv[lb, t]
            assert np.linalg.norm(P @ ctx.Psi[lb, t] - eye) <= 1e-8


def test_estimate_covariance_is_dominated_by_channel_covariance():
    cfg = NetworkConfig(M=12)
    _, st = network_statistics(cfg, 1)
    ctx = EstimationContext(st, assign_pilots(cfg), cfg)
    for idx in np.ndindex(st.shape):
        C = ctx.est_cov[idx]
        full = st.beta[idx] * st.d[idx] * st.R[idx]
        scale = st.beta[idx]
        assert np.linalg.eigvalsh(C / scale).min() >= -1e-8
        assert np.linalg.eigvalsh((full - C) / scale).min() >= -1e-8


def test_contamination_symmetry():
    cfg = NetworkConfig(M=8)
    _, st = network_statistics(cfg, 4)
    # give users (1, 2) and (3, 2) identical statistics towards BS 0
    beta = st.beta.copy()
    R = st.R.copy()
    beta[0, 3, 2] = beta[0, 1, 2]
    R[0, 3, 2] = R[0, 1, 2]
    st2 = NetworkStatistics(beta, R, st.R_tilde, st.S, st.d)
    ctx = EstimationContext(st2, assign_pilots(cfg), cfg)
    assert np.allclose(ctx.est_cov[0, 1, 2], ctx.est_cov[0, 3, 2], rtol=1e-12, atol=0)


def _estimation_draws(stats, cfg, n, seed):
    plan = assign_pilots(cfg)
    ctx = EstimationContext(stats, plan, cfg)
    rng = np.random.default_rng(seed)
    h = ChannelSampler(stats).draw(rng, n)
    y = processed_pilot_signal(h, plan, cfg, rng=rng)
    return h, lmmse_estimate(y, ctx), ctx


def test_estimate_covariance_formula():
    stats, cfg = contaminated_cells()
    n = 100_000
    h, hh, ctx = _estimation_draws(stats, cfg, n, 0)
    for lb, l in np.ndindex(4, 4):
        C_emp = sample_cov(hh[:, lb, l, 0])
        C = ctx.est_cov[lb, l, 0]
        assert np.all(np.abs(C_emp - C) <= 0.02 * np.abs(C))


def test_orthogonality_principle():
    stats, cfg = contaminated_cells()
    n = 100_000
    h, hh, _ = _estimation_draws(stats, cfg, n, 1)
    for lb, l in np.ndindex(4, 4):
        e = h[:, lb, l, 0] - hh[:, lb, l, 0]
        cross = e.T @ hh[:, lb, l, 0].conj() / n
        scale = stats.beta[lb, l, 0] * stats.d[lb, l, 0] * np.abs(stats.R[lb, l, 0]).max()
        assert np.abs(cross).max() <= 5 * n ** -0.5 * scale


def test_context_json_dump():
    cfg = NetworkConfig(M=3)
    _, st = network_statistics(cfg, 0)
    ctx = EstimationContext(st, assign_pilots(cfg), cfg)
    data = json.loads(json.dumps(ctx.to_json()))
    assert data["tau_p"] == 5
    Psi = np.array(data["Psi"][0]) + 1j * np.array(data["Psi"][1])
    assert np.allclose(Psi, ctx.Psi)
