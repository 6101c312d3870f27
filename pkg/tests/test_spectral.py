import numpy as np
import pytest

from mimo_dscat.channel import (NetworkStatistics, exponential_corr, local_scattering_corr,
                                network_statistics)
from mimo_dscat.config import NetworkConfig
from mimo_dscat.estimation import EstimationContext, assign_pilots
from mimo_dscat.spectral import (SinrCoefficients, closed_form_sinr, monte_carlo_moments,
                                 monte_carlo_sinr, spectral_efficiency)


def drop_coefficients(seed, M=16, **kw):
    cfg = NetworkConfig(M=M, **kw)
    _, st = network_statistics(cfg, seed)
    ctx = EstimationContext(st, assign_pilots(cfg), cfg)
    return cfg, st, ctx, SinrCoefficients(ctx)


def shared_pilot_cells(L=4, M=8, S=3, rt_scale=1.0, seed=0):
    """One user per cell on a common pilot; returns (config, stats)."""
    cfg = NetworkConfig(L=L, K=1, M=M, tau_p=1, S=S)
    ang = np.random.default_rng(seed).uniform(-1, 1, (L, L))
    beta = np.where(np.eye(L, dtype=bool), 1e-10, 3e-11)[:, :, None]
    R = np.empty((L, L, 1, M, M), dtype=complex)
    for lb, l in np.ndindex(L, L):
        R[lb, l, 0] = local_scattering_corr(M, ang[lb, l], 10.0)
    Rt = np.broadcast_to(rt_scale * exponential_corr(S, 0.5), (L, L, 1, S, S)).copy()
    return cfg, NetworkStatistics.from_arrays(beta, R, Rt)


# -- closed form --------------------------------------------------------------

def test_zero_power_gives_zero_se():
    cfg, st, ctx, co = drop_coefficients(0)
    sinr = co.sinr(np.zeros((4, 5)))
    assert np.all(sinr == 0)
    assert np.all(spectral_efficiency(sinr, cfg).se == 0)


def test_terms_positive_and_finite():
    cfg, st, ctx, co = drop_coefficients(1)
    t = co.terms(cfg.p_max)
    for term in (t.signal, t.NI, t.CI, t.NO):
        assert np.all(term > 0)
    assert np.all(np.isfinite(t.sinr))


def test_single_user_keeps_only_self_coherent_terms():
    cfg = NetworkConfig(L=1, K=2, M=8, tau_p=2)
    _, st = network_statistics(cfg, 0)
    co = SinrCoefficients(EstimationContext(st, assign_pilots(cfg), cfg))
    assert co.ci[0, 0, 0, 0] > 0 and co.ci[0, 1, 0, 1] > 0
    assert co.ci[0, 0, 0, 1] == 0 and co.ci[0, 1, 0, 0] == 0


def test_doubling_power_raises_every_sinr():
    cfg, st, ctx, co = drop_coefficients(2)
    p = np.random.default_rng(0).uniform(1, 200, (4, 5))
    a, b = co.terms(p), co.terms(2 * p)
    assert np.all(b.sinr > a.sinr)
    assert np.array_equal(a.NO, b.NO)
    assert np.allclose(b.NI, 2 * a.NI) and np.allclose(b.CI, 2 * a.CI)


def test_sinr_monotone_in_own_and_other_powers():
    rng = np.random.default_rng(3)
    for seed in range(5):
        cfg, st, ctx, co = drop_coefficients(seed)
        for _ in range(20):
            p = rng.uniform(0.1, 200, (4, 5))
            l, k = rng.integers(4), rng.integers(5)
            up = p.copy()
            up[l, k] *= rng.uniform(1.01, 3)
            before, after = co.sinr(p), co.sinr(up)
            assert after[l, k] > before[l, k]
            others = np.ones((4, 5), dtype=bool)
            others[l, k] = False
            assert np.all(after[others] <= before[others] * (1 + 1e-12))


def test_negative_power_rejected():
    cfg, st, ctx, co = drop_coefficients(0, M=4)
    with pytest.raises(ValueError):
        co.terms(-np.ones((4, 5)))


def test_closed_form_requires_matching_context():
    cfg, st, ctx, co = drop_coefficients(0, M=4)
    _, other = network_statistics(cfg, 9)
    with pytest.raises(ValueError):
        closed_form_sinr(other, ctx, cfg.p_max)
    assert np.allclose(closed_form_sinr(st, ctx, cfg.p_max).sinr, co.sinr(cfg.p_max))


def test_array_gain_for_every_user():
    for seed in range(4):
        se = []
        for M in (50, 150):
            cfg, st, ctx, co = drop_coefficients(seed, M=M)
            se.append(spectral_efficiency(co.sinr(cfg.p_max), cfg).se)
        assert np.all(se[1] > se[0])


def test_coherent_interference_scatterer_term_decays_as_inverse_S():
    # R_tilde = I: the scatterer-dependent part of CI is proportional to 1/S
    ci = []
    for S in (21, 210, 2100):
        cfg = NetworkConfig(L=1, K=1, M=8, tau_p=1)
        R = local_scattering_corr(8, 0.3, 10.0)[None, None, None]
        st = NetworkStatistics.from_arrays(np.full((1, 1, 1), 1e-10), R,
                                           np.eye(S, dtype=complex)[None, None, None])
        ci.append(SinrCoefficients(EstimationContext(st, assign_pilots(cfg), cfg)).ci[0, 0, 0, 0])
    ratio = (ci[0] - ci[1]) / (ci[1] - ci[2])
    assert ratio == pytest.approx(10.0, rel=0.01)


def test_third_term_variants_coincide_when_d_is_one():
    cfg, st = shared_pilot_cells()
    ctx = EstimationContext(st, assign_pilots(cfg), cfg)
    a = SinrCoefficients(ctx, "reference").sinr(cfg.p_max)
    b = SinrCoefficients(ctx, "consistent").sinr(cfg.p_max)
    assert np.allclose(a, b, rtol=1e-14)
    with pytest.raises(ValueError):
        SinrCoefficients(ctx, "other")


def test_consistent_third_term_matches_simulation_when_d_differs():
    cfg, st = shared_pilot_cells(rt_scale=2.0)
    assert np.allclose(st.d, 2.0)
    plan = assign_pilots(cfg)
    ctx = EstimationContext(st, plan, cfg)
    p = cfg.p_max
    mc = monte_carlo_sinr(st, plan, cfg, p, 200_000, seed=1, batch_size=5000, ctx=ctx).sinr
    consistent = SinrCoefficients(ctx, "consistent").sinr(p)
    reference = SinrCoefficients(ctx, "reference").sinr(p)
    assert np.all(np.abs(mc / consistent - 1) < 0.02)
    assert np.all(np.abs(mc / reference - 1) > 0.2)


# -- Monte-Carlo --------------------------------------------------------------

def _rayleigh_mr_sinr(beta, p, hat_p, tau_p, sigma2, M):
    """UatF SINR of MR with LMMSE estimates over i.i.d. Rayleigh fading.

    All users share one pilot; ``beta[j, l]`` is the gain from the user of
    cell ``l`` to BS ``j``.
    """
    L = beta.shape[0]
    out = np.empty(L)
    for j in range(L):
        psi = 1.0 / (tau_p * np.sum(hat_p * beta[j]) + sigma2)
        gamma = hat_p * tau_p * beta[j] ** 2 * psi
        coherent = M * sum(p[l] * gamma[l] for l in range(L) if l != j)
        out[j] = p[j] * M * gamma[j] / (np.sum(p * beta[j]) + sigma2 + coherent)
    return out


def test_uncorrelated_limit_matches_rayleigh_formula():
    L, M, S = 4, 8, 500
    cfg = NetworkConfig(L=L, K=1, M=M, tau_p=1)
    beta = np.where(np.eye(L, dtype=bool), 1e-10, 3e-11)
    st = NetworkStatistics.uncorrelated(beta[:, :, None], M, S)
    plan = assign_pilots(cfg)
    ctx = EstimationContext(st, plan, cfg)
    p = np.full(L, 200.0)
    ref = _rayleigh_mr_sinr(beta, p, 200.0, 1, cfg.sigma2, M)
    cf = SinrCoefficients(ctx).sinr(p[:, None])[:, 0]
    assert np.allclose(cf, ref, rtol=5e-3)
    mc = monte_carlo_sinr(st, plan, cfg, p[:, None], 100_000, seed=0, batch_size=5000,
                          ctx=ctx).sinr[:, 0]
    assert np.allclose(mc, ref, rtol=0.03)


def test_single_trial_moments_are_unbiased():
    cfg, st = shared_pilot_cells(L=1, M=4, S=5)
    plan = assign_pilots(cfg)
    ctx = EstimationContext(st, plan, cfg)
    expected = np.trace(ctx.est_cov[0, 0, 0]).real  # E{v^H h} = E{||v||^2}
    n = 4000
    runs = [monte_carlo_moments(st, plan, cfg, 1, seed=[7, i], ctx=ctx) for i in range(n)]
    sig = np.array([m.mean_signal[0, 0] for m in runs])
    nrm = np.array([m.norm2[0, 0] for m in runs])
    for x in (sig, nrm):
        assert abs(x.mean() - expected) <= 5 * np.abs(x).std() / np.sqrt(n)


def test_estimator_spread_shrinks_as_inverse_sqrt_trials():
    cfg, st = shared_pilot_cells(L=4, M=8, S=21)
    plan = assign_pilots(cfg)
    ctx = EstimationContext(st, plan, cfg)
    sinr_spread, signal_spread = [], []
    for n, reps in ((100, 400), (10_000, 60)):
        runs = [monte_carlo_moments(st, plan, cfg, n, seed=[n, r], batch_size=2000, ctx=ctx)
                for r in range(reps)]
        sinr = [m.terms(cfg.p_max, cfg.sigma2, plan).sinr[0, 0] for m in runs]
        signal = [m.mean_signal[0, 0].real for m in runs]
        sinr_spread.append(np.std(sinr, ddof=1) / np.mean(sinr))
        signal_spread.append(np.std(signal, ddof=1) / np.mean(signal))
    # sqrt(10^4 / 10^2) = 10
    assert signal_spread[0] / signal_spread[1] == pytest.approx(10.0, rel=0.2)
    assert 6.0 < sinr_spread[0] / sinr_spread[1] < 16.0


def test_monte_carlo_independent_of_thread_count():
    cfg, st = shared_pilot_cells(L=4)
    plan = assign_pilots(cfg)
    a = monte_carlo_moments(st, plan, cfg, 1200, seed=3, batch_size=250, threads=1)
    b = monte_carlo_moments(st, plan, cfg, 1200, seed=3, batch_size=250, threads=3)
    assert np.array_equal(a.second, b.second) and np.array_equal(a.mean_signal, b.mean_signal)


def test_compact_and_full_sampling_give_same_sinr():
    cfg, st = shared_pilot_cells(L=4, M=6, S=4)
    plan = assign_pilots(cfg)
    ctx = EstimationContext(st, plan, cfg)
    a = monte_carlo_sinr(st, plan, cfg, cfg.p_max, 40_000, seed=0, ctx=ctx, batch_size=4000)
    b = monte_carlo_sinr(st, plan, cfg, cfg.p_max, 40_000, seed=1, ctx=ctx, batch_size=4000,
                         method="full")
    assert np.allclose(a.sinr, b.sinr, rtol=0.05)


def test_monte_carlo_rejects_zero_trials():
    cfg, st = shared_pilot_cells(L=1)
    with pytest.raises(ValueError):
        monte_carlo_moments(st, assign_pilots(cfg), cfg, 0)


# -- spectral efficiency ------------------------------------------------------

@pytest.mark.parametrize("sinr,se", [(1.0, 0.975), (0.0, 0.0), (3.0, 1.95)])
def test_spectral_efficiency_values(sinr, se):
    rep = spectral_efficiency(np.array([sinr]), NetworkConfig())
    assert rep.se[0] == pytest.approx(se, abs=1e-15)
    assert rep.prelog == 0.975


def test_spectral_efficiency_rejects_negative_sinr():
    with pytest.raises(ValueError):
        spectral_efficiency(np.array([-0.1]), NetworkConfig())
