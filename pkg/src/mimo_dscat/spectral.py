"""Uplink SINR and spectral efficiency with MR combining.

Two independent routes are provided: :func:`closed_form_sinr` evaluates the
closed-form expectations, and :func:`monte_carlo_sinr` estimates the
use-and-then-forget expectations by simulation.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSampler, NetworkStatistics
from .config import NetworkConfig
from .estimation import EstimationContext, PilotPlan, lmmse_estimate, processed_pilot_signal

THIRD_TERM_MODES = ("reference", "consistent")


@dataclass(frozen=True)
class SinrTerms:
    """Signal, interference and noise terms per user, each of shape (L, K)."""

    signal: np.ndarray
    NI: np.ndarray
    CI: np.ndarray
    NO: np.ndarray

    @property
    def sinr(self) -> np.ndarray:
        return self.signal / (self.NI + self.CI + self.NO)


@dataclass(frozen=True)
class SpectralEfficiencyReport:
    se: np.ndarray
    sinr: np.ndarray
    prelog: float


def _htrace(A, B):
    """``trace(A @ B)`` for Hermitian ``B`` without forming the product."""
    return np.einsum("...ij,...ij->...", A, np.conj(B))


class SinrCoefficients:
    """Power-independent part of the closed-form SINR.

    The SINR of user ``(l, k)`` is
    ``p_lk * gain_lk / (sum_j (ni + ci)[lk, j] p_j + noise_lk)``, where the
    ``ni`` and ``ci`` matrices (shape ``(L, K, L, K)``) collect the
    non-coherent and coherent interference coefficients.  Everything here
    depends on the statistics only, so power control reuses one instance.

    ``third_term="reference"`` weights the last coherent-interference group
    by ``tr(Rt^2)/S^2``; ``"consistent"`` uses ``tr(Rt^2)/(d S)^2``.  Both
    coincide whenever ``d = 1``.
    """

    def __init__(self, ctx: EstimationContext, third_term: str = "reference"):
        if third_term not in THIRD_TERM_MODES:
            raise ValueError(f"third_term must be one of {THIRD_TERM_MODES}")
        s, plan = ctx.stats, ctx.plan
        L, _, K = s.shape
        tau_p, hat_p, sigma2 = ctx.tau_p, ctx.hat_p, ctx.sigma2
        self.third_term = third_term
        self.plan = plan

        own = np.arange(L)
        beta_own = s.beta[own, own]  # (L, K)
        d_own = s.d[own, own]
        c = hat_p * beta_own ** 2 * d_own ** 2 * tau_p  # (L, K)

        # per-link scalar weights seen at BS l: [l, l2, k2]
        m_link = s.beta * s.d
        z_link = hat_p[None] * s.beta ** 2 * s.d ** 2 * tau_p
        rho = s.tr_rt2 / (s.d * s.S) ** 2
        rho3 = s.tr_rt2 / s.S ** 2 if third_term == "reference" else rho

        sig_tr = np.empty((L, K))
        ni = np.zeros((L, K, L, K))
        ci = np.zeros((L, K, L, K))
        for l in range(L):
            for k in range(K):
                R = s.R[l, l, k]
                psi_r = ctx.solve(l, plan.pilot_index[l, k], R)  # Psi R
                rpr = R @ psi_r
                rpr = 0.5 * (rpr + rpr.conj().T)
                sig_tr[l, k] = np.trace(rpr).real
                ni[l, k] = c[l, k] * m_link[l] * _htrace(rpr, s.R[l]).real
                for (l2, k2) in plan.reuse_set(l, k):
                    R2 = s.R[l, l2, k2]
                    t1 = _htrace(psi_r, R2)  # tr(R2 Psi R)
                    Z = psi_r @ R2  # Psi R R2
                    W = psi_r.conj().T @ R2  # R Psi R2
                    t3 = np.einsum("ij,ji->", Z, W).real
                    zc = c[l, k] * z_link[l, l2, k2]
                    coh = (1.0 + rho[l, l2, k2]) * abs(t1) ** 2
                    if (l2, k2) == (l, k):
                        coh -= abs(t1) ** 2
                    ci[l, k, l2, k2] = zc * (coh + rho3[l, l2, k2] * t3)
        self.sig_tr = sig_tr
        self.c = c
        self.gain = c * z_link[own, own] * sig_tr ** 2
        self.ni = ni
        self.ci = ci
        self.noise = sigma2 * c * sig_tr

    @property
    def D(self) -> np.ndarray:
        """Total interference coupling, shape (L, K, L, K)."""
        return self.ni + self.ci

    def terms(self, p) -> SinrTerms:
        p = np.asarray(p, dtype=float)
        if np.any(p < 0):
            raise ValueError("data powers must be non-negative")
        NI = np.einsum("lkij,ij->lk", self.ni, p)
        CI = np.einsum("lkij,ij->lk", self.ci, p)
        return SinrTerms(p * self.gain, NI, CI, self.noise.copy())

    def sinr(self, p) -> np.ndarray:
        return self.terms(p).sinr


def closed_form_sinr(stats: NetworkStatistics, ctx: EstimationContext, p,
                     third_term: str = "reference") -> SinrTerms:
    """Closed-form signal/interference/noise terms under MR combining."""
    if ctx.stats is not stats:
        raise ValueError("estimation context was built for different statistics")
    return SinrCoefficients(ctx, third_term).terms(p)


@dataclass(frozen=True)
class MonteCarloMoments:
    """Sample moments behind the UatF SINR, averaged over ``n`` trials.

    ``mean_signal[l, k]`` estimates ``E{v^H h_lk}``, ``second[l, k, l2, k2]``
    estimates ``E{|v_lk^H h_{l2 k2}|^2}`` and ``norm2[l, k]`` estimates
    ``E{||v_lk||^2}``.
    """

    mean_signal: np.ndarray
    second: np.ndarray
    norm2: np.ndarray
    n: int

    def combine(self, other: "MonteCarloMoments") -> "MonteCarloMoments":
        n = self.n + other.n
        w1, w2 = self.n / n, other.n / n
        return MonteCarloMoments(w1 * self.mean_signal + w2 * other.mean_signal,
                                 w1 * self.second + w2 * other.second,
                                 w1 * self.norm2 + w2 * other.norm2, n)

    def terms(self, p, sigma2: float, plan: PilotPlan) -> SinrTerms:
        p = np.asarray(p, dtype=float)
        signal = p * np.abs(self.mean_signal) ** 2
        weighted = self.second * p[None, None]
        shared = plan.shares_pilot
        NI = np.where(shared, 0.0, weighted).sum(axis=(2, 3))
        CI = np.where(shared, weighted, 0.0).sum(axis=(2, 3)) - signal
        return SinrTerms(signal, NI, CI, sigma2 * self.norm2)


def _mc_batch(sampler: ChannelSampler, ctx: EstimationContext, config: NetworkConfig,
              n: int, seed) -> MonteCarloMoments:
    rng = np.random.default_rng(seed)
    L, K = config.L, config.K
    own = np.arange(L)
    h = sampler.draw(rng, n)  # (n, L, L, K, M)
    y = processed_pilot_signal(h, ctx.plan, config, rng=rng)  # (n, L, tau_p, M)
    # MR combiners = LMMSE estimates of the own-cell users only
    y_own = y[:, :, ctx.plan.pilot_index, :][:, own, own]  # (n, L, K, M)
    v = (ctx.filters[own, own] @ y_own[..., None])[..., 0]
    h_bs = np.swapaxes(h.reshape(n, L, L * K, -1), -1, -2)  # (n, L, M, L*K)
    inner = (np.conj(v) @ h_bs).reshape(n, L, K, L, K)
    self_inner = np.einsum("nlklk->nlk", inner)
    return MonteCarloMoments(self_inner.mean(axis=0),
                             (np.abs(inner) ** 2).mean(axis=0),
                             (np.abs(v) ** 2).sum(axis=-1).mean(axis=0), n)


def monte_carlo_moments(stats: NetworkStatistics, plan: PilotPlan, config: NetworkConfig,
                        n_trials: int, seed=None, batch_size: int = 500,
                        threads: int = 1, method: str = "compact",
                        ctx: EstimationContext | None = None) -> MonteCarloMoments:
    """Estimate the UatF expectations with fresh channels and pilot noise per trial.

    Trials are split into batches, each with its own seed spawned from
    ``seed``, so results do not depend on ``threads``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    ctx = EstimationContext(stats, plan, config) if ctx is None else ctx
    sampler = ChannelSampler(stats, method)
    sizes = [batch_size] * (n_trials // batch_size)
    if n_trials % batch_size:
        sizes.append(n_trials % batch_size)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(i):
        return _mc_batch(sampler, ctx, config, sizes[i], seeds[i])

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    out = parts[0]
    for part in parts[1:]:
        out = out.combine(part)
    return out


def monte_carlo_sinr(stats: NetworkStatistics, plan: PilotPlan, config: NetworkConfig,
                     p, n_trials: int, seed=None, **kwargs) -> SinrTerms:
    """Monte-Carlo estimate of the UatF SINR terms with MR combining.

    The split into ``NI`` and ``CI`` attributes all interference from
    pilot-sharing users to ``CI``; only ``signal``, ``NO`` and the SINR are
    directly comparable with :func:`closed_form_sinr`.
    """
    moments = monte_carlo_moments(stats, plan, config, n_trials, seed, **kwargs)
    return moments.terms(p, config.sigma2, plan)


def spectral_efficiency(sinr, config: NetworkConfig) -> SpectralEfficiencyReport:
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr < 0):
        raise ValueError("SINR must be non-negative")
    prelog = config.prelog
    return SpectralEfficiencyReport(prelog * np.log2(1.0 + sinr), sinr, prelog)
