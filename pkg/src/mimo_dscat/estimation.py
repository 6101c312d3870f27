"""Pilot allocation and LMMSE channel estimation under pilot contamination."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channel import NetworkStatistics, crandn
from .config import NetworkConfig


class PilotError(ValueError):
    pass


@dataclass(frozen=True)
class PilotPlan:
    """Pilot index per user, shape (L, K), values in ``[0, tau_p)``."""

    pilot_index: np.ndarray
    tau_p: int

    def __post_init__(self):
        idx = np.asarray(self.pilot_index)
        if idx.ndim != 2:
            raise PilotError("pilot_index must have shape (L, K)")
        if idx.min() < 0 or idx.max() >= self.tau_p:
            raise PilotError("pilot index outside [0, tau_p)")
        for row in idx:
            if len(set(row.tolist())) != len(row):
                raise PilotError("users of the same cell must have distinct pilots")

    @property
    def L(self) -> int:
        return self.pilot_index.shape[0]

    @property
    def K(self) -> int:
        return self.pilot_index.shape[1]

    def reuse_set(self, l: int, k: int) -> list[tuple[int, int]]:
        """All users sharing the pilot of user ``(l, k)``, itself included."""
        t = self.pilot_index[l, k]
        return [tuple(map(int, lk)) for lk in np.argwhere(self.pilot_index == t)]

    @cached_property
    def shares_pilot(self) -> np.ndarray:
        """Boolean ``(L, K, L, K)`` mask: ``[l, k, l2, k2]`` iff same pilot."""
        idx = self.pilot_index
        return idx[:, :, None, None] == idx[None, None, :, :]

    def groups(self) -> dict[int, list[tuple[int, int]]]:
        out: dict[int, list[tuple[int, int]]] = {}
        for (l, k), t in np.ndenumerate(self.pilot_index):
            out.setdefault(int(t), []).append((l, k))
        return out


def assign_pilots(config: NetworkConfig, pilot_index=None) -> PilotPlan:
    """Give user ``k`` of every cell pilot ``k`` unless an explicit plan is passed."""
    if config.tau_p < config.K:
        raise PilotError(f"tau_p={config.tau_p} < K={config.K}: no intra-cell orthogonality")
    if pilot_index is None:
        pilot_index = np.tile(np.arange(config.K), (config.L, 1))
    return PilotPlan(np.asarray(pilot_index, dtype=int), config.tau_p)


class EstimationContext:
    """Per-drop quantities needed for LMMSE estimation and the SINR analysis.

    ``Psi[lb, t]`` is the inverse pilot-signal covariance (up to ``tau_p``)
    of pilot ``t`` at BS ``lb``, i.e.
    ``(sum_{users on t} a R + sigma2 I)^-1`` with
    ``a = tau_p * hat_p * beta * d``.  It depends only on the reuse set,
    so one Cholesky factor is kept per (BS, pilot).
    """

    def __init__(self, stats: NetworkStatistics, plan: PilotPlan, config: NetworkConfig):
        self.stats = stats
        self.plan = plan
        self.sigma2 = config.sigma2
        self.tau_p = config.tau_p
        self.hat_p = config.hat_p
        L, _, K = stats.shape
        M = stats.M
        if plan.pilot_index.shape != (L, K):
            raise PilotError("pilot plan does not match the network size")

        self.a = self.tau_p * self.hat_p[None] * stats.beta * stats.d
        psi_inv = np.broadcast_to(self.sigma2 * np.eye(M, dtype=complex),
                                  (L, self.tau_p, M, M)).copy()
        for (l, k), t in np.ndenumerate(plan.pilot_index):
            psi_inv[:, t] += self.a[:, l, k, None, None] * stats.R[:, l, k]
        self.psi_inv = psi_inv
        self._chol = [[cho_factor(psi_inv[lb, t], lower=True) for t in range(self.tau_p)]
                      for lb in range(L)]

    def solve(self, lb: int, t: int, B: np.ndarray) -> np.ndarray:
        """``Psi[lb, t] @ B`` via the Cholesky factor."""
        return cho_solve(self._chol[lb][t], B)

    def psi_of(self, lb: int, l: int, k: int) -> np.ndarray:
        return self.Psi[lb, self.plan.pilot_index[l, k]]

    @cached_property
    def Psi(self) -> np.ndarray:
        """Explicit ``Psi`` matrices, shape (L, tau_p, M, M)."""
        L, M = self.psi_inv.shape[0], self.psi_inv.shape[-1]
        eye = np.eye(M, dtype=complex)
        out = np.empty_like(self.psi_inv)
        for lb in range(L):
            for t in range(self.tau_p):
                P = self.solve(lb, t, eye)
                out[lb, t] = 0.5 * (P + P.conj().T)
        return out

    @cached_property
    def filters(self) -> np.ndarray:
        """LMMSE filters ``sqrt(hat_p) beta d R Psi``, shape (L, L, K, M, M)."""
        s = self.stats
        out = np.empty_like(s.R)
        coef = np.sqrt(self.hat_p)[None] * s.beta * s.d
        for (lb, l, k), c in np.ndenumerate(coef):
            t = self.plan.pilot_index[l, k]
            # R Psi = (Psi R)^H for Hermitian R, Psi
            out[lb, l, k] = c * self.solve(lb, t, s.R[lb, l, k]).conj().T
        return out

    @cached_property
    def est_cov(self) -> np.ndarray:
        """Covariance of every channel estimate, shape (L, L, K, M, M)."""
        s = self.stats
        out = np.empty_like(s.R)
        coef = self.hat_p[None] * s.beta ** 2 * s.d ** 2 * self.tau_p
        for (lb, l, k), c in np.ndenumerate(coef):
            t = self.plan.pilot_index[l, k]
            R = s.R[lb, l, k]
            C = c * (R @ self.solve(lb, t, R))
            out[lb, l, k] = 0.5 * (C + C.conj().T)
        return out

    def to_json(self) -> dict:
        """Debug dump; complex matrices as ``[real, imag]`` nested lists."""
        def cplx(A):
            return [np.real(A).tolist(), np.imag(A).tolist()]

        return {
            "sigma2": self.sigma2,
            "tau_p": self.tau_p,
            "pilot_index": self.plan.pilot_index.tolist(),
            "a": self.a.tolist(),
            "Psi": cplx(self.Psi),
        }


def processed_pilot_signal(h: np.ndarray, plan: PilotPlan, config: NetworkConfig,
                           noise=None, rng=None) -> np.ndarray:
    """Processed pilot observation ``Y_l^p phi_t`` for every BS and pilot.

    Parameters
    ----------
    h : (..., L, L, K, M) channels indexed ``[bs, cell, user]``
    noise : (..., L, tau_p, M) realization of ``N_l^p phi_t`` or ``None``
        to draw it as ``CN(0, sigma2 * tau_p * I)`` from ``rng``.

    Returns
    -------
    y : (..., L, tau_p, M); the observation used for user ``(l, k)`` at
        BS ``lb`` is ``y[..., lb, plan.pilot_index[l, k], :]``.
    """
    tau_p = config.tau_p
    amp = np.sqrt(config.hat_p) * tau_p
    weighted = h * amp[..., None]
    L, K = plan.pilot_index.shape
    # (tau_p, L*K) one-hot assignment
    onehot = (np.arange(tau_p)[:, None] == plan.pilot_index.ravel()[None, :]).astype(float)
    y = onehot @ weighted.reshape(weighted.shape[:-3] + (L * K, weighted.shape[-1]))
    if noise is None:
        rng = np.random.default_rng(rng)
        noise = np.sqrt(config.sigma2 * tau_p) * crandn(rng, y.shape)
    return y + noise


def lmmse_estimate(y: np.ndarray, ctx: EstimationContext) -> np.ndarray:
    """LMMSE estimates ``sqrt(hat_p) beta d R Psi y`` of every channel.

    ``y`` has shape ``(..., L, tau_p, M)``; returns ``(..., L, L, K, M)``.
    """
    idx = ctx.plan.pilot_index
    y_user = y[..., :, idx, :]  # (..., L, L, K, M)
    return (ctx.filters @ y_user[..., None])[..., 0]
