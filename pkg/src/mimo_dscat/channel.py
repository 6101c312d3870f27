"""Network drops, large-scale statistics and double-scattering channels.

Arrays describing links are indexed ``[bs, cell, user]``: entry
``[lb, l, k]`` is the link from user ``k`` of cell ``l`` to BS ``lb``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import CorrelationParams, NetworkConfig, PathlossParams


class GeometryError(ValueError):
    """A distance violates the minimum BS-user distance."""


class NotPSDError(ValueError):
    """A correlation matrix has a materially negative eigenvalue."""


def crandn(rng: np.random.Generator, size) -> np.ndarray:
    """Draw i.i.d. CN(0, 1) samples."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) * np.sqrt(0.5)


def hermitian_sqrt(A: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Hermitian PSD square root via eigendecomposition.

    Works on stacks of matrices (``...xNxN``).  Eigenvalues in
    ``[-tol*scale, 0)`` are clamped to zero; anything more negative
    raises :class:`NotPSDError`.
    """
    A = np.asarray(A)
    Ah = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
    w, V = np.linalg.eigh(Ah)
    scale = np.maximum(1.0, np.abs(w).max(axis=-1, keepdims=True))
    if np.any(w < -tol * scale):
        raise NotPSDError(f"matrix not PSD (min eigenvalue {w.min():.3e})")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


# -- geometry -----------------------------------------------------------------

@dataclass(frozen=True)
class NetworkGeometry:
    """One network drop.

    Attributes
    ----------
    bs_positions : (L, 2) array
    user_positions : (L, K, 2) array
    distances : (L, L, K) array, BS-to-user distance ``[bs, cell, user]``
    angles : (L, L, K) array, azimuth of the user seen from the BS [rad]
    shadow_db : (L, L, K) array, shadow fading realization in dB
    """

    bs_positions: np.ndarray
    user_positions: np.ndarray
    distances: np.ndarray
    angles: np.ndarray
    shadow_db: np.ndarray


def drop_network(config: NetworkConfig, seed) -> NetworkGeometry:
    """Drop K users uniformly in each square cell, BSs at the cell centres.

    Users closer than ``min_distance`` to their serving BS are redrawn.
    Shadow fading is i.i.d. per (user, BS) pair.
    """
    rng = np.random.default_rng(seed)
    n, side = config.cells_per_side, config.cell_side
    d_min = config.pathloss.min_distance
    L, K = config.L, config.K

    corners = np.array([(side * (l % n), side * (l // n)) for l in range(L)], dtype=float)
    bs = corners + side / 2.0

    users = np.empty((L, K, 2))
    for l in range(L):
        for k in range(K):
            while True:
                pos = corners[l] + rng.uniform(0.0, side, size=2)
                if np.hypot(*(pos - bs[l])) >= d_min:
                    break
            users[l, k] = pos

    diff = users[None, :, :, :] - bs[:, None, None, :]
    distances = np.hypot(diff[..., 0], diff[..., 1])
    angles = np.arctan2(diff[..., 1], diff[..., 0])
    shadow = config.shadow_std_db * rng.standard_normal((L, L, K))
    return NetworkGeometry(bs, users, distances, angles, shadow)


def large_scale_fading(distance, shadow_db=0.0, pathloss: PathlossParams = PathlossParams()):
    """Linear large-scale fading coefficient.

    ``beta_dB = intercept - slope*log10(d / 1 km) + shadow``.
    """
    distance = np.asarray(distance, dtype=float)
    if np.any(distance < pathloss.min_distance):
        raise GeometryError(
            f"distance below minimum {pathloss.min_distance} m: {distance.min():.3f}"
        )
    beta_db = pathloss.intercept_db - pathloss.slope_db * np.log10(distance / 1000.0) + shadow_db
    return 10.0 ** (beta_db / 10.0)


# -- correlation models -------------------------------------------------------

_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite_e.hermegauss(80)
_GH_WEIGHTS = _GH_WEIGHTS / _GH_WEIGHTS.sum()


def local_scattering_corr(M: int, angle: float, asd_deg: float | None, spacing: float = 0.5):
    """Local scattering correlation of a uniform linear array.

    ``[R]_mn = E[exp(2j*pi*spacing*(m-n)*sin(angle + delta))]`` with
    ``delta ~ N(0, asd^2)``, evaluated by Gauss-Hermite quadrature.
    ``asd_deg=None`` (or inf) gives the identity.
    """
    if asd_deg is None or np.isinf(asd_deg):
        return np.eye(M, dtype=complex)
    asd = np.deg2rad(asd_deg)
    lag = np.arange(M)
    phase = 2j * np.pi * spacing * np.sin(angle + asd * _GH_NODES)
    first_col = np.exp(np.outer(lag, phase)) @ _GH_WEIGHTS
    # Toeplitz Hermitian: R[m, n] = c[m - n], c[-j] = conj(c[j])
    idx = lag[:, None] - lag[None, :]
    R = np.where(idx >= 0, first_col[np.abs(idx)], np.conj(first_col[np.abs(idx)]))
    return R * (M / np.trace(R).real)


def exponential_corr(S: int, r: float) -> np.ndarray:
    """Exponential correlation ``r**|i-j|``."""
    idx = np.arange(S)
    return np.power(float(r), np.abs(idx[:, None] - idx[None, :])).astype(complex)


# -- statistics ---------------------------------------------------------------

@dataclass(frozen=True)
class LinkStatistics:
    beta: float
    S: int
    R: np.ndarray
    R_tilde: np.ndarray
    d: float
    distance: float = float("nan")

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.R_tilde.shape != (self.S, self.S):
            raise ValueError("R_tilde must be S x S")

    @classmethod
    def from_matrices(cls, beta, R, R_tilde, distance=float("nan")):
        R_tilde = np.asarray(R_tilde, dtype=complex)
        S = R_tilde.shape[0]
        return cls(float(beta), S, np.asarray(R, dtype=complex), R_tilde,
                   float(np.trace(R_tilde).real / S), float(distance))


@dataclass(frozen=True)
class NetworkStatistics:
    """Second-order statistics of every link of one drop.

    Attributes
    ----------
    beta : (L, L, K) large-scale fading
    R : (L, L, K, M, M) BS-side correlation, ``trace = M``
    R_tilde : (L, L, K, S, S) scatterer correlation
    S : (L, L, K) scatterer counts
    d : (L, L, K) ``trace(R_tilde) / S``
    """

    beta: np.ndarray
    R: np.ndarray
    R_tilde: np.ndarray
    S: np.ndarray
    d: np.ndarray
    distances: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.beta.shape

    @property
    def M(self) -> int:
        return self.R.shape[-1]

    @property
    def tr_rt2(self) -> np.ndarray:
        """``trace(R_tilde @ R_tilde)`` per link (R_tilde Hermitian)."""
        return np.einsum("...ij,...ij->...", self.R_tilde, np.conj(self.R_tilde)).real

    def link(self, lb: int, l: int, k: int) -> LinkStatistics:
        dist = float("nan") if self.distances is None else float(self.distances[lb, l, k])
        return LinkStatistics(float(self.beta[lb, l, k]), int(self.S[lb, l, k]),
                              self.R[lb, l, k], self.R_tilde[lb, l, k],
                              float(self.d[lb, l, k]), dist)

    @classmethod
    def from_arrays(cls, beta, R, R_tilde, distances=None):
        beta = np.asarray(beta, dtype=float)
        R = np.asarray(R, dtype=complex)
        R_tilde = np.asarray(R_tilde, dtype=complex)
        if np.any(beta <= 0):
            raise ValueError("beta must be positive")
        S_val = R_tilde.shape[-1]
        S = np.full(beta.shape, S_val, dtype=int)
        d = np.trace(R_tilde, axis1=-2, axis2=-1).real / S_val
        return cls(beta, R, R_tilde, S, d, distances)

    @classmethod
    def uncorrelated(cls, beta, M: int, S: int):
        """Links with ``R = I_M`` and ``R_tilde = I_S``."""
        beta = np.asarray(beta, dtype=float)
        R = np.broadcast_to(np.eye(M, dtype=complex), beta.shape + (M, M)).copy()
        Rt = np.broadcast_to(np.eye(S, dtype=complex), beta.shape + (S, S)).copy()
        return cls.from_arrays(beta, R, Rt)


def check_psd(A: np.ndarray, tol: float = 1e-10) -> None:
    """Raise :class:`NotPSDError` unless every matrix in ``A`` is Hermitian PSD."""
    herm = np.abs(A - np.conj(np.swapaxes(A, -1, -2))).max()
    scale = max(1.0, np.abs(A).max())
    if herm > tol * scale:
        raise NotPSDError(f"matrix not Hermitian (deviation {herm:.3e})")
    w = np.linalg.eigvalsh(A)
    if w.min() < -tol * scale:
        raise NotPSDError(f"matrix not PSD (min eigenvalue {w.min():.3e})")


def build_correlation_matrices(geometry: NetworkGeometry, config: NetworkConfig,
                               model: CorrelationParams | None = None) -> NetworkStatistics:
    """Large-scale fading and both correlation matrices for all links."""
    model = config.correlation if model is None else model
    beta = large_scale_fading(geometry.distances, geometry.shadow_db, config.pathloss)
    L, _, K = beta.shape
    M, S = config.M, config.S

    R = np.empty((L, L, K, M, M), dtype=complex)
    for idx in np.ndindex(L, L, K):
        R[idx] = local_scattering_corr(M, geometry.angles[idx], model.angular_spread_deg,
                                       model.antenna_spacing)
    check_psd(R)
    Rt = exponential_corr(S, model.scatterer_corr)
    check_psd(Rt)
    R_tilde = np.broadcast_to(Rt, (L, L, K, S, S)).copy()
    return NetworkStatistics.from_arrays(beta, R, R_tilde, geometry.distances)


def network_statistics(config: NetworkConfig, seed) -> tuple[NetworkGeometry, NetworkStatistics]:
    geometry = drop_network(config, seed)
    return geometry, build_correlation_matrices(geometry, config)


# -- channel realizations -----------------------------------------------------

@dataclass(frozen=True)
class ChannelRealization:
    """One draw of a double-scattering channel, ``h = sqrt(beta/S) R^1/2 G Rt^1/2 g``."""

    h: np.ndarray
    G: np.ndarray
    g: np.ndarray


def sample_channel(stats: LinkStatistics, rng, R_sqrt=None, Rt_sqrt=None) -> ChannelRealization:
    """Draw one realization of a single link."""
    rng = np.random.default_rng(rng)
    if R_sqrt is None:
        R_sqrt = hermitian_sqrt(stats.R)
    if Rt_sqrt is None:
        Rt_sqrt = hermitian_sqrt(stats.R_tilde)
    M, S = stats.R.shape[0], stats.S
    G = crandn(rng, (M, S))
    g = crandn(rng, S)
    h = np.sqrt(stats.beta / S) * (R_sqrt @ (G @ (Rt_sqrt @ g)))
    return ChannelRealization(h, G, g)


class ChannelSampler:
    """Vectorized sampler for every link of a drop.

    ``method="compact"`` uses the exact distributional identity
    ``G x | x ~ CN(0, ||x||^2 I)`` with ``||x||^2 = sum_i lambda_i E_i``
    (``lambda`` the eigenvalues of ``R_tilde``, ``E_i ~ Exp(1)``), which
    avoids drawing the M x S matrix ``G``; when ``R_tilde`` is a multiple
    of the identity the sum collapses to a single Gamma(S, 1) draw.
    ``method="full"`` draws ``G`` and ``g`` explicitly.
    """

    def __init__(self, stats: NetworkStatistics, method: str = "compact"):
        if method not in ("compact", "full"):
            raise ValueError(f"unknown method {method!r}")
        self.stats = stats
        self.method = method
        self.R_sqrt = hermitian_sqrt(stats.R)
        self.scale = np.sqrt(stats.beta / stats.S)
        if method == "compact":
            lam = np.clip(np.linalg.eigvalsh(stats.R_tilde), 0.0, None)
            self.rt_eig = lam
            # R_tilde proportional to I: the energy is lambda * Gamma(S, 1)
            self.flat = bool(np.all(lam.max(axis=-1) - lam.min(axis=-1)
                                    <= 1e-12 * lam.max(axis=-1)))
        else:
            self.Rt_sqrt = hermitian_sqrt(stats.R_tilde)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Return channels of shape ``(n, L, L, K, M)``."""
        shape = self.stats.shape
        M = self.stats.M
        # trials on the last axis so the correlation step is one GEMM per link
        if self.method == "compact":
            S = self.rt_eig.shape[-1]
            if self.flat:
                energy = self.rt_eig[..., :1, None] * rng.standard_gamma(S, shape + (1, n))
            else:
                energy = self.rt_eig[..., None, :] @ rng.standard_exponential(shape + (S, n))
            small = np.sqrt(energy) * crandn(rng, shape + (M, n))
        else:
            S = self.Rt_sqrt.shape[-1]
            x = self.Rt_sqrt @ crandn(rng, shape + (S, n))
            G = crandn(rng, shape + (n, M, S))
            small = np.swapaxes((G @ np.swapaxes(x, -1, -2)[..., None])[..., 0], -1, -2)
        h = (self.R_sqrt @ small) * self.scale[..., None, None]
        return np.moveaxis(h, -1, 0)
