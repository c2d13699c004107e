"""SINR in both its raw and aggregated-channel forms, rates, power, EE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChannelSet, ModuleMask, NetworkConfig, PhaseProfile, PowerAllocation, _frozen

__all__ = [
    "AggregateH",
    "precompute",
    "sinr_direct",
    "sinr_quadratic",
    "sum_rate",
    "total_power",
    "energy_efficiency",
]


@dataclass(frozen=True)
class AggregateH:
    """Elementwise channel products h_bar[j, k] = conj(g[k]) * h[j].

    ``a[k]`` stores the diagonal of A_k = diag(conj(g_k)) as a vector;
    ``h_bar`` has shape (K, K, N) indexed [j, k].  The stacked K*N vector for
    destination k is ``h_bar[:, k, :].ravel()``.
    """

    a: np.ndarray  # (K, N) complex, conj(g)
    h_bar: np.ndarray  # (K, K, N) complex

    def __post_init__(self):
        object.__setattr__(self, "a", _frozen(self.a))
        object.__setattr__(self, "h_bar", _frozen(self.h_bar))

    @property
    def K(self):
        return self.h_bar.shape[0]

    @property
    def N(self):
        return self.h_bar.shape[2]

    def stacked(self, k: int) -> np.ndarray:
        """H_bar^k: the (K*N,) concatenation of h_bar[j, k] over j."""
        return self.h_bar[:, k, :].ravel()


def precompute(channels: ChannelSet) -> AggregateH:
    """Form all K^2 aggregated vectors in one broadcasted product."""
    a = np.conj(channels.g)  # (K, N)
    h_bar = channels.h[:, None, :] * a[None, :, :]  # [j, k, n]
    return AggregateH(a=a, h_bar=h_bar)


def sinr_direct(channels: ChannelSet, phases: PhaseProfile, powers: PowerAllocation,
                config: NetworkConfig, k: int | None = None):
    """SINR at each DT from the raw channel triple products.

    Computes p_k |g_k^H Phi h_k|^2 / (sum_{j != k} p_j |g_k^H Phi h_j|^2 +
    sigma^2) with Phi the physical reflection diagonal (= diag(conj(phi))).
    Deliberately avoids the aggregated h_bar route so the two forms can be
    cross-checked.
    """
    phi_phys = np.conj(phases.phi)  # physical reflection coefficients
    # r[j, k] = g_k^H diag(phi_phys) h_j
    r = np.einsum("jn,n,kn->jk", channels.h, phi_phys, np.conj(channels.g))
    gains = np.abs(r) ** 2  # [j, k]
    p = powers.p
    signal = p * np.diag(gains)
    interference = p @ gains - signal
    sinr = signal / (interference + config.sigma2)
    return sinr if k is None else float(sinr[k])


def sinr_quadratic(aggregate: AggregateH, phi_bar: np.ndarray, sigma2: float):
    """SINR of each column of an N x K matrix whose column k plays sqrt(p_k)*phi.

    Returns |h_bar[k,k]^H col_k|^2 / (sigma2 + sum_{j != k} |h_bar[j,k]^H col_j|^2)
    for every k.
    """
    phi_bar = np.asarray(phi_bar, dtype=np.complex128)
    # v[j, k] = h_bar[j, k]^H phi_bar[:, j]
    v = np.einsum("jkn,nj->jk", np.conj(aggregate.h_bar), phi_bar)
    mags = np.abs(v) ** 2
    signal = np.diag(mags)
    interference = mags.sum(axis=0) - signal
    return signal / (sigma2 + interference)


def sum_rate(sinrs) -> float:
    """Sum spectral efficiency sum_k log2(1 + SINR_k), bits/s/Hz."""
    s = np.asarray(sinrs, dtype=float)
    if np.any(s < 0):
        raise ValueError("SINR values must be nonnegative")
    return float(np.sum(np.log2(1.0 + s)))


def total_power(powers: PowerAllocation, mask: ModuleMask, config: NetworkConfig) -> float:
    """Overall consumed power: xi_ST * sum(p) + K*(P_ST + P_DT) + card * P(L)."""
    pm = config.power_model
    circuit = config.K * (pm.p_st_w + pm.p_dt_w)
    modules = mask.cardinality * pm.module_power_w(config.L)
    return float(pm.xi_st * np.sum(powers.p) + circuit + modules)


def energy_efficiency(sum_rate_bits: float, total_power_w: float) -> float:
    """bits/Joule/Hz; guards against a nonpositive power denominator."""
    if total_power_w <= 0:
        raise ValueError("total power must be positive")
    return float(sum_rate_bits / total_power_w)
