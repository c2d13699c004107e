"""Random geometry and Rayleigh fading synthesis, deterministic under a seed.

Every random quantity is drawn from its own Philox substream keyed by
``(seed, stream tag, pair index)``, so results do not depend on the order in
which links are generated and realizations can run in parallel.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import ChannelSet, NetworkConfig, _frozen

__all__ = ["Geometry", "place_terminals", "path_gain", "draw_channels", "dump_channels_csv", "substream"]

# substream tags; values are part of the reproducibility contract
_TAG_ST_POS = 1
_TAG_DT_POS = 2
_TAG_H = 3
_TAG_G = 4
_TAG_D = 5


def substream(seed: int, tag: int, index: int = 0) -> np.random.Generator:
    """Counter-based generator for one (seed, tag, index) substream.

    Philox keyed by SeedSequence([seed, tag, index]): streams are independent
    and results do not depend on evaluation order.
    """
    key = np.random.SeedSequence([int(seed), int(tag), int(index)]).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class Geometry:
    """Realized terminal/surface positions in the plane, meters."""

    st_positions: np.ndarray  # (K, 2)
    dt_positions: np.ndarray  # (K, 2)
    irs_position: np.ndarray  # (2,)

    def __post_init__(self):
        for name in ("st_positions", "dt_positions", "irs_position"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=float)))

    def st_irs_distances(self) -> np.ndarray:
        return np.linalg.norm(self.st_positions - self.irs_position, axis=1)

    def irs_dt_distances(self) -> np.ndarray:
        return np.linalg.norm(self.dt_positions - self.irs_position, axis=1)

    def direct_distances(self) -> np.ndarray:
        """(K, K) matrix of ST j -> DT k distances; [j, k] ordering."""
        diff = self.st_positions[:, None, :] - self.dt_positions[None, :, :]
        return np.linalg.norm(diff, axis=2)


def _uniform_disc(rng: np.random.Generator, center, radius: float, n: int) -> np.ndarray:
    # r = R*sqrt(u) makes the density uniform over the disc area
    r = radius * np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    return np.stack([center[0] + r * np.cos(theta), center[1] + r * np.sin(theta)], axis=1)


def place_terminals(config: NetworkConfig, seed: int) -> Geometry:
    """Drop K STs and K DTs uniformly on their configured discs."""
    g = config.geometry
    st = _uniform_disc(substream(seed, _TAG_ST_POS), g.st_center, g.cluster_radius, config.K)
    dt = _uniform_disc(substream(seed, _TAG_DT_POS), g.dt_center, g.cluster_radius, config.K)
    return Geometry(st_positions=st, dt_positions=dt, irs_position=np.asarray(g.irs_position, dtype=float))


def path_gain(distance_m, exponent: float, ref_loss_db: float):
    """Linear power gain 10**(-ref_loss_db/10) * d**(-exponent).

    Distances below the 1 m reference are clamped to 1 m; nonpositive
    distances are a domain error.
    """
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    d = np.maximum(d, 1.0)
    return 10.0 ** (-ref_loss_db / 10.0) * d ** (-exponent)


def _link_variance(config: NetworkConfig, dist, exponent: float):
    if config.variance_model == "ratio200":
        return (200.0 / np.maximum(np.asarray(dist, float), 1.0)) ** exponent
    return path_gain(dist, exponent, config.ref_loss_db)


def _cn_vector(rng: np.random.Generator, variance, shape) -> np.ndarray:
    # circularly-symmetric complex Gaussian: re, im independent N(0, var/2)
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_channels(config: NetworkConfig, geometry: Geometry, seed: int) -> ChannelSet:
    """Draw one fading realization for all links.

    h[k] entries are i.i.d. CN(0, var) with var from the ST->surface path
    gain of pair k; g[k] likewise for surface->DT; d[j, k] is the direct
    ST j -> DT k gain (Rayleigh, exponent from config).  Each (pair, link)
    uses an independent substream of ``seed``.
    """
    K, N = config.K, config.N
    d_h = geometry.st_irs_distances()
    d_g = geometry.irs_dt_distances()
    d_dir = geometry.direct_distances()

    h = np.empty((K, N), dtype=np.complex128)
    g = np.empty((K, N), dtype=np.complex128)
    for k in range(K):
        h[k] = _cn_vector(substream(seed, _TAG_H, k), _link_variance(config, d_h[k], config.exponents.st_irs), N)
        g[k] = _cn_vector(substream(seed, _TAG_G, k), _link_variance(config, d_g[k], config.exponents.irs_dt), N)

    d = np.empty((K, K), dtype=np.complex128)
    for j in range(K):
        var_row = _link_variance(config, d_dir[j], config.exponents.direct)
        d[j] = _cn_vector(substream(seed, _TAG_D, j), var_row, K)
    return ChannelSet(h=h, g=g, d=d)


def dump_channels_csv(path, channels: ChannelSet, realization: int = 0):
    """Write (realization, pair, link, element, re, im) rows for comparison
    against other implementations."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["realization", "pair", "link", "element", "re", "im"])
        for k in range(channels.K):
            for label, arr in (("h", channels.h[k]), ("g", channels.g[k])):
                for n, v in enumerate(arr):
                    w.writerow([realization, k, label, n, repr(v.real), repr(v.imag)])
        for j in range(channels.K):
            for k in range(channels.K):
                v = channels.d[j, k]
                w.writerow([realization, j, f"d{k}", 0, repr(v.real), repr(v.imag)])
