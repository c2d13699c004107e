"""Domain types and index conventions shared by all other modules.

Conventions
-----------
* A surface of ``N`` reflecting elements is split into ``M`` contiguous
  modules of ``L`` elements each (``N = M*L``).  Module ``m`` (1-based in
  documentation, 0-based in code) owns vector entries ``(m-1)*L .. m*L-1``.
* Complex vectors are ``complex128``; ``real_view`` exposes the interleaved
  real stacking (re at ``2i``, im at ``2i+1``) used by the conic solver.
* Power constants arriving in dBm are converted once, via ``dbm_to_watts``;
  everything downstream is linear watts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ConfigError",
    "SceneGeometry",
    "PathExponents",
    "PowerModel",
    "NetworkConfig",
    "ChannelSet",
    "PhaseProfile",
    "PowerAllocation",
    "ModuleMask",
    "SparseSolution",
    "dbm_to_watts",
    "watts_to_dbm",
    "validate",
    "block_view",
    "real_view",
    "complex_from_real",
    "config_from_json",
    "config_to_json",
]


class ConfigError(ValueError):
    """Raised when a NetworkConfig violates a structural invariant."""


def dbm_to_watts(dbm):
    """watts = 10**((dBm - 30)/10); accepts scalars or arrays."""
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    w = np.asarray(watts, dtype=float)
    if np.any(w <= 0):
        raise ValueError("watts must be positive for dBm conversion")
    return 10.0 * np.log10(w) + 30.0


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SceneGeometry:
    """Cluster centers, cluster radius and surface position, meters."""

    st_center: tuple[float, float] = (0.0, 0.0)
    dt_center: tuple[float, float] = (200.0, 0.0)
    cluster_radius: float = 2.0
    irs_position: tuple[float, float] = (120.0, 50.0)


@dataclass(frozen=True)
class PathExponents:
    """Path-loss exponents per link class."""

    direct: float = 3.5
    st_irs: float = 2.0
    irs_dt: float = 2.1


@dataclass(frozen=True)
class PowerModel:
    """Static circuit power terms for the energy-efficiency metric."""

    p_st_w: float = dbm_to_watts(10.0)
    p_dt_w: float = dbm_to_watts(10.0)
    xi_st: float = 1.2
    element_coeff_w: float = 0.01  # watts per reflecting element

    def module_power_w(self, elements_per_module):
        """P(L): power drawn by one active module of that many elements."""
        return float(elements_per_module) * self.element_coeff_w


@dataclass(frozen=True)
class NetworkConfig:
    """Scenario constants for one simulated network.

    ``p_max`` is stored per source terminal (length ``K``, watts).  ``Q`` is
    the optional module budget; when absent, module selection is purely
    threshold-driven.
    """

    K: int
    M: int
    L: int
    N: int
    p_max: np.ndarray
    sigma2: float
    carrier_hz: float = 2.3e9
    bandwidth_hz: float = 10e6
    Q: int | None = None
    geometry: SceneGeometry = field(default_factory=SceneGeometry)
    exponents: PathExponents = field(default_factory=PathExponents)
    ref_loss_db: float = 30.0
    power_model: PowerModel = field(default_factory=PowerModel)
    variance_model: str = "ref_loss"  # or "ratio200"

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p_max, dtype=float))
        if p.size == 1:
            p = np.full(self.K, float(p[0]))
        object.__setattr__(self, "p_max", _frozen(p))

    def with_dims(self, **kw):
        """Convenience copy-with-changes (keeps p_max broadcasting rules)."""
        return replace(self, **kw)


def validate(config: NetworkConfig) -> NetworkConfig:
    """Return ``config`` iff every structural invariant holds.

    Raises ConfigError on: N != M*L, nonpositive counts/powers/distances,
    or a module budget Q outside 1..M.
    """
    c = config
    if c.K < 1 or c.M < 1 or c.L < 1:
        raise ConfigError(f"counts must satisfy K,M,L >= 1 (got K={c.K}, M={c.M}, L={c.L})")
    if c.N != c.M * c.L:
        raise ConfigError(f"dimension error: N={c.N} but M*L={c.M * c.L}")
    if c.p_max.shape != (c.K,):
        raise ConfigError(f"p_max must have one entry per ST (expected {c.K}, got {c.p_max.shape})")
    if np.any(c.p_max <= 0):
        raise ConfigError("positivity error: all p_max entries must be > 0")
    if c.sigma2 <= 0:
        raise ConfigError("positivity error: sigma2 must be > 0")
    if c.carrier_hz <= 0 or c.bandwidth_hz <= 0:
        raise ConfigError("positivity error: carrier_hz and bandwidth_hz must be > 0")
    if c.geometry.cluster_radius < 0:
        raise ConfigError("positivity error: cluster_radius must be >= 0")
    pm = c.power_model
    if pm.p_st_w <= 0 or pm.p_dt_w <= 0 or pm.xi_st <= 0 or pm.element_coeff_w < 0:
        raise ConfigError("positivity error: power model terms must be positive")
    if c.Q is not None and not (1 <= c.Q <= c.M):
        raise ConfigError(f"budget error: Q={c.Q} outside 1..M={c.M}")
    if c.variance_model not in ("ref_loss", "ratio200"):
        raise ConfigError(f"unknown variance_model {c.variance_model!r}")
    return c


def block_view(v: np.ndarray, m: int, L: int) -> np.ndarray:
    """View of module block ``m`` (1-based) of a length-``M*L`` vector.

    Returns entries ``(m-1)*L .. m*L-1`` as a numpy view: writing through it
    mutates the parent.
    """
    v = np.asarray(v)
    if v.ndim != 1 or v.size % L != 0:
        raise IndexError(f"vector of length {v.size} is not divisible into blocks of {L}")
    M = v.size // L
    if not 1 <= m <= M:
        raise IndexError(f"module index {m} out of range 1..{M}")
    return v[(m - 1) * L : m * L]


def real_view(v: np.ndarray) -> np.ndarray:
    """Interleaved real stacking of a complex vector: re at 2i, im at 2i+1.

    Zero-copy reinterpretation; length is 2*len(v).
    """
    v = np.ascontiguousarray(v, dtype=np.complex128)
    return v.view(np.float64)


def complex_from_real(x: np.ndarray) -> np.ndarray:
    """Inverse of real_view for an even-length float vector."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.size % 2:
        raise ValueError("real-stacked vector must have even length")
    return x.view(np.complex128)


@dataclass(frozen=True)
class ChannelSet:
    """Per-pair uplink/downlink channels plus direct-link gains.

    ``h[k]`` is ST k -> surface (length N), ``g[k]`` is surface -> DT k
    (length N); module m occupies entries (m-1)*L..m*L-1 of both.  ``d[j, k]``
    is the scalar direct gain ST j -> DT k, used only by the no-surface
    baseline.
    """

    h: np.ndarray  # (K, N) complex
    g: np.ndarray  # (K, N) complex
    d: np.ndarray  # (K, K) complex

    def __post_init__(self):
        for name in ("h", "g", "d"):
            a = np.asarray(getattr(self, name), dtype=np.complex128)
            if not np.all(np.isfinite(a.view(np.float64))):
                raise ValueError(f"channel array {name} contains non-finite entries")
            object.__setattr__(self, name, _frozen(a))
        if self.h.shape != self.g.shape or self.d.shape != (self.h.shape[0],) * 2:
            raise ValueError("inconsistent channel array shapes")

    @property
    def K(self):
        return self.h.shape[0]

    @property
    def N(self):
        return self.h.shape[1]


PHASE_MAG_TOL = 1e-8


@dataclass(frozen=True)
class PhaseProfile:
    """Reflection coefficient vector with module-block structure.

    ``phi`` stores the optimization-side coefficients; the physical diagonal
    applied to the incident signal is ``conj(phi)`` (magnitudes, SINRs and
    every constraint are invariant under this conjugation).  Entries obey
    |phi_n| <= 1 + 1e-8, and blocks of deactivated modules are exactly zero.
    """

    phi: np.ndarray  # (N,) complex
    L: int
    mask: ModuleMask | None = None

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.complex128)
        if np.any(np.abs(phi) > 1.0 + PHASE_MAG_TOL):
            raise ValueError("phase magnitude above 1 + tolerance")
        if self.mask is not None:
            off = ~np.repeat(self.mask.active, self.L)
            if np.any(phi[off] != 0):
                raise ValueError("deactivated module block must be exactly zero")
        object.__setattr__(self, "phi", _frozen(phi))

    def block(self, m: int) -> np.ndarray:
        """Copy of module block m (1-based)."""
        return block_view(np.array(self.phi), m, self.L)

    def diag_matrix(self) -> np.ndarray:
        """Physical reflection matrix Phi = diag(conj(phi))."""
        return np.diag(np.conj(self.phi))


@dataclass(frozen=True)
class PowerAllocation:
    """Transmit powers, watts, one per ST; 0 <= p_k <= p_max_k."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("powers must be finite and nonnegative")
        object.__setattr__(self, "p", _frozen(p))

    def check_caps(self, config: NetworkConfig, tol=1e-9):
        if np.any(self.p > config.p_max * (1 + tol) + tol):
            raise ValueError("power allocation exceeds per-ST cap")
        return self


@dataclass(frozen=True)
class ModuleMask:
    """Activation pattern over the M modules."""

    active: np.ndarray  # (M,) bool

    def __post_init__(self):
        a = np.asarray(self.active, dtype=bool)
        object.__setattr__(self, "active", _frozen(a))

    @property
    def M(self):
        return self.active.size

    @property
    def cardinality(self) -> int:
        return int(np.count_nonzero(self.active))

    def indices(self) -> np.ndarray:
        """0-based indices of active modules."""
        return np.flatnonzero(self.active)

    def element_indices(self, L: int) -> np.ndarray:
        """0-based element indices covered by the active modules."""
        return np.flatnonzero(np.repeat(self.active, L))

    def check_budget(self, config: NetworkConfig):
        if config.Q is not None and self.cardinality > config.Q:
            raise ValueError(f"mask cardinality {self.cardinality} exceeds budget Q={config.Q}")
        return self


@dataclass(frozen=True)
class SparseSolution:
    """Relaxed N x K matrix from the group-sparse stage.

    ``block_norms[m]`` is the Frobenius norm of row block m of ``phi_bar``;
    ``objective`` equals alpha * sum(block_norms); ``gamma`` is the SINR
    target certified by bisection.
    """

    phi_bar: np.ndarray  # (N, K) complex
    block_norms: np.ndarray  # (M,) real
    gamma: float
    objective: float

    def __post_init__(self):
        object.__setattr__(self, "phi_bar", _frozen(np.asarray(self.phi_bar, dtype=np.complex128)))
        object.__setattr__(self, "block_norms", _frozen(np.asarray(self.block_norms, dtype=float)))
        if np.any(self.block_norms < 0):
            raise ValueError("block norms must be nonnegative")


# ---------------------------------------------------------------------------
# JSON config interface
# ---------------------------------------------------------------------------

def _power_field(node, name, k=None):
    """Read {'dbm': x} or {'watts': x} (exactly one key) as linear watts."""
    if not isinstance(node, dict) or len(node) != 1 or next(iter(node)) not in ("dbm", "watts"):
        raise ConfigError(f"{name} must be an object with exactly one of 'dbm'/'watts'")
    unit, value = next(iter(node.items()))
    w = dbm_to_watts(value) if unit == "dbm" else np.asarray(value, dtype=float)
    return w


def config_from_json(source) -> NetworkConfig:
    """Build a validated NetworkConfig from a JSON file path, string or dict."""
    if isinstance(source, dict):
        raw = source
    else:
        text = source
        if not str(source).lstrip().startswith("{"):
            with open(source, "r", encoding="utf-8") as fh:
                text = fh.read()
        raw = json.loads(text)

    required = ["K", "M", "L", "p_max", "sigma2"]
    missing = [f for f in required if f not in raw]
    if missing:
        raise ConfigError(f"config missing required fields: {missing}")

    geom = raw.get("geometry", {})
    geometry = SceneGeometry(
        st_center=tuple(geom.get("st_center", (0.0, 0.0))),
        dt_center=tuple(geom.get("dt_center", (200.0, 0.0))),
        cluster_radius=float(geom.get("cluster_radius", 2.0)),
        irs_position=tuple(geom.get("irs_position", (120.0, 50.0))),
    )
    expo = raw.get("exponents", {})
    exponents = PathExponents(
        direct=float(expo.get("direct", 3.5)),
        st_irs=float(expo.get("st_irs", 2.0)),
        irs_dt=float(expo.get("irs_dt", 2.1)),
    )
    pm = raw.get("power_model", {})
    power_model = PowerModel(
        p_st_w=float(_power_field(pm["p_st"], "power_model.p_st")) if "p_st" in pm else PowerModel().p_st_w,
        p_dt_w=float(_power_field(pm["p_dt"], "power_model.p_dt")) if "p_dt" in pm else PowerModel().p_dt_w,
        xi_st=float(pm.get("xi_st", 1.2)),
        element_coeff_w=float(pm.get("element_coeff_w", 0.01)),
    )

    config = NetworkConfig(
        K=int(raw["K"]),
        M=int(raw["M"]),
        L=int(raw["L"]),
        N=int(raw.get("N", int(raw["M"]) * int(raw["L"]))),
        p_max=_power_field(raw["p_max"], "p_max"),
        sigma2=float(_power_field(raw["sigma2"], "sigma2")),
        carrier_hz=float(raw.get("carrier_hz", 2.3e9)),
        bandwidth_hz=float(raw.get("bandwidth_hz", 10e6)),
        Q=int(raw["Q"]) if raw.get("Q") is not None else None,
        geometry=geometry,
        exponents=exponents,
        ref_loss_db=float(raw.get("ref_loss_db", 30.0)),
        power_model=power_model,
        variance_model=str(raw.get("variance_model", "ref_loss")),
    )
    return validate(config)


def config_to_json(config: NetworkConfig) -> str:
    """Serialize a NetworkConfig back to the JSON schema (watts sub-keys)."""
    doc = {
        "K": config.K,
        "M": config.M,
        "L": config.L,
        "N": config.N,
        "p_max": {"watts": config.p_max.tolist()},
        "sigma2": {"watts": config.sigma2},
        "Q": config.Q,
        "carrier_hz": config.carrier_hz,
        "bandwidth_hz": config.bandwidth_hz,
        "geometry": {
            "st_center": list(config.geometry.st_center),
            "dt_center": list(config.geometry.dt_center),
            "cluster_radius": config.geometry.cluster_radius,
            "irs_position": list(config.geometry.irs_position),
        },
        "exponents": {
            "direct": config.exponents.direct,
            "st_irs": config.exponents.st_irs,
            "irs_dt": config.exponents.irs_dt,
        },
        "ref_loss_db": config.ref_loss_db,
        "power_model": {
            "p_st": {"watts": config.power_model.p_st_w},
            "p_dt": {"watts": config.power_model.p_dt_w},
            "xi_st": config.power_model.xi_st,
            "element_coeff_w": config.power_model.element_coeff_w,
        },
        "variance_model": config.variance_model,
    }
    return json.dumps(doc, indent=2)
