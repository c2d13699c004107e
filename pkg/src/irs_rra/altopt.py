"""Alternating max-min SINR refinement over powers and active-module phases.

Each outer iteration solves two surrogate subproblems built by partial
linearization at the current iterate: the phase subproblem keeps the concave
interference term and replaces the convex signal quadratic by its tangent
(a global lower bound), yielding a rotated-cone SOCP; the power subproblem
is linear in (p, gamma) outright.  Every candidate step is validated against
the true minimum SINR and rejected if it would decrease it, which enforces
monotone ascent regardless of surrogate quality.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import conic
from .channel import substream
from .metrics import AggregateH, precompute
from .model import ChannelSet, ModuleMask, NetworkConfig, PhaseProfile, PowerAllocation

__all__ = ["AltOptState", "init_state", "phase_step", "power_step", "algorithm1",
           "min_sinr", "maxmin_powers"]

ASCENT_SLACK = 1e-6
MAX_REJECTIONS = 3

_TAG_PHASE_INIT = 11


@dataclass
class AltOptState:
    """Iterate of the alternating optimization."""

    phases: PhaseProfile
    powers: PowerAllocation
    gamma_out: float
    iteration: int = 0
    history: list = field(default_factory=list)
    trust: float = 1.0
    rejections: int = 0
    flags: list = field(default_factory=list)


def _signal_terms(aggregate: AggregateH, phi: np.ndarray, p: np.ndarray, sigma2: float):
    """u_k = p_k |hbar_kk^H phi|^2 and v_k = sum_{j!=k} p_j |hbar_jk^H phi|^2 + sigma2."""
    inner = np.einsum("jkn,n->jk", np.conj(aggregate.h_bar), phi)
    mags = np.abs(inner) ** 2 * p[:, None]  # [j, k]
    u = np.diag(mags).copy()
    v = mags.sum(axis=0) - np.diag(mags) + sigma2
    return u, v


def min_sinr(aggregate: AggregateH, phi: np.ndarray, p: np.ndarray, sigma2: float) -> float:
    u, v = _signal_terms(aggregate, phi, p, sigma2)
    return float(np.min(u / v))


def init_state(channels: ChannelSet, mask: ModuleMask, config: NetworkConfig,
               seed: int, aggregate: AggregateH | None = None) -> AltOptState:
    """Half-power start with seeded random unit phases on the active modules."""
    if mask.cardinality == 0:
        raise ValueError("cannot optimize an empty module mask")
    aggregate = precompute(channels) if aggregate is None else aggregate
    rng = substream(seed, _TAG_PHASE_INIT)
    phi = np.zeros(config.N, dtype=np.complex128)
    act = mask.element_indices(config.L)
    phi[act] = np.exp(2j * np.pi * rng.random(act.size))
    p = config.p_max / 2.0
    gamma0 = min_sinr(aggregate, phi, p, config.sigma2)
    state = AltOptState(
        phases=PhaseProfile(phi=phi, L=config.L, mask=mask),
        powers=PowerAllocation(p=p),
        gamma_out=gamma0,
        history=[gamma0],
    )
    return state


def _solve_phase_subproblem(aggregate, config, mask, phi, p, gamma_t):
    """Convexified phase update at linearization point (phi, gamma_t).

    Returns (phi_new, status).  Variables are the active-element embedding
    plus the shifted target g' = gamma - gamma_t.
    """
    act = mask.element_indices(config.L)
    na = act.size
    K = config.K
    sigma2 = config.sigma2
    hbar_a = aggregate.h_bar[:, :, act]  # [j, k, active]

    n = 2 * na + 1
    gidx = 2 * na
    emb = conic.embed_complex(na, offset=0)
    obj = np.zeros(n)
    obj[gidx] = -1.0  # maximize the shifted target
    prob = conic.ConicProblem(n_vars=n, objective=obj)

    u_t, v_t = _signal_terms(aggregate, phi, p, sigma2)
    phi_a = phi[act]
    for k in range(K):
        scale = 1.0 / v_t[k]
        # tangent of the signal quadratic at phi: 2 Re(a^H x) - u_t
        a = p[k] * hbar_a[k, k] * np.vdot(hbar_a[k, k], phi_a)
        idx_r, val_r = emb.re_herm_row(2.0 * scale * a)
        const = (-u_t[k] - gamma_t * sigma2) * scale
        rhs_idx = np.concatenate([idx_r, [gidx]])
        rhs_val = np.concatenate([val_r, [-1.0]])
        # interference rows sqrt(gamma_t p_j / v_t) hbar_jk^H x, j != k
        ar, ac, av = [], [], []
        r = 0
        for j in range(K):
            if j == k:
                continue
            w = np.sqrt(gamma_t * p[j] * scale)
            idx, vals = emb.re_herm_row(w * hbar_a[j, k])
            ar.append(np.full(idx.size, r)); ac.append(idx); av.append(vals)
            idx, vals = emb.im_herm_row(w * hbar_a[j, k])
            ar.append(np.full(idx.size, r + 1)); ac.append(idx); av.append(vals)
            r += 2
        # rotated-cone encoding of ||w||^2 <= rhat: append the (rhat-1)/2 row
        ar.append(np.full(rhs_idx.size, r)); ac.append(rhs_idx); av.append(0.5 * rhs_val)
        m = r + 1
        b = np.zeros(m)
        b[-1] = 0.5 * (const - 1.0)
        A = (np.concatenate(ar), np.concatenate(ac), np.concatenate(av), m)
        prob.add_soc(A, b, (rhs_idx, 0.5 * rhs_val), 0.5 * (const + 1.0))
    for i in range(na):
        prob.add_soc(emb.magnitude_selector(i), None, None, 1.0)

    report = conic.solve(prob, tol_feas=1e-7, tol_gap=1e-7)
    if report.status != "optimal":
        return None, report.status
    phi_new = np.zeros(config.N, dtype=np.complex128)
    phi_new[act] = emb.extract(report.x)
    # numerical safety: fold tiny cap overshoot back inside the unit disc
    mag = np.abs(phi_new[act])
    over = mag > 1.0
    if np.any(over):
        phi_new[act[over]] /= mag[over]
    return phi_new, report.status


def phase_step(state: AltOptState, aggregate: AggregateH, config: NetworkConfig,
               mask: ModuleMask) -> AltOptState:
    """One accepted-or-rejected phase update; monotone in the true min-SINR."""
    phi = np.asarray(state.phases.phi)
    p = state.powers.p
    cand, status = _solve_phase_subproblem(aggregate, config, mask, phi, p, state.gamma_out)
    if cand is None:
        return replace(state, flags=state.flags + [f"phase:{status}"],
                       rejections=state.rejections + 1)
    if state.trust < 1.0:
        cand = phi + state.trust * (cand - phi)
    new_gamma = min_sinr(aggregate, cand, p, config.sigma2)
    if new_gamma < state.gamma_out * (1.0 - ASCENT_SLACK):
        return replace(state, trust=state.trust / 2.0, rejections=state.rejections + 1,
                       flags=state.flags + ["phase:rejected"])
    return replace(state, phases=PhaseProfile(phi=cand, L=config.L, mask=mask),
                   gamma_out=max(new_gamma, state.gamma_out), trust=1.0, rejections=0)


def _solve_power_lp(gains, p_t, gamma_t, config):
    """Linearized power subproblem: max gamma s.t. per-pair linear rows.

    ``gains[j, k]`` is the effective power gain ST j -> DT k at the current
    phases.  Returns (p_new, status).
    """
    K = config.K
    sigma2 = config.sigma2
    eta_t = gains.T @ p_t - np.diag(gains) * p_t + sigma2  # eta_k at p_t
    n = K + 1
    gidx = K
    obj = np.zeros(n)
    obj[gidx] = -1.0  # maximize the shifted target
    lower = np.r_[np.zeros(K), -np.inf]
    upper = np.r_[np.ones(K), np.inf]
    prob = conic.ConicProblem(n_vars=n, objective=obj, lower=lower, upper=upper)
    for k in range(K):
        row = np.zeros(n)
        row[k] = gains[k, k] * config.p_max[k] / eta_t[k]
        for j in range(K):
            if j != k:
                row[j] = -gamma_t * gains[j, k] * config.p_max[j] / eta_t[k]
        row[gidx] = -1.0
        prob.add_soc(None, None, row, -gamma_t * sigma2 / eta_t[k])
    report = conic.solve(prob, tol_feas=1e-9, tol_gap=1e-9)
    if report.status != "optimal":
        return None, report.status
    return np.clip(report.x[:K], 0.0, 1.0) * config.p_max, report.status


def _direct_min_sinr(gains, p, sigma2):
    sig = np.diag(gains) * p
    interference = gains.T @ p - sig
    return float(np.min(sig / (interference + sigma2)))


def maxmin_powers(gains, config: NetworkConfig, tol: float = 1e-6, max_iter: int = 100):
    """Iterate the linearized power program to a max-min fixed point.

    Used with raw direct-link gains for the no-surface baseline; returns
    (p, gamma) with gamma the achieved minimum SINR.
    """
    p = config.p_max / 2.0
    gamma = _direct_min_sinr(gains, p, config.sigma2)
    for _ in range(max_iter):
        p_new, status = _solve_power_lp(gains, p, gamma, config)
        if p_new is None:
            break
        g_new = _direct_min_sinr(gains, p_new, config.sigma2)
        if g_new < gamma * (1.0 - ASCENT_SLACK):
            break
        p = p_new
        if g_new <= gamma * (1.0 + tol):
            gamma = max(g_new, gamma)
            break
        gamma = g_new
    return p, gamma


def power_step(state: AltOptState, channels: ChannelSet, config: NetworkConfig,
               aggregate: AggregateH | None = None) -> AltOptState:
    """One linear-program power update at fixed phases."""
    aggregate = precompute(channels) if aggregate is None else aggregate
    phi = np.asarray(state.phases.phi)
    gains = np.abs(np.einsum("jkn,n->jk", np.conj(aggregate.h_bar), phi)) ** 2  # [j, k]
    p_t = state.powers.p
    p_new, status = _solve_power_lp(gains, p_t, state.gamma_out, config)
    if p_new is None:
        return replace(state, flags=state.flags + [f"power:{status}"],
                       rejections=state.rejections + 1)
    if state.trust < 1.0:
        p_new = p_t + state.trust * (p_new - p_t)
    new_gamma = min_sinr(aggregate, phi, p_new, config.sigma2)
    if new_gamma < state.gamma_out * (1.0 - ASCENT_SLACK):
        return replace(state, trust=state.trust / 2.0, rejections=state.rejections + 1,
                       flags=state.flags + ["power:rejected"])
    return replace(state, powers=PowerAllocation(p=p_new),
                   gamma_out=max(new_gamma, state.gamma_out), trust=1.0, rejections=0)


def algorithm1(channels: ChannelSet, mask: ModuleMask, config: NetworkConfig,
               tol: float = 1e-4, max_outer: int = 100, seed: int = 0,
               aggregate: AggregateH | None = None, trace_path=None) -> AltOptState:
    """Alternate phase and power updates until the min-SINR settles.

    The returned state's history is nondecreasing (up to 1e-6 slack) and its
    gamma_out matches the true min-SINR of (phases, powers).
    """
    aggregate = precompute(channels) if aggregate is None else aggregate
    state = init_state(channels, mask, config, seed, aggregate=aggregate)
    trace = [(0, "init", state.gamma_out, state.gamma_out, "ok")]
    for it in range(1, max_outer + 1):
        prev = state.gamma_out
        state = phase_step(state, aggregate, config, mask)
        trace.append((it, "phase", state.gamma_out,
                      min_sinr(aggregate, np.asarray(state.phases.phi), state.powers.p, config.sigma2),
                      state.flags[-1] if state.flags else "ok"))
        if state.rejections >= MAX_REJECTIONS:
            break
        state = power_step(state, channels, config, aggregate=aggregate)
        trace.append((it, "power", state.gamma_out,
                      min_sinr(aggregate, np.asarray(state.phases.phi), state.powers.p, config.sigma2),
                      state.flags[-1] if state.flags else "ok"))
        state = replace(state, iteration=it, history=state.history + [state.gamma_out])
        if state.rejections >= MAX_REJECTIONS:
            break
        if abs(state.gamma_out - prev) / max(state.gamma_out, 1e-12) < tol:
            break
    if trace_path is not None:
        with open(trace_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "step", "gamma_out", "min_sinr_true", "solver_status"])
            for row in trace:
                w.writerow([row[0], row[1], repr(row[2]), repr(row[3]), row[4]])
    return state
