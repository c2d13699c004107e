"""Group-sparse module selection: feasibility SOCP, bisection, thresholding.

For a target SINR gamma, the feasibility program minimizes the weighted sum
of row-block Frobenius norms of the N x K relaxed matrix subject to
second-order-cone SINR constraints, per-element power caps, and the
imaginary-part pinning that makes the cone right-hand sides real.  The
largest gamma whose optimal weighted norm stays below the budget delta is
found by bisection; active modules are read off the block-norm pattern.

Internally the column k variables are scaled by 1/sqrt(p_max_k) and the cone
rows by 1/sigma so the solver sees O(1) data; results are reported unscaled.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import conic
from .metrics import AggregateH
from .model import ModuleMask, NetworkConfig, SparseSolution

__all__ = [
    "SparsityParams",
    "BracketError",
    "DegenerateSolutionError",
    "alpha_from_delta",
    "delta_upper_bound",
    "build_p3",
    "extract_phi_bar",
    "feasibility_value",
    "bisect_gamma",
    "identify_modules",
    "block_norms",
]

GAMMA_HI_CAP = 2.0**40


class BracketError(RuntimeError):
    """Raised when no infeasible upper SINR target can be found."""


class DegenerateSolutionError(RuntimeError):
    """Raised when the relaxed solution is identically zero (empty mask)."""


def alpha_from_delta(delta: float) -> float:
    """Norm weight 1/(delta + 0.01); the offset keeps alpha finite as delta -> 0."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return 1.0 / (delta + 0.01)


def delta_upper_bound(config: NetworkConfig) -> float:
    """Upper end of the useful budget range for a given scenario."""
    inner = 16.0 * config.M * config.K * config.N * float(np.max(config.p_max))
    return -0.005 + 0.5 * np.sqrt(0.01**2 + np.sqrt(inner))


@dataclass
class SparsityParams:
    """Knobs for the sparse stage; ``alpha`` defaults to 1/(delta+0.01)."""

    delta: float
    alpha: float | None = None
    gamma_lo: float = 0.0
    gamma_hi: float | None = None
    gamma_tol: float = 1e-3  # relative bracket width at termination
    block_threshold_rel: float = 1e-4
    solver_tol_feas: float = 1e-7
    solver_tol_gap: float = 1e-7
    solver_max_iter: int = 100

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.alpha is None:
            self.alpha = alpha_from_delta(self.delta)
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


def _scaled_data(aggregate: AggregateH, config: NetworkConfig):
    """h_tilde[j, k] = h_bar[j, k] * sqrt(p_max_j) / sigma."""
    s = np.sqrt(config.p_max)
    sigma = np.sqrt(config.sigma2)
    return aggregate.h_bar * (s[:, None, None] / sigma)


def build_p3(aggregate: AggregateH, config: NetworkConfig, gamma: float,
             params: SparsityParams) -> conic.ConicProblem:
    """Assemble the per-gamma feasibility SOCP over the scaled variables.

    Variables: K column embeddings (2N reals each, re/im interleaved)
    followed by M epigraph scalars bounding the row-block norms in original
    (unscaled) units.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    K, M, L, N = config.K, config.M, config.L, config.N
    htil = _scaled_data(aggregate, config)
    scale = np.sqrt(config.p_max)

    n = 2 * N * K + M
    emb = [conic.embed_complex(N, offset=2 * N * k) for k in range(K)]
    t0 = 2 * N * K

    obj = np.zeros(n)
    obj[t0:] = params.alpha
    prob = conic.ConicProblem(n_vars=n, objective=obj)

    # row-block norm epigraphs: ||Phi_bar^m||_F <= t_m, columns carry sqrt(p_max_k)
    for m in range(M):
        cols, vals = [], []
        for k in range(K):
            base = 2 * N * k + 2 * m * L
            cols.append(np.arange(base, base + 2 * L))
            vals.append(np.full(2 * L, scale[k]))
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        A = (np.arange(cols.size), cols, vals, cols.size)
        prob.add_soc(A, None, (np.array([t0 + m]), np.array([1.0])), 0.0)

    # SINR cones: ||[stack_j h~_jk^H psi_j ; 1]|| <= sqrt(1+1/gamma) Re(h~_kk^H psi_k)
    coef = np.sqrt(1.0 + 1.0 / gamma)
    for k in range(K):
        ar, ac, av = [], [], []
        for j in range(K):
            idx, vals = emb[j].re_herm_row(htil[j, k])
            ar.append(np.full(idx.size, 2 * j))
            ac.append(idx)
            av.append(vals)
            idx, vals = emb[j].im_herm_row(htil[j, k])
            ar.append(np.full(idx.size, 2 * j + 1))
            ac.append(idx)
            av.append(vals)
        A = (np.concatenate(ar), np.concatenate(ac), np.concatenate(av), 2 * K + 1)
        b = np.zeros(2 * K + 1)
        b[-1] = 1.0  # sigma / sigma
        idx, vals = emb[k].re_herm_row(htil[k, k])
        prob.add_soc(A, b, (idx, coef * vals), 0.0)
        ie, ve = emb[k].im_herm_row(htil[k, k])
        prob.add_eq((ie, ve), 0.0)

    # per-element power caps become unit-magnitude cones after scaling
    for k in range(K):
        for nn in range(N):
            prob.add_soc(emb[k].magnitude_selector(nn), None, None, 1.0)
    return prob


def extract_phi_bar(x: np.ndarray, config: NetworkConfig) -> np.ndarray:
    """Unscale a solver solution back to the N x K matrix."""
    K, N = config.K, config.N
    phi_bar = np.empty((N, K), dtype=np.complex128)
    for k in range(K):
        emb = conic.embed_complex(N, offset=2 * N * k)
        phi_bar[:, k] = np.sqrt(config.p_max[k]) * emb.extract(x)
    return phi_bar


def block_norms(phi_bar: np.ndarray, config: NetworkConfig) -> np.ndarray:
    """Frobenius norm of each of the M row blocks."""
    blocks = np.asarray(phi_bar).reshape(config.M, config.L, config.K)
    return np.sqrt(np.sum(np.abs(blocks) ** 2, axis=(1, 2)))


def feasibility_value(aggregate: AggregateH, config: NetworkConfig, gamma: float,
                      params: SparsityParams):
    """Solve the feasibility SOCP at ``gamma``.

    Returns (value, solution): ``value`` is the weighted block-norm sum
    alpha * sum_m ||Phi_bar^m||_F (infinity when the program is infeasible
    or could not be certified), and ``solution`` the SparseSolution at this
    gamma (zero matrix when infeasible).  The target is feasible at this
    gamma iff value <= delta.
    """
    prob = build_p3(aggregate, config, gamma, params)
    report = conic.solve(prob, tol_feas=params.solver_tol_feas,
                         tol_gap=params.solver_tol_gap, max_iter=params.solver_max_iter)
    if report.status == "numerical_failure":
        raise FloatingPointError(f"conic solver failed at gamma={gamma}: {report.message}")
    if report.status != "optimal":
        zero = np.zeros((config.N, config.K), dtype=np.complex128)
        sol = SparseSolution(phi_bar=zero, block_norms=np.zeros(config.M), gamma=gamma, objective=np.inf)
        return np.inf, sol
    phi_bar = extract_phi_bar(report.x, config)
    norms = block_norms(phi_bar, config)
    value = params.alpha * float(norms.sum())
    sol = SparseSolution(phi_bar=phi_bar, block_norms=norms, gamma=gamma, objective=value)
    return value, sol


def bisect_gamma(aggregate: AggregateH, config: NetworkConfig, params: SparsityParams,
                 trace_path=None, cache: dict | None = None) -> SparseSolution:
    """Largest gamma (within gamma_tol relative) whose feasibility value
    stays within the budget delta, plus the relaxed matrix achieving it.

    ``cache`` optionally maps gamma -> (norm_sum, solution) and may be shared
    by sweeps over several delta values on the same channels: the minimizer
    does not depend on the norm weight, only the feasibility threshold does.
    """
    evals = cache if cache is not None else {}
    trace = []

    def feasible(g):
        if g not in evals:
            value, sol = feasibility_value(aggregate, config, g, params)
            # store the weight-free norm sum so other delta sweeps can reuse it
            evals[g] = (value / params.alpha, sol)
        norm_sum, sol = evals[g]
        value = params.alpha * norm_sum
        ok = value <= params.delta
        trace.append((g, value, ok, sol))
        return ok, sol

    lo = params.gamma_lo
    lo_sol = None
    if lo > 0:
        ok, sol = feasible(lo)
        if ok:
            lo_sol = sol
        else:
            lo, lo_sol = 0.0, None
    hi = params.gamma_hi
    if hi is None:
        g = max(1.0, 2.0 * lo)
        while True:
            ok, sol = feasible(g)
            if ok:
                lo, lo_sol = g, sol
                g *= 2.0
                if g > GAMMA_HI_CAP:
                    raise BracketError(f"still feasible at gamma cap {GAMMA_HI_CAP:g}")
            else:
                hi = g
                break
    while hi - lo > params.gamma_tol * max(lo, 1e-9):
        mid = 0.5 * (lo + hi)
        ok, sol = feasible(mid)
        if ok:
            lo, lo_sol = mid, sol
        else:
            hi = mid
    if trace_path is not None:
        _write_trace(trace_path, trace, config)
    if lo_sol is None:
        zero = np.zeros((config.N, config.K), dtype=np.complex128)
        return SparseSolution(phi_bar=zero, block_norms=np.zeros(config.M), gamma=0.0, objective=0.0)
    norms = lo_sol.block_norms
    return SparseSolution(phi_bar=lo_sol.phi_bar, block_norms=norms, gamma=lo,
                          objective=params.alpha * float(norms.sum()))


def _write_trace(path, trace, config):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma", "value", "feasible"] + [f"block_norm_{m}" for m in range(config.M)])
        for g, value, ok, sol in trace:
            w.writerow([repr(g), repr(value), int(ok)] + [repr(float(t)) for t in sol.block_norms])


def identify_modules(sol: SparseSolution, config: NetworkConfig,
                     params: SparsityParams) -> ModuleMask:
    """Threshold the row-block norms into an activation mask.

    A module is active when its norm exceeds block_threshold_rel times the
    largest norm; if a budget Q is configured and more modules pass, the Q
    largest survive (ties to the lower index).
    """
    norms = np.asarray(sol.block_norms, dtype=float)
    top = float(norms.max(initial=0.0))
    if top <= 0.0:
        raise DegenerateSolutionError("all-zero relaxed solution: no module carries energy")
    active = norms > params.block_threshold_rel * top
    if config.Q is not None and int(active.sum()) > config.Q:
        # stable sort on (-norm, index) keeps the lower index on ties
        order = np.lexsort((np.arange(config.M), -norms))
        keep = np.zeros(config.M, dtype=bool)
        keep[order[: config.Q]] = True
        active &= keep
    return ModuleMask(active=active)
