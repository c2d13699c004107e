"""Self-contained invariant and oracle batteries, exposed via the CLI.

The grid-search oracle solves tiny SOCPs by iteratively refined exhaustive
evaluation over a box; it shares no code path with the interior-point method
and is the independent reference the solver is certified against.
"""

from __future__ import annotations

import numpy as np

from . import conic, metrics, sparsity
from .channel import draw_channels, place_terminals
from .model import (ModuleMask, NetworkConfig, PhaseProfile, PowerAllocation,
                    block_view, validate)

__all__ = ["grid_search_socp", "random_feasible_socp", "invariant_suite", "oracle_suite", "run_suite"]


# ---------------------------------------------------------------------------
# independent grid-search oracle
# ---------------------------------------------------------------------------

def _feasible_mask(problem: conic.ConicProblem, X: np.ndarray, tol=1e-9) -> np.ndarray:
    """Vectorized feasibility of each row of X (npts, n)."""
    ok = np.ones(X.shape[0], dtype=bool)
    if problem.lower is not None:
        ok &= np.all(X >= np.asarray(problem.lower) - tol, axis=1)
    if problem.upper is not None:
        ok &= np.all(X <= np.asarray(problem.upper) + tol, axis=1)
    for row, rhs in problem.eq_constraints:
        ok &= np.abs(X @ np.asarray(row) - rhs) <= tol
    for con in problem.soc_constraints:
        if con.c_row is None:
            lin = np.full(X.shape[0], con.d)
        else:
            idx, vals = conic._as_row(con.c_row, problem.n_vars)
            lin = X[:, idx] @ vals + con.d
        if con.rows():
            rows, cols, vals_a, m = con.A
            AX = np.zeros((X.shape[0], m))
            np.add.at(AX, (slice(None), rows), X[:, cols] * vals_a)
            norm = np.linalg.norm(AX + (con.b if con.b is not None else 0.0), axis=1)
        else:
            norm = 0.0
        ok &= norm <= lin + tol
    return ok


def _max_feasible_steps(problem, x, V, t_hi, rounds=50):
    """Largest t per row of V (unit directions) with x + t v feasible.

    Feasibility along a ray is an interval on a convex set, so one batched
    bisection per direction is exact.
    """
    D = V.shape[0]
    lo_t = np.zeros(D)
    hi_t = np.full(D, t_hi)
    at_end = _feasible_mask(problem, x[None, :] + t_hi * V)
    lo_t[at_end] = t_hi
    todo = ~at_end
    for _ in range(rounds):
        if not np.any(todo):
            break
        mid = 0.5 * (lo_t + hi_t)
        ok = _feasible_mask(problem, x[None, :] + mid[:, None] * V)
        lo_t = np.where(todo & ok, mid, lo_t)
        hi_t = np.where(todo & ~ok, mid, hi_t)
    return lo_t


def grid_search_socp(problem: conic.ConicProblem, lo, hi, width: int = 2,
                     max_rounds: int = 400):
    """Minimize the linear objective by exhaustive grid seeding plus greedy
    boundary line searches over a fixed direction stencil.

    A dense coarse grid seeds the incumbent; afterwards every stencil
    direction (the integer-ratio grid {-width..width}^n) plus the recent
    movement directions is line-searched to the feasibility boundary by
    bisection, and the step with the best total objective gain is taken at
    90% of its feasible length so the iterate stays strictly inside.  The
    momentum directions let the search track curved constraint boundaries
    that the fixed stencil angles cannot follow.  Returns (best_value,
    best_x); (inf, None) when no feasible point is found on the seed grid.
    """
    n = problem.n_vars
    c = np.asarray(problem.objective, dtype=float)
    lo = np.full(n, lo, dtype=float) if np.isscalar(lo) else np.asarray(lo, dtype=float)
    hi = np.full(n, hi, dtype=float) if np.isscalar(hi) else np.asarray(hi, dtype=float)
    span = float(np.max(hi - lo))
    offs = np.arange(-width, width + 1)
    mesh = np.meshgrid(*([offs] * n), indexing="ij")
    stencil = np.stack([m.ravel() for m in mesh], axis=1).astype(float)
    stencil = stencil[np.any(stencil != 0, axis=1)]
    stencil /= np.linalg.norm(stencil, axis=1, keepdims=True)

    axes = [np.linspace(lo[i], hi[i], 9) for i in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=1)
    ok = _feasible_mask(problem, X)
    if not np.any(ok):
        return np.inf, None
    vals = X[ok] @ c
    i = int(np.argmin(vals))
    best_val, best_x = float(vals[i]), X[ok][i]

    # zigzag moves hug walls; lagged anchor directions recover the corridor
    hist = [best_x]
    for _ in range(max_rounds):
        dirs = [stencil]
        for lag in (1, 2, 4, 8, 16, 32):
            if len(hist) > lag:
                d = best_x - hist[-1 - lag]
                nd = np.linalg.norm(d)
                if nd > 0:
                    dirs.append((d / nd)[None, :])
        V = np.vstack(dirs)
        steps = _max_feasible_steps(problem, best_x, V, t_hi=2.0 * span)
        gains = 0.9 * steps * (V @ c)
        j = int(np.argmin(gains))
        if gains[j] >= -1e-14 * (1.0 + abs(best_val)):
            break
        xt = np.clip(best_x + 0.9 * steps[j] * V[j], lo, hi)
        if not _feasible_mask(problem, xt[None, :])[0]:
            break
        val = float(c @ xt)
        if val >= best_val - 1e-15:
            break
        best_val, best_x = val, xt
        hist.append(best_x)
    # the moving grid can pinch at curved-boundary kinks; finish with an
    # ellipsoid shrink, which convexity guarantees to close the gap
    val, x = _ellipsoid_refine(problem, best_x, 1.5 * span)
    if val < best_val:
        best_val, best_x = val, x
    return best_val, best_x


def _ellipsoid_refine(problem: conic.ConicProblem, x0, radius, feas_tol=1e-9):
    """Central-cut ellipsoid minimization seeded at x0 (no equality support)."""
    n = problem.n_vars
    if n < 2 or problem.eq_constraints:
        return np.inf, None
    c = np.asarray(problem.objective, dtype=float)
    y = np.asarray(x0, dtype=float).copy()
    P = radius**2 * np.eye(n)
    best_val, best_x = np.inf, None
    lo = np.asarray(problem.lower, dtype=float) if problem.lower is not None else None
    hi = np.asarray(problem.upper, dtype=float) if problem.upper is not None else None
    for _ in range(400 * n):
        g = None
        if lo is not None and np.any(lo - y > 0):
            i = int(np.argmax(lo - y))
            g = np.zeros(n)
            g[i] = -1.0
        elif hi is not None and np.any(y - hi > 0):
            i = int(np.argmax(y - hi))
            g = np.zeros(n)
            g[i] = 1.0
        else:
            for con in problem.soc_constraints:
                idx, vals = conic._as_row(con.c_row, n)
                rhs = float(vals @ y[idx]) + con.d
                if con.rows():
                    r = con.a_dot(y) + (con.b if con.b is not None else 0.0)
                    nr = float(np.linalg.norm(r))
                else:
                    r, nr = None, 0.0
                if nr - rhs > 0:
                    g = np.zeros(n)
                    np.add.at(g, idx, -vals)
                    if nr > 0:
                        rows, cols, avals, m = con.A
                        np.add.at(g, cols, avals * r[rows] / nr)
                    break
        if g is None:
            if _feasible_mask(problem, y[None, :], tol=feas_tol)[0]:
                val = float(c @ y)
                if val < best_val:
                    best_val, best_x = val, y.copy()
            g = c
        Pg = P @ g
        gPg = float(g @ Pg)
        if gPg <= 0 or not np.isfinite(gPg):
            break
        gn = Pg / np.sqrt(gPg)
        y = y - gn / (n + 1)
        P = (n * n / (n * n - 1.0)) * (P - (2.0 / (n + 1)) * np.outer(gn, gn))
    return best_val, best_x


def random_feasible_socp(rng: np.random.Generator, n_max: int = 4):
    """Tiny random SOCP with x = 0 strictly feasible (margin >= 0.5)."""
    n = int(rng.integers(2, n_max + 1))
    prob = conic.ConicProblem(
        n_vars=n,
        objective=rng.normal(size=n),
        lower=-1.5 * np.ones(n),
        upper=1.5 * np.ones(n),
    )
    for _ in range(int(rng.integers(1, 4))):
        m = int(rng.integers(1, 4))
        A = rng.normal(size=(m, n))
        b = 0.3 * rng.normal(size=m)
        c_row = 0.3 * rng.normal(size=n)
        d = float(np.linalg.norm(b) + 0.5 + rng.random())
        prob.add_soc(A, b, c_row, d)
    return prob


# ---------------------------------------------------------------------------
# batteries
# ---------------------------------------------------------------------------

def _desk_config(K=2, M=3, L=2, Q=None, seed_independent=True) -> NetworkConfig:
    from .model import dbm_to_watts

    return validate(NetworkConfig(
        K=K, M=M, L=L, N=M * L,
        p_max=dbm_to_watts(20.0),
        sigma2=float(dbm_to_watts(-90.0)),
        Q=Q,
    ))


def invariant_suite(seed: int = 0):
    """Structural invariants checked on random data; returns (name, ok, detail)."""
    rng = np.random.default_rng(seed)
    out = []

    v = rng.normal(size=12) + 1j * rng.normal(size=12)
    parts = [block_view(v, m, 3) for m in (1, 2, 3, 4)]
    out.append(("block_view round trip", bool(np.array_equal(np.concatenate(parts), v)), ""))

    config = _desk_config(K=3, M=4, L=3)
    geom = place_terminals(config, seed=5)
    ch = draw_channels(config, geom, seed=5)
    agg = metrics.precompute(ch)
    phi = np.exp(2j * np.pi * rng.random(config.N))
    p = config.p_max * rng.random(config.K)
    prof = PhaseProfile(phi=phi, L=config.L)
    s1 = metrics.sinr_direct(ch, prof, PowerAllocation(p=p), config)
    s2 = metrics.sinr_quadratic(agg, phi[:, None] * np.sqrt(p)[None, :], config.sigma2)
    err = float(np.max(np.abs(s1 - s2) / s2))
    out.append(("sinr form equivalence", err < 1e-10, f"rel err {err:.2e}"))

    rot = np.exp(1j * 0.7)
    s3 = metrics.sinr_direct(ch, PhaseProfile(phi=rot * phi, L=config.L), PowerAllocation(p=p), config)
    err = float(np.max(np.abs(s3 - s1) / s1))
    out.append(("global phase invariance", err < 1e-10, f"rel err {err:.2e}"))

    X = rng.normal(size=(config.N, config.K)) + 1j * rng.normal(size=(config.N, config.K))
    Y = rng.normal(size=(config.N, config.K)) + 1j * rng.normal(size=(config.N, config.K))
    nx = sparsity.block_norms(X, config).sum()
    ny = sparsity.block_norms(Y, config).sum()
    nxy = sparsity.block_norms(X + Y, config).sum()
    lam = 2.37
    nlx = sparsity.block_norms(lam * X, config).sum()
    ok = (nx >= 0 and nxy <= nx + ny + 1e-12 and abs(nlx - lam * nx) < 1e-9 * nx
          and sparsity.block_norms(np.zeros_like(X), config).sum() == 0.0)
    out.append(("mixed norm axioms", bool(ok), ""))

    pm = _desk_config(K=5, M=10, L=20)
    powers = PowerAllocation(p=np.full(5, 0.1))
    mask = ModuleMask(active=np.ones(10, dtype=bool))
    total = metrics.total_power(powers, mask, pm)
    out.append(("power model arithmetic", abs(total - 2.70) < 1e-12, f"{total!r} W"))
    return out


def oracle_suite(seed: int = 0, n_random: int = 40):
    """Solver-vs-oracle comparisons; returns (name, ok, detail)."""
    rng = np.random.default_rng(seed)
    out = []

    prob = conic.ConicProblem(n_vars=1, objective=np.array([1.0]))
    prob.add_soc(np.array([[1.0]]), None, None, 1.0)
    rep = conic.solve(prob)
    out.append(("unit cone minimum", rep.status == "optimal" and abs(rep.objective_value + 1) < 1e-6,
                f"{rep.objective_value!r}"))

    prob = conic.ConicProblem(n_vars=1, objective=np.array([0.0]))
    prob.add_soc(np.array([[1.0]]), None, None, 0.5)
    prob.add_eq(np.array([1.0]), 1.0)
    rep = conic.solve(prob)
    out.append(("contradiction is infeasible", rep.status == "infeasible", rep.status))

    worst = 0.0
    failures = 0
    for _ in range(n_random):
        prob = random_feasible_socp(rng)
        rep = conic.solve(prob)
        if rep.status != "optimal":
            failures += 1
            continue
        ref, _ = grid_search_socp(prob, -1.5, 1.5)
        worst = max(worst, abs(rep.objective_value - ref))
    out.append(("random SOCPs vs grid oracle",
                failures == 0 and worst < 1e-3,
                f"worst gap {worst:.2e}, non-optimal {failures}/{n_random}"))
    return out


def run_suite(name: str, seed: int = 0):
    if name == "invariants":
        return invariant_suite(seed)
    if name == "oracle":
        return oracle_suite(seed)
    raise ValueError(f"unknown suite {name!r} (use 'invariants' or 'oracle')")
