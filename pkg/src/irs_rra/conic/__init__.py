"""Solver-agnostic second-order cone programming layer.

A :class:`ConicProblem` is a linear objective over real scalar variables
subject to second-order cone constraints ||A x + b|| <= c_row.x + d, linear
equalities, and optional box bounds.  :func:`solve` compiles it to conic
standard form and runs the bundled interior-point method; every "optimal"
report is re-verified by :func:`check_solution`, an independent residual
checker that never trusts the solver's internal numbers.

Complex data enters through :class:`ComplexEmbedding`: complex entry i maps
to real variables (re at 2i+offset, im at 2i+1+offset).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .cones import ConeLayout
from .ipm import StandardForm, ipm_solve

__all__ = [
    "SOCConstraint",
    "ConicProblem",
    "SolveReport",
    "ComplexEmbedding",
    "embed_complex",
    "solve",
    "check_solution",
    "dump_problem",
]


@dataclass
class SOCConstraint:
    """||A x + b||_2 <= c_row . x + d.  A may have zero rows (a plain linear
    inequality) and c_row may be None (constant right-hand side).

    A is stored in triplet form (rows, cols, vals, m); dense/sparse inputs
    are converted on construction.
    """

    A: object  # (rows, cols, vals, m) triplet, (m, n) sparse/dense, or None
    b: np.ndarray | None
    c_row: np.ndarray | None
    d: float = 0.0

    def __post_init__(self):
        if self.A is not None and not isinstance(self.A, tuple):
            coo = sp.coo_matrix(self.A)
            self.A = (coo.row.astype(np.int64), coo.col.astype(np.int64),
                      coo.data.astype(float), int(coo.shape[0]))

    def rows(self):
        return 0 if self.A is None else int(self.A[3])

    def a_dot(self, x):
        """A @ x from the triplet form."""
        rows, cols, vals, m = self.A
        out = np.zeros(m)
        np.add.at(out, rows, vals * x[cols])
        return out


@dataclass
class ConicProblem:
    n_vars: int
    objective: np.ndarray
    soc_constraints: list = field(default_factory=list)
    eq_constraints: list = field(default_factory=list)  # (row, rhs)
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def add_soc(self, A, b, c_row, d=0.0):
        self.soc_constraints.append(SOCConstraint(A, b, c_row, float(d)))

    def add_eq(self, row, rhs):
        self.eq_constraints.append((np.asarray(row, dtype=float), float(rhs)))


@dataclass
class SolveReport:
    status: str  # optimal | infeasible | max_iterations | numerical_failure
    x: np.ndarray
    objective_value: float
    max_primal_residual: float
    max_cone_violation: float
    iterations: int
    message: str = ""


@dataclass(frozen=True)
class ComplexEmbedding:
    """Index map between complex entries and interleaved real variables."""

    n_complex: int
    offset: int = 0

    @property
    def n_real(self):
        return 2 * self.n_complex

    def re_index(self, i):
        return self.offset + 2 * i

    def im_index(self, i):
        return self.offset + 2 * i + 1

    def indices(self):
        """All real variable indices of this embedded vector, interleaved."""
        return self.offset + np.arange(2 * self.n_complex)

    def re_herm_row(self, a):
        """Sparse row (idx, vals) of Re(a^H x): re coeff Re(a), im coeff Im(a)."""
        a = np.asarray(a, dtype=np.complex128)
        idx = self.indices()
        vals = np.empty(2 * a.size)
        vals[0::2] = a.real
        vals[1::2] = a.imag
        return idx, vals

    def im_herm_row(self, a):
        """Sparse row (idx, vals) of Im(a^H x): re coeff -Im(a), im coeff Re(a)."""
        a = np.asarray(a, dtype=np.complex128)
        idx = self.indices()
        vals = np.empty(2 * a.size)
        vals[0::2] = -a.imag
        vals[1::2] = a.real
        return idx, vals

    def magnitude_selector(self, i, n_vars=None):
        """Triplet for the 2-row matrix picking (re_i, im_i) of |x_i| <= r cones."""
        rows = np.array([0, 1], dtype=np.int64)
        cols = np.array([self.re_index(i), self.im_index(i)], dtype=np.int64)
        return (rows, cols, np.ones(2), 2)

    def extract(self, x_real):
        """Complex vector from a real solution vector."""
        seg = np.asarray(x_real[self.offset : self.offset + 2 * self.n_complex])
        return seg[0::2] + 1j * seg[1::2]


def embed_complex(v_len: int, offset: int = 0) -> ComplexEmbedding:
    """Deterministic complex->real index map: re at 2i, im at 2i+1."""
    return ComplexEmbedding(n_complex=int(v_len), offset=int(offset))


def _as_row(row, n):
    """Normalize a dense vector or (idx, vals) pair to (idx, vals)."""
    if row is None:
        return np.empty(0, dtype=int), np.empty(0)
    if isinstance(row, tuple):
        idx, vals = row
        return np.asarray(idx, dtype=int), np.asarray(vals, dtype=float)
    row = np.asarray(row, dtype=float).ravel()
    idx = np.flatnonzero(row)
    return idx, row[idx]


def compile_problem(problem: ConicProblem) -> StandardForm:
    """Lower a ConicProblem to conic standard form (orthant rows first)."""
    n = problem.n_vars
    c = np.asarray(problem.objective, dtype=float)
    if c.shape != (n,):
        raise ValueError("objective length must equal n_vars")

    rows_i, cols_i, vals_i = [], [], []
    h_parts = []
    nrow = 0

    def put(r, idx, vals):
        rows_i.append(np.full(len(idx), r, dtype=int))
        cols_i.append(np.asarray(idx, dtype=int))
        vals_i.append(np.asarray(vals, dtype=float))

    # orthant: bounds, then zero-row SOCs as linear inequalities
    if problem.lower is not None:
        lo = np.asarray(problem.lower, dtype=float)
        for j in np.flatnonzero(np.isfinite(lo)):
            put(nrow, [j], [-1.0])  # s = x_j - lo >= 0
            h_parts.append(-lo[j])
            nrow += 1
    if problem.upper is not None:
        hi = np.asarray(problem.upper, dtype=float)
        for j in np.flatnonzero(np.isfinite(hi)):
            put(nrow, [j], [1.0])  # s = hi - x_j >= 0
            h_parts.append(hi[j])
            nrow += 1
    lin_socs = [s for s in problem.soc_constraints if s.rows() == 0]
    q_socs = [s for s in problem.soc_constraints if s.rows() > 0]
    for con in lin_socs:
        idx, vals = _as_row(con.c_row, n)
        put(nrow, idx, -vals)  # s = c_row.x + d >= 0
        h_parts.append(con.d)
        nrow += 1
    l = nrow

    q_dims = []
    for con in q_socs:
        m = con.rows()
        idx, vals = _as_row(con.c_row, n)
        put(nrow, idx, -vals)
        h_parts.append(con.d)
        nrow += 1
        arows, acols, avals, _ = con.A
        rows_i.append(nrow + arows)
        cols_i.append(acols)
        vals_i.append(-avals)
        bvec = np.zeros(m) if con.b is None else np.asarray(con.b, dtype=float)
        h_parts.extend(bvec.tolist())
        nrow += m
        q_dims.append(m + 1)

    if nrow == 0:
        raise ValueError("problem has no cone or bound constraints")
    G = sp.coo_matrix(
        (np.concatenate(vals_i), (np.concatenate(rows_i), np.concatenate(cols_i))),
        shape=(nrow, n),
    ).tocsr()
    h = np.asarray(h_parts, dtype=float)

    p = len(problem.eq_constraints)
    if p:
        er, ec, ev, rhs = [], [], [], []
        for i, (row, val) in enumerate(problem.eq_constraints):
            idx, vals = _as_row(row, n)
            er.append(np.full(len(idx), i, dtype=int))
            ec.append(idx)
            ev.append(vals)
            rhs.append(val)
        A = sp.coo_matrix((np.concatenate(ev), (np.concatenate(er), np.concatenate(ec))), shape=(p, n)).tocsr()
        b = np.asarray(rhs, dtype=float)
    else:
        A, b = None, None

    return StandardForm(c, G, h, A, b, ConeLayout(l, q_dims))


def check_solution(problem: ConicProblem, x: np.ndarray):
    """Independent residual check straight from the problem description.

    Returns (max_primal_residual, max_cone_violation): the first covers
    equalities and bounds, the second second-order cone violations.
    """
    x = np.asarray(x, dtype=float)
    primal = 0.0
    for row, rhs in problem.eq_constraints:
        idx, vals = _as_row(row, problem.n_vars)
        primal = max(primal, abs(float(vals @ x[idx]) - rhs))
    if problem.lower is not None:
        lo = np.asarray(problem.lower, dtype=float)
        fin = np.isfinite(lo)
        if fin.any():
            primal = max(primal, float(np.max(lo[fin] - x[fin], initial=0.0)))
    if problem.upper is not None:
        hi = np.asarray(problem.upper, dtype=float)
        fin = np.isfinite(hi)
        if fin.any():
            primal = max(primal, float(np.max(x[fin] - hi[fin], initial=0.0)))
    cone = 0.0
    for con in problem.soc_constraints:
        idx, vals = _as_row(con.c_row, problem.n_vars)
        rhs = float(vals @ x[idx]) + con.d
        lhs = 0.0
        if con.rows():
            r = con.a_dot(x)
            if con.b is not None:
                r = r + con.b
            lhs = float(np.linalg.norm(r))
        cone = max(cone, lhs - rhs)
    return primal, max(cone, 0.0)


def solve(problem: ConicProblem, tol_feas: float = 1e-7, tol_gap: float = 1e-7,
          max_iter: int = 100) -> SolveReport:
    """Solve and certify.  "optimal" is only reported when the independent
    residual checker passes at tol_feas; ambiguous terminations come back as
    max_iterations, never as infeasible."""
    form = compile_problem(problem)
    try:
        raw = ipm_solve(form, tol_feas=tol_feas, tol_gap=tol_gap, max_iter=max_iter)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        nan = float("nan")
        return SolveReport("numerical_failure", np.full(problem.n_vars, nan), nan, nan, nan, 0, str(exc))

    x = np.asarray(raw.get("x", np.zeros(problem.n_vars)))
    primal, cone = check_solution(problem, x)
    status = raw["status"]
    message = raw.get("message", "")
    if status == "optimal":
        if not (primal <= tol_feas and cone <= tol_feas):
            status, message = "max_iterations", "residual certification failed"
    elif status == "unbounded":
        status, message = "numerical_failure", "objective unbounded below (dual infeasible)"
    obj = float(form.c @ x) if status == "optimal" else float("nan")
    return SolveReport(status, x, obj, primal, cone, raw["iterations"], message)


def dump_problem(problem: ConicProblem, path):
    """Write the plain-text interchange dump (see docs/conic_format.md)."""
    lines = [f"SOCP {problem.n_vars}"]
    obj = np.asarray(problem.objective, dtype=float)
    idx = np.flatnonzero(obj)
    lines.append("MIN " + " ".join(f"{i}:{obj[i]!r}" for i in idx))
    for row, rhs in problem.eq_constraints:
        i, v = _as_row(row, problem.n_vars)
        lines.append("EQ " + " ".join(f"{a}:{b!r}" for a, b in zip(i, v)) + f" = {rhs!r}")
    if problem.lower is not None or problem.upper is not None:
        lo = problem.lower if problem.lower is not None else np.full(problem.n_vars, -np.inf)
        hi = problem.upper if problem.upper is not None else np.full(problem.n_vars, np.inf)
        for j in range(problem.n_vars):
            if np.isfinite(lo[j]) or np.isfinite(hi[j]):
                lines.append(f"BOX {j} {lo[j]!r} {hi[j]!r}")
    for con in problem.soc_constraints:
        i, v = _as_row(con.c_row, problem.n_vars)
        lines.append(
            "SOC "
            + str(con.rows())
            + " RHS "
            + " ".join(f"{a}:{b!r}" for a, b in zip(i, v))
            + f" + {con.d!r}"
        )
        if con.rows():
            arows, acols, avals, _ = con.A
            lines.append("  A " + " ".join(f"{r},{c}:{val!r}" for r, c, val in zip(arows, acols, avals)))
            bvec = np.zeros(con.rows()) if con.b is None else np.asarray(con.b, float)
            lines.append("  b " + " ".join(repr(float(t)) for t in bvec))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
