"""Cone-space algebra for the interior-point solver.

A point lives in K = R+^l x Q^{q_1} x ... x Q^{q_B}: the first ``l`` entries
form the nonnegative orthant, followed by second-order (Lorentz) cones of the
listed dimensions.  All SOC blocks are processed as one zero-padded batch
(B, dmax) so each operation is a fixed handful of vectorized calls however
many cones there are.
"""

from __future__ import annotations

import numpy as np

__all__ = ["ConeLayout", "NTScaling", "compute_scaling", "max_step"]

_TINY = 1e-300


class ConeLayout:
    """Index bookkeeping for one fixed cone product."""

    def __init__(self, l: int, q_dims):
        self.l = int(l)
        self.q_dims = np.asarray(q_dims, dtype=int)
        if np.any(self.q_dims < 2):
            raise ValueError("second-order cones need dimension >= 2")
        nq = int(self.q_dims.sum())
        self.dim = self.l + nq
        self.degree = self.l + len(self.q_dims)
        B = len(self.q_dims)
        self.nsoc = B
        if B:
            dmax = int(self.q_dims.max())
            starts = self.l + np.concatenate([[0], np.cumsum(self.q_dims)[:-1]]).astype(int)
            self.starts = starts
            offs = np.arange(dmax)[None, :]
            self.valid = offs < self.q_dims[:, None]  # (B, dmax)
            idx = starts[:, None] + offs
            # padded gather indices; invalid slots point at entry 0 and are masked
            self.idx = np.where(self.valid, idx, 0)
            self.flat_idx = idx[self.valid]  # scatter target, cone-major order
        else:
            self.starts = np.zeros(0, dtype=int)
            self.idx = np.zeros((0, 0), dtype=int)
            self.valid = np.zeros((0, 0), dtype=bool)
            self.flat_idx = np.zeros(0, dtype=int)
        self.e = np.zeros(self.dim)
        self.e[: self.l] = 1.0
        self.e[self.starts] = 1.0

    # -- padded batch helpers -------------------------------------------------

    def gather(self, u: np.ndarray) -> np.ndarray:
        """(B, dmax) zero-padded view of the SOC part of u."""
        ub = u[self.idx]
        ub[~self.valid] = 0.0
        return ub

    def scatter(self, out: np.ndarray, ub: np.ndarray):
        out[self.flat_idx] = ub[self.valid]

    def margin(self, u: np.ndarray) -> float:
        """Smallest cone margin: min(u_i) on the orthant, u0 - ||u1|| on SOCs."""
        m = np.inf if self.l == 0 else float(np.min(u[: self.l]))
        if self.nsoc:
            ub = self.gather(u)
            m = min(m, float(np.min(ub[:, 0] - np.linalg.norm(ub[:, 1:], axis=1))))
        return m

    def inside(self, u: np.ndarray, tol: float = 0.0) -> bool:
        return self.margin(u) > tol

    def jordan_mul(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """u o v: elementwise on the orthant, arrow product on SOCs."""
        out = np.empty(self.dim)
        out[: self.l] = u[: self.l] * v[: self.l]
        if self.nsoc:
            ub, vb = self.gather(u), self.gather(v)
            w = ub[:, :1] * vb + vb[:, :1] * ub
            w[:, 0] = np.einsum("bi,bi->b", ub, vb)
            self.scatter(out, w)
        return out


def _jnorm(ub):
    """Hyperbolic norm sqrt(u0^2 - ||u1||^2) per batched row."""
    return np.sqrt(ub[:, 0] ** 2 - np.einsum("bi,bi->b", ub[:, 1:], ub[:, 1:]))


class NTScaling:
    """Nesterov-Todd scaling W with W z = W^{-1} s = lam.

    Orthant blocks use W = diag(sqrt(s/z)).  For a SOC block the scaling
    point wbar = (sbar + J zbar)/(2 gamma) has unit hyperbolic norm and
    W^2 u = eta^2 (2 wbar (wbar.u) - J u); W itself applies the Jordan square
    root q = wbar^{1/2}: W u = eta (2 q (q.u) - J u).
    """

    def __init__(self, layout: ConeLayout, s: np.ndarray, z: np.ndarray):
        self.layout = layout
        l = layout.l
        self.w_orth = np.sqrt(s[:l] / z[:l]) if l else np.empty(0)
        if layout.nsoc:
            sb, zb = layout.gather(s), layout.gather(z)
            snorm, znorm = _jnorm(sb), _jnorm(zb)
            if not (np.all(np.isfinite(snorm)) and np.all(snorm > 0) and np.all(znorm > 0)):
                raise FloatingPointError("iterate left the cone interior")
            sbar = sb / snorm[:, None]
            zbar = zb / znorm[:, None]
            gamma = np.sqrt((1.0 + np.einsum("bi,bi->b", sbar, zbar)) / 2.0)
            wbar = sbar - zbar
            wbar[:, 0] = sbar[:, 0] + zbar[:, 0]
            wbar /= (2.0 * gamma)[:, None]
            # Jordan square root of wbar (unit hyperbolic norm by construction)
            tail = np.linalg.norm(wbar[:, 1:], axis=1)
            lam1 = np.sqrt(wbar[:, 0] + tail)
            lam2 = np.sqrt(np.maximum(wbar[:, 0] - tail, _TINY))
            q = np.empty_like(wbar)
            q[:, 0] = 0.5 * (lam1 + lam2)
            coef = np.where(tail > 0, 0.5 * (lam1 - lam2) / np.maximum(tail, _TINY), 0.0)
            q[:, 1:] = coef[:, None] * wbar[:, 1:]
            q[~layout.valid] = 0.0  # padding hygiene
            self.eta = np.sqrt(snorm / znorm)
            self.wbar, self.q = wbar, q
            self.wtil, self.qtil = _jflip(wbar), _jflip(q)
        else:
            self.eta = np.zeros(0)
        self.lam = self.apply_W(z)

    def _apply(self, v, scale, orth_scale, u):
        """scale * (2 v (v.u) - J u) on the padded batch; diag on the orthant."""
        lay = self.layout
        out = np.empty(lay.dim)
        out[: lay.l] = u[: lay.l] * orth_scale
        if lay.nsoc:
            ub = lay.gather(u)
            dot = np.einsum("bi,bi->b", v, ub)
            w = 2.0 * dot[:, None] * v - _jflip(ub)
            w *= scale[:, None]
            lay.scatter(out, w)
        return out

    def apply_W(self, u: np.ndarray) -> np.ndarray:
        return self._apply(getattr(self, "q", None), self.eta, self.w_orth, u)

    def apply_Winv(self, u: np.ndarray) -> np.ndarray:
        return self._apply(getattr(self, "qtil", None), 1.0 / self.eta, 1.0 / self.w_orth, u)

    def apply_W2(self, u: np.ndarray) -> np.ndarray:
        return self._apply(getattr(self, "wbar", None), self.eta**2, self.w_orth**2, u)

    def apply_W2inv(self, u: np.ndarray) -> np.ndarray:
        return self._apply(getattr(self, "wtil", None), 1.0 / self.eta**2, 1.0 / self.w_orth**2, u)

    def lam_div(self, v: np.ndarray) -> np.ndarray:
        """Solve lam o x = v blockwise."""
        lay, lam, out = self.layout, self.lam, np.empty(self.layout.dim)
        out[: lay.l] = v[: lay.l] / lam[: lay.l]
        if lay.nsoc:
            lb, vb = lay.gather(lam), lay.gather(v)
            det = lb[:, 0] ** 2 - np.einsum("bi,bi->b", lb[:, 1:], lb[:, 1:])
            x0 = (lb[:, 0] * vb[:, 0] - np.einsum("bi,bi->b", lb[:, 1:], vb[:, 1:])) / det
            xb = (vb - x0[:, None] * lb) / np.maximum(lb[:, :1], _TINY)
            xb[:, 0] = x0
            lay.scatter(out, xb)
        return out


def _jflip(ub):
    """J u with J = diag(1, -I) on batched rows."""
    v = -ub
    v[:, 0] = ub[:, 0]
    return v


def compute_scaling(layout: ConeLayout, s: np.ndarray, z: np.ndarray) -> NTScaling:
    return NTScaling(layout, s, z)


def max_step(layout: ConeLayout, u: np.ndarray, du: np.ndarray) -> float:
    """Largest t >= 0 with u + t*du in K (u strictly inside); may be inf."""
    t = np.inf
    l = layout.l
    if l:
        neg = du[:l] < 0
        if np.any(neg):
            t = float(np.min(-u[:l][neg] / du[:l][neg]))
    if not layout.nsoc:
        return t
    ub, db = layout.gather(u), layout.gather(du)
    a = db[:, 0] ** 2 - np.einsum("bi,bi->b", db[:, 1:], db[:, 1:])
    b = 2.0 * (ub[:, 0] * db[:, 0] - np.einsum("bi,bi->b", ub[:, 1:], db[:, 1:]))
    c = np.maximum(ub[:, 0] ** 2 - np.einsum("bi,bi->b", ub[:, 1:], ub[:, 1:]), 0.0)
    tq = np.full(a.shape, np.inf)
    lin = np.abs(a) < 1e-14
    t_lin = np.full(a.shape, np.inf)
    np.divide(-c, b, out=t_lin, where=(b < 0))
    tq[lin] = t_lin[lin]
    quad = ~lin
    disc = b**2 - 4.0 * a * c
    has_root = quad & (disc >= 0)
    sq = np.sqrt(np.maximum(disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = (-b - sq) / (2.0 * a)
        r2 = (-b + sq) / (2.0 * a)
    lo = np.minimum(r1, r2)
    hi = np.maximum(r1, r2)
    step = np.where(lo > 1e-16, lo, np.where(hi > 1e-16, hi, np.inf))
    step = np.where((a > 0) & (hi <= 0), np.inf, step)  # ray stays inside
    tq[has_root] = step[has_root]
    return float(min(t, np.min(tq, initial=np.inf)))
