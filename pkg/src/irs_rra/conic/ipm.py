"""Homogeneous self-dual primal-dual interior-point method for SOCPs.

Solves   minimize c.x  s.t.  A x = b,  G x + s = h,  s in K
with K a product of a nonnegative orthant and second-order cones, using
Nesterov-Todd scaling and a Mehrotra predictor-corrector step.  The
homogeneous embedding yields certificates: tau -> positive gives an optimum,
kappa -> positive with a dual improving ray gives an infeasibility proof.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .cones import ConeLayout, compute_scaling, max_step

__all__ = ["StandardForm", "ipm_solve"]

STEP = 0.99
_REFINE_ROUNDS = 1


class StandardForm:
    """Compiled conic data plus the structure-exploiting KKT assembler.

    Per-cone Gram parts G' J G are constant, so each iteration only adds a
    rank-one outer product per cone; contiguous column supports are scattered
    through plain slices instead of fancy indexing.
    """

    def __init__(self, c, G, h, A, b, layout: ConeLayout, small_support=8):
        self.c = np.asarray(c, dtype=float)
        self.n = self.c.size
        self.G = sp.csr_matrix(G)
        self.h = np.asarray(h, dtype=float)
        self.A = sp.csr_matrix(A) if A is not None else sp.csr_matrix((0, self.n))
        self.b = np.asarray(b, dtype=float) if b is not None else np.zeros(0)
        self.p = self.A.shape[0]
        self.layout = layout
        self.At_dense = self.A.T.toarray() if self.p else None
        self.Gl = self.G[: layout.l] if layout.l else None

        # one coo pass splits G into per-cone dense blocks on their supports
        dims = layout.q_dims
        coo = self.G.tocoo()
        order = np.argsort(coo.row, kind="stable")
        rows, cols, vals = coo.row[order], coo.col[order], coo.data[order]
        bounds = np.searchsorted(rows, layout.l + np.concatenate([[0], np.cumsum(dims)]))

        self._small = {}  # (dim, ns) -> [positions, sup_idx(B,ns), Gd(B,dim,ns), C(B,ns,ns)]
        self._large = []  # (dim, pos, sup, Gsub, C, contiguous_slice|None)
        stacked = {}  # slice bounds -> [dims, positions, Gsub list]
        starts = layout.l + np.concatenate([[0], np.cumsum(dims)]).astype(int)
        for i, d in enumerate(dims):
            lo, hi = bounds[i], bounds[i + 1]
            r_loc = rows[lo:hi] - starts[i]
            sup, c_loc = np.unique(cols[lo:hi], return_inverse=True)
            gsub = np.zeros((d, sup.size))
            gsub[r_loc, c_loc] = vals[lo:hi]
            if d <= small_support and sup.size <= small_support:
                jg = gsub.copy()
                jg[1:] *= -1.0
                key = (int(d), int(sup.size))
                self._small.setdefault(key, [[], [], [], []])
                self._small[key][0].append(i)
                self._small[key][1].append(sup)
                self._small[key][2].append(gsub)
                self._small[key][3].append(gsub.T @ jg)
                continue
            contig = None
            if sup.size and sup[-1] - sup[0] + 1 == sup.size:
                contig = (int(sup[0]), int(sup[-1]) + 1)
            if contig is not None:
                stacked.setdefault(contig, [[], [], []])
                stacked[contig][0].append(int(d))
                stacked[contig][1].append((int(d), i))
                stacked[contig][2].append(gsub)
            else:
                jg = gsub.copy()
                jg[1:] *= -1.0
                self._large.append((int(d), i, sup, gsub, gsub.T @ jg, None))
        for key, (ps, sups, gds, cs) in self._small.items():
            self._small[key] = (
                np.asarray(ps, dtype=int),
                np.asarray(sups, dtype=int),
                np.asarray(gds, dtype=float),
                np.asarray(cs, dtype=float),
            )
        # cones sharing one contiguous support: two GEMMs per iteration
        self._stacked = []
        for (c0, c1), (ds, keys, gsubs) in stacked.items():
            if len(ds) == 1:
                d, posi = keys[0]
                g = gsubs[0]
                jg = g.copy()
                jg[1:] *= -1.0
                self._large.append((d, posi, None, g, g.T @ jg, slice(c0, c1)))
                continue
            grows = np.vstack(gsubs)  # (sum dims, ns)
            jsign = np.concatenate([np.r_[1.0, -np.ones(d - 1)] for d in ds])
            splits = np.concatenate([[0], np.cumsum(ds)]).astype(int)
            self._stacked.append((slice(c0, c1), keys, grows, jsign, splits))

    # -- KKT assembly -------------------------------------------------------

    def build_H(self, scaling) -> np.ndarray:
        """Dense H = G' W^-2 G (identity scaling when ``scaling`` is None).

        With W^-2 = (2 wtil wtil' - J)/eta^2 per cone, each block contributes
        (2 a a' - G'JG)/eta^2 where a = G' wtil.
        """
        n = self.n
        H = np.zeros((n, n))
        lay = self.layout
        if lay.l:
            w2inv = np.ones(lay.l) if scaling is None else 1.0 / scaling.w_orth**2
            P = (self.Gl.T @ self.Gl.multiply(w2inv[:, None])).tocoo()
            np.add.at(H, (P.row, P.col), P.data)
        for (d, ns), (ps, sup_idx, Gd, C) in self._small.items():
            if scaling is None:
                blocks = np.einsum("bki,bkj->bij", Gd, Gd)
            else:
                eta2 = scaling.eta[ps] ** 2
                wtil = scaling.wtil[ps, :d]
                a = np.einsum("bki,bk->bi", Gd, wtil)
                blocks = (2.0 * np.einsum("bi,bj->bij", a, a) - C) / eta2[:, None, None]
            np.add.at(H, (sup_idx[:, :, None], sup_idx[:, None, :]), blocks)
        for d, ci, sup, Gsub, C, contig in self._large:
            if scaling is None:
                blk = Gsub.T @ Gsub
            else:
                eta2 = float(scaling.eta[ci]) ** 2
                a = scaling.wtil[ci, :d] @ Gsub
                blk = (2.0 * np.outer(a, a) - C) / eta2
            if contig is not None:
                H[contig, contig] += blk
            else:
                H[np.ix_(sup, sup)] += blk
        for sl, keys, grows, jsign, splits in self._stacked:
            if scaling is None:
                H[sl, sl] += grows.T @ grows
                continue
            eta2inv = np.empty(len(keys))
            avecs = np.empty((len(keys), grows.shape[1]))
            for i, (d, ci) in enumerate(keys):
                eta2inv[i] = 1.0 / float(scaling.eta[ci]) ** 2
                avecs[i] = scaling.wtil[ci, :d] @ grows[splits[i] : splits[i + 1]]
            roww = np.repeat(eta2inv, np.diff(splits)) * jsign
            H[sl, sl] += 2.0 * (avecs.T * eta2inv) @ avecs - (grows.T * roww) @ grows
        return H


class _KKT:
    """One factorization of the reduced KKT system, with refinement."""

    def __init__(self, form: StandardForm, scaling):
        self.form = form
        self.scaling = scaling
        H = form.build_H(scaling)
        diag = np.einsum("ii->i", H)
        reg = 1e-12 * max(1.0, float(diag.max(initial=0.0)))
        self._factor(H, diag, reg)
        if form.p:
            self.Hinv_At = self._solve_H(form.At_dense)
            S = form.A @ self.Hinv_At
            S = np.asarray(S) + 1e-13 * np.eye(form.p)
            self.S_lu = sla.lu_factor(S, check_finite=False)

    def _factor(self, H, diag, reg):
        for attempt in range(6):
            try:
                diag += reg
                self.cho = sla.cho_factor(H, lower=True, check_finite=False)
                return
            except np.linalg.LinAlgError:
                reg = max(reg * 100.0, 1e-10)
        raise FloatingPointError("KKT matrix could not be factorized")

    def _solve_H(self, r):
        return sla.cho_solve(self.cho, r, check_finite=False)

    def _solve_once(self, u1, u2, u3):
        form, scal = self.form, self.scaling
        w2inv_u3 = scal.apply_W2inv(u3) if scal is not None else u3
        rhs1 = u1 + form.G.T @ w2inv_u3
        if form.p:
            t1 = self._solve_H(rhs1)
            dy = sla.lu_solve(self.S_lu, form.A @ t1 - u2, check_finite=False)
            dx = t1 - self.Hinv_At @ dy
        else:
            dy = np.zeros(0)
            dx = self._solve_H(rhs1)
        gdx = form.G @ dx
        dz = scal.apply_W2inv(gdx - u3) if scal is not None else gdx - u3
        return dx, dy, dz

    def solve(self, u1, u2, u3):
        form, scal = self.form, self.scaling
        dx, dy, dz = self._solve_once(u1, u2, u3)
        for _ in range(_REFINE_ROUNDS):
            w2dz = scal.apply_W2(dz) if scal is not None else dz
            r1 = u1 - (form.A.T @ dy + form.G.T @ dz)
            r2 = u2 - form.A @ dx
            r3 = u3 - (form.G @ dx - w2dz)
            if max(_inf(r1), _inf(r2), _inf(r3)) < 1e-11 * (1.0 + _inf(u1) + _inf(u3)):
                break
            cx, cy, cz = self._solve_once(r1, r2, r3)
            dx, dy, dz = dx + cx, dy + cy, dz + cz
        return dx, dy, dz


def _inf(v):
    return float(np.max(np.abs(v), initial=0.0))


def ipm_solve(form: StandardForm, tol_feas=1e-7, tol_gap=1e-7, max_iter=100):
    """Run the predictor-corrector loop; returns a plain result dict."""
    lay = form.layout
    n, p = form.n, form.p
    c, b, h = form.c, form.b, form.h
    A, G = form.A, form.G
    deg = lay.degree + 1
    norm_b = max(1.0, _inf(b), _inf(h))
    norm_c = max(1.0, _inf(c))
    data_scale = max(1.0, _inf(h), _inf(b), _inf(c))

    # initial point: least-squares primal/dual with unit scaling, shifted interior
    kkt0 = _KKT(form, None)
    x, _, z0 = kkt0.solve(np.zeros(n), b.copy(), h.copy())
    s = -z0  # equals h - G x
    m = lay.margin(s)
    if m <= 0:
        s = s + (1.0 - m) * lay.e
    xd, y, zd = kkt0.solve(-c, np.zeros(p), np.zeros(lay.dim))
    z = G @ xd
    m = lay.margin(z)
    if m <= 0:
        z = z + (1.0 - m) * lay.e
    tau, kappa = 1.0, 1.0

    best = None
    iters = 0
    status, message = "max_iterations", ""
    for it in range(max_iter):
        iters = it
        state_scale = max(_inf(x), _inf(y), _inf(z), _inf(s), tau, kappa)
        if not np.isfinite(state_scale) or state_scale > 1e14:
            status, message = "max_iterations", "iterate diverged"
            break
        # residuals of the homogeneous system
        rx = A.T @ y + G.T @ z + c * tau
        ry = A @ x - b * tau
        rz = s + G @ x - h * tau
        rtau = kappa + c @ x + b @ y + h @ z
        mu = (s @ z + tau * kappa) / deg

        xs, ys, zs, ss = x / tau, y / tau, z / tau, s / tau
        pres = max(_inf(A @ xs - b), _inf(G @ xs + ss - h)) / norm_b
        dres = _inf(A.T @ ys + G.T @ zs + c) / norm_c
        gap = ss @ zs
        pcost = c @ xs
        dcost = -(b @ ys + h @ zs)
        relgap_ref = max(1.0, abs(pcost), abs(dcost))
        best = dict(x=xs, y=ys, z=zs, s=ss, pres=pres, dres=dres, gap=gap, pcost=pcost)
        if pres <= tol_feas and dres <= tol_feas and gap <= tol_gap * relgap_ref:
            status = "optimal"
            break
        # infeasibility certificates, gated on the embedding collapsing tau
        nu = -(b @ y + h @ z)
        if nu > 0 and tau <= 1e-6 * min(1.0, kappa):
            if _inf(A.T @ (y / nu) + G.T @ (z / nu)) <= 1e-8 * data_scale:
                status = "infeasible"
                message = "dual improving ray found"
                best["cert_y"], best["cert_z"] = y / nu, z / nu
                break
        if c @ x < 0 and tau <= 1e-6 * min(1.0, kappa):
            ray_norm = max(_inf(A @ x), _inf(G @ x + s)) / max(-(c @ x), 1e-300)
            if ray_norm <= 1e-8 * data_scale:
                status = "unbounded"
                message = "primal improving ray found"
                break

        try:
            scaling = compute_scaling(lay, s, z)
            kkt = _KKT(form, scaling)
        except FloatingPointError as exc:
            status, message = "numerical_failure", str(exc)
            break
        lam = scaling.lam
        x1, y1, z1 = kkt.solve(-c, b.copy(), h.copy())
        den = c @ x1 + b @ y1 + h @ z1 - kappa / tau
        if not np.isfinite(den) or abs(den) < 1e-300:
            status, message = "numerical_failure", "singular tau elimination"
            break

        def direction(eta_r, d5, d6):
            u1 = -eta_r * rx
            u2 = -eta_r * ry
            wld5 = scaling.apply_W(scaling.lam_div(d5))
            u3 = -eta_r * rz - wld5
            x2, y2, z2 = kkt.solve(u1, u2, u3)
            r4 = -eta_r * rtau - d6 / tau
            dtau = (r4 - (c @ x2 + b @ y2 + h @ z2)) / den
            dx = x2 + dtau * x1
            dy = y2 + dtau * y1
            dz = z2 + dtau * z1
            ds = wld5 - scaling.apply_W2(dz)
            dkappa = (d6 - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        lam2 = lay.jordan_mul(lam, lam)
        aff = direction(1.0, -lam2, -tau * kappa)
        a_aff = _step_len(lay, s, z, tau, kappa, aff)
        sigma = min(1.0, max(0.0, 1.0 - a_aff)) ** 3

        dsa, dza = aff[3], aff[2]
        corr = lay.jordan_mul(scaling.apply_Winv(dsa), scaling.apply_W(dza))
        d5 = -lam2 - corr + sigma * mu * lay.e
        d6 = -tau * kappa - aff[4] * aff[5] + sigma * mu
        dx, dy, dz, ds, dtau, dkappa = direction(1.0 - sigma, d5, d6)

        finite = (np.isfinite(dtau) and np.isfinite(dkappa) and np.all(np.isfinite(dx))
                  and np.all(np.isfinite(dz)) and np.all(np.isfinite(ds))
                  and (not p or np.all(np.isfinite(dy))))
        if not finite:
            status, message = "max_iterations", "search direction overflowed"
            break
        alpha = STEP * _step_len(lay, s, z, tau, kappa, (dx, dy, dz, ds, dtau, dkappa))
        alpha = min(alpha, 1.0)
        if not np.isfinite(alpha) or alpha <= 1e-10:
            status, message = "max_iterations", "step length collapsed"
            break
        x += alpha * dx
        y += alpha * dy
        z += alpha * dz
        s += alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa
    else:
        iters = max_iter

    out = dict(status=status, message=message, iterations=iters + 1)
    out.update(best or {})
    return out


def _step_len(lay, s, z, tau, kappa, direction):
    dx, dy, dz, ds, dtau, dkappa = direction
    a = min(max_step(lay, s, ds), max_step(lay, z, dz))
    if dtau < 0:
        a = min(a, -tau / dtau)
    if dkappa < 0:
        a = min(a, -kappa / dkappa)
    return a
