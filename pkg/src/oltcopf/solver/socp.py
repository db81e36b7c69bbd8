"""Second-order-cone solver: homogeneous self-dual embedding with
Nesterov-Todd scaling and Mehrotra predictor-corrector steps.

Programs arrive in the package's natural-variable form and are converted to

    min c'x  s.t.  A x = b,  G x + s = h,  s in K,

with K a product of a nonnegative orthant and standard second-order cones
(each rotated cone l*u >= p^2 + q^2 maps to a 4-dim Lorentz block).
The KKT systems are solved by sparse LU with static regularization and
iterative refinement. Infeasibility and unboundedness are certified through
the embedding (ray with b'y + h'z < 0, resp. c'x < 0).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..program import MixedIntegerConicProgram
from .settings import IPM, SPLITTING, SolverSettings

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"

STEP_FRACTION = 0.99
SIGMA_MIN, SIGMA_MAX = 1e-4, 0.999
REGULARIZATION = 1e-9
REFINE_ROUNDS = 2


class NumericalError(RuntimeError):
    """KKT factorization failed beyond recovery; never silently swallowed."""


class PresolveInfeasible(Exception):
    """Bound/implication presolve proved the node infeasible."""


@dataclass
class SocpResult:
    status: str
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    dual_objective: Optional[float] = None
    primal_res: float = math.nan
    dual_res: float = math.nan
    gap: float = math.nan
    iterations: int = 0
    certificate: Optional[dict] = None
    message: str = ""


@dataclass
class StandardForm:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    n_nonneg: int
    soc_dims: tuple[int, ...]
    obj_scale: float

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.c.size, self.b.size, self.h.size


def _propagate_tap_fixings(program, lb, ub):
    """Fix implied bits and collect rows to drop / substitutions to add.

    When a bit is pinned, its big-M pair collapses to x_n = 0 (bit 0) or
    x_n = U (bit 1); the inequality pairs would then have empty interior,
    which the interior-point method cannot tolerate, so they are replaced
    by explicit equalities. Returns (fixed bit map, dropped tag set,
    substitution eq list as (var, other_var_or_None, const)).
    """
    drop_tags: set = set()
    subs: list[tuple[int, Optional[int], float]] = []
    for enc in program.tap_encodings:
        fixed_bits: dict[int, int] = {}
        for n, idx in enumerate(enc.bit_vars):
            if lb[idx] == ub[idx]:
                val = int(round(lb[idx]))
                if abs(lb[idx] - val) > 1e-9 or val not in (0, 1):
                    raise PresolveInfeasible(
                        f"bit {program.variables[idx].name} fixed to non-binary "
                        f"value {lb[idx]}"
                    )
                fixed_bits[n] = val
        remaining = enc.k_taps - sum((1 << n) * v for n, v in fixed_bits.items())
        if remaining < 0:
            raise PresolveInfeasible(
                f"fixed bits of {enc.transformer} exceed k_taps = {enc.k_taps}"
            )
        for n, idx in enumerate(enc.bit_vars):
            if n not in fixed_bits and (1 << n) > remaining:
                lb[idx] = ub[idx] = 0.0
                fixed_bits[n] = 0
        if len(fixed_bits) == enc.n_bits:
            drop_tags.add(("tap-cap", enc.transformer))
        for n, val in fixed_bits.items():
            for kind in ("x_lo", "x_hi", "x_cap", "y_lo", "y_hi", "y_cap"):
                drop_tags.add(("tap-bigm", enc.transformer, n, kind))
            x_idx = enc.x_vars[n]
            y_idx = enc.y_vars[n] if enc.y_vars else None
            if val == 0:
                lb[x_idx] = ub[x_idx] = 0.0
                if y_idx is not None:
                    lb[y_idx] = ub[y_idx] = 0.0
            else:
                subs.append((x_idx, enc.u_var, 0.0))
                if y_idx is not None:
                    subs.append((y_idx, enc.m_var, 0.0))
    return drop_tags, subs


def standardize(
    program: MixedIntegerConicProgram,
    bounds: Optional[Mapping[int, tuple[float, float]]] = None,
) -> StandardForm:
    """Convert to conic standard form, presolving fixed binaries.

    Binary variables are treated as continuous within their current bounds
    (the branch-and-bound layer narrows them via ``bounds``). Fixed
    variables become equality rows; their bound rows are dropped so every
    remaining inequality keeps a nonempty interior.
    """
    n = program.n_vars
    lb = np.array([v.lb for v in program.variables], dtype=float)
    ub = np.array([v.ub for v in program.variables], dtype=float)
    if bounds:
        for i, (lo, hi) in bounds.items():
            lb[i], ub[i] = lo, hi
    if np.any(lb > ub + 1e-15):
        raise PresolveInfeasible("empty variable box after bound overrides")

    drop_tags, subs = _propagate_tap_fixings(program, lb, ub)
    fixed = lb == ub

    eq_triplets: list[tuple[int, int, float]] = []
    b_list: list[float] = []

    def push_eq(coeffs, rhs):
        row = len(b_list)
        scale = max(abs(c) for _, c in coeffs)
        for i, c in coeffs:
            eq_triplets.append((row, i, c / scale))
        b_list.append(rhs / scale)

    for erow in program.eq_rows:
        push_eq(erow.coeffs, erow.rhs)
    for i in np.flatnonzero(fixed):
        push_eq(((int(i), 1.0),), lb[i])
    for var, other, const in subs:
        if fixed[var] and (other is None or fixed[other]):
            continue
        push_eq(((var, 1.0), (other, -1.0)), const)

    g_triplets: list[tuple[int, int, float]] = []
    h_list: list[float] = []

    def push_ineq(coeffs, rhs):
        row = len(h_list)
        scale = max(abs(c) for _, c in coeffs)
        for i, c in coeffs:
            g_triplets.append((row, i, c / scale))
        h_list.append(rhs / scale)

    for irow in program.ineq_rows:
        if irow.tag in drop_tags:
            continue
        live = [(i, c) for i, c in irow.coeffs if not fixed[i]]
        const = sum(c * lb[i] for i, c in irow.coeffs if fixed[i])
        if not live:
            if const > irow.rhs + 1e-9:
                raise PresolveInfeasible(f"row {irow.tag} violated by fixings")
            continue
        push_ineq(live, irow.rhs - const)
    for i in np.flatnonzero(~fixed):
        i = int(i)
        push_ineq(((i, -1.0),), -lb[i])
        push_ineq(((i, 1.0),), ub[i])

    n_nonneg = len(h_list)
    soc_dims = []
    for cone in program.cones:
        row = len(h_list)
        # s = (l + u, l - u, 2 p, 2 q) lies in the Lorentz cone iff l*u >= p^2 + q^2
        g_triplets.extend([
            (row, cone.l_var, -1.0), (row, cone.u_var, -1.0),
            (row + 1, cone.l_var, -1.0), (row + 1, cone.u_var, 1.0),
            (row + 2, cone.p_var, -2.0),
            (row + 3, cone.q_var, -2.0),
        ])
        h_list.extend([0.0, 0.0, 0.0, 0.0])
        soc_dims.append(4)

    c = np.zeros(n)
    for i, coef in program.objective:
        c[i] = coef
    cmax = np.max(np.abs(c)) if c.size else 0.0
    obj_scale = 1.0 / cmax if cmax > 0 else 1.0

    def to_csr(triplets, rows, cols):
        if triplets:
            r, cidx, v = zip(*triplets)
        else:
            r, cidx, v = (), (), ()
        return sp.csr_matrix(
            (np.array(v, dtype=float), (np.array(r), np.array(cidx))),
            shape=(rows, cols),
        )

    return StandardForm(
        c=c * obj_scale,
        A=to_csr(eq_triplets, len(b_list), n),
        b=np.array(b_list),
        G=to_csr(g_triplets, len(h_list), n),
        h=np.array(h_list),
        n_nonneg=n_nonneg,
        soc_dims=tuple(soc_dims),
        obj_scale=obj_scale,
    )


# --- cone algebra ---------------------------------------------------------


class Cones:
    """Layout of K = R+^l x Q^d1 x ... x Q^dN inside an m-vector."""

    def __init__(self, n_nonneg: int, soc_dims: Sequence[int]):
        self.nn = n_nonneg
        self.soc = []
        start = n_nonneg
        for d in soc_dims:
            self.soc.append((start, d))
            start += d
        self.m = start
        self.degree = n_nonneg + len(self.soc)

    def identity(self) -> np.ndarray:
        e = np.zeros(self.m)
        e[: self.nn] = 1.0
        for start, _ in self.soc:
            e[start] = 1.0
        return e

    def margin(self, v: np.ndarray) -> float:
        """Distance to the cone boundary (negative if outside)."""
        out = float(v[: self.nn].min()) if self.nn else math.inf
        for start, d in self.soc:
            out = min(out, float(v[start] - np.linalg.norm(v[start + 1 : start + d])))
        return out

    def jprod(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.m)
        out[: self.nn] = u[: self.nn] * v[: self.nn]
        for start, d in self.soc:
            us, vs = u[start : start + d], v[start : start + d]
            out[start] = us @ vs
            out[start + 1 : start + d] = us[0] * vs[1:] + vs[0] * us[1:]
        return out

    def jsolve(self, lam: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Solve lam o w = u for w."""
        out = np.empty(self.m)
        out[: self.nn] = u[: self.nn] / lam[: self.nn]
        for start, d in self.soc:
            ls, us = lam[start : start + d], u[start : start + d]
            det = ls[0] ** 2 - ls[1:] @ ls[1:]
            w0 = (ls[0] * us[0] - ls[1:] @ us[1:]) / det
            out[start] = w0
            out[start + 1 : start + d] = (us[1:] - w0 * ls[1:]) / ls[0]
        return out

    def max_step(self, lam: np.ndarray, d: np.ndarray) -> float:
        """sup {alpha >= 0 : lam + alpha d in K} for interior lam."""
        alpha = math.inf
        nn = self.nn
        neg = d[:nn] < 0
        if np.any(neg):
            alpha = float(np.min(-lam[:nn][neg] / d[:nn][neg]))
        for start, dim in self.soc:
            ls, ds = lam[start : start + dim], d[start : start + dim]
            # first positive root of J(lam + a d), J(v) = v0^2 - |v1|^2
            a = ds[0] ** 2 - ds[1:] @ ds[1:]
            b = 2.0 * (ls[0] * ds[0] - ls[1:] @ ds[1:])
            cc = ls[0] ** 2 - ls[1:] @ ls[1:]
            root = math.inf
            if abs(a) < 1e-14:
                if b < -1e-14:
                    root = -cc / b
            else:
                disc = b * b - 4.0 * a * cc
                if disc >= 0.0:
                    sq = math.sqrt(disc)
                    for r in ((-b - sq) / (2 * a), (-b + sq) / (2 * a)):
                        if r > 0:
                            root = min(root, r)
            if ds[0] < 0:
                root = min(root, -ls[0] / ds[0])
            alpha = min(alpha, root)
        return alpha


class NTScaling:
    """Nesterov-Todd scaling point: W z = inv(W)' s = lam."""

    def __init__(self, cones: Cones, s: np.ndarray, z: np.ndarray):
        self.cones = cones
        nn = cones.nn
        self.w_nn = np.sqrt(s[:nn] / z[:nn])
        self.lam = np.empty(cones.m)
        self.lam[:nn] = np.sqrt(s[:nn] * z[:nn])
        self.soc_W: list[np.ndarray] = []
        self.soc_Winv: list[np.ndarray] = []
        for start, d in cones.soc:
            ss, zs = s[start : start + d], z[start : start + d]
            # factored form avoids the cancellation of u0^2 - |u1|^2
            ns, nz = np.linalg.norm(ss[1:]), np.linalg.norm(zs[1:])
            zeta_s = math.sqrt((ss[0] - ns) * (ss[0] + ns))
            zeta_z = math.sqrt((zs[0] - nz) * (zs[0] + nz))
            sb, zb = ss / zeta_s, zs / zeta_z
            gamma = math.sqrt((1.0 + sb @ zb) / 2.0)
            # normalized NT point, then its Jordan square root: the scaling
            # matrix is the quadratic representation of the root, so that
            # W^2 z = s (W z = s-bar alone is not a symmetric scaling)
            wbar = np.empty(d)
            wbar[0] = (sb[0] + zb[0]) / (2 * gamma)
            wbar[1:] = (sb[1:] - zb[1:]) / (2 * gamma)
            vbar = wbar.copy()
            vbar[0] += 1.0
            vbar /= math.sqrt(2.0 * (wbar[0] + 1.0))
            beta = math.sqrt(zeta_s / zeta_z)
            J = np.diag(np.r_[1.0, -np.ones(d - 1)])
            H = 2.0 * np.outer(vbar, vbar) - J
            jv = J @ vbar
            W = beta * H
            Winv = (2.0 * np.outer(jv, jv) - J) / beta
            self.soc_W.append(W)
            self.soc_Winv.append(Winv)
            self.lam[start : start + d] = W @ zs

    def apply_W(self, u: np.ndarray) -> np.ndarray:
        out = np.empty_like(u)
        nn = self.cones.nn
        out[:nn] = self.w_nn * u[:nn]
        for (start, d), W in zip(self.cones.soc, self.soc_W):
            out[start : start + d] = W @ u[start : start + d]
        return out

    def apply_Winv(self, u: np.ndarray) -> np.ndarray:
        out = np.empty_like(u)
        nn = self.cones.nn
        out[:nn] = u[:nn] / self.w_nn
        for (start, d), Winv in zip(self.cones.soc, self.soc_Winv):
            out[start : start + d] = Winv @ u[start : start + d]
        return out

    def w2_triplets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """W^2 as COO triplets in the cone-local row numbering."""
        nn = self.cones.nn
        rows = [np.arange(nn)]
        cols = [np.arange(nn)]
        vals = [self.w_nn**2]
        for (start, d), W in zip(self.cones.soc, self.soc_W):
            grid = np.arange(start, start + d)
            rows.append(np.repeat(grid, d))
            cols.append(np.tile(grid, d))
            vals.append((W @ W).ravel())
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


# --- KKT system -----------------------------------------------------------


class KktSolver:
    """Regularized sparse LU on the 3x3 scaled KKT matrix.

    The sparsity pattern is fixed across iterations (only the scaling block
    values change), so the COO skeleton is prepared once and only the W^2
    entries are rewritten before each factorization.
    """

    def __init__(self, A: sp.csr_matrix, G: sp.csr_matrix, delta: float = REGULARIZATION):
        self.A, self.G = A, G
        self.n = n = A.shape[1]
        self.p = p = A.shape[0]
        self.m = m = G.shape[0]
        self.delta = delta

        acoo = A.tocoo()
        gcoo = G.tocoo()
        rows = [np.arange(n + p + m)]  # regularization diagonal
        cols = [np.arange(n + p + m)]
        vals = [np.r_[np.full(n, delta), np.full(p + m, -delta)]]
        rows += [acoo.col, acoo.row + n, gcoo.col, gcoo.row + n + p]
        cols += [acoo.row + n, acoo.col, gcoo.row + n + p, gcoo.col]
        vals += [acoo.data, acoo.data, gcoo.data, gcoo.data]
        self._static_rows = np.concatenate(rows)
        self._static_cols = np.concatenate(cols)
        self._static_vals = np.concatenate(vals)

    def factor(self, scaling: NTScaling) -> None:
        self.scaling = scaling
        w2_rows, w2_cols, w2_vals = scaling.w2_triplets()
        rows = np.concatenate([self._static_rows, w2_rows + self.n + self.p])
        cols = np.concatenate([self._static_cols, w2_cols + self.n + self.p])
        base_vals = np.concatenate([self._static_vals, -w2_vals])
        shape = (self.n + self.p + self.m,) * 2
        last = None
        for attempt in range(4):
            vals = base_vals
            if attempt:
                bump = self.delta * (10.0**attempt - 1.0)
                extra = np.r_[
                    np.full(self.n, bump), np.full(self.p + self.m, -bump)
                ]
                vals = base_vals.copy()
                vals[: self.n + self.p + self.m] += extra
            K = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsc()
            try:
                self._lu = spla.splu(K)
                return
            except RuntimeError as exc:  # singular factorization
                last = exc
        raise NumericalError(f"KKT factorization failed: {last}")

    def _apply_exact(self, u: np.ndarray) -> np.ndarray:
        n, p = self.n, self.p
        ux, uy, uz = u[:n], u[n : n + p], u[n + p :]
        top = self.A.T @ uy + self.G.T @ uz
        mid = self.A @ ux
        bot = self.G @ ux - self.scaling.apply_W(self.scaling.apply_W(uz))
        return np.r_[top, mid, bot]

    def solve(self, rx: np.ndarray, ry: np.ndarray, rz: np.ndarray):
        rhs = np.r_[rx, ry, rz]
        sol = self._lu.solve(rhs)
        for _ in range(REFINE_ROUNDS):
            resid = rhs - self._apply_exact(sol)
            if np.max(np.abs(resid)) < 1e-14 * max(1.0, np.max(np.abs(rhs))):
                break
            sol = sol + self._lu.solve(resid)
        n, p = self.n, self.p
        return sol[:n], sol[n : n + p], sol[n + p :]


# --- interior point loop --------------------------------------------------


@dataclass
class _Iterate:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    tau: float
    kappa: float


def _initial_point(std: StandardForm, cones: Cones, kkt: KktSolver) -> _Iterate:
    e = cones.identity()
    ones = NTScaling(cones, e.copy(), e.copy())
    kkt.factor(ones)
    zeros_n = np.zeros(std.c.size)
    x0, _, z0 = kkt.solve(zeros_n, std.b, std.h)
    s0 = -z0
    shift = -cones.margin(s0)
    if shift >= 0:
        s0 = s0 + (1.0 + shift) * e
    _, y0, z1 = kkt.solve(-std.c, np.zeros(std.b.size), np.zeros(std.h.size))
    shift = -cones.margin(z1)
    if shift >= 0:
        z1 = z1 + (1.0 + shift) * e
    return _Iterate(x=x0, y=y0, z=z1, s=s0, tau=1.0, kappa=1.0)


def solve_standard_form(
    std: StandardForm, tol: float = 1e-9, max_iter: int = 200
) -> SocpResult:
    """Run the homogeneous-embedding IPM on a standard-form program."""
    c, A, b, G, h = std.c, std.A, std.b, std.G, std.h
    cones = Cones(std.n_nonneg, std.soc_dims)
    if cones.m != h.size:
        raise ValueError("cone layout does not match G")
    kkt = KktSolver(A, G)
    it = _initial_point(std, cones, kkt)
    e = cones.identity()
    deg = cones.degree + 1
    norm_bh = max(1.0, float(np.max(np.abs(b))) if b.size else 0.0,
                  float(np.max(np.abs(h))) if h.size else 0.0)
    norm_c = max(1.0, float(np.max(np.abs(c))) if c.size else 0.0)

    def unscale(val):
        return val / std.obj_scale

    cert_tol = max(tol * 10.0, 1e-8)
    best = None
    stall = 0
    stop_message = "iteration limit"
    for iteration in range(1, max_iter + 1):
        x, y, z, s, tau, kappa = it.x, it.y, it.z, it.s, it.tau, it.kappa
        res_x = A.T @ y + G.T @ z + c * tau
        res_y = A @ x - b * tau
        res_z = G @ x + s - h * tau
        res_tau = float(c @ x + b @ y + h @ z + kappa)

        gap = float(s @ z + tau * kappa)
        mu = gap / deg
        pcost = float(c @ x) / tau
        dcost = -float(b @ y + h @ z) / tau
        pres = max(
            float(np.max(np.abs(res_y))) if res_y.size else 0.0,
            float(np.max(np.abs(res_z))) if res_z.size else 0.0,
        ) / (tau * norm_bh)
        dres = (float(np.max(np.abs(res_x))) if res_x.size else 0.0) / (tau * norm_c)
        absgap = float(s @ z) / (tau * tau)
        relgap = absgap / max(1.0, abs(pcost))

        best = SocpResult(
            status=ITERATION_LIMIT,
            x=x / tau,
            objective=unscale(pcost),
            dual_objective=unscale(dcost),
            primal_res=pres,
            dual_res=dres,
            gap=absgap,
            iterations=iteration - 1,
        )
        if pres <= tol and dres <= tol and (absgap <= tol or relgap <= tol):
            best.status = OPTIMAL
            return best

        # certificate checks on the raw (unscaled-by-tau) iterate
        denom_p = -float(b @ y + h @ z)
        if denom_p > 0:
            yc, zc = y / denom_p, z / denom_p
            cert_res = float(np.max(np.abs(A.T @ yc + G.T @ zc))) if c.size else 0.0
            if cert_res <= cert_tol:
                return SocpResult(
                    status=INFEASIBLE,
                    dual_objective=math.inf,
                    primal_res=pres,
                    dual_res=cert_res,
                    gap=absgap,
                    iterations=iteration - 1,
                    certificate={"y": yc, "z": zc},
                    message="primal infeasibility certificate: b'y + h'z = -1, "
                            "A'y + G'z ~ 0, z in K",
                )
        denom_d = -float(c @ x)
        if denom_d > 0:
            xc = x / denom_d
            sc = s / denom_d
            cert_res = max(
                float(np.max(np.abs(A @ xc))) if b.size else 0.0,
                float(np.max(np.abs(G @ xc + sc))) if h.size else 0.0,
            )
            if cert_res <= cert_tol:
                return SocpResult(
                    status=UNBOUNDED,
                    primal_res=cert_res,
                    dual_res=dres,
                    gap=absgap,
                    iterations=iteration - 1,
                    certificate={"x": xc},
                    message="unboundedness certificate: c'x = -1, ray feasible",
                )

        if (min(cones.margin(s), cones.margin(z)) <= 0.0
                or tau <= 0.0 or kappa <= 0.0):
            stop_message = "iterate numerically on the cone boundary"
            break

        scaling = NTScaling(cones, s, z)
        lam = scaling.lam
        kkt.factor(scaling)
        u1 = kkt.solve(-c, b, h)

        def directions(eta, sigma, corr_s, corr_kappa):
            d_s = cones.jsolve(
                lam, -cones.jprod(lam, lam) + sigma * mu * e - corr_s
            )
            d_kappa = -(tau * kappa + corr_kappa - sigma * mu)
            u2 = kkt.solve(
                -eta * res_x,
                -eta * res_y,
                -eta * res_z - scaling.apply_W(d_s),
            )
            num = (-eta * res_tau - d_kappa / tau
                   - float(c @ u2[0] + b @ u2[1] + h @ u2[2]))
            den = float(c @ u1[0] + b @ u1[1] + h @ u1[2]) - kappa / tau
            dtau = num / den
            dx = u2[0] + dtau * u1[0]
            dy = u2[1] + dtau * u1[1]
            dz = u2[2] + dtau * u1[2]
            ds = -eta * res_z - G @ dx + h * dtau
            dkappa = (d_kappa - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        def boundary_step(dz, ds, dtau, dkappa):
            alpha = min(
                cones.max_step(lam, scaling.apply_Winv(ds)),
                cones.max_step(lam, scaling.apply_W(dz)),
            )
            if dtau < 0:
                alpha = min(alpha, -tau / dtau)
            if dkappa < 0:
                alpha = min(alpha, -kappa / dkappa)
            return alpha

        # predictor
        zero_corr = np.zeros(cones.m)
        dx, dy, dz, ds, dtau, dkappa = directions(1.0, 0.0, zero_corr, 0.0)
        alpha_aff = min(1.0, boundary_step(dz, ds, dtau, dkappa))
        sigma = min(max((1.0 - alpha_aff) ** 3, SIGMA_MIN), SIGMA_MAX)

        # corrector (Mehrotra second-order term in scaled space)
        corr_s = cones.jprod(scaling.apply_Winv(ds), scaling.apply_W(dz))
        corr_kappa = dtau * dkappa
        dx, dy, dz, ds, dtau, dkappa = directions(
            1.0 - sigma, sigma, corr_s, corr_kappa
        )
        alpha = min(1.0, STEP_FRACTION * boundary_step(dz, ds, dtau, dkappa))
        if not math.isfinite(alpha) or alpha <= 0:
            stop_message = f"step size degenerated to {alpha}"
            break
        stall = stall + 1 if alpha < 1e-3 else 0
        if stall >= 4:
            stop_message = "progress stalled"
            break

        it = _Iterate(
            x=x + alpha * dx,
            y=y + alpha * dy,
            z=z + alpha * dz,
            s=s + alpha * ds,
            tau=tau + alpha * dtau,
            kappa=kappa + alpha * dkappa,
        )

    best.message = stop_message
    log.debug(
        "IPM stopped without convergence (%s after %d iterations): "
        "pres=%.2e dres=%.2e gap=%.2e",
        stop_message, best.iterations, best.primal_res, best.dual_res, best.gap,
    )
    return best


def solve_socp(
    program: MixedIntegerConicProgram,
    settings: SolverSettings = SolverSettings(),
    bounds: Optional[Mapping[int, tuple[float, float]]] = None,
) -> SocpResult:
    """Solve the continuous relaxation of ``program``.

    Binaries must be fixed (lb == ub, possibly via ``bounds``) or are
    relaxed to their boxes. Deterministic: identical inputs give identical
    results.
    """
    try:
        std = standardize(program, bounds)
    except PresolveInfeasible as exc:
        return SocpResult(
            status=INFEASIBLE,
            dual_objective=math.inf,
            message=f"presolve: {exc}",
        )
    if settings.mode == SPLITTING:
        from .splitting import solve_standard_form_splitting

        return solve_standard_form_splitting(
            std, tol=settings.socp_tol, max_iter=max(settings.max_iter, 20000)
        )
    return solve_standard_form(std, tol=settings.socp_tol, max_iter=settings.max_iter)
