"""Operator-splitting (ADMM) fallback for the conic standard form.

Robustness mode: slower tail convergence than the interior-point engine and
no infeasibility certificates, but each iteration is a cached linear solve
plus a cone projection, which tolerates ill-conditioned data. Intended for
cross-checks and experiments, not as the branch-and-bound workhorse.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .socp import ITERATION_LIMIT, OPTIMAL, Cones, SocpResult, StandardForm

OVER_RELAXATION = 1.6
RHO = 1.0


def project_cone(v: np.ndarray, cones: Cones) -> np.ndarray:
    out = v.copy()
    nn = cones.nn
    np.maximum(out[:nn], 0.0, out=out[:nn])
    for start, d in cones.soc:
        block = v[start : start + d]
        t, w = block[0], block[1:]
        nw = float(np.linalg.norm(w))
        if nw <= t:
            continue
        if nw <= -t:
            out[start : start + d] = 0.0
        else:
            coef = (t + nw) / 2.0
            out[start] = coef
            out[start + 1 : start + d] = (coef / nw) * w
    return out


def solve_standard_form_splitting(
    std: StandardForm, tol: float = 1e-8, max_iter: int = 50000
) -> SocpResult:
    """ADMM on min c'x s.t. Ax = b, Gx + s = h, s in K."""
    c, A, b, G, h = std.c, std.A, std.b, std.G, std.h
    n = c.size
    cones = Cones(std.n_nonneg, std.soc_dims)

    M = (A.T @ A + G.T @ G + 1e-12 * sp.eye(n)).tocsc()
    lu = spla.splu(M)

    x = np.zeros(n)
    s = project_cone(h.copy(), cones)
    u_a = np.zeros(b.size)
    u_g = np.zeros(h.size)

    pri = dual = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        rhs = -c / RHO + A.T @ (b - u_a) + G.T @ (h - s - u_g)
        x = lu.solve(rhs)
        gx = G @ x
        ax = A @ x
        # over-relaxed cone block
        s_prev = s
        v = OVER_RELAXATION * gx + (1 - OVER_RELAXATION) * (h - s_prev)
        s = project_cone(h - v - u_g, cones)
        u_a = u_a + (OVER_RELAXATION * ax + (1 - OVER_RELAXATION) * b) - b
        u_g = u_g + v + s - h

        if it % 25 == 0 or it == max_iter:
            pri = max(
                float(np.max(np.abs(ax - b))) if b.size else 0.0,
                float(np.max(np.abs(gx + s - h))),
            )
            dual = RHO * float(np.max(np.abs(G.T @ (s - s_prev))))
            if pri <= tol and dual <= tol:
                break

    y = RHO * u_a
    z = RHO * u_g
    obj = float(c @ x) / std.obj_scale
    dual_obj = -float(b @ y + h @ z) / std.obj_scale
    status = OPTIMAL if (pri <= tol and dual <= tol) else ITERATION_LIMIT
    return SocpResult(
        status=status,
        x=x,
        objective=obj,
        dual_objective=dual_obj,
        primal_res=pri,
        dual_res=dual,
        gap=abs(obj - dual_obj),
        iterations=it,
        message="operator-splitting mode: no infeasibility certificates",
    )
