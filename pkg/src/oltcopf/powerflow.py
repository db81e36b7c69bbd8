"""Nonlinear radial power flow: backward/forward sweep on the branch flow
equations, with squared voltages U and squared currents L as state.

Serves as the ground-truth oracle for the conic OPF: it solves the branch
equations as equalities for a fixed tap assignment, so its losses can be
compared against the relaxation's objective.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .network import (
    NetworkCase,
    TopologyReport,
    ensure_per_unit,
    validate_radial,
)

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100
ENUMERATION_CAP = 10**6


class PowerFlowError(Exception):
    """Raised on sweep failure (divergence or voltage collapse)."""


class DispatchError(ValueError):
    """Raised when generator outputs are not determined and none were given."""


@dataclass(frozen=True)
class TapAssignment:
    """Integer tap position per transformer branch, keyed by branch key."""

    positions: Mapping[str, int]

    def position(self, key: str) -> int:
        return self.positions[key]

    def as_tuple(self, case: NetworkCase) -> tuple[int, ...]:
        return tuple(self.positions[br.key] for br in case.transformers)

    def ratios(self, case: NetworkCase) -> dict[str, float]:
        return {
            br.key: br.tap.ratio(self.positions[br.key]) for br in case.transformers
        }

    def validate(self, case: NetworkCase) -> None:
        for br in case.transformers:
            if br.key not in self.positions:
                raise ValueError(f"missing tap position for transformer {br.key}")
            pos = self.positions[br.key]
            if not 0 <= pos <= br.tap.k_taps:
                raise ValueError(
                    f"tap position {pos} for {br.key} outside [0, {br.tap.k_taps}]"
                )
        extra = set(self.positions) - {br.key for br in case.transformers}
        if extra:
            raise ValueError(f"tap positions for non-transformer branches: {extra}")

    @classmethod
    def from_sequence(cls, case: NetworkCase, positions: Sequence[int]) -> "TapAssignment":
        xfs = case.transformers
        if len(positions) != len(xfs):
            raise ValueError(
                f"expected {len(xfs)} tap positions, got {len(positions)}"
            )
        return cls({br.key: int(t) for br, t in zip(xfs, positions)})


@dataclass(frozen=True)
class PowerFlowSolution:
    """Converged sweep state, all flows in per-unit on the case base.

    ``u`` holds squared voltage magnitudes per bus; ``l`` squared current
    magnitudes per branch; ``p_flow``/``q_flow`` the sending-end flows.
    ``u_internal`` is the squared voltage on the impedance side of each
    transformer's ideal-ratio element (t^2 * U of the child bus).
    """

    u: dict[int, float]
    l: dict[str, float]
    p_flow: dict[str, float]
    q_flow: dict[str, float]
    u_internal: dict[str, float]
    losses_kw: float
    losses_pu: float
    converged: bool
    iterations: int
    residual: float
    slack_p: float
    slack_q: float

    def voltage_feasible(self, case: NetworkCase, margin: float = 1e-9) -> bool:
        """True when every squared voltage lies inside its bus's box."""
        for bus in case.buses:
            u = self.u[bus.id]
            if u < bus.v_min**2 - margin or u > bus.v_max**2 + margin:
                return False
        return True


def _fixed_dispatch(case: NetworkCase) -> list[tuple[float, float]]:
    out = []
    for gen in case.generators:
        if not gen.is_fixed:
            raise DispatchError(
                f"generator at bus {gen.bus} has a free operating range; "
                "pass an explicit dispatch"
            )
        out.append((gen.p_max, gen.q_max))
    return out


def solve_powerflow(
    case: NetworkCase,
    taps: Optional[TapAssignment] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    dispatch: Optional[Sequence[tuple[float, float]]] = None,
    slack_voltage: float = 1.0,
) -> PowerFlowSolution:
    """Backward/forward sweep for a fixed tap assignment.

    The case may be in physical units (it is converted internally); taps
    defaults to every transformer at position 0. ``dispatch`` gives (p, q)
    per generator in the units of the case as passed; it defaults to the
    generators' fixed operating points and is required when any generator
    has a free range.

    Raises :class:`PowerFlowError` on voltage collapse; non-convergence is
    reported through the ``converged``/``residual`` fields, not raised.
    """
    if dispatch is not None and not case.per_unit:
        s_base = case.s_base_kw
        dispatch = [(p / s_base, q / s_base) for p, q in dispatch]
    case = ensure_per_unit(case)
    topo = validate_radial(case)
    if taps is None:
        taps = TapAssignment({br.key: 0 for br in case.transformers})
    taps.validate(case)
    if dispatch is None:
        dispatch = _fixed_dispatch(case)
    elif len(dispatch) != len(case.generators):
        raise DispatchError(
            f"dispatch has {len(dispatch)} entries for {len(case.generators)} generators"
        )

    bus_index = {b.id: i for i, b in enumerate(case.buses)}
    n = len(case.buses)
    # net injection per bus: generation - load
    inj_p = [-b.p_load for b in case.buses]
    inj_q = [-b.q_load for b in case.buses]
    for gen, (p, q) in zip(case.generators, dispatch):
        gi = bus_index[gen.bus]
        inj_p[gi] += p
        inj_q[gi] += q

    # per non-root bus: its parent branch
    order = topo.order
    down_order = order[1:]  # root excluded, parents before children
    parent_of = {}  # bus id -> (parent id, branch)
    for child, (par, idx) in topo.parent.items():
        parent_of[child] = (par, case.branches[idx])
    children = topo.children()

    ratio2 = {}
    for br in case.transformers:
        t = br.tap.ratio(taps.position(br.key))
        ratio2[br.key] = t * t

    u = {b.id: slack_voltage**2 for b in case.buses}  # flat start
    l = {b: 0.0 for b in down_order}  # keyed by child bus
    p = {b: 0.0 for b in down_order}
    q = {b: 0.0 for b in down_order}
    u_internal: dict[str, float] = {}

    converged = False
    iterations = 0
    residual = math.inf
    for iterations in range(1, max_iter + 1):
        # backward: sending-end flows from the leaves up, using current L
        for child in reversed(down_order):
            _, br = parent_of[child]
            ci = bus_index[child]
            acc_p = -inj_p[ci] + br.r * l[child]
            acc_q = -inj_q[ci] + br.x * l[child]
            for k in children[child]:
                acc_p += p[k]
                acc_q += q[k]
            p[child] = acc_p
            q[child] = acc_q

        # forward: voltages from the root down, taps applied at transformers
        max_du = 0.0
        for child in down_order:
            par, br = parent_of[child]
            z2 = br.r * br.r + br.x * br.x
            u_m = u[par] - 2.0 * (br.r * p[child] + br.x * q[child]) + z2 * l[child]
            if br.is_transformer:
                u_internal[br.key] = u_m
                u_new = u_m / ratio2[br.key]
            else:
                u_new = u_m
            if u_new <= 0.0:
                raise PowerFlowError(
                    f"voltage collapse at bus {child} (U = {u_new:.3e})"
                )
            max_du = max(max_du, abs(u_new - u[child]))
            u[child] = u_new

        # refresh squared currents from the sending-end state
        for child in down_order:
            par, _ = parent_of[child]
            l[child] = (p[child] ** 2 + q[child] ** 2) / u[par]

        if max_du < tol:
            residual = _max_mismatch(
                case, bus_index, parent_of, children, inj_p, inj_q, u, l, p, q, ratio2
            )
            if residual <= tol:
                converged = True
                break

    if not converged:
        residual = _max_mismatch(
            case, bus_index, parent_of, children, inj_p, inj_q, u, l, p, q, ratio2
        )
        log.warning(
            "power flow did not converge in %d iterations (residual %.3e)",
            iterations, residual,
        )

    losses_pu = sum(l[child] * parent_of[child][1].r for child in down_order)
    # slack injection balances the network
    root = topo.root
    slack_p = sum(p[k] for k in children[root]) - inj_p[bus_index[root]]
    slack_q = sum(q[k] for k in children[root]) - inj_q[bus_index[root]]

    def by_branch(d):
        return {parent_of[c][1].key: v for c, v in d.items()}

    return PowerFlowSolution(
        u=dict(u),
        l=by_branch(l),
        p_flow=by_branch(p),
        q_flow=by_branch(q),
        u_internal=dict(u_internal),
        losses_kw=losses_pu * case.s_base_kw,
        losses_pu=losses_pu,
        converged=converged,
        iterations=iterations,
        residual=residual,
        slack_p=slack_p,
        slack_q=slack_q,
    )


def _max_mismatch(case, bus_index, parent_of, children, inj_p, inj_q, u, l, p, q, ratio2):
    """Max absolute residual of the branch equalities at the current state."""
    res = 0.0
    for child, (par, br) in parent_of.items():
        ci = bus_index[child]
        down_p = sum(p[k] for k in children[child])
        down_q = sum(q[k] for k in children[child])
        res = max(res, abs(p[child] - l[child] * br.r + inj_p[ci] - down_p))
        res = max(res, abs(q[child] - l[child] * br.x + inj_q[ci] - down_q))
        z2 = br.r * br.r + br.x * br.x
        u_m = u[child] * ratio2[br.key] if br.is_transformer else u[child]
        res = max(
            res,
            abs(u[par] - u_m - 2.0 * (br.r * p[child] + br.x * q[child]) + z2 * l[child]),
        )
        res = max(res, abs(l[child] * u[par] - (p[child] ** 2 + q[child] ** 2)))
    return res


@dataclass(frozen=True)
class EnumerationRow:
    taps: tuple[int, ...]
    losses_kw: Optional[float]
    converged: bool
    feasible: bool


@dataclass(frozen=True)
class EnumerationResult:
    best: Optional[TapAssignment]
    best_losses_kw: Optional[float]
    rows: tuple[EnumerationRow, ...]
    evaluated: int
    n_feasible: int
    n_unconverged: int

    def require_best(self) -> tuple[TapAssignment, float]:
        if self.best is None:
            raise PowerFlowError("no feasible tap assignment")
        return self.best, self.best_losses_kw


def enumerate_taps(
    case: NetworkCase,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    dispatch: Optional[Sequence[tuple[float, float]]] = None,
    cap: int = ENUMERATION_CAP,
    slack_voltage: float = 1.0,
) -> EnumerationResult:
    """Brute-force loss minimization over the whole tap grid.

    Assignments whose converged voltages violate the bus boxes are skipped;
    non-converged assignments are recorded but never treated as candidates.
    Ties are broken toward the lexicographically smallest tap vector (the
    grid is walked in lexicographic order and only strict improvements are
    kept), so the minimizer is deterministic.
    """
    case = ensure_per_unit(case)
    xfs = case.transformers
    total = 1
    for br in xfs:
        total *= br.tap.k_taps + 1
    if total > cap:
        raise ValueError(
            f"tap grid has {total} assignments, above the cap of {cap}"
        )

    best_taps = None
    best_losses = math.inf
    rows = []
    n_feasible = 0
    n_unconverged = 0
    for combo in itertools.product(*(range(br.tap.k_taps + 1) for br in xfs)):
        assignment = TapAssignment.from_sequence(case, combo)
        try:
            sol = solve_powerflow(
                case, assignment, tol=tol, max_iter=max_iter,
                dispatch=dispatch, slack_voltage=slack_voltage,
            )
        except PowerFlowError:
            n_unconverged += 1
            rows.append(EnumerationRow(combo, None, False, False))
            continue
        if not sol.converged:
            n_unconverged += 1
            rows.append(EnumerationRow(combo, sol.losses_kw, False, False))
            continue
        feasible = sol.voltage_feasible(case)
        if feasible:
            n_feasible += 1
            if sol.losses_kw < best_losses:
                best_losses = sol.losses_kw
                best_taps = assignment
        rows.append(EnumerationRow(combo, sol.losses_kw, True, feasible))

    return EnumerationResult(
        best=best_taps,
        best_losses_kw=None if best_taps is None else best_losses,
        rows=tuple(rows),
        evaluated=len(rows),
        n_feasible=n_feasible,
        n_unconverged=n_unconverged,
    )
