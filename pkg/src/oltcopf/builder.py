"""Assembly of the tap-optimization MISOCP in branch flow variables.

Variables are squared voltages per bus, sending-end flows and squared
currents per branch, the tap-encoding variables per transformer, generator
outputs, and the slack-bus injection. Losses are minimized as sum(r * L),
which equals the total net injection at any point satisfying the balance
rows. The squared-current definition is relaxed to one rotated cone per
branch; exactness is checked a posteriori, not assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .linearization import (
    LinearizationConfig,
    TapEncoding,
    canonical_bits,
    decode_tap,
    encode_tap,
    encode_tap_approximate,
)
from .network import NetworkCase, ensure_per_unit, validate_radial
from .powerflow import TapAssignment
from .program import MixedIntegerConicProgram, ProgramBuilder, ProgramError

INTEGRALITY_TOL = 1e-6


class IntegralityError(ProgramError):
    """Raised when a solver point has a fractional binary."""


@dataclass(frozen=True)
class BuildOptions:
    """Model assembly knobs.

    slack_voltage is the fixed substation voltage (p.u.); default_l_cap
    bounds squared currents (p.u.^2) on branches without an ampacity;
    approximate switches the tap encoding to the first-order baseline.
    """

    slack_voltage: float = 1.0
    default_l_cap: float = 10.0
    approximate: bool = False


@dataclass(frozen=True)
class OpfSolution:
    """Decoded optimizer output in network terms (losses in kW)."""

    status: str  # optimal | infeasible | gap-limit
    taps: Optional[TapAssignment]
    ratios: dict[str, float]
    u: dict[int, float]
    l: dict[str, float]
    p_flow: dict[str, float]
    q_flow: dict[str, float]
    u_internal: dict[str, float]
    gen_p: dict[int, float]
    gen_q: dict[int, float]
    slack_p: float
    slack_q: float
    objective_pu: float
    losses_kw: float
    cone_gaps: dict[str, float]
    bigm_gaps: dict[str, float]
    bound_gap: float = 0.0
    nodes: int = 0
    iterations: int = 0
    wall_s: float = 0.0

    @property
    def max_cone_gap(self) -> float:
        return max(self.cone_gaps.values(), default=0.0)

    @property
    def max_bigm_gap(self) -> float:
        return max(self.bigm_gaps.values(), default=0.0)


def build_opf(
    case: NetworkCase,
    config: LinearizationConfig = LinearizationConfig(),
    options: BuildOptions = BuildOptions(),
) -> MixedIntegerConicProgram:
    """Build the full program for a validated case (converted to per-unit).

    Emits nodal balance rows, voltage-drop rows (through the tap-side
    voltage for transformer branches), the tap encodings, one rotated cone
    per branch, and box bounds everywhere so relaxations stay bounded.
    Building the same case twice yields an identical program.
    """
    case = ensure_per_unit(case)
    topo = validate_radial(case)
    pb = ProgramBuilder(base_mva=case.base_mva, case_name=case.name)

    slack_id = topo.root
    u_slack = options.slack_voltage**2

    u_var: dict[int, int] = {}
    for bus in case.buses:
        if bus.id == slack_id:
            lb = ub = u_slack
        else:
            lb, ub = bus.v_min**2, bus.v_max**2
        u_var[bus.id] = pb.add_variable(
            f"U[{bus.id}]", lb, ub, meta=("bus", bus.id)
        )

    p_var: dict[str, int] = {}
    q_var: dict[str, int] = {}
    l_var: dict[str, int] = {}
    for br in case.branches:
        l_cap = options.default_l_cap if br.i_max is None else br.i_max**2
        _, u_hi = pb.bounds(u_var[br.from_bus])
        flow_cap = math.sqrt(l_cap * u_hi)
        p_var[br.key] = pb.add_variable(
            f"P[{br.key}]", -flow_cap, flow_cap, meta=("branch", br.key, "p")
        )
        q_var[br.key] = pb.add_variable(
            f"Q[{br.key}]", -flow_cap, flow_cap, meta=("branch", br.key, "q")
        )
        l_var[br.key] = pb.add_variable(
            f"L[{br.key}]", 0.0, l_cap, meta=("branch", br.key, "l")
        )

    ujt_var: dict[str, int] = {}
    for br in case.transformers:
        child = case.bus(br.to_bus)
        lo = br.tap.t_min**2 * child.v_min**2
        hi = br.tap.t_max**2 * child.v_max**2
        ujt_var[br.key] = pb.add_variable(
            f"Ujt[{br.key}]", lo, hi, meta=("transformer", br.key, "ujt", br.to_bus)
        )

    encode = encode_tap_approximate if options.approximate else encode_tap
    for br in case.transformers:
        encoding = encode(
            br.tap, u_var[br.to_bus], ujt_var[br.key], pb, br.key, config
        )
        pb.register_encoding(encoding)

    gen_p: list[int] = []
    gen_q: list[int] = []
    for gi, gen in enumerate(case.generators):
        gen_p.append(pb.add_variable(
            f"pg[{gi}@{gen.bus}]", gen.p_min, gen.p_max, meta=("gen", gi, "p")
        ))
        gen_q.append(pb.add_variable(
            f"qg[{gi}@{gen.bus}]", gen.q_min, gen.q_max, meta=("gen", gi, "q")
        ))

    # slack injection covers any dispatch the rest of the model allows
    s_cap = 1.0 + sum(abs(b.p_load) + abs(b.q_load) for b in case.buses)
    s_cap += sum(
        max(abs(g.p_min), abs(g.p_max)) + max(abs(g.q_min), abs(g.q_max))
        for g in case.generators
    )
    slack_p = pb.add_variable(f"ps[{slack_id}]", -s_cap, s_cap, meta=("slack", "p"))
    slack_q = pb.add_variable(f"qs[{slack_id}]", -s_cap, s_cap, meta=("slack", "q"))

    children = topo.children()
    parent_of = {child: case.branches[idx] for child, (_, idx) in topo.parent.items()}

    for bus in case.buses:
        prow: dict[int, float] = {}
        qrow: dict[int, float] = {}
        for k in children[bus.id]:
            br = parent_of[k]
            prow[p_var[br.key]] = prow.get(p_var[br.key], 0.0) + 1.0
            qrow[q_var[br.key]] = qrow.get(q_var[br.key], 0.0) + 1.0
        if bus.id != slack_id:
            br = parent_of[bus.id]
            prow[p_var[br.key]] = prow.get(p_var[br.key], 0.0) - 1.0
            prow[l_var[br.key]] = prow.get(l_var[br.key], 0.0) + br.r
            qrow[q_var[br.key]] = qrow.get(q_var[br.key], 0.0) - 1.0
            qrow[l_var[br.key]] = qrow.get(l_var[br.key], 0.0) + br.x
        else:
            prow[slack_p] = -1.0
            qrow[slack_q] = -1.0
        for gi, gen in enumerate(case.generators):
            if gen.bus == bus.id:
                prow[gen_p[gi]] = prow.get(gen_p[gi], 0.0) - 1.0
                qrow[gen_q[gi]] = qrow.get(gen_q[gi], 0.0) - 1.0
        pb.add_eq(prow, -bus.p_load, tag=("pbal", bus.id))
        pb.add_eq(qrow, -bus.q_load, tag=("qbal", bus.id))

    for br in case.branches:
        z2 = br.r**2 + br.x**2
        receiving = ujt_var[br.key] if br.is_transformer else u_var[br.to_bus]
        pb.add_eq(
            {
                u_var[br.from_bus]: 1.0,
                receiving: -1.0,
                p_var[br.key]: -2.0 * br.r,
                q_var[br.key]: -2.0 * br.x,
                l_var[br.key]: z2,
            },
            0.0,
            tag=("vdrop", br.key),
        )

    for br in case.branches:
        pb.add_cone(
            l_var[br.key], u_var[br.from_bus], p_var[br.key], q_var[br.key],
            tag=("cone", br.key),
        )

    for br in case.branches:
        if br.r != 0.0:
            pb.add_objective(l_var[br.key], br.r)

    return pb.build()


def fix_taps(
    program: MixedIntegerConicProgram, taps: TapAssignment
) -> MixedIntegerConicProgram:
    """Pin every transformer's bits to the canonical encoding of its position.

    The result has no free binaries (a pure SOCP).
    """
    overrides: dict[int, tuple[float, float]] = {}
    for enc in program.tap_encodings:
        try:
            position = taps.position(enc.transformer)
        except KeyError:
            raise ValueError(
                f"no tap position given for transformer {enc.transformer}"
            ) from None
        if not 0 <= position <= enc.k_taps:
            raise ValueError(
                f"tap position {position} for {enc.transformer} "
                f"outside [0, {enc.k_taps}]"
            )
        for n, bit in enumerate(canonical_bits(position, enc.n_bits)):
            overrides[enc.bit_vars[n]] = (float(bit), float(bit))
    return program.with_bounds(overrides)


def decode_assignment(
    program: MixedIntegerConicProgram, x: Sequence[float], tol: float = INTEGRALITY_TOL
) -> tuple[TapAssignment, dict[str, float]]:
    """Tap positions and ratios encoded by a solver point's bit values."""
    positions: dict[str, int] = {}
    ratios: dict[str, float] = {}
    for enc in program.tap_encodings:
        bits = []
        for idx in enc.bit_vars:
            val = x[idx]
            rounded = round(val)
            if abs(val - rounded) > tol or rounded not in (0, 1):
                raise IntegralityError(
                    f"{program.variables[idx].name} = {val:.6g} is not within "
                    f"{tol:g} of a binary value"
                )
            bits.append(int(rounded))
        position, ratio = decode_tap(enc, bits)
        positions[enc.transformer] = position
        ratios[enc.transformer] = ratio
    return TapAssignment(positions), ratios


def extract_solution(
    program: MixedIntegerConicProgram,
    x: Sequence[float],
    status: str = "optimal",
    bound_gap: float = 0.0,
    nodes: int = 0,
    iterations: int = 0,
    wall_s: float = 0.0,
) -> OpfSolution:
    """Map a raw solver point back to network quantities and diagnostics."""
    if len(x) != program.n_vars:
        raise ProgramError(
            f"point has dimension {len(x)}, program has {program.n_vars}"
        )
    taps, ratios = decode_assignment(program, x)

    u: dict[int, float] = {}
    l: dict[str, float] = {}
    p_flow: dict[str, float] = {}
    q_flow: dict[str, float] = {}
    u_internal: dict[str, float] = {}
    gen_p: dict[int, float] = {}
    gen_q: dict[int, float] = {}
    slack_p = slack_q = 0.0
    xf_child: dict[str, int] = {}

    for i, var in enumerate(program.variables):
        meta = program.metadata.get(var.name)
        if meta is None:
            continue
        kind = meta[0]
        if kind == "bus":
            u[meta[1]] = x[i]
        elif kind == "branch":
            key, which = meta[1], meta[2]
            {"p": p_flow, "q": q_flow, "l": l}[which][key] = x[i]
        elif kind == "transformer" and meta[2] == "ujt":
            u_internal[meta[1]] = x[i]
            xf_child[meta[1]] = meta[3]
        elif kind == "gen":
            (gen_p if meta[2] == "p" else gen_q)[meta[1]] = x[i]
        elif kind == "slack":
            if meta[1] == "p":
                slack_p = x[i]
            else:
                slack_q = x[i]

    cone_gaps = {cone.tag[1]: cone.gap(x) for cone in program.cones}
    bigm_gaps: dict[str, float] = {}
    for enc in program.tap_encodings:
        # decoded-ratio consistency: tap-side voltage vs t^2 * child-bus voltage
        key = enc.transformer
        uj = u[xf_child[key]]
        t = ratios[key]
        bigm_gaps[key] = abs(x[enc.ujt_var] - t * t * uj)

    objective_pu = program.objective_value(x)
    return OpfSolution(
        status=status,
        taps=taps,
        ratios=ratios,
        u=u,
        l=l,
        p_flow=p_flow,
        q_flow=q_flow,
        u_internal=u_internal,
        gen_p=gen_p,
        gen_q=gen_q,
        slack_p=slack_p,
        slack_q=slack_q,
        objective_pu=objective_pu,
        losses_kw=objective_pu * program.base_mva * 1000.0,
        cone_gaps=cone_gaps,
        bigm_gaps=bigm_gaps,
        bound_gap=bound_gap,
        nodes=nodes,
        iterations=iterations,
        wall_s=wall_s,
    )
