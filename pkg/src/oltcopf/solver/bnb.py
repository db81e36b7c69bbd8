"""Branch-and-bound over the tap-encoding bits of the MISOCP.

Best-bound node selection with depth-first plunging until the first
incumbent; at every fractional node a rounding heuristic decodes the
relaxed tap positions, re-encodes them canonically and solves the fixed-tap
SOCP. Deterministic by construction: node ordering, branching and incumbent
tie-breaks are all fully specified, and the optional thread pool only
parallelizes relaxation solves inside deterministic batches.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..builder import OpfSolution, extract_solution
from ..linearization import canonical_bits
from ..program import MixedIntegerConicProgram
from .settings import SolverSettings
from .socp import INFEASIBLE, OPTIMAL, SocpResult, solve_socp

log = logging.getLogger(__name__)

INT_TOL = 1e-7


@dataclass(frozen=True)
class BnbNode:
    """Partial bit assignment with the bound inherited from its parent."""

    fixed: tuple[tuple[int, int], ...]  # (variable index, 0/1), sorted
    bound: float
    depth: int

    def bounds_override(self) -> dict[int, tuple[float, float]]:
        return {i: (float(v), float(v)) for i, v in self.fixed}


@dataclass
class _Incumbent:
    objective: float
    taps: tuple[int, ...]
    x: np.ndarray


@dataclass
class _Stats:
    nodes: int = 0
    relaxations: int = 0
    heuristic_solves: int = 0
    pruned_bound: int = 0
    pruned_infeasible: int = 0


def branching_rule(
    program: MixedIntegerConicProgram,
    free_bits: list[int],
    values: np.ndarray,
) -> int:
    """Pick the bit to branch on: most fractional value, ties broken by
    highest bit weight 2^n, then by transformer order."""
    bit_rank: dict[int, tuple[int, int]] = {}
    for enc_pos, enc in enumerate(program.tap_encodings):
        for n, idx in enumerate(enc.bit_vars):
            bit_rank[idx] = (n, -enc_pos)
    candidates = []
    for idx in free_bits:
        frac = 0.5 - abs(values[idx] - 0.5)  # distance to the nearest integer
        if frac <= INT_TOL:
            continue
        weight, neg_pos = bit_rank[idx]
        candidates.append((frac, weight, neg_pos, idx))
    if not candidates:
        raise ValueError("branching_rule called without a fractional bit")
    candidates.sort(reverse=True)
    return candidates[0][3]


def _decode_positions(program, values) -> tuple[int, ...]:
    """Relaxed tap position per transformer, rounded into range."""
    taps = []
    for enc in program.tap_encodings:
        t_frac = sum((1 << n) * values[idx] for n, idx in enumerate(enc.bit_vars))
        taps.append(int(min(max(round(t_frac), 0), enc.k_taps)))
    return tuple(taps)


def _canonical_override(program, taps: tuple[int, ...]) -> dict[int, tuple[float, float]]:
    override: dict[int, tuple[float, float]] = {}
    for enc, position in zip(program.tap_encodings, taps):
        for n, bit in enumerate(canonical_bits(position, enc.n_bits)):
            override[enc.bit_vars[n]] = (float(bit), float(bit))
    return override


def _relative_gap(incumbent: float, lower: float) -> float:
    if not math.isfinite(lower):
        return math.inf
    return (incumbent - lower) / max(abs(incumbent), 1e-12)


def _empty_solution(program, status, lower_bound, stats, wall_s) -> OpfSolution:
    return OpfSolution(
        status=status,
        taps=None,
        ratios={},
        u={},
        l={},
        p_flow={},
        q_flow={},
        u_internal={},
        gen_p={},
        gen_q={},
        slack_p=math.nan,
        slack_q=math.nan,
        objective_pu=math.nan,
        losses_kw=math.nan,
        cone_gaps={},
        bigm_gaps={},
        bound_gap=math.inf,
        nodes=stats.nodes,
        iterations=stats.relaxations,
        wall_s=wall_s,
    )


def branch_and_bound(
    program: MixedIntegerConicProgram,
    settings: SolverSettings = SolverSettings(),
) -> OpfSolution:
    """Solve the MISOCP to the configured relative gap.

    Returns an :class:`OpfSolution` whose status is ``optimal`` (gap at or
    below ``settings.rel_gap``), ``gap-limit`` (node limit reached; best
    incumbent and its gap reported) or ``infeasible``.
    """
    t0 = time.perf_counter()
    stats = _Stats()
    free_bits_root = [
        i for i in program.binary_indices
        if program.variables[i].lb < program.variables[i].ub
    ]

    def relax(node: BnbNode) -> SocpResult:
        stats.relaxations += 1
        return solve_socp(program, settings, bounds=node.bounds_override())

    incumbent: Optional[_Incumbent] = None
    heuristic_cache: dict[tuple[int, ...], Optional[float]] = {}

    def offer(objective: float, taps: tuple[int, ...], x: np.ndarray):
        nonlocal incumbent
        tie = 1e-9 * max(1.0, abs(objective))
        if incumbent is None or objective < incumbent.objective - tie:
            incumbent = _Incumbent(objective, taps, np.array(x))
        elif abs(objective - incumbent.objective) <= tie and taps < incumbent.taps:
            incumbent = _Incumbent(min(objective, incumbent.objective), taps, np.array(x))

    def try_heuristic(values: np.ndarray):
        taps = _decode_positions(program, values)
        if taps in heuristic_cache:
            return
        stats.heuristic_solves += 1
        res = solve_socp(program, settings, bounds=_canonical_override(program, taps))
        if res.status == OPTIMAL:
            heuristic_cache[taps] = res.objective
            offer(res.objective, taps, res.x)
        else:
            heuristic_cache[taps] = None

    # root
    root = BnbNode(fixed=(), bound=-math.inf, depth=0)
    if not free_bits_root:
        res = relax(root)
        stats.nodes = 1
        wall = time.perf_counter() - t0
        if res.status == OPTIMAL:
            return extract_solution(
                program, res.x, status="optimal", bound_gap=0.0,
                nodes=1, iterations=res.iterations, wall_s=wall,
            )
        if res.status == INFEASIBLE:
            return _empty_solution(program, "infeasible", math.inf, stats, wall)
        return _empty_solution(program, "gap-limit", -math.inf, stats, wall)

    counter = itertools.count()
    heap: list[tuple[float, int, BnbNode]] = [(root.bound, next(counter), root)]
    dive: list[BnbNode] = []
    executor = (
        ThreadPoolExecutor(max_workers=settings.threads)
        if settings.threads > 1 else None
    )

    def prune_threshold() -> float:
        if incumbent is None:
            return math.inf
        return incumbent.objective - settings.rel_gap * max(
            abs(incumbent.objective), 1e-12
        )

    def lower_bound() -> float:
        bounds = [node.bound for _, _, node in heap]
        bounds.extend(node.bound for node in dive)
        if incumbent is not None:
            return min(bounds, default=incumbent.objective)
        return min(bounds, default=math.inf)

    hit_node_limit = False
    try:
        while True:
            if stats.nodes >= settings.node_limit:
                hit_node_limit = True
                break
            if incumbent is not None:
                gap = _relative_gap(incumbent.objective, lower_bound())
                if gap <= settings.rel_gap:
                    break
            # node selection: plunge depth-first until an incumbent exists
            batch: list[BnbNode] = []
            if dive and incumbent is None:
                batch.append(dive.pop())
            else:
                if dive:
                    for node in dive:
                        heapq.heappush(heap, (node.bound, next(counter), node))
                    dive.clear()
                width = 1 if executor is None else settings.threads
                while heap and len(batch) < width:
                    _, _, node = heapq.heappop(heap)
                    if node.bound >= prune_threshold():
                        stats.pruned_bound += 1
                        continue
                    batch.append(node)
            if not batch:
                break

            if executor is not None and len(batch) > 1:
                results = list(executor.map(relax, batch))
            else:
                results = [relax(node) for node in batch]

            for node, res in zip(batch, results):
                stats.nodes += 1
                if res.status == INFEASIBLE:
                    stats.pruned_infeasible += 1
                    continue
                if res.status != OPTIMAL and res.x is None:
                    raise RuntimeError(
                        f"relaxation failed at node depth {node.depth}: "
                        f"{res.status} ({res.message})"
                    )
                # the dual value is the certified side; never let solver noise
                # push the bound above the relaxation's primal value
                node_bound = res.objective
                if res.dual_objective is not None:
                    node_bound = min(res.objective, res.dual_objective)
                bound = max(node.bound, node_bound)
                if bound >= prune_threshold():
                    stats.pruned_bound += 1
                    continue
                values = res.x
                frac = [
                    i for i in free_bits_root
                    if dict(node.fixed).get(i) is None
                    and 0.5 - abs(values[i] - 0.5) > INT_TOL
                ]
                if not frac:
                    taps = _decode_positions(program, values)
                    offer(res.objective, taps, values)
                    continue
                try_heuristic(values)
                if incumbent is not None and bound >= prune_threshold():
                    stats.pruned_bound += 1
                    continue
                branch_var = branching_rule(program, frac, values)
                preferred = int(round(values[branch_var]))
                for value in (1 - preferred, preferred):
                    child = BnbNode(
                        fixed=tuple(sorted(node.fixed + ((branch_var, value),))),
                        bound=bound,
                        depth=node.depth + 1,
                    )
                    if incumbent is None:
                        dive.append(child)  # preferred child popped first
                    else:
                        heapq.heappush(heap, (child.bound, next(counter), child))
    finally:
        if executor is not None:
            executor.shutdown()

    wall = time.perf_counter() - t0
    if incumbent is None:
        # queue exhausted without a feasible point means infeasible; stopping
        # early at the node limit leaves only the bound to report
        final = "gap-limit" if hit_node_limit else "infeasible"
        return _empty_solution(program, final, lower_bound(), stats, wall)

    gap = max(0.0, _relative_gap(incumbent.objective, lower_bound()))
    status = "optimal" if gap <= settings.rel_gap else "gap-limit"
    solution = extract_solution(
        program,
        incumbent.x,
        status=status,
        bound_gap=gap,
        nodes=stats.nodes,
        iterations=stats.relaxations,
        wall_s=wall,
    )
    log.info(
        "branch-and-bound: %s, %d nodes (%d relaxations, %d heuristic solves), "
        "gap %.2e, %.2fs",
        solution.status, stats.nodes, stats.relaxations,
        stats.heuristic_solves, gap, wall,
    )
    return solution
