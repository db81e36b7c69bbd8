"""Domain model for radial distribution networks.

Units convention: a :class:`NetworkCase` is either in physical units
(loads in kW/kvar, impedances in ohm, current limits in A) or in per-unit
on its own MVA/kV base; the ``per_unit`` flag says which. Case files always
carry physical units, conversion is explicit via :func:`to_per_unit`.

Voltage bounds are per-unit in both representations. Tap-changer ratio
bounds are dimensionless.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Optional

log = logging.getLogger(__name__)

CASE_SCHEMA = "opf-case/1"

SLACK = "slack"
LOAD = "load"
LINE = "line"
TRANSFORMER = "transformer"


class CaseError(Exception):
    """Base class for case-file problems."""


class CaseParseError(CaseError):
    """Raised when a case file cannot be read or has the wrong shape."""


class CaseValidationError(CaseError):
    """Raised when a parsed case violates a structural invariant."""


class TopologyError(CaseValidationError):
    """Raised when the branch graph is not a tree rooted at the slack bus."""


def _decimal(value) -> Fraction:
    """Exact rational value of a number that arrived as a decimal literal."""
    if isinstance(value, Fraction):
        return value
    return Fraction(str(value))


@dataclass(frozen=True)
class TapChanger:
    """On-load tap-changer limits: ratio range [t_min, t_max] over k_taps steps."""

    t_min: float
    t_max: float
    k_taps: int

    def __post_init__(self):
        if not (0.0 < self.t_min < self.t_max):
            raise CaseValidationError(
                f"tap changer needs 0 < t_min < t_max, got [{self.t_min}, {self.t_max}]"
            )
        if self.k_taps < 1:
            raise CaseValidationError(f"k_taps must be >= 1, got {self.k_taps}")

    @property
    def delta_t_exact(self) -> Fraction:
        """Per-tap ratio change, computed in exact rational arithmetic.

        t_min/t_max enter as decimal literals, so forming the difference as
        Fractions avoids the float drift that makes 0.005-style steps
        inconsistent across different k_taps.
        """
        return (_decimal(self.t_max) - _decimal(self.t_min)) / self.k_taps

    @property
    def delta_t(self) -> float:
        return float(self.delta_t_exact)

    def ratio(self, position: int) -> float:
        """Turns ratio at integer tap position (0 <= position <= k_taps)."""
        if not 0 <= position <= self.k_taps:
            raise ValueError(
                f"tap position {position} outside [0, {self.k_taps}]"
            )
        return float(_decimal(self.t_min) + position * self.delta_t_exact)


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str  # SLACK or LOAD
    p_load: float
    q_load: float
    v_min: float
    v_max: float

    def __post_init__(self):
        if self.kind not in (SLACK, LOAD):
            raise CaseValidationError(f"bus {self.id}: unknown kind {self.kind!r}")
        if not (self.v_min < self.v_max):
            raise CaseValidationError(
                f"bus {self.id}: need v_min < v_max, got [{self.v_min}, {self.v_max}]"
            )
        for name in ("p_load", "q_load", "v_min", "v_max"):
            if not math.isfinite(getattr(self, name)):
                raise CaseValidationError(f"bus {self.id}: non-finite {name}")


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    kind: str = LINE  # LINE or TRANSFORMER
    i_max: Optional[float] = None
    tap: Optional[TapChanger] = None

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise CaseValidationError(f"branch {self.key}: self-loop")
        if self.r < 0 or self.x < 0:
            raise CaseValidationError(f"branch {self.key}: negative impedance")
        if self.kind == LINE:
            if self.tap is not None:
                raise CaseValidationError(f"branch {self.key}: line with tap changer")
            if self.r == 0 and self.x == 0:
                raise CaseValidationError(f"branch {self.key}: zero-impedance line")
        elif self.kind == TRANSFORMER:
            if self.tap is None:
                raise CaseValidationError(
                    f"branch {self.key}: transformer without tap changer"
                )
        else:
            raise CaseValidationError(f"branch {self.key}: unknown kind {self.kind!r}")

    @property
    def key(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"

    @property
    def is_transformer(self) -> bool:
        return self.kind == TRANSFORMER


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float

    def __post_init__(self):
        if self.p_min > self.p_max or self.q_min > self.q_max:
            raise CaseValidationError(f"generator at bus {self.bus}: empty output box")

    @property
    def is_fixed(self) -> bool:
        """True when the operating point is fully determined by the bounds."""
        return self.p_min == self.p_max and self.q_min == self.q_max


@dataclass(frozen=True)
class NetworkCase:
    """Immutable radial network case.

    ``branches`` are oriented parent -> child after :func:`load_case`;
    hand-built cases may carry either orientation until validated.
    """

    name: str
    base_mva: float
    base_kv: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...] = ()
    per_unit: bool = False

    def __post_init__(self):
        if self.base_mva <= 0 or self.base_kv <= 0:
            raise CaseValidationError("base_mva and base_kv must be positive")
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise CaseValidationError("duplicate bus ids")
        slacks = [b.id for b in self.buses if b.kind == SLACK]
        if len(slacks) != 1:
            raise CaseValidationError(
                f"exactly one slack bus required, found {len(slacks)}"
            )
        known = set(ids)
        seen_pairs = set()
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in known:
                    raise CaseValidationError(
                        f"branch {br.key} references unknown bus {end}"
                    )
            pair = frozenset((br.from_bus, br.to_bus))
            if pair in seen_pairs:
                raise CaseValidationError(f"duplicate branch between {br.key}")
            seen_pairs.add(pair)
        for gen in self.generators:
            if gen.bus not in known:
                raise CaseValidationError(
                    f"generator references unknown bus {gen.bus}"
                )

    @property
    def slack_bus(self) -> Bus:
        return next(b for b in self.buses if b.kind == SLACK)

    @property
    def transformers(self) -> tuple[Branch, ...]:
        return tuple(br for br in self.branches if br.is_transformer)

    def bus(self, bus_id: int) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(bus_id)

    def branch(self, key: str) -> Branch:
        for br in self.branches:
            if br.key == key:
                return br
        raise KeyError(key)

    def adjacency(self) -> dict[int, tuple[int, ...]]:
        """Neighbor sets K(j) implied by the branch list."""
        adj: dict[int, list[int]] = {b.id: [] for b in self.buses}
        for br in self.branches:
            adj[br.from_bus].append(br.to_bus)
            adj[br.to_bus].append(br.from_bus)
        return {k: tuple(v) for k, v in adj.items()}

    @property
    def z_base_ohm(self) -> float:
        return self.base_kv**2 / self.base_mva

    @property
    def s_base_kw(self) -> float:
        return self.base_mva * 1000.0

    @property
    def i_base_a(self) -> float:
        # three-phase base: S = sqrt(3) * V_LL * I
        return self.base_mva * 1000.0 / (math.sqrt(3) * self.base_kv)


@dataclass(frozen=True)
class TopologyReport:
    """Tree structure of a validated radial case.

    ``order`` lists bus ids root-first by depth; iterating it in reverse gives
    the leaves-to-root order used by the power-flow sweep. ``parent`` maps
    each non-root bus to (parent bus id, index into case.branches).
    ``reversed_branches`` are indices whose file orientation was child->parent.
    """

    root: int
    parent: Mapping[int, tuple[int, int]]
    order: tuple[int, ...]
    reversed_branches: tuple[int, ...] = ()

    def children(self) -> dict[int, tuple[int, ...]]:
        kids: dict[int, list[int]] = {b: [] for b in self.order}
        for child, (par, _) in self.parent.items():
            kids[par].append(child)
        return {k: tuple(v) for k, v in kids.items()}


def validate_radial(case: NetworkCase) -> TopologyReport:
    """Check the branch graph is a tree rooted at the slack bus.

    Raises :class:`TopologyError` on cycles, disconnected buses or a branch
    count that cannot form a spanning tree.
    """
    n = len(case.buses)
    if len(case.branches) != n - 1:
        raise TopologyError(
            f"radial case needs |branches| = |buses| - 1, "
            f"got {len(case.branches)} branches for {n} buses"
        )
    adj: dict[int, list[tuple[int, int]]] = {b.id: [] for b in case.buses}
    for idx, br in enumerate(case.branches):
        adj[br.from_bus].append((br.to_bus, idx))
        adj[br.to_bus].append((br.from_bus, idx))

    root = case.slack_bus.id
    parent: dict[int, tuple[int, int]] = {}
    order = [root]
    reversed_branches: list[int] = []
    seen = {root}
    queue = deque([root])
    while queue:
        bus = queue.popleft()
        for nbr, idx in adj[bus]:
            if nbr in seen:
                is_parent_edge = bus in parent and parent[bus][1] == idx
                if not is_parent_edge:
                    raise TopologyError(
                        f"cycle detected through branch {case.branches[idx].key}"
                    )
                continue
            seen.add(nbr)
            parent[nbr] = (bus, idx)
            if case.branches[idx].to_bus != nbr:
                reversed_branches.append(idx)
            order.append(nbr)
            queue.append(nbr)
    if len(seen) != n:
        missing = sorted(b.id for b in case.buses if b.id not in seen)
        raise TopologyError(f"disconnected buses: {missing}")
    return TopologyReport(
        root=root,
        parent=parent,
        order=tuple(order),
        reversed_branches=tuple(reversed_branches),
    )


def orient_radial(case: NetworkCase) -> tuple[NetworkCase, TopologyReport]:
    """Validate radiality and normalize branch orientation to parent->child."""
    report = validate_radial(case)
    if not report.reversed_branches:
        return case, report
    flipped = list(case.branches)
    for idx in report.reversed_branches:
        br = flipped[idx]
        flipped[idx] = replace(br, from_bus=br.to_bus, to_bus=br.from_bus)
    oriented = replace(case, branches=tuple(flipped))
    report = validate_radial(oriented)
    return oriented, report


def _require(mapping: Mapping, key: str, context: str):
    if key not in mapping:
        raise CaseParseError(f"{context}: missing required field {key!r}")
    return mapping[key]


def _num(value, context: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise CaseParseError(f"{context}: expected a number, got {value!r}") from None


def load_case(path) -> NetworkCase:
    """Load and validate a case file (physical units, schema opf-case/1).

    Returns a case with branches oriented parent -> child. Numeric literals
    are retained as decimal strings during parsing so tap-ratio bounds stay
    exact for the rational delta-t computation.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(), parse_float=str)
    except OSError as exc:
        raise CaseParseError(f"cannot read case file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CaseParseError(f"malformed case file {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise CaseParseError(f"{path}: top level must be an object")
    schema = raw.get("schema")
    if schema != CASE_SCHEMA:
        raise CaseParseError(
            f"{path}: unsupported schema {schema!r} (expected {CASE_SCHEMA!r})"
        )

    base = _require(raw, "base", str(path))
    buses = []
    for i, entry in enumerate(_require(raw, "buses", str(path))):
        ctx = f"{path}: buses[{i}]"
        buses.append(
            Bus(
                id=int(_require(entry, "id", ctx)),
                kind=str(_require(entry, "kind", ctx)),
                p_load=_num(entry.get("p_load_kw", 0), ctx),
                q_load=_num(entry.get("q_load_kvar", 0), ctx),
                v_min=_num(_require(entry, "v_min_pu", ctx), ctx),
                v_max=_num(_require(entry, "v_max_pu", ctx), ctx),
            )
        )
        if buses[-1].p_load < 0 or buses[-1].q_load < 0:
            log.warning("%s: negative load at bus %s", path, buses[-1].id)

    branches = []
    for i, entry in enumerate(_require(raw, "branches", str(path))):
        ctx = f"{path}: branches[{i}]"
        tap_raw = entry.get("transformer")
        tap = None
        if tap_raw is not None:
            tap = TapChanger(
                t_min=_num(_require(tap_raw, "t_min", ctx), ctx),
                t_max=_num(_require(tap_raw, "t_max", ctx), ctx),
                k_taps=int(_require(tap_raw, "k_taps", ctx)),
            )
        i_max = entry.get("i_max_a")
        branches.append(
            Branch(
                from_bus=int(_require(entry, "from", ctx)),
                to_bus=int(_require(entry, "to", ctx)),
                r=_num(_require(entry, "r_ohm", ctx), ctx),
                x=_num(_require(entry, "x_ohm", ctx), ctx),
                i_max=None if i_max is None else _num(i_max, ctx),
                kind=TRANSFORMER if tap else LINE,
                tap=tap,
            )
        )

    generators = []
    for i, entry in enumerate(raw.get("generators", ())):
        ctx = f"{path}: generators[{i}]"
        generators.append(
            Generator(
                bus=int(_require(entry, "bus", ctx)),
                p_min=_num(_require(entry, "p_min_kw", ctx), ctx),
                p_max=_num(_require(entry, "p_max_kw", ctx), ctx),
                q_min=_num(_require(entry, "q_min_kvar", ctx), ctx),
                q_max=_num(_require(entry, "q_max_kvar", ctx), ctx),
            )
        )

    case = NetworkCase(
        name=raw.get("name", path.stem),
        base_mva=_num(_require(base, "mva", str(path)), str(path)),
        base_kv=_num(_require(base, "kv", str(path)), str(path)),
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(generators),
        per_unit=False,
    )
    oriented, _ = orient_radial(case)
    return oriented


def to_per_unit(case: NetworkCase) -> NetworkCase:
    """Convert a physical-units case to per-unit on its own base."""
    if case.per_unit:
        raise ValueError(f"case {case.name!r} is already per-unit")
    z_base = case.z_base_ohm
    s_base = case.s_base_kw
    i_base = case.i_base_a
    log.info(
        "converting case %s to per-unit: Z_base=%.6g ohm, S_base=%.6g kW, I_base=%.6g A",
        case.name, z_base, s_base, i_base,
    )
    buses = tuple(
        replace(b, p_load=b.p_load / s_base, q_load=b.q_load / s_base)
        for b in case.buses
    )
    branches = tuple(
        replace(
            br,
            r=br.r / z_base,
            x=br.x / z_base,
            i_max=None if br.i_max is None else br.i_max / i_base,
        )
        for br in case.branches
    )
    generators = tuple(
        replace(
            g,
            p_min=g.p_min / s_base,
            p_max=g.p_max / s_base,
            q_min=g.q_min / s_base,
            q_max=g.q_max / s_base,
        )
        for g in case.generators
    )
    return replace(
        case, buses=buses, branches=branches, generators=generators, per_unit=True
    )


def from_per_unit(case: NetworkCase) -> NetworkCase:
    """Inverse of :func:`to_per_unit`; round-trip is identity to ~1e-16 relative."""
    if not case.per_unit:
        raise ValueError(f"case {case.name!r} is not per-unit")
    z_base = case.z_base_ohm
    s_base = case.s_base_kw
    i_base = case.i_base_a
    buses = tuple(
        replace(b, p_load=b.p_load * s_base, q_load=b.q_load * s_base)
        for b in case.buses
    )
    branches = tuple(
        replace(
            br,
            r=br.r * z_base,
            x=br.x * z_base,
            i_max=None if br.i_max is None else br.i_max * i_base,
        )
        for br in case.branches
    )
    generators = tuple(
        replace(
            g,
            p_min=g.p_min * s_base,
            p_max=g.p_max * s_base,
            q_min=g.q_min * s_base,
            q_max=g.q_max * s_base,
        )
        for g in case.generators
    )
    return replace(
        case, buses=buses, branches=branches, generators=generators, per_unit=False
    )


def ensure_per_unit(case: NetworkCase) -> NetworkCase:
    return case if case.per_unit else to_per_unit(case)
