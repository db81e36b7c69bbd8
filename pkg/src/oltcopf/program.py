"""Solver-independent standard form for the mixed-integer conic OPF.

A program is a flat variable vector with finite bounds and binary marks,
sparse linear equality/inequality rows, rotated second-order cones over
variable quadruples (l * u >= p^2 + q^2), and a sparse linear objective.
Rows and cones carry structured tags so the solver's node presolve can
recognize the tap-encoding families without string parsing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Mapping, Optional

if TYPE_CHECKING:
    from .linearization import TapEncoding


class ProgramError(ValueError):
    """Raised on malformed rows, unknown variables or infinite bounds."""


@dataclass(frozen=True)
class VariableDef:
    name: str
    lb: float
    ub: float
    binary: bool = False

    def __post_init__(self):
        if not (self.lb <= self.ub):
            raise ProgramError(f"variable {self.name}: empty bound box")
        if not (math.isfinite(self.lb) and math.isfinite(self.ub)):
            raise ProgramError(f"variable {self.name}: bounds must be finite")
        if self.binary and (self.lb < 0.0 or self.ub > 1.0):
            raise ProgramError(f"binary variable {self.name}: bounds outside [0, 1]")


@dataclass(frozen=True)
class LinearRow:
    """Sparse row sum_i coeffs[i] * x_i (= or <=) rhs."""

    coeffs: tuple[tuple[int, float], ...]
    rhs: float
    tag: tuple = ()

    def value(self, x) -> float:
        return sum(c * x[i] for i, c in self.coeffs)


@dataclass(frozen=True)
class ConeRef:
    """Rotated cone l * u >= p^2 + q^2 over four existing variables."""

    l_var: int
    u_var: int
    p_var: int
    q_var: int
    tag: tuple = ()

    def gap(self, x) -> float:
        return x[self.l_var] * x[self.u_var] - (x[self.p_var] ** 2 + x[self.q_var] ** 2)


@dataclass(frozen=True)
class MixedIntegerConicProgram:
    variables: tuple[VariableDef, ...]
    objective: tuple[tuple[int, float], ...]
    eq_rows: tuple[LinearRow, ...]
    ineq_rows: tuple[LinearRow, ...]
    cones: tuple[ConeRef, ...]
    metadata: Mapping[str, tuple]
    tap_encodings: tuple["TapEncoding", ...] = ()
    base_mva: float = 1.0
    case_name: str = ""

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def binary_indices(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.variables) if v.binary)

    @property
    def n_binary(self) -> int:
        return len(self.binary_indices)

    def index_of(self, name: str) -> int:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise KeyError(name)

    def with_bounds(self, overrides: Mapping[int, tuple[float, float]]) -> "MixedIntegerConicProgram":
        """Copy with replaced bounds; used to fix or relax binaries."""
        new_vars = list(self.variables)
        for i, (lb, ub) in overrides.items():
            new_vars[i] = replace(new_vars[i], lb=lb, ub=ub)
        return replace(self, variables=tuple(new_vars))

    def objective_value(self, x) -> float:
        return sum(c * x[i] for i, c in self.objective)

    def dump(self) -> str:
        """Human-auditable listing (format documented in docs/model-format.md)."""
        out = [f"program {self.case_name or '<unnamed>'}"]
        out.append(
            f"  {self.n_vars} variables ({self.n_binary} binary), "
            f"{len(self.eq_rows)} equalities, {len(self.ineq_rows)} inequalities, "
            f"{len(self.cones)} cones"
        )
        out.append("variables:")
        for i, v in enumerate(self.variables):
            mark = " binary" if v.binary else ""
            out.append(f"  [{i:4d}] {v.name:<16s} in [{v.lb:.9g}, {v.ub:.9g}]{mark}")
        out.append("minimize:")
        terms = " + ".join(
            f"{c:.9g}*{self.variables[i].name}" for i, c in self.objective
        )
        out.append(f"  {terms}")

        def fmt_row(row, op):
            lhs = " + ".join(
                f"{c:.9g}*{self.variables[i].name}" for i, c in row.coeffs
            )
            tag = f"   # {'/'.join(str(t) for t in row.tag)}" if row.tag else ""
            return f"  {lhs} {op} {row.rhs:.9g}{tag}"

        out.append("subject to (equalities):")
        out.extend(fmt_row(r, "==") for r in self.eq_rows)
        out.append("subject to (inequalities):")
        out.extend(fmt_row(r, "<=") for r in self.ineq_rows)
        out.append("rotated cones  l*u >= p^2 + q^2:")
        for cone in self.cones:
            names = [self.variables[i].name
                     for i in (cone.l_var, cone.u_var, cone.p_var, cone.q_var)]
            tag = f"   # {'/'.join(str(t) for t in cone.tag)}" if cone.tag else ""
            out.append(f"  ({names[0]}, {names[1]}; {names[2]}, {names[3]}){tag}")
        return "\n".join(out) + "\n"


class ProgramBuilder:
    """Incrementally collects variables, rows and cones, then freezes them."""

    def __init__(self, base_mva: float = 1.0, case_name: str = ""):
        self._vars: list[VariableDef] = []
        self._names: dict[str, int] = {}
        self._objective: dict[int, float] = {}
        self._eq: list[LinearRow] = []
        self._ineq: list[LinearRow] = []
        self._cones: list[ConeRef] = []
        self._meta: dict[str, tuple] = {}
        self._encodings: list = []
        self.base_mva = base_mva
        self.case_name = case_name

    def add_variable(self, name, lb, ub, binary=False, meta=None) -> int:
        if name in self._names:
            raise ProgramError(f"duplicate variable {name!r}")
        self._vars.append(VariableDef(name, float(lb), float(ub), binary))
        idx = len(self._vars) - 1
        self._names[name] = idx
        if meta is not None:
            self._meta[name] = tuple(meta)
        return idx

    def bounds(self, var: int) -> tuple[float, float]:
        v = self._vars[var]
        return v.lb, v.ub

    def _freeze_coeffs(self, coeffs: Mapping[int, float]):
        for i in coeffs:
            if not 0 <= i < len(self._vars):
                raise ProgramError(f"row references unknown variable index {i}")
        return tuple(sorted((i, float(c)) for i, c in coeffs.items() if c != 0.0))

    def add_eq(self, coeffs, rhs, tag=()):
        self._eq.append(LinearRow(self._freeze_coeffs(coeffs), float(rhs), tuple(tag)))

    def add_ineq(self, coeffs, rhs, tag=()):
        self._ineq.append(LinearRow(self._freeze_coeffs(coeffs), float(rhs), tuple(tag)))

    def add_cone(self, l_var, u_var, p_var, q_var, tag=()):
        for i in (l_var, u_var, p_var, q_var):
            if not 0 <= i < len(self._vars):
                raise ProgramError(f"cone references unknown variable index {i}")
        self._cones.append(ConeRef(l_var, u_var, p_var, q_var, tuple(tag)))

    def add_objective(self, var: int, coeff: float):
        self._objective[var] = self._objective.get(var, 0.0) + float(coeff)

    def register_encoding(self, encoding) -> None:
        self._encodings.append(encoding)

    def build(self) -> MixedIntegerConicProgram:
        return MixedIntegerConicProgram(
            variables=tuple(self._vars),
            objective=tuple(sorted(self._objective.items())),
            eq_rows=tuple(self._eq),
            ineq_rows=tuple(self._ineq),
            cones=tuple(self._cones),
            metadata=dict(self._meta),
            tap_encodings=tuple(self._encodings),
            base_mva=self.base_mva,
            case_name=self.case_name,
        )
