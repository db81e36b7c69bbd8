"""Solver configuration shared by the conic engine and branch-and-bound."""

from __future__ import annotations

from dataclasses import dataclass, replace

IPM = "ipm"
SPLITTING = "splitting"


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and limits.

    rel_gap: branch-and-bound relative optimality gap.
    socp_tol: interior-point feasibility/duality tolerance per relaxation.
    max_iter: interior-point (or splitting) iteration cap per solve.
    node_limit: branch-and-bound explored-node cap.
    threads: >1 solves sibling relaxations in deterministic batches.
    mode: ``ipm`` (default) or ``splitting`` (operator-splitting fallback,
      looser accuracy, no infeasibility certificates).
    """

    rel_gap: float = 1e-6
    socp_tol: float = 1e-9
    max_iter: int = 200
    node_limit: int = 100_000
    threads: int = 1
    mode: str = IPM

    def __post_init__(self):
        if self.mode not in (IPM, SPLITTING):
            raise ValueError(f"unknown solver mode {self.mode!r}")
        if self.rel_gap <= 0 or self.socp_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1 or self.node_limit < 1 or self.threads < 1:
            raise ValueError("limits must be at least 1")

    def with_updates(self, **kwargs) -> "SolverSettings":
        return replace(self, **kwargs)
