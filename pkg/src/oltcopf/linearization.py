"""Exact mixed-integer-linear encoding of tap-changer ratios.

A discrete ratio t = t_min + T*dt (integer T in [0, K]) enters the branch
flow voltage equation through t^2 * U. Writing T in binary and introducing
per-bit products x_n = lam_n * U and y_n = lam_n * m (with m = t * U), each
product of a binary and a bounded continuous variable is linearized exactly
by a big-M inequality pair, so the squared-ratio relation

    U_out = (t_min + dt * sum 2^n lam_n)^2 * U

holds with equality whenever the bits are integral. An inexact single-stage
variant (drops the (T*dt)^2 term) is provided as a comparison baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

from .network import TapChanger

if TYPE_CHECKING:
    from .program import LinearRow, ProgramBuilder

MINIMAL = "minimal"
PAPER_LITERAL = "paper-literal"
TIGHT = "tight"
UNIFORM = "uniform"


class TapEncodingError(ValueError):
    """Raised for invalid bit vectors or underivable big-M values."""


@dataclass(frozen=True)
class LinearizationConfig:
    """Knobs for the tap encoding.

    big_m_mode: ``tight`` derives per-transformer constants from the voltage
    bounds; ``uniform`` uses ``big_m_value`` everywhere (still exact, looser
    continuous relaxation). bit_length_mode: ``minimal`` uses the fewest bits
    that reach K, ``paper-literal`` one more (both encode exactly {0..K}).
    """

    big_m_mode: str = TIGHT
    big_m_value: Optional[float] = None
    bit_length_mode: str = MINIMAL

    def __post_init__(self):
        if self.big_m_mode not in (TIGHT, UNIFORM):
            raise ValueError(f"unknown big_m_mode {self.big_m_mode!r}")
        if self.big_m_mode == UNIFORM:
            if self.big_m_value is None or self.big_m_value <= 0:
                raise ValueError("uniform big-M mode needs a positive big_m_value")
        if self.bit_length_mode not in (MINIMAL, PAPER_LITERAL):
            raise ValueError(f"unknown bit_length_mode {self.bit_length_mode!r}")


@dataclass(frozen=True)
class TapEncoding:
    """Variable handles and constants of one transformer's encoding."""

    transformer: str
    t_min: float
    t_max: float
    k_taps: int
    delta_t: float
    n_bits: int
    bit_vars: tuple[int, ...]
    x_vars: tuple[int, ...]
    u_var: int
    ujt_var: int
    big_m_x: float
    big_m_y: float
    m_var: Optional[int] = None
    y_vars: tuple[int, ...] = ()
    exact: bool = True

    @property
    def bit_names(self) -> tuple[str, ...]:
        return tuple(f"lam[{self.transformer},{n}]" for n in range(self.n_bits))


def bit_length(k_taps: int, mode: str = MINIMAL) -> int:
    """Number of binary digits used to span tap positions {0, ..., k_taps}.

    ``minimal`` returns the smallest b with 2^b - 1 >= k_taps; together with
    the cap sum(2^n lam_n) <= k_taps that encodes exactly {0..K}.
    ``paper-literal`` adds one digit (the sum then runs to N where N is the
    length of K's binary representation).
    """
    if k_taps < 1:
        raise ValueError(f"k_taps must be >= 1, got {k_taps}")
    minimal = k_taps.bit_length()
    if mode == MINIMAL:
        return minimal
    if mode == PAPER_LITERAL:
        return minimal + 1
    raise ValueError(f"unknown bit_length_mode {mode!r}")


def tight_big_m(u_bounds: tuple[float, float], tap: TapChanger) -> tuple[float, float]:
    """Smallest valid big-M pair for the x- and y-product rows.

    With 0 <= U <= u_hi the product x = lam * U never exceeds u_hi, and
    m = t * U never exceeds t_max * u_hi, so these constants cut no feasible
    point while keeping the relaxation as tight as the bounds allow.
    """
    u_lo, u_hi = u_bounds
    if not (u_hi > 0) or u_hi != u_hi or u_hi == float("inf"):
        raise TapEncodingError(
            f"cannot derive big-M from voltage upper bound {u_hi!r}"
        )
    return u_hi, tap.t_max * u_hi


def decode_tap(encoding: TapEncoding, bit_values: Sequence[int]) -> tuple[int, float]:
    """Tap position and ratio encoded by a 0/1 bit vector (LSB first)."""
    if len(bit_values) != encoding.n_bits:
        raise TapEncodingError(
            f"expected {encoding.n_bits} bits, got {len(bit_values)}"
        )
    for v in bit_values:
        if v not in (0, 1):
            raise TapEncodingError(f"bit value {v!r} is not binary")
    position = sum(int(v) << n for n, v in enumerate(bit_values))
    if position > encoding.k_taps:
        raise TapEncodingError(
            f"bits encode position {position} above k_taps = {encoding.k_taps}"
        )
    ratio = encoding.t_min + position * encoding.delta_t
    return position, ratio


def canonical_bits(position: int, n_bits: int) -> tuple[int, ...]:
    """Standard binary representation of a tap position, LSB first."""
    if position < 0 or position >= (1 << n_bits):
        raise TapEncodingError(
            f"position {position} not representable in {n_bits} bits"
        )
    return tuple((position >> n) & 1 for n in range(n_bits))


def _big_m_pair(tap, u_bounds, config):
    if config.big_m_mode == UNIFORM:
        return config.big_m_value, config.big_m_value
    return tight_big_m(u_bounds, tap)


def _product_rows(pb, key, bits, base_var, prod_vars, big_m, stage):
    """Big-M rows forcing prod_n = lam_n * base for integral lam.

    Emits, per bit: base - prod >= 0; base - prod <= (1 - lam) M;
    prod <= lam M (prod >= 0 is a variable bound).
    """
    for n, (lam, prod) in enumerate(zip(bits, prod_vars)):
        pb.add_ineq({prod: 1.0, base_var: -1.0}, 0.0,
                    tag=("tap-bigm", key, n, f"{stage}_lo"))
        pb.add_ineq({base_var: 1.0, prod: -1.0, lam: big_m}, big_m,
                    tag=("tap-bigm", key, n, f"{stage}_hi"))
        pb.add_ineq({prod: 1.0, lam: -big_m}, 0.0,
                    tag=("tap-bigm", key, n, f"{stage}_cap"))


def encode_tap(
    tap: TapChanger,
    u_var: int,
    ujt_var: int,
    pb: "ProgramBuilder",
    key: str,
    config: LinearizationConfig = LinearizationConfig(),
) -> TapEncoding:
    """Emit the exact two-stage encoding linking U (child bus) to U_out.

    Creates the bit, product and intermediate-ratio variables on ``pb`` and
    adds the rows; for every integral bit assignment the rows pin U_out to
    (t_min + dt * position)^2 * U exactly. ``u_var``/``ujt_var`` must already
    exist with finite bounds (big-M derivation needs the upper one).
    """
    u_lo, u_hi = pb.bounds(u_var)
    big_m_x, big_m_y = _big_m_pair(tap, (u_lo, u_hi), config)
    n_bits = bit_length(tap.k_taps, config.bit_length_mode)
    dt = tap.delta_t
    t_min = tap.t_min

    bits = tuple(
        pb.add_variable(f"lam[{key},{n}]", 0.0, 1.0, binary=True,
                        meta=("transformer", key, "bit", n))
        for n in range(n_bits)
    )
    x_vars = tuple(
        pb.add_variable(f"x[{key},{n}]", 0.0, big_m_x,
                        meta=("transformer", key, "x", n))
        for n in range(n_bits)
    )
    m_hi = tap.t_max * u_hi
    m_var = pb.add_variable(f"m[{key}]", 0.0, m_hi, meta=("transformer", key, "m"))
    y_vars = tuple(
        pb.add_variable(f"y[{key},{n}]", 0.0, big_m_y,
                        meta=("transformer", key, "y", n))
        for n in range(n_bits)
    )

    # position cap: sum 2^n lam_n <= K
    pb.add_ineq({lam: float(1 << n) for n, lam in enumerate(bits)},
                float(tap.k_taps), tag=("tap-cap", key))
    # first stage: m = t_min U + dt sum 2^n x_n
    row = {m_var: 1.0, u_var: -t_min}
    for n, x in enumerate(x_vars):
        row[x] = -dt * (1 << n)
    pb.add_eq(row, 0.0, tag=("tap-stage1", key))
    _product_rows(pb, key, bits, u_var, x_vars, big_m_x, "x")
    # second stage: U_out = t_min m + dt sum 2^n y_n
    row = {ujt_var: 1.0, m_var: -t_min}
    for n, y in enumerate(y_vars):
        row[y] = -dt * (1 << n)
    pb.add_eq(row, 0.0, tag=("tap-stage2", key))
    _product_rows(pb, key, bits, m_var, y_vars, big_m_y, "y")

    return TapEncoding(
        transformer=key,
        t_min=t_min,
        t_max=tap.t_max,
        k_taps=tap.k_taps,
        delta_t=dt,
        n_bits=n_bits,
        bit_vars=bits,
        x_vars=x_vars,
        u_var=u_var,
        m_var=m_var,
        y_vars=y_vars,
        ujt_var=ujt_var,
        big_m_x=big_m_x,
        big_m_y=big_m_y,
        exact=True,
    )


def ujt_exact(t_min: float, delta_t: float, position: int, u: float) -> float:
    """Squared-ratio voltage relation evaluated directly."""
    t = t_min + position * delta_t
    return t * t * u


def ujt_approximate(t_min: float, delta_t: float, position: int, u: float) -> float:
    """First-order baseline: expands (t_min + T dt)^2 and drops the (T dt)^2 term."""
    return (t_min * t_min + 2.0 * t_min * position * delta_t) * u


def encode_tap_approximate(
    tap: TapChanger,
    u_var: int,
    ujt_var: int,
    pb: "ProgramBuilder",
    key: str,
    config: LinearizationConfig = LinearizationConfig(),
) -> TapEncoding:
    """Single-stage baseline U_out = (t_min^2 + 2 t_min dt T) U.

    Uses the same binary expansion and x-product big-M pattern but skips the
    second product stage, so the encoded U_out understates the exact value by
    exactly (position * dt)^2 * U at interior positions.
    """
    u_lo, u_hi = pb.bounds(u_var)
    big_m_x, _ = _big_m_pair(tap, (u_lo, u_hi), config)
    n_bits = bit_length(tap.k_taps, config.bit_length_mode)
    dt = tap.delta_t
    t_min = tap.t_min

    bits = tuple(
        pb.add_variable(f"lam[{key},{n}]", 0.0, 1.0, binary=True,
                        meta=("transformer", key, "bit", n))
        for n in range(n_bits)
    )
    x_vars = tuple(
        pb.add_variable(f"x[{key},{n}]", 0.0, big_m_x,
                        meta=("transformer", key, "x", n))
        for n in range(n_bits)
    )

    pb.add_ineq({lam: float(1 << n) for n, lam in enumerate(bits)},
                float(tap.k_taps), tag=("tap-cap", key))
    row = {ujt_var: 1.0, u_var: -t_min * t_min}
    for n, x in enumerate(x_vars):
        row[x] = -2.0 * t_min * dt * (1 << n)
    pb.add_eq(row, 0.0, tag=("tap-stage1", key))
    _product_rows(pb, key, bits, u_var, x_vars, big_m_x, "x")

    return TapEncoding(
        transformer=key,
        t_min=t_min,
        t_max=tap.t_max,
        k_taps=tap.k_taps,
        delta_t=dt,
        n_bits=n_bits,
        bit_vars=bits,
        x_vars=x_vars,
        u_var=u_var,
        m_var=None,
        y_vars=(),
        ujt_var=ujt_var,
        big_m_x=big_m_x,
        big_m_y=big_m_x,
        exact=False,
    )
