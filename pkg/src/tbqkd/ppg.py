"""Bit-exact pulse-pattern generation.

A symbol is encoded as an 8-bit serial word (index 0 transmitted first)
whose set bits mark the occupied time bins. The serializer shifts words
out at twice the synthesizer output frequency, so each bit lasts
1/(2*f_out). All timeline arithmetic is carried in integer picoseconds;
schedules spanning 1e8+ slots stay exact.
"""

from __future__ import annotations

import itertools
from collections.abc import Iterator
from dataclasses import dataclass, field

from .errors import (
    EncodingOverflowError,
    InvalidWordError,
    ScheduleViolationError,
)
from .protocol import Bin, State

WORD_BITS = 8

#: Serializer words for the canonical framing (shift=0, gap_bits=1),
#: indexed by State value: 10000000, 00100000, 10100000.
CANONICAL_WORDS = (0b10000000, 0b00100000, 0b10100000)


def _bit_positions(state: State, shift: int, gap_bits: int) -> tuple[int, ...]:
    early = shift
    late = shift + gap_bits + 1
    if state == State.Z0:
        return (early,)
    if state == State.Z1:
        return (late,)
    return (early, late)


def encode_state(state: State, shift: int = 0, gap_bits: int = 1) -> int:
    """8-bit serial word for a state; set bits count from the MSB so the
    integer's binary literal reads in transmission order.

    shift moves the whole pattern right; gap_bits is the number of empty
    bit slots between the early and late positions (>= 1, so the two
    optical bins never touch).
    """
    if shift < 0:
        raise EncodingOverflowError(f"shift must be non-negative, got {shift}")
    if gap_bits < 1:
        raise EncodingOverflowError(f"gap_bits must be >= 1, got {gap_bits}")
    word = 0
    for pos in _bit_positions(State(state), shift, gap_bits):
        if pos >= WORD_BITS:
            raise EncodingOverflowError(
                f"state {State(state).name} with shift={shift}, gap_bits={gap_bits} "
                f"needs bit {pos}, outside the {WORD_BITS}-bit word"
            )
        word |= 1 << (WORD_BITS - 1 - pos)
    return word


def decode_word(word: int, shift: int = 0, gap_bits: int = 1) -> tuple[State, int, int]:
    """Inverse of encode_state under a known framing (shift, gap_bits).

    The framing must be supplied because a single set bit is ambiguous on
    its own: the early position of one shift is the late position of
    another. Returns (state, shift, gap_bits) so the round trip echoes
    its inputs.
    """
    if not (0 <= word < (1 << WORD_BITS)):
        raise InvalidWordError(f"word {word!r} is not an {WORD_BITS}-bit value")
    if shift < 0 or gap_bits < 1:
        raise InvalidWordError(
            f"invalid framing: shift={shift}, gap_bits={gap_bits}"
        )
    positions = tuple(
        pos for pos in range(WORD_BITS) if word >> (WORD_BITS - 1 - pos) & 1
    )
    if not 1 <= len(positions) <= 2:
        raise InvalidWordError(
            f"word {word:08b} has {len(positions)} set bits; a symbol word has 1 or 2"
        )
    early = shift
    late = shift + gap_bits + 1
    if positions == (early, late):
        return (State.XPlus, shift, gap_bits)
    if positions == (early,):
        return (State.Z0, shift, gap_bits)
    if positions == (late,):
        return (State.Z1, shift, gap_bits)
    raise InvalidWordError(
        f"word {word:08b} does not match framing shift={shift}, gap_bits={gap_bits}"
    )


@dataclass(frozen=True)
class ClockConfig:
    """Serializer clocking: reference input f_ref, synthesized f_out, and
    the serial bit rate at twice f_out."""

    f_ref: float = 100e6
    f_out: float = 800e6

    def __post_init__(self) -> None:
        if not (10e6 <= self.f_ref <= 100e6):
            raise ScheduleViolationError(
                f"f_ref must lie in [10 MHz, 100 MHz], got {self.f_ref}"
            )
        if not (400e6 <= self.f_out <= 800e6):
            raise ScheduleViolationError(
                f"f_out must lie in [400 MHz, 800 MHz], got {self.f_out}"
            )

    @property
    def bit_rate(self) -> float:
        return 2.0 * self.f_out

    @property
    def bit_duration(self) -> float:
        return 1.0 / self.bit_rate

    @property
    def bit_duration_ps(self) -> int:
        """Bit duration rounded to the picosecond grid (625 ps at 800 MHz,
        731 ps at 684 MHz)."""
        return max(1, round(1e12 / self.bit_rate))


@dataclass(frozen=True)
class Pulse:
    """One rectangular optical pulse on the integer-picosecond timeline."""

    start_ps: int
    width_ps: int
    bin_label: Bin
    burst_index: int = 0
    slot_index: int = 0

    @property
    def center_ps(self) -> float:
        return self.start_ps + self.width_ps / 2.0


def serialize_word(
    word: int,
    clock: ClockConfig,
    t0_ps: int = 0,
    shift: int = 0,
    gap_bits: int = 1,
    burst_index: int = 0,
    slot_index: int = 0,
) -> list[Pulse]:
    """Emit the optical pulses of one serial word starting at t0_ps.

    Bit i occupies [t0 + i*bit, t0 + (i+1)*bit). The word must decode
    under the given framing; pulses are labeled early/late accordingly.
    """
    state, _, _ = decode_word(word, shift, gap_bits)
    bit_ps = clock.bit_duration_ps
    labels = {
        shift: Bin.EARLY,
        shift + gap_bits + 1: Bin.LATE,
    }
    return [
        Pulse(
            start_ps=t0_ps + pos * bit_ps,
            width_ps=bit_ps,
            bin_label=labels[pos],
            burst_index=burst_index,
            slot_index=slot_index,
        )
        for pos in _bit_positions(state, shift, gap_bits)
    ]


@dataclass(frozen=True)
class BurstPlan:
    """Burst structuring of the output: symbols_per_burst slots at
    symbol_period, bursts repeating every burst_period."""

    symbols_per_burst: int = 20
    symbol_period: float = 200e-9
    burst_period: float = 24e-6
    n_bursts: int = 1

    def __post_init__(self) -> None:
        if self.symbols_per_burst < 1:
            raise ScheduleViolationError(
                f"symbols_per_burst must be >= 1, got {self.symbols_per_burst}"
            )
        if self.n_bursts < 0:
            raise ScheduleViolationError(f"n_bursts must be >= 0, got {self.n_bursts}")
        if self.symbol_period <= 0.0 or self.burst_period <= 0.0:
            raise ScheduleViolationError("periods must be positive")
        if self.burst_period < self.symbols_per_burst * self.symbol_period:
            raise ScheduleViolationError(
                "burst_period shorter than the burst itself: "
                f"{self.burst_period} < "
                f"{self.symbols_per_burst} x {self.symbol_period}"
            )

    @property
    def symbol_period_ps(self) -> int:
        return round(self.symbol_period * 1e12)

    @property
    def burst_period_ps(self) -> int:
        return round(self.burst_period * 1e12)

    @property
    def total_symbols(self) -> int:
        return self.n_bursts * self.symbols_per_burst


@dataclass(frozen=True)
class BurstSchedule:
    """Validated slot timing. Slot (b, s) starts at
    b*burst_period + s*symbol_period on the picosecond grid."""

    plan: BurstPlan
    clock: ClockConfig
    dead_time_ps: int
    dead_time_safe: bool
    packed: bool = False
    word_bits_per_symbol: int = WORD_BITS
    _gap_ps: int = field(default=0)

    @property
    def gap_ps(self) -> int:
        return self._gap_ps

    def slot_start_ps(self, burst_index: int, slot_index: int) -> int:
        return (
            burst_index * self.plan.burst_period_ps
            + slot_index * self.plan.symbol_period_ps
        )

    def iter_slots(self) -> Iterator[tuple[int, int, int]]:
        """Lazily yield (burst_index, slot_index, start_ps) in time order."""
        for b in range(self.plan.n_bursts):
            base = b * self.plan.burst_period_ps
            for s in range(self.plan.symbols_per_burst):
                yield b, s, base + s * self.plan.symbol_period_ps


def plan_bursts(
    plan: BurstPlan,
    clock: ClockConfig,
    dead_time: float = 20e-6,
    packed: bool = False,
) -> BurstSchedule:
    """Validate a burst plan against the serializer clock and detector
    dead time.

    packed=True uses the two-symbols-per-word mode, halving the per-symbol
    footprint to 4 bits and doubling the maximum slot rate.
    """
    if dead_time < 0.0:
        raise ScheduleViolationError(f"dead_time must be >= 0, got {dead_time}")
    bits_per_symbol = WORD_BITS // 2 if packed else WORD_BITS
    word_ps = bits_per_symbol * clock.bit_duration_ps
    if plan.symbol_period_ps < word_ps:
        raise ScheduleViolationError(
            f"symbol_period {plan.symbol_period_ps} ps is shorter than the "
            f"{bits_per_symbol}-bit word duration {word_ps} ps at "
            f"f_out={clock.f_out:g} Hz"
        )
    gap_ps = plan.burst_period_ps - plan.symbols_per_burst * plan.symbol_period_ps
    dead_time_ps = round(dead_time * 1e12)
    return BurstSchedule(
        plan=plan,
        clock=clock,
        dead_time_ps=dead_time_ps,
        dead_time_safe=gap_ps >= dead_time_ps,
        packed=packed,
        word_bits_per_symbol=bits_per_symbol,
        _gap_ps=gap_ps,
    )


def pattern_timeline(
    states: list[State],
    plan: BurstPlan,
    clock: ClockConfig,
    shift: int = 0,
    gap_bits: int = 1,
) -> Iterator[Pulse]:
    """Pulses for a schedule whose slots cycle through the given states.

    Lazy: the consumer decides how much of the (possibly huge) plan to
    realize.
    """
    if not states:
        raise ScheduleViolationError("pattern needs at least one state")
    cycle = itertools.cycle(states)
    schedule = plan_bursts(plan, clock, dead_time=0.0)
    for b, s, start in schedule.iter_slots():
        word = encode_state(next(cycle), shift, gap_bits)
        yield from serialize_word(
            word, clock, start, shift, gap_bits, burst_index=b, slot_index=s
        )
