"""Event-to-symbol matching, sifted tallies, and QBER estimation.

Counting rules: a Z-basis click on a Z-sent symbol is sifted into n_z
(an error when the bin disagrees with the sent bit); an X-basis
central-bin click on an XPlus-sent symbol is sifted into n_x, and counts
as an error when it falls in a fringe-minimum measurement block.
Cross-basis clicks, out-of-window clicks, X-path side bins, and clicks
inside stabilization windows are discarded, each into its own counter,
so every event is accounted for exactly once.
"""

from __future__ import annotations

import csv
import json
from collections.abc import Collection, Iterable, Sequence
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import DomainError, EmptyTallyError, UnmatchedEventError
from .link import DetectionEvent
from .ppg import BurstSchedule
from .protocol import Basis, Bin, IntensityClass, State, Symbol

TALLY_KEYS = (
    "n_z_mu1",
    "n_z_mu2",
    "m_z_mu1",
    "m_z_mu2",
    "n_x_mu1",
    "n_x_mu2",
    "m_x_mu1",
    "m_x_mu2",
)
EXPORT_KEYS = TALLY_KEYS + ("elapsed_s",)

_ZERO_SENT = ((0, 0), (0, 0), (0, 0))


@dataclass(frozen=True)
class TallyCounts:
    """Sifted counts and errors per basis and intensity.

    n_* are sifted detections, m_* the error subset (for X: clicks in
    fringe-minimum blocks). sent_counts[state][intensity] records what
    was emitted; elapsed_s is source-active protocol time.
    """

    n_z_mu1: int = 0
    n_z_mu2: int = 0
    m_z_mu1: int = 0
    m_z_mu2: int = 0
    n_x_mu1: int = 0
    n_x_mu2: int = 0
    m_x_mu1: int = 0
    m_x_mu2: int = 0
    sent_counts: tuple[tuple[int, int], ...] = _ZERO_SENT
    elapsed_s: float = 0.0

    def __post_init__(self) -> None:
        for n_key, m_key in (
            ("n_z_mu1", "m_z_mu1"),
            ("n_z_mu2", "m_z_mu2"),
            ("n_x_mu1", "m_x_mu1"),
            ("n_x_mu2", "m_x_mu2"),
        ):
            n, m = getattr(self, n_key), getattr(self, m_key)
            if not (0 <= m <= n):
                raise DomainError(f"need 0 <= {m_key} <= {n_key}, got {m} > {n}")
        if len(self.sent_counts) != 3 or any(len(r) != 2 for r in self.sent_counts):
            raise DomainError("sent_counts must be 3 states x 2 intensities")
        if any(v < 0 for row in self.sent_counts for v in row):
            raise DomainError("sent_counts must be non-negative")
        if self.elapsed_s < 0.0:
            raise DomainError(f"elapsed_s must be >= 0, got {self.elapsed_s}")

    @property
    def n_z(self) -> int:
        return self.n_z_mu1 + self.n_z_mu2

    @property
    def m_z(self) -> int:
        return self.m_z_mu1 + self.m_z_mu2

    @property
    def n_x(self) -> int:
        return self.n_x_mu1 + self.n_x_mu2

    @property
    def m_x(self) -> int:
        return self.m_x_mu1 + self.m_x_mu2

    @property
    def fringe_min_counts(self) -> int:
        return self.m_x

    @property
    def fringe_max_counts(self) -> int:
        return self.n_x - self.m_x

    @property
    def symbols_sent(self) -> int:
        return sum(v for row in self.sent_counts for v in row)

    def __add__(self, other: "TallyCounts") -> "TallyCounts":
        if not isinstance(other, TallyCounts):
            return NotImplemented
        sent = tuple(
            tuple(a + b for a, b in zip(ra, rb))
            for ra, rb in zip(self.sent_counts, other.sent_counts)
        )
        kwargs = {k: getattr(self, k) + getattr(other, k) for k in TALLY_KEYS}
        return TallyCounts(
            sent_counts=sent,
            elapsed_s=self.elapsed_s + other.elapsed_s,
            **kwargs,
        )

    def with_elapsed(self, elapsed_s: float) -> "TallyCounts":
        return replace(self, elapsed_s=elapsed_s)

    def to_export_dict(self) -> dict[str, float]:
        out: dict[str, float] = {k: getattr(self, k) for k in TALLY_KEYS}
        out["elapsed_s"] = self.elapsed_s
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_export_dict(), indent=2, sort_keys=False)

    @classmethod
    def from_export_dict(cls, d: dict[str, float]) -> "TallyCounts":
        missing = [k for k in EXPORT_KEYS if k not in d]
        if missing:
            raise DomainError(f"tally record is missing keys: {missing}")
        kwargs = {k: int(d[k]) for k in TALLY_KEYS}
        return cls(elapsed_s=float(d["elapsed_s"]), **kwargs)


def write_tally_csv(path: str | Path, tallies: Iterable[TallyCounts]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=EXPORT_KEYS)
        writer.writeheader()
        for t in tallies:
            writer.writerow(t.to_export_dict())


def read_tally_csv(path: str | Path) -> list[TallyCounts]:
    with open(path, newline="") as fh:
        return [TallyCounts.from_export_dict(row) for row in csv.DictReader(fh)]


@dataclass(frozen=True)
class SiftResult:
    """Tallies plus the discard ledger; sifting loses no events."""

    tallies: TallyCounts
    discarded_cross_basis: int = 0
    discarded_outside: int = 0
    discarded_sideband: int = 0
    discarded_stabilization: int = 0

    @property
    def total_events(self) -> int:
        t = self.tallies
        return (
            t.n_z
            + t.n_x
            + self.discarded_cross_basis
            + self.discarded_outside
            + self.discarded_sideband
            + self.discarded_stabilization
        )


def sift(
    events: Sequence[DetectionEvent],
    sent: Sequence[Symbol],
    schedule: BurstSchedule | None = None,
    fringe_block_bursts: int | None = None,
    excluded_bursts: Collection[int] = (),
) -> SiftResult:
    """Match events to sent symbols and tally them.

    fringe_block_bursts sets the alternating fringe-parity block length
    (odd blocks are the fringe-minimum probe); without it all X counts
    land in the maximum block and m_x stays 0. excluded_bursts marks
    stabilization windows. elapsed_s is derived from the schedule's
    symbol period when a schedule is given.
    """
    by_slot: dict[tuple[int, int], Symbol] = {}
    counts = dict.fromkeys(TALLY_KEYS, 0)
    sent_counts = [[0, 0], [0, 0], [0, 0]]
    for sym in sent:
        key = (sym.burst_index, sym.slot_index)
        if key in by_slot:
            raise DomainError(f"duplicate sent record for burst/slot {key}")
        by_slot[key] = sym
        sent_counts[int(sym.state)][int(sym.intensity)] += 1

    excluded = set(excluded_bursts)
    cross = outside = sideband = stab = 0
    for ev in events:
        if ev.burst_index in excluded:
            stab += 1
            continue
        key = (ev.burst_index, ev.slot_index)
        sym = by_slot.get(key)
        if sym is None:
            raise UnmatchedEventError(f"no sent record for burst/slot {key}")
        if ev.bin == Bin.OUTSIDE:
            outside += 1
            continue
        suffix = "mu1" if sym.intensity == IntensityClass.Signal else "mu2"
        if sym.basis == Basis.Z and ev.basis == Basis.Z:
            counts[f"n_z_{suffix}"] += 1
            correct = Bin.EARLY if sym.state == State.Z0 else Bin.LATE
            if ev.bin != correct:
                counts[f"m_z_{suffix}"] += 1
        elif sym.state == State.XPlus and ev.basis == Basis.X:
            if ev.bin != Bin.CENTRAL:
                sideband += 1
                continue
            counts[f"n_x_{suffix}"] += 1
            if fringe_block_bursts is not None:
                if (ev.burst_index // fringe_block_bursts) % 2 == 1:
                    counts[f"m_x_{suffix}"] += 1
        else:
            cross += 1

    elapsed = 0.0
    if schedule is not None:
        elapsed = len(sent) * schedule.plan.symbol_period
    tallies = TallyCounts(
        sent_counts=tuple(tuple(r) for r in sent_counts),
        elapsed_s=elapsed,
        **counts,
    )
    return SiftResult(
        tallies=tallies,
        discarded_cross_basis=cross,
        discarded_outside=outside,
        discarded_sideband=sideband,
        discarded_stabilization=stab,
    )


def qber_z(t: TallyCounts, intensity: IntensityClass | None = None) -> float:
    """Z-basis error rate, overall or for one intensity class."""
    if intensity is None:
        n, m = t.n_z, t.m_z
    elif intensity == IntensityClass.Signal:
        n, m = t.n_z_mu1, t.m_z_mu1
    else:
        n, m = t.n_z_mu2, t.m_z_mu2
    if n <= 0:
        raise EmptyTallyError("no sifted Z detections")
    return m / n


def qber_x(fringe_max_counts: int, fringe_min_counts: int) -> float:
    """X-basis error rate from the fringe extremes:
    Q_X = min / (min + max), i.e. (1 - V_eff)/2 for an ideal fringe."""
    if fringe_max_counts < 0 or fringe_min_counts < 0:
        raise DomainError("fringe counts must be non-negative")
    if fringe_max_counts == 0:
        raise EmptyTallyError("no fringe-maximum counts")
    return fringe_min_counts / (fringe_min_counts + fringe_max_counts)


def qber_x_of(t: TallyCounts) -> float:
    return qber_x(t.fringe_max_counts, t.fringe_min_counts)
