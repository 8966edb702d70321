"""Source-parameter grid search driven by the analytic tally oracle."""

from __future__ import annotations

import csv
import dataclasses
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .config import ScenarioConfig
from .errors import EmptyGridError
from .keyrate import KeyRateReport, keyrate
from .protocol import ProtocolParams
from .sift import TALLY_KEYS, TallyCounts
from .slotmodel import ExpectedTallies, analytic_expected_tallies

GRID_CSV_FIELDS = ("mu1", "mu2", "p_mu1", "p_z", "skl")


@dataclass(frozen=True)
class GridSpec:
    """Candidate values per source parameter; the search is the full
    cartesian product, skipping combinations that violate mu2 < mu1."""

    mu1: Sequence[float]
    mu2: Sequence[float]
    p_mu1: Sequence[float]
    p_z: Sequence[float]

    def axes(self) -> tuple[tuple[float, ...], ...]:
        return tuple(tuple(sorted(set(ax))) for ax in
                     (self.mu1, self.mu2, self.p_mu1, self.p_z))


@dataclass(frozen=True)
class GridPoint:
    mu1: float
    mu2: float
    p_mu1: float
    p_z: float
    skl: int

    def row(self) -> dict[str, float | int]:
        return {k: getattr(self, k) for k in GRID_CSV_FIELDS}


@dataclass(frozen=True)
class GridResult:
    best: ProtocolParams
    best_skl: int
    best_report: KeyRateReport
    points: tuple[GridPoint, ...]


def expected_tally_counts(expected: ExpectedTallies) -> TallyCounts:
    """Round real-valued expectations into a TallyCounts (m clamped to n
    so rounding cannot break the m <= n invariant)."""
    vals = {k: round(v) for k, v in expected.means.items()}
    for n_key in ("n_z_mu1", "n_z_mu2", "n_x_mu1", "n_x_mu2"):
        m_key = "m" + n_key[1:]
        vals[m_key] = min(vals[m_key], vals[n_key])
    assert set(vals) == set(TALLY_KEYS)
    return TallyCounts(elapsed_s=expected.elapsed_s, **vals)


def expected_keyrate(scenario: ScenarioConfig) -> KeyRateReport:
    """Key analysis applied to the analytic expected tallies."""
    expected = analytic_expected_tallies(scenario)
    return keyrate(
        expected_tally_counts(expected),
        scenario.params,
        scenario.security,
        symbols_sent=expected.symbols_sent,
    )


def optimize_params(scenario: ScenarioConfig, grid: GridSpec) -> GridResult:
    """Exhaustive search over (mu1, mu2, p_mu1, p_z) maximizing the
    expected secret key length on the scenario's channel and detector.

    Deterministic: axes are sorted, ties keep the lexicographically
    smallest parameter tuple. Raises EmptyGridError when no combination
    is a valid parameter set.
    """
    points: list[GridPoint] = []
    best: tuple[ProtocolParams, KeyRateReport] | None = None
    for mu1, mu2, p_mu1, p_z in itertools.product(*grid.axes()):
        if not (0.0 < mu2 < mu1) or not (0.0 < p_mu1 < 1.0) or not (0.0 < p_z < 1.0):
            continue
        params = dataclasses.replace(
            scenario.params, mu1=mu1, mu2=mu2, p_mu1=p_mu1, p_z=p_z
        )
        report = expected_keyrate(scenario.replace(params=params))
        points.append(GridPoint(mu1, mu2, p_mu1, p_z, report.skl))
        if best is None or report.skl > best[1].skl:
            best = (params, report)
    if best is None:
        raise EmptyGridError("grid contains no valid parameter combination")
    return GridResult(
        best=best[0],
        best_skl=best[1].skl,
        best_report=best[1],
        points=tuple(points),
    )


def write_grid_csv(points: Iterable[GridPoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=GRID_CSV_FIELDS)
        writer.writeheader()
        for p in points:
            writer.writerow(p.row())
