"""Protocol-level types and statistics for a three-state time-bin scheme.

A transmitted symbol is one of three states: a photon pulse in the early
bin (Z0), in the late bin (Z1), or split across both with a fixed relative
phase (XPlus). Each symbol independently carries one of two mean photon
numbers (signal mu1 or decoy mu2), and an optical global phase drawn
uniformly per symbol so that pulses are phase-randomized between symbols.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


class State(enum.IntEnum):
    """The three transmitted states. Values index lookup tables."""

    Z0 = 0
    Z1 = 1
    XPlus = 2


class Basis(enum.IntEnum):
    Z = 0
    X = 1


class IntensityClass(enum.IntEnum):
    """Signal carries mu1, Decoy carries mu2."""

    Signal = 0
    Decoy = 1


class Bin(enum.IntEnum):
    """Time-bin labels. Transmitted pulses use EARLY/LATE; the receiver
    additionally classifies CENTRAL (interferometer output) and OUTSIDE
    (a click not matching any scheduled bin window)."""

    EARLY = 0
    CENTRAL = 1
    LATE = 2
    OUTSIDE = 3


#: Basis of each state, indexed by State value.
STATE_BASIS: tuple[Basis, Basis, Basis] = (Basis.Z, Basis.Z, Basis.X)

#: Key bit encoded by each Z state; XPlus carries no key bit.
STATE_BIT: tuple[int, int, None] = (0, 1, None)


def state_basis(state: State) -> Basis:
    return STATE_BASIS[int(state)]


def state_bit(state: State) -> int | None:
    return STATE_BIT[int(state)]


@dataclass(frozen=True)
class ProtocolParams:
    """Source-side protocol parameters.

    mu1, mu2          mean photon numbers of the signal and decoy intensities
    p_mu1             probability a symbol uses the signal intensity
    p_z               probability a symbol encodes in the Z basis; the two
                      Z states are equiprobable within the basis
    symbol_period     seconds between symbol slots inside a burst
    symbols_per_burst slots per burst
    burst_period      seconds between burst starts; must leave room for
                      every slot of the burst
    """

    mu1: float = 0.50
    mu2: float = 0.19
    p_mu1: float = 0.63
    p_z: float = 0.90
    symbol_period: float = 200e-9
    symbols_per_burst: int = 20
    burst_period: float = 24e-6

    def __post_init__(self) -> None:
        if not (0.0 < self.mu2 < self.mu1):
            raise DomainError(
                f"need 0 < mu2 < mu1, got mu1={self.mu1}, mu2={self.mu2}"
            )
        for name in ("p_mu1", "p_z"):
            p = getattr(self, name)
            if not (0.0 < p < 1.0):
                raise DomainError(f"{name} must lie strictly in (0, 1), got {p}")
        if self.symbol_period <= 0.0:
            raise DomainError(f"symbol_period must be positive, got {self.symbol_period}")
        if self.symbols_per_burst < 1:
            raise DomainError(
                f"symbols_per_burst must be >= 1, got {self.symbols_per_burst}"
            )
        if self.burst_period < self.symbols_per_burst * self.symbol_period:
            raise DomainError(
                "burst_period shorter than the burst itself: "
                f"{self.burst_period} < {self.symbols_per_burst} x {self.symbol_period}"
            )

    @property
    def p_mu2(self) -> float:
        return 1.0 - self.p_mu1

    def intensity(self, cls: IntensityClass) -> float:
        return self.mu1 if cls == IntensityClass.Signal else self.mu2

    def state_probabilities(self) -> np.ndarray:
        """P(Z0), P(Z1), P(XPlus), indexed by State value."""
        return np.array([self.p_z / 2.0, self.p_z / 2.0, 1.0 - self.p_z])


@dataclass(frozen=True)
class Symbol:
    """One emitted symbol: state, intensity class, global phase, position."""

    state: State
    intensity: IntensityClass
    phase: float
    burst_index: int = 0
    slot_index: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.phase < 2.0 * math.pi):
            raise DomainError(f"phase must lie in [0, 2*pi), got {self.phase}")

    @property
    def basis(self) -> Basis:
        return state_basis(self.state)

    @property
    def bit(self) -> int | None:
        return state_bit(self.state)


def sample_symbol(
    rng: np.random.Generator,
    params: ProtocolParams,
    burst_index: int = 0,
    slot_index: int = 0,
) -> Symbol:
    """Draw one symbol: state, intensity, and global phase are independent."""
    u = rng.random()
    if u < params.p_z / 2.0:
        state = State.Z0
    elif u < params.p_z:
        state = State.Z1
    else:
        state = State.XPlus
    intensity = (
        IntensityClass.Signal if rng.random() < params.p_mu1 else IntensityClass.Decoy
    )
    phase = rng.uniform(0.0, 2.0 * math.pi)
    return Symbol(state, intensity, phase, burst_index, slot_index)


def choose_symbols(
    n: int, params: ProtocolParams, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw n symbols at once: (states as uint8, signal-intensity flags).

    Vectorized counterpart of sample_symbol for the batch engine; phases
    are not drawn because every per-symbol detection probability in the
    model is independent of the global phase.
    """
    if n < 0:
        raise DomainError(f"n must be non-negative, got {n}")
    u = rng.random(n)
    p = params.state_probabilities()
    states = np.full(n, int(State.XPlus), dtype=np.uint8)
    states[u < p[0] + p[1]] = int(State.Z1)
    states[u < p[0]] = int(State.Z0)
    use_mu1 = rng.random(n) < params.p_mu1
    return states, use_mu1


def mean_photons_per_bin(symbol: Symbol, params: ProtocolParams) -> tuple[float, float]:
    """(mu_early, mu_late) for the symbol, summing to the class intensity.

    The XPlus split already includes the 50% balancing loss, keeping the
    photon rate per symbol uniform across states.
    """
    mu = params.intensity(symbol.intensity)
    if symbol.state == State.Z0:
        return (mu, 0.0)
    if symbol.state == State.Z1:
        return (0.0, mu)
    return (mu / 2.0, mu / 2.0)


def tau_n(n: int, params: ProtocolParams) -> float:
    """Probability that a transmitted symbol contains exactly n photons.

    Poisson photon-number statistics averaged over the intensity choice:
    tau_n = sum_k p_k e^{-mu_k} mu_k^n / n!.
    """
    if n < 0:
        raise DomainError(f"photon number must be non-negative, got {n}")
    total = 0.0
    for p_k, mu_k in ((params.p_mu1, params.mu1), (params.p_mu2, params.mu2)):
        total += p_k * math.exp(-mu_k) * mu_k**n / math.factorial(n)
    return total


def binary_entropy(x):
    """Binary entropy h(x) in bits; h(0) = h(1) = 0. Accepts scalars or arrays."""
    arr = np.asarray(x, dtype=float)
    if np.any((arr < 0.0) | (arr > 1.0)):
        raise DomainError("binary_entropy argument must lie in [0, 1]")
    out = np.zeros_like(arr)
    interior = (arr > 0.0) & (arr < 1.0)
    a = arr[interior]
    out[interior] = -a * np.log2(a) - (1.0 - a) * np.log2(1.0 - a)
    if np.isscalar(x) or arr.ndim == 0:
        return float(out)
    return out
