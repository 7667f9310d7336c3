"""Hyperfine level structure of the memory crystal.

Six ground and six excited levels, indexed 1..6 from the bottom of each
manifold.  The branching table R[g][e] holds the relative strength of the
optical line |g>_g <-> |e>_e; rows and columns are doubly stochastic to
within the rounding of the source data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Branching tables are typically quoted at two decimals, so row/column
# sums are only required to close to within this tolerance.
SUM_TOLERANCE = 0.02

N_LEVELS = 6


@dataclass(frozen=True)
class LevelScheme:
    """Level energies (Hz) and optical branching ratios.

    ground_energies and excited_energies are measured from |1>_g and
    |1>_e respectively and must be strictly increasing.  optical_origin
    is the |1>_g <-> |1>_e frequency; leaving it at 0 keeps all optical
    frequencies as rotating-frame offsets.
    """

    ground_energies: tuple[float, ...]
    excited_energies: tuple[float, ...]
    optical_origin: float
    branching: np.ndarray

    def __post_init__(self):
        ground = tuple(float(x) for x in self.ground_energies)
        excited = tuple(float(x) for x in self.excited_energies)
        table = np.asarray(self.branching, dtype=float)
        object.__setattr__(self, "ground_energies", ground)
        object.__setattr__(self, "excited_energies", excited)
        object.__setattr__(self, "branching", table)
        if len(ground) != N_LEVELS or len(excited) != N_LEVELS:
            raise ValueError("expected %d ground and %d excited energies" % (N_LEVELS, N_LEVELS))
        if table.shape != (N_LEVELS, N_LEVELS):
            raise ValueError(f"branching table must be {N_LEVELS}x{N_LEVELS}, got {table.shape}")
        for name, energies in (("ground", ground), ("excited", excited)):
            if not all(b > a for a, b in zip(energies, energies[1:])):
                raise ValueError(f"{name} energies must be strictly increasing")
        if np.any(table < 0.0) or np.any(table > 1.0):
            raise ValueError("branching ratios must lie in [0, 1]")
        row_sums = table.sum(axis=1)
        col_sums = table.sum(axis=0)
        if np.any(np.abs(row_sums - 1.0) > SUM_TOLERANCE):
            bad = int(np.argmax(np.abs(row_sums - 1.0)))
            raise ValueError(f"branching row {bad + 1} sums to {row_sums[bad]:.4f}, expected 1 +/- {SUM_TOLERANCE}")
        if np.any(np.abs(col_sums - 1.0) > SUM_TOLERANCE):
            bad = int(np.argmax(np.abs(col_sums - 1.0)))
            raise ValueError(f"branching column {bad + 1} sums to {col_sums[bad]:.4f}, expected 1 +/- {SUM_TOLERANCE}")
        table.setflags(write=False)

    def ratio(self, g: int, e: int) -> float:
        """Branching ratio R(g, e) with 1-based level indices."""
        _check_index(g)
        _check_index(e)
        return float(self.branching[g - 1, e - 1])

    def ground_splitting(self, g_low: int, g_high: int) -> float:
        """Energy difference (Hz) between two ground levels."""
        _check_index(g_low)
        _check_index(g_high)
        return self.ground_energies[g_high - 1] - self.ground_energies[g_low - 1]


@dataclass(frozen=True)
class FourLevelSystem:
    """The two ground and two excited levels driven by the echo protocol.

    ground_pair is (lower, upper) on the protected spin transition;
    signal_excited carries the input/echo line and auxiliary_excited the
    intermediate optical coherence.
    """

    ground_pair: tuple[int, int]
    signal_excited: int
    auxiliary_excited: int
    spin_frequency: float
    signal_frequency: float
    control_frequencies: tuple[float, float]

    def __post_init__(self):
        g_low, g_high = self.ground_pair
        for idx in (g_low, g_high, self.signal_excited, self.auxiliary_excited):
            _check_index(idx)
        if g_low == g_high:
            raise ValueError("ground pair levels must be distinct")
        if self.signal_excited == self.auxiliary_excited:
            raise ValueError("excited levels must be distinct")

    def labels(self) -> tuple[str, str, str, str]:
        """Register labels in the canonical order (g_low, g_high, e_signal, e_aux)."""
        g_low, g_high = self.ground_pair
        return (f"g{g_low}", f"g{g_high}", f"e{self.signal_excited}", f"e{self.auxiliary_excited}")


def _check_index(idx: int) -> None:
    if not 1 <= idx <= N_LEVELS:
        raise ValueError(f"level index {idx} out of range 1..{N_LEVELS}")


def load_level_scheme(document: dict) -> LevelScheme:
    """Build a validated LevelScheme from a parsed config document.

    Required keys: ground_energies_hz[6], excited_energies_hz[6],
    optical_origin_hz, branching[6][6].
    """
    try:
        ground = document["ground_energies_hz"]
        excited = document["excited_energies_hz"]
        origin = document["optical_origin_hz"]
        table = document["branching"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"level scheme document is missing key: {exc}") from exc
    return LevelScheme(
        ground_energies=tuple(ground),
        excited_energies=tuple(excited),
        optical_origin=float(origin),
        branching=np.asarray(table, dtype=float),
    )


def transition_frequency(scheme: LevelScheme, g: int, e: int) -> float:
    """Optical frequency (Hz) of the |g>_g <-> |e>_e line."""
    _check_index(g)
    _check_index(e)
    return scheme.optical_origin + scheme.excited_energies[e - 1] - scheme.ground_energies[g - 1]


def _select_excited(branching: np.ndarray, g_low: int, g_high: int) -> tuple[int, int]:
    """Pick (signal, auxiliary) excited indices from a branching table.

    The signal line maximizes R(g_low, e).  The auxiliary level maximizes
    R(g_low, e) * (1 - R(g_high, e)) among the remaining candidates: it
    should couple strongly to the lower ground level while its line to the
    upper ground level stays weak, which keeps spontaneous emission from
    the fully populated auxiliary level out of the detection band.  Ties
    break toward the lower index.
    """
    row_low = branching[g_low - 1]
    row_high = branching[g_high - 1]
    signal = int(np.argmax(row_low)) + 1
    scores = row_low * (1.0 - row_high)
    scores = scores.copy()
    scores[signal - 1] = -np.inf
    if np.all(scores[np.isfinite(scores)] <= 0.0):
        raise ValueError("degenerate branching table: all auxiliary-level scores are zero")
    auxiliary = int(np.argmax(scores)) + 1
    return signal, auxiliary


def select_nlpe_levels(scheme: LevelScheme, zefoz_pair: tuple[int, int]) -> FourLevelSystem:
    """Select the four-level subsystem for the noiseless-photon-echo protocol.

    The ground pair is pinned to the protected (ZEFOZ) spin transition;
    the excited levels are chosen from the branching table.
    """
    g_low, g_high = zefoz_pair
    _check_index(g_low)
    _check_index(g_high)
    if g_low == g_high:
        raise ValueError("zefoz pair must contain two distinct levels")
    if g_low > g_high:
        g_low, g_high = g_high, g_low
    signal, auxiliary = _select_excited(scheme.branching, g_low, g_high)
    return FourLevelSystem(
        ground_pair=(g_low, g_high),
        signal_excited=signal,
        auxiliary_excited=auxiliary,
        spin_frequency=scheme.ground_splitting(g_low, g_high),
        signal_frequency=transition_frequency(scheme, g_low, signal),
        control_frequencies=(
            transition_frequency(scheme, g_high, signal),
            transition_frequency(scheme, g_low, auxiliary),
        ),
    )
