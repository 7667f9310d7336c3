"""Poisson photon-counting simulation and detection-side figures of merit.

Counts are simulated per time bin as Poisson(n_trials * (signal + noise));
fidelities follow the standard counting estimators: basis states via
(S+N)/(S+2N), superpositions via the interference visibility (V+1)/2, and
the weighted total over the four-state set {e, l, e+l, e+il}.

The classical prepare-and-measure benchmark uses the usual post-selection
construction: a cheating memory with efficiency eta answers only on the
highest photon-number fraction of the Poisson input distribution, scoring
(n+1)/(n+2) per accepted n-photon event (vacuum scores 1/2).  Since the
cited benchmark is only quoted numerically in the source material, a
convention check compares the computed bound against the quoted reference
and flags (never hides) a disagreement beyond tolerance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

POISSON_TAIL = 1e-12

QUBIT_STATES = ("e", "l", "e+l", "e+il")


@dataclass
class CountHistogram:
    """Per-time-bin photon counts with trial and window metadata."""

    bin_edges: np.ndarray
    counts: np.ndarray
    n_trials: int
    windows: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.counts = np.asarray(self.counts)
        if len(self.counts) != len(self.bin_edges) - 1:
            raise ValueError("counts length must equal number of bins")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        span = (self.bin_edges[0], self.bin_edges[-1])
        for name, (start, width) in self.windows.items():
            if start < span[0] - 1e-12 or start + width > span[1] + 1e-12:
                raise ValueError(f"window {name!r} lies outside the histogram span")

    def window_counts(self, window) -> int:
        """Total counts inside a named window or a (start, width) pair."""
        start, width = self.windows[window] if isinstance(window, str) else window
        lo = np.searchsorted(self.bin_edges, start + 1e-15, side="left") - 1
        hi = np.searchsorted(self.bin_edges, start + width - 1e-15, side="left") - 1
        lo = max(lo, 0)
        return int(self.counts[lo : hi + 1].sum())


@dataclass(frozen=True)
class QubitRun:
    """Detection-side parameters of one time-bin qubit measurement."""

    input_state: str
    mu_q: float
    efficiency: float
    noise_per_window: float
    n_trials: int

    def __post_init__(self):
        if self.input_state not in QUBIT_STATES:
            raise ValueError(f"input_state must be one of {QUBIT_STATES}")
        if self.mu_q < 0:
            raise ValueError("mu_q must be >= 0")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if self.noise_per_window < 0 or self.n_trials < 1:
            raise ValueError("invalid noise or trial count")


def simulate_counts(
    run: QubitRun,
    signal_probs,
    bin_edges,
    windows: dict | None = None,
    seed: int | None = None,
    noise_reference_width: float | None = None,
) -> CountHistogram:
    """Draw Poisson counts: per bin, Poisson(n_trials * (signal + noise)).

    signal_probs are per-bin detection probabilities per trial.  The noise
    floor run.noise_per_window refers to one detection window; when
    noise_reference_width is given, it is rescaled to each bin's width,
    otherwise every bin counts as one window.  Counter-based seeding makes
    the histogram reproducible.
    """
    probs = np.asarray(signal_probs, dtype=float)
    edges = np.asarray(bin_edges, dtype=float)
    if np.any(probs < 0):
        raise ValueError("signal probabilities must be >= 0")
    if len(probs) != len(edges) - 1:
        raise ValueError("signal_probs length must equal number of bins")
    if noise_reference_width is None:
        noise = np.full_like(probs, run.noise_per_window)
    else:
        noise = run.noise_per_window * np.diff(edges) / noise_reference_width
    rng = np.random.Generator(np.random.Philox(key=0 if seed is None else seed))
    counts = rng.poisson(run.n_trials * (probs + noise))
    return CountHistogram(edges, counts, run.n_trials, windows or {}, seed)


@dataclass
class SnrResult:
    snr: float
    sigma: float
    signal_counts: float
    noise_counts: float
    clamped: bool = False
    zero_noise: bool = False


def snr(hist: CountHistogram, signal_window, noise_reference) -> SnrResult:
    """Noise-subtracted signal over noise inside the detection window.

    noise_reference is the expected noise count in the signal window:
    either a float (Poisson variance assumed) or a (value, sigma) pair
    from an independent no-input run.  Zero noise yields an infinite
    sentinel with the zero_noise flag; a negative subtracted signal is
    clamped to zero and flagged.
    """
    in_window = float(hist.window_counts(signal_window))
    if isinstance(noise_reference, (tuple, list)):
        n_exp, n_sigma = (float(x) for x in noise_reference)
    else:
        n_exp = float(noise_reference)
        n_sigma = math.sqrt(max(n_exp, 0.0))
    if n_exp < 0:
        raise ValueError("noise reference must be >= 0")
    if n_exp == 0.0:
        return SnrResult(math.inf, math.nan, in_window, 0.0, zero_noise=True)
    s = in_window - n_exp
    clamped = s < 0
    if clamped:
        logger.warning("noise-subtracted signal negative (%.3f); clamping to 0", s)
        s = 0.0
    value = s / n_exp
    variance = in_window / n_exp**2 + (in_window / n_exp**2) ** 2 * n_sigma**2
    return SnrResult(value, math.sqrt(variance), s, n_exp, clamped=clamped)


def basis_fidelity(s: float, n: float) -> float:
    """(S+N)/(S+2N): counts in the target bin against the orthogonal bin."""
    if s < 0 or n < 0:
        raise ValueError("counts must be >= 0")
    if s == 0 and n == 0:
        raise ValueError("S and N cannot both be zero")
    if n == 0:
        return 1.0
    return (s + n) / (s + 2 * n)


def visibility_fidelity(c_max: float, c_min: float) -> float:
    """(V+1)/2 with V = (c_max - c_min)/(c_max + c_min)."""
    if c_max + c_min <= 0:
        raise ValueError("total counts must be positive")
    if c_max < c_min:
        raise ValueError("c_max must be >= c_min")
    v = (c_max - c_min) / (c_max + c_min)
    return (v + 1.0) / 2.0


def total_fidelity(f_e: float, f_l: float, f_plus: float, f_plus_i: float) -> float:
    """Weighted four-state average: basis pair 1/3, superposition pair 2/3."""
    for f in (f_e, f_l, f_plus, f_plus_i):
        if not 0.0 <= f <= 1.0:
            raise ValueError("fidelities must lie in [0, 1]")
    return (f_e + f_l) / 6.0 + (f_plus + f_plus_i) / 3.0


def _poisson_pmf(mu: float) -> np.ndarray:
    """Poisson probabilities until the tail mass drops below POISSON_TAIL."""
    if mu < 0:
        raise ValueError("mean photon number must be >= 0")
    probs = [math.exp(-mu)]
    total = probs[0]
    n = 0
    while 1.0 - total > POISSON_TAIL:
        n += 1
        probs.append(probs[-1] * mu / n)
        total += probs[-1]
        if n > 10_000:
            break
    return np.asarray(probs)


def classical_bound(mu_q: float, eta: float) -> float:
    """Best prepare-and-measure fidelity with Poisson inputs and post-selection.

    Photon-number classes are accepted from the largest n downward until
    the acceptance probability reaches eta (the marginal class enters
    fractionally); an accepted n-photon event is scored with the optimal
    qubit-estimation fidelity (n+1)/(n+2), which assigns vacuum the random
    guess 1/2.
    """
    if mu_q <= 0:
        raise ValueError("mu_q must be positive")
    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must lie in (0, 1]")
    pmf = _poisson_pmf(mu_q)
    budget = eta
    score = 0.0
    for n in range(len(pmf) - 1, -1, -1):
        take = min(budget, pmf[n])
        score += take * (n + 1.0) / (n + 2.0)
        budget -= take
        if budget <= 1e-15:
            break
    # residual budget can only remain through floating-point loss; the
    # vacuum class already scores 1/2 via the same formula
    return float(score / eta)


def expected_state_fidelities(mu_q: float, eta: float, noise_per_window: float) -> dict:
    """Expectation-level fidelities per input state.

    Basis states put mu_q * eta counts into the target bin; superposition
    states put half of that into the constructive central bin (each
    half-area readout pulse retrieves half the stored amplitude, and the
    two interfering paths add).  Every window collects the same noise.
    """
    s_basis = mu_q * eta
    s_central = s_basis / 2.0
    n = noise_per_window
    if s_basis == 0 and n == 0:
        raise ValueError("no signal and no noise: fidelities undefined")
    f_basis = basis_fidelity(s_basis, n) if (s_basis or n) else 1.0
    if n == 0:
        f_sup = 1.0
    else:
        f_sup = visibility_fidelity(s_central + n, n)
    return {"e": f_basis, "l": f_basis, "e+l": f_sup, "e+il": f_sup}


def expected_fidelity(mu_q: float, eta: float, noise_per_window: float) -> float:
    """Expected total fidelity from efficiency and the noise floor."""
    f = expected_state_fidelities(mu_q, eta, noise_per_window)
    return total_fidelity(f["e"], f["l"], f["e+l"], f["e+il"])


def crossover_mu(
    eta: float,
    noise_per_window: float,
    mu_min: float = 1e-3,
    mu_max: float = 10.0,
    tol: float = 1e-4,
) -> float:
    """Smallest mean photon number where the expected fidelity meets the
    classical bound, by bisection on their difference."""

    def gap(mu):
        return expected_fidelity(mu, eta, noise_per_window) - classical_bound(mu, eta)

    grid = np.geomspace(mu_min, mu_max, 200)
    values = np.array([gap(m) for m in grid])
    if values[0] > 0:
        # the memory beats the bound from the search floor on (the noiseless
        # limit); the crossover sits below resolution
        return float(mu_min)
    sign_change = np.nonzero(np.diff(np.signbit(values)))[0]
    if sign_change.size == 0:
        raise ValueError("expected fidelity does not cross the classical bound in range")
    lo, hi = grid[sign_change[0]], grid[sign_change[0] + 1]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if np.signbit(gap(mid)) == np.signbit(gap(lo)):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class ConventionCheck:
    """Comparison of a computed figure against its quoted reference."""

    name: str
    computed: float
    reference: float
    tolerance: float

    @property
    def discrepant(self) -> bool:
        return abs(self.computed - self.reference) > self.tolerance

    def log(self) -> "ConventionCheck":
        if self.discrepant:
            logger.warning(
                "%s: computed %.4f differs from the quoted %.4f by more than %.3f "
                "(convention mismatch flagged, not hidden)",
                self.name,
                self.computed,
                self.reference,
                self.tolerance,
            )
        return self


def check_bound_convention(mu_q: float, eta: float, reference: float, tolerance: float = 0.015) -> ConventionCheck:
    """Compare the computed classical bound with the quoted value."""
    return ConventionCheck("classical_bound", classical_bound(mu_q, eta), reference, tolerance).log()


def check_crossover_convention(
    eta: float, noise_per_window: float, reference: float, tolerance: float = 0.05
) -> ConventionCheck:
    """Compare the computed crossover photon number with the quoted value."""
    return ConventionCheck("crossover_mu", crossover_mu(eta, noise_per_window), reference, tolerance).log()
