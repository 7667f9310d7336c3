"""Echo emission, storage-efficiency budgets, decoupling noise, and the
rate-equation execution of the optical-pumping initialization.

The emitted field is taken proportional to the ensemble-mean optical
coherence on the signal transition; absorption and propagation enter only
through the analytic d^2 e^-d prefactor of the efficiency budget, so the
microscopic simulation owns dephasing and transfer physics alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import DecoherenceSpec, EnsembleTrajectory, IonState, LevelRegister, evolve_ensemble
from .levels import FourLevelSystem, LevelScheme
from .sequences import Timeline

# Gaussian FWHM normalization of the dephasing exponents: exp(-G^2 t^2 / GAUSS_NORM)
GAUSS_NORM = 2.0 * math.log(2.0) / math.pi**2


@dataclass
class EchoField:
    """Emitted field around the echo window plus the input response.

    amplitude is the raw ensemble-mean coherence over `times`;
    input_reference is the unit-peak-normalized input-window coherence
    trace.  input_peak holds the stored-excitation reference: the peak
    ensemble mean of |coherence| over the input window, which is the
    largest amplitude a perfect rephasing can recover (the plain mean
    coherence already dephases while the input pulse is still on).
    """

    times: np.ndarray
    amplitude: np.ndarray
    input_times: np.ndarray
    input_reference: np.ndarray
    input_peak: float

    def __post_init__(self):
        if len(self.times) != len(self.amplitude):
            raise ValueError("times and amplitude must have equal length")
        if len(self.input_times) != len(self.input_reference):
            raise ValueError("input grids must have equal length")

    @property
    def peak_time(self) -> float:
        return float(self.times[int(np.argmax(np.abs(self.amplitude)))])

    @property
    def peak_amplitude(self) -> float:
        return float(np.max(np.abs(self.amplitude)))


def echo_probe_times(timeline: Timeline, grid_step: float) -> tuple[np.ndarray, np.ndarray]:
    """Probe grids covering the input window and the readout window."""
    if timeline.readout_window is None or timeline.input_time is None:
        raise ValueError("timeline carries no readout window or input marker")
    start, width = timeline.readout_window
    echo_grid = np.arange(start, start + width + grid_step / 2, grid_step)
    template = timeline.input_pulses[0]
    in_start = template.start_time - template.duration / 2
    in_width = 2.0 * template.duration
    input_grid = np.arange(max(0.0, in_start), in_start + in_width + grid_step / 2, grid_step)
    return input_grid, echo_grid


def default_grid_step(optical_fwhm: float, fallback: float = 1.0e-7) -> float:
    """Grid step resolving the inhomogeneous dephasing time."""
    if optical_fwhm <= 0.0:
        return fallback
    return 1.0 / (10.0 * optical_fwhm)


def emit_echo(
    trajectory: EnsembleTrajectory,
    signal_pair,
    window: tuple[float, float],
    input_window: tuple[float, float],
) -> EchoField:
    """Assemble the emitted field from a recorded trajectory.

    The trajectory is evolved in the common rotating frame, where each
    ion's coherence already carries its resonant phase factor, so the
    phase-matched emitted amplitude is the plain ensemble mean of
    rho[signal_pair] at every probe inside the window.
    """
    times = trajectory.times
    lo, width = window
    sel = (times >= lo - 1e-15) & (times <= lo + width + 1e-15)
    in_lo, in_width = input_window
    sel_in = (times >= in_lo - 1e-15) & (times <= in_lo + in_width + 1e-15)
    if not np.any(sel) or not np.any(sel_in):
        raise ValueError("window not covered by the recorded trajectory")
    series = trajectory.coherence_series(signal_pair)
    amplitude = series[sel]
    input_raw = series[sel_in]
    stored = float(np.max(trajectory.abs_coherence_series(signal_pair)[sel_in]))
    trace_peak = float(np.max(np.abs(input_raw)))
    return EchoField(
        times=times[sel],
        amplitude=amplitude,
        input_times=times[sel_in],
        input_reference=input_raw / (trace_peak if trace_peak > 0 else 1.0),
        input_peak=stored,
    )


def microscopic_efficiency(echo: EchoField) -> float:
    """Squared-coherence recovery ratio (echo peak / stored excitation)^2.

    Dephasing-only: absorption and propagation factors are budgeted
    analytically elsewhere.  Peaks are compared rather than window
    energies because the echo re-dephases symmetrically about its peak
    while the input response only decays forward in time; an energy ratio
    would double-count the echo for broadened ensembles.
    """
    if echo.input_peak == 0.0:
        raise ValueError("degenerate input reference")
    return float((echo.peak_amplitude / echo.input_peak) ** 2)


@dataclass(frozen=True)
class EfficiencyBudget:
    """Factors of the analytic storage-efficiency model."""

    d: float
    eta_control: float
    gamma: float
    gamma34: float
    gamma23bar: float
    t31: float
    t42: float
    heating_penalty: float = 1.0

    def __post_init__(self):
        if self.d < 0.0:
            raise ValueError("absorption depth must be >= 0")
        if not 0.0 <= self.eta_control <= 1.0:
            raise ValueError("eta_control must lie in [0, 1]")
        if not 0.0 < self.heating_penalty <= 1.0:
            raise ValueError("heating_penalty must lie in (0, 1]")


def analytic_efficiency(budget: EfficiencyBudget) -> float:
    """Four-pulse echo efficiency:

        d^2 e^-d * eta_control^4
        * exp(-G34^2 t31^2 / (2 ln2 / pi^2))
        * exp(-G23^2 t42^2 / (2 ln2 / pi^2) - 2 gamma t42)
        * heating_penalty

    Gammas are FWHM inhomogeneous broadenings in Hz, gamma a rate in 1/s.
    """
    b = budget
    absorption = b.d**2 * math.exp(-b.d)
    spin = math.exp(-(b.gamma34**2) * b.t31**2 / GAUSS_NORM)
    excited = math.exp(-(b.gamma23bar**2) * b.t42**2 / GAUSS_NORM - 2.0 * b.gamma * b.t42)
    return absorption * b.eta_control**4 * spin * excited * b.heating_penalty


def dd_noise_rate(
    trajectory_or_state,
    four: FourLevelSystem,
    branching: np.ndarray,
    collection_efficiency: float,
    probe=None,
) -> float:
    """Expected noise photons per trial from residual post-decoupling population.

    Pulse errors of the RF train leave population in the upper ground
    level; the second optical pi pulse promotes it to the signal excited
    level, whose spontaneous emission lands in the detection band with the
    branching weight R(g_low, e_signal).
    """
    if collection_efficiency == 0.0:
        return 0.0
    label = f"e{four.signal_excited}"
    if isinstance(trajectory_or_state, EnsembleTrajectory):
        if probe is None:
            probe = len(trajectory_or_state.times) - 1
        excited_pop = trajectory_or_state.mean_population(probe, label)
    else:
        rho = np.asarray(trajectory_or_state)
        excited_pop = float(rho[..., 2, 2].real.mean())
    g_low = four.ground_pair[0]
    ratio = float(np.asarray(branching)[g_low - 1, four.signal_excited - 1])
    return excited_pop * ratio * collection_efficiency


def run_echo_experiment(
    register: LevelRegister,
    ions: list[IonState],
    timeline: Timeline,
    decoherence: DecoherenceSpec | None = None,
    grid_step: float | None = None,
    optical_fwhm: float = 0.0,
    local_error: float = 1e-8,
    jitter_rng=None,
) -> tuple[EchoField, EnsembleTrajectory]:
    """Evolve the ensemble and assemble the emitted echo field."""
    step = grid_step if grid_step is not None else default_grid_step(optical_fwhm)
    input_grid, echo_grid = echo_probe_times(timeline, step)
    record = np.concatenate([input_grid, echo_grid])
    traj = evolve_ensemble(
        register, ions, timeline, decoherence, record=record, local_error=local_error, jitter_rng=jitter_rng
    )
    template = timeline.input_pulses[0]
    signal_pair = (template.transition[0], template.transition[1])
    field = emit_echo(
        traj,
        signal_pair,
        timeline.readout_window,
        (input_grid[0], input_grid[-1] - input_grid[0]),
    )
    return field, traj


# ---------------------------------------------------------------------------
# rate-equation execution of the initialization sequence
# ---------------------------------------------------------------------------


@dataclass
class SpectralProfile:
    """Ground populations per optical detuning class plus the derived
    absorption spectrum."""

    class_detunings: np.ndarray
    populations: np.ndarray       # (n_classes, 6)
    frequencies: np.ndarray
    absorption: np.ndarray
    converged: bool = True

    def feature_metrics(self, center: float, feature_search: float = 0.75e6) -> dict:
        """FWHM of the absorption feature near `center` and the span of the
        surrounding transparency window.

        The feature is the local peak within +/- feature_search of the
        center; the window is the contiguous region around it where the
        absorption stays below 10% of the out-of-window background (the
        feature's own half-maximum region is not held against it).
        """
        alpha = self.absorption
        nu = self.frequencies
        near = np.abs(nu - center) <= feature_search
        if not np.any(near):
            raise ValueError("view grid does not cover the feature center")
        ipk = int(np.flatnonzero(near)[np.argmax(alpha[near])])
        peak = float(alpha[ipk])
        half = peak / 2.0
        lo = ipk
        while lo > 0 and alpha[lo - 1] >= half:
            lo -= 1
        hi = ipk
        while hi < len(nu) - 1 and alpha[hi + 1] >= half:
            hi += 1
        width = float(nu[hi] - nu[lo])
        far = np.abs(nu - center) > 4.0e6
        background = float(np.median(alpha[far])) if np.any(far) else 1.0
        clear = alpha <= max(0.15 * background, 0.05 * peak)
        skirt = np.abs(nu - nu[ipk]) <= feature_search
        w_lo, w_hi = lo, hi
        while w_lo > 0 and (clear[w_lo - 1] or skirt[w_lo - 1]):
            w_lo -= 1
        while w_hi < len(nu) - 1 and (clear[w_hi + 1] or skirt[w_hi + 1]):
            w_hi += 1
        window_span = float(nu[w_hi] - nu[w_lo])
        return {"feature_width": width, "feature_peak": peak, "window_span": window_span}


def run_initialization_rate_equations(
    scheme: LevelScheme,
    timeline: Timeline,
    class_detunings: np.ndarray | None = None,
    pump_rate: float = 5.0e3,
    view_center: float | None = None,
    view_span: float = 12.0e6,
    view_step: float = 0.05e6,
) -> SpectralProfile:
    """Iterate optical pumping over detuning classes.

    Every class holds one ion subclass with all six transitions shifted by
    its detuning; a pump pulse addresses any transition inside its
    frequency band, depletes the ground level with probability
    1 - exp(-rate * R(g,e) * duration), and redistributes through the
    branching column of the excited level (decay treated as fast against
    the pulse spacing).  Populations start thermal (1/6 each).
    """
    from .levels import transition_frequency

    if class_detunings is None:
        class_detunings = np.arange(-30.0e6, 30.0e6 + 1.0, 0.05e6)
    delta = np.asarray(class_detunings, dtype=float)
    n_class = delta.size
    pops = np.full((n_class, 6), 1.0 / 6.0)
    freq = np.array([[transition_frequency(scheme, g, e) for e in range(1, 7)] for g in range(1, 7)])
    branching = scheme.branching
    shifted = freq[None, :, :] + delta[:, None, None]  # (n_class, g, e)
    pops_before_last = pops
    # the back-pump phase repeats a five-pulse set; convergence compares
    # the populations across its final repetition
    last_rep_start = max(0, len(timeline.pulses) - 5)
    for k, pulse in enumerate(timeline.pulses):
        if pulse.center_frequency is None:
            continue
        if k == last_rep_start:
            pops_before_last = pops.copy()
        lo = pulse.center_frequency - pulse.bandwidth / 2
        hi = pulse.center_frequency + pulse.bandwidth / 2
        in_band = (shifted >= lo) & (shifted <= hi)
        if not np.any(in_band):
            continue
        rates = pump_rate * branching[None, :, :] * in_band
        total_rate = rates.sum(axis=2)                      # (n_class, g)
        depleted = pops * (1.0 - np.exp(-total_rate * pulse.duration))
        safe = np.where(total_rate[:, :, None] > 0, total_rate[:, :, None], 1.0)
        share = np.where(total_rate[:, :, None] > 0, rates / safe, 0.0)
        to_excited = (depleted[:, :, None] * share).sum(axis=1)   # (n_class, e)
        pops = pops - depleted + to_excited @ branching.T
    converged = bool(np.max(np.abs(pops - pops_before_last)) < 1e-5) if timeline.pulses else True
    if view_center is None:
        view_center = transition_frequency(scheme, 3, 3)
    nu = np.arange(view_center - view_span / 2, view_center + view_span / 2 + view_step / 2, view_step)
    absorption = np.zeros_like(nu)
    # narrow-line classes: accumulate strength-weighted population on the
    # view grid, kernel width = class grid resolution
    kernel_sigma = max(view_step, float(np.min(np.diff(delta))) if delta.size > 1 else view_step)
    for g in range(6):
        for e in range(6):
            line = freq[g, e] + delta
            weight = pops[:, g] * branching[g, e]
            near = (line >= nu[0] - 4 * kernel_sigma) & (line <= nu[-1] + 4 * kernel_sigma)
            if not np.any(near):
                continue
            dist = (nu[None, :] - line[near, None]) / kernel_sigma
            absorption += (weight[near, None] * np.exp(-0.5 * dist**2)).sum(axis=0)
    scale = absorption.max()
    if scale > 0:
        absorption = absorption / scale
    return SpectralProfile(
        class_detunings=delta,
        populations=pops,
        frequencies=nu,
        absorption=absorption,
        converged=converged,
    )
