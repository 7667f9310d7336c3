"""Drive-waveform synthesis and analytic adiabatic-passage properties.

The workhorse is the complex hyperbolic-secant (CHS) pulse

    amplitude(t) = Omega_0 * sech(beta t),
    phase(t)     = -mu * ln(sech(beta t)) + phi_0,      t in [-T/2, T/2],

whose instantaneous detuning -d(phase)/dt = -mu*beta*tanh(beta t) sweeps
symmetrically through resonance.  Under adiabatic conditions such a sweep
acts as a pi rotation about an equatorial axis whose phase follows from
the accumulated dressed-state splitting and the boundary phase values.
All waveforms are rotating-frame complex envelopes (carrier = 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad

TWO_PI = 2.0 * math.pi

PULSE_SHAPES = (
    "chs",
    "rectangular",
    "chirped_rectangular",
    "truncated_gaussian",
    "half_pi_pair_member",
    "ideal",
)


@dataclass(frozen=True)
class ChsParams:
    """Parameters of one complex hyperbolic-secant pulse.

    omega0: peak Rabi frequency (rad/s); beta: envelope rate (1/s);
    mu_chirp: dimensionless chirp strength; phi0: constant phase (rad);
    duration: total support T (s); carrier: offset frequency (rad/s, 0 in
    the rotating frame).
    """

    omega0: float
    beta: float
    mu_chirp: float
    phi0: float
    duration: float
    carrier: float = 0.0

    def __post_init__(self):
        # zero amplitude is admitted as the identity-pulse limit
        if self.omega0 < 0.0:
            raise ValueError("omega0 must be non-negative")
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")
        if self.mu_chirp < 0.0:
            raise ValueError("mu_chirp must be non-negative")

    @property
    def sweep_bandwidth(self) -> float:
        """Total instantaneous-frequency sweep in Hz (= mu*beta/pi)."""
        return self.mu_chirp * self.beta / math.pi


def chs_envelope(p: ChsParams, t):
    """Amplitude envelope Omega_0 sech(beta t); zero outside the support."""
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) <= p.duration / 2
    return np.where(inside, p.omega0 / np.cosh(p.beta * t), 0.0)


def chs_phase(p: ChsParams, t):
    """Dynamic phase -mu ln(sech(beta t)) + phi0 (even about the center)."""
    t = np.asarray(t, dtype=float)
    return p.mu_chirp * np.log(np.cosh(p.beta * t)) + p.phi0


def chs_waveform(p: ChsParams, t):
    """Complex rotating-frame amplitude envelope * exp(i phase).

    Times outside [-T/2, T/2] return exactly zero (the pulse support is
    truncated there), not an error.
    """
    return chs_envelope(p, t) * np.exp(1j * chs_phase(p, t))


def instantaneous_detuning(p: ChsParams, t):
    """Instantaneous detuning -d(phase)/dt = -mu*beta*tanh(beta t) (rad/s)."""
    t = np.asarray(t, dtype=float)
    return -p.mu_chirp * p.beta * np.tanh(p.beta * t)


def arp_axis_phase(envelope, detuning, phase_endpoints: tuple[float, float], duration: float) -> float:
    """Equatorial rotation-axis phase of an adiabatic rapid passage.

        pi/2 - (1/2) Int sqrt(Omega^2 + Delta^2) dt
             + (1/2) [phase(-T/2) + phase(T/2)]

    evaluated by adaptive quadrature (relative tolerance 1e-9) and reduced
    mod 2 pi.  envelope and detuning are callables of time on [-T/2, T/2].
    """
    half = duration / 2

    def integrand(t):
        return math.hypot(envelope(t), detuning(t))

    probe = integrand(0.0) + integrand(half / 2) + integrand(-half / 2)
    if not math.isfinite(probe):
        raise ValueError("non-finite pulse amplitude or detuning")
    area, _ = quad(integrand, -half, half, epsrel=1e-9, limit=500)
    if not math.isfinite(area):
        raise ValueError("dressed-splitting integral did not converge")
    value = math.pi / 2 - 0.5 * area + 0.5 * (phase_endpoints[0] + phase_endpoints[1])
    return value % TWO_PI


def chs_axis_phase(p: ChsParams) -> float:
    """Rotation-axis phase of a CHS pulse.

    Specializes the adiabatic-passage axis phase to the sech envelope and
    tanh detuning; the boundary term reduces to
    -mu ln(sech(beta T/2)) + phi0 because the dynamic phase is even.
    Shifting phi0 shifts the result by exactly the same amount.
    """
    boundary = p.mu_chirp * math.log(math.cosh(p.beta * p.duration / 2)) + p.phi0
    return arp_axis_phase(
        lambda t: p.omega0 / math.cosh(p.beta * t),
        lambda t: p.mu_chirp * p.beta * math.tanh(p.beta * t),
        (boundary, boundary),
        p.duration,
    )


def adiabaticity_margin(p: ChsParams, n_grid: int = 10_000) -> float:
    """min over t of (Omega^2 + Delta^2)^(3/2) / |dOmega/dt * Delta - Omega * dDelta/dt|.

    Larger is more adiabatic; returns inf when the error term vanishes
    identically (constant envelope and detuning).
    """
    t = np.linspace(-p.duration / 2, p.duration / 2, n_grid)
    omega = p.omega0 / np.cosh(p.beta * t)
    delta = -p.mu_chirp * p.beta * np.tanh(p.beta * t)
    d_omega = -p.omega0 * p.beta * np.tanh(p.beta * t) / np.cosh(p.beta * t)
    d_delta = -p.mu_chirp * p.beta**2 / np.cosh(p.beta * t) ** 2
    err = np.abs(d_omega * delta - omega * d_delta)
    if np.all(err == 0.0):
        return math.inf
    with np.errstate(divide="ignore"):
        ratio = (omega**2 + delta**2) ** 1.5 / err
    return float(np.min(ratio[np.isfinite(ratio)]))


def bandwidth_to_params(
    bandwidth: float,
    duration: float,
    truncation_sech_level: float = 0.01,
    *,
    omega0: float,
    phi0: float = 0.0,
) -> ChsParams:
    """CHS parameters for a stated chirp bandwidth.

    Convention: the total instantaneous-frequency sweep equals `bandwidth`
    in Hz, i.e. mu*beta = pi*bandwidth.  beta follows from the envelope
    truncation sech(beta T/2) = truncation_sech_level.  omega0 is not
    derivable from the bandwidth and must be supplied by the caller.
    """
    if bandwidth <= 0.0:
        raise ValueError("bandwidth must be positive")
    if duration <= 0.0:
        raise ValueError("duration must be positive")
    if not 0.0 < truncation_sech_level < 1.0:
        raise ValueError("truncation level must lie in (0, 1)")
    beta = 2.0 * math.acosh(1.0 / truncation_sech_level) / duration
    if beta * duration <= 0.0:
        raise ValueError("inconsistent parameters: beta * duration <= 0")
    mu = math.pi * bandwidth / beta
    return ChsParams(omega0=omega0, beta=beta, mu_chirp=mu, phi0=phi0, duration=duration)


def sech_area(omega0: float, beta: float, duration: float) -> float:
    """On-resonance area of a truncated sech envelope."""
    return omega0 * (2.0 / beta) * math.atan(math.sinh(beta * duration / 2))


def gaussian_peak_for_area(area: float, fwhm: float, duration: float) -> float:
    """Peak Rabi frequency giving the requested on-resonance area for a
    truncated Gaussian envelope."""
    a = 4.0 * math.log(2.0) / fwhm**2
    integral, _ = quad(lambda t: math.exp(-a * t * t), -duration / 2, duration / 2, epsrel=1e-12)
    return area / integral


@dataclass(frozen=True)
class PulseSpec:
    """One timed drive pulse.

    start_time is the beginning of the pulse support; the timing formulas
    of the sequence builders work with pulse centers (see `center`).
    transition names two level labels, lower first ("g3", "e2", ...), and
    manifold tags the driven transition as optical or spin.  Shape-specific
    fields: `chs` for chirped sech pulses, (omega0, phi0) for rectangular,
    fwhm for truncated Gaussians, bandwidth for chirped rectangular pump
    pulses, nominal_area for ideal/gaussian shapes.  center_frequency is
    only used by the rate-equation pumping path, which addresses pulses by
    absolute frequency rather than by transition.
    """

    shape: str
    start_time: float
    duration: float
    transition: tuple[str, str]
    manifold: str
    nominal_area: float = math.pi
    chs: ChsParams | None = None
    omega0: float = 0.0
    phi0: float = 0.0
    fwhm: float = 0.0
    bandwidth: float = 0.0
    center_frequency: float | None = None

    def __post_init__(self):
        if self.shape not in PULSE_SHAPES:
            raise ValueError(f"unknown pulse shape {self.shape!r}")
        if self.shape != "ideal" and self.duration <= 0.0:
            raise ValueError("duration must be positive for shaped pulses")
        if self.shape == "ideal" and self.duration != 0.0:
            raise ValueError("ideal pulses act instantaneously (duration 0)")
        if self.shape == "truncated_gaussian" and not self.fwhm < self.duration:
            raise ValueError("truncated Gaussian requires FWHM < duration")
        if self.shape == "chs":
            if self.chs is None:
                raise ValueError("chs pulses need ChsParams")
            if abs(self.chs.duration - self.duration) > 1e-15 + 1e-9 * self.duration:
                raise ValueError("ChsParams duration disagrees with pulse duration")
        if self.manifold not in ("optical", "spin"):
            raise ValueError("manifold must be 'optical' or 'spin'")

    @property
    def center(self) -> float:
        return self.start_time + self.duration / 2

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration

    def at_center(self, center: float) -> "PulseSpec":
        """Copy of this pulse recentered at the given time."""
        return replace(self, start_time=center - self.duration / 2)

    def with_phase(self, phi0: float) -> "PulseSpec":
        """Copy with the constant phase replaced."""
        if self.chs is not None:
            return replace(self, phi0=phi0, chs=replace(self.chs, phi0=phi0))
        return replace(self, phi0=phi0)

    def scaled_amplitude(self, factor: float) -> "PulseSpec":
        """Copy with the drive amplitude scaled (models amplitude error)."""
        if self.chs is not None:
            return replace(self, chs=replace(self.chs, omega0=self.chs.omega0 * factor))
        return replace(self, omega0=self.omega0 * factor, nominal_area=self.nominal_area * factor)


def envelope_and_phase(spec: PulseSpec, t):
    """Sample (envelope rad/s, phase rad, d(phase)/dt rad/s) at absolute times.

    Used by the propagator; `t` must lie within the pulse support.
    """
    tau = np.asarray(t, dtype=float) - spec.center
    zero = np.zeros_like(tau)
    if spec.shape == "chs":
        p = spec.chs
        env = p.omega0 / np.cosh(p.beta * tau)
        phase = p.mu_chirp * np.log(np.cosh(p.beta * tau)) + p.phi0
        rate = p.mu_chirp * p.beta * np.tanh(p.beta * tau)
        return env, phase, rate
    if spec.shape == "rectangular":
        return np.full_like(tau, spec.omega0), zero + spec.phi0, zero
    if spec.shape == "chirped_rectangular":
        # linear sweep of `bandwidth` Hz across the support
        rate = TWO_PI * spec.bandwidth * tau / spec.duration
        phase = math.pi * spec.bandwidth * tau**2 / spec.duration + spec.phi0
        return np.full_like(tau, spec.omega0), phase, rate
    if spec.shape == "truncated_gaussian":
        peak = spec.omega0 if spec.omega0 > 0 else gaussian_peak_for_area(spec.nominal_area, spec.fwhm, spec.duration)
        env = peak * np.exp(-4.0 * math.log(2.0) * tau**2 / spec.fwhm**2)
        return env, zero + spec.phi0, zero
    if spec.shape == "half_pi_pair_member":
        # unchirped sech envelope with resonant area nominal_area
        beta = 2.0 * math.acosh(100.0) / spec.duration if spec.chs is None else spec.chs.beta
        omega0 = spec.nominal_area / ((2.0 / beta) * math.atan(math.sinh(beta * spec.duration / 2)))
        env = omega0 / np.cosh(beta * tau)
        return env, zero + spec.phi0, zero
    raise ValueError(f"shape {spec.shape!r} has no sampled waveform")


def make_chs_pulse(
    transition: tuple[str, str],
    manifold: str,
    duration: float,
    bandwidth: float,
    omega0: float,
    phi0: float = 0.0,
    truncation: float = 0.01,
    start_time: float = 0.0,
    chirp_span: float | None = None,
) -> PulseSpec:
    """Convenience constructor for a CHS pi pulse on a named transition.

    bandwidth is the band the pulse must invert uniformly; chirp_span is
    the swept frequency range and defaults to the bandwidth.  Inversion at
    the band edges requires the sweep to overshoot the band (the sech/tanh
    transition probability falls to 1/2 when the detuning reaches the
    sweep edge), so pi presets normally carry chirp_span > bandwidth.
    """
    params = bandwidth_to_params(chirp_span or bandwidth, duration, truncation, omega0=omega0, phi0=phi0)
    return PulseSpec(
        shape="chs",
        start_time=start_time,
        duration=duration,
        transition=transition,
        manifold=manifold,
        nominal_area=math.pi,
        chs=params,
        phi0=phi0,
        bandwidth=bandwidth,
    )


def make_ideal_pulse(
    transition: tuple[str, str],
    manifold: str,
    time: float,
    area: float = math.pi,
    phi0: float = 0.0,
) -> PulseSpec:
    """Instantaneous rotation used by oracle tests and idealized sequences."""
    return PulseSpec(
        shape="ideal",
        start_time=time,
        duration=0.0,
        transition=transition,
        manifold=manifold,
        nominal_area=area,
        phi0=phi0,
    )
