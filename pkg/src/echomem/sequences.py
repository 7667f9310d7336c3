"""Executable timelines for the memory protocols.

Builders produce absolutely-timed pulse lists for the four-pulse echo
(NLPE), the phase-patterned RF decoupling train (CHS-UR4), their
combination, spin-echo characterization sequences, the split-readout
variant for time-bin analysis, and the optical-pumping initialization.

All builder timing arguments refer to pulse centers; the echo emerges at
t_e = t4 + t3 - t2 - t1 + t0.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .levels import LevelScheme, transition_frequency
from .pulses import ChsParams, PulseSpec

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Timeline:
    """Ordered, absolutely-timed pulses plus input/readout markers.

    pulses are the control drives; input_pulses carry the (weak) signal.
    readout_window is (start, width); detection_gates are named
    (start, width) intervals.  clock_jitter, when positive, is the
    standard deviation applied to every pulse start by with_jitter().
    """

    pulses: tuple[PulseSpec, ...]
    input_pulses: tuple[PulseSpec, ...] = ()
    input_time: float | None = None
    echo_time: float | None = None
    readout_window: tuple[float, float] | None = None
    detection_gates: tuple[tuple[str, float, float], ...] = ()
    total_span: float = 0.0
    clock_jitter: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(sorted(self.pulses, key=lambda p: p.start_time)))
        object.__setattr__(self, "input_pulses", tuple(sorted(self.input_pulses, key=lambda p: p.start_time)))
        drives = self.drive_pulses()
        for first, second in zip(drives[:-1], drives[1:]):
            if second.start_time < first.end_time - 1e-15:
                raise ValueError(
                    f"pulse supports overlap: [{first.start_time}, {first.end_time}] and "
                    f"[{second.start_time}, {second.end_time}]"
                )
        if drives and drives[-1].end_time > self.total_span + 1e-15:
            raise ValueError("total_span does not cover the last pulse")
        if self.clock_jitter < 0.0:
            raise ValueError("clock_jitter must be >= 0")

    def drive_pulses(self) -> tuple[PulseSpec, ...]:
        """All drives (controls and inputs) in chronological order."""
        return tuple(sorted(self.pulses + self.input_pulses, key=lambda p: p.start_time))

    def events(self):
        """Chronological (time, kind, payload) view including markers."""
        out = [(p.start_time, "pulse", p) for p in self.pulses]
        out += [(p.start_time, "input_signal", p) for p in self.input_pulses]
        if self.readout_window is not None:
            out.append((self.readout_window[0], "readout_window", self.readout_window))
        for name, start, width in self.detection_gates:
            out.append((start, "detection_gate", (name, start, width)))
        return sorted(out, key=lambda e: e[0])

    def with_jitter(self, rng: np.random.Generator) -> "Timeline":
        """Copy with pulse starts perturbed by N(0, clock_jitter)."""
        if self.clock_jitter <= 0.0:
            return self
        shifted = [
            replace(p, start_time=p.start_time + self.clock_jitter * rng.standard_normal())
            for p in self.pulses
        ]
        return replace(self, pulses=tuple(shifted), clock_jitter=0.0)

    def to_document(self) -> dict:
        """JSON-serializable form for golden-file regression tests."""

        def pulse_doc(p: PulseSpec) -> dict:
            doc = asdict(p)
            doc["transition"] = list(p.transition)
            if p.chs is not None:
                doc["chs"] = asdict(p.chs)
            return doc

        return {
            "pulses": [pulse_doc(p) for p in self.pulses],
            "input_pulses": [pulse_doc(p) for p in self.input_pulses],
            "input_time": self.input_time,
            "echo_time": self.echo_time,
            "readout_window": list(self.readout_window) if self.readout_window else None,
            "detection_gates": [list(g) for g in self.detection_gates],
            "total_span": self.total_span,
            "clock_jitter": self.clock_jitter,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_document(), sort_keys=True, indent=1)

    @staticmethod
    def from_document(doc: dict) -> "Timeline":
        def pulse_from(d: dict) -> PulseSpec:
            d = dict(d)
            d["transition"] = tuple(d["transition"])
            if d.get("chs"):
                d["chs"] = ChsParams(**d["chs"])
            return PulseSpec(**d)

        return Timeline(
            pulses=tuple(pulse_from(d) for d in doc["pulses"]),
            input_pulses=tuple(pulse_from(d) for d in doc["input_pulses"]),
            input_time=doc.get("input_time"),
            echo_time=doc.get("echo_time"),
            readout_window=tuple(doc["readout_window"]) if doc.get("readout_window") else None,
            detection_gates=tuple((g[0], g[1], g[2]) for g in doc.get("detection_gates", ())),
            total_span=doc["total_span"],
            clock_jitter=doc.get("clock_jitter", 0.0),
        )


@dataclass(frozen=True)
class Ur4Phases:
    """Per-block phase pattern of the four-pulse universally robust train.

    The canonical pattern is (0, phi2, pi + 2*phi2, 3*pi + 3*phi2) with
    phi2 = pi/2 + delta; reduced mod 2*pi this is
    (0, pi/2 + delta, 2*delta, pi/2 + 3*delta), the XY4 pattern at
    delta = 0.
    """

    phi2: float
    delta: float
    phases: tuple[float, float, float, float]
    n_blocks: int

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")
        canonical = (0.0, self.phi2, math.pi + 2 * self.phi2, 3 * math.pi + 3 * self.phi2)
        for got, want in zip(self.phases, canonical):
            if abs((got - want + math.pi) % TWO_PI - math.pi) > 1e-12:
                raise ValueError("phases do not follow the (0, phi2, pi+2 phi2, 3 pi+3 phi2) pattern")


def ur4_phases(delta: float, n_blocks: int = 1) -> Ur4Phases:
    """Phase pattern (0, pi/2+delta, 2 delta, pi/2+3 delta), repeated per block."""
    phi2 = math.pi / 2 + delta
    phases = tuple((0.0, phi2, 2 * delta, math.pi / 2 + 3 * delta))
    phases = tuple(p % TWO_PI for p in phases)
    return Ur4Phases(phi2=phi2, delta=delta, phases=phases, n_blocks=n_blocks)


def _default_input(signal: PulseSpec | None) -> PulseSpec:
    if signal is not None:
        return signal
    return PulseSpec(
        shape="truncated_gaussian",
        start_time=0.0,
        duration=3.0e-6,
        transition=("g3", "e3"),
        manifold="optical",
        nominal_area=0.1,
        fwhm=1.5e-6,
    )


def _scaled_input(template: PulseSpec, center: float, amplitude: complex) -> PulseSpec:
    mag = abs(amplitude)
    spec = template.at_center(center)
    if mag != 1.0:
        spec = replace(spec, nominal_area=template.nominal_area * mag)
    phase = np.angle(amplitude)
    if phase != 0.0:
        spec = replace(spec, phi0=spec.phi0 + float(phase))
    return spec


def build_nlpe(
    timings,
    presets: dict,
    signal: PulseSpec | None = None,
    input_bins=((0.0, 1.0),),
    readout_width: float | None = None,
    detection_width: float = 2.1e-6,
    clock_jitter: float = 0.0,
) -> Timeline:
    """Four-pulse echo timeline: input at t0, pi43/pi32 pairs at t1..t4.

    timings are the five pulse centers (t0..t4); the echo marker lands at
    t_e = t4 + t3 - t2 - t1 + t0.  input_bins lists (offset, complex
    amplitude) pairs so time-bin encoded inputs reuse the same builder.
    """
    t0, t1, t2, t3, t4 = (float(t) for t in timings)
    if not (t0 < t1 < t2 < t3 < t4):
        raise ValueError("timings must satisfy t0 < t1 < t2 < t3 < t4")
    t_e = t4 + t3 - t2 - t1 + t0
    template = _default_input(signal)
    controls = [
        presets["pi43"].at_center(t1),
        presets["pi32"].at_center(t2),
        presets["pi43"].at_center(t3),
        presets["pi32"].at_center(t4),
    ]
    for pulse in controls:
        if pulse.start_time - 1e-15 <= t_e <= pulse.end_time + 1e-15:
            raise ValueError(f"echo time {t_e} falls inside a control pulse support")
    inputs = [_scaled_input(template, t0 + off, amp) for off, amp in input_bins]
    width = readout_width if readout_width is not None else 2.0 * template.duration
    span = max(t_e + width, controls[-1].end_time) + template.duration
    return Timeline(
        pulses=tuple(controls),
        input_pulses=tuple(inputs),
        input_time=t0,
        echo_time=t_e,
        readout_window=(t_e - width / 2, width),
        detection_gates=(("signal", t_e - detection_width / 2, detection_width),),
        total_span=span,
        clock_jitter=clock_jitter,
    )


def build_chs_ur4(
    tau: float,
    n_pulses: int,
    rf_preset: PulseSpec,
    delta: float = 0.0,
    origin: float = 0.0,
    clock_jitter: float = 0.0,
    extra_span: float = 0.0,
) -> Timeline:
    """Decoupling train: pulse k centered at origin + (2k+1) tau/2 with the
    four-phase pattern repeating across blocks; total span = n_pulses * tau."""
    if n_pulses < 4 or n_pulses % 4 != 0:
        raise ValueError("n_pulses must be a positive multiple of 4")
    if tau <= rf_preset.duration:
        raise ValueError("tau must exceed the RF pulse duration")
    pattern = ur4_phases(delta, n_blocks=n_pulses // 4)
    pulses = []
    for k in range(n_pulses):
        center = origin + (2 * k + 1) * tau / 2
        pulses.append(rf_preset.at_center(center).with_phase(pattern.phases[k % 4]))
    return Timeline(
        pulses=tuple(pulses),
        total_span=origin + n_pulses * tau + extra_span,
        clock_jitter=clock_jitter,
    )


def build_nlpe_dd(
    timings,
    presets: dict,
    tau: float = 0.0,
    n_pulses: int = 0,
    delta: float = 0.0,
    signal: PulseSpec | None = None,
    input_bins=((0.0, 1.0),),
    readout_width: float | None = None,
    detection_width: float = 2.1e-6,
    clock_jitter: float = 0.0,
) -> Timeline:
    """Echo timeline with the decoupling train inserted after the first
    optical pi pulse.

    The train is centered in the spin-storage interval with half-interval
    padding (first RF center at t1 + tau/2), so the added storage time is
    exactly n_pulses * tau and the echo shifts by the same amount.
    n_pulses = 0 reduces to build_nlpe.
    """
    if n_pulses == 0:
        return build_nlpe(timings, presets, signal, input_bins, readout_width, detection_width, clock_jitter)
    t0, t1, t2, t3, t4 = (float(t) for t in timings)
    block = n_pulses * tau
    base = build_nlpe(
        (t0, t1, t2 + block, t3 + block, t4 + block),
        presets,
        signal,
        input_bins,
        readout_width,
        detection_width,
        clock_jitter,
    )
    dd = build_chs_ur4(tau, n_pulses, presets["rf_pi"], delta, origin=t1)
    first_rf = dd.pulses[0]
    pi43 = base.pulses[0]
    if first_rf.start_time <= pi43.end_time:
        raise ValueError("decoupling block overlaps the first optical pulse")
    return replace(base, pulses=tuple(sorted(base.pulses + dd.pulses, key=lambda p: p.start_time)))


def build_superposition_readout(
    base: Timeline,
    splitting: float,
    relative_phase: float,
    half_duration: float | None = None,
) -> Timeline:
    """Replace the final control pulse by two half-area readout pulses.

    The second readout pulse carries relative_phase; the readout window is
    widened to capture the three output bins (early, central, late).  A
    splitting of 0 recomposes a single full-area readout pulse.
    """
    if base.echo_time is None or not base.pulses:
        raise ValueError("base timeline must be an echo timeline")
    final = base.pulses[-1]
    others = base.pulses[:-1]
    t4 = final.center
    duration = half_duration if half_duration is not None else final.duration
    if splitting < 0:
        raise ValueError("splitting must be >= 0")
    if splitting == 0:
        readout = (
            PulseSpec(
                shape="half_pi_pair_member",
                start_time=t4 - duration / 2,
                duration=duration,
                transition=final.transition,
                manifold=final.manifold,
                nominal_area=math.pi,
                phi0=final.phi0,
            ),
        )
        gates = base.detection_gates
        window = base.readout_window
        span = base.total_span
    else:
        if splitting <= duration:
            raise ValueError("splitting must exceed the readout pulse duration")
        first = PulseSpec(
            shape="half_pi_pair_member",
            start_time=t4 - duration / 2,
            duration=duration,
            transition=final.transition,
            manifold=final.manifold,
            nominal_area=math.pi / 2,
            phi0=final.phi0,
        )
        second = replace(
            first,
            start_time=t4 + splitting - duration / 2,
            phi0=final.phi0 + relative_phase,
        )
        readout = (first, second)
        t_e = base.echo_time
        name_width = base.detection_gates[0][2] if base.detection_gates else 2.1e-6
        gates = (
            ("early", t_e - name_width / 2, name_width),
            ("central", t_e + splitting - name_width / 2, name_width),
            ("late", t_e + 2 * splitting - name_width / 2, name_width),
        )
        if base.readout_window is not None:
            start, width = base.readout_window
            window = (start, width + 2 * splitting)
            span = max(base.total_span, start + width + 2 * splitting)
        else:
            window = None
            span = max(base.total_span, t_e + 2 * splitting + name_width)
        if second.end_time >= t_e + 2 * splitting + name_width:
            raise ValueError("readout pulses overlap the late output bin")
    return replace(
        base,
        pulses=tuple(sorted(others + readout, key=lambda p: p.start_time)),
        detection_gates=gates,
        readout_window=window,
        total_span=span,
    )


# pump frequency sets for the three initialization phases: class cleaning
# (six pumps plus the readout-channel clean-out), spin polarization (the
# g6 pump removed so population pools there), and the narrow back-pump
# that returns population to g3
CLEANING_LINES = ((1, 2), (2, 2), (3, 3), (4, 3), (5, 5), (6, 4), (3, 2))
POLARIZE_LINES = ((1, 2), (2, 2), (3, 3), (4, 3), (5, 5), (3, 2))
BACKPUMP_LINES = ((1, 2), (2, 2), (4, 3), (5, 5), (6, 4))


def build_initialization(
    scheme: LevelScheme,
    reps: tuple[int, int, int] = (100, 80, 80),
    pulse_duration: float = 1.0e-3,
    cleaning_bandwidth: float = 3.0e6,
    backpump_bandwidth: float = 0.8e6,
    pump_omega0: float = 2.0e4,
) -> Timeline:
    """Optical-pumping preparation: class cleaning, spin polarization into
    g6, and back-pumping into g3.

    Pump pulses are sequential chirped rectangles addressed by absolute
    frequency; with 1 ms pulses and the default repetition counts the
    sequence lasts 1.580 s.  Executed by the rate-equation model, not the
    coherent propagator.
    """
    phases = (
        (CLEANING_LINES, cleaning_bandwidth, reps[0]),
        (POLARIZE_LINES, cleaning_bandwidth, reps[1]),
        (BACKPUMP_LINES, backpump_bandwidth, reps[2]),
    )
    pulses = []
    cursor = 0.0
    for lines, bandwidth, count in phases:
        for _ in range(count):
            for g, e in lines:
                pulses.append(
                    PulseSpec(
                        shape="chirped_rectangular",
                        start_time=cursor,
                        duration=pulse_duration,
                        transition=(f"g{g}", f"e{e}"),
                        manifold="optical",
                        omega0=pump_omega0,
                        bandwidth=bandwidth,
                        center_frequency=transition_frequency(scheme, g, e),
                    )
                )
                cursor += pulse_duration
    return Timeline(pulses=tuple(pulses), total_span=cursor)


def build_two_pulse_echo(tau: float, pi_preset: PulseSpec, half_preset: PulseSpec | None = None) -> Timeline:
    """Hahn-style probe: pi/2 at the origin, pi at tau, echo probed at 2 tau."""
    if tau <= pi_preset.duration:
        raise ValueError("tau must exceed the pulse duration")
    if half_preset is None:
        half_preset = replace(
            pi_preset,
            shape="half_pi_pair_member" if pi_preset.shape != "ideal" else "ideal",
            nominal_area=math.pi / 2,
            chs=None,
        )
    offset = half_preset.duration / 2
    first = half_preset.at_center(offset)
    second = pi_preset.at_center(offset + tau)
    probe = offset + 2 * tau
    return Timeline(
        pulses=(first, second),
        echo_time=probe,
        detection_gates=(("echo", probe, 0.0),),
        total_span=probe + pi_preset.duration,
    )
