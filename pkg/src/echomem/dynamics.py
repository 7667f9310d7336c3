"""Single-ion and ensemble density-matrix dynamics under timed pulse sequences.

Everything runs in the interaction frame of the nominal level energies: an
ion with zero detunings is exactly resonant with every drive, and static
inhomogeneous offsets enter as a constant diagonal Hamiltonian.  Free
segments are therefore exact (phase accrual plus closed-form Lindblad
damping), while pulse segments are integrated with a fourth-order Magnus
propagator in the frame co-moving with the drive phase, which ties the
step count to the envelope timescale instead of the chirp.

The dissipative channel (pure dephasing plus excited-state decay routed by
the branching table) is applied as an exact completely positive map between
unitary strides, so trace and positivity are preserved to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .levels import FourLevelSystem, LevelScheme
from .pulses import PulseSpec, envelope_and_phase

SQRT3 = math.sqrt(3.0)
# standard deviation of a Gaussian per unit FWHM
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))

MAX_PULSE_STEPS = 1 << 21
DAMPING_STRIDES = 256
_TIME_EPS = 1e-15


@dataclass(frozen=True)
class LevelRegister:
    """Ordered level subset a simulation runs on.

    labels index the density matrix; kinds is "g"/"e" per level.
    detuning_weights maps an ion's (optical, spin, ee) static offsets in Hz
    onto per-level energy offsets.  decay_branching, when present, routes
    excited-state population decay: column j holds the distribution of
    decay out of level j over the register's levels (a "gX" sink row
    absorbs decay that leaves the subset).
    """

    labels: tuple[str, ...]
    kinds: tuple[str, ...]
    detuning_weights: np.ndarray
    decay_branching: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.detuning_weights, dtype=float)
        object.__setattr__(self, "detuning_weights", w)
        if w.shape != (len(self.labels), 3):
            raise ValueError("detuning_weights must have shape (d, 3)")
        if len(self.kinds) != len(self.labels):
            raise ValueError("kinds and labels must have equal length")
        if self.decay_branching is not None:
            b = np.asarray(self.decay_branching, dtype=float)
            object.__setattr__(self, "decay_branching", b)
            if b.shape != (len(self.labels),) * 2:
                raise ValueError("decay_branching must be d x d")

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"level {label!r} not in register {self.labels}") from None

    def pair_indices(self, transition: tuple[str, str]) -> tuple[int, int]:
        return self.index(transition[0]), self.index(transition[1])

    def ground_state(self, label: str | None = None) -> np.ndarray:
        """Density matrix with all population in one level (default: first)."""
        idx = 0 if label is None else self.index(label)
        rho = np.zeros((self.dim, self.dim), dtype=complex)
        rho[idx, idx] = 1.0
        return rho


def _weights_for_label(label: str, four: FourLevelSystem) -> tuple[float, float, float]:
    g_low, g_high = four.ground_pair
    if label == f"g{g_low}":
        return (0.0, 0.0, 0.0)
    if label == f"g{g_high}":
        return (0.0, 1.0, 0.0)
    if label == f"e{four.signal_excited}":
        return (1.0, 0.0, 0.0)
    if label == f"e{four.auxiliary_excited}":
        # the excited-pair splitting offset shifts the auxiliary level
        # relative to the signal level
        return (1.0, 0.0, -1.0)
    raise ValueError(f"label {label!r} is not part of the four-level system")


def nlpe_register(four: FourLevelSystem, scheme: LevelScheme | None = None) -> LevelRegister:
    """Four-level register (g_low, g_high, e_signal, e_aux).

    When a level scheme is supplied, excited decay is routed by its
    branching table and a sink level absorbs decay out of the subset.
    """
    labels = list(four.labels())
    kinds = ["g", "g", "e", "e"]
    weights = [_weights_for_label(lab, four) for lab in labels]
    branch = None
    if scheme is not None:
        labels.append("gX")
        kinds.append("g")
        weights.append((0.0, 0.0, 0.0))
        d = len(labels)
        branch = np.zeros((d, d))
        g_low, g_high = four.ground_pair
        ground_rows = {f"g{g_low}": g_low, f"g{g_high}": g_high}
        sink = labels.index("gX")
        for col, lab in enumerate(labels):
            if kinds[col] != "e":
                continue
            e_idx = int(lab[1:])
            total = 0.0
            for row, row_lab in enumerate(labels):
                if row_lab in ground_rows:
                    r = scheme.ratio(ground_rows[row_lab], e_idx)
                    branch[row, col] = r
                    total += r
            branch[sink, col] = max(0.0, 1.0 - total)
    return LevelRegister(tuple(labels), tuple(kinds), np.array(weights), branch)


def spin_register(four: FourLevelSystem | None = None) -> LevelRegister:
    """Two-level register on the protected spin transition."""
    if four is None:
        labels = ("g3", "g4")
    else:
        g_low, g_high = four.ground_pair
        labels = (f"g{g_low}", f"g{g_high}")
    return LevelRegister(labels, ("g", "g"), np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))


def optical_register(four: FourLevelSystem | None = None) -> LevelRegister:
    """Two-level register on the signal optical transition."""
    if four is None:
        labels = ("g3", "e3")
    else:
        labels = (f"g{four.ground_pair[0]}", f"e{four.signal_excited}")
    return LevelRegister(labels, ("g", "e"), np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))


@dataclass
class IonState:
    """Density matrix of one ion plus its static detuning offsets (Hz)."""

    rho: np.ndarray
    optical_detuning: float = 0.0
    spin_detuning: float = 0.0
    ee_detuning: float = 0.0

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)

    def validate(self, atol_trace: float = 1e-9, atol_herm: float = 1e-12, atol_pos: float = 1e-9) -> None:
        tr = complex(np.trace(self.rho))
        if abs(tr - 1.0) > atol_trace:
            raise ValueError(f"trace(rho) = {tr}, expected 1")
        if np.abs(self.rho - self.rho.conj().T).max() > atol_herm:
            raise ValueError("rho is not Hermitian")
        if np.linalg.eigvalsh(self.rho).min() < -atol_pos:
            raise ValueError("rho has a negative eigenvalue")

    @property
    def detunings(self) -> tuple[float, float, float]:
        return (self.optical_detuning, self.spin_detuning, self.ee_detuning)


@dataclass(frozen=True)
class DecoherenceSpec:
    """Lindblad rates: pure dephasing on optical and spin coherences plus
    excited population decay routed by the branching table."""

    optical_dephasing_rate: float = 0.0
    spin_dephasing_rate: float = 0.0
    excited_lifetime: float = math.inf

    def __post_init__(self):
        if self.optical_dephasing_rate < 0 or self.spin_dephasing_rate < 0:
            raise ValueError("dephasing rates must be >= 0")
        if self.excited_lifetime <= 0:
            raise ValueError("excited lifetime must be positive")

    @property
    def active(self) -> bool:
        return (
            self.optical_dephasing_rate > 0
            or self.spin_dephasing_rate > 0
            or math.isfinite(self.excited_lifetime)
        )


@dataclass(frozen=True)
class EnsembleSpec:
    """Gaussian inhomogeneous broadenings (FWHM, Hz) and the draw seed."""

    n_ions: int
    optical_fwhm: float = 0.0
    spin_fwhm: float = 0.0
    ee_fwhm: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_ions < 1:
            raise ValueError("n_ions must be >= 1")
        if min(self.optical_fwhm, self.spin_fwhm, self.ee_fwhm) < 0:
            raise ValueError("FWHM values must be >= 0")


def sample_ensemble(
    spec: EnsembleSpec,
    register: LevelRegister,
    initial_rho: np.ndarray | None = None,
) -> list[IonState]:
    """Draw an ensemble of ions with Gaussian static detunings.

    Uses a counter-based generator (Philox) so a given seed reproduces the
    identical ensemble regardless of platform or call site.  The three
    detuning kinds are sampled independently.
    """
    rng = np.random.Generator(np.random.Philox(key=spec.seed))
    draws = rng.standard_normal((3, spec.n_ions))
    sigmas = np.array([spec.optical_fwhm, spec.spin_fwhm, spec.ee_fwhm]) * FWHM_TO_SIGMA
    detunings = draws * sigmas[:, None]
    rho0 = register.ground_state() if initial_rho is None else np.asarray(initial_rho, dtype=complex)
    return [
        IonState(rho0.copy(), float(detunings[0, i]), float(detunings[1, i]), float(detunings[2, i]))
        for i in range(spec.n_ions)
    ]


def _stack(ions: list[IonState]) -> tuple[np.ndarray, np.ndarray]:
    if len(ions) == 0:
        raise ValueError("empty ensemble")
    rho = np.array([ion.rho for ion in ions], dtype=complex)
    dets = np.array([ion.detunings for ion in ions], dtype=float)
    return rho, dets


# ---------------------------------------------------------------------------
# pulse propagation (4th-order Magnus in the drive-phase co-moving frame)
# ---------------------------------------------------------------------------


def _block_steps(spec: PulseSpec, t_lo: float, t_hi: float, n_steps: int):
    """Waveform samples for the two-point Gauss Magnus scheme on [t_lo, t_hi]."""
    dt = (t_hi - t_lo) / n_steps
    edges = t_lo + dt * np.arange(n_steps + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    gauss = dt * SQRT3 / 6.0
    env1, _, rate1 = envelope_and_phase(spec, mid - gauss)
    env2, _, rate2 = envelope_and_phase(spec, mid + gauss)
    _, phi_edge, _ = envelope_and_phase(spec, np.array([t_lo, t_hi]))
    return dt, env1, env2, rate1, rate2, float(phi_edge[0]), float(phi_edge[1])


def _compose_block(dt, env1, env2, rate1, rate2, dz):
    """Compose the co-moving-frame step unitaries for every ion.

    dz is the per-ion half detuning splitting of the driven pair (rad/s),
    shape (n,).  Returns Cayley-Klein parameters (alpha, beta) of the
    composed SU(2) block.
    """
    n_steps = env1.shape[0]
    # ion-independent pieces of the Magnus exponent; the commutator term
    # is linear in dz, so it splits into scalar + dz-proportional parts
    cx_s = dt * (env1 + env2) / 4.0
    cz0 = -dt * (rate1 + rate2) / 4.0
    comm = dt * dt * SQRT3 / 6.0
    cy0 = comm * (env2 * rate1 - env1 * rate2) / 4.0
    cy1 = comm * (env1 - env2) / 2.0
    alpha = np.ones_like(dz, dtype=complex)
    beta = np.zeros_like(dz, dtype=complex)
    for k in range(n_steps):
        cz = cz0[k] + dt * dz
        cy = cy0[k] + cy1[k] * dz
        cx = cx_s[k]
        r = np.sqrt(cx * cx + cy * cy + cz * cz)
        r_safe = np.where(r > 0.0, r, 1.0)
        snc = np.where(r > 0.0, np.sin(r_safe) / r_safe, 1.0)
        cr = np.cos(r)
        a_k = cr - 1j * snc * cz
        b_k = -1j * snc * (cx - 1j * cy)
        alpha, beta = a_k * alpha - b_k * np.conj(beta), a_k * beta + b_k * np.conj(alpha)
    return alpha, beta


def _block_unitary(spec: PulseSpec, t_lo, t_hi, n_steps, e_upper, e_lower):
    """SU(2)-block propagator of one pulse stretch, batched over ions.

    e_upper/e_lower are per-ion level offsets (rad/s).  Returns (n, 2, 2)
    in the (upper, lower) basis of the driven pair.
    """
    dt, env1, env2, rate1, rate2, phi_lo, phi_hi = _block_steps(spec, t_lo, t_hi, n_steps)
    dz = (e_upper - e_lower) / 2.0
    alpha, beta = _compose_block(dt, env1, env2, rate1, rate2, dz)
    h0 = (e_upper + e_lower) / 2.0
    gphase = np.exp(-1j * h0 * (t_hi - t_lo))
    w_hi = np.exp(-1j * phi_hi / 2.0)
    w_lo = np.exp(-1j * phi_lo / 2.0)
    u = np.empty(np.shape(alpha) + (2, 2), dtype=complex)
    # U = W(t_hi) M W(t_lo)^dag with W = diag(e^{-i phi/2}, e^{+i phi/2})
    u[..., 0, 0] = alpha * w_hi * np.conj(w_lo)
    u[..., 0, 1] = beta * w_hi * w_lo
    u[..., 1, 0] = -np.conj(beta) * np.conj(w_hi) * np.conj(w_lo)
    u[..., 1, 1] = np.conj(alpha) * np.conj(w_hi) * w_lo
    return u * gphase[..., None, None]


def _initial_steps(spec: PulseSpec, t_lo: float, t_hi: float, dz_max: float, samples_per_cycle: int = 40) -> int:
    """Resolve the co-moving-frame phase at >= 40 samples per cycle before
    step-doubling refinement takes over."""
    probe = np.linspace(t_lo, t_hi, 257)
    env, _, rate = envelope_and_phase(spec, probe)
    r_max = float(np.max(np.hypot(env / 2.0, np.abs(rate) / 2.0 + dz_max)))
    cycles = r_max * (t_hi - t_lo) / (2.0 * math.pi)
    return max(64, int(math.ceil(samples_per_cycle * cycles)))


def _converged_block(spec, t_lo, t_hi, e_upper, e_lower, local_error):
    """Step-doubled block propagator with operator-norm error control."""
    dz_max = float(np.max(np.abs(e_upper - e_lower))) / 2.0
    n = _initial_steps(spec, t_lo, t_hi, dz_max)
    u_prev = _block_unitary(spec, t_lo, t_hi, n, e_upper, e_lower)
    while True:
        n *= 2
        u_curr = _block_unitary(spec, t_lo, t_hi, n, e_upper, e_lower)
        err = float(np.max(np.sqrt(np.sum(np.abs(u_curr - u_prev) ** 2, axis=(-2, -1)))))
        if err <= local_error:
            return u_curr, n
        if n >= MAX_PULSE_STEPS:
            raise RuntimeError(f"pulse integration stalled at {n} steps (error {err:.2e})")
        u_prev = u_curr


def _ideal_block(spec: PulseSpec) -> np.ndarray:
    """Instantaneous rotation exp(-i area/2 (cos phi sx + sin phi sy))."""
    half = spec.nominal_area / 2.0
    c, s = math.cos(half), math.sin(half)
    e = np.exp(-1j * spec.phi0)
    return np.array([[c, -1j * s * e], [-1j * s * np.conj(e), c]], dtype=complex)


def _coerce_detunings(detunings) -> tuple[np.ndarray, bool]:
    if detunings is None:
        return np.zeros((1, 3)), True
    if isinstance(detunings, IonState):
        return np.array([detunings.detunings]), True
    if isinstance(detunings, (list, tuple)) and detunings and isinstance(detunings[0], IonState):
        return np.array([ion.detunings for ion in detunings]), False
    arr = np.asarray(detunings, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != 3:
        raise ValueError("detunings must be (n, 3) arrays of (optical, spin, ee) Hz offsets")
    return arr, single


def _full_unitary(register, spec, dets, local_error):
    """(n, d, d) propagator of one pulse, including spectator phases."""
    n = dets.shape[0]
    d = register.dim
    offsets = 2.0 * math.pi * dets @ register.detuning_weights.T  # (n, d) rad/s
    lower, upper = register.pair_indices(spec.transition)
    if spec.shape == "ideal":
        blk = np.broadcast_to(_ideal_block(spec), (n, 2, 2))
        span = 0.0
    else:
        blk, _ = _converged_block(
            spec, spec.start_time, spec.end_time, offsets[:, upper], offsets[:, lower], local_error
        )
        span = spec.duration
    u = np.zeros((n, d, d), dtype=complex)
    idx = np.arange(d)
    u[:, idx, idx] = np.exp(-1j * offsets * span)
    u[:, upper, upper] = blk[:, 0, 0]
    u[:, upper, lower] = blk[:, 0, 1]
    u[:, lower, upper] = blk[:, 1, 0]
    u[:, lower, lower] = blk[:, 1, 1]
    return u


class CompletelyPositiveMap:
    """Pulse propagator under decoherence: unitary Magnus strides
    interleaved with the exact damping channel."""

    def __init__(self, register, spec, dets, decoherence, local_error):
        self.register = register
        self.spec = spec
        self.dets = dets
        self.decoherence = decoherence
        self.local_error = local_error

    def apply(self, rho: np.ndarray) -> np.ndarray:
        rho = np.array(rho, dtype=complex)
        squeeze = rho.ndim == 2
        if squeeze:
            rho = np.broadcast_to(rho, (self.dets.shape[0],) + rho.shape).copy()
        offsets = 2.0 * math.pi * self.dets @ self.register.detuning_weights.T
        _run_pulse(rho, self.register, self.spec, offsets, self.decoherence, self.local_error, None, None)
        return rho[0] if squeeze else rho


def pulse_propagator(
    register: LevelRegister,
    spec: PulseSpec,
    detunings=None,
    decoherence: DecoherenceSpec | None = None,
    local_error: float = 1e-8,
):
    """Propagator of one pulse over its full support.

    Returns the unitary -- (d, d) for a single ion, (n, d, d) for an array
    of ions -- or a CompletelyPositiveMap when decoherence is enabled.
    detunings may be None (resonant ion), an IonState, a list of IonState,
    or an (n, 3) array of (optical, spin, ee) offsets in Hz.
    """
    dets, single = _coerce_detunings(detunings)
    if decoherence is not None and decoherence.active:
        return CompletelyPositiveMap(register, spec, dets, decoherence, local_error)
    u = _full_unitary(register, spec, dets, local_error)
    return u[0] if single else u


# ---------------------------------------------------------------------------
# dissipative channel
# ---------------------------------------------------------------------------


def _coherence_rates(register: LevelRegister, dec: DecoherenceSpec) -> np.ndarray:
    """Decay rate of each coherence element (1/s)."""
    d = register.dim
    excited = np.array([k == "e" for k in register.kinds])
    rates = np.zeros((d, d))
    for a in range(d):
        for b in range(d):
            if a == b:
                continue
            if excited[a] != excited[b]:
                rates[a, b] += dec.optical_dephasing_rate
            elif excited[a]:
                # coherences within the excited manifold carry the optical rate
                rates[a, b] += dec.optical_dephasing_rate
            else:
                rates[a, b] += dec.spin_dephasing_rate
    if math.isfinite(dec.excited_lifetime):
        decay = excited / dec.excited_lifetime
        rates += 0.5 * (decay[:, None] + decay[None, :])
        np.fill_diagonal(rates, 0.0)
    return rates


def _apply_damping(rho: np.ndarray, dt: float, register: LevelRegister, dec: DecoherenceSpec, rates: np.ndarray):
    """Exact damping channel over dt, in place: elementwise coherence decay
    plus branched population transfer."""
    pops = np.einsum("nii->ni", rho).real.copy()
    rho *= np.exp(-rates * dt)
    if math.isfinite(dec.excited_lifetime) and register.decay_branching is not None:
        excited = np.array([k == "e" for k in register.kinds])
        survive = math.exp(-dt / dec.excited_lifetime)
        lost = pops[:, excited] * (1.0 - survive)
        pops[:, excited] *= survive
        pops += lost @ register.decay_branching[:, excited].T
    idx = np.arange(register.dim)
    rho[:, idx, idx] = pops


# ---------------------------------------------------------------------------
# timeline execution
# ---------------------------------------------------------------------------


def _apply_block_to_rho(rho: np.ndarray, blk: np.ndarray, pair: tuple[int, int]) -> None:
    """rho <- U rho U^dag where U is identity outside the 2x2 block."""
    sel = list(pair)
    rows = rho[:, sel, :]
    if blk.ndim == 3:
        rows = np.einsum("nij,njk->nik", blk, rows)
    else:
        rows = np.einsum("ij,njk->nik", blk, rows)
    rho[:, sel, :] = rows
    cols = rho[:, :, sel]
    if blk.ndim == 3:
        cols = np.einsum("nik,njk->nij", cols, np.conj(blk))
    else:
        cols = np.einsum("nik,jk->nij", cols, np.conj(blk))
    rho[:, :, sel] = cols


def _apply_spectator_phases(rho, offsets, span, pair, dim):
    phase = np.exp(-1j * offsets * span)
    phase = phase.copy()
    phase[:, list(pair)] = 1.0  # the pair's phases live inside the block propagator
    rho *= phase[:, :, None] * np.conj(phase)[:, None, :]


def _run_pulse(rho, register, spec, offsets, dec, local_error, probes, on_probe):
    """Propagate rho through one pulse in place, invoking on_probe(t) at
    interior probe times."""
    lower, upper = register.pair_indices(spec.transition)
    if spec.shape == "ideal":
        _apply_block_to_rho(rho, _ideal_block(spec), (upper, lower))
        return
    e_upper = offsets[:, upper]
    e_lower = offsets[:, lower]
    damped = dec is not None and dec.active
    interior = [] if probes is None else [float(t) for t in probes]
    if not damped and not interior:
        blk, _ = _converged_block(spec, spec.start_time, spec.end_time, e_upper, e_lower, local_error)
        _apply_block_to_rho(rho, blk, (upper, lower))
        _apply_spectator_phases(rho, offsets, spec.duration, (upper, lower), register.dim)
        return
    _, n_total = _converged_block(spec, spec.start_time, spec.end_time, e_upper, e_lower, local_error)
    rates = _coherence_rates(register, dec) if damped else None
    edges = [spec.start_time, *interior, spec.end_time]
    for t_lo, t_hi in zip(edges[:-1], edges[1:]):
        if t_hi - t_lo <= _TIME_EPS:
            if t_hi in interior and on_probe is not None:
                on_probe(t_hi)
            continue
        n_seg = max(16, int(round(n_total * (t_hi - t_lo) / spec.duration)))
        if not damped:
            blk = _block_unitary(spec, t_lo, t_hi, n_seg, e_upper, e_lower)
            _apply_block_to_rho(rho, blk, (upper, lower))
            _apply_spectator_phases(rho, offsets, t_hi - t_lo, (upper, lower), register.dim)
        else:
            strides = min(DAMPING_STRIDES, n_seg)
            bounds = t_lo + (t_hi - t_lo) * np.arange(strides + 1) / strides
            n_per = max(1, -(-n_seg // strides))
            for s_lo, s_hi in zip(bounds[:-1], bounds[1:]):
                blk = _block_unitary(spec, s_lo, s_hi, n_per, e_upper, e_lower)
                _apply_block_to_rho(rho, blk, (upper, lower))
                _apply_spectator_phases(rho, offsets, s_hi - s_lo, (upper, lower), register.dim)
                _apply_damping(rho, s_hi - s_lo, register, dec, rates)
        if t_hi in interior and on_probe is not None:
            on_probe(t_hi)


def _free_segment(rho, offsets, dt, register, dec, rates):
    if dt <= 0.0:
        return
    phase = np.exp(-1j * offsets * dt)
    rho *= phase[:, :, None] * np.conj(phase)[:, None, :]
    if dec is not None and dec.active:
        _apply_damping(rho, dt, register, dec, rates)


@dataclass
class EnsembleTrajectory:
    """Probe-time record of an evolved ensemble.

    mean_rho holds the ensemble-averaged density matrix at each probe
    (numpy pairwise summation in index order); per-ion snapshots are kept
    only when requested; the final per-ion state is always available.
    """

    times: np.ndarray
    mean_rho: np.ndarray
    labels: tuple[str, ...]
    n_ions: int
    final_rho: np.ndarray
    mean_abs_rho: np.ndarray | None = None
    snapshots: list[np.ndarray] | None = None

    def probe_index(self, time: float) -> int:
        idx = int(np.argmin(np.abs(self.times - time)))
        if abs(self.times[idx] - time) > 1e-12 + 1e-9 * max(1.0, abs(time)):
            raise ValueError(f"no probe recorded at t = {time}")
        return idx

    def _pair(self, pair):
        return tuple(self.labels.index(p) if isinstance(p, str) else int(p) for p in pair)

    def mean_coherence(self, probe, pair) -> complex:
        idx = probe if isinstance(probe, (int, np.integer)) else self.probe_index(probe)
        a, b = self._pair(pair)
        return complex(self.mean_rho[idx, a, b])

    def mean_population(self, probe, label) -> float:
        idx = probe if isinstance(probe, (int, np.integer)) else self.probe_index(probe)
        k = self.labels.index(label) if isinstance(label, str) else int(label)
        return float(self.mean_rho[idx, k, k].real)

    def coherence_series(self, pair) -> np.ndarray:
        a, b = self._pair(pair)
        return self.mean_rho[:, a, b]

    def abs_coherence_series(self, pair) -> np.ndarray:
        """Ensemble mean of |rho[pair]| -- the phase-insensitive stored
        excitation, which coherent rephasing can at best fully recover."""
        a, b = self._pair(pair)
        return self.mean_abs_rho[:, a, b]


def evolve_ensemble(
    register: LevelRegister,
    ions: list[IonState],
    timeline,
    decoherence: DecoherenceSpec | None = None,
    record=(),
    keep: str = "mean",
    local_error: float = 1e-8,
    jitter_rng: np.random.Generator | None = None,
) -> EnsembleTrajectory:
    """Evolve an ensemble through a timeline, snapshotting at probe times.

    Free segments are exact; pulse segments use the Magnus integrator.
    keep="full" additionally stores per-ion density matrices at every probe
    (memory scales as probes x ions x d^2, so reserve it for small runs).
    """
    rho, dets = _stack(ions)
    if timeline.clock_jitter > 0.0:
        if jitter_rng is None:
            raise ValueError("timeline has clock jitter enabled; a jitter_rng is required")
        timeline = timeline.with_jitter(jitter_rng)
    offsets = 2.0 * math.pi * dets @ register.detuning_weights.T
    probes = np.sort(np.asarray(list(record), dtype=float))
    span = timeline.total_span
    events = sorted(timeline.drive_pulses(), key=lambda p: p.start_time)
    # the execution clock may begin before zero (an input pulse centered at
    # t0 = 0 has support at negative times); nothing evolves before origin
    origin = min([0.0] + [p.start_time for p in events] + ([float(probes[0])] if probes.size else []))
    if probes.size and probes[-1] > span * (1 + 1e-12) + _TIME_EPS:
        raise ValueError("probe time outside the timeline span")
    for first, second in zip(events[:-1], events[1:]):
        if second.start_time < first.end_time - _TIME_EPS:
            raise ValueError(f"overlapping pulses at t = {second.start_time}")
    dec = decoherence
    rates = _coherence_rates(register, dec) if (dec is not None and dec.active) else None
    times_out: list[float] = []
    means: list[np.ndarray] = []
    means_abs: list[np.ndarray] = []
    fulls: list[np.ndarray] = []

    def snapshot(t: float):
        times_out.append(t)
        means.append(rho.mean(axis=0))
        means_abs.append(np.abs(rho).mean(axis=0))
        if keep == "full":
            fulls.append(rho.copy())

    state = {"cursor": origin, "p": 0}

    def advance_free_to(t_target: float):
        # free evolution with probe splits up to t_target
        while state["p"] < probes.size and probes[state["p"]] <= t_target + _TIME_EPS:
            t = float(probes[state["p"]])
            _free_segment(rho, offsets, t - state["cursor"], register, dec, rates)
            state["cursor"] = max(state["cursor"], t)
            snapshot(t)
            state["p"] += 1
        _free_segment(rho, offsets, t_target - state["cursor"], register, dec, rates)
        state["cursor"] = max(state["cursor"], t_target)

    for event in events:
        advance_free_to(event.start_time)
        inner = probes[(probes > event.start_time + _TIME_EPS) & (probes < event.end_time - _TIME_EPS)]

        def on_probe(t):
            snapshot(t)
            state["p"] += 1

        _run_pulse(rho, register, event, offsets, dec, local_error, inner, on_probe)
        state["cursor"] = max(state["cursor"], event.end_time)
    advance_free_to(span)
    return EnsembleTrajectory(
        times=np.asarray(times_out),
        mean_rho=np.asarray(means) if means else np.empty((0, register.dim, register.dim), dtype=complex),
        labels=register.labels,
        n_ions=len(ions),
        final_rho=rho,
        mean_abs_rho=np.asarray(means_abs) if means_abs else np.empty((0, register.dim, register.dim)),
        snapshots=fulls if keep == "full" else None,
    )


def evolve(
    ion: IonState,
    timeline,
    decoherence: DecoherenceSpec | None = None,
    record=(),
    register: LevelRegister | None = None,
    local_error: float = 1e-8,
) -> list[IonState]:
    """Single-ion evolution; returns IonState snapshots at the probe times.

    The register is required to interpret the density matrix and the pulse
    transitions.
    """
    if register is None:
        raise ValueError("a LevelRegister is required to interpret the density matrix")
    ion.validate()
    traj = evolve_ensemble(register, [ion], timeline, decoherence, record, keep="full", local_error=local_error)
    return [
        IonState(traj.snapshots[k][0], ion.optical_detuning, ion.spin_detuning, ion.ee_detuning)
        for k in range(len(traj.times))
    ]


def ensemble_mean_coherence(ions, probe=None, pair=(0, 1)) -> complex:
    """Arithmetic mean of rho[pair] over the ensemble.

    Accepts either a list of IonState (probe ignored) or an
    EnsembleTrajectory plus a probe time/index.
    """
    if isinstance(ions, EnsembleTrajectory):
        return ions.mean_coherence(probe, pair)
    if len(ions) == 0:
        raise ValueError("empty ensemble")
    a, b = pair
    values = np.array([ion.rho[a, b] for ion in ions])
    return complex(values.mean())
