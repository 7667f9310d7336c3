"""echomem: pulse-level simulation and analysis of long-lived photon-echo
quantum memories in rare-earth-ion doped crystals.

The package covers the full desk-scale pipeline: hyperfine level data and
four-level subsystem selection, adiabatic chirped-pulse synthesis, ensemble
density-matrix dynamics under timed pulse sequences, echo formation and
efficiency budgets, decay-law fitting, and photon-counting figures of merit.
"""

__version__ = "0.1.0"

from .levels import FourLevelSystem, LevelScheme, load_level_scheme, select_nlpe_levels, transition_frequency
from .pulses import ChsParams, PulseSpec, bandwidth_to_params, chs_axis_phase, chs_waveform
from .dynamics import DecoherenceSpec, EnsembleSpec, IonState, evolve, pulse_propagator, sample_ensemble
from .sequences import Timeline, Ur4Phases, build_chs_ur4, build_nlpe, build_nlpe_dd, ur4_phases
from .echo import EchoField, EfficiencyBudget, analytic_efficiency, emit_echo, microscopic_efficiency
from .models import DecayFit, NlpeFit, fit_mims, fit_nlpe_surface, fit_tail
from .photonstats import CountHistogram, QubitRun, classical_bound, crossover_mu, expected_fidelity, total_fidelity
