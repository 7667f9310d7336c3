"""Config ingestion: YAML documents describing the crystal, pulse presets,
ensemble, decoherence, and analysis references."""

from __future__ import annotations

import hashlib
import math
from importlib import resources
from pathlib import Path

import yaml

from .dynamics import DecoherenceSpec, EnsembleSpec
from .levels import FourLevelSystem, LevelScheme, load_level_scheme, select_nlpe_levels
from .pulses import PulseSpec, make_chs_pulse


class ConfigError(ValueError):
    """Malformed or missing configuration data."""


def default_config_text() -> str:
    return resources.files("echomem.data").joinpath("default_config.yaml").read_text()


def load_config(path: str | Path | None = None) -> dict:
    """Load a config document; None loads the shipped default."""
    text = default_config_text() if path is None else Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    return doc


def config_sha256(path: str | Path | None = None) -> str:
    text = default_config_text() if path is None else Path(path).read_text()
    return hashlib.sha256(text.encode()).hexdigest()


def scheme_from_config(cfg: dict) -> LevelScheme:
    try:
        return load_level_scheme(cfg["levels"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid level scheme: {exc}") from exc


def four_level_from_config(cfg: dict, scheme: LevelScheme | None = None) -> FourLevelSystem:
    scheme = scheme_from_config(cfg) if scheme is None else scheme
    pair = tuple(cfg["levels"].get("zefoz_pair", (3, 4)))
    return select_nlpe_levels(scheme, pair)


def pulse_preset(cfg: dict, name: str, four: FourLevelSystem) -> PulseSpec:
    """Build a control-pulse template from the config preset table."""
    presets = cfg.get("pulses", {}).get("presets", {})
    if name not in presets:
        raise ConfigError(f"unknown pulse preset {name!r}")
    entry = presets[name]
    g_low, g_high = four.ground_pair
    transitions = {
        "pi43": ((f"g{g_high}", f"e{four.signal_excited}"), "optical"),
        "pi32": ((f"g{g_low}", f"e{four.auxiliary_excited}"), "optical"),
        "rf_pi": ((f"g{g_low}", f"g{g_high}"), "spin"),
    }
    if name not in transitions:
        raise ConfigError(f"preset {name!r} has no assigned transition")
    transition, manifold = transitions[name]
    span = entry.get("chirp_span_hz")
    return make_chs_pulse(
        transition=transition,
        manifold=manifold,
        duration=float(entry["duration_s"]),
        bandwidth=float(entry["bandwidth_hz"]),
        omega0=float(entry["peak_rabi_rad_s"]),
        truncation=float(cfg["pulses"].get("truncation_sech_level", 0.01)),
        chirp_span=float(span) if span is not None else None,
    )


def all_presets(cfg: dict, four: FourLevelSystem) -> dict:
    return {name: pulse_preset(cfg, name, four) for name in ("pi43", "pi32", "rf_pi")}


def input_pulse(cfg: dict, four: FourLevelSystem) -> PulseSpec:
    entry = cfg.get("pulses", {}).get("input", {})
    g_low = four.ground_pair[0]
    return PulseSpec(
        shape="truncated_gaussian",
        start_time=0.0,
        duration=float(entry.get("duration_s", 3.0e-6)),
        transition=(f"g{g_low}", f"e{four.signal_excited}"),
        manifold="optical",
        nominal_area=float(entry.get("area_rad", 0.1)),
        fwhm=float(entry.get("fwhm_s", 1.5e-6)),
    )


def ensemble_from_config(cfg: dict, n_ions: int | None = None, seed: int | None = None) -> EnsembleSpec:
    entry = cfg.get("ensemble", {})
    return EnsembleSpec(
        n_ions=int(n_ions if n_ions is not None else entry.get("n_ions", 1000)),
        optical_fwhm=float(entry.get("optical_fwhm_hz", 0.0)),
        spin_fwhm=float(entry.get("spin_fwhm_hz", 0.0)),
        ee_fwhm=float(entry.get("ee_fwhm_hz", 0.0)),
        seed=int(seed if seed is not None else entry.get("seed", 0)),
    )


def decoherence_from_config(cfg: dict) -> DecoherenceSpec:
    entry = cfg.get("decoherence", {})
    lifetime = entry.get("excited_lifetime_s", math.inf)
    return DecoherenceSpec(
        optical_dephasing_rate=float(entry.get("optical_dephasing_rate", 0.0)),
        spin_dephasing_rate=float(entry.get("spin_dephasing_rate", 0.0)),
        excited_lifetime=float(lifetime) if lifetime is not None else math.inf,
    )


def nlpe_timings(cfg: dict) -> tuple[float, float, float, float, float]:
    centers = cfg.get("timings", {}).get("nlpe_centers_s", (0.0, 5.0e-6, 15.0e-6, 22.0e-6, 30.0e-6))
    if len(centers) != 5:
        raise ConfigError("timings.nlpe_centers_s must list five pulse centers")
    return tuple(float(t) for t in centers)
