"""Command-line front end.

Subcommands: pulse (inversion sweeps), memory (full protocol simulation),
fit (decay-law fitting), bounds (classical benchmark curves), and
init-profile (pumping rate equations).  Every command writes CSV/JSON
outputs plus a manifest (config hash, seed, versions) into --out; seeded
runs are byte-reproducible.  Exit codes: 0 ok, 2 config error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod
from .config import ConfigError
from .dynamics import (
    EnsembleSpec,
    nlpe_register,
    optical_register,
    pulse_propagator,
    sample_ensemble,
)
from .echo import (
    EfficiencyBudget,
    analytic_efficiency,
    microscopic_efficiency,
    run_echo_experiment,
    run_initialization_rate_equations,
)
from .levels import transition_frequency
from .models import fit_mims, fit_nlpe_surface, fit_tail, mims_curve
from .photonstats import (
    QubitRun,
    check_bound_convention,
    check_crossover_convention,
    classical_bound,
    crossover_mu,
    expected_fidelity,
    simulate_counts,
    snr,
)
from .pulses import adiabaticity_margin
from .sequences import build_initialization, build_nlpe, build_nlpe_dd


def _fmt(x) -> str:
    return repr(float(x))


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=True, default=_json_default) + "\n")


def write_manifest(out: Path, command: str, args: argparse.Namespace, extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "config_sha256": cfgmod.config_sha256(args.config),
        "seed": getattr(args, "seed", None),
        "parameters": {
            k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config", "out") and v is not None
        },
        "versions": {
            "echomem": __version__,
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
    }
    if extra:
        manifest.update(extra)
    write_json(out / "manifest.json", manifest)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def sweep_register(preset):
    """Two-level register on the preset's own transition; the swept
    detuning kind shifts the driven line."""
    from .dynamics import LevelRegister

    kinds = tuple("e" if lab.startswith("e") else "g" for lab in preset.transition)
    weight = [0.0, 0.0, 0.0]
    weight[0 if preset.manifold == "optical" else 1] = 1.0
    return LevelRegister(tuple(preset.transition), kinds, np.array([[0.0, 0.0, 0.0], weight]))


def cmd_pulse(args) -> int:
    cfg = cfgmod.load_config(args.config)
    four = cfgmod.four_level_from_config(cfg)
    preset = cfgmod.pulse_preset(cfg, args.preset, four)
    out = _out_dir(args)
    bandwidth = preset.bandwidth or preset.chs.sweep_bandwidth
    span = args.detuning_span if args.detuning_span is not None else 0.4 * bandwidth
    detunings = np.linspace(-span, span, args.points)
    amplitudes = [float(a) for a in args.amplitudes.split(",")]
    register = sweep_register(preset)
    rows = []
    worst = 1.0
    for amp in amplitudes:
        pulse = preset.scaled_amplitude(amp).at_center(preset.duration / 2)
        kind = 0 if preset.manifold == "optical" else 1
        dets = np.zeros((detunings.size, 3))
        dets[:, kind] = detunings
        u = pulse_propagator(register, pulse, dets)
        inversion = np.abs(u[:, 1, 0]) ** 2
        worst = min(worst, float(inversion.min()))
        rows += [(float(d), amp, float(i)) for d, i in zip(detunings, inversion)]
    write_csv(out / "inversion_sweep.csv", ["detuning_hz", "amplitude_scale", "inversion"], rows)
    report = {
        "preset": args.preset,
        "bandwidth_hz": bandwidth,
        "chirp_span_hz": preset.chs.sweep_bandwidth,
        "detuning_span_hz": float(span),
        "amplitude_scales": amplitudes,
        "min_inversion": worst,
        "adiabaticity_margin": adiabaticity_margin(preset.chs) if preset.chs.omega0 > 0 else None,
        "identity_pulse": preset.chs.omega0 == 0.0,
    }
    write_json(out / "pulse_report.json", report)
    write_manifest(out, "pulse", args)
    if args.plot:
        from . import plotting

        plotting.plot_pulse_sweep(out)
    return 0


def cmd_memory(args) -> int:
    cfg = cfgmod.load_config(args.config)
    scheme = cfgmod.scheme_from_config(cfg)
    four = cfgmod.four_level_from_config(cfg, scheme)
    presets = cfgmod.all_presets(cfg, four)
    signal = cfgmod.input_pulse(cfg, four)
    out = _out_dir(args)
    timings = cfgmod.nlpe_timings(cfg)
    tcfg = cfg.get("timings", {})
    tau = args.tau if args.tau is not None else float(tcfg.get("dd_tau_s", 1.4))
    n_pulses = args.n_pulses if args.n_pulses is not None else int(tcfg.get("dd_n_pulses", 4))
    delta = args.delta if args.delta is not None else float(tcfg.get("dd_delta_rad", 0.0))
    if args.protocol == "nlpe":
        timeline = build_nlpe(timings, presets, signal=signal)
    else:
        timeline = build_nlpe_dd(timings, presets, tau=tau, n_pulses=n_pulses, delta=delta, signal=signal)
    report: dict = {
        "protocol": args.protocol,
        "echo_time_s": timeline.echo_time,
        "pulse_count": len(timeline.pulses),
    }
    init_cfg = cfg.get("initialization", {})
    if not args.skip_init:
        init_tl = build_initialization(
            scheme,
            reps=tuple(init_cfg.get("reps", (100, 80, 80))),
            pulse_duration=float(init_cfg.get("pulse_duration_s", 1e-3)),
            cleaning_bandwidth=float(init_cfg.get("cleaning_bandwidth_hz", 3e6)),
            backpump_bandwidth=float(init_cfg.get("backpump_bandwidth_hz", 0.8e6)),
        )
        profile = run_initialization_rate_equations(
            scheme, init_tl, pump_rate=float(init_cfg.get("pump_rate", 5e3))
        )
        center = transition_frequency(scheme, four.ground_pair[0], four.signal_excited)
        metrics = profile.feature_metrics(center)
        report["initialization"] = {
            "duration_s": init_tl.total_span,
            "feature_width_hz": metrics["feature_width"],
            "transparency_window_hz": metrics["window_span"],
        }
        write_csv(
            out / "absorption_profile.csv",
            ["detuning_hz", "alpha"],
            zip((profile.frequencies - center).tolist(), profile.absorption.tolist()),
        )
    ens_spec = cfgmod.ensemble_from_config(cfg, n_ions=args.ions, seed=args.seed)
    register = nlpe_register(four, scheme)
    ions = sample_ensemble(ens_spec, register)
    decoherence = cfgmod.decoherence_from_config(cfg)
    field, _ = run_echo_experiment(
        register, ions, timeline, decoherence, optical_fwhm=ens_spec.optical_fwhm
    )
    write_csv(
        out / "echo_field.csv",
        ["t_s", "re", "im", "abs2"],
        [
            (float(t), float(a.real), float(a.imag), float(abs(a) ** 2))
            for t, a in zip(field.times, field.amplitude)
        ],
    )
    eta_micro = microscopic_efficiency(field)
    eff_cfg = cfg.get("efficiency", {})
    t31 = timeline.pulses[-2].center - timeline.pulses[0].center
    t42 = timeline.pulses[-1].center - timeline.pulses[-3].center
    budget = EfficiencyBudget(
        d=float(eff_cfg.get("absorption_depth", 1.0)),
        eta_control=float(eff_cfg.get("control_transfer", 0.82)),
        gamma=float(cfg.get("decoherence", {}).get("optical_dephasing_rate", 0.0)),
        gamma34=ens_spec.spin_fwhm,
        gamma23bar=ens_spec.ee_fwhm,
        t31=t31,
        t42=t42,
        heating_penalty=float(eff_cfg.get("heating_penalty", 1.0)),
    )
    d = budget.d
    absorption_factor = d * d * np.exp(-d)
    report["efficiency"] = {
        "microscopic": eta_micro,
        "analytic_budget": analytic_efficiency(budget),
        "absorption_factor": float(absorption_factor),
        "microscopic_times_absorption": float(eta_micro * absorption_factor * budget.heating_penalty),
        "t31_s": t31,
        "t42_s": t42,
        "echo_peak_time_s": field.peak_time,
    }
    if args.counting:
        det_cfg = cfg.get("detection", {})
        ana = cfg.get("analysis", {})
        mu = args.mu if args.mu is not None else float(ana.get("mu_snr", 1.18))
        window = float(det_cfg.get("window_s", 2.1e-6))
        noise = float(det_cfg.get("noise_per_window", 0.0))
        n_trials = int(ana.get("n_trials", 35000))
        efficiency = float(report["efficiency"]["microscopic_times_absorption"])
        run = QubitRun("e", mu, min(efficiency, 1.0), noise, n_trials)
        t_e = timeline.echo_time
        edges = np.array([t_e - 1.5 * window, t_e - 0.5 * window, t_e + 0.5 * window, t_e + 1.5 * window])
        probs = np.array([0.0, mu * efficiency, 0.0])
        hist = simulate_counts(run, probs, edges, windows={"signal": (t_e - window / 2, window)}, seed=args.seed)
        write_csv(
            out / "counts.csv",
            ["bin_start_s", "bin_end_s", "counts"],
            [
                (float(a), float(b), int(c))
                for a, b, c in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts)
            ],
        )
        expected_noise = noise * n_trials
        result = snr(hist, "signal", expected_noise)
        report["counting"] = {
            "mu": mu,
            "n_trials": n_trials,
            "snr": result.snr,
            "snr_sigma": result.sigma,
            "snr_from_efficiency_over_noise_fraction": (
                efficiency / noise if noise > 0 else None
            ),
        }
    write_json(out / "memory_report.json", report)
    write_manifest(out, "memory", args)
    if args.plot:
        from . import plotting

        plotting.plot_memory(out)
    return 0


def _read_csv(path: Path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row:
                continue
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                continue  # header
    if not rows:
        raise ConfigError(f"no numeric rows in {path}")
    return np.asarray(rows)


def cmd_fit(args) -> int:
    out = _out_dir(args)
    data = _read_csv(Path(args.data))
    if args.model in ("mims", "mims_tail"):
        if args.model == "mims":
            fit = fit_mims(data, model_power=args.model_power)
        else:
            fit = fit_tail(data, t_min=args.t_min, model_power="intensity")
        report = {
            "model": args.model,
            "model_power": args.model_power if args.model == "mims" else "intensity",
            "t2_s": fit.t2,
            "m": fit.m,
            "amplitude": fit.amplitude,
            "covariance": fit.covariance.tolist(),
            "residual_norm": fit.residual_norm,
        }
        grid = np.linspace(data[:, 0].min(), data[:, 0].max(), 200)
        power = args.model_power if args.model == "mims" else "intensity"
        write_csv(
            out / "fit_curve.csv",
            ["t_s", "value"],
            zip(grid.tolist(), mims_curve(grid, fit.amplitude, fit.t2, fit.m, power).tolist()),
        )
    else:
        fixed = {"d": args.d}
        fit = fit_nlpe_surface(data, fixed)
        report = {
            "model": "nlpe_surface",
            "gamma34_hz": fit.gamma34,
            "gamma23bar_hz": fit.gamma23bar,
            "gamma_opt_per_s": fit.gamma_opt,
            "eta_control": fit.eta_control,
            "covariance": fit.covariance.tolist(),
            "residual_norm": fit.residual_norm,
        }
    write_json(out / "fit_report.json", report)
    write_manifest(out, "fit", args)
    if args.plot:
        from . import plotting

        plotting.plot_fit(out, Path(args.data))
    return 0


def cmd_bounds(args) -> int:
    cfg = cfgmod.load_config(args.config)
    ana = cfg.get("analysis", {})
    det = cfg.get("detection", {})
    eta = args.eta if args.eta is not None else float(ana.get("efficiency_reference", 0.082))
    noise = args.noise if args.noise is not None else float(det.get("noise_per_window", 0.0086))
    out = _out_dir(args)
    if args.mu is not None:
        grid = np.array([args.mu])
    else:
        grid = np.linspace(args.mu_min, args.mu_max, args.mu_steps)
    rows = [(float(m), classical_bound(m, eta), expected_fidelity(m, eta, noise)) for m in grid]
    write_csv(out / "bounds_curve.csv", ["mu_q", "classical_bound", "expected_fidelity"], rows)
    report = {"eta": eta, "noise_per_window": noise}
    try:
        report["crossover_mu"] = crossover_mu(eta, noise)
        report["crossover_flag"] = None
    except ValueError:
        report["crossover_mu"] = None
        report["crossover_flag"] = "no_crossing_in_range"
    bound_ref = ana.get("classical_bound_reference")
    if bound_ref is not None:
        check = check_bound_convention(float(ana.get("mu_q", 1.16)), eta, float(bound_ref))
        report["bound_convention"] = {
            "computed": check.computed,
            "reference": check.reference,
            "discrepant": check.discrepant,
        }
    cross_ref = ana.get("crossover_reference")
    if cross_ref is not None and report["crossover_mu"] is not None:
        check = check_crossover_convention(eta, noise, float(cross_ref))
        report["crossover_convention"] = {
            "computed": check.computed,
            "reference": check.reference,
            "discrepant": check.discrepant,
        }
    write_json(out / "bounds_report.json", report)
    write_manifest(out, "bounds", args)
    if args.plot:
        from . import plotting

        plotting.plot_bounds(out)
    return 0


def cmd_init_profile(args) -> int:
    cfg = cfgmod.load_config(args.config)
    scheme = cfgmod.scheme_from_config(cfg)
    four = cfgmod.four_level_from_config(cfg, scheme)
    init_cfg = cfg.get("initialization", {})
    out = _out_dir(args)
    timeline = build_initialization(
        scheme,
        reps=tuple(init_cfg.get("reps", (100, 80, 80))),
        pulse_duration=float(init_cfg.get("pulse_duration_s", 1e-3)),
        cleaning_bandwidth=float(init_cfg.get("cleaning_bandwidth_hz", 3e6)),
        backpump_bandwidth=float(init_cfg.get("backpump_bandwidth_hz", 0.8e6)),
    )
    profile = run_initialization_rate_equations(
        scheme, timeline, pump_rate=float(init_cfg.get("pump_rate", 5e3))
    )
    center = transition_frequency(scheme, four.ground_pair[0], four.signal_excited)
    metrics = profile.feature_metrics(center)
    write_csv(
        out / "absorption_profile.csv",
        ["detuning_hz", "alpha"],
        zip((profile.frequencies - center).tolist(), profile.absorption.tolist()),
    )
    write_json(
        out / "init_report.json",
        {
            "sequence_duration_s": timeline.total_span,
            "pulse_count": len(timeline.pulses),
            "feature_width_hz": metrics["feature_width"],
            "transparency_window_hz": metrics["window_span"],
            "feature_center_hz": center,
        },
    )
    write_manifest(out, "init-profile", args)
    if args.plot:
        from . import plotting

        plotting.plot_absorption(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="echomem", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_required=False):
        p.add_argument("--config", default=None, help="config YAML (default: shipped)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, required=seed_required, help="run seed")
        p.add_argument("--plot", action="store_true", help="render figures next to the CSV output")

    p = sub.add_parser("pulse", help="inversion-vs-detuning sweep of a pulse preset")
    common(p)
    p.add_argument("--preset", required=True)
    p.add_argument("--detuning-span", type=float, default=None, help="half-span in Hz (default 0.4 x bandwidth)")
    p.add_argument("--points", type=int, default=41)
    p.add_argument("--amplitudes", default="0.9,1.0,1.1", help="comma-separated amplitude scales")
    p.set_defaults(func=cmd_pulse)

    p = sub.add_parser("memory", help="simulate a storage protocol end to end")
    common(p, seed_required=True)
    p.add_argument("--protocol", choices=("nlpe", "nlpe_dd"), default="nlpe")
    p.add_argument("--ions", type=int, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--n-pulses", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--counting", action="store_true", help="add a photon-counting histogram")
    p.add_argument("--mu", type=float, default=None, help="mean photon number for counting")
    p.add_argument("--skip-init", action="store_true", help="skip the rate-equation initialization")
    p.set_defaults(func=cmd_memory)

    p = sub.add_parser("fit", help="fit a decay law to CSV data")
    common(p)
    p.add_argument("--model", choices=("mims", "mims_tail", "nlpe_surface"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--model-power", choices=("amplitude", "intensity"), default="amplitude")
    p.add_argument("--t-min", type=float, default=15.0)
    p.add_argument("--d", type=float, default=1.0, help="absorption depth for the surface model")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bounds", help="classical bound and expected fidelity vs mu_q")
    common(p)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--mu", type=float, default=None, help="evaluate a single mu_q")
    p.add_argument("--mu-min", type=float, default=0.05)
    p.add_argument("--mu-max", type=float, default=3.0)
    p.add_argument("--mu-steps", type=int, default=60)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("init-profile", help="rate-equation pumping and the absorption feature")
    common(p)
    p.set_defaults(func=cmd_init_profile)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
