"""Command-line front end: ``tricascade simulate|correlate|spectrum|rabi|report``.

Exit codes: 0 success, 2 usage, 3 configuration, 4 tag format, 5 tag data,
6 fit failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__, cascade, correlate, detectors, levels, rabi, svg
from .config import dump_config, load_config, to_dict
from .errors import ConfigError, TagDataError, TricascadeError
from .tagio import read_tags, write_tags


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_sidecar(output, config, command, extra=None):
    """Provenance next to ``output``: full config, seed, tool version, checksum."""
    side = {
        "tool": "tricascade",
        "version": __version__,
        "command": command,
        "seed": config.seed,
        "config": to_dict(config),
        "sha256": _sha256(output),
        **(extra or {}),
    }
    with open(output + ".json", "w") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _replace_nested(config, section, **changes):
    changes = {k: v for k, v in changes.items() if v is not None}
    if not changes:
        return config
    try:
        return dataclasses.replace(config, **{section: dataclasses.replace(getattr(config, section), **changes)})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _parse_ints(text):
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _simulate_tags(config):
    sim = config.simulation
    if sim.method == "full":
        blocks = cascade.simulate_blocks(config.model, config.excitation, config.seed, workers=sim.workers)
        return detectors.detect(blocks, list(config.channels), config.seed, config.excitation.duration_ps)
    return detectors.sample_detected_tags(
        config.model, config.excitation, list(config.channels), config.seed,
        min_detections=sim.min_detections, workers=sim.workers,
    )


def cmd_simulate(args, config):
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    config = _replace_nested(config, "excitation", duration_s=args.duration_s)
    config = _replace_nested(config, "simulation", method=args.method, workers=args.threads)
    tags = _simulate_tags(config)
    out = args.out or os.path.join(config.output_dir, "tags.ttg" if args.format == "bin" else "tags.csv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    write_tags(out, tags, args.format)
    write_sidecar(out, config, "simulate", {
        "duration_ps": config.excitation.duration_ps,
        "n_tags": len(tags),
        "counts_per_channel": tags.counts().tolist(),
    })
    print(f"wrote {len(tags)} tags to {out}")
    return out


def _load_duration(tagfile):
    side = tagfile + ".json"
    if os.path.exists(side):
        with open(side) as fh:
            return json.load(fh).get("duration_ps")
    return None


def _correlate(tags, config, out_dir, oracle=False, threads=1, period_ps=None):
    an = config.analysis
    a, b, c = an.channels
    for ch in an.channels:
        if ch >= tags.n_channels or not np.any(tags.channels == ch):
            raise TagDataError(f"channel {ch} has no tags in the input")
    os.makedirs(out_dir, exist_ok=True)
    summary = {"n_tags": len(tags), "observation_s": tags.observation_ps * 1e-12, "channels": list(an.channels)}
    summary["singles_rates_Hz"] = {
        str(ch): float(np.sum(tags.channels == ch) / (tags.observation_ps * 1e-12)) for ch in an.channels
    }
    files = []
    for x, y in ((a, b), (a, c), (b, c)):
        h = correlate.g2(tags, x, y, an.binning, threads=threads, oracle=oracle)
        path = os.path.join(out_dir, f"g2_{x}{y}.csv")
        correlate.write_hist1d(path, h)
        files.append(path)
    h3 = correlate.g3(tags, (a, b, c), an.binning, an.g3_binning, threads=threads, oracle=oracle)
    path = os.path.join(out_dir, "g3.csv")
    correlate.write_hist2d(path, h3, skip_empty=h3.raw_counts.size > 250_000)
    files.append(path)
    for axis, name in ((2, f"g2_{a}{b}_from_g3.csv"), (1, f"g2_{a}{c}_from_g3.csv")):
        path = os.path.join(out_dir, name)
        correlate.write_hist1d(path, correlate.marginalize_g3(h3, axis))
        files.append(path)
    period = period_ps or config.excitation.period_ps
    counts = correlate.count_events(tags, an.count_window_ps, period, an.channels, threads=threads)
    summary["event_counts"] = dataclasses.asdict(counts)
    summary["two_photon_fraction"] = counts.two_photon_fraction
    summary["three_photon_events"] = counts.N123
    try:
        eff = correlate.estimate_efficiency(counts)
        summary["efficiency"] = {"eta": eff.eta.tolist(), "standard_error": eff.standard_error.tolist()}
    except TricascadeError as exc:
        summary["efficiency"] = {"error": str(exc)}
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    files.append(path)
    return summary, files


def cmd_correlate(args, config):
    an = config.analysis
    binning = an.binning
    if args.window_ps is not None or args.bin_ps is not None:
        w = args.window_ps if args.window_ps is not None else binning.tau_max_ps
        bw = args.bin_ps if args.bin_ps is not None else binning.bin_width_ps
        binning = correlate.BinningSpec.symmetric(w, bw)
        config = _replace_nested(config, "analysis", binning=binning, g3_binning=binning)
    if args.channels:
        ch = _parse_ints(args.channels)
        if len(ch) == 2:
            ch = (*ch, ch[-1])
        if len(ch) != 3:
            raise ConfigError("--channels takes two or three channel indices")
        config = _replace_nested(config, "analysis", channels=ch)
    tags = read_tags(args.tagfile, fmt=args.format)
    tags.duration_ps = _load_duration(args.tagfile)
    out_dir = args.out_dir or os.path.join(config.output_dir, "correlate")
    threads = args.threads or config.analysis.threads
    if len(set(config.analysis.channels)) == 2:
        return _correlate_pair(tags, config, out_dir, args.oracle, threads)
    summary, _ = _correlate(tags, config, out_dir, oracle=args.oracle, threads=threads)
    print(json.dumps({k: summary[k] for k in ("n_tags", "three_photon_events", "two_photon_fraction", "efficiency")}, indent=2))
    return summary


def _correlate_pair(tags, config, out_dir, oracle, threads):
    a, b = config.analysis.channels[:2]
    os.makedirs(out_dir, exist_ok=True)
    h = correlate.g2(tags, a, b, config.analysis.binning, threads=threads, oracle=oracle)
    correlate.write_hist1d(os.path.join(out_dir, f"g2_{a}{b}.csv"), h)
    print(f"g2({a},{b}): {int(h.raw_counts.sum())} coincidences")
    return {"pairs": int(h.raw_counts.sum())}


def spectrum_table(config, polarizer=None):
    lv = levels.build_triexciton_levels(config.levels)
    lines = levels.indirect_transition_table(lv, config.levels)
    if config.spectrum.include_direct:
        lines = levels.direct_transition_table(lv, config.levels) + lines
    if polarizer is not None:
        pol = levels.Polarization(polarizer)
        lines = [ln for ln in lines if ln.polarization in (pol, levels.Polarization.UNPOLARIZED)]
    return lines


def cmd_spectrum(args, config):
    config = _replace_nested(config, "spectrum", broadening_ueV=args.broadening_ueV)
    sp = config.spectrum
    lines = spectrum_table(config, args.polarizer)
    grid = np.linspace(sp.e_min_meV, sp.e_max_meV, sp.n_points)
    ih = levels.render_spectrum(lines, "H", sp.broadening_ueV, grid, sp.profile)
    iv = levels.render_spectrum(lines, "V", sp.broadening_ueV, grid, sp.profile)
    out = args.out or os.path.join(config.output_dir, "spectrum.csv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    with open(out, "w") as fh:
        fh.write("energy_meV,intensity_H,intensity_V\n")
        np.savetxt(fh, np.column_stack([grid, ih, iv]), fmt="%.6f,%.9g,%.9g")
    write_sidecar(out, config, "spectrum")
    if args.svg:
        svg.line_plot(os.path.splitext(out)[0] + ".svg", grid, [ih, iv], ("H", "V"), "photon energy (meV)", "intensity")
    peaks = levels.spectral_peaks(grid, ih + iv)
    print(f"wrote {out}; {len(peaks)} resolved features at " + ", ".join(f"{p:.3f}" for p in peaks) + " meV")
    return out, peaks


def cmd_rabi(args, config):
    if args.powers:
        try:
            powers = tuple(float(p) for p in args.powers.split(","))
        except ValueError:
            raise ConfigError(f"bad --powers {args.powers!r}") from None
        config = _replace_nested(config, "rabi", powers_uW=powers)
    config = _replace_nested(config, "rabi", cycles_per_point=args.cycles_per_point)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    rb = config.rabi
    powers = np.asarray(rb.powers_uW, dtype=float)
    if powers.size < 5:
        raise ConfigError(f"need at least 5 powers for a Rabi fit, got {powers.size}")
    exc = config.excitation
    if args.noiseless:
        intensity = np.array([cascade.prepare_population(exc.with_third_pulse_power(p).pulse_areas_rad) for p in powers])
    else:
        intensity = rabi.simulate_rabi_curve(config.model, exc, powers, rb.cycles_per_point, config.seed, rb.accepted_lines)
    fit = rabi.rabi_fit(powers, intensity)
    out = args.out or os.path.join(config.output_dir, "rabi.csv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    with open(out, "w") as fh:
        fh.write("power_uW,intensity,fit\n")
        model = rabi.rabi_model(powers, fit.amplitude, fit.pi_power_uW, fit.damping)
        np.savetxt(fh, np.column_stack([powers, intensity, model]), fmt="%.6g", delimiter=",")
    write_sidecar(out, config, "rabi", {"fit": dataclasses.asdict(fit)})
    if args.svg:
        svg.line_plot(os.path.splitext(out)[0] + ".svg", powers, [intensity, model], ("simulated", "fit"),
                      "third-pulse power (uW)", "XXX intensity")
    print(f"P_pi = {fit.pi_power_uW:.4g} uW (configured {exc.pi_power_uW:.4g}), amplitude {fit.amplitude:.4g}, damping {fit.damping:.3g}")
    return fit


def cmd_report(args, config):
    out_dir = args.out_dir or config.output_dir
    config = dataclasses.replace(config, output_dir=out_dir)
    os.makedirs(out_dir, exist_ok=True)
    dump_config(config, os.path.join(out_dir, "config.yaml"))
    ns = argparse.Namespace
    tagfile = cmd_simulate(ns(seed=args.seed, duration_s=None, method=None, threads=None,
                              out=os.path.join(out_dir, "tags.ttg"), format="bin"), config)
    tags = read_tags(tagfile)
    tags.duration_ps = _load_duration(tagfile)
    summary, _ = _correlate(tags, config, os.path.join(out_dir, "correlate"), threads=config.analysis.threads)
    _, peaks = cmd_spectrum(ns(broadening_ueV=None, polarizer=None, out=os.path.join(out_dir, "spectrum.csv"), svg=True), config)
    fit = cmd_rabi(ns(powers=None, cycles_per_point=None, seed=args.seed, noiseless=False,
                      out=os.path.join(out_dir, "rabi.csv"), svg=True), config)
    report = {
        "tags": summary["n_tags"],
        "three_photon_events": summary["three_photon_events"],
        "two_photon_fraction": summary["two_photon_fraction"],
        "efficiency": summary["efficiency"],
        "configured_efficiency": [ch.efficiency for ch in config.channels],
        "spectrum_features_meV": [float(p) for p in peaks],
        "rabi_fit": dataclasses.asdict(fit),
        "configured_pi_power_uW": config.excitation.pi_power_uW,
    }
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(f"report written to {path}")
    return report


def build_parser():
    p = argparse.ArgumentParser(prog="tricascade", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"tricascade {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML/JSON run configuration")
        return sp

    s = common(sub.add_parser("simulate", help="simulate the cascade and write a tag file"))
    s.add_argument("--seed", type=int)
    s.add_argument("--duration-s", type=float)
    s.add_argument("--method", choices=("sampled", "full"))
    s.add_argument("--threads", type=int)
    s.add_argument("--format", choices=("bin", "csv"), default="bin")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    s = common(sub.add_parser("correlate", help="g2, g3, marginals, event counts and efficiencies"))
    s.add_argument("tagfile")
    s.add_argument("--window-ps", type=int)
    s.add_argument("--bin-ps", type=int)
    s.add_argument("--channels", help="i,j[,k]")
    s.add_argument("--oracle", action="store_true", help="use the brute-force kernels")
    s.add_argument("--format", choices=("auto", "bin", "csv"), default="auto")
    s.add_argument("--threads", type=int)
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_correlate)

    s = common(sub.add_parser("spectrum", help="polarization-resolved triexciton spectrum"))
    s.add_argument("--broadening-ueV", type=float)
    s.add_argument("--polarizer", choices=("H", "V"))
    s.add_argument("--svg", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_spectrum)

    s = common(sub.add_parser("rabi", help="simulated XXX intensity versus third-pulse power, with fit"))
    s.add_argument("--powers", help="comma-separated powers in uW")
    s.add_argument("--cycles-per-point", type=int)
    s.add_argument("--noiseless", action="store_true", help="use the analytic population instead of simulation")
    s.add_argument("--seed", type=int)
    s.add_argument("--svg", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_rabi)

    s = common(sub.add_parser("report", help="simulate, correlate, spectrum and Rabi in one go"))
    s.add_argument("--seed", type=int)
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        args.func(args, config)
    except TricascadeError as exc:
        print(f"tricascade: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
