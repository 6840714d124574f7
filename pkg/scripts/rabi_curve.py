"""Triexciton intensity versus third-pulse power, simulated and fitted."""

import argparse
import os

import numpy as np

from tricascade import cascade, rabi, svg
from tricascade.cascade import CascadeModel, ExcitationConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pi-power-uw", type=float, default=10.0)
    ap.add_argument("--cycles-per-point", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="out/rabi")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    exc = ExcitationConfig(pi_power_uW=args.pi_power_uw)
    powers = np.linspace(0, 9 * args.pi_power_uw, 46)
    clean = np.array([cascade.prepare_population(exc.with_third_pulse_power(p).pulse_areas_rad) for p in powers])
    noisy = rabi.simulate_rabi_curve(CascadeModel(), exc, powers, args.cycles_per_point, args.seed, ("XXX_i",))
    for label, y in (("population", clean), ("simulated XXX_i", noisy)):
        fit = rabi.rabi_fit(powers, y)
        print(f"{label:>16}: P_pi = {fit.pi_power_uW:.3f} uW ({100 * (fit.pi_power_uW / args.pi_power_uw - 1):+.2f}%), "
              f"A = {fit.amplitude:.3f}, damping = {fit.damping:.2g}")
    fit = rabi.rabi_fit(powers, noisy)
    model = rabi.rabi_model(powers, fit.amplitude, fit.pi_power_uW, fit.damping)
    np.savetxt(os.path.join(args.out, "rabi.csv"), np.column_stack([powers, clean, noisy, model]),
               delimiter=",", header="power_uW,population,intensity,fit", comments="", fmt="%.6g")
    svg.line_plot(os.path.join(args.out, "rabi.svg"), powers, [noisy, model], ("simulated", "fit"),
                  "third-pulse power (uW)", "XXX_i photons per cycle")


if __name__ == "__main__":
    main()
