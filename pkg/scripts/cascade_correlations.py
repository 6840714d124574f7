"""Two- and three-photon correlations of the simulated cascade.

Writes g2 for the three channel pairs, the g3 map, its marginals and SVG
cuts to --out, and prints the bunching/antibunching pattern per pair.
"""

import argparse
import os

import numpy as np

from tricascade import correlate, detectors, svg
from tricascade.cascade import CascadeModel, ExcitationConfig
from tricascade.correlate import BinningSpec
from tricascade.detectors import DetectorChannel


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration-s", type=float, default=0.3)
    ap.add_argument("--efficiency", type=float, default=0.1)
    ap.add_argument("--x-lifetime-ns", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="out/correlations")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    model = CascadeModel(radiative_rates_per_ns={"X": 1 / args.x_lifetime_ns})
    exc = ExcitationConfig(duration_s=args.duration_s)
    eta = args.efficiency
    chans = [
        DetectorChannel(("XXX_bright_indirect", "XXX_direct"), eta, 400.0, 100.0),
        DetectorChannel(("XX",), eta, 400.0, 100.0),
        DetectorChannel(("X",), eta, 400.0, 100.0),
    ]
    tags = detectors.sample_detected_tags(model, exc, chans, args.seed)
    print(f"{len(tags)} tags, per channel {tags.counts().tolist()}")

    b = BinningSpec(400, -20_000, 20_000)
    names = {0: "XXX", 1: "XX", 2: "X"}
    for x, y in ((0, 1), (0, 2), (1, 2)):
        h = correlate.g2(tags, x, y, b)
        correlate.write_hist1d(os.path.join(args.out, f"g2_{x}{y}.csv"), h)
        c = b.centers
        near = np.abs(c) < 3000
        pos = h.g2[near & (c > 0)].mean()
        neg = h.g2[near & (c < 0)].mean()
        print(f"g2 {names[x]}-{names[y]}: mean over (0, 3 ns) {pos:.2f}, over (-3 ns, 0) {neg:.2f}, "
              f"side peaks {h.g2[np.abs(np.abs(c) - exc.period_ps) < 1000].mean():.2f}")
        svg.line_plot(os.path.join(args.out, f"g2_{x}{y}.svg"), c / 1000, [h.g2], (f"{names[x]}-{names[y]}",),
                      "tau (ns)", "g2")

    h3 = correlate.g3(tags, (0, 1, 2), b, b)
    correlate.write_hist2d(os.path.join(args.out, "g3.csv"), h3)
    i0 = np.argmin(np.abs(b.centers - 1000))
    print(f"g3 peak {h3.g3.max():.1f} at (tau_tb, tau_te) = "
          f"{tuple(float(b.centers[k]) for k in np.unravel_index(np.argmax(h3.g3), h3.g3.shape))} ps")
    svg.line_plot(os.path.join(args.out, "g3_cut.svg"), b.centers / 1000, [h3.g3[i0]], ("tau_tb ~ 1 ns",),
                  "tau_te (ns)", "g3")

    wide = BinningSpec(4000, -2_000_000, 2_000_000)
    for axis, (b1, b2), pair in ((2, (b, wide), (0, 1)), (1, (wide, b), (0, 2))):
        m = correlate.marginalize_g3(correlate.g3(tags, (0, 1, 2), b1, b2), axis)
        direct = correlate.g2(tags, *pair, b)
        err = np.sqrt(m.poisson_error ** 2 + direct.poisson_error ** 2)
        z = np.abs(m.g2 - direct.g2)[err > 0] / err[err > 0]
        correlate.write_hist1d(os.path.join(args.out, f"g2_{pair[0]}{pair[1]}_from_g3.csv"), m)
        print(f"marginal of g3 vs direct g2 {pair}: max |z| = {z.max():.2f}")
    counts = correlate.count_events(tags, 10_000, exc.period_ps)
    print(f"clusters: N12={counts.N12} N13={counts.N13} N23={counts.N23} N123={counts.N123}")


if __name__ == "__main__":
    main()
