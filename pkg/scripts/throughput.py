"""g2 and g3 histogramming speed on Poisson streams, serial and threaded."""

import argparse
import time

import numpy as np

from tricascade import correlate
from tricascade.correlate import BinningSpec
from tricascade.tagio import TagStream


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--tags", type=float, default=1e7)
    ap.add_argument("--rate-hz", type=float, default=1e6, help="per-channel rate")
    ap.add_argument("--window-ps", type=int, default=200_000)
    ap.add_argument("--bin-ps", type=int, default=400)
    ap.add_argument("--threads", type=int, nargs="+", default=[1, 2, 4, 8])
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    per = int(args.tags / 2)
    T = int(per / args.rate_hz * 1e12)
    tags = TagStream.from_channels([np.sort(rng.integers(0, T, per)) for _ in range(2)], duration_ps=T)
    b = BinningSpec.symmetric(args.window_ps, args.bin_ps)
    correlate.g2(TagStream.from_channels([[0], [1]]), 0, 1, b)
    ref = None
    for th in args.threads:
        t0 = time.perf_counter()
        h = correlate.g2(tags, 0, 1, b, threads=th)
        dt = time.perf_counter() - t0
        same = ref is None or np.array_equal(ref, h.raw_counts)
        ref = h.raw_counts if ref is None else ref
        print(f"g2  {len(tags):.2e} tags, {th} threads: {dt:.2f} s ({len(tags) / dt / 1e6:.1f} Mtags/s), "
              f"{int(h.raw_counts.sum())} pairs, identical={same}")
    small = TagStream.from_channels([c[: per // 10] for c in (tags.channel(0), tags.channel(1), tags.channel(0) + 7)],
                                    duration_ps=T // 10)
    t0 = time.perf_counter()
    h3 = correlate.g3(small, (0, 1, 2), b)
    print(f"g3  {len(small):.2e} tags, {h3.raw_counts.size} cells: {time.perf_counter() - t0:.2f} s")


if __name__ == "__main__":
    main()
