"""Second- and third-order intensity correlations of time-tag streams.

Photon-counting estimators: raw coincidence histograms are normalized by
the accidental expectation built from the singles rates, e.g. for g2 the
expected pair count per bin is ``r_a * r_b * T * bin_width``.  Counting is
multi-stop: every pair (or triple) within the window contributes.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, EfficiencyError, NormalizationError

MAX_BINS = 1 << 20


@dataclass(frozen=True)
class BinningSpec:
    bin_width_ps: int = 400
    tau_min_ps: int = -200_000
    tau_max_ps: int = 200_000

    def __post_init__(self):
        if int(self.bin_width_ps) != self.bin_width_ps or self.bin_width_ps <= 0:
            raise ConfigError("bin_width_ps must be a positive integer")
        if not self.tau_min_ps < self.tau_max_ps:
            raise ConfigError("tau_min_ps must be < tau_max_ps")
        if (self.tau_max_ps - self.tau_min_ps) % self.bin_width_ps:
            raise ConfigError("histogram range must be a whole number of bins")
        if self.n_bins > MAX_BINS:
            raise ConfigError(f"{self.n_bins} bins exceeds the cap of {MAX_BINS}")

    @property
    def n_bins(self):
        return (self.tau_max_ps - self.tau_min_ps) // self.bin_width_ps

    @property
    def edges(self):
        return self.tau_min_ps + self.bin_width_ps * np.arange(self.n_bins + 1, dtype=np.int64)

    @property
    def centers(self):
        return self.tau_min_ps + self.bin_width_ps * (np.arange(self.n_bins) + 0.5)

    @classmethod
    def symmetric(cls, window_ps, bin_width_ps):
        return cls(int(bin_width_ps), -int(window_ps), int(window_ps))


@dataclass
class Hist1D:
    axis: BinningSpec
    raw_counts: np.ndarray
    normalization: np.ndarray
    g2: np.ndarray
    poisson_error: np.ndarray
    channel_pair: tuple
    total_time_s: float
    singles_rates_Hz: tuple


@dataclass
class Hist2D:
    axis1: BinningSpec
    axis2: BinningSpec
    raw_counts: np.ndarray
    normalization: np.ndarray
    g3: np.ndarray
    poisson_error: np.ndarray
    channels: tuple
    total_time_s: float
    singles_rates_Hz: tuple


@dataclass(frozen=True)
class EventCounts:
    N12: int
    N13: int
    N23: int
    N123: int
    window_ps: int
    total_events: int
    n_single_channel: int = 0
    total_tags: int = 0
    channels: tuple = (0, 1, 2)

    @property
    def two_photon_events(self):
        return self.N12 + self.N13 + self.N23

    @property
    def two_photon_fraction(self):
        multi = self.two_photon_events + self.N123
        return self.two_photon_events / multi if multi else float("nan")


@dataclass(frozen=True)
class EfficiencyEstimate:
    eta: np.ndarray
    standard_error: np.ndarray


def _ratio(raw, norm):
    g = np.zeros(raw.shape)
    err = np.zeros(raw.shape)
    ok = norm > 0
    g[ok] = raw[ok] / norm[ok]
    err[ok] = np.sqrt(raw[ok]) / norm[ok]
    return g, err


def _observation(tags, total_time_ps):
    T = tags.observation_ps if total_time_ps is None else int(total_time_ps)
    if T <= 0:
        raise NormalizationError("observation time must be > 0")
    return T


def _chunks(n, threads):
    bounds = np.linspace(0, n, max(1, int(threads)) + 1).astype(np.int64)
    return list(zip(bounds[:-1], bounds[1:]))


def _parallel_sum(fn, n, threads):
    parts = _chunks(n, threads)
    if len(parts) == 1:
        return fn(*parts[0])
    with ThreadPoolExecutor(len(parts)) as pool:
        results = list(pool.map(lambda p: fn(*p), parts))
    total = results[0].copy()
    for r in results[1:]:
        total += r
    return total


def pair_counts(ta, tb, binning, threads=1):
    """Streaming multi-stop histogram of tb - ta."""
    ta = np.ascontiguousarray(ta, dtype=np.int64)
    tb = np.ascontiguousarray(tb, dtype=np.int64)
    return _parallel_sum(
        lambda lo, hi: kernels.pair_histogram(ta, tb, binning.tau_min_ps, binning.bin_width_ps, binning.n_bins, lo, hi),
        ta.size, threads,
    )


def triple_counts(t1, t2, t3, binning1, binning2, threads=1):
    """Streaming histogram of (t2 - t1, t3 - t1) over all in-window triples."""
    t1, t2, t3 = (np.ascontiguousarray(t, dtype=np.int64) for t in (t1, t2, t3))
    b1, b2 = binning1, binning2
    return _parallel_sum(
        lambda lo, hi: kernels.triple_histogram(
            t1, t2, t3, b1.tau_min_ps, b1.bin_width_ps, b1.n_bins,
            b2.tau_min_ps, b2.bin_width_ps, b2.n_bins, lo, hi),
        t1.size, threads,
    )


def naive_pair_counts(ta, tb, binning):
    """Brute force over all (a, b) pairs."""
    tb = np.asarray(tb, dtype=np.int64)
    counts = np.zeros(binning.n_bins, dtype=np.int64)
    for t in np.asarray(ta, dtype=np.int64):
        k = (tb - t - binning.tau_min_ps) // binning.bin_width_ps
        k = k[(k >= 0) & (k < binning.n_bins)]
        counts += np.bincount(k, minlength=binning.n_bins)
    return counts


def naive_triple_counts(t1, t2, t3, binning1, binning2):
    """Enumerate every (t1, t2, t3) triple whose two delays fall in range."""
    t2 = np.asarray(t2, dtype=np.int64)
    t3 = np.asarray(t3, dtype=np.int64)
    counts = np.zeros((binning1.n_bins, binning2.n_bins), dtype=np.int64)
    for t in np.asarray(t1, dtype=np.int64):
        k1 = (t2 - t - binning1.tau_min_ps) // binning1.bin_width_ps
        k1 = k1[(k1 >= 0) & (k1 < binning1.n_bins)]
        k2 = (t3 - t - binning2.tau_min_ps) // binning2.bin_width_ps
        k2 = k2[(k2 >= 0) & (k2 < binning2.n_bins)]
        if k1.size and k2.size:
            np.add.at(counts, (np.repeat(k1, k2.size), np.tile(k2, k1.size)), 1)
    return counts


def g2(tags, ch_a, ch_b, binning, total_time_ps=None, threads=1, oracle=False):
    """Normalized g2 for delays tau = t_b - t_a."""
    T = _observation(tags, total_time_ps)
    ta, tb = tags.channel(ch_a), tags.channel(ch_b)
    if ta.size == 0 or tb.size == 0:
        empty = ch_a if ta.size == 0 else ch_b
        raise NormalizationError(f"channel {empty} has no tags; g2 is undefined")
    raw = naive_pair_counts(ta, tb, binning) if oracle else pair_counts(ta, tb, binning, threads)
    norm = np.full(binning.n_bins, ta.size * tb.size * binning.bin_width_ps / T)
    g, err = _ratio(raw, norm)
    return Hist1D(binning, raw, norm, g, err, (ch_a, ch_b), T * 1e-12,
                  (ta.size / (T * 1e-12), tb.size / (T * 1e-12)))


def g3(tags, channels, binning1, binning2=None, total_time_ps=None, threads=1, oracle=False):
    """Normalized g3(tau1, tau2) with tau1 = t2 - t1 and tau2 = t3 - t1."""
    binning2 = binning2 or binning1
    if len(channels) != 3:
        raise ConfigError("g3 needs exactly three channels")
    T = _observation(tags, total_time_ps)
    ts = [tags.channel(c) for c in channels]
    for c, t in zip(channels, ts):
        if t.size == 0:
            raise NormalizationError(f"channel {c} has no tags; g3 is undefined")
    if oracle:
        raw = naive_triple_counts(*ts, binning1, binning2)
    else:
        raw = triple_counts(*ts, binning1, binning2, threads)
    n1, n2, n3 = (t.size for t in ts)
    # n1 n2 n3 / T^3 * T * w1 * w2, grouped to stay well inside float range
    value = (n1 / T) * (n2 / T) * n3 * binning1.bin_width_ps * binning2.bin_width_ps
    norm = np.full(raw.shape, value)
    g, err = _ratio(raw, norm)
    rates = tuple(n / (T * 1e-12) for n in (n1, n2, n3))
    return Hist2D(binning1, binning2, raw, norm, g, err, tuple(channels), T * 1e-12, rates)


def marginalize_g3(h, axis):
    """Average g3 over one delay axis with uniform cell weights.

    ``axis=2`` averages over tau2 and estimates g2 of (ch1, ch2) versus
    tau1; ``axis=1`` averages over tau1 and estimates g2 of (ch1, ch3)
    versus tau2.
    """
    if axis not in (1, 2):
        raise ConfigError("axis must be 1 or 2")
    along = 1 if axis == 2 else 0
    valid = h.normalization > 0
    n = valid.sum(axis=along)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(n > 0, np.where(valid, h.g3, 0).sum(axis=along) / np.maximum(n, 1), 0.0)
        var = np.where(valid, h.raw_counts / np.where(valid, h.normalization, 1) ** 2, 0).sum(axis=along)
        err = np.sqrt(var) / np.maximum(n, 1)
    raw = h.raw_counts.sum(axis=along)
    norm = h.normalization.sum(axis=along)
    if axis == 2:
        binning, pair, rates = h.axis1, (h.channels[0], h.channels[1]), h.singles_rates_Hz[:2]
    else:
        binning, pair, rates = h.axis2, (h.channels[0], h.channels[2]), (h.singles_rates_Hz[0], h.singles_rates_Hz[2])
    return Hist1D(binning, raw, norm, mean, err, pair, h.total_time_s, rates)


def _gap_chunks(times, window_ps, threads):
    """Split points where consecutive tags are more than ``window_ps`` apart."""
    if threads <= 1 or times.size < 2:
        return [(0, times.size)]
    gaps = np.flatnonzero(np.diff(times) > window_ps) + 1
    if gaps.size == 0:
        return [(0, times.size)]
    targets = np.linspace(0, times.size, threads + 1)[1:-1]
    cuts = np.unique(gaps[np.minimum(np.searchsorted(gaps, targets), gaps.size - 1)])
    bounds = [0, *cuts.tolist(), times.size]
    return list(zip(bounds[:-1], bounds[1:]))


def count_events(tags, window_ps, cycle_period_ps, channels=(0, 1, 2), threads=1):
    """Tally coincidence clusters by which designated channels they contain.

    A cluster is every tag within ``window_ps`` of its first tag.  Clusters
    with exactly two distinct designated channels count toward that pair,
    those with all three toward ``N123``; single-channel clusters only count
    toward ``total_events``.  Tags on other channels are ignored.
    """
    if not 0 < window_ps < cycle_period_ps:
        raise ConfigError("coincidence window must be positive and shorter than the cycle period")
    if len(set(channels)) != 3:
        raise ConfigError("count_events needs three distinct channels")
    keep = np.isin(tags.channels, np.asarray(channels, dtype=np.uint8))
    times = np.ascontiguousarray(tags.times[keep])
    chans = np.ascontiguousarray(tags.channels[keep]).astype(np.int64)
    parts = _gap_chunks(times, window_ps, threads)
    a, b, c = (int(x) for x in channels)

    def run(part):
        lo, hi = part
        return np.array(kernels.cluster_counts(times[lo:hi], chans[lo:hi], int(window_ps), a, b, c), dtype=np.int64)

    if len(parts) > 1:
        with ThreadPoolExecutor(min(len(parts), threads)) as pool:
            total = sum(pool.map(run, parts))
    else:
        total = run(parts[0])
    n_clusters, n_ab, n_ac, n_bc, n_abc, n_single, n_tags = (int(x) for x in total)
    return EventCounts(n_ab, n_ac, n_bc, n_abc, int(window_ps), n_clusters, n_single, n_tags, tuple(channels))


def estimate_efficiency(counts):
    """Collection efficiency of each channel from N123 / N_jk.

    Standard errors are binomial, sqrt(eta (1 - eta) / N_jk).
    """
    pairs = (counts.N23, counts.N13, counts.N12)
    eta = np.zeros(3)
    err = np.zeros(3)
    for i, n_jk in enumerate(pairs):
        if n_jk <= 0:
            raise EfficiencyError(f"efficiency of channel {counts.channels[i]} undefined: complementary pair count is zero")
        eta[i] = counts.N123 / n_jk
        p = min(eta[i], 1.0)
        err[i] = np.sqrt(p * (1 - p) / n_jk)
    return EfficiencyEstimate(eta, err)


def write_hist1d(path, h):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau_ps", "raw", "norm", "g", "err"])
        for row in zip(h.axis.centers, h.raw_counts, h.normalization, h.g2, h.poisson_error):
            w.writerow([f"{row[0]:.1f}", int(row[1]), f"{row[2]:.9g}", f"{row[3]:.9g}", f"{row[4]:.9g}"])


def write_hist2d(path, h, skip_empty=False):
    c1, c2 = np.meshgrid(h.axis1.centers, h.axis2.centers, indexing="ij")
    cols = [c1.ravel(), c2.ravel(), h.raw_counts.ravel(), h.normalization.ravel(), h.g3.ravel(), h.poisson_error.ravel()]
    if skip_empty:
        nz = cols[2] > 0
        cols = [c[nz] for c in cols]
    with open(path, "w", newline="") as fh:
        fh.write("tau1_ps,tau2_ps,raw,norm,g,err\n")
        np.savetxt(fh, np.column_stack(cols), fmt=["%.1f", "%.1f", "%d", "%.9g", "%.9g", "%.9g"], delimiter=",")
