"""Compiled inner loops.  All inputs are sorted int64 picosecond arrays."""

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def dead_time_keep(times, channels, dead_ps, last_kept):
    """Non-paralyzable dead time; ``last_kept`` (per channel) is updated in place."""
    keep = np.zeros(times.size, dtype=np.bool_)
    for i in range(times.size):
        c = channels[i]
        if times[i] - last_kept[c] >= dead_ps[c]:
            keep[i] = True
            last_kept[c] = times[i]
    return keep


@numba.njit(cache=True, nogil=True)
def pair_histogram(ta, tb, tau_min, bin_width, n_bins, lo, hi):
    """Histogram of tb - ta over all pairs, for start tags ta[lo:hi].

    Multi-stop: every b within [tau_min, tau_min + n_bins*bin_width) of a
    start tag counts.  The b window is tracked with two pointers.
    """
    counts = np.zeros(n_bins, dtype=np.int64)
    tau_max = tau_min + n_bins * bin_width
    nb = tb.size
    if hi <= lo or nb == 0:
        return counts
    # first pointer position found by bisection, then advanced monotonically
    j0 = np.searchsorted(tb, ta[lo] + tau_min)
    for i in range(lo, hi):
        t = ta[i]
        while j0 < nb and tb[j0] - t < tau_min:
            j0 += 1
        j = j0
        while j < nb:
            d = tb[j] - t
            if d >= tau_max:
                break
            counts[(d - tau_min) // bin_width] += 1
            j += 1
    return counts


@numba.njit(cache=True, nogil=True)
def triple_histogram(t1, t2, t3, min1, w1, n1, min2, w2, n2, lo, hi):
    """2-D histogram of (t2 - t1, t3 - t1) over all in-window triples, starts t1[lo:hi]."""
    counts = np.zeros((n1, n2), dtype=np.int64)
    max1 = min1 + n1 * w1
    max2 = min2 + n2 * w2
    if hi <= lo or t2.size == 0 or t3.size == 0:
        return counts
    j0 = np.searchsorted(t2, t1[lo] + min1)
    k0 = np.searchsorted(t3, t1[lo] + min2)
    # per-start histogram of the second photon, with the list of touched bins
    h1 = np.zeros(n1, dtype=np.int64)
    touched = np.empty(n1, dtype=np.int64)
    for i in range(lo, hi):
        t = t1[i]
        while j0 < t2.size and t2[j0] - t < min1:
            j0 += 1
        while k0 < t3.size and t3[k0] - t < min2:
            k0 += 1
        m = 0
        j = j0
        while j < t2.size:
            d = t2[j] - t
            if d >= max1:
                break
            b1 = (d - min1) // w1
            if h1[b1] == 0:
                touched[m] = b1
                m += 1
            h1[b1] += 1
            j += 1
        if m == 0:
            continue
        k = k0
        while k < t3.size:
            d = t3[k] - t
            if d >= max2:
                break
            b2 = (d - min2) // w2
            for q in range(m):
                counts[touched[q], b2] += h1[touched[q]]
            k += 1
        for q in range(m):
            h1[touched[q]] = 0
    return counts


@numba.njit(cache=True, nogil=True)
def cluster_counts(times, channels, window_ps, ch_a, ch_b, ch_c):
    """Classify first-tag-anchored clusters by the set of designated channels present.

    Returns (n_clusters, n_ab, n_ac, n_bc, n_abc, n_single, n_tags).
    """
    n = times.size
    n_clusters = 0
    n_ab = n_ac = n_bc = n_abc = n_single = 0
    i = 0
    while i < n:
        anchor = times[i]
        mask = 0
        j = i
        while j < n and times[j] - anchor <= window_ps:
            c = channels[j]
            if c == ch_a:
                mask |= 1
            elif c == ch_b:
                mask |= 2
            elif c == ch_c:
                mask |= 4
            j += 1
        n_clusters += 1
        if mask == 3:
            n_ab += 1
        elif mask == 5:
            n_ac += 1
        elif mask == 6:
            n_bc += 1
        elif mask == 7:
            n_abc += 1
        else:
            n_single += 1
        i = j
    return n_clusters, n_ab, n_ac, n_bc, n_abc, n_single, n
