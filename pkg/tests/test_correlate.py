import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tricascade import correlate
from tricascade.correlate import BinningSpec, EventCounts
from tricascade.errors import ConfigError, EfficiencyError, NormalizationError
from tricascade.tagio import TagStream


def sorted_times(rng, n, span):
    return np.sort(rng.integers(0, span, n))


@st.composite
def binnings(draw, max_bins=60):
    w = draw(st.integers(1, 500))
    n = draw(st.integers(1, max_bins))
    lo = draw(st.integers(-n * w, 0))
    return BinningSpec(w, lo, lo + n * w)


@given(st.integers(0, 2**32 - 1), binnings(), st.integers(0, 300), st.integers(0, 300), st.integers(1, 4))
def test_pair_kernel_matches_oracle(seed, b, na, nb, threads):
    rng = np.random.default_rng(seed)
    ta, tb = sorted_times(rng, na, 20_000), sorted_times(rng, nb, 20_000)
    assert np.array_equal(correlate.pair_counts(ta, tb, b, threads), correlate.naive_pair_counts(ta, tb, b))


@given(st.integers(0, 2**32 - 1), binnings(25), binnings(25), st.integers(0, 80), st.integers(1, 3))
def test_triple_kernel_matches_oracle(seed, b1, b2, n, threads):
    rng = np.random.default_rng(seed)
    t1, t2, t3 = (sorted_times(rng, n, 5_000) for _ in range(3))
    fast = correlate.triple_counts(t1, t2, t3, b1, b2, threads)
    assert np.array_equal(fast, correlate.naive_triple_counts(t1, t2, t3, b1, b2))


def test_triple_kernel_with_bursts():
    # many tags of one channel inside a single bin of another
    t1 = np.array([1000, 1001])
    t2 = np.arange(900, 1100, dtype=np.int64)
    t3 = np.arange(950, 1060, dtype=np.int64)
    b = BinningSpec(400, -400, 400)
    assert np.array_equal(correlate.triple_counts(t1, t2, t3, b, b), correlate.naive_triple_counts(t1, t2, t3, b, b))


@given(st.integers(0, 2**32 - 1), binnings())
def test_time_reversal_duality(seed, b):
    # counts of tb - ta in [lo, hi) equal counts of ta - tb in [-hi + 1, -lo + 1), reversed
    rng = np.random.default_rng(seed)
    ta, tb = sorted_times(rng, 200, 10_000), sorted_times(rng, 200, 10_000)
    rev = BinningSpec(b.bin_width_ps, -b.tau_max_ps + 1, -b.tau_min_ps + 1)
    assert np.array_equal(correlate.pair_counts(ta, tb, b), correlate.pair_counts(tb, ta, rev)[::-1])


def test_g2_normalization_and_ratio():
    tags = TagStream.from_channels([[0, 1000], [10, 500, 990]], duration_ps=10_000)
    b = BinningSpec(100, -1000, 1000)
    h = correlate.g2(tags, 0, 1, b)
    assert h.normalization[0] == pytest.approx(2 * 3 * 100 / 10_000)
    ok = h.normalization > 0
    assert np.allclose(h.g2[ok], h.raw_counts[ok] / h.normalization[ok])
    assert h.raw_counts.sum() == 6  # all six delays lie in [-1000, 1000)
    assert h.singles_rates_Hz == pytest.approx((2 / 1e-8, 3 / 1e-8))


def test_oracle_flag_identical():
    rng = np.random.default_rng(1)
    tags = TagStream.from_channels([sorted_times(rng, 2000, 10**7) for _ in range(3)], duration_ps=10**7)
    b = BinningSpec(400, -20_000, 20_000)
    assert np.array_equal(correlate.g2(tags, 0, 1, b).raw_counts, correlate.g2(tags, 0, 1, b, oracle=True).raw_counts)
    h = correlate.g3(tags, (0, 1, 2), b, threads=3)
    assert np.array_equal(h.raw_counts, correlate.g3(tags, (0, 1, 2), b, oracle=True).raw_counts)


def test_empty_channel_raises():
    tags = TagStream.from_channels([[1, 2], []], duration_ps=100)
    with pytest.raises(NormalizationError, match="channel 1"):
        correlate.g2(tags, 0, 1, BinningSpec(1, -5, 5))


def test_poisson_null_small():
    rng = np.random.default_rng(2)
    T = 10**11  # 0.1 s
    tags = TagStream.from_channels([sorted_times(rng, 200_000, T) for _ in range(2)], duration_ps=T)
    h = correlate.g2(tags, 0, 1, BinningSpec(1000, -100_000, 100_000))
    z = (h.raw_counts - h.normalization) / np.sqrt(h.normalization)
    assert np.abs(z).max() < 4.5
    assert abs(h.g2.mean() - 1) < 3 / np.sqrt(h.normalization.sum())


def _hist2d(g):
    b = BinningSpec(1, 0, g.shape[0])
    b2 = BinningSpec(1, 0, g.shape[1])
    norm = np.full(g.shape, 2.0)
    return correlate.Hist2D(b, b2, g * norm, norm, g, np.zeros(g.shape), (0, 1, 2), 1.0, (1, 1, 1))


@given(st.floats(0, 10), st.integers(1, 8), st.integers(1, 8))
def test_marginal_of_constant_field(c, n1, n2):
    h = _hist2d(np.full((n1, n2), c))
    assert np.allclose(correlate.marginalize_g3(h, 2).g2, c)
    assert np.allclose(correlate.marginalize_g3(h, 1).g2, c)


def test_marginal_single_bin_slice_is_identity():
    g = np.arange(5.0).reshape(5, 1)
    m = correlate.marginalize_g3(_hist2d(g), 2)
    assert np.array_equal(m.g2, g[:, 0])
    assert correlate.marginalize_g3(_hist2d(g), 1).g2 == pytest.approx([2.0])


def _tags(pairs):
    times = np.array([t for t, _ in pairs], dtype=np.int64)
    chans = np.array([c for _, c in pairs], dtype=np.uint8)
    return TagStream(times, chans, 4)


def naive_clusters(times, chans, window, designated):
    out = dict(ab=0, ac=0, bc=0, abc=0, single=0, n=0)
    i = 0
    keep = [k for k in range(len(times)) if chans[k] in designated]
    times = [times[k] for k in keep]
    chans = [chans[k] for k in keep]
    names = {frozenset(designated[:2]): "ab", frozenset((designated[0], designated[2])): "ac",
             frozenset(designated[1:]): "bc", frozenset(designated): "abc"}
    while i < len(times):
        j = i
        while j < len(times) and times[j] - times[i] <= window:
            j += 1
        key = names.get(frozenset(chans[i:j]), "single")
        out[key] += 1
        out["n"] += 1
        i = j
    return out


@given(st.lists(st.tuples(st.integers(0, 50_000), st.integers(0, 3)), max_size=200),
       st.integers(1, 5_000), st.integers(1, 4))
def test_cluster_counts_match_naive(items, window, threads):
    items.sort(key=lambda x: x[0])
    tags = _tags(items)
    c = correlate.count_events(tags, window, 13_000, (0, 1, 2), threads=threads)
    ref = naive_clusters([t for t, _ in items], [ch for _, ch in items], window, (0, 1, 2))
    assert (c.N12, c.N13, c.N23, c.N123, c.total_events) == (ref["ab"], ref["ac"], ref["bc"], ref["abc"], ref["n"])
    assert c.N123 <= c.total_events


def test_cluster_rules_examples():
    tags = _tags([(0, 0), (100, 1), (200, 2), (5000, 0), (5500, 1), (6001, 2), (9000, 2)])
    c = correlate.count_events(tags, 1000, 13_000)
    assert (c.N12, c.N13, c.N23, c.N123) == (1, 0, 0, 1)
    assert c.total_events == 4  # the 6001 and 9000 tags are single-channel clusters
    assert c.n_single_channel == 2
    edge = correlate.count_events(_tags([(0, 0), (1000, 1)]), 1000, 13_000)
    assert edge.N12 == 1


def test_count_events_validation():
    with pytest.raises(ConfigError):
        correlate.count_events(_tags([]), 20_000, 13_000)
    with pytest.raises(ConfigError):
        correlate.count_events(_tags([]), 1000, 13_000, (0, 0, 1))


def test_efficiency_examples():
    e = correlate.estimate_efficiency(EventCounts(N12=80_000, N13=70_000, N23=60_000, N123=100, window_ps=1, total_events=0))
    assert e.eta[0] == pytest.approx(1 / 600)
    assert e.standard_error[0] == pytest.approx(np.sqrt((1 / 600) * (1 - 1 / 600) / 60_000))
    one = correlate.estimate_efficiency(EventCounts(5, 5, 5, 5, 1, 0))
    assert np.all(one.eta == 1.0) and np.all(one.standard_error == 0)
    with pytest.raises(EfficiencyError, match="channel 0"):
        correlate.estimate_efficiency(EventCounts(3, 4, 0, 0, 1, 0))


def test_two_photon_fraction():
    c = EventCounts(N12=500, N13=300, N23=199, N123=1, window_ps=1, total_events=0)
    assert c.two_photon_fraction == pytest.approx(0.999)


def test_binning_validation():
    with pytest.raises(ConfigError):
        BinningSpec(3, -10, 10)
    with pytest.raises(ConfigError):
        BinningSpec(1, 5, 5)
    with pytest.raises(ConfigError):
        BinningSpec(1, 0, correlate.MAX_BINS + 1)


def test_histogram_csv(tmp_path):
    rng = np.random.default_rng(3)
    tags = TagStream.from_channels([sorted_times(rng, 300, 10**6) for _ in range(3)], duration_ps=10**6)
    b = BinningSpec(1000, -5000, 5000)
    correlate.write_hist1d(tmp_path / "g2.csv", correlate.g2(tags, 0, 1, b))
    correlate.write_hist2d(tmp_path / "g3.csv", correlate.g3(tags, (0, 1, 2), b))
    assert (tmp_path / "g2.csv").read_text().splitlines()[0] == "tau_ps,raw,norm,g,err"
    rows = (tmp_path / "g3.csv").read_text().splitlines()
    assert rows[0] == "tau1_ps,tau2_ps,raw,norm,g,err" and len(rows) == 101
