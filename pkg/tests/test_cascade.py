import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from tricascade import cascade, levels
from tricascade.cascade import CascadeModel, ExcitationConfig
from tricascade.errors import ConfigError

LINE = cascade.LINE_INDEX
XXX_LINES = np.array([LINE[l] for l in levels.DIRECT_LINE_IDS + levels.INDIRECT_LINE_IDS])
XX_LINES = np.array([LINE[l] for l in levels.XX_LINE_IDS])
X_LINES = np.array([LINE[l] for l in levels.X_LINE_IDS])


def short(duration_s=2e-4, **kw):
    return ExcitationConfig(duration_s=duration_s, **kw)


def per_cycle(ev):
    order = np.lexsort((ev["time_ps"], ev["cycle"]))
    ev = ev[order]
    cycles, start, count = np.unique(ev["cycle"], return_index=True, return_counts=True)
    return ev, cycles, start, count


@pytest.mark.parametrize("areas, expected", [
    ((math.pi,) * 3, 1.0),
    ((math.pi, math.pi, 0.0), 0.0),
    ((math.pi, math.pi, math.pi / 2), 0.5),
])
def test_prepare_population(areas, expected):
    assert cascade.prepare_population(areas) == pytest.approx(expected, abs=1e-15)


def test_prepare_population_needs_three_pulses():
    with pytest.raises(ConfigError):
        cascade.prepare_population((math.pi, math.pi))


def test_area_from_power():
    assert cascade.area_from_power(10.0, 10.0) == pytest.approx(math.pi)
    assert cascade.area_from_power(40.0, 10.0) == pytest.approx(2 * math.pi)


@given(st.integers(0, 2**40), st.sampled_from([76_000_000, 80_000_000, 1_000_003]))
def test_cycle_start_exact(n, rep):
    assert int(cascade.cycle_start_ps(np.array([n]), rep)[0]) == n * 10**12 // rep


def test_forced_single_path_gives_three_ordered_photons():
    model = CascadeModel(branch_direct=0.0, blockade_probability=0.0)
    ev = cascade.simulate_trajectories(model, short(), seed=3)
    ev, cycles, start, count = per_cycle(ev)
    assert cycles.size == short().n_cycles
    assert np.all(count == 3)
    lines = ev["line"].reshape(-1, 3)
    assert np.isin(lines[:, 0], XXX_LINES).all()
    assert np.isin(lines[:, 1], XX_LINES).all()
    assert np.isin(lines[:, 2], X_LINES).all()
    t = ev["time_ps"].reshape(-1, 3)
    assert np.all(np.diff(t, axis=1) > 0)
    # exciton photon carries the biexciton photon's polarization
    assert np.array_equal(ev["pol"].reshape(-1, 3)[:, 1], ev["pol"].reshape(-1, 3)[:, 2])


def test_forced_blockade_never_emits_exciton():
    model = CascadeModel(branch_direct=0.0, blockade_probability=1.0)
    ev = cascade.simulate_trajectories(model, short(), seed=4)
    assert ev.size > 0
    assert not np.isin(ev["line"], X_LINES).any()
    assert np.isin(ev["line"], [LINE[levels.XX_T3_LINE_ID]]).sum() == short().n_cycles


def test_dark_triexciton_always_blockades_by_default():
    model = CascadeModel(thermal_bright_fraction=0.0, branch_direct=0.0)
    ev = cascade.simulate_trajectories(model, short(), seed=5)
    ids = set(cascade.line_id_of(ev))
    assert ids <= set(levels.DARK_INDIRECT_LINE_IDS) | {levels.XX_T3_LINE_ID}


@given(
    st.floats(0, 0.5), st.floats(0.5, 1.0),
    st.one_of(st.none(), st.floats(0, 1)),
    st.floats(0.2, 5), st.floats(0.2, 5),
    st.integers(0, 2**32 - 1),
)
def test_trajectory_invariants(branch, bright, blockade, r_xx, r_x, seed):
    model = CascadeModel(
        radiative_rates_per_ns={"XX": r_xx, "X": r_x},
        branch_direct=min(branch, bright), thermal_bright_fraction=bright,
        blockade_probability=blockade,
    )
    ev = cascade.simulate_trajectories(model, short(5e-6, pulse_areas_rad=(math.pi, math.pi, 2.0)), seed)
    assert np.all(np.diff(ev["time_ps"]) >= 0)
    ev, cycles, start, count = per_cycle(ev)
    assert np.all(count <= 3)
    has_x = np.add.reduceat(np.isin(ev["line"], X_LINES).astype(int), start) if ev.size else np.array([])
    assert np.array_equal(count == 3, has_x == 1)
    for s, c in zip(start, count):
        t = ev["time_ps"][s:s + c]
        assert np.all(np.diff(t) > 0)
        assert np.isin(ev["line"][s], XXX_LINES)


def test_seed_determinism_and_worker_independence():
    model = CascadeModel()
    exc = short(1e-3)
    runs = []
    for workers in (1, 1, 3):
        blocks = cascade.simulate_blocks(model, exc, seed=11, workers=workers, block_cycles=5000)
        runs.append(np.concatenate([b.events for b in blocks]))
    assert runs[0].tobytes() == runs[1].tobytes() == runs[2].tobytes()
    other = cascade.simulate_trajectories(model, exc, seed=12)
    assert other.tobytes() != runs[0].tobytes()


def test_block_size_changes_stream_but_not_order():
    ev = np.concatenate([b.events for b in cascade.simulate_blocks(CascadeModel(), short(), 0, block_cycles=777)])
    assert np.all(np.diff(ev["time_ps"]) >= 0)


def test_waiting_times_are_exponential():
    rate = 0.7
    model = CascadeModel(radiative_rates_per_ns={"X": rate}, branch_direct=0.0, blockade_probability=0.0)
    ev = cascade.simulate_trajectories(model, short(3e-4), seed=8)
    ev, cycles, start, count = per_cycle(ev)
    t = ev["time_ps"].reshape(-1, 3)
    wait_ns = (t[:, 2] - t[:, 1]) / 1000.0
    res = stats.kstest(wait_ns, stats.expon(scale=1 / rate).cdf)
    assert res.pvalue > 1e-3


@pytest.mark.parametrize("kw", [
    dict(radiative_rates_per_ns={"X": 0.0}),
    dict(dark_exciton_decay_per_ns=0.0),
])
def test_unreachable_vacuum_is_config_error(kw):
    with pytest.raises(ConfigError, match="unreachable"):
        cascade.simulate_trajectories(CascadeModel(**kw), short(), 0)


def test_blockade_override_allows_zero_dark_decay_when_unused():
    model = CascadeModel(dark_exciton_decay_per_ns=0.0, blockade_probability=0.0,
                         radiative_rates_per_ns={"XX_T3": 1.0})
    model.validate_reachability()


@pytest.mark.parametrize("kw", [
    dict(branch_direct=1.5), dict(thermal_bright_fraction=-0.1),
    dict(radiative_rates_per_ns={"Q": 1.0}), dict(phonon_relax_rate_per_ns=-1),
    dict(branch_direct=0.4, thermal_bright_fraction=0.3),
])
def test_model_validation(kw):
    with pytest.raises(ConfigError):
        CascadeModel(**kw)


def test_excitation_defaults():
    exc = ExcitationConfig()
    assert exc.period_ps == pytest.approx(1e12 / 76e6)
    assert np.diff(exc.pulse_offsets_ps).tolist() == [30, 30]
    assert exc.n_cycles == 76_000_000
    assert exc.with_third_pulse_power(2.5).pulse_areas_rad[-1] == pytest.approx(math.pi / 2)


def test_zero_duration_is_empty():
    ev = cascade.simulate_trajectories(CascadeModel(), short(0.0), 0)
    assert ev.size == 0


@given(st.lists(st.lists(st.integers(0, 50), max_size=20), min_size=1, max_size=6))
def test_merge_sorted_blocks(chunks):
    # block k spans [10k, 10k + 10); items may spill up to 40 ps past the block end
    blocks = []
    for k, vals in enumerate(chunks):
        a = np.sort(np.array([10 * k + v for v in vals], dtype=np.int64))
        arr = np.zeros(a.size, dtype=[("time_ps", "<i8")])
        arr["time_ps"] = a
        blocks.append(cascade.EventBlock(10 * k, 10 * k + 10, arr))
    merged = np.concatenate([b.events for b in cascade.merge_sorted_blocks(blocks)])
    expected = np.sort(np.concatenate([b.events["time_ps"] for b in blocks]))
    assert np.array_equal(merged["time_ps"], expected)
