"""Single-photon detector model and the detected-cycle sampler.

A photon reaches at most one channel: among the channels whose spectral
(and optional polarization) filter accepts it, channel ``c`` records it
with probability ``efficiency[c]``, so the accepting efficiencies must sum
to at most one.  Recorded times get Gaussian jitter (truncated at 8 sigma
so streaming output can be emitted in order), Poisson dark counts are
merged in, and a non-paralyzable dead time is applied per channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import cascade, levels
from .cascade import EventBlock, block_rng, merge_sorted_blocks, ordered_map
from .errors import ConfigError
from .kernels import dead_time_keep
from .tagio import TagStream

TAG_DTYPE = np.dtype([("time_ps", "<i8"), ("channel", "u1")])
JITTER_TRUNCATION = 8.0
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class DetectorChannel:
    accepted_lines: tuple = ()
    efficiency: float = 1.0
    jitter_fwhm_ps: float = 400.0
    dark_rate_Hz: float = 0.0
    dead_time_ps: int = 0
    polarization_filter: str | None = None

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise ConfigError("detector efficiency must lie in [0, 1]")
        if self.jitter_fwhm_ps < 0 or self.dark_rate_Hz < 0 or self.dead_time_ps < 0:
            raise ConfigError("jitter, dark rate and dead time must be >= 0")
        if self.polarization_filter not in (None, "H", "V"):
            raise ConfigError("polarization_filter must be H, V or null")
        object.__setattr__(self, "accepted_lines", tuple(self.accepted_lines))
        levels.expand_line_selection(self.accepted_lines)

    @property
    def line_ids(self):
        return levels.expand_line_selection(self.accepted_lines)

    @property
    def jitter_sigma_ps(self):
        return self.jitter_fwhm_ps * FWHM_TO_SIGMA


def default_channels():
    """Line (i) of the triexciton, the biexciton line and the exciton line."""
    return [
        DetectorChannel(("XXX_i",), 1 / 600, 400.0, 100.0, 22_000),
        DetectorChannel(("XX",), 1 / 800, 400.0, 100.0, 22_000),
        DetectorChannel(("X",), 1 / 1000, 400.0, 100.0, 22_000),
    ]


def _acceptance(channels):
    """Cumulative detection probability table, shape (n_lines * 2, n_channels)."""
    if not channels:
        raise ConfigError("at least one detector channel is required")
    n_lines = len(cascade.LINE_IDS)
    eff = np.zeros((n_lines * 2, len(channels)))
    for c, ch in enumerate(channels):
        accepted = set(ch.line_ids)
        for li, lid in enumerate(cascade.LINE_IDS):
            if lid not in accepted:
                continue
            for pol in (cascade.POL_H, cascade.POL_V):
                if ch.polarization_filter is None or ch.polarization_filter == "HV"[pol]:
                    eff[li * 2 + pol, c] = ch.efficiency
    total = eff.sum(axis=1)
    if np.any(total > 1 + 1e-12):
        li = int(np.argmax(total)) // 2
        raise ConfigError(
            f"efficiencies of channels accepting {cascade.LINE_IDS[li]} sum to {total.max():.3g} > 1"
        )
    return np.cumsum(eff, axis=1)


def _route(cum, lines, pols, u):
    """Channel index per photon, or -1 when nobody records it."""
    rows = cum[lines.astype(np.int64) * 2 + pols]
    hit = u[:, None] < rows
    ch = np.argmax(hit, axis=1)
    return np.where(hit.any(axis=1), ch, -1)


def _jitter(rng, times, chans, sigmas):
    s = sigmas[chans]
    if not np.any(s > 0):
        return times
    z = rng.standard_normal(times.size)
    z = np.clip(z, -JITTER_TRUNCATION, JITTER_TRUNCATION)
    return times + np.rint(z * s).astype(np.int64)


def _dark_counts(rng, channels, start, stop):
    times, chans = [], []
    span = stop - start
    if span <= 0:
        return np.empty(0, np.int64), np.empty(0, np.uint8)
    for c, ch in enumerate(channels):
        if ch.dark_rate_Hz <= 0:
            continue
        n = rng.poisson(ch.dark_rate_Hz * span * 1e-12)
        times.append(rng.integers(start, stop, n, dtype=np.int64))
        chans.append(np.full(n, c, dtype=np.uint8))
    if not times:
        return np.empty(0, np.int64), np.empty(0, np.uint8)
    return np.concatenate(times), np.concatenate(chans)


def _pack(times, chans):
    tags = np.empty(times.size, dtype=TAG_DTYPE)
    tags["time_ps"] = times
    tags["channel"] = chans
    return tags[np.argsort(tags["time_ps"], kind="stable")]


class _DeadTimeFilter:
    def __init__(self, channels):
        self.dead = np.array([ch.dead_time_ps for ch in channels], dtype=np.int64)
        self.last = np.full(len(channels), np.iinfo(np.int64).min // 2, dtype=np.int64)

    def __call__(self, tags):
        if not np.any(self.dead > 0) or tags.size == 0:
            return tags
        keep = dead_time_keep(tags["time_ps"], tags["channel"].astype(np.int64), self.dead, self.last)
        return tags[keep]


def _finalize(tag_blocks, channels, duration_ps):
    margin = int(math.ceil(JITTER_TRUNCATION * max((ch.jitter_sigma_ps for ch in channels), default=0))) + 1
    shifted = (EventBlock(b.start_ps, b.stop_ps - margin, b.events) for b in tag_blocks)
    dead = _DeadTimeFilter(channels)
    out = [dead(b.events) for b in merge_sorted_blocks(shifted)]
    tags = np.concatenate(out) if out else np.empty(0, TAG_DTYPE)
    # the timer only records inside the acquisition window [0, duration)
    inside = tags["time_ps"] >= 0
    if duration_ps is not None:
        inside &= tags["time_ps"] < duration_ps
    tags = tags[inside]
    return TagStream(tags["time_ps"], tags["channel"], len(channels), duration_ps=duration_ps)


def _as_blocks(events, duration_ps):
    if isinstance(events, np.ndarray):
        stop = duration_ps if duration_ps is not None else (int(events["time_ps"][-1]) + 1 if events.size else 0)
        return [EventBlock(0, stop, events)]
    return events


def detect(events, channels, seed, duration_ps=None):
    """Turn emission events (array or iterable of EventBlocks) into a TagStream."""
    cum = _acceptance(channels)
    sigmas = np.array([ch.jitter_sigma_ps for ch in channels])

    def blocks():
        for k, blk in enumerate(_as_blocks(events, duration_ps)):
            rng = block_rng(seed, k, stream=1)
            ev = blk.events
            ch = _route(cum, ev["line"], ev["pol"], rng.random(ev.size))
            sel = ch >= 0
            t = _jitter(rng, ev["time_ps"][sel], ch[sel], sigmas)
            dt, dc = _dark_counts(rng, channels, blk.start_ps, blk.stop_ps)
            tags = _pack(np.concatenate([t, dt]), np.concatenate([ch[sel].astype(np.uint8), dc]))
            yield EventBlock(blk.start_ps, blk.stop_ps, tags)

    return _finalize(blocks(), channels, duration_ps)


# ---------------------------------------------------------------------------
# detected-cycle sampler


@dataclass
class _Outcome:
    prob: float
    states: tuple          # states visited before each transition (sojourn order)
    emit_step: tuple       # index into states of each photon-emitting transition
    lines: tuple           # line index per photon
    pols: tuple
    det: tuple             # channel per photon, -1 if not recorded


def _paths(model):
    edges = model.edges()
    out = []

    def walk(state, prob, states, emits):
        if state == cascade.VACUUM:
            out.append((prob, tuple(states), tuple(emits)))
            return
        es = edges[state]
        total = sum(r for _, r, _ in es)
        for dst, r, kind in es:
            step = len(states)
            walk(dst, prob * r / total, states + [state], emits + ([(step, kind)] if kind is not None else []))

    for s, p in model.initial_distribution().items():
        if p > 0:
            walk(s, p, [], [])
    return out


def enumerate_outcomes(model, channels, lines=None, min_detections=1):
    """All (path, line, detection) combinations of one prepared cycle with
    at least ``min_detections`` recorded photons, with their probabilities."""
    model.validate_reachability()
    cum = _acceptance(channels)
    weights = cascade.line_weights(lines)
    outcomes = []
    for prob, states, emits in _paths(model):
        # photon options: list of (line, pol, prob) per photon, X copies XX polarization
        def photon_options(kind, xx_pol):
            ids, p = weights[kind]
            if kind == cascade.KIND_X:
                return [(int(ids[xx_pol]), xx_pol, 1.0)]
            if kind == cascade.KIND_XX_T3:
                return [(int(ids[0]), pol, 0.5) for pol in (0, 1)]
            return [(int(i), int(cascade.LINE_POLARIZATION[i]), float(q)) for i, q in zip(ids, p)]

        def det_options(line, pol):
            row = cum[line * 2 + pol]
            eff = np.diff(np.concatenate([[0.0], row]))
            opts = [(-1, 1.0 - row[-1])] + [(c, e) for c, e in enumerate(eff) if e > 0]
            return [(c, e) for c, e in opts if e > 0]

        def expand(k, p, ls, ps, ds, xx_pol):
            if k == len(emits):
                if sum(d >= 0 for d in ds) >= min_detections:
                    outcomes.append(_Outcome(p, states, tuple(s for s, _ in emits), tuple(ls), tuple(ps), tuple(ds)))
                return
            kind = emits[k][1]
            for line, pol, q in photon_options(kind, xx_pol):
                nxt_pol = pol if kind == cascade.KIND_XX else xx_pol
                for c, e in det_options(line, pol):
                    expand(k + 1, p * q * e, ls + [line], ps + [pol], ds + [c], nxt_pol)

        expand(0, prob, [], [], [], 0)
    return outcomes


def _sample_cycles(rng, count, q):
    """Indices of a Bernoulli(q) subset of range(count), via geometric gaps."""
    if q <= 0 or count <= 0:
        return np.empty(0, np.int64)
    if q >= 1:
        return np.arange(count, dtype=np.int64)
    out = []
    pos = -1
    while True:
        n = int(count * q * 1.05 + 10 * math.sqrt(count * q) + 16)
        idx = pos + np.cumsum(rng.geometric(q, n).astype(np.int64))
        cut = np.searchsorted(idx, count)
        out.append(idx[:cut])
        if cut < n:
            break
        pos = int(idx[-1])
    return np.concatenate(out)


def sample_detected_tags(model, excitation, channels, seed, lines=None, min_detections=1,
                         include_dark=None, workers=1, target_per_block=1 << 17):
    """Tags of a full run, drawing only the cycles that produce detections.

    Statistically identical to ``detect(simulate_blocks(...))`` for
    ``min_detections=1`` but its cost scales with the number of recorded
    cycles instead of the number of laser cycles.  With
    ``min_detections >= 2`` the stream keeps only multi-photon cycles
    (singles and, by default, dark counts are dropped); it is meant for
    coincidence bookkeeping, not for singles-normalized correlations.
    """
    if include_dark is None:
        include_dark = min_detections <= 1
    outcomes = enumerate_outcomes(model, channels, lines, min_detections)
    p_prep = cascade.prepare_population(excitation.pulse_areas_rad)
    probs = np.array([o.prob for o in outcomes])
    q = p_prep * probs.sum() if outcomes else 0.0
    cdf = np.cumsum(probs) / probs.sum() if outcomes else np.array([])
    sigmas = np.array([ch.jitter_sigma_ps for ch in channels])
    edges = model.edges()
    total_rate = {s: sum(r for _, r, _ in es) for s, es in edges.items()}
    rep = excitation.rep_rate_Hz
    n_cycles = excitation.n_cycles
    block = 1 << 16
    if q > 0:
        block = 1 << int(min(40, max(16, math.ceil(math.log2(target_per_block / q)))))
    plan = [(b, f, min(block, n_cycles - f)) for b, f in enumerate(range(0, n_cycles, block))]

    def run(item):
        b, first, count = item
        rng = block_rng(seed, b, stream=2)
        cyc = first + _sample_cycles(rng, count, q)
        which = np.minimum(np.searchsorted(cdf, rng.random(cyc.size), side="right"), len(outcomes) - 1) if cyc.size else np.empty(0, np.int64)
        t0 = cascade.cycle_start_ps(cyc, rep) + excitation.preparation_offset_ps
        times, chans = [], []
        for o_idx in np.unique(which):
            o = outcomes[o_idx]
            m = np.flatnonzero(which == o_idx)
            elapsed = np.zeros(m.size)
            last = np.full(m.size, -1, dtype=np.int64)
            photon_t = []
            emit_at = set(o.emit_step)
            for step, s in enumerate(o.states):
                elapsed += rng.exponential(1.0 / total_rate[s], m.size)
                if step in emit_at:
                    tp = np.maximum(t0[m] + np.rint(elapsed * 1000.0).astype(np.int64), last + 1)
                    last = tp
                    photon_t.append(tp)
            for k, c in enumerate(o.det):
                if c >= 0:
                    times.append(photon_t[k])
                    chans.append(np.full(m.size, c, dtype=np.int64))
        if times:
            t = np.concatenate(times)
            c = np.concatenate(chans)
        else:
            t, c = np.empty(0, np.int64), np.empty(0, np.int64)
        t = _jitter(rng, t, c, sigmas)
        start = int(cascade.cycle_start_ps(np.array([first]), rep)[0])
        stop = int(cascade.cycle_start_ps(np.array([first + count]), rep)[0])
        if include_dark:
            dt, dc = _dark_counts(rng, channels, start, stop)
        else:
            dt, dc = np.empty(0, np.int64), np.empty(0, np.uint8)
        tags = _pack(np.concatenate([t, dt]), np.concatenate([c.astype(np.uint8), dc]))
        return EventBlock(start, stop, tags)

    return _finalize(ordered_map(run, plan, workers), channels, excitation.duration_ps)


def outcome_probability(model, channels, lines=None, min_detections=1):
    """Probability that one prepared cycle yields >= ``min_detections`` tags."""
    return float(sum(o.prob for o in enumerate_outcomes(model, channels, lines, min_detections)))
