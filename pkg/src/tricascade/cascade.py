"""Kinetic Monte Carlo of the pulsed triexciton radiative cascade.

Every laser cycle the three-pulse sequence prepares the triexciton with
probability ``prepare_population(pulse_areas)``.  The dot then walks the
state machine below with competing exponential clocks (Gillespie); each
radiative edge emits one photon, the phonon / flip-flop edges emit none::

    XXX_bright --direct--> XX_ground
    XXX_bright --indirect--> XX_TT_even --flip-flop--> XX_ground
    XXX_dark   --indirect--> XX_TT_odd  --phonon-->    XX_T3
    XX_ground --> X_bright --> vacuum
    XX_T3     --> X_dark   --(non-radiative)--> vacuum

Cycles are simulated in fixed-size blocks; block ``b`` draws from a
generator seeded with ``(seed, b)`` so the output does not depend on how
many workers process the blocks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import levels
from .errors import ConfigError

XXX_BRIGHT, XXX_DARK, XX_TT_EVEN, XX_TT_ODD, XX_GROUND, XX_T3, X_BRIGHT, X_DARK, VACUUM = range(9)
STATE_NAMES = (
    "XXX_bright", "XXX_dark", "XX_TT_even", "XX_TT_odd",
    "XX_ground", "XX_T3_blockaded", "X_bright", "X_dark", "Vacuum",
)

# photon kinds carried by radiative edges
KIND_DIRECT, KIND_BRIGHT_INDIRECT, KIND_DARK_INDIRECT, KIND_XX, KIND_XX_T3, KIND_X = range(6)
KIND_LINES = {
    KIND_DIRECT: levels.DIRECT_LINE_IDS,
    KIND_BRIGHT_INDIRECT: levels.BRIGHT_INDIRECT_LINE_IDS,
    KIND_DARK_INDIRECT: levels.DARK_INDIRECT_LINE_IDS,
    KIND_XX: levels.XX_LINE_IDS,
    KIND_XX_T3: (levels.XX_T3_LINE_ID,),
    KIND_X: levels.X_LINE_IDS,
}

# Index space for line ids inside event arrays.
LINE_IDS = levels.ALL_LINE_IDS
LINE_INDEX = {lid: i for i, lid in enumerate(LINE_IDS)}
POL_H, POL_V = 0, 1

EMISSION_DTYPE = np.dtype(
    [("time_ps", "<i8"), ("line", "<i2"), ("pol", "u1"), ("cycle", "<i8")]
)

DEFAULT_RADIATIVE_RATES = {"XXX": 1.0, "XX": 1.0, "XX_T3": 1.0, "X": 1.0}
BLOCK_CYCLES = 1 << 18


@dataclass(frozen=True)
class CascadeModel:
    """Rates (1/ns) and branching of the cascade state machine.

    ``branch_direct`` is the probability, averaged over a thermal triexciton
    population, that recombination involves the second-level pair; only the
    bright doublet can do this, so a bright triexciton takes the direct route
    with probability ``branch_direct / thermal_bright_fraction``.

    ``blockade_probability`` overrides the spin-parity routing of the excited
    biexciton: ``None`` sends even states to the ground biexciton and odd
    states to the blockaded one; a number sends every excited biexciton to the
    blockaded state with that probability.
    """

    radiative_rates_per_ns: dict = field(default_factory=lambda: dict(DEFAULT_RADIATIVE_RATES))
    phonon_relax_rate_per_ns: float = 50.0
    flipflop_rate_per_ns: float = 20.0
    dark_exciton_decay_per_ns: float = 0.01
    branch_direct: float = 1 / 6
    thermal_bright_fraction: float = 0.5
    blockade_probability: float | None = None

    def __post_init__(self):
        unknown = set(self.radiative_rates_per_ns) - set(DEFAULT_RADIATIVE_RATES)
        if unknown:
            raise ConfigError(f"unknown radiative rate keys: {sorted(unknown)}")
        rates = [*self.rates.values(), self.phonon_relax_rate_per_ns,
                 self.flipflop_rate_per_ns, self.dark_exciton_decay_per_ns]
        if any(not (r >= 0) or math.isinf(r) for r in rates):
            raise ConfigError("rates must be finite and >= 0")
        for name in ("branch_direct", "thermal_bright_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.blockade_probability is not None and not 0 <= self.blockade_probability <= 1:
            raise ConfigError("blockade_probability must lie in [0, 1]")
        if self.branch_direct > self.thermal_bright_fraction + 1e-15:
            raise ConfigError("branch_direct cannot exceed thermal_bright_fraction")

    @property
    def rates(self):
        return {**DEFAULT_RADIATIVE_RATES, **self.radiative_rates_per_ns}

    @property
    def bright_direct_probability(self):
        if self.thermal_bright_fraction == 0:
            return 0.0
        return min(1.0, self.branch_direct / self.thermal_bright_fraction)

    def edges(self):
        """Outgoing edges per state: list of (destination, rate, photon kind or None)."""
        r = self.rates
        pbd = self.bright_direct_probability
        if self.blockade_probability is None:
            p_even, p_odd = 0.0, 1.0
        else:
            p_even = p_odd = self.blockade_probability
        ff, ph = self.flipflop_rate_per_ns, self.phonon_relax_rate_per_ns
        table = {
            XXX_BRIGHT: [(XX_GROUND, r["XXX"] * pbd, KIND_DIRECT),
                         (XX_TT_EVEN, r["XXX"] * (1 - pbd), KIND_BRIGHT_INDIRECT)],
            XXX_DARK: [(XX_TT_ODD, r["XXX"], KIND_DARK_INDIRECT)],
            XX_TT_EVEN: [(XX_GROUND, ff * (1 - p_even), None), (XX_T3, ff * p_even, None)],
            XX_TT_ODD: [(XX_GROUND, ph * (1 - p_odd), None), (XX_T3, ph * p_odd, None)],
            XX_GROUND: [(X_BRIGHT, r["XX"], KIND_XX)],
            XX_T3: [(X_DARK, r["XX_T3"], KIND_XX_T3)],
            X_BRIGHT: [(VACUUM, r["X"], KIND_X)],
            X_DARK: [(VACUUM, self.dark_exciton_decay_per_ns, None)],
        }
        return {s: [e for e in es if e[1] > 0] for s, es in table.items()}

    def initial_distribution(self):
        f = self.thermal_bright_fraction
        return {XXX_BRIGHT: f, XXX_DARK: 1 - f}

    def validate_reachability(self):
        """Every state reachable from the triexciton must be able to leave."""
        edges = self.edges()
        seen = set()
        stack = [s for s, p in self.initial_distribution().items() if p > 0]
        while stack:
            s = stack.pop()
            if s in seen or s == VACUUM:
                continue
            seen.add(s)
            if not edges[s]:
                raise ConfigError(
                    f"state {STATE_NAMES[s]} is reachable but has no outgoing rate; "
                    "vacuum is unreachable"
                )
            stack.extend(dst for dst, _, _ in edges[s])


@dataclass(frozen=True)
class ExcitationConfig:
    rep_rate_MHz: float = 76.0
    pulse_offsets_ps: tuple = (0, 30, 60)
    pulse_areas_rad: tuple = (math.pi, math.pi, math.pi)
    pi_power_uW: float = 10.0
    duration_s: float = 1.0
    # resonance energies above the exciton line, kept as metadata only
    resonances_meV: tuple = (29.0, 34.0)

    def __post_init__(self):
        if not self.rep_rate_MHz > 0:
            raise ConfigError("rep_rate_MHz must be > 0")
        if len(self.pulse_offsets_ps) != len(self.pulse_areas_rad):
            raise ConfigError("pulse_offsets_ps and pulse_areas_rad differ in length")
        if list(self.pulse_offsets_ps) != sorted(self.pulse_offsets_ps) or min(self.pulse_offsets_ps, default=0) < 0:
            raise ConfigError("pulse offsets must be non-negative and ordered")
        if max(self.pulse_offsets_ps, default=0) >= self.period_ps:
            raise ConfigError("pulse sequence longer than the repetition period")
        if not self.pi_power_uW > 0:
            raise ConfigError("pi_power_uW must be > 0")
        if self.duration_s < 0:
            raise ConfigError("duration_s must be >= 0")

    @property
    def rep_rate_Hz(self):
        return int(round(self.rep_rate_MHz * 1e6))

    @property
    def period_ps(self):
        return 1e12 / self.rep_rate_Hz

    @property
    def n_cycles(self):
        return int(math.floor(self.duration_s * self.rep_rate_Hz + 1e-9))

    @property
    def duration_ps(self):
        return int(cycle_start_ps(np.array([self.n_cycles]), self.rep_rate_Hz)[0])

    @property
    def preparation_offset_ps(self):
        return int(self.pulse_offsets_ps[-1]) if self.pulse_offsets_ps else 0

    def with_third_pulse_power(self, power_uW):
        areas = list(self.pulse_areas_rad)
        areas[-1] = area_from_power(power_uW, self.pi_power_uW)
        return replace(self, pulse_areas_rad=tuple(areas))


def area_from_power(power_uW, pi_power_uW):
    """Pulse area for an average power: pi at ``pi_power_uW``, scaling as sqrt(P)."""
    return math.pi * math.sqrt(power_uW / pi_power_uW)


def prepare_population(pulse_areas_rad):
    """Triexciton occupation after the X -> XX -> XXX pulse ladder.

    Each pulse is an instantaneous two-level transfer with probability
    sin^2(area/2); the p-shell relaxation after the first pulse is taken as
    lossless.
    """
    areas = list(pulse_areas_rad)
    if len(areas) != 3:
        raise ConfigError(f"expected three pulse areas, got {len(areas)}")
    return float(np.prod([math.sin(a / 2) ** 2 for a in areas]))


def cycle_start_ps(n, rep_rate_Hz):
    """floor(n * 1e12 / rep_rate_Hz) in int64 without overflow for n < 2**62 / 1e12."""
    n = np.asarray(n, dtype=np.int64)
    q, r = divmod(10**12, rep_rate_Hz)
    a, b = np.divmod(n, rep_rate_Hz)
    return a * np.int64(10**12) + b * np.int64(q) + (b * np.int64(r)) // np.int64(rep_rate_Hz)


def line_weights(lines=None):
    """Per photon kind: (line indices, selection probabilities)."""
    intensity = {}
    for line in lines or levels.triexciton_lines():
        intensity[line.line_id] = line.relative_intensity
    out = {}
    for kind, ids in KIND_LINES.items():
        w = np.array([intensity.get(lid, 1.0) for lid in ids], dtype=float)
        out[kind] = (np.array([LINE_INDEX[lid] for lid in ids], dtype=np.int16), w / w.sum())
    return out


# polarization of every line when emitted; XX_T3 is drawn uniformly
def _line_polarizations():
    pol = {}
    for line in levels.triexciton_lines():
        pol[line.line_id] = POL_H if line.polarization is levels.Polarization.H else POL_V
    for lid in levels.XX_LINE_IDS + levels.X_LINE_IDS:
        pol[lid] = POL_H if lid.endswith(":H") else POL_V
    pol[levels.XX_T3_LINE_ID] = -1
    return np.array([pol[lid] for lid in LINE_IDS], dtype=np.int16)


LINE_POLARIZATION = _line_polarizations()


@dataclass
class EventBlock:
    """Emission events for cycles [first_cycle, first_cycle + n_cycles)."""

    start_ps: int
    stop_ps: int
    events: np.ndarray


def block_rng(seed, block, stream=0):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream), int(block)])))


def _simulate_block(model, excitation, weights, seed, block, first, count):
    rng = block_rng(seed, block)
    rep = excitation.rep_rate_Hz
    cycles = np.arange(first, first + count, dtype=np.int64)
    p_prep = prepare_population(excitation.pulse_areas_rad)
    prepared = rng.random(count) < p_prep
    idx = np.flatnonzero(prepared)
    bright = rng.random(idx.size) < model.thermal_bright_fraction
    state = np.where(bright, XXX_BRIGHT, XXX_DARK).astype(np.int8)
    t0 = cycle_start_ps(cycles[idx], rep) + excitation.preparation_offset_ps
    t = np.zeros(idx.size)  # elapsed ns since preparation
    last = np.full(idx.size, -1, dtype=np.int64)
    last_xx_pol = np.zeros(idx.size, dtype=np.uint8)
    out_t, out_line, out_pol, out_cyc = [], [], [], []
    edges = model.edges()
    for s in range(VACUUM):
        sel = np.flatnonzero(state == s)
        if sel.size == 0 or not edges[s]:
            continue
        rates = np.array([e[1] for e in edges[s]])
        total = rates.sum()
        t[sel] += rng.exponential(1.0 / total, sel.size)
        choice = np.searchsorted(np.cumsum(rates) / total, rng.random(sel.size), side="right")
        choice = np.minimum(choice, len(rates) - 1)
        for k, (dst, _, kind) in enumerate(edges[s]):
            m = sel[choice == k]
            state[m] = dst
            if kind is None or m.size == 0:
                continue
            tp = t0[m] + np.rint(t[m] * 1000.0).astype(np.int64)
            tp = np.maximum(tp, last[m] + 1)
            last[m] = tp
            ids, probs = weights[kind]
            if kind == KIND_X:
                lines = ids[last_xx_pol[m]]
            else:
                lines = ids[np.minimum(np.searchsorted(np.cumsum(probs), rng.random(m.size), side="right"), ids.size - 1)]
            pol = LINE_POLARIZATION[lines]
            if kind == KIND_XX_T3:
                pol = rng.integers(0, 2, m.size)
            if kind == KIND_XX:
                last_xx_pol[m] = pol
            out_t.append(tp)
            out_line.append(lines)
            out_pol.append(pol)
            out_cyc.append(cycles[idx[m]])
    ev = np.empty(sum(a.size for a in out_t), dtype=EMISSION_DTYPE)
    if ev.size:
        ev["time_ps"] = np.concatenate(out_t)
        ev["line"] = np.concatenate(out_line)
        ev["pol"] = np.concatenate(out_pol)
        ev["cycle"] = np.concatenate(out_cyc)
        ev = ev[np.argsort(ev["time_ps"], kind="stable")]
    start = int(cycle_start_ps(np.array([first]), rep)[0])
    stop = int(cycle_start_ps(np.array([first + count]), rep)[0])
    return EventBlock(start, stop, ev)


def _block_plan(n_cycles, block_cycles):
    return [(b, f, min(block_cycles, n_cycles - f)) for b, f in enumerate(range(0, n_cycles, block_cycles))]


def simulate_blocks(model, excitation, seed, lines=None, workers=1, block_cycles=BLOCK_CYCLES):
    """Yield time-sorted :class:`EventBlock` objects covering the whole run.

    A block's events may extend past its ``stop_ps``; the stream is made
    globally sorted by holding those back until the next block is merged in.
    """
    model.validate_reachability()
    weights = line_weights(lines)
    plan = _block_plan(excitation.n_cycles, block_cycles)

    def run(item):
        b, first, count = item
        return _simulate_block(model, excitation, weights, seed, b, first, count)

    yield from merge_sorted_blocks(ordered_map(run, plan, workers))


def ordered_map(fn, items, workers):
    """``map`` that runs up to ``workers`` items ahead in threads, preserving order."""
    if workers <= 1:
        yield from map(fn, items)
        return
    with ThreadPoolExecutor(workers) as pool:
        pending = []
        for item in items:
            pending.append(pool.submit(fn, item))
            if len(pending) >= 2 * workers:
                yield pending.pop(0).result()
        for fut in pending:
            yield fut.result()


def merge_sorted_blocks(blocks, key="time_ps"):
    """Make a stream of individually sorted blocks globally sorted.

    Items of a block at or past ``stop_ps`` may interleave with later blocks;
    they are carried into the next block and re-sorted with it.  Every later
    block must only hold items at or after its own ``start_ps``.
    """
    carry = None
    for blk in blocks:
        ev = blk.events
        if carry is not None and carry.size:
            ev = np.concatenate([carry, ev])
            ev = ev[np.argsort(ev[key], kind="stable")]
        cut = np.searchsorted(ev[key], blk.stop_ps, side="left")
        carry = ev[cut:]
        yield EventBlock(blk.start_ps, blk.stop_ps, ev[:cut])
    if carry is not None and carry.size:
        yield EventBlock(blk.stop_ps, blk.stop_ps, carry)


def simulate_trajectories(model, excitation, seed, lines=None, workers=1):
    """All emission events of the run as one time-sorted structured array."""
    blocks = [b.events for b in simulate_blocks(model, excitation, seed, lines, workers)]
    if not blocks:
        return np.empty(0, dtype=EMISSION_DTYPE)
    return np.concatenate(blocks)


def line_id_of(events):
    return [LINE_IDS[i] for i in np.asarray(events["line"])]
