"""Triexciton / excited-biexciton fine structure and its optical transitions.

Energies of states are kept in micro-eV relative to the dark triexciton
doublet center; photon energies of lines are absolute, in meV.  The
transition table is declarative: every allowed arrow is listed explicitly
rather than derived from a many-carrier dipole calculation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .errors import ConfigError


class Polarization(str, enum.Enum):
    H = "H"
    V = "V"
    UNPOLARIZED = "U"


class ComplexKind(str, enum.Enum):
    TRIEXCITON = "XXX"
    EXCITED_BIEXCITON_TT = "XX_TT"
    GROUND_BIEXCITON = "XX"
    SPIN_BLOCKADED_BIEXCITON = "XX_T3"
    BRIGHT_EXCITON = "X"
    DARK_EXCITON = "X_dark"
    VACUUM = "vacuum"


class DoubletMember(str, enum.Enum):
    SYMMETRIC = "s"
    ANTISYMMETRIC = "a"
    NOT_APPLICABLE = "-"


# Final excited-biexciton (e-triplet/h-triplet) states.  The total spin
# projection is m_e + m_h with m_e in {-1, 0, 1} and m_h in {-3, 0, 3},
# giving 0 plus symmetric/antisymmetric combinations of +-1 .. +-4.
TT_STATE_NAMES = (
    "TT_0",
    "TT_1s", "TT_1a",
    "TT_2s", "TT_2a",
    "TT_3s", "TT_3a",
    "TT_4s", "TT_4a",
)
DIRECT_FINAL = "XX_0"

# Placeholder photon energies (meV).  The bright-initiated indirect values
# are referenced to the bright triexciton doublet center; the dark-initiated
# lines are shifted down from them by the bright-dark gap.
DEFAULT_LINE_ENERGIES_MEV = {
    "XX_0": 1381.500,
    "TT_0": 1346.150,
    "TT_1s": 1346.450,
    "TT_1a": 1346.450,
    "TT_2s": 1346.000,
    "TT_2a": 1346.004,
    "TT_3s": 1346.600,
    "TT_3a": 1346.600,
    "TT_4s": 1346.800,
    "TT_4a": 1346.800,
    "XX": 1348.000,
    "XX_T3": 1347.300,
    "X": 1350.000,
}

# (initial triexciton state, final state, polarization, group label)
DIRECT_ARROWS = (
    ("XXX_Bs", "XX_0", Polarization.H, "direct"),
    ("XXX_Ba", "XX_0", Polarization.V, "direct"),
)
INDIRECT_ARROWS = (
    ("XXX_Bs", "TT_0", Polarization.H, "TT0"),
    ("XXX_Ba", "TT_0", Polarization.V, "TT0"),
    ("XXX_Bs", "TT_2s", Polarization.H, "TT2s"),
    ("XXX_Ba", "TT_2s", Polarization.V, "TT2s"),
    ("XXX_Bs", "TT_2a", Polarization.H, "TT2a"),
    ("XXX_Ba", "TT_2a", Polarization.V, "TT2a"),
    ("XXX_Ds", "TT_1s", Polarization.H, "TT1"),
    ("XXX_Da", "TT_1a", Polarization.H, "TT1"),
    ("XXX_Ds", "TT_3s", Polarization.V, "TT3"),
    ("XXX_Da", "TT_3a", Polarization.V, "TT3"),
)


def _line_id(initial, final):
    return f"{initial}>{final}"


DIRECT_LINE_IDS = tuple(_line_id(i, f) for i, f, _, _ in DIRECT_ARROWS)
INDIRECT_LINE_IDS = tuple(_line_id(i, f) for i, f, _, _ in INDIRECT_ARROWS)
BRIGHT_INDIRECT_LINE_IDS = tuple(
    _line_id(i, f) for i, f, _, _ in INDIRECT_ARROWS if i.startswith("XXX_B")
)
DARK_INDIRECT_LINE_IDS = tuple(
    _line_id(i, f) for i, f, _, _ in INDIRECT_ARROWS if i.startswith("XXX_D")
)

# Lower rungs of the cascade.  XX and X come as H/V pairs whose
# polarizations are correlated; the blockaded biexciton line feeds the dark
# exciton and carries no fine-structure label.
XX_LINE_IDS = ("XX>X:H", "XX>X:V")
X_LINE_IDS = ("X>0:H", "X>0:V")
XX_T3_LINE_ID = "XX_T3>X_dark"

DEFAULT_RELATIVE_INTENSITIES = {
    **{lid: 1.0 for lid in DIRECT_LINE_IDS},
    "XXX_Bs>TT_0": 0.6,
    "XXX_Ba>TT_0": 0.6,
    "XXX_Bs>TT_2s": 1.0,
    "XXX_Ba>TT_2s": 1.0,
    "XXX_Bs>TT_2a": 1.0,
    "XXX_Ba>TT_2a": 1.0,
    **{lid: 0.8 for lid in DARK_INDIRECT_LINE_IDS},
}

# Named selections usable in detector filters.  "XXX_i" is the
# |+1>+-|-1> -> |2>+-|-2> emission line used as the first correlation channel.
LINE_GROUPS = {
    "XXX_direct": DIRECT_LINE_IDS,
    "XXX_indirect": INDIRECT_LINE_IDS,
    "XXX_bright_indirect": BRIGHT_INDIRECT_LINE_IDS,
    "XXX_dark_indirect": DARK_INDIRECT_LINE_IDS,
    "XXX_i": ("XXX_Bs>TT_2s", "XXX_Ba>TT_2s", "XXX_Bs>TT_2a", "XXX_Ba>TT_2a"),
    "XXX_all": DIRECT_LINE_IDS + INDIRECT_LINE_IDS,
    "XX": XX_LINE_IDS,
    "X": X_LINE_IDS,
    "XX_T3": (XX_T3_LINE_ID,),
}
ALL_LINE_IDS = DIRECT_LINE_IDS + INDIRECT_LINE_IDS + XX_LINE_IDS + X_LINE_IDS + (XX_T3_LINE_ID,)


def expand_line_selection(names):
    """Expand group aliases in ``names`` into a sorted tuple of line ids."""
    out = set()
    for name in names:
        if name in LINE_GROUPS:
            out.update(LINE_GROUPS[name])
        elif name in ALL_LINE_IDS:
            out.add(name)
        else:
            raise ConfigError(f"unknown line or line group {name!r}")
    return tuple(sorted(out))


@dataclass(frozen=True)
class FineStructureParams:
    bright_splitting_ueV: float = 10.0
    dark_splitting_ueV: float = 0.5
    bright_dark_gap_ueV: float = 200.0
    line_energies_meV: dict = field(default_factory=lambda: dict(DEFAULT_LINE_ENERGIES_MEV))
    relative_intensities: dict = field(default_factory=lambda: dict(DEFAULT_RELATIVE_INTENSITIES))
    degeneracy_tol_ueV: float = 1.0

    def __post_init__(self):
        if self.bright_splitting_ueV < 0 or self.dark_splitting_ueV < 0:
            raise ConfigError("fine-structure splittings must be >= 0")
        if not self.bright_dark_gap_ueV > 0:
            raise ConfigError("bright_dark_gap_ueV must be > 0")
        if self.degeneracy_tol_ueV < 0:
            raise ConfigError("degeneracy_tol_ueV must be >= 0")
        for lid, value in self.relative_intensities.items():
            if lid not in DEFAULT_RELATIVE_INTENSITIES:
                raise ConfigError(f"relative intensity given for unknown line {lid!r}")
            if not value > 0:
                raise ConfigError(f"relative intensity of {lid} must be > 0")

    def line_energy(self, key):
        try:
            return float(self.line_energies_meV[key])
        except KeyError:
            raise ConfigError(f"line energy for {key!r} missing from configuration") from None

    def intensity(self, line_id):
        return float(self.relative_intensities.get(line_id, DEFAULT_RELATIVE_INTENSITIES[line_id]))


@dataclass(frozen=True)
class ExcitonicState:
    name: str
    kind: ComplexKind
    spin: int
    member: DoubletMember = DoubletMember.NOT_APPLICABLE
    energy_offset_ueV: float = 0.0

    def __post_init__(self):
        # e-triplet/h-triplet combinations reach |m| = 4
        if abs(self.spin) > 4:
            raise ConfigError(f"spin projection {self.spin} out of range")

    @property
    def bright(self):
        return self.kind is ComplexKind.TRIEXCITON and abs(self.spin) == 1


@dataclass(frozen=True)
class TransitionLine:
    initial: ExcitonicState
    final: ExcitonicState
    polarization: Polarization
    photon_energy_meV: float
    relative_intensity: float
    line_id: str
    group: str


def build_triexciton_levels(params):
    """Four ground triexciton states: a bright (|m|=1) and a dark (|m|=2) doublet.

    Offsets are in micro-eV from the dark doublet center; the bright center
    sits ``bright_dark_gap_ueV`` above it.
    """
    if not isinstance(params, FineStructureParams):
        raise ConfigError("expected FineStructureParams")
    gap = params.bright_dark_gap_ueV
    db = params.bright_splitting_ueV / 2
    dd = params.dark_splitting_ueV / 2
    T = ComplexKind.TRIEXCITON
    return [
        ExcitonicState("XXX_Bs", T, 1, DoubletMember.SYMMETRIC, gap + db),
        ExcitonicState("XXX_Ba", T, 1, DoubletMember.ANTISYMMETRIC, gap - db),
        ExcitonicState("XXX_Ds", T, 2, DoubletMember.SYMMETRIC, dd),
        ExcitonicState("XXX_Da", T, 2, DoubletMember.ANTISYMMETRIC, -dd),
    ]


def excited_biexciton_states():
    """The nine e-triplet/h-triplet excited biexciton states."""
    states = []
    for name in TT_STATE_NAMES:
        m = int(name[3])
        member = {"s": DoubletMember.SYMMETRIC, "a": DoubletMember.ANTISYMMETRIC}.get(
            name[4:], DoubletMember.NOT_APPLICABLE
        )
        states.append(ExcitonicState(name, ComplexKind.EXCITED_BIEXCITON_TT, m, member))
    return states


GROUND_BIEXCITON = ExcitonicState(DIRECT_FINAL, ComplexKind.GROUND_BIEXCITON, 0)


def _table(levels, params, arrows, finals):
    by_name = {s.name: s for s in levels}
    if set(by_name) != {"XXX_Bs", "XXX_Ba", "XXX_Ds", "XXX_Da"}:
        raise ConfigError("levels must come from build_triexciton_levels")
    gap = params.bright_dark_gap_ueV
    lines = []
    for init_name, final_name, pol, group in arrows:
        init = by_name[init_name]
        # photon energy = reference (from bright center) + initial offset from bright center
        energy = params.line_energy(final_name) + (init.energy_offset_ueV - gap) * 1e-3
        lid = _line_id(init_name, final_name)
        lines.append(
            TransitionLine(init, finals[final_name], pol, energy, params.intensity(lid), lid, group)
        )
    return lines


def direct_transition_table(levels, params):
    """Second-level pair recombination: one H and one V line, bright states only."""
    return _table(levels, params, DIRECT_ARROWS, {DIRECT_FINAL: GROUND_BIEXCITON})


def indirect_transition_table(levels, params):
    """Ground-level pair recombination into the e-triplet/h-triplet manifold (10 lines)."""
    missing = [n for n in TT_STATE_NAMES if n not in params.line_energies_meV]
    if missing:
        raise ConfigError(f"missing triplet-manifold energies: {', '.join(missing)}")
    finals = {s.name: s for s in excited_biexciton_states()}
    return _table(levels, params, INDIRECT_ARROWS, finals)


def triexciton_lines(params=None):
    params = params or FineStructureParams()
    levels = build_triexciton_levels(params)
    return direct_transition_table(levels, params) + indirect_transition_table(levels, params)


def line_groups(lines):
    """Lines keyed by their spectral group label, in table order."""
    groups = {}
    for line in lines:
        groups.setdefault(line.group, []).append(line)
    return groups


def energy_clusters(lines, tol_ueV):
    """Single-linkage clustering of lines whose photon energies lie within ``tol_ueV``."""
    ordered = sorted(lines, key=lambda ln: ln.photon_energy_meV)
    clusters = []
    for line in ordered:
        if clusters and (line.photon_energy_meV - clusters[-1][-1].photon_energy_meV) * 1e3 <= tol_ueV:
            clusters[-1].append(line)
        else:
            clusters.append([line])
    return clusters


def degree_of_polarization(lines):
    """(I_H - I_V) / (I_H + I_V) summed over ``lines``."""
    ih = sum(ln.relative_intensity for ln in lines if ln.polarization is Polarization.H)
    iv = sum(ln.relative_intensity for ln in lines if ln.polarization is Polarization.V)
    return (ih - iv) / (ih + iv)


def _profile(kind, x, fwhm):
    if kind == "lorentzian":
        half = fwhm / 2
        return half / np.pi / (x * x + half * half)
    if kind == "gaussian":
        sigma = fwhm / (2 * np.sqrt(2 * np.log(2)))
        return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))
    raise ConfigError(f"unknown line profile {kind!r}")


def render_spectrum(lines, polarization, broadening_ueV, grid_meV, profile="lorentzian"):
    """Polarization-resolved emission spectrum on ``grid_meV`` (intensity per meV).

    Each line contributes a unit-area profile of FWHM ``broadening_ueV``
    scaled by its relative intensity; unpolarized lines give half their
    intensity to each of H and V.
    """
    grid = np.asarray(grid_meV, dtype=float)
    if grid.size == 0:
        raise ConfigError("spectrum grid is empty")
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise ConfigError("spectrum grid must be strictly increasing")
    if not broadening_ueV > 0:
        raise ConfigError("broadening must be > 0")
    pol = Polarization(polarization)
    if pol is Polarization.UNPOLARIZED:
        raise ConfigError("render_spectrum needs polarization H or V")
    fwhm = broadening_ueV * 1e-3
    out = np.zeros_like(grid)
    for line in lines:
        if line.polarization is pol:
            weight = line.relative_intensity
        elif line.polarization is Polarization.UNPOLARIZED:
            weight = 0.5 * line.relative_intensity
        else:
            continue
        out += weight * _profile(profile, grid - line.photon_energy_meV, fwhm)
    return out


def spectral_peaks(grid_meV, intensity, rel_prominence=0.02):
    """Energies of resolvable maxima (prominence relative to the global max)."""
    intensity = np.asarray(intensity, dtype=float)
    if intensity.max() <= 0:
        return np.array([])
    idx, _ = find_peaks(intensity, prominence=rel_prominence * intensity.max())
    return np.asarray(grid_meV)[idx]
