"""Rydberg level structure from quantum defects.

Level energies follow the Rydberg-Ritz form E = -Ry/(n - delta(n))^2 with
delta(n) = delta0 + delta2/(n - delta0)^2. On top of that this module
enumerates the pair-state channels

    |nS1/2, (n-2)S1/2>  ->  |(n-1)P_j1, (n-2)P_j2>

whose energy mismatch passes through zero for rubidium near n = 70,
locates those zero crossings, and estimates the resulting dipole-dipole
interaction strength and blockade radius.

All energies are in GHz (divided by h); lengths in micrometers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

from .constants import DIPOLE_PAIR_UNIT_GHZ_UM3

_DEFAULT_DATA = "rb87_quantum_defects.txt"

# Channel (j1, j2) refers to the final pair |(n-1)P_j1, (n-2)P_j2>.
ALL_CHANNELS: tuple[tuple[float, float], ...] = (
    (0.5, 0.5), (0.5, 1.5), (1.5, 0.5), (1.5, 1.5),
)


class MissingSeriesError(KeyError):
    """Raised when a (L, J) series is absent from the defect table."""


def channel_key(channel: tuple[float, float]) -> str:
    """Compact channel name, e.g. (0.5, 1.5) -> 'p12p32'."""
    return "p%d2p%d2" % (int(round(2 * channel[0])), int(round(2 * channel[1])))


def parse_channel(key: str) -> tuple[float, float]:
    """Inverse of :func:`channel_key`; raises ValueError on bad input."""
    for ch in ALL_CHANNELS:
        if channel_key(ch) == key.lower():
            return ch
    raise ValueError(f"unknown channel {key!r}; expected one of "
                     + ", ".join(channel_key(c) for c in ALL_CHANNELS))


def _series_key(l: int, j: float) -> str:
    # half-integer J spelled as numerator + denominator, e.g. p32 = P3/2
    letter = "spdfghi"[l] if l < 7 else f"l{l}"
    return "%s%d2" % (letter, int(round(2 * j)))


@dataclass(frozen=True)
class RydbergLevel:
    """A single Rydberg level |n, L, J>."""

    n: int
    l: int
    j: float

    def __post_init__(self):
        if self.n < 5:
            raise ValueError(f"n = {self.n} below the Rydberg regime")
        if not 0 <= self.l < self.n:
            raise ValueError(f"l = {self.l} must satisfy 0 <= l < n = {self.n}")
        if self.j <= 0 or abs(abs(self.j - self.l) - 0.5) > 1e-12:
            raise ValueError(f"j = {self.j} incompatible with l = {self.l}")

    @property
    def series(self) -> str:
        return _series_key(self.l, self.j)

    def __str__(self):
        return f"{self.n}{'SPDFGHI'[self.l]}{int(round(2 * self.j))}/2"


@dataclass(frozen=True)
class QuantumDefectTable:
    """Rydberg-Ritz coefficients per series plus the Rydberg constant.

    entries maps a series key like 's12' to (delta0, delta2);
    rydberg_ghz is the mass-corrected Rydberg constant in GHz.
    """

    entries: dict[str, tuple[float, float]]
    rydberg_ghz: float

    def __post_init__(self):
        if self.rydberg_ghz <= 0:
            raise ValueError("rydberg_ghz must be positive")
        for key in ("s12", "p12", "p32"):
            if key in self.entries and self.entries[key][0] <= 0:
                raise ValueError(f"series {key}: delta0 must be positive")
        if all(k in self.entries for k in ("s12", "p12", "p32")):
            d_s, d_p12, d_p32 = (self.entries[k][0] for k in ("s12", "p12", "p32"))
            if not d_s > d_p12 > d_p32:
                raise ValueError(
                    "expected delta0(S1/2) > delta0(P1/2) > delta0(P3/2), got "
                    f"{d_s}, {d_p12}, {d_p32}")

    def coefficients(self, level: RydbergLevel) -> tuple[float, float]:
        try:
            return self.entries[level.series]
        except KeyError:
            raise MissingSeriesError(
                f"no quantum-defect data for series {level.series} "
                f"(level {level}); available: {sorted(self.entries)}") from None

    @classmethod
    def from_file(cls, path) -> "QuantumDefectTable":
        """Load from a 'key = value' text file (see data/ for the format)."""
        entries: dict[str, dict[str, float]] = {}
        rydberg = None
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value'")
                key, value = (s.strip() for s in line.split("=", 1))
                try:
                    num = float(value)
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: bad number {value!r}") from None
                if key == "rydberg_ghz":
                    rydberg = num
                elif key.startswith("series."):
                    parts = key.split(".")
                    if len(parts) != 3 or parts[2] not in ("delta0", "delta2"):
                        raise ValueError(f"{path}:{lineno}: unrecognized key {key!r}")
                    entries.setdefault(parts[1], {})[parts[2]] = num
                else:
                    raise ValueError(f"{path}:{lineno}: unrecognized key {key!r}")
        if rydberg is None:
            raise ValueError(f"{path}: missing rydberg_ghz")
        table = {}
        for series, coeffs in entries.items():
            if set(coeffs) != {"delta0", "delta2"}:
                raise ValueError(f"{path}: series {series} needs delta0 and delta2")
            table[series] = (coeffs["delta0"], coeffs["delta2"])
        return cls(entries=table, rydberg_ghz=rydberg)

    @classmethod
    def default(cls) -> "QuantumDefectTable":
        """The packaged Rb table."""
        ref = resources.files(__package__).joinpath("data", _DEFAULT_DATA)
        with resources.as_file(ref) as path:
            return cls.from_file(path)


def quantum_defect(table: QuantumDefectTable, level: RydbergLevel) -> float:
    """delta(n) = delta0 + delta2/(n - delta0)^2 for the level's series."""
    d0, d2 = table.coefficients(level)
    return d0 + d2 / (level.n - d0) ** 2


def level_energy(table: QuantumDefectTable, level: RydbergLevel) -> float:
    """Level energy in GHz relative to the ionization limit (negative)."""
    n_eff = level.n - quantum_defect(table, level)
    if n_eff <= 0:
        raise ValueError(f"nonphysical effective quantum number {n_eff} for {level}")
    return -table.rydberg_ghz / n_eff**2


@dataclass(frozen=True)
class PairChannel:
    """An initial/final pair of two-atom states and their energy mismatch."""

    initial: tuple[RydbergLevel, RydbergLevel]
    final: tuple[RydbergLevel, RydbergLevel]
    mismatch_ghz: float

    @property
    def key(self) -> str:
        return channel_key((self.final[0].j, self.final[1].j))


def pair_levels(n: int, channel: tuple[float, float]):
    """The four levels of the |nS,(n-2)S> -> |(n-1)P,(n-2)P> channel."""
    j1, j2 = channel
    initial = (RydbergLevel(n, 0, 0.5), RydbergLevel(n - 2, 0, 0.5))
    final = (RydbergLevel(n - 1, 1, j1), RydbergLevel(n - 2, 1, j2))
    return initial, final


def pair_mismatch(table: QuantumDefectTable, n: int,
                  channel: tuple[float, float]) -> PairChannel:
    """Energy mismatch E(final) - E(initial) at infinite separation, in GHz."""
    if n < 7:
        raise ValueError(f"n = {n}: all four channel levels must exist (n >= 7)")
    initial, final = pair_levels(n, channel)
    mismatch = (level_energy(table, final[0]) + level_energy(table, final[1])
                - level_energy(table, initial[0]) - level_energy(table, initial[1]))
    return PairChannel(initial=initial, final=final, mismatch_ghz=mismatch)


@dataclass
class ScanResult:
    """Output of :func:`foerster_scan`.

    rows holds (n, channel, mismatch_ghz) for every scanned point; crossings
    lists the integer intervals where the mismatch changes sign.
    """

    rows: list[tuple[int, tuple[float, float], float]]
    crossings: list[dict] = field(default_factory=list)


def foerster_scan(table: QuantumDefectTable, n_range: Iterable[int],
                  channels: Sequence[tuple[float, float]] = ALL_CHANNELS) -> ScanResult:
    """Scan pair mismatches over integer n and report sign changes.

    Crossings are reported as {n_low, n_high, channel} for consecutive
    integers whose mismatches have opposite sign; n is physically integer
    so no fractional interpolation is attempted.
    """
    ns = sorted(set(int(n) for n in n_range))
    if not ns:
        raise ValueError("empty n range")
    if not channels:
        raise ValueError("empty channel list")
    rows = []
    crossings = []
    for channel in channels:
        prev = None
        for n in ns:
            de = pair_mismatch(table, n, channel).mismatch_ghz
            rows.append((n, channel, de))
            if prev is not None and prev[0] == n - 1 and prev[1] * de < 0:
                crossings.append({"n_low": n - 1, "n_high": n,
                                  "channel": channel_key(channel)})
            prev = (n, de)
    rows.sort(key=lambda r: (r[0], channel_key(r[1])))
    return ScanResult(rows=rows, crossings=crossings)


class ResonantChannelError(ValueError):
    """C6 requested on a resonant channel; the C3 branch applies there."""


@dataclass(frozen=True)
class InteractionModel:
    """Dipole-dipole interaction estimate for one channel at one n.

    c3_ghz_um3 and c6_ghz_um6 are interaction coefficients in frequency
    units; blockade_radius_um is where the interaction shift equals the
    EIT linewidth, using the branch recorded in `branch`.
    """

    c3_ghz_um3: float
    c6_ghz_um6: float
    blockade_radius_um: float
    branch: str
    mismatch_ghz: float

    def __post_init__(self):
        if self.blockade_radius_um <= 0:
            raise ValueError("blockade radius must be positive")


def interaction_estimate(table: QuantumDefectTable, n: int,
                         channel: tuple[float, float],
                         gamma_eit_mhz: float,
                         branch: str = "c6",
                         angular_prefactor: float = 1.0) -> InteractionModel:
    """Estimate C3, C6 and the blockade radius for a pair channel.

    Radial dipole matrix elements use the near-diagonal semiclassical
    approximation <n,L|r|n',L+-1> ~ (3/2) n_c^2 a0 with n_c the mean
    effective quantum number of the two levels (adequate for
    |delta n_eff| <~ 2). Angular factors are absorbed into
    angular_prefactor, order unity by default.

    The blockade radius compares the interaction shift against the EIT
    linewidth Gamma_EIT (an ordinary frequency, MHz):
    r_b = (C6/Gamma_EIT)^(1/6) on the 'c6' branch,
    r_b = (C3/Gamma_EIT)^(1/3) on the 'c3' branch.
    """
    if branch not in ("c3", "c6"):
        raise ValueError(f"branch must be 'c3' or 'c6', got {branch!r}")
    if gamma_eit_mhz <= 0:
        raise ValueError("gamma_eit_mhz must be positive")
    pair = pair_mismatch(table, n, channel)
    initial, final = pair.initial, pair.final

    def n_eff(level):
        return level.n - quantum_defect(table, level)

    # one dipole per atom: nS -> (n-1)P_j1 and (n-2)S -> (n-2)P_j2
    nc1 = 0.5 * (n_eff(initial[0]) + n_eff(final[0]))
    nc2 = 0.5 * (n_eff(initial[1]) + n_eff(final[1]))
    d1 = 1.5 * nc1**2 * angular_prefactor
    d2 = 1.5 * nc2**2 * angular_prefactor
    c3 = d1 * d2 * DIPOLE_PAIR_UNIT_GHZ_UM3
    gamma_ghz = gamma_eit_mhz * 1e-3

    if pair.mismatch_ghz == 0.0:
        if branch == "c6":
            raise ResonantChannelError(
                f"channel {pair.key} at n = {n} is exactly resonant; "
                "use branch='c3'")
        c6 = math.inf
    else:
        c6 = c3**2 / abs(pair.mismatch_ghz)

    if branch == "c3":
        r_b = (c3 / gamma_ghz) ** (1.0 / 3.0)
    else:
        r_b = (c6 / gamma_ghz) ** (1.0 / 6.0)
    return InteractionModel(c3_ghz_um3=c3, c6_ghz_um6=c6,
                            blockade_radius_um=r_b, branch=branch,
                            mismatch_ghz=pair.mismatch_ghz)
