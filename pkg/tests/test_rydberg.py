import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydtrans import rydberg
from rydtrans.rydberg import (ALL_CHANNELS, MissingSeriesError, PairChannel,
                              QuantumDefectTable, ResonantChannelError,
                              RydbergLevel, channel_key, foerster_scan,
                              interaction_estimate, level_energy,
                              pair_mismatch, parse_channel, quantum_defect)

# Oracle values computed independently from the Rydberg-Ritz formula with
# the transcribed coefficients (one-line script, see comments below).
DELTA_69S = 3.131221518294102          # 3.1311804 + 0.1784/(69-3.1311804)^2
E_69S_GHZ = -758.2511452115039         # -3289821.1945526227/(69-DELTA_69S)^2


def test_quantum_defect_delta2_zero_gives_delta0():
    t = QuantumDefectTable(entries={"s12": (3.0, 0.0)}, rydberg_ghz=3.2e6)
    for n in (20, 50, 90):
        assert quantum_defect(t, RydbergLevel(n, 0, 0.5)) == 3.0


def test_quantum_defect_69s_oracle(table):
    d = quantum_defect(table, RydbergLevel(69, 0, 0.5))
    assert d == pytest.approx(DELTA_69S, rel=1e-13)
    assert abs(d - 3.1311804) < 1e-3


def test_quantum_defect_asymptotic(table):
    d_large = quantum_defect(table, RydbergLevel(100000, 0, 0.5))
    assert abs(d_large - 3.1311804) < 1e-8


def test_quantum_defect_monotone_toward_delta0(table):
    level = lambda n: RydbergLevel(n, 0, 0.5)
    deltas = [quantum_defect(table, level(n)) for n in range(10, 120)]
    # delta2 > 0 for the S series, so delta(n) decreases toward delta0
    assert all(a > b for a, b in zip(deltas, deltas[1:]))
    assert all(d > 3.1311804 for d in deltas)


def test_missing_series_is_loud(table):
    with pytest.raises(MissingSeriesError):
        quantum_defect(table, RydbergLevel(50, 2, 1.5))


def test_level_invariants():
    with pytest.raises(ValueError):
        RydbergLevel(4, 0, 0.5)
    with pytest.raises(ValueError):
        RydbergLevel(30, 30, 29.5)
    with pytest.raises(ValueError):
        RydbergLevel(30, 1, 2.5)
    with pytest.raises(ValueError):
        RydbergLevel(30, 0, -0.5)


def test_level_energy_deterministic(table):
    a = level_energy(table, RydbergLevel(69, 0, 0.5))
    b = level_energy(table, RydbergLevel(69, 0, 0.5))
    assert a == b


def test_level_energy_oracle(table):
    assert level_energy(table, RydbergLevel(69, 0, 0.5)) == \
        pytest.approx(E_69S_GHZ, rel=1e-12)
    assert level_energy(table, RydbergLevel(69, 0, 0.5)) < 0


def test_level_energy_ratio_identity(table):
    e69 = level_energy(table, RydbergLevel(69, 0, 0.5))
    e70 = level_energy(table, RydbergLevel(70, 0, 0.5))
    d69 = quantum_defect(table, RydbergLevel(69, 0, 0.5))
    d70 = quantum_defect(table, RydbergLevel(70, 0, 0.5))
    assert e70 / e69 == pytest.approx(((69 - d69) / (70 - d70)) ** 2, rel=1e-13)


def test_level_energy_nonphysical_effective_n():
    t = QuantumDefectTable(entries={"s12": (5.9, 0.0)}, rydberg_ghz=3.2e6)
    with pytest.raises(ValueError, match="effective quantum number"):
        level_energy(t, RydbergLevel(5, 0, 0.5))


@settings(max_examples=60)
@given(n=st.integers(min_value=10, max_value=119),
       series=st.sampled_from([(0, 0.5), (1, 0.5), (1, 1.5)]))
def test_energy_strictly_increasing_in_n(n, series):
    table = QuantumDefectTable.default()
    l, j = series
    e_n = level_energy(table, RydbergLevel(n, l, j))
    e_next = level_energy(table, RydbergLevel(n + 1, l, j))
    assert e_next > e_n


def test_pair_mismatch_matches_cached_energies(table):
    for n in (60, 69, 75):
        for ch in ALL_CHANNELS:
            pc = pair_mismatch(table, n, ch)
            direct = (level_energy(table, pc.final[0])
                      + level_energy(table, pc.final[1])
                      - level_energy(table, pc.initial[0])
                      - level_energy(table, pc.initial[1]))
            assert pc.mismatch_ghz == direct


def test_pair_mismatch_antisymmetric_under_swap(table):
    pc = pair_mismatch(table, 69, (1.5, 0.5))
    swapped = (sum(level_energy(table, lv) for lv in pc.initial)
               - sum(level_energy(table, lv) for lv in pc.final))
    assert swapped == pytest.approx(-pc.mismatch_ghz, rel=1e-14)


def test_pair_mismatch_identical_pairs_cancel(table):
    # self-mismatch: the same four levels on both sides sum to zero
    levels = [RydbergLevel(69, 0, 0.5), RydbergLevel(67, 0, 0.5)]
    total = sum(level_energy(table, lv) for lv in levels)
    assert total - total == 0.0


def test_pair_mismatch_needs_all_levels(table):
    with pytest.raises(ValueError):
        pair_mismatch(table, 6, (0.5, 0.5))


def test_channel_keys_round_trip():
    for ch in ALL_CHANNELS:
        assert parse_channel(channel_key(ch)) == ch
    with pytest.raises(ValueError):
        parse_channel("d52d52")


def test_scan_single_point_consistency(table):
    scan = foerster_scan(table, [69], [(1.5, 0.5)])
    assert len(scan.rows) == 1
    n, ch, de = scan.rows[0]
    assert (n, ch) == (69, (1.5, 0.5))
    assert de == pair_mismatch(table, 69, ch).mismatch_ghz
    assert scan.crossings == []


def test_scan_constant_sign_channel_has_no_crossings(table):
    scan = foerster_scan(table, range(60, 81), [(1.5, 1.5)])
    signs = {math.copysign(1.0, de) for _, _, de in scan.rows}
    assert signs == {1.0}
    assert scan.crossings == []


def test_scan_finds_crossings_near_70(table):
    scan = foerster_scan(table, range(60, 81), ALL_CHANNELS)
    assert len(scan.rows) == 21 * 4
    assert len(scan.crossings) >= 2
    for crossing in scan.crossings:
        assert 66 <= crossing["n_low"] and crossing["n_high"] <= 74


def test_scan_input_validation(table):
    with pytest.raises(ValueError):
        foerster_scan(table, [], ALL_CHANNELS)
    with pytest.raises(ValueError):
        foerster_scan(table, range(60, 70), [])


def test_blockade_radius_gamma_power_law(table):
    kw = dict(channel=(1.5, 0.5), branch="c6")
    r1 = interaction_estimate(table, 69, gamma_eit_mhz=1.9, **kw)
    r2 = interaction_estimate(table, 69, gamma_eit_mhz=3.8, **kw)
    assert r2.blockade_radius_um == \
        pytest.approx(r1.blockade_radius_um / 2 ** (1 / 6), rel=1e-12)


def test_blockade_radius_unit_normalization(table):
    # pick Gamma_EIT numerically equal to C3/(1 um)^3: r_b must be 1 um
    m = interaction_estimate(table, 69, (1.5, 0.5), gamma_eit_mhz=1.0,
                             branch="c3")
    m_unit = interaction_estimate(table, 69, (1.5, 0.5),
                                  gamma_eit_mhz=m.c3_ghz_um3 * 1e3,
                                  branch="c3")
    assert m_unit.blockade_radius_um == pytest.approx(1.0, rel=1e-12)


def test_c6_quadruples_when_c3_doubles(table):
    base = interaction_estimate(table, 69, (1.5, 0.5), gamma_eit_mhz=1.9)
    boosted = interaction_estimate(table, 69, (1.5, 0.5), gamma_eit_mhz=1.9,
                                   angular_prefactor=math.sqrt(2.0))
    assert boosted.c3_ghz_um3 == pytest.approx(2 * base.c3_ghz_um3, rel=1e-12)
    assert boosted.c6_ghz_um6 == pytest.approx(4 * base.c6_ghz_um6, rel=1e-12)


def test_c6_consistent_with_c3_and_mismatch(table):
    m = interaction_estimate(table, 69, (1.5, 0.5), gamma_eit_mhz=1.9)
    assert m.c6_ghz_um6 == pytest.approx(
        m.c3_ghz_um3 ** 2 / abs(m.mismatch_ghz), rel=1e-14)


def test_resonant_channel_requires_c3_branch(table, monkeypatch):
    initial, final = rydberg.pair_levels(69, (1.5, 0.5))
    degenerate = PairChannel(initial=initial, final=final, mismatch_ghz=0.0)
    monkeypatch.setattr(rydberg, "pair_mismatch", lambda *a, **k: degenerate)
    with pytest.raises(ResonantChannelError):
        interaction_estimate(table, 69, (1.5, 0.5), gamma_eit_mhz=1.9,
                             branch="c6")
    m = interaction_estimate(table, 69, (1.5, 0.5), gamma_eit_mhz=1.9,
                             branch="c3")
    assert m.blockade_radius_um > 0
    assert math.isinf(m.c6_ghz_um6)


def test_table_invariants():
    with pytest.raises(ValueError, match="delta0"):
        QuantumDefectTable(entries={"s12": (-1.0, 0.0)}, rydberg_ghz=3.2e6)
    with pytest.raises(ValueError, match="P3/2"):
        QuantumDefectTable(entries={"s12": (3.0, 0.0), "p12": (2.0, 0.0),
                                    "p32": (2.5, 0.0)}, rydberg_ghz=3.2e6)


def test_table_file_errors(tmp_path):
    bad = tmp_path / "defects.txt"
    bad.write_text("rydberg_ghz = 3.2e6\nseries.s12.delta0 = 3.0\n")
    with pytest.raises(ValueError, match="delta0 and delta2"):
        QuantumDefectTable.from_file(bad)
    bad.write_text("mystery = 1\n")
    with pytest.raises(ValueError, match="unrecognized key"):
        QuantumDefectTable.from_file(bad)
    bad.write_text("series.s12.delta0 = 3.0\nseries.s12.delta2 = 0.1\n")
    with pytest.raises(ValueError, match="rydberg_ghz"):
        QuantumDefectTable.from_file(bad)
