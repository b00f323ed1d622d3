import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sgmod.capacity import (CurveTable, Receiver, SweepSpec, c_eff, capacity_gap_db, ebn0_of,
                            limit_ebn0, s_for_ebn0, s_grid_for_ebn0_range, sic_threshold,
                            sweep_fig2, theorem1_rate)
from sgmod.core import LN2, EbN0, awgn_capacity_fixed_point, biawgn_capacity
from sgmod.errors import ConfigurationError, DomainError

S_SET = (0.5, 1.0, 3.0, 10.0)


def awgn_limit(s):
    return 0.5 * math.log2(1.0 + s)


def quadratic_envelope():
    """Largest |C(g) - g/(2 ln 2)| / g^2 on a grid of small SNRs."""
    g = np.geomspace(1e-4, 1.0, 400)
    return float(np.max(np.abs((biawgn_capacity(g) - g / (2 * LN2)) / g**2)))


class TestCEff:
    def test_vanishing_snr(self):
        assert c_eff(10.0, 1e-9) == pytest.approx(0.0, abs=1e-9)

    def test_alpha_100_gap_within_envelope(self):
        gap = awgn_limit(3.0) - c_eff(100.0, 3.0)
        assert 0 < gap <= quadratic_envelope() * math.log(4.0) ** 2 / 100.0

    @pytest.mark.parametrize("s", S_SET)
    def test_large_alpha_limit(self, s):
        assert abs(c_eff(1e6, s) - awgn_limit(s)) <= 1e-4

    @pytest.mark.parametrize("s", S_SET)
    def test_increases_with_alpha(self, s):
        vals = [c_eff(a, s) for a in (1, 3, 10, 30, 100, 1000)]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        assert vals[-1] < awgn_limit(s)

    @pytest.mark.parametrize("s", S_SET)
    def test_gap_scales_inversely_with_alpha(self, s):
        for a in (50, 100, 200):
            ratio = (awgn_limit(s) - c_eff(2 * a, s)) / (awgn_limit(s) - c_eff(a, s))
            assert 0.4 <= ratio <= 0.6

    @given(st.floats(0.1, 1000.0), st.floats(0.01, 100.0))
    def test_dominated_by_awgn(self, alpha, s):
        assert c_eff(alpha, s) <= awgn_limit(s) + 1e-12

    @pytest.mark.parametrize("alpha,s", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
    def test_domain(self, alpha, s):
        with pytest.raises(DomainError):
            c_eff(alpha, s)

    def test_threshold(self):
        assert sic_threshold(1.0, 1.0) == pytest.approx(LN2)


class TestEbN0Of:
    def test_limit_alpha_infinity(self):
        assert ebn0_of(1e6, 3.0).ratio == pytest.approx(1.5, abs=1e-3)
        assert ebn0_of(1e6, 1.0).ratio == pytest.approx(1.0, abs=1e-3)

    @pytest.mark.parametrize("s", S_SET)
    def test_limit_relative(self, s):
        assert ebn0_of(1e6, s).ratio == pytest.approx(limit_ebn0(s), rel=1e-3)

    @pytest.mark.parametrize("s", S_SET)
    def test_limit_closure(self, s):
        assert awgn_capacity_fixed_point(limit_ebn0(s)) == pytest.approx(awgn_limit(s), abs=1e-6)

    @pytest.mark.parametrize("s", S_SET)
    def test_round_trip_converges(self, s):
        errs = [abs(awgn_capacity_fixed_point(ebn0_of(a, s)) - awgn_limit(s))
                for a in (10, 100, 1e4)]
        assert errs[0] > errs[1] > errs[2]

    def test_zero_snr_rejected(self):
        with pytest.raises(DomainError):
            ebn0_of(10.0, 0.0)

    def test_inverse(self):
        s = s_for_ebn0(100.0, EbN0.from_db(3.0))
        assert ebn0_of(100.0, s).db == pytest.approx(3.0, abs=1e-9)

    def test_inverse_below_reach(self):
        with pytest.raises(DomainError):
            s_for_ebn0(10.0, 0.5)


class TestOffsetRate:
    def test_worked_example(self):
        theta = LN2 - 0.005
        assert theorem1_rate(1.0, 1.0, 0.01) == pytest.approx(biawgn_capacity(theta), abs=1e-12)

    def test_continuity_at_zero(self):
        assert theorem1_rate(2.0, 0.5, 0.0) == pytest.approx(c_eff(2.0, 4.0), rel=1e-12)
        assert theorem1_rate(2.0, 0.5, 1e-9) == pytest.approx(c_eff(2.0, 4.0), rel=1e-6)

    def test_increasing_as_delta_shrinks(self):
        vals = [theorem1_rate(1.0, 1.0, d) for d in (0.5, 0.1, 0.01, 0.0)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_nonpositive_threshold(self):
        with pytest.raises(DomainError):
            theorem1_rate(1.0, 1.0, 2.0)

    def test_negative_delta(self):
        with pytest.raises(DomainError):
            theorem1_rate(1.0, 1.0, -0.1)


class TestSweep:
    def test_empty_list_rejected(self):
        with pytest.raises(ConfigurationError):
            SweepSpec((), (1.0,))
        with pytest.raises(ConfigurationError):
            SweepSpec((10.0,), ())

    def test_bad_receiver(self):
        with pytest.raises(ConfigurationError):
            SweepSpec((10.0,), (1.0,), "mmse")

    def test_sic_rows(self):
        spec = SweepSpec((10, 100, 500), tuple(np.geomspace(0.1, 30, 12)))
        table = sweep_fig2(spec)
        assert len(table.rows) == 36
        db = [r.ebn0_db for r in table.rows]
        assert db == sorted(db)
        for alpha in (10, 100, 500):
            rows = sorted(table.select("sic", alpha), key=lambda r: r.ebn0_db)
            eff = [r.spectral_efficiency for r in rows]
            assert all(b > a for a, b in zip(eff, eff[1:]))

    def test_awgn_rows_share_abscissae(self):
        spec = SweepSpec((100,), (1.0, 3.0), "awgn")
        sic = sweep_fig2(SweepSpec((100,), (1.0, 3.0)))
        awgn = sweep_fig2(spec)
        for a, b in zip(sic.rows, awgn.rows):
            assert a.ebn0_db == b.ebn0_db
            assert b.spectral_efficiency > a.spectral_efficiency

    def test_parallel_matches_serial(self):
        spec = SweepSpec((10, 100), (0.5, 2.0, 8.0))
        assert sweep_fig2(spec, workers=2).rows == sweep_fig2(spec).rows

    def test_two_stage_row(self):
        spec = SweepSpec((2.0,), (4.0,), Receiver.TWO_STAGE,
                         two_stage={"t_max": 8.0, "dt": 0.02, "max_iter": 150})
        (row,) = sweep_fig2(spec).rows
        assert 0 < row.spectral_efficiency <= awgn_limit(4.0)
        assert row.ebn0.ratio == pytest.approx(4.0 / (2 * row.spectral_efficiency))

    def test_export_order(self):
        rows = sweep_fig2(SweepSpec((500, 10), (1.0, 5.0))).rows
        rows += sweep_fig2(SweepSpec((10,), (2.0,), "awgn")).rows
        key = [(r.receiver.value, r.alpha, r.ebn0_db) for r in CurveTable(rows).sorted_for_export()]
        assert key == sorted(key)


class TestHelpers:
    def test_grid_spans_range(self):
        s = s_grid_for_ebn0_range(100.0, 0.0, 10.0, 5)
        db = [ebn0_of(100.0, v).db for v in s]
        assert np.allclose(db, [0, 2.5, 5, 7.5, 10], atol=1e-9)

    def test_gap_zero_on_capacity_curve(self):
        e = EbN0(1.5)
        assert capacity_gap_db(1.0, e) == pytest.approx(0.0, abs=1e-12)
        assert capacity_gap_db(0.0, e) == math.inf

    def test_receiver_aliases(self):
        assert Receiver.parse("pic") is Receiver.TWO_STAGE
        assert Receiver.parse("SIC") is Receiver.SIC
