import math

import numpy as np
import pytest

from sgmod.density import Mode
from sgmod.errors import ConfigurationError
from sgmod.linksim import (LinkSimConfig, _cancel, combine_and_estimate, compare_with_de,
                           de_reference, generate_world, matched_filter, measured_sinr,
                           modulate_slot, pic_iteration, run_linksim, sic_decode_step)


def small(**kw):
    base = dict(n_dims=64, m_substreams=4, k_streams=30, w=1, l_bits=60, sigma2=0.5, seed=5,
                iterations=3, slots=8)
    base.update(kw)
    return LinkSimConfig(**base)


def isolate_stream(state, keep=0, noise=False):
    """Silence every stream except ``keep`` (and optionally the noise)."""
    mask = np.zeros(state.chips.shape[0], bool)
    mask[keep] = True
    state.chips[~mask] = 0.0
    if not noise:
        state.noise[:] = 0.0
    _cancel(state)
    return state


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(l_bits=61), dict(k_streams=31), dict(slots=1),
                                    dict(sigma2=0.0), dict(power=-1.0), dict(n_dims=0),
                                    dict(iterations=1.5)])
    def test_rejected(self, kw):
        with pytest.raises(ConfigurationError):
            small(**kw)

    def test_derived(self):
        cfg = small()
        assert cfg.sections == 3 and cfg.section_len == 20 and cfg.total_slots == 9
        assert cfg.load == pytest.approx(30 / 64)


class TestWorld:
    def test_deterministic(self):
        a, b = generate_world(small()), generate_world(small())
        for name in ("signatures", "bits", "positions", "chips", "noise", "received",
                     "residual", "x_hat"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_seed_matters(self):
        assert not np.array_equal(generate_world(small()).bits,
                                  generate_world(small(seed=6)).bits)

    def test_signatures(self):
        s = generate_world(small()).signatures
        assert np.allclose(np.abs(s), 1 / 8)
        assert np.allclose(np.einsum("kmn,kmn->km", s, s), 1.0)
        flat = s.reshape(-1, 64)
        cross = flat @ flat.T
        off = cross[~np.eye(cross.shape[0], dtype=bool)]
        assert abs(off.mean()) < 0.01
        assert off.var() == pytest.approx(1 / 64, rel=0.05)

    def test_replicas_in_distinct_sections(self):
        cfg = small(m_substreams=3, w=1)
        pos = generate_world(cfg).positions
        sections = pos // cfg.section_len
        assert np.all(np.sort(sections, axis=1) == np.arange(3)[None, :, None])

    def test_each_replica_fills_its_sections(self):
        cfg = small()
        pos = generate_world(cfg).positions
        for k in range(cfg.k_streams):
            for m in range(cfg.m_substreams):
                assert np.array_equal(np.sort(pos[k, m]), np.arange(cfg.l_bits))

    def test_received_power(self):
        cfg = LinkSimConfig(200, 8, 150, 1, 90, 0.3, power=2.0, seed=2, slots=8)
        st = generate_world(cfg)
        lo = cfg.sections * cfg.section_len  # all streams active from here on
        energy = (st.received[lo:] ** 2).sum(axis=1) / cfg.n_dims
        se = energy.std(ddof=1) / math.sqrt(energy.size)
        assert abs(energy.mean() - (cfg.load * cfg.power + cfg.sigma2)) < 3 * se


class TestModulation:
    def test_single_replica(self):
        cfg = small(m_substreams=1)
        st = isolate_stream(generate_world(cfg))
        slot = 4
        out = modulate_slot(st, slot, noise=False)
        lo, hi = (slot - 1) * cfg.section_len, slot * cfg.section_len
        expected = st.chips[0, 0, lo:hi, None] * st.signatures[0, 0][None, :]
        assert np.array_equal(out, expected)

    def test_sign_flip_negates(self):
        st = generate_world(small())
        before = modulate_slot(st, 5, noise=False)
        st.chips *= -1
        assert np.array_equal(modulate_slot(st, 5, noise=False), -before)

    def test_matches_received(self):
        cfg = small()
        st = generate_world(cfg)
        stacked = np.concatenate([modulate_slot(st, s) for s in range(1, cfg.total_slots + 1)])
        assert np.allclose(stacked, st.received, atol=1e-12)

    def test_slot_range(self):
        with pytest.raises(ConfigurationError):
            modulate_slot(generate_world(small()), 0)


class TestMatchedFilter:
    def test_single_stream_returns_bit(self):
        st = isolate_stream(generate_world(small(m_substreams=1)))
        q = matched_filter(st)
        active = st.chips[0, 0] != 0
        assert np.allclose(q[0, 0, active], st.chips[0, 0, active], atol=1e-12)

    def test_perfect_cancellation_noise_statistics(self):
        cfg = LinkSimConfig(128, 4, 60, 1, 300, 0.8, seed=9, slots=6)
        st = generate_world(cfg)
        st.est = st.chips.copy()
        _cancel(st)
        assert np.array_equal(st.residual, st.noise)
        q = matched_filter(st)
        active = st.chips != 0
        e = (q - st.chips / math.sqrt(cfg.m_substreams))[active]
        assert abs(e.mean()) < 3 * math.sqrt(cfg.sigma2 / e.size)
        # filter noise variance is sigma2/P; standard error of a variance ~ var*sqrt(2/n)
        assert abs(e.var() - cfg.sigma2) < 3 * cfg.sigma2 * math.sqrt(2 / e.size)

    def test_residual_energy_is_noise_level(self):
        cfg = LinkSimConfig(128, 4, 60, 1, 300, 0.8, seed=9, slots=6)
        st = generate_world(cfg)
        st.est = st.chips.copy()
        _cancel(st)
        per_dim = st.residual.ravel() ** 2
        se = per_dim.std(ddof=1) / math.sqrt(per_dim.size)
        assert abs(per_dim.mean() - cfg.sigma2) < 3 * se

    def test_zero_estimates_leave_received(self):
        st = generate_world(small())
        assert np.allclose(st.residual, st.received, atol=1e-12)


class TestCombining:
    def test_uniform_weights(self):
        st = generate_world(small())
        st.x_hat[:] = 1.7
        q = matched_filter(st)
        det = st.detected
        _, y, z_pred = combine_and_estimate(st, q, det)
        sym = st.replica_symbols(det)
        qr = q[st.pk_stream[det][:, None, None], np.arange(4)[None, :, None], sym]
        assert np.allclose(y, qr.mean(axis=1), atol=1e-12)
        assert np.allclose(z_pred, 1 / 1.7)

    def test_noiseless_genie_saturates(self):
        cfg = small()
        st = generate_world(cfg)
        st.noise[:] = 0.0
        st.est = st.chips.copy()
        _cancel(st)
        st.x_hat[:] = 1e-6
        ext, _, _ = combine_and_estimate(st)
        bits = st.bits[st.detected]
        assert np.array_equal(np.sign(ext), np.broadcast_to(bits[:, None, :], ext.shape))
        assert np.all(np.abs(ext) > 1 - 1e-9)

    def test_measured_sinr(self):
        bits = np.array([[1.0, -1.0, 1.0, -1.0]])
        y = np.array([[1.1, -0.9, 1.0, -1.0]])
        uy = y * bits
        assert measured_sinr(y, bits)[0] == pytest.approx(uy.mean() ** 2 / uy.var(ddof=1))
        assert measured_sinr(bits, bits)[0] == math.inf

    def test_measured_matches_predicted_sinr(self):
        cfg = LinkSimConfig(200, 16, 200, 2, 200, 0.5, seed=1, iterations=3)
        st = generate_world(cfg)
        det = st.detected
        bulk = (st.pk_start[det] >= 6) & (st.pk_start[det] <= 12)
        for _ in range(3):
            _, y, z_pred = combine_and_estimate(st)
            ms = measured_sinr(y, st.bits[det])
            assert ms[bulk].mean() == pytest.approx(z_pred[bulk].mean(), rel=0.10)
            pic_iteration(st)


class TestReceiver:
    def test_estimates_bounded(self):
        st = generate_world(small())
        for _ in range(3):
            pic_iteration(st)
            assert np.all(np.abs(st.est) <= 1.0)

    def test_error_decreases(self):
        res = run_linksim(LinkSimConfig(200, 16, 200, 2, 200, 0.5, seed=4, iterations=3))
        err = res.mean_abs_error
        assert err[0] == pytest.approx(1.0)
        assert np.all(np.diff(err) <= 0)

    def test_infinite_threshold_decodes_nothing(self):
        res = run_linksim(small(), Mode.SIC, math.inf)
        assert all(d.size == 0 for d in res.decoded)

    def test_zero_threshold_decodes_everything(self):
        cfg = small(frozen_tail=False)
        st = generate_world(cfg)
        sic_decode_step(st, 0.0)
        assert st.decoded.all()
        assert np.array_equal(st.residual, st.noise)

    def test_decoded_packets_stop_interfering(self):
        cfg = small(frozen_tail=False)
        st = generate_world(cfg)
        sic_decode_step(st, 0.0)
        q = matched_filter(st) - st.est / math.sqrt(cfg.m_substreams)
        active = st.chips != 0
        assert q[active].var() == pytest.approx(cfg.sigma2, rel=0.1)

    def test_deterministic_run(self):
        a, b = run_linksim(small()), run_linksim(small())
        assert np.array_equal(a.x_hat, b.x_hat)
        assert np.array_equal(a.mean_abs_error, b.mean_abs_error)

    def test_sic_wave_starts_at_boundary(self):
        cfg = LinkSimConfig(200, 16, 200, 2, 200, 0.5, seed=3, iterations=8)
        res = run_linksim(cfg, Mode.SIC, 1.05)
        counts = [d.size for d in res.decoded]
        assert all(b >= a for a, b in zip(counts, counts[1:]))
        assert counts[-1] > counts[2] > 0
        first = next(d for d in res.decoded if d.size)
        all_det = res.pk_start[res.pk_start + cfg.w <= cfg.slots]
        assert res.pk_start[first].mean() < all_det.mean()

    def test_result_dict(self):
        d = run_linksim(small()).to_dict()
        assert d["config"]["n_dims"] == 64
        assert len(d["x_hat"]) == 4 and len(d["x_hat"][0]) == 9


class TestDensityEvolutionLink:
    def test_reference_shape(self):
        cfg = small(iterations=4)
        assert de_reference(cfg).shape == (5, cfg.slots)

    def test_single_trial_close(self):
        cfg = LinkSimConfig(200, 16, 200, 2, 200, 0.5, seed=0, iterations=5)
        cmp = compare_with_de([cfg])
        assert np.max(cmp["rel_err"][1:]) < 0.15
        assert np.all(np.isnan(cmp["stderr"]))
